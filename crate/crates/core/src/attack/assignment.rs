use crate::ctdg::NodeId;
use crate::error::{Error, Result};

/// Dense rectangular cost matrix over pool nodes with a forbidden mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: Vec<NodeId>,
    pub cols: Vec<NodeId>,
    cost: Vec<f64>,
    forbidden: Vec<bool>,
}

impl CostMatrix {
    /// Row-major costs; pairs with equal node ids are forbidden.
    pub fn new(rows: Vec<NodeId>, cols: Vec<NodeId>, cost: Vec<f64>) -> Result<Self> {
        if cost.len() != rows.len() * cols.len() {
            return Err(Error::Dimension {
                expected: rows.len() * cols.len(),
                actual: cost.len(),
            });
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("cost matrix has non-finite entries"));
        }
        let forbidden = rows
            .iter()
            .flat_map(|r| cols.iter().map(move |c| r == c))
            .collect();
        Ok(Self {
            rows,
            cols,
            cost,
            forbidden,
        })
    }

    /// Matrix over anonymous indices `0..r` x `0..c` with nothing forbidden.
    pub fn from_rows(costs: &[Vec<f64>]) -> Result<Self> {
        let r = costs.len();
        let c = costs.first().map_or(0, Vec::len);
        if costs.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged cost matrix"));
        }
        let flat: Vec<f64> = costs.iter().flatten().copied().collect();
        let mut m = Self::new((0..r).collect(), (0..c).collect(), flat)?;
        m.forbidden.iter_mut().for_each(|f| *f = false);
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.cols.len() + j]
    }

    pub fn is_forbidden(&self, i: usize, j: usize) -> bool {
        self.forbidden[i * self.cols.len() + j]
    }

    pub fn forbid(&mut self, i: usize, j: usize) {
        let n = self.cols.len();
        self.forbidden[i * n + j] = true;
    }

    /// Same rows and columns, as for a unipartite pool.
    pub fn is_square_pool(&self) -> bool {
        self.rows == self.cols
    }

    pub fn feasible_pairs(&self) -> usize {
        self.forbidden.iter().filter(|f| !**f).count()
    }

    /// Scales every cost by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut m = self.clone();
        m.cost.iter_mut().for_each(|c| *c *= k);
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row index, column index)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

/// Minimum-cost assignment of every row of an `n x m` matrix (`n <= m`) to a
/// distinct column, by shortest augmenting paths with potentials.
/// Returns the column of each row.
fn shortest_augmenting_path(cost: &[f64], n: usize, m: usize) -> Vec<usize> {
    debug_assert!(n <= m);
    let a = |i: usize, j: usize| cost[(i - 1) * m + (j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Solves with forbidden entries replaced by a sentinel that exceeds the
/// cost of any assignment using fewer forbidden entries. Costs are shifted
/// so the cheapest feasible entry is zero (every full assignment has the
/// same number of entries, so the optimum is unchanged).
fn solve_with_sentinel(c: &CostMatrix) -> Vec<(usize, usize)> {
    let (r, m) = (c.n_rows(), c.n_cols());
    if r == 0 || m == 0 {
        return Vec::new();
    }
    let transpose = r > m;
    let (n, w) = if transpose { (m, r) } else { (r, m) };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..r {
        for j in 0..m {
            if !c.is_forbidden(i, j) {
                lo = lo.min(c.get(i, j));
                hi = hi.max(c.get(i, j));
            }
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 0.0;
    }
    let range = hi - lo;
    let sentinel = (n as f64 + 1.0) * range + 1.0;
    let mut flat = vec![0.0; n * w];
    for i in 0..n {
        for j in 0..w {
            let (ri, cj) = if transpose { (j, i) } else { (i, j) };
            flat[i * w + j] = if c.is_forbidden(ri, cj) {
                sentinel
            } else {
                c.get(ri, cj) - lo
            };
        }
    }
    let sol = shortest_augmenting_path(&flat, n, w);
    let mut pairs: Vec<(usize, usize)> = sol
        .into_iter()
        .enumerate()
        .map(|(i, j)| if transpose { (j, i) } else { (i, j) })
        .collect();
    pairs.sort_unstable();
    pairs
}

fn total(c: &CostMatrix, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| c.get(i, j)).sum()
}

/// Minimum-cost matching of size `min(rows, cols)` avoiding forbidden pairs.
pub fn solve_assignment(c: &CostMatrix) -> Result<Assignment> {
    if c.n_rows() == 0 || c.n_cols() == 0 {
        return Err(Error::invalid("assignment needs at least one row and one column"));
    }
    let pairs = solve_with_sentinel(c);
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| c.is_forbidden(i, j)) {
        return Err(Error::Infeasible(format!(
            "no full matching avoids forbidden pairs (row {i}, column {j} forced)"
        )));
    }
    Ok(Assignment {
        total: total(c, &pairs),
        pairs,
    })
}

/// Largest feasible matching, cheapest among those; never fails.
pub fn solve_assignment_partial(c: &CostMatrix) -> Assignment {
    let pairs: Vec<_> = solve_with_sentinel(c)
        .into_iter()
        .filter(|&(i, j)| !c.is_forbidden(i, j))
        .collect();
    Assignment {
        total: total(c, &pairs),
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap();
        let a = solve_assignment(&c).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total, 2.0);
    }

    #[test]
    fn tall_matrix_is_transposed() {
        let c = CostMatrix::from_rows(&[vec![5.0], vec![1.0], vec![3.0]]).unwrap();
        let a = solve_assignment(&c).unwrap();
        assert_eq!(a.pairs, vec![(1, 0)]);
    }

    #[test]
    fn self_pairs_are_avoided() {
        // diagonal forbidden; cheapest entries sit on it
        let c = CostMatrix::new(vec![0, 1, 2], vec![0, 1, 2], vec![0.0, 0.9, 0.8, 0.7, 0.0, 0.95, 0.6, 0.5, 0.0]).unwrap();
        let a = solve_assignment(&c).unwrap();
        assert!(a.pairs.iter().all(|&(i, j)| i != j));
        assert!((a.total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_partial() {
        let c = CostMatrix::new(vec![0], vec![0], vec![0.3]).unwrap();
        assert!(matches!(solve_assignment(&c), Err(Error::Infeasible(_))));
        assert!(solve_assignment_partial(&c).pairs.is_empty());
    }

    #[test]
    fn large_costs_do_not_leak_into_forbidden_pairs() {
        // a fixed 2.0 sentinel would be cheaper than these feasible costs
        let mut c = CostMatrix::from_rows(&[vec![0.0, 10.0, 10.0], vec![10.0, 0.0, 10.0], vec![10.0, 10.0, 0.0]]).unwrap();
        for i in 0..3 {
            c.forbid(i, i);
        }
        let a = solve_assignment(&c).unwrap();
        assert_eq!(a.total, 30.0);
    }
}
