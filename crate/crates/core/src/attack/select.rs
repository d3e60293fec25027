use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::ctdg::{NodeId, NodePool};
use crate::error::{Error, Result};
use crate::tgnn::{Forward, PairScorer, TemporalState, TgnnModel};

use super::assignment::{solve_assignment_partial, CostMatrix};

/// Edge scores between pool nodes at `t_ref`. Unipartite pools are scored in
/// both orientations and averaged so the matrix is symmetric.
pub fn score_pool(model: &TgnnModel, state: &TemporalState, pool: &NodePool, t_ref: f64) -> Result<CostMatrix> {
    let (rows, cols) = pool.rows_cols();
    let too_small = match pool {
        NodePool::Unipartite(n) => n.len() < 2,
        NodePool::Bipartite { .. } => rows.is_empty() || cols.is_empty() || pool.node_count() < 2,
    };
    if too_small {
        return Err(Error::invalid("pool has fewer than two nodes"));
    }
    let nodes: BTreeSet<NodeId> = rows.iter().chain(cols).copied().collect();
    let mut f = Forward::inference(model, state);
    let scorer = PairScorer::new(model);
    let mut halves = BTreeMap::new();
    for &n in &nodes {
        let h = f.embed(n, t_ref)?;
        halves.insert(n, scorer.halves(f.tape.value(h)));
    }
    let unipartite = matches!(pool, NodePool::Unipartite(_));
    let mut cost = vec![0.0; rows.len() * cols.len()];
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            if r == c {
                continue;
            }
            let (lr, _) = &halves[r];
            let (_, rc) = &halves[c];
            let s = scorer.score(lr, rc);
            cost[i * cols.len() + j] = if unipartite {
                let (lc, _) = &halves[c];
                let (_, rr) = &halves[r];
                (s + scorer.score(lc, rr)) / 2.0
            } else {
                s
            };
        }
    }
    CostMatrix::new(rows.to_vec(), cols.to_vec(), cost)
}

fn cmp_pairs(c: &CostMatrix, a: (usize, usize), b: (usize, usize)) -> Ordering {
    c.get(a.0, a.1)
        .total_cmp(&c.get(b.0, b.1))
        .then((c.rows[a.0], c.cols[a.1]).cmp(&(c.rows[b.0], c.cols[b.1])))
}

/// Feasible pairs; for a square pool each unordered pair once as `(i, j)`, `i < j`.
fn candidate_pairs(c: &CostMatrix) -> Vec<(usize, usize)> {
    let square = c.is_square_pool();
    let mut out = Vec::new();
    for i in 0..c.n_rows() {
        for j in 0..c.n_cols() {
            if c.is_forbidden(i, j) || (square && (j <= i || c.is_forbidden(j, i))) {
                continue;
            }
            out.push((i, j));
        }
    }
    out
}

pub(crate) fn feasible_count(c: &CostMatrix) -> usize {
    candidate_pairs(c).len()
}

/// Cheapest pair in the window pool at `t`; ties go to the smallest `(u, v)`.
pub fn naive_select(model: &TgnnModel, state: &TemporalState, pool: &NodePool, t: f64) -> Result<(NodeId, NodeId)> {
    let c = score_pool(model, state, pool, t)?;
    naive_from_costs(&c)
}

pub(crate) fn naive_from_costs(c: &CostMatrix) -> Result<(NodeId, NodeId)> {
    candidate_pairs(c)
        .into_iter()
        .min_by(|&a, &b| cmp_pairs(c, a, b))
        .map(|(i, j)| (c.rows[i], c.cols[j]))
        .ok_or_else(|| Error::invalid("empty pool"))
}

/// The `k` cheapest feasible pairs, as `(row, column)` indices.
pub fn low_k_select(c: &CostMatrix, k: usize) -> Result<Vec<(usize, usize)>> {
    let mut pairs = candidate_pairs(c);
    if k > pairs.len() {
        return Err(Error::invalid(format!("k = {k} exceeds {} feasible pairs", pairs.len())));
    }
    pairs.sort_by(|&a, &b| cmp_pairs(c, a, b));
    pairs.truncate(k);
    Ok(pairs)
}

/// Result of repeated assignment rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSelection {
    /// Selected `(row, column)` index pairs, cheapest first.
    pub pairs: Vec<(usize, usize)>,
    /// Node-disjoint pairs found by each round.
    pub rounds: Vec<Vec<(usize, usize)>>,
    pub e_max: usize,
    /// `ceil(k / e_max)`: rounds requested and the per-node multiplicity bound.
    pub n: usize,
    /// Fewer than `k` pairs could be selected.
    pub exhausted: bool,
}

/// Maximum-cardinality, then minimum-cost, non-adjacent subset of a path of
/// edges where consecutive edges share a node.
fn path_matching(costs: &[f64]) -> (usize, f64, Vec<usize>) {
    let l = costs.len();
    // best[i]: (count, cost, chosen) over the first i edges
    let mut best: Vec<(usize, f64, Vec<usize>)> = vec![(0, 0.0, Vec::new()); l + 1];
    for i in 1..=l {
        let skip = best[i - 1].clone();
        let base = if i >= 2 { &best[i - 2] } else { &best[0] };
        let mut take = (base.0 + 1, base.1 + costs[i - 1], base.2.clone());
        take.2.push(i - 1);
        best[i] = if take.0 > skip.0 || (take.0 == skip.0 && take.1 < skip.1) {
            take
        } else {
            skip
        };
    }
    best.pop().unwrap_or((0, 0.0, Vec::new()))
}

/// Node-disjoint edge set from the cycle cover of an assignment over a
/// symmetric square pool.
fn unipartite_round(c: &CostMatrix) -> Vec<(usize, usize)> {
    let a = solve_assignment_partial(c);
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &(i, j) in &a.pairs {
        edges.insert((i.min(j), i.max(j)));
    }
    let n = c.n_rows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in &edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let cost = |i: usize, j: usize| c.get(i.min(j), i.max(j));
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let walk = |start: usize, seen: &mut Vec<bool>| -> (Vec<usize>, bool) {
        let mut nodes = vec![start];
        seen[start] = true;
        let mut prev = usize::MAX;
        let mut cur = start;
        loop {
            let next = adj[cur].iter().copied().find(|&x| x != prev && !seen[x]);
            match next {
                Some(x) => {
                    seen[x] = true;
                    nodes.push(x);
                    prev = cur;
                    cur = x;
                }
                None => {
                    let closes = nodes.len() > 2 && adj[cur].contains(&start);
                    return (nodes, closes);
                }
            }
        }
    };
    let mut components = Vec::new();
    for s in 0..n {
        if !seen[s] && adj[s].len() == 1 {
            components.push(walk(s, &mut seen));
        }
    }
    for s in 0..n {
        if !seen[s] && !adj[s].is_empty() {
            components.push(walk(s, &mut seen));
        }
    }
    for (nodes, cycle) in components {
        let mut path_edges: Vec<(usize, usize)> = nodes.windows(2).map(|w| (w[0], w[1])).collect();
        if cycle {
            path_edges.push((nodes[nodes.len() - 1], nodes[0]));
            let l = path_edges.len();
            let mut best: Option<(usize, f64, Vec<(usize, usize)>)> = None;
            for drop in 0..l {
                let rotated: Vec<(usize, usize)> = (1..l).map(|k| path_edges[(drop + k) % l]).collect();
                let costs: Vec<f64> = rotated.iter().map(|&(i, j)| cost(i, j)).collect();
                let (cnt, tot, idx) = path_matching(&costs);
                let better = match &best {
                    None => true,
                    Some((bc, bt, _)) => cnt > *bc || (cnt == *bc && tot < *bt),
                };
                if better {
                    best = Some((cnt, tot, idx.into_iter().map(|k| rotated[k]).collect()));
                }
            }
            if let Some((_, _, chosen)) = best {
                out.extend(chosen);
            }
        } else {
            let costs: Vec<f64> = path_edges.iter().map(|&(i, j)| cost(i, j)).collect();
            let (_, _, idx) = path_matching(&costs);
            out.extend(idx.into_iter().map(|k| path_edges[k]));
        }
    }
    // odd cycles strand one node each; pair stranded nodes cheapest first
    let mut free = vec![true; n];
    for &(i, j) in &out {
        free[i] = false;
        free[j] = false;
    }
    let mut extra: Vec<(usize, usize)> = Vec::new();
    for i in (0..n).filter(|&i| free[i]) {
        for j in (i + 1..n).filter(|&j| free[j]) {
            if !c.is_forbidden(i, j) && !c.is_forbidden(j, i) {
                extra.push((i, j));
            }
        }
    }
    extra.sort_by(|&a, &b| cost(a.0, a.1).total_cmp(&cost(b.0, b.1)).then(a.cmp(&b)));
    for (i, j) in extra {
        if free[i] && free[j] {
            free[i] = false;
            free[j] = false;
            out.push((i, j));
        }
    }
    let mut out: Vec<(usize, usize)> = out.into_iter().map(|(i, j)| (i.min(j), i.max(j))).collect();
    out.sort_unstable();
    out
}

/// `N = ceil(k / E_max)` assignment rounds, each forbidding the pairs chosen
/// before; the `k` cheapest pooled pairs are returned. Every round is
/// node-disjoint, so no node appears in more than `N` selected pairs.
pub fn hungarian_pool(c: &CostMatrix, k: usize) -> Result<PoolSelection> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let square = c.is_square_pool();
    let e_max = if square {
        c.n_rows() / 2
    } else {
        c.n_rows().min(c.n_cols())
    };
    if e_max == 0 {
        return Err(Error::invalid("pool admits no edge"));
    }
    let n = k.div_ceil(e_max);
    let mut work = c.clone();
    let mut rounds = Vec::with_capacity(n);
    let mut exhausted = false;
    for _ in 0..n {
        let sel = if square {
            unipartite_round(&work)
        } else {
            solve_assignment_partial(&work).pairs
        };
        if sel.is_empty() {
            exhausted = true;
            break;
        }
        for &(i, j) in &sel {
            work.forbid(i, j);
            if square {
                work.forbid(j, i);
            }
        }
        rounds.push(sel);
    }
    let mut pairs: Vec<(usize, usize)> = rounds.iter().flatten().copied().collect();
    pairs.sort_by(|&a, &b| cmp_pairs(c, a, b));
    if pairs.len() < k {
        exhausted = true;
        log::warn!("hungarian pool exhausted: {} of {k} pairs", pairs.len());
    }
    pairs.truncate(k);
    Ok(PoolSelection {
        pairs,
        rounds,
        e_max,
        n,
        exhausted,
    })
}
