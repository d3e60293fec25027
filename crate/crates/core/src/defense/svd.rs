use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::ctdg::{NodeId, TemporalInteraction};
use crate::error::{Error, Result};

/// Loss weights from a rank-`rank` reconstruction of the binary train
/// adjacency, one per edge in `edges`, clamped to `[0, 1]`.
///
/// Bipartite graphs are decomposed through their source-by-destination
/// block; unipartite graphs through the symmetric adjacency. Only nodes that
/// appear in `edges` get a row or column.
pub fn tgnsvd_weights(edges: &[TemporalInteraction], rank: usize, bipartite: bool) -> Result<Vec<f64>> {
    if edges.is_empty() {
        return Err(Error::Decomposition("no edges to decompose".into()));
    }
    if rank == 0 {
        return Err(Error::invalid("svd rank must be at least 1"));
    }
    let index = |nodes: &mut BTreeMap<NodeId, usize>, u: NodeId| {
        let n = nodes.len();
        *nodes.entry(u).or_insert(n)
    };
    let mut rows = BTreeMap::new();
    let mut cols = BTreeMap::new();
    let mut coords = Vec::with_capacity(edges.len());
    for e in edges {
        let (i, j) = if bipartite {
            (index(&mut rows, e.u), index(&mut cols, e.v))
        } else {
            (index(&mut rows, e.u), index(&mut rows, e.v))
        };
        coords.push((i, j));
    }
    let (nr, nc) = if bipartite {
        (rows.len(), cols.len())
    } else {
        (rows.len(), rows.len())
    };
    let mut a = DMatrix::<f64>::zeros(nr, nc);
    for &(i, j) in &coords {
        a[(i, j)] = 1.0;
        if !bipartite {
            a[(j, i)] = 1.0;
        }
    }
    let svd = a.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Decomposition("singular vectors unavailable".into())),
    };
    if svd.singular_values.iter().any(|s| !s.is_finite()) {
        return Err(Error::Decomposition("non-finite singular values".into()));
    }
    // nalgebra does not promise sorted singular values
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    order.truncate(rank);
    let approx = |i: usize, j: usize| -> f64 {
        order
            .iter()
            .map(|&k| u[(i, k)] * svd.singular_values[k] * v_t[(k, j)])
            .sum()
    };
    Ok(coords.iter().map(|&(i, j)| approx(i, j).clamp(0.0, 1.0)).collect())
}
