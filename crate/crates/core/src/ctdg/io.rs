//! CSV ingestion and emission for interaction logs and perturbation manifests.
//!
//! Every CSV may carry a key-value sidecar at `<path>.meta` recording the
//! bipartite flag, the column mapping, and (for emitted files) the node
//! universe, so a reload reproduces the graph exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DynamicGraph, NodeId, TemporalInteraction};
use crate::error::{Error, Result};

/// Which columns hold the endpoints, timestamp and features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub u: usize,
    pub v: usize,
    pub t: usize,
    /// First feature column; every column from here to the end is a feature.
    /// `None` means "auto": features start after the last mapped column when present.
    pub feature_start: Option<usize>,
    pub no_features: bool,
    pub bipartite: bool,
    /// Shift destination ids past the largest source id (for logs where both
    /// sides are numbered from zero).
    pub offset_destinations: bool,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            u: 0,
            v: 1,
            t: 2,
            feature_start: None,
            no_features: false,
            bipartite: false,
            offset_destinations: false,
        }
    }
}

impl ColumnMapping {
    /// `user_id,item_id,timestamp,state_label,features...`
    pub fn jodie() -> Self {
        Self {
            u: 0,
            v: 1,
            t: 2,
            feature_start: Some(4),
            no_features: false,
            bipartite: true,
            offset_destinations: true,
        }
    }

    fn feature_start(&self) -> Option<usize> {
        if self.no_features {
            None
        } else {
            Some(
                self.feature_start
                    .unwrap_or_else(|| self.u.max(self.v).max(self.t) + 1),
            )
        }
    }
}

/// Parsed `<path>.meta` sidecar.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphMeta {
    pub mapping: Option<ColumnMapping>,
    pub num_nodes: Option<usize>,
    pub source_ids: Option<Vec<NodeId>>,
    pub destination_ids: Option<Vec<NodeId>>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn parse_bool(v: &str, line: usize) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Parse {
            line,
            message: format!("expected boolean, got `{other}`"),
        }),
    }
}

fn parse_usize(v: &str, line: usize) -> Result<usize> {
    v.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("expected integer, got `{v}`"),
    })
}

fn parse_ids(v: &str, line: usize) -> Result<Vec<NodeId>> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b) = (parse_usize(a, line)?, parse_usize(b, line)?);
            out.extend(a..=b);
        } else {
            out.push(parse_usize(part, line)?);
        }
    }
    Ok(out)
}

/// Compresses sorted ids into `a-b` runs.
fn format_ids(ids: &[NodeId]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < ids.len() {
        let mut j = i;
        while j + 1 < ids.len() && ids[j + 1] == ids[j] + 1 {
            j += 1;
        }
        if !out.is_empty() {
            out.push(',');
        }
        if j > i {
            let _ = write!(out, "{}-{}", ids[i], ids[j]);
        } else {
            let _ = write!(out, "{}", ids[i]);
        }
        i = j + 1;
    }
    out
}

pub fn read_graph_meta(csv_path: &Path) -> Result<Option<GraphMeta>> {
    let path = meta_path(csv_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut meta = GraphMeta::default();
    let mut mapping = ColumnMapping::default();
    let mut saw_mapping = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key=value in {}", path.display()),
        })?;
        let n = i + 1;
        saw_mapping = true;
        match k.trim() {
            "bipartite" => mapping.bipartite = parse_bool(v, n)?,
            "u_column" => mapping.u = parse_usize(v, n)?,
            "v_column" => mapping.v = parse_usize(v, n)?,
            "t_column" => mapping.t = parse_usize(v, n)?,
            "feature_start" => {
                if v.trim() == "none" {
                    mapping.no_features = true;
                } else {
                    mapping.feature_start = Some(parse_usize(v, n)?);
                }
            }
            "offset_destinations" => mapping.offset_destinations = parse_bool(v, n)?,
            "num_nodes" => meta.num_nodes = Some(parse_usize(v, n)?),
            "source_ids" => meta.source_ids = Some(parse_ids(v, n)?),
            "destination_ids" => meta.destination_ids = Some(parse_ids(v, n)?),
            other => {
                return Err(Error::Parse {
                    line: n,
                    message: format!("unknown key `{other}` in {}", path.display()),
                })
            }
        }
    }
    if saw_mapping {
        meta.mapping = Some(mapping);
    }
    Ok(Some(meta))
}

fn write_graph_meta(csv_path: &Path, g: &DynamicGraph, feature_start: Option<usize>) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "bipartite={}", g.bipartite());
    let _ = writeln!(s, "u_column=0\nv_column=1\nt_column=2");
    match feature_start {
        Some(c) => {
            let _ = writeln!(s, "feature_start={c}");
        }
        None => {
            let _ = writeln!(s, "feature_start=none");
        }
    }
    let _ = writeln!(s, "offset_destinations=false");
    let _ = writeln!(s, "num_nodes={}", g.num_nodes());
    if g.bipartite() {
        let _ = writeln!(s, "source_ids={}", format_ids(g.source_ids()));
        let _ = writeln!(s, "destination_ids={}", format_ids(g.destination_ids()));
    }
    let path = meta_path(csv_path);
    fs::write(&path, s).map_err(|e| Error::io(&path, e))
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric {what} `{field}`"),
    })
}

fn parse_node(field: &str, line: usize) -> Result<NodeId> {
    let x = parse_f64(field, line, "node id")?;
    if x < 0.0 || x.fract() != 0.0 {
        return Err(Error::Parse {
            line,
            message: format!("node id must be a non-negative integer, got `{field}`"),
        });
    }
    Ok(x as NodeId)
}

struct RawRows {
    rows: Vec<csv::StringRecord>,
    first_line: usize,
}

fn read_rows(path: &Path, first_col: usize) -> Result<RawRows> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?);
    }
    // optional header: first field of the first row is not numeric
    let mut first_line = 1;
    if let Some(first) = rows.first() {
        let header = first
            .get(first_col)
            .map(|f| f.parse::<f64>().is_err())
            .unwrap_or(true);
        if header {
            rows.remove(0);
            first_line = 2;
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    Ok(RawRows { rows, first_line })
}

/// Loads an interaction CSV. When `mapping` is `None` the `<path>.meta`
/// sidecar is consulted, falling back to `u,v,t[,features...]`.
pub fn load_interactions(path: &Path, mapping: Option<&ColumnMapping>) -> Result<DynamicGraph> {
    let meta = read_graph_meta(path)?;
    let mapping = match (mapping, meta.as_ref().and_then(|m| m.mapping.as_ref())) {
        (Some(m), _) => m.clone(),
        (None, Some(m)) => m.clone(),
        (None, None) => ColumnMapping::default(),
    };
    let raw = read_rows(path, mapping.u)?;
    let fstart = mapping.feature_start();
    let mut out = Vec::with_capacity(raw.rows.len());
    let mut width = None;
    for (i, rec) in raw.rows.iter().enumerate() {
        let line = raw.first_line + i;
        let need = mapping.u.max(mapping.v).max(mapping.t) + 1;
        if rec.len() < need {
            return Err(Error::Parse {
                line,
                message: format!("expected at least {need} columns, got {}", rec.len()),
            });
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("ragged row: {} columns, expected {w}", rec.len()),
                })
            }
            _ => {}
        }
        let u = parse_node(&rec[mapping.u], line)?;
        let v = parse_node(&rec[mapping.v], line)?;
        let t = parse_f64(&rec[mapping.t], line, "timestamp")?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("negative or non-finite timestamp `{}`", &rec[mapping.t]),
            });
        }
        let mut e = TemporalInteraction::new(u, v, t);
        if let Some(fs) = fstart {
            if rec.len() > fs {
                let feats = rec
                    .iter()
                    .skip(fs)
                    .map(|f| parse_f64(f, line, "feature"))
                    .collect::<Result<Vec<_>>>()?;
                e.features = Some(feats);
            }
        }
        out.push(e);
    }
    if mapping.offset_destinations {
        let shift = 1 + out.iter().map(|e| e.u).max().unwrap_or(0);
        for e in &mut out {
            e.v += shift;
        }
    }
    match meta {
        Some(GraphMeta {
            num_nodes: Some(n),
            source_ids,
            destination_ids,
            ..
        }) => {
            let (s, d) = if mapping.bipartite {
                (
                    source_ids.unwrap_or_else(|| out.iter().map(|e| e.u).collect()),
                    destination_ids.unwrap_or_else(|| out.iter().map(|e| e.v).collect()),
                )
            } else {
                ((0..n).collect(), (0..n).collect())
            };
            DynamicGraph::from_parts(out, n, mapping.bipartite, s, d)
        }
        _ => DynamicGraph::new(out, mapping.bipartite),
    }
}

fn header(g: &DynamicGraph, leading: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = leading.iter().map(|s| s.to_string()).collect();
    for j in 0..g.feature_dim().unwrap_or(0) {
        h.push(format!("f{j}"));
    }
    h
}

/// Writes `u,v,t[,f0,...]` plus the sidecar.
pub fn save_interactions(g: &DynamicGraph, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(g, &["u", "v", "t"]))?;
    for e in g.interactions() {
        let mut rec = vec![e.u.to_string(), e.v.to_string(), e.t.to_string()];
        if let Some(f) = &e.features {
            rec.extend(f.iter().map(f64::to_string));
        }
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_graph_meta(path, g, g.feature_dim().map(|_| 3))
}

/// Writes the corrupted graph as `u,v,t,is_adversarial,batch_id[,f0,...]`.
/// `batch_ids` aligns with `g.interactions()`; genuine edges carry `-1`.
pub fn save_perturbation_manifest(
    g: &DynamicGraph,
    batch_ids: &[Option<usize>],
    path: &Path,
) -> Result<()> {
    if batch_ids.len() != g.len() {
        return Err(Error::Dimension {
            expected: g.len(),
            actual: batch_ids.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(g, &["u", "v", "t", "is_adversarial", "batch_id"]))?;
    for (e, b) in g.interactions().iter().zip(batch_ids) {
        let mut rec = vec![
            e.u.to_string(),
            e.v.to_string(),
            e.t.to_string(),
            u8::from(e.is_adversarial).to_string(),
            b.map_or_else(|| "-1".to_string(), |b| b.to_string()),
        ];
        if let Some(f) = &e.features {
            rec.extend(f.iter().map(f64::to_string));
        }
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_graph_meta(path, g, g.feature_dim().map(|_| 5))
}

/// Reloads a manifest written by [`save_perturbation_manifest`].
pub fn load_perturbation_manifest(path: &Path) -> Result<(DynamicGraph, Vec<Option<usize>>)> {
    let meta = read_graph_meta(path)?.ok_or_else(|| {
        Error::invalid(format!("missing sidecar {}", meta_path(path).display()))
    })?;
    let mapping = meta.mapping.clone().unwrap_or_default();
    let raw = read_rows(path, 0)?;
    let mut rows: Vec<(TemporalInteraction, Option<usize>)> = Vec::with_capacity(raw.rows.len());
    for (i, rec) in raw.rows.iter().enumerate() {
        let line = raw.first_line + i;
        if rec.len() < 5 {
            return Err(Error::Parse {
                line,
                message: "manifest rows need u,v,t,is_adversarial,batch_id".into(),
            });
        }
        let mut e = TemporalInteraction::new(
            parse_node(&rec[0], line)?,
            parse_node(&rec[1], line)?,
            parse_f64(&rec[2], line, "timestamp")?,
        );
        e.is_adversarial = parse_bool(&rec[3], line)?;
        let b: i64 = rec[4].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad batch id `{}`", &rec[4]),
        })?;
        if rec.len() > 5 {
            e.features = Some(
                rec.iter()
                    .skip(5)
                    .map(|f| parse_f64(f, line, "feature"))
                    .collect::<Result<_>>()?,
            );
        }
        rows.push((e, usize::try_from(b).ok()));
    }
    // rows were written in chronological order; keep it
    let batch_ids: Vec<_> = rows.iter().map(|(_, b)| *b).collect();
    let edges: Vec<_> = rows.into_iter().map(|(e, _)| e).collect();
    let n = meta
        .num_nodes
        .unwrap_or_else(|| 1 + edges.iter().map(|e| e.u.max(e.v)).max().unwrap_or(0));
    let (s, d) = if mapping.bipartite {
        (
            meta.source_ids
                .unwrap_or_else(|| edges.iter().map(|e| e.u).collect()),
            meta.destination_ids
                .unwrap_or_else(|| edges.iter().map(|e| e.v).collect()),
        )
    } else {
        ((0..n).collect(), (0..n).collect())
    };
    let g = DynamicGraph::from_parts(edges, n, mapping.bipartite, s, d)?;
    Ok((g, batch_ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_three_rows_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "g.csv", "0,1,1.0\n0,2,2.0\n1,2,3.0\n");
        let g = load_interactions(&p, None).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.num_nodes(), 3);
        assert!(!g.bipartite());
        assert!(g.interactions().iter().all(|e| !e.is_adversarial));
    }

    #[test]
    fn header_is_optional() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "g.csv", "u,v,t\n0,1,1.0\n1,2,3.0\n");
        assert_eq!(load_interactions(&p, None).unwrap().len(), 2);
    }

    #[test]
    fn error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(dir.path(), "e.csv", "");
        assert!(matches!(load_interactions(&empty, None), Err(Error::Empty)));
        let missing = dir.path().join("nope.csv");
        assert!(matches!(load_interactions(&missing, None), Err(Error::Io { .. })));
        let bad = write(dir.path(), "b.csv", "0,1,1.0\n0,x,2.0\n");
        assert!(matches!(load_interactions(&bad, None), Err(Error::Parse { line: 2, .. })));
        let neg = write(dir.path(), "n.csv", "0,1,-1.0\n");
        assert!(matches!(load_interactions(&neg, None), Err(Error::Parse { .. })));
        let ragged = write(dir.path(), "r.csv", "0,1,1.0,0.5,0.5\n0,2,2.0,0.1\n");
        assert!(matches!(load_interactions(&ragged, None), Err(Error::Parse { .. })));
    }

    #[test]
    fn jodie_layout_offsets_items() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "w.csv",
            "user_id,item_id,timestamp,state_label,f\n0,0,0.0,0,0.5\n1,0,1.0,0,0.25\n0,1,2.0,0,0.0\n",
        );
        let g = load_interactions(&p, Some(&ColumnMapping::jodie())).unwrap();
        assert!(g.bipartite());
        assert_eq!(g.num_nodes(), 4);
        assert_eq!(g.destination_ids(), &[2, 3]);
        assert_eq!(g.feature_dim(), Some(1));
    }

    #[test]
    fn id_ranges_compress() {
        assert_eq!(format_ids(&[0, 1, 2, 5, 7, 8]), "0-2,5,7-8");
        assert_eq!(parse_ids("0-2,5,7-8", 1).unwrap(), vec![0, 1, 2, 5, 7, 8]);
    }

    #[test]
    fn manifest_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = TemporalInteraction::new(0, 3, 0.1 + 0.2);
        a.features = Some(vec![1.0 / 3.0]);
        let mut b = TemporalInteraction::new(1, 4, 7.25);
        b.features = Some(vec![-2.5e-300]);
        b.is_adversarial = true;
        let g = DynamicGraph::from_parts(vec![a, b], 6, true, vec![0, 1, 2], vec![3, 4, 5]).unwrap();
        let p = dir.path().join("m.csv");
        save_perturbation_manifest(&g, &[None, Some(4)], &p).unwrap();
        let (back, ids) = load_perturbation_manifest(&p).unwrap();
        assert_eq!(back, g);
        assert_eq!(ids, vec![None, Some(4)]);
    }
}
