use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ctdg::DynamicGraph;
use crate::error::{Error, Result};

/// One filtering decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub epoch: usize,
    pub edge_index: usize,
    pub score: f64,
    pub kept: bool,
}

/// Every filtering decision of a training run, in the order it was made.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterLedger {
    pub rows: Vec<LedgerRow>,
}

impl FilterLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: LedgerRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last_epoch(&self) -> Option<usize> {
        self.rows.iter().map(|r| r.epoch).max()
    }

    pub fn epoch(&self, epoch: usize) -> impl Iterator<Item = &LedgerRow> {
        self.rows.iter().filter(move |r| r.epoch == epoch)
    }

    /// Indices of edges dropped in `epoch`.
    pub fn dropped(&self, epoch: usize) -> Vec<usize> {
        self.epoch(epoch).filter(|r| !r.kept).map(|r| r.edge_index).collect()
    }

    pub fn kept(&self, epoch: usize) -> Vec<usize> {
        self.epoch(epoch).filter(|r| r.kept).map(|r| r.edge_index).collect()
    }

    /// Writes `epoch,edge_index,score,kept`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<LedgerRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// `(pre-filter score, is_adversarial)` of every edge scored in the final
/// recorded epoch, ready for AUROC.
pub fn classify_adversarial(ledger: &FilterLedger, corrupted: &DynamicGraph) -> Result<Vec<(f64, bool)>> {
    let last = ledger.last_epoch().ok_or(Error::Empty)?;
    let edges = corrupted.interactions();
    ledger
        .epoch(last)
        .map(|r| {
            edges
                .get(r.edge_index)
                .map(|e| (r.score, e.is_adversarial))
                .ok_or_else(|| Error::invalid(format!("ledger edge {} outside the graph", r.edge_index)))
        })
        .collect()
}
