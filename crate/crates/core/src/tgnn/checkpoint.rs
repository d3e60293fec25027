use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Param;
use crate::error::{Error, Result};

use super::train::TrainConfig;
use super::{TgnnConfig, TgnnModel};

const FORMAT: &str = "ctdg-poison-checkpoint/1";

/// Serialized model: every parameter under its name, the architecture block,
/// and the seeds needed to resume identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: TgnnConfig,
    pub train: Option<TrainConfig>,
    pub params: Vec<Param>,
}

impl Checkpoint {
    pub fn from_model(model: &TgnnModel, train: Option<&TrainConfig>) -> Self {
        Self {
            format: FORMAT.to_string(),
            config: model.config().clone(),
            train: train.cloned(),
            params: model.params().iter().cloned().collect(),
        }
    }

    /// Rebuilds the model, checking every expected tensor is present with
    /// the right shape.
    pub fn into_model(self) -> Result<TgnnModel> {
        if self.format != FORMAT {
            return Err(Error::invalid(format!("unsupported checkpoint format {:?}", self.format)));
        }
        let mut model = TgnnModel::new(self.config)?;
        if self.params.len() != model.params().len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} tensors, model expects {}",
                self.params.len(),
                model.params().len()
            )));
        }
        for p in self.params {
            let id = model
                .params()
                .find(&p.name)
                .ok_or_else(|| Error::invalid(format!("unknown tensor {:?}", p.name)))?;
            let dst = model.params_mut().get_mut(id);
            if (dst.rows, dst.cols) != (p.rows, p.cols) || p.data.len() != p.rows * p.cols {
                return Err(Error::invalid(format!("tensor {:?} has the wrong shape", p.name)));
            }
            dst.data = p.data;
        }
        Ok(model)
    }
}

pub fn save_checkpoint(model: &TgnnModel, train: Option<&TrainConfig>, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&Checkpoint::from_model(model, train))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(TgnnModel, Option<TrainConfig>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    let train = ck.train.clone();
    Ok((ck.into_model()?, train))
}
