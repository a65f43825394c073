use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzSpec, ParameterSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Higher is better; for loss selection this is the negated loss.
    /// `None` for parameters that were not selected by training.
    pub selection_score: Option<f64>,
    pub selection: String,
    pub step: usize,
    pub epoch: usize,
    pub restart: usize,
    /// Mean loss on the selection split at the saved parameters.
    pub loss: Option<f64>,
    /// sha256 of the canonical JSON of the training configuration.
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: AnsatzSpec,
    pub theta: ParameterSet,
    pub metadata: CheckpointMeta,
}

impl Checkpoint {
    /// A bare checkpoint for fixed parameters that were not trained here.
    pub fn fixed(spec: AnsatzSpec, theta: ParameterSet) -> Result<Self> {
        spec.validate()?;
        theta.check(&spec)?;
        Ok(Self {
            spec,
            theta,
            metadata: CheckpointMeta {
                selection_score: None,
                selection: "none".into(),
                step: 0,
                epoch: 0,
                restart: 0,
                loss: None,
                config_fingerprint: String::new(),
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.theta.check(&self.spec)?;
        if let Some(bad) = self.theta.0.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("checkpoint holds non-finite parameter {bad}")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
