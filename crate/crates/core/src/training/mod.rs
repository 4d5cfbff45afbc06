//! Datasets, oversampling, fold splitting, optimisation and cross-validation.

mod cv;
mod dataset;
mod fit;
mod kfold;
mod optim;
mod oversample;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use cv::{
    cross_validate, fold_seed, run_cross_validation, CvOutcome, CvPlan, FoldOutcome, FoldRun, OversampleScope,
};
pub use dataset::Dataset;
pub use fit::{accuracy, fit, predict_dataset, train_epoch, EpochStats};
pub use kfold::{kfold_split, FoldSplit};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use oversample::{oversample, oversample_indices, oversampled_counts};

use crate::ingest::{IngestError, NormScope};
use crate::kv::{KvError, KvMap};
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("bad training data: {0}")]
    Data(String),
    #[error("non-finite gradient in {param}, element {element}: {value}")]
    NonFiniteGradient { param: String, element: usize, value: f64 },
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Batch {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<TrainError>,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<TrainError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Layer(#[from] NnError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Kv(#[from] KvError),
}

impl FromStr for OversampleScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "train_folds" => Ok(Self::TrainFolds),
            "whole_dataset" => Ok(Self::WholeDataset),
            other => Err(format!(
                "unknown oversample scope {other:?} (expected train_folds or whole_dataset)"
            )),
        }
    }
}

impl fmt::Display for OversampleScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TrainFolds => "train_folds",
            Self::WholeDataset => "whole_dataset",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub k_folds: usize,
    pub oversample: bool,
    pub oversample_scope: OversampleScope,
    pub norm_scope: NormScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            k_folds: 10,
            oversample: true,
            oversample_scope: OversampleScope::TrainFolds,
            norm_scope: NormScope::All,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 9] = [
        "epochs",
        "batch_size",
        "learning_rate",
        "optimizer",
        "seed",
        "k_folds",
        "oversample",
        "oversample_scope",
        "norm_scope",
    ];

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.k_folds < 2 {
            return bad("k_folds must be at least 2");
        }
        Ok(())
    }

    pub fn plan(&self) -> CvPlan {
        CvPlan {
            k_folds: self.k_folds,
            seed: self.seed,
            oversample: self.oversample,
            oversample_scope: self.oversample_scope,
            norm_scope: self.norm_scope,
        }
    }

    /// Reads the training keys of `kv`, defaulting any that are absent.
    /// Keys belonging to other sections are ignored.
    pub fn from_kv(kv: &KvMap) -> Result<Self, TrainError> {
        let d = Self::default();
        let cfg = Self {
            epochs: kv.get_or("epochs", d.epochs)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            learning_rate: kv.get_or("learning_rate", d.learning_rate)?,
            optimizer: kv.get_or("optimizer", d.optimizer)?,
            seed: kv.get_or("seed", d.seed)?,
            k_folds: kv.get_or("k_folds", d.k_folds)?,
            oversample: kv.get_or("oversample", d.oversample)?,
            oversample_scope: kv.get_or("oversample_scope", d.oversample_scope)?,
            norm_scope: kv.get_or("norm_scope", d.norm_scope)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "epochs = {}\nbatch_size = {}\nlearning_rate = {:e}\noptimizer = {}\nseed = {}\nk_folds = {}\noversample = {}\noversample_scope = {}\nnorm_scope = {}\n",
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.optimizer,
            self.seed,
            self.k_folds,
            self.oversample,
            self.oversample_scope,
            self.norm_scope,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.k_folds), (30, 32, 10));
        assert_eq!(c.learning_rate, 1e-3);
        assert!(c.oversample);
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let c = TrainConfig {
            epochs: 3,
            learning_rate: 2.5e-4,
            optimizer: OptimizerKind::Sgd,
            seed: 77,
            oversample_scope: OversampleScope::WholeDataset,
            norm_scope: NormScope::TrainOnly,
            ..TrainConfig::default()
        };
        let kv = KvMap::parse(&c.to_kv_text()).unwrap();
        assert_eq!(TrainConfig::from_kv(&kv).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        let kv = KvMap::parse("k_folds = 1").unwrap();
        assert!(TrainConfig::from_kv(&kv).is_err());
        let kv = KvMap::parse("optimizer = lbfgs").unwrap();
        assert!(TrainConfig::from_kv(&kv).is_err());
        let kv = KvMap::parse("learning_rate = -1").unwrap();
        assert!(TrainConfig::from_kv(&kv).is_err());
    }
}
