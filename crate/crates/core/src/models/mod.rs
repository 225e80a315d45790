//! Classifiers: logistic regression, CART, random forest and Newton-boosted
//! trees, plus repeated stratified cross-validation and random search.

pub mod cv;
pub mod ensemble;
pub mod logistic;
pub mod tree;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sigmoid;

pub use cv::{cross_validate, random_search, stratified_folds, CvReport, Dist, SearchResult, SearchSpace};
pub use ensemble::{
    log_loss, train_boosted, train_cart, train_forest, train_forest_with, BoostParams, EnsembleKind, ForestParams,
    TreeEnsemble,
};
pub use logistic::{loss_and_gradient, train_logistic, LinearModel};
pub use tree::TreeNode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Tree,
    Forest,
    Boosted,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Logistic, ModelKind::Tree, ModelKind::Forest, ModelKind::Boosted];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Boosted => "boosted",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind '{s}'")))
    }
}

/// Hyperparameters for one model kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyper {
    Logistic { l2: f64, lr: f64, epochs: usize },
    Tree { max_depth: usize, min_leaf: usize },
    Forest(ForestParams),
    Boosted(BoostParams),
}

impl Hyper {
    pub fn default_for(kind: ModelKind) -> Hyper {
        match kind {
            ModelKind::Logistic => Hyper::Logistic {
                l2: 1e-2,
                lr: 0.5,
                epochs: 300,
            },
            ModelKind::Tree => Hyper::Tree {
                max_depth: 5,
                min_leaf: 1,
            },
            ModelKind::Forest => Hyper::Forest(ForestParams {
                n_trees: 100,
                max_depth: 8,
                min_leaf: 1,
                feature_frac: 0.5,
            }),
            ModelKind::Boosted => Hyper::Boosted(BoostParams {
                n_rounds: 100,
                learning_rate: 0.1,
                max_depth: 3,
                lambda_l2: 1.0,
            }),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyper::Logistic { .. } => ModelKind::Logistic,
            Hyper::Tree { .. } => ModelKind::Tree,
            Hyper::Forest(_) => ModelKind::Forest,
            Hyper::Boosted(_) => ModelKind::Boosted,
        }
    }

    /// Overrides one named hyperparameter.
    pub fn set(&mut self, name: &str, v: f64) -> Result<()> {
        let count = |v: f64| v.round().max(0.0) as usize;
        match (self, name) {
            (Hyper::Logistic { l2, .. }, "l2") => *l2 = v,
            (Hyper::Logistic { lr, .. }, "lr") => *lr = v,
            (Hyper::Logistic { epochs, .. }, "epochs") => *epochs = count(v),
            (Hyper::Tree { max_depth, .. }, "max_depth") => *max_depth = count(v),
            (Hyper::Tree { min_leaf, .. }, "min_leaf") => *min_leaf = count(v),
            (Hyper::Forest(p), "n_trees") => p.n_trees = count(v),
            (Hyper::Forest(p), "max_depth") => p.max_depth = count(v),
            (Hyper::Forest(p), "min_leaf") => p.min_leaf = count(v),
            (Hyper::Forest(p), "feature_frac") => p.feature_frac = v,
            (Hyper::Boosted(p), "n_rounds") => p.n_rounds = count(v),
            (Hyper::Boosted(p), "learning_rate") => p.learning_rate = v,
            (Hyper::Boosted(p), "max_depth") => p.max_depth = count(v),
            (Hyper::Boosted(p), "lambda_l2") => p.lambda_l2 = v,
            (h, _) => {
                return Err(Error::Config(format!(
                    "'{name}' is not a hyperparameter of {}",
                    h.kind()
                )))
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Model {
    Linear(LinearModel),
    Ensemble(TreeEnsemble),
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Linear(m) => m.n_features(),
            Model::Ensemble(m) => m.n_features,
        }
    }

    fn check_arity(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features() {
            return Err(Error::Arity {
                expected: self.n_features(),
                actual: row.len(),
            });
        }
        Ok(())
    }

    /// Log-odds for linear and boosted models, mean leaf value for trees and forests.
    pub fn raw_score(&self, row: &[f64]) -> Result<f64> {
        self.check_arity(row)?;
        Ok(match self {
            Model::Linear(m) => m.raw_score(row),
            Model::Ensemble(m) => m.raw_score(row),
        })
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        let raw = self.raw_score(row)?;
        Ok(match self {
            Model::Linear(_) => sigmoid(raw),
            Model::Ensemble(m) => m.proba_from_raw(raw),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Linear(m) => m.validate(),
            Model::Ensemble(m) => m.validate(),
        }
    }
}

/// Fits a model of the kind named by `hyper`.
pub fn train(hyper: &Hyper, x: &[&[f64]], y: &[u8], seed: u64) -> Result<Model> {
    Ok(match hyper {
        Hyper::Logistic { l2, lr, epochs } => Model::Linear(train_logistic(x, y, *l2, *lr, *epochs)?.0),
        Hyper::Tree { max_depth, min_leaf } => Model::Ensemble(train_cart(x, y, *max_depth, *min_leaf)?),
        Hyper::Forest(p) => Model::Ensemble(train_forest(x, y, p, seed)?),
        Hyper::Boosted(p) => Model::Ensemble(train_boosted(x, y, p, seed)?.0),
    })
}

/// A fitted model with the feature names it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub feature_names: Vec<String>,
    pub hyper: Hyper,
    pub model: Model,
}

impl ModelFile {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mf: ModelFile = serde_json::from_reader(BufReader::new(file))?;
        mf.model.validate()?;
        if mf.feature_names.len() != mf.model.n_features() {
            return Err(Error::InvalidModel(format!(
                "{} feature names for a {}-feature model",
                mf.feature_names.len(),
                mf.model.n_features()
            )));
        }
        Ok(mf)
    }
}
