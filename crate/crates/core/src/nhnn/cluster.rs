use serde::{Deserialize, Serialize};

use crate::dataio::{Corpus, NormStats};
use crate::dpgmm::{fit_cavi, prune_and_reassign, CaviConfig, DpGmmModel, DpGmmPrior, PruneReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub alpha0: f64,
    pub truncation: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Minimum hard-assignment share a component needs to survive pruning.
    pub threshold: f64,
    /// Z-score summary features (training statistics) before fitting.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            alpha0: 1.0,
            truncation: 10,
            tol: 1e-6,
            max_iter: 500,
            threshold: 0.10,
            standardize: true,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::Config("alpha0 must be positive".into()));
        }
        if self.truncation < 1 || self.max_iter < 1 {
            return Err(Error::Config("truncation and max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config("threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn cavi(&self) -> CaviConfig {
        CaviConfig {
            truncation: self.truncation,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            ..CaviConfig::default()
        }
    }
}

/// A pruned mixture over (optionally standardized) summary features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub summary_norm: Option<NormStats>,
    pub dpgmm: DpGmmModel<f64>,
}

impl ClusterModel {
    pub fn transform(&self, summary: &[f64]) -> Result<Vec<f64>> {
        if summary.len() != self.dpgmm.dim() {
            return Err(Error::dims("summary features", self.dpgmm.dim(), summary.len()));
        }
        Ok(match &self.summary_norm {
            Some(n) => n.apply_row(summary),
            None => summary.to_vec(),
        })
    }

    pub fn transform_corpus(&self, corpus: &Corpus) -> Result<Vec<Vec<f64>>> {
        corpus.utterances.iter().map(|u| self.transform(&u.summary_features)).collect()
    }

    pub fn n_clusters(&self) -> usize {
        self.dpgmm.n_active()
    }

    /// Hard cluster (position among active components) of each utterance.
    pub fn assign(&self, corpus: &Corpus) -> Result<Vec<usize>> {
        crate::dpgmm::hard_assign(&self.dpgmm, &self.transform_corpus(corpus)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFit {
    pub model: ClusterModel,
    pub assignments: Vec<usize>,
    pub prune: PruneReport,
}

/// Fits the DP mixture to the corpus' summary features, then prunes small
/// components and reassigns their data.
pub fn fit_clusters(corpus: &Corpus, cfg: &ClusterConfig) -> Result<ClusterFit> {
    cfg.validate()?;
    if corpus.len() < 2 {
        return Err(Error::domain("clustering needs at least two utterances"));
    }
    let raw = corpus.summary_matrix();
    let summary_norm = if cfg.standardize {
        Some(NormStats::fit_rows(raw.iter().map(Vec::as_slice), corpus.d_s)?)
    } else {
        None
    };
    let x: Vec<Vec<f64>> = match &summary_norm {
        Some(n) => raw.iter().map(|r| n.apply_row(r)).collect(),
        None => raw,
    };
    let prior = DpGmmPrior::empirical(&x, cfg.alpha0)?;
    let fitted = fit_cavi(&x, &prior, &cfg.cavi())?;
    if !fitted.converged {
        log::warn!("CAVI stopped after {} iterations without converging", fitted.iterations);
    }
    let (dpgmm, assignments, prune) = prune_and_reassign(&fitted, &x, cfg.threshold)?;
    Ok(ClusterFit {
        model: ClusterModel { summary_norm, dpgmm },
        assignments,
        prune,
    })
}
