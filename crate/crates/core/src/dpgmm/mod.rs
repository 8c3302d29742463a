//! Truncated stick-breaking Dirichlet-process Gaussian mixture with diagonal
//! Normal-Gamma components, fitted by coordinate-ascent variational inference.

mod assign;
mod cavi;
mod counts;
mod stick;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use assign::{hard_assign, prune_and_reassign, responsibilities, PruneReport, Responsibilities};
pub use cavi::{fit_cavi, CaviConfig, CaviInit};
pub use counts::{component_count_pmf, crp_simulate, expected_components, stirling_unsigned, STIRLING_MAX_N};
pub use stick::{stick_weights, StickWeights};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// DP concentration plus a per-dimension Normal-Gamma base measure
/// `μ | λ ~ N(mean, 1/(κ0 λ))`, `λ ~ Gamma(shape0, rate0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DpGmmPrior<S> {
    pub alpha0: S,
    pub mean: Vec<S>,
    pub kappa0: S,
    pub shape0: S,
    pub rate0: Vec<S>,
}

impl<S: Scalar> DpGmmPrior<S> {
    /// Empirical-Bayes defaults: data mean, κ0 = 1, a0 = 1, b0 = per-dimension
    /// population variance (floored).
    pub fn empirical(x: &[Vec<S>], alpha0: S) -> Result<Self> {
        let n = x.len();
        let d = x.first().map(Vec::len).ok_or_else(|| Error::domain("empty data"))?;
        let nf = S::from_usize_lossy(n);
        let mut mean = vec![S::zero(); d];
        for row in x {
            if row.len() != d {
                return Err(Error::dims("data row", d, row.len()));
            }
            for (m, &v) in mean.iter_mut().zip(row) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / nf);
        let mut var = vec![S::zero(); d];
        for row in x {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        let floor = S::c(crate::VARIANCE_FLOOR);
        let rate0 = var.into_iter().map(|s| (s / nf).max(floor)).collect();
        let prior = DpGmmPrior {
            alpha0,
            mean,
            kappa0: S::one(),
            shape0: S::one(),
            rate0,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: S| v > S::zero() && v.is_finite();
        if !pos(self.alpha0) || !pos(self.kappa0) || !pos(self.shape0) {
            return Err(Error::domain("alpha0, kappa0 and shape0 must be positive"));
        }
        if self.rate0.len() != self.mean.len() {
            return Err(Error::dims("prior rate vector", self.mean.len(), self.rate0.len()));
        }
        if !self.rate0.iter().all(|&b| pos(b)) || !self.mean.iter().all(|m| m.is_finite()) {
            return Err(Error::domain("prior rates must be positive and means finite"));
        }
        Ok(())
    }
}

/// Beta posteriors `q(β_t) = Beta(γ1, γ2)` for sticks `t < T − 1`; the last
/// component takes the remaining mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct StickState<S> {
    pub gamma1: Vec<S>,
    pub gamma2: Vec<S>,
}

impl<S: Scalar> StickState<S> {
    /// Posterior-mean stick fractions, with the final component's fraction 1.
    pub fn mean_fractions(&self) -> Vec<S> {
        let mut f: Vec<S> = self
            .gamma1
            .iter()
            .zip(&self.gamma2)
            .map(|(&a, &b)| a / (a + b))
            .collect();
        f.push(S::one());
        f
    }
}

/// Per-component Normal-Gamma posteriors (shared κ and shape across dimensions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct NormalGammaState<S> {
    pub kappa: Vec<S>,
    pub mean: Vec<Vec<S>>,
    pub shape: Vec<S>,
    pub rate: Vec<Vec<S>>,
}

/// A fitted (or hand-built) mixture. `weights`, `means` and `variances` have
/// one entry per truncation component; `active_mask` selects the components
/// that take part in responsibilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DpGmmModel<S> {
    pub truncation: usize,
    pub prior: DpGmmPrior<S>,
    pub sticks: Option<StickState<S>>,
    pub posterior: Option<NormalGammaState<S>>,
    pub weights: Vec<S>,
    pub means: Vec<Vec<S>>,
    pub variances: Vec<Vec<S>>,
    pub active_mask: Vec<bool>,
    pub elbo_trace: Vec<S>,
    pub iterations: usize,
    pub converged: bool,
}

impl<S: Scalar> DpGmmModel<S> {
    /// Builds a model directly from mixture parameters (all components active).
    pub fn from_components(weights: Vec<S>, means: Vec<Vec<S>>, variances: Vec<Vec<S>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::domain("mixture needs at least one component"));
        }
        if means.len() != k || variances.len() != k {
            return Err(Error::dims("component parameter lists", k, means.len().min(variances.len())));
        }
        let d = means[0].len();
        if means.iter().chain(&variances).any(|v| v.len() != d) {
            return Err(Error::domain("component parameters must share one dimension"));
        }
        if weights.iter().any(|&w| w < S::zero() || !w.is_finite()) {
            return Err(Error::domain("weights must be finite and non-negative"));
        }
        let total: S = weights.iter().copied().sum();
        if total <= S::zero() {
            return Err(Error::domain("weights must not all be zero"));
        }
        let floor = S::c(crate::VARIANCE_FLOOR);
        let model = DpGmmModel {
            truncation: k,
            prior: DpGmmPrior {
                alpha0: S::one(),
                mean: vec![S::zero(); d],
                kappa0: S::one(),
                shape0: S::one(),
                rate0: vec![S::one(); d],
            },
            sticks: None,
            posterior: None,
            weights: weights.into_iter().map(|w| w / total).collect(),
            means,
            variances: variances.into_iter().map(|v| v.into_iter().map(|s| s.max(floor)).collect()).collect(),
            active_mask: vec![true; k],
            elbo_trace: Vec::new(),
            iterations: 0,
            converged: true,
        };
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    /// Indices of active components, in component order.
    pub fn active_indices(&self) -> Vec<usize> {
        self.active_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    pub fn n_active(&self) -> usize {
        self.active_mask.iter().filter(|&&a| a).count()
    }

    /// Components whose weight exceeds `min_weight`.
    pub fn effective_components(&self, min_weight: f64) -> usize {
        self.weights.iter().filter(|w| w.as_f64() > min_weight).count()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
