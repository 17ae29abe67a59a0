//! The rank-based learning problem `min_w Σ σ_i l_[i](−y ⊙ Xw) + g(w)` and
//! the operator `D = −diag(y)·X`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;
use crate::losses::LossKind;
use crate::regularizers::RegularizerSpec;
use crate::weights::{ResolvedWeights, WeightScheme};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Problem {
    x: DesignMatrix,
    y: Vec<f64>,
    loss: LossKind,
    scheme: WeightScheme,
    regularizer: RegularizerSpec,
    weights: ResolvedWeights,
}

impl Problem {
    pub fn new(
        x: DesignMatrix,
        y: Vec<f64>,
        loss: LossKind,
        scheme: WeightScheme,
        regularizer: RegularizerSpec,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || x.ncols() == 0 {
            return Err(Error::Empty("problem needs n ≥ 1 and d ≥ 1".into()));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                what: "label vector",
                expected: n,
                got: y.len(),
            });
        }
        if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::arg(format!("label {i} is {}, expected ±1", y[i])));
        }
        if !x.all_finite() {
            return Err(Error::arg("data matrix has non-finite entries"));
        }
        regularizer.validate()?;
        let weights = scheme.resolve(n)?;
        Ok(Self {
            x,
            y,
            loss,
            scheme,
            regularizer,
            weights,
        })
    }

    /// Same data, different rank weights.
    pub fn with_scheme(&self, scheme: WeightScheme) -> Result<Self> {
        let weights = scheme.resolve(self.n())?;
        Ok(Self {
            scheme,
            weights,
            ..self.clone()
        })
    }

    pub fn with_regularizer(&self, regularizer: RegularizerSpec) -> Result<Self> {
        regularizer.validate()?;
        Ok(Self {
            regularizer,
            ..self.clone()
        })
    }

    /// Replaces the resolved weights directly (e.g. with a reversed σ).
    pub fn with_resolved_weights(&self, weights: ResolvedWeights) -> Result<Self> {
        if weights.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "resolved weights",
                expected: self.n(),
                got: weights.len(),
            });
        }
        Ok(Self {
            weights,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn scheme(&self) -> &WeightScheme {
        &self.scheme
    }

    pub fn regularizer(&self) -> &RegularizerSpec {
        &self.regularizer
    }

    pub fn weights(&self) -> &ResolvedWeights {
        &self.weights
    }

    fn check_w(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.d() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.d(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// `z = D w` with `z_i = −y_i·(x_i·w)`.
    pub fn apply_d(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_w(w)?;
        Ok(self.apply_d_unchecked(w))
    }

    pub(crate) fn apply_d_unchecked(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| -self.y[i] * self.x.row_dot(i, w)).collect()
    }

    /// `Dᵀ v`
    pub fn apply_dt(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "sample-space vector",
                expected: self.n(),
                got: v.len(),
            });
        }
        Ok(self.apply_dt_unchecked(v))
    }

    pub(crate) fn apply_dt_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = v.iter().zip(&self.y).map(|(a, y)| -a * y).collect();
        self.x.rmatvec(&scaled)
    }

    /// Rank-based loss `Ω(z) = Σ σ_i l(z_[i])` at margins `z`.
    pub fn rank_loss(&self, z: &[f64]) -> f64 {
        rank_loss(&self.weights, self.loss, z)
    }

    /// `Ω(Dw) + g(w)`.
    pub fn objective(&self, w: &[f64]) -> Result<f64> {
        let z = self.apply_d(w)?;
        Ok(self.rank_loss(&z) + self.regularizer.value(w))
    }

    /// Spectral norm estimate of `D` (equal to that of `X`).
    pub fn d_norm(&self, seed: u64) -> f64 {
        self.x.spectral_norm_estimate(100, seed)
    }
}

/// Indices that sort `values` ascending, ties broken by index.
pub fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

pub fn rank_loss(weights: &ResolvedWeights, loss: LossKind, z: &[f64]) -> f64 {
    let order = ascending_order(z);
    order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let s = weights.sigma_at(rank, z[i]);
            if s == 0.0 {
                0.0
            } else {
                s * loss.value(z[i])
            }
        })
        .sum()
}
