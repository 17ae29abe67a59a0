//! Classification accuracy and group fairness metrics.
//!
//! Group 1 is the privileged group, group 2 the other; every difference is
//! "group 2 minus group 1". Rates are computed on `{0, 1}` labels obtained
//! from ±1 via `(y + 1)/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;

/// `sign(x_i · w)` with ties sent to `+1`.
pub fn predict(x: &DesignMatrix, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            what: "weight vector",
            expected: x.ncols(),
            got: w.len(),
        });
    }
    Ok((0..x.nrows())
        .map(|i| if x.row_dot(i, w) >= 0.0 { 1.0 } else { -1.0 })
        .collect())
}

pub fn accuracy(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "predictions",
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("no samples to score".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub spd: f64,
    /// `+∞` when group 1 has no positive predictions; see `di_infinite`.
    pub di: f64,
    pub di_infinite: bool,
    pub eod: f64,
    pub aod: f64,
    pub theil: f64,
    pub fnrd: f64,
    /// `(|G1|, |G2|)`
    pub group_sizes: (usize, usize),
}

#[derive(Default)]
struct Counts {
    n: usize,
    pred_pos: usize,
    pos: usize,
    true_pos: usize,
    neg: usize,
    false_pos: usize,
}

impl Counts {
    fn rate(num: usize, den: usize) -> f64 {
        if den == 0 {
            f64::NAN
        } else {
            num as f64 / den as f64
        }
    }

    fn positive_rate(&self) -> f64 {
        Self::rate(self.pred_pos, self.n)
    }

    fn tpr(&self) -> f64 {
        Self::rate(self.true_pos, self.pos)
    }

    fn fpr(&self) -> f64 {
        Self::rate(self.false_pos, self.neg)
    }
}

/// Fairness metrics of ±1 predictions. `group2[i]` is `true` for members of
/// the unprivileged group. Rates conditioned on an empty label class come
/// out as NaN.
pub fn fairness(predictions: &[f64], labels: &[f64], group2: &[bool]) -> Result<FairnessReport> {
    let n = labels.len();
    if predictions.len() != n || group2.len() != n {
        return Err(Error::DimensionMismatch {
            what: "fairness inputs",
            expected: n,
            got: predictions.len().min(group2.len()),
        });
    }
    let mut g = [Counts::default(), Counts::default()];
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let yhat = (predictions[i] + 1.0) / 2.0;
        let y = (labels[i] + 1.0) / 2.0;
        if !(yhat == 0.0 || yhat == 1.0) || !(y == 0.0 || y == 1.0) {
            return Err(Error::arg(format!("sample {i} has a non-±1 prediction or label")));
        }
        let c = &mut g[usize::from(group2[i])];
        c.n += 1;
        let p = yhat == 1.0;
        c.pred_pos += usize::from(p);
        if y == 1.0 {
            c.pos += 1;
            c.true_pos += usize::from(p);
        } else {
            c.neg += 1;
            c.false_pos += usize::from(p);
        }
        b.push(yhat - y + 1.0);
    }
    if g[0].n == 0 || g[1].n == 0 {
        return Err(Error::arg("both groups must be nonempty"));
    }
    let (g1, g2) = (&g[0], &g[1]);
    let spd = g2.positive_rate() - g1.positive_rate();
    let di_infinite = g1.pred_pos == 0;
    let di = if di_infinite {
        f64::INFINITY
    } else {
        g2.positive_rate() / g1.positive_rate()
    };
    let eod = g2.tpr() - g1.tpr();
    let aod = 0.5 * ((g2.fpr() - g1.fpr()) + (g2.tpr() - g1.tpr()));
    let fnrd = (1.0 - g2.tpr()) - (1.0 - g1.tpr());
    Ok(FairnessReport {
        spd,
        di,
        di_infinite,
        eod,
        aod,
        theil: theil_index(&b),
        fnrd,
        group_sizes: (g1.n, g2.n),
    })
}

/// `(1/n) Σ (b_i/μ) ln(b_i/μ)` with `0 ln 0 = 0`; zero when every `b_i` is 0.
pub fn theil_index(b: &[f64]) -> f64 {
    let n = b.len() as f64;
    let mu = b.iter().sum::<f64>() / n;
    if mu == 0.0 {
        return 0.0;
    }
    b.iter()
        .map(|&v| {
            let t = v / mu;
            if t == 0.0 {
                0.0
            } else {
                t * t.ln()
            }
        })
        .sum::<f64>()
        / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        // G1: (pred 1, label 1), (pred 0, label 0); G2: (pred 1, label 0), (pred 0, label 1)
        let pred = [1.0, -1.0, 1.0, -1.0];
        let lab = [1.0, -1.0, -1.0, 1.0];
        let grp = [false, false, true, true];
        let r = fairness(&pred, &lab, &grp).unwrap();
        assert_eq!(r.spd, 0.0);
        assert_eq!(r.di, 1.0);
        assert_eq!(r.eod, -1.0);
        assert_eq!(r.aod, 0.0);
        assert_eq!(r.fnrd, 1.0);
        // b = [1, 1, 2, 0], μ = 1
        assert!((r.theil - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
        assert_eq!(r.group_sizes, (2, 2));
    }

    #[test]
    fn symmetric_groups() {
        let pred = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
        let lab = [1.0, 1.0, -1.0, 1.0, 1.0, -1.0];
        let grp = [false, false, false, true, true, true];
        let r = fairness(&pred, &lab, &grp).unwrap();
        assert_eq!((r.spd, r.di, r.eod, r.aod, r.fnrd), (0.0, 1.0, 0.0, 0.0, 0.0));
        assert!(r.theil >= 0.0);
    }

    #[test]
    fn perfect_predictions_have_zero_theil() {
        let lab = [1.0, -1.0, 1.0, -1.0];
        let r = fairness(&lab, &lab, &[false, true, false, true]).unwrap();
        assert_eq!(r.theil, 0.0);
    }

    #[test]
    fn di_sentinel() {
        let r = fairness(&[-1.0, 1.0], &[1.0, 1.0], &[false, true]).unwrap();
        assert!(r.di_infinite && r.di == f64::INFINITY);
        assert!(fairness(&[1.0], &[1.0], &[true]).is_err());
    }

    #[test]
    fn accuracy_and_predict() {
        let x = DesignMatrix::from_rows(&[vec![1.0], vec![-1.0], vec![0.0]]).unwrap();
        let p = predict(&x, &[2.0]).unwrap();
        assert_eq!(p, vec![1.0, -1.0, 1.0]);
        assert_eq!(accuracy(&p, &[1.0, 1.0, 1.0]).unwrap(), 2.0 / 3.0);
    }
}
