use serde::Serialize;

use super::{Features, Predictor};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, NormalEquations};
use crate::scalar::sigmoid;

/// Fitted logistic regression; `coef[0]` is the intercept.
#[derive(Debug, Clone, Serialize)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Penalised log-likelihood after each accepted step, starting from the
    /// initial point.
    pub objective_trace: Vec<f64>,
}

impl Predictor for LogisticFit {
    fn predict(&self, z: &[f64]) -> f64 {
        sigmoid(self.linear(z))
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or_default()
    }
}

impl LogisticFit {
    #[inline]
    pub fn linear(&self, z: &[f64]) -> f64 {
        self.coef[0] + self.coef[1..].iter().zip(z).map(|(b, v)| b * v).sum::<f64>()
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn linear(coef: &[f64], z: &[f64]) -> f64 {
    coef[0] + coef[1..].iter().zip(z).map(|(b, v)| b * v).sum::<f64>()
}

fn objective(f: &Features, labels: &[bool], coef: &[f64], ridge: f64) -> (f64, f64) {
    let mut ll = 0.0;
    for i in 0..f.rows {
        let eta = linear(coef, f.row(i));
        ll -= if labels[i] { softplus(-eta) } else { softplus(eta) };
    }
    let pen = 0.5 * ridge * coef[1..].iter().map(|b| b * b).sum::<f64>();
    (ll - pen, ll)
}

const COEF_LIMIT: f64 = 1e8;
const MAX_HALVINGS: usize = 40;

/// Newton–Raphson (IRLS) for the ridge-penalised Bernoulli log-likelihood,
/// with step halving so the objective never decreases. Stops when the largest
/// coefficient change falls below `tol`.
pub fn fit_logistic(
    f: &Features,
    labels: &[bool],
    ridge: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticFit> {
    let p = f.cols + 1;
    let base = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
    let mut coef = vec![0.0; p];
    coef[0] = (base / (1.0 - base)).ln();
    let (mut obj, _) = objective(f, labels, &coef, ridge);
    let mut trace = vec![obj];
    let mut z = vec![0.0; p];
    z[0] = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut ne = NormalEquations::new(p);
        for i in 0..f.rows {
            z[1..].copy_from_slice(f.row(i));
            let pi = sigmoid(linear(&coef, &z[1..]));
            let w = pi * (1.0 - pi);
            // the Newton step solves H d = g with working response (y − p)/w
            let resid = (labels[i] as u8 as f64) - pi;
            let gram_w = w.max(1e-300);
            ne.add(&z, gram_w, resid / gram_w);
        }
        let (hess, mut grad) = ne.finish(ridge);
        for j in 1..p {
            grad[j] -= ridge * coef[j];
        }
        let step = cholesky_solve(&hess, &grad, 1e-13).map_err(|_| Error::Separation)?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = coef.iter().zip(&step).map(|(c, d)| c + scale * d).collect();
            let (cand_obj, _) = objective(f, labels, &cand, ridge);
            if cand_obj >= obj {
                accepted = Some((cand, cand_obj));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_obj)) = accepted else {
            // no ascent direction left at machine precision
            converged = true;
            break;
        };
        let change = coef
            .iter()
            .zip(&cand)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        coef = cand;
        obj = cand_obj;
        trace.push(obj);
        if coef.iter().any(|c| !c.is_finite()) || coef.iter().map(|c| c * c).sum::<f64>().sqrt() > COEF_LIMIT {
            return Err(Error::Separation);
        }
        if ridge == 0.0 && obj > -1e-8 {
            // (near-)perfect classification: the maximiser is at infinity
            return Err(Error::Separation);
        }
        if change < tol {
            converged = true;
            break;
        }
    }
    if !converged && ridge == 0.0 && coef[1..].iter().any(|c| c.abs() > 30.0) {
        return Err(Error::Separation);
    }
    Ok(LogisticFit {
        coef,
        iterations,
        converged,
        objective_trace: trace,
    })
}
