use serde::Serialize;

use super::{Features, Predictor};
use crate::error::Result;
use crate::linalg::{cholesky_solve, NormalEquations};
use crate::stats::mean;

/// Fitted linear model; `coef[0]` is the intercept.
#[derive(Debug, Clone, Serialize)]
pub struct LinearFit {
    pub coef: Vec<f64>,
}

impl Predictor for LinearFit {
    fn predict(&self, z: &[f64]) -> f64 {
        self.coef[0] + self.coef[1..].iter().zip(z).map(|(b, v)| b * v).sum::<f64>()
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or_default()
    }
}

/// Least squares with penalty `ridge · ‖slopes‖²`. Features and targets are
/// centred first, so the intercept is never penalised and constant targets
/// are reproduced exactly. A rank-deficient design with `ridge = 0` yields
/// [`crate::Error::SingularDesign`].
pub fn fit_ridge(f: &Features, y: &[f64], ridge: f64) -> Result<LinearFit> {
    let d = f.cols;
    let y_bar = mean(y);
    let x_bar: Vec<f64> = (0..d)
        .map(|j| mean(&(0..f.rows).map(|i| f.row(i)[j]).collect::<Vec<_>>()))
        .collect();
    if d == 0 {
        return Ok(LinearFit { coef: vec![y_bar] });
    }
    // slot 0 is a dummy intercept so `finish` penalises every real slope
    let mut ne = NormalEquations::new(d + 1);
    let mut z = vec![0.0; d + 1];
    z[0] = 1.0;
    for i in 0..f.rows {
        for (j, (v, m)) in f.row(i).iter().zip(&x_bar).enumerate() {
            z[j + 1] = v - m;
        }
        ne.add(&z, 1.0, y[i] - y_bar);
    }
    let (gram, rhs) = ne.finish(ridge);
    let p = d + 1;
    let sub_gram: Vec<f64> = (1..p)
        .flat_map(|i| (1..p).map(move |j| (i, j)))
        .map(|(i, j)| gram[i * p + j])
        .collect();
    let slopes = cholesky_solve(&sub_gram, &rhs[1..], 1e-10)?;
    let intercept = y_bar - slopes.iter().zip(&x_bar).map(|(b, m)| b * m).sum::<f64>();
    let mut coef = Vec::with_capacity(p);
    coef.push(intercept);
    coef.extend(slopes);
    Ok(LinearFit { coef })
}
