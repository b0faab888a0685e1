use std::sync::Arc;

use super::Predictor;
use crate::dgp::Truth;

/// Which true nuisance function an [`OraclePredictor`] evaluates, and hence
/// how it reads its feature row (see the layout table in the module docs).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleRole {
    /// `e*(x)`.
    Treatment,
    /// `r*(t, x, s)` on `(t, x, s)`.
    Label,
    /// `P(R = 1 | T = t, X = x)` on `(t, x)`.
    LabelWithoutSurrogate,
    /// `μ̃*(arm, x, s)` on `(x, s)`.
    MuTilde(bool),
    /// Arm-free `μ̃*(x, s)` on `(x, s)`.
    MuTildePooled,
    /// `μ*(arm, x)` on `x`.
    Mu(bool),
    /// `λ*(x)` on `x`.
    Lambda,
}

#[derive(Debug, Clone)]
pub struct OraclePredictor {
    pub truth: Arc<Truth>,
    pub role: OracleRole,
}

impl Predictor for OraclePredictor {
    fn predict(&self, z: &[f64]) -> f64 {
        let d_x = self.truth.spec.d_x;
        let tr = &self.truth;
        match self.role {
            OracleRole::Treatment => tr.e(&z[..d_x]),
            OracleRole::Label => tr.r(z[0] != 0.0, &z[1..1 + d_x], &z[1 + d_x..]),
            OracleRole::LabelWithoutSurrogate => tr.r_bar(z[0] != 0.0, &z[1..1 + d_x]),
            OracleRole::MuTilde(arm) => tr.mu_tilde(arm, &z[..d_x], &z[d_x..]),
            OracleRole::MuTildePooled => tr.mu_tilde_pooled(&z[..d_x], &z[d_x..]),
            OracleRole::Mu(arm) => tr.mu(arm, &z[..d_x]),
            OracleRole::Lambda => tr.lambda(&z[..d_x]),
        }
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "oracle": format!("{:?}", self.role) })
    }
}
