//! Efficiency lower bounds, gains and gaps for the synthetic designs.
//!
//! Each quantity is computed as `E[ψ²]` by Monte Carlo with the true
//! nuisances and, where a closed-form decomposition exists, also by
//! randomised quasi-Monte Carlo over `X`. Differences between bounds are
//! estimated from paired per-draw differences. When both routes are
//! available they must agree within five combined standard errors.
//!
//! Closed forms, conditional on `X = x`, with `V_S = σ_ν²‖γ‖²`,
//! `σ² = σ_ε²` and `m = μ(1,x) − μ(0,x) − δ`:
//!
//! | bound | integrand |
//! |---|---|
//! | `V*` | `m² + (V_S + σ² E[1/r₁])/e + (V_S + σ² E[1/r₀])/(1−e)` |
//! | `V_I = V_II` | `m² + (σ²+V_S)/(e r₁) + (σ²+V_S)/((1−e) r₀)` |
//! | `V_III` | `m² + (σ²/r₁ + V_S)/e + (σ²/r₀ + V_S)/(1−e)` |
//! | `V_IV` | `m² + (σ²+V_S)(1/e + 1/(1−e))` |
//! | `Ṽ*` | `λ σ² (1/e + 1/(1−e))` |
//! | `Ṽ` | `Ṽ* + p (m² + V_S (1/e + 1/(1−e)))` |

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{draw_full, DgpSpec, Family, Truth};
use crate::error::{Error, Result};
use crate::influence::{score_parts, setting_parts, InfluenceKind, NuisanceValues, Unit};
use crate::qmc::uniform_box_means;
use crate::seeding::{child_seed, rng_from_seed, stream};
use crate::stats::{MeanSe, RunningMoments};

pub const MIN_MC_BUDGET: usize = 10_000;

/// Monte Carlo draws are split into this many independently seeded shards.
pub const MC_SHARDS: usize = 16;

const QMC_REPLICATES: usize = 16;

/// Agreement tolerance of the two routes, in combined standard errors.
pub const SELF_TEST_SE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundId {
    VStar,
    VI,
    VII,
    VIII,
    VIV,
    GainIIII,
    GapIIIIV,
    VTildeStar,
    VTilde,
    /// `Ṽ*_I` and the labelled-data surrogate gain `Ṽ*_I − Ṽ*`.
    TildeGain,
    McarTrio,
    ZbGap,
    GeneralExtension,
    /// `V*` with the arm-free surrogate regression.
    VStarPooled,
}

impl BoundId {
    pub fn all() -> Vec<BoundId> {
        use BoundId::*;
        vec![
            VStar, VI, VII, VIII, VIV, GainIIII, GapIIIIV, VTildeStar, VTilde, TildeGain, McarTrio,
            ZbGap, GeneralExtension, VStarPooled,
        ]
    }

    pub fn name(self) -> &'static str {
        use BoundId::*;
        match self {
            VStar => "v_star",
            VI => "v_i",
            VII => "v_ii",
            VIII => "v_iii",
            VIV => "v_iv",
            GainIIII => "gain_i_iii",
            GapIIIIV => "gap_iii_iv",
            VTildeStar => "v_tilde_star",
            VTilde => "v_tilde",
            TildeGain => "tilde_gain",
            McarTrio => "mcar_trio",
            ZbGap => "zb_gap",
            GeneralExtension => "general_extension",
            VStarPooled => "v_star_pooled",
        }
    }

    /// Parses `all` or a comma-separated list of names.
    pub fn parse_list(text: &str) -> Result<Vec<BoundId>> {
        if text.trim() == "all" {
            return Ok(Self::all());
        }
        text.split(',')
            .map(|w| {
                let w = w.trim();
                Self::all()
                    .into_iter()
                    .find(|b| b.name() == w)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown bound `{w}`")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRequest {
    pub spec: DgpSpec,
    pub which: Vec<BoundId>,
    pub mc_budget: usize,
    pub seed: u64,
    /// Sample size fixing the labelling rate of the vanishing-label regime.
    /// Without it only the `P(R = 1) = 0` limits `Ṽ*` and `Ṽ` are defined.
    #[serde(default)]
    pub sample_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McValue {
    pub value: f64,
    pub se: f64,
    pub n_mc: usize,
}

/// One bound. `value`/`se` come from the closed form when there is one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub se: f64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<MeanSe>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<McValue>,
}

impl BoundValue {
    fn from_parts(closed: Option<MeanSe>, mc: Option<McValue>) -> Option<Self> {
        match (closed, mc) {
            (Some(c), _) => Some(BoundValue {
                value: c.mean,
                se: c.se,
                method: Method::ClosedForm,
                closed_form: Some(c),
                monte_carlo: mc,
            }),
            (None, Some(m)) => Some(BoundValue {
                value: m.value,
                se: m.se,
                method: Method::MonteCarlo,
                closed_form: None,
                monte_carlo: Some(m),
            }),
            (None, None) => None,
        }
    }

    /// `√(se_mc² + se_closed²)` when both routes were computed.
    pub fn combined_se(&self) -> Option<f64> {
        let (c, m) = (self.closed_form?, self.monte_carlo?);
        Some((c.se * c.se + m.se * m.se).sqrt())
    }

    /// `|mc − closed|` when both routes were computed.
    pub fn discrepancy(&self) -> Option<f64> {
        Some((self.monte_carlo?.value - self.closed_form?.mean).abs())
    }
}

/// All bounds defined for a design. Absent fields were not requested or are
/// not defined for the family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    /// `P(R = 1)` used in the rate-dependent bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_star: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_i: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_ii: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_iii: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_iv: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_i_iii: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_iii_iv: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_tilde_star: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_tilde: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_tilde_i: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_tilde_i: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_mcar_i: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_mcar_ii: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_mcar_iii: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcar_i_minus_ii: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcar_ii_minus_iii: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_our: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_zb: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_zb_gap: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_star_pooled: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub general_extension: Option<BoundValue>,
    /// `E[(μ(1,X) − μ(0,X) − δ)²]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vx: Option<BoundValue>,
    /// `E[Var{μ̃(T,X,S)|X}(1/e + 1/(1−e))]`, the second moment of the imputation term.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_s: Option<BoundValue>,
}

impl BoundSet {
    /// `Ṽ` as a function of `P(R = 1)`, from the closed-form components.
    /// At `p = 0` this returns `Ṽ*` exactly.
    pub fn v_tilde_at(&self, p: f64) -> Option<f64> {
        let vt = self.v_tilde_star?.value;
        let extra = self.vx?.value + self.v_s?.value;
        Some(vt + p * extra)
    }

    /// `(name, value)` for every computed bound, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, BoundValue)> {
        let all = [
            ("v_star", self.v_star),
            ("v_i", self.v_i),
            ("v_ii", self.v_ii),
            ("v_iii", self.v_iii),
            ("v_iv", self.v_iv),
            ("gain_i_iii", self.gain_i_iii),
            ("gap_iii_iv", self.gap_iii_iv),
            ("v_tilde_star", self.v_tilde_star),
            ("v_tilde", self.v_tilde),
            ("v_tilde_i", self.v_tilde_i),
            ("gain_tilde_i", self.gain_tilde_i),
            ("v_mcar_i", self.v_mcar_i),
            ("v_mcar_ii", self.v_mcar_ii),
            ("v_mcar_iii", self.v_mcar_iii),
            ("mcar_i_minus_ii", self.mcar_i_minus_ii),
            ("mcar_ii_minus_iii", self.mcar_ii_minus_iii),
            ("v_our", self.v_our),
            ("v_zb", self.v_zb),
            ("v_zb_gap", self.v_zb_gap),
            ("v_star_pooled", self.v_star_pooled),
            ("general_extension", self.general_extension),
            ("vx", self.vx),
            ("v_s", self.v_s),
        ];
        all.into_iter().filter_map(|(n, v)| v.map(|v| (n, v))).collect()
    }
}

// Column layout shared by the closed-form integrand and the Monte Carlo
// accumulators.
const VX: usize = 0;
const V_S: usize = 1;
const V_STAR: usize = 2;
const V_I: usize = 3;
const V_II: usize = 4;
const V_III: usize = 5;
const V_IV: usize = 6;
const GAIN: usize = 7;
const GAP: usize = 8;
const VT_STAR: usize = 9;
const VT: usize = 10;
const VT_I: usize = 11;
const GAIN_T: usize = 12;
const TRIO_I: usize = 13;
const TRIO_II: usize = 14;
const TRIO_III: usize = 15;
const TRIO_I_II: usize = 16;
const TRIO_II_III: usize = 17;
const OUR: usize = 18;
const ZB: usize = 19;
const ZB_GAP: usize = 20;
const POOLED: usize = 21;
const GEN_EXT: usize = 22;
const WIDTH: usize = 23;

/// Which column groups are defined for a design.
#[derive(Debug, Clone, Copy)]
struct Plan {
    star: bool,
    settings: bool,
    tilde: bool,
    trio: bool,
    zb: bool,
    pooled: bool,
    general: bool,
    /// `P(R = 1)` entering `Ṽ`, the trio and the comparison with the
    /// unlabelled-mean estimator.
    p: f64,
}

fn plan_for(truth: &Truth, which: &[BoundId], have_r: bool) -> Plan {
    use BoundId::*;
    let wants = |ids: &[BoundId]| ids.iter().any(|b| which.contains(b));
    let family = &truth.spec.family;
    let sdr = matches!(family, Family::LinearGaussianSurrogateDependentR { .. });
    let constant_rate = truth.label_rate.is_some();
    let p = if have_r { truth.p_label } else { 0.0 };
    Plan {
        star: have_r && wants(&[VStar]),
        settings: have_r && !sdr && wants(&[VI, VII, VIII, VIV, GainIIII, GapIIIIV]),
        tilde: truth.spec.label_depends_on_x_only() && wants(&[VTildeStar, VTilde, TildeGain]),
        trio: have_r && constant_rate && wants(&[McarTrio]),
        zb: have_r && constant_rate && p < 1.0 && wants(&[ZbGap]),
        pooled: have_r && wants(&[VStarPooled]),
        general: sdr && wants(&[GeneralExtension]),
        p,
    }
}

/// Closed-form integrand at `x` (the `POOLED` and `GEN_EXT` columns have none).
fn closed_integrand(truth: &Truth, plan: &Plan, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let delta = truth.delta_star();
    let m = truth.cate(x) - delta;
    let vx = m * m;
    let vs = truth.var_surrogate_signal();
    let s2 = truth.var_outcome_noise();
    let e = truth.e(x);
    let w = 1.0 / e + 1.0 / (1.0 - e);
    out[VX] = vx;
    out[V_S] = vs * w;
    if plan.star {
        out[V_STAR] = vx
            + (vs + s2 * truth.inv_r_mean(true, x)) / e
            + (vs + s2 * truth.inv_r_mean(false, x)) / (1.0 - e);
    }
    if plan.settings {
        let r1 = truth.r_bar(true, x);
        let r0 = truth.r_bar(false, x);
        out[V_I] = vx + (s2 + vs) / (e * r1) + (s2 + vs) / ((1.0 - e) * r0);
        out[V_II] = out[V_I];
        out[V_III] = vx + (s2 / r1 + vs) / e + (s2 / r0 + vs) / (1.0 - e);
        out[V_IV] = vx + (s2 + vs) * w;
        out[GAIN] = vs * ((1.0 - r1) / (e * r1) + (1.0 - r0) / ((1.0 - e) * r0));
        out[GAP] = s2 * ((1.0 - r1) / (e * r1) + (1.0 - r0) / ((1.0 - e) * r0));
    }
    if plan.tilde {
        let lambda = truth.lambda(x);
        out[VT_STAR] = lambda * s2 * w;
        out[VT] = out[VT_STAR] + plan.p * (vx + vs * w);
        out[VT_I] = lambda * (s2 + vs) * w;
        out[GAIN_T] = lambda * vs * w;
    }
    if plan.trio {
        let (a, b, c) = ((s2 + vs) * w, s2 * w, vs * w);
        out[TRIO_I] = a + vx;
        out[TRIO_II] = b + plan.p * (vx + c);
        out[TRIO_III] = b;
        out[TRIO_I_II] = (1.0 - plan.p) * (c + vx);
        out[TRIO_II_III] = plan.p * (c + vx);
    }
    if plan.zb {
        let a = (s2 + vs) * w;
        let p = plan.p;
        out[OUR] = vx + a / p;
        out[ZB] = vx / (1.0 - p) + a / p;
        out[ZB_GAP] = p / (1.0 - p) * vx;
    }
}

fn sq(v: f64) -> f64 {
    v * v
}

/// Squared scores of one full draw. Returns `false` in `mask[j]` for columns
/// that do not receive a value from this draw.
fn mc_integrand(
    truth: &Truth,
    plan: &Plan,
    rng: &mut crate::seeding::Rng,
    out: &mut [f64; WIDTH],
    mask: &mut [bool; WIDTH],
) {
    let d = draw_full(truth, rng);
    let delta = truth.delta_star();
    let x = &d.x;
    let s = d.s();
    let y = d.y();
    let t = d.t;
    *mask = [false; WIDTH];
    let e = truth.e(x);
    let mt1 = truth.mu_tilde(true, x, s);
    let mt0 = truth.mu_tilde(false, x, s);
    let mu1 = truth.mu(true, x);
    let mu0 = truth.mu(false, x);
    let (r1, r0) = if plan.star || plan.settings || plan.pooled || plan.trio || plan.zb {
        (truth.r(true, x, s), truth.r(false, x, s))
    } else {
        (f64::NAN, f64::NAN)
    };
    let nu = NuisanceValues::new(e, r1, r0, mt1, mt0, mu1, mu0);
    let observed = Unit { t, y: d.r.then_some(y) };
    let full = Unit { t, y: Some(y) };

    let parts = score_parts(observed, &nu);
    let m = parts.cate - delta;
    let h = m + parts.imputation;
    out[VX] = m * m;
    out[V_S] = sq(parts.imputation);
    mask[VX] = true;
    mask[V_S] = true;

    if plan.star {
        out[V_STAR] = sq(parts.total() - delta);
        mask[V_STAR] = true;
    }
    // the setting scores cannot fail here: every nuisance is present
    let psi = |kind, unit| setting_parts(kind, unit, &nu).map(|p| p.total() - delta).unwrap();
    if plan.settings {
        let p1 = psi(InfluenceKind::PsiSettingI, observed);
        let p2 = psi(InfluenceKind::PsiSettingII, observed);
        let p3 = psi(InfluenceKind::PsiSettingIII, observed);
        let p4 = psi(InfluenceKind::PsiSettingIV, full);
        out[V_I] = p1 * p1;
        out[V_II] = p2 * p2;
        out[V_III] = p3 * p3;
        out[V_IV] = p4 * p4;
        out[GAIN] = p1 * p1 - p3 * p3;
        out[GAP] = p3 * p3 - p4 * p4;
        mask[V_I..=GAP].iter_mut().for_each(|b| *b = true);
    }
    // labelled-data scores, taken over the whole population with weight 1/λ
    let tilde = |lambda: f64, m1: f64, m0: f64| {
        if t {
            lambda / e * (y - m1)
        } else {
            -(lambda / (1.0 - e) * (y - m0))
        }
    };
    if plan.tilde {
        let lambda = truth.lambda(x);
        let pt = tilde(lambda, mt1, mt0);
        let pt_i = tilde(lambda, mu1, mu0);
        out[VT_STAR] = pt * pt / lambda;
        out[VT] = out[VT_STAR] + plan.p * h * h;
        out[VT_I] = pt_i * pt_i / lambda;
        out[GAIN_T] = out[VT_I] - out[VT_STAR];
        mask[VT_STAR..=GAIN_T].iter_mut().for_each(|b| *b = true);
    }
    if plan.trio {
        let p4 = psi(InfluenceKind::PsiSettingIV, full);
        let pt = tilde(1.0, mt1, mt0);
        out[TRIO_I] = p4 * p4;
        out[TRIO_II] = pt * pt + plan.p * h * h;
        out[TRIO_III] = pt * pt;
        out[TRIO_I_II] = out[TRIO_I] - out[TRIO_II];
        out[TRIO_II_III] = out[TRIO_II] - out[TRIO_III];
        mask[TRIO_I..=TRIO_II_III].iter_mut().for_each(|b| *b = true);
    }
    if plan.zb {
        let p = plan.p;
        let a = tilde(1.0, mu1, mu0);
        let rf = d.r as u8 as f64;
        let our = m + rf * a / p;
        let zb = (1.0 - rf) * m / (1.0 - p) + rf * a / p;
        out[OUR] = our * our;
        out[ZB] = zb * zb;
        out[ZB_GAP] = zb * zb - our * our;
        mask[OUR..=ZB_GAP].iter_mut().for_each(|b| *b = true);
    }
    if plan.pooled {
        let nu_pooled = NuisanceValues {
            mu_tilde_pooled: Some(truth.mu_tilde_pooled(x, s)),
            ..nu
        };
        let pp = setting_parts(InfluenceKind::PsiPooledSurrogate, observed, &nu_pooled)
            .map(|p| p.total() - delta)
            .unwrap();
        out[POOLED] = pp * pp;
        mask[POOLED] = true;
    }
    if plan.general && d.r {
        let lambda = truth.lambda(x);
        let e1 = truth.e_labelled(x);
        let lt = truth.lambda_t(t, x, s);
        let v = if t {
            lambda * lt / e1 * (y - mt1)
        } else {
            -(lambda * lt / (1.0 - e1) * (y - mt0))
        };
        out[GEN_EXT] = v * v;
        mask[GEN_EXT] = true;
    }
}

fn monte_carlo(truth: &Truth, plan: &Plan, budget: usize, seed: u64) -> Vec<RunningMoments> {
    let shards: Vec<Vec<RunningMoments>> = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let n = budget / MC_SHARDS + usize::from(shard < budget % MC_SHARDS);
            let mut rng = rng_from_seed(child_seed(seed, shard as u64, stream::TRUTH));
            let mut acc = vec![RunningMoments::default(); WIDTH];
            let mut out = [0.0; WIDTH];
            let mut mask = [false; WIDTH];
            for _ in 0..n {
                mc_integrand(truth, plan, &mut rng, &mut out, &mut mask);
                for j in 0..WIDTH {
                    if mask[j] {
                        acc[j].push(out[j]);
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![RunningMoments::default(); WIDTH];
    for shard in &shards {
        for (t, s) in total.iter_mut().zip(shard) {
            t.merge(s);
        }
    }
    total
}

/// Computes every requested bound that is defined for the design.
///
/// Bounds that are not defined for the family are left empty: the four
/// information settings need labelling independent of the surrogate, the
/// labelled-data bounds need `R ⊥ (T, S) | X`, the trio and the
/// unlabelled-mean comparison need a constant labelling rate, and the
/// general extension is only reported for surrogate-dependent labelling.
pub fn compute_bounds(req: &BoundRequest) -> Result<BoundSet> {
    if req.mc_budget < MIN_MC_BUDGET {
        return Err(Error::InsufficientBudget {
            got: req.mc_budget,
            min: MIN_MC_BUDGET,
        });
    }
    let truth = match req.sample_size {
        Some(n) => Truth::at_sample_size(&req.spec, n)?,
        None => Truth::new(&req.spec)?,
    };
    let have_r = !matches!(truth.spec.family, Family::VanishingLabelRegime { .. })
        || truth.label_rate.is_some();
    let plan = plan_for(&truth, &req.which, have_r);
    // without a sample size the vanishing regime is evaluated at its
    // zero-rate limit, where no draw is labelled
    let truth = if have_r {
        truth
    } else {
        Truth {
            label_rate: Some(0.0),
            p_label: 0.0,
            ..truth
        }
    };

    let points = (req.mc_budget / QMC_REPLICATES).clamp(1024, 1 << 16);
    let closed = uniform_box_means(
        truth.spec.d_x,
        WIDTH,
        points,
        QMC_REPLICATES,
        child_seed(req.seed, u64::MAX, stream::TRUTH),
        |x, out| closed_integrand(&truth, &plan, x, out),
    );
    let mc = monte_carlo(&truth, &plan, req.mc_budget, req.seed);

    let get = |col: usize, has_closed: bool| -> Result<Option<BoundValue>> {
        let m = mc[col];
        let mcv = (m.n > 1).then(|| {
            let ms = m.mean_se();
            McValue {
                value: ms.mean,
                se: ms.se,
                n_mc: m.n,
            }
        });
        let cf = has_closed.then_some(closed[col]);
        let bv = BoundValue::from_parts(cf, mcv);
        if let Some(b) = &bv {
            check(column_name(col), b)?;
        }
        Ok(bv)
    };

    let mut set = BoundSet {
        label_rate: have_r.then_some(truth.p_label),
        vx: get(VX, true)?,
        v_s: get(V_S, true)?,
        ..Default::default()
    };
    let w = |id: BoundId| req.which.contains(&id);
    if plan.star {
        set.v_star = get(V_STAR, true)?;
    }
    if plan.settings {
        use BoundId::*;
        if w(VI) {
            set.v_i = get(V_I, true)?;
        }
        if w(VII) {
            set.v_ii = get(V_II, true)?;
        }
        if w(VIII) {
            set.v_iii = get(V_III, true)?;
        }
        if w(VIV) {
            set.v_iv = get(V_IV, true)?;
        }
        if w(GainIIII) {
            set.gain_i_iii = get(GAIN, true)?;
        }
        if w(GapIIIIV) {
            set.gap_iii_iv = get(GAP, true)?;
        }
    }
    if plan.tilde {
        set.v_tilde_star = get(VT_STAR, true)?;
        if w(BoundId::VTilde) {
            set.v_tilde = get(VT, true)?;
        }
        if w(BoundId::TildeGain) {
            set.v_tilde_i = get(VT_I, true)?;
            set.gain_tilde_i = get(GAIN_T, true)?;
        }
    }
    if plan.trio {
        set.v_mcar_i = get(TRIO_I, true)?;
        set.v_mcar_ii = get(TRIO_II, true)?;
        set.v_mcar_iii = get(TRIO_III, true)?;
        set.mcar_i_minus_ii = get(TRIO_I_II, true)?;
        set.mcar_ii_minus_iii = get(TRIO_II_III, true)?;
    }
    if plan.zb {
        set.v_our = get(OUR, true)?;
        set.v_zb = get(ZB, true)?;
        set.v_zb_gap = get(ZB_GAP, true)?;
    }
    if plan.pooled {
        set.v_star_pooled = get(POOLED, false)?;
    }
    if plan.general {
        set.general_extension = get(GEN_EXT, false)?;
    }
    Ok(set)
}

fn column_name(col: usize) -> &'static str {
    [
        "vx",
        "v_s",
        "v_star",
        "v_i",
        "v_ii",
        "v_iii",
        "v_iv",
        "gain_i_iii",
        "gap_iii_iv",
        "v_tilde_star",
        "v_tilde",
        "v_tilde_i",
        "gain_tilde_i",
        "v_mcar_i",
        "v_mcar_ii",
        "v_mcar_iii",
        "mcar_i_minus_ii",
        "mcar_ii_minus_iii",
        "v_our",
        "v_zb",
        "v_zb_gap",
        "v_star_pooled",
        "general_extension",
    ][col]
}

fn check(name: &'static str, b: &BoundValue) -> Result<()> {
    let (Some(diff), Some(se)) = (b.discrepancy(), b.combined_se()) else {
        return Ok(());
    };
    let slack = 1e-12 * (1.0 + b.value.abs());
    if diff > SELF_TEST_SE * se + slack {
        return Err(Error::BoundInconsistency {
            bound: name,
            mc: b.monte_carlo.map_or(f64::NAN, |m| m.value),
            closed: b.closed_form.map_or(f64::NAN, |c| c.mean),
            se,
        });
    }
    Ok(())
}
