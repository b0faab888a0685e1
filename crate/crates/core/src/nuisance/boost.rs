use serde::Serialize;

use super::{Features, Predictor};
use crate::scalar::sigmoid;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

/// Additive ensemble `base + Σ stumps`, optionally passed through the logistic link.
#[derive(Debug, Clone, Serialize)]
pub struct StumpEnsemble {
    pub base: f64,
    pub stumps: Vec<Stump>,
    pub logistic: bool,
}

impl StumpEnsemble {
    pub fn raw(&self, z: &[f64]) -> f64 {
        self.stumps.iter().fold(self.base, |acc, s| {
            acc + if z[s.feature] <= s.threshold { s.left } else { s.right }
        })
    }
}

impl Predictor for StumpEnsemble {
    fn predict(&self, z: &[f64]) -> f64 {
        let f = self.raw(z);
        if self.logistic {
            sigmoid(f)
        } else {
            f
        }
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or_default()
    }
}

/// Candidate thresholds per feature (empirical quantiles, deduplicated) and
/// each row's bin: `bin = #{thresholds < value}`, so `value ≤ thr[j] ⇔ bin ≤ j`.
struct Binned {
    thresholds: Vec<Vec<f64>>,
    bins: Vec<Vec<u16>>,
}

fn bin_features(f: &Features, count: usize) -> Binned {
    let mut thresholds = Vec::with_capacity(f.cols);
    let mut bins = Vec::with_capacity(f.cols);
    for j in 0..f.cols {
        let mut col: Vec<f64> = (0..f.rows).map(|i| f.row(i)[j]).collect();
        let unsorted = col.clone();
        col.sort_by(f64::total_cmp);
        let mut thr: Vec<f64> = (1..=count)
            .map(|q| col[((q * f.rows) / (count + 1)).min(f.rows - 1)])
            .collect();
        thr.dedup();
        // a split at the maximum sends everything left
        if thr.last() == col.last() {
            thr.pop();
        }
        let b = unsorted
            .iter()
            .map(|v| thr.partition_point(|t| t < v) as u16)
            .collect();
        thresholds.push(thr);
        bins.push(b);
    }
    Binned { thresholds, bins }
}

/// Finds the split maximising `G_L²/H_L + G_R²/H_R` over all features and
/// thresholds, where `g` are gradients and `h` curvature weights.
fn best_split(binned: &Binned, g: &[f64], h: &[f64], reg: f64) -> Option<Stump> {
    let mut best: Option<(f64, Stump)> = None;
    let g_tot: f64 = g.iter().sum();
    let h_tot: f64 = h.iter().sum();
    for (j, thr) in binned.thresholds.iter().enumerate() {
        if thr.is_empty() {
            continue;
        }
        let nb = thr.len() + 1;
        let mut gs = vec![0.0; nb];
        let mut hs = vec![0.0; nb];
        for (i, &b) in binned.bins[j].iter().enumerate() {
            gs[b as usize] += g[i];
            hs[b as usize] += h[i];
        }
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..thr.len() {
            gl += gs[k];
            hl += hs[k];
            let (gr, hr) = (g_tot - gl, h_tot - hl);
            if hl <= 0.0 || hr <= 0.0 {
                continue;
            }
            let gain = gl * gl / (hl + reg) + gr * gr / (hr + reg);
            if best.as_ref().is_none_or(|(b, _)| gain > *b) {
                best = Some((
                    gain,
                    Stump {
                        feature: j,
                        threshold: thr[k],
                        left: gl / (hl + reg),
                        right: gr / (hr + reg),
                    },
                ));
            }
        }
    }
    best.map(|(_, s)| s)
}

fn boost(
    f: &Features,
    mut base: f64,
    rounds: usize,
    learning_rate: f64,
    stumps_per_round: usize,
    thresholds: usize,
    logistic: bool,
    target: impl Fn(usize) -> f64,
) -> StumpEnsemble {
    let binned = bin_features(f, thresholds);
    let n = f.rows;
    if !base.is_finite() {
        base = 0.0;
    }
    let mut fx = vec![base; n];
    let mut g = vec![0.0; n];
    let mut h = vec![1.0; n];
    let mut stumps = Vec::with_capacity(rounds * stumps_per_round);
    let reg = if logistic { 1e-6 } else { 0.0 };
    'outer: for _ in 0..rounds {
        for _ in 0..stumps_per_round {
            for i in 0..n {
                if logistic {
                    let p = sigmoid(fx[i]);
                    g[i] = target(i) - p;
                    h[i] = p * (1.0 - p);
                } else {
                    g[i] = target(i) - fx[i];
                }
            }
            let Some(mut s) = best_split(&binned, &g, &h, reg) else {
                break 'outer;
            };
            s.left *= learning_rate;
            s.right *= learning_rate;
            for i in 0..n {
                fx[i] += if binned.bins[s.feature][i] as usize <= threshold_index(&binned, &s) {
                    s.left
                } else {
                    s.right
                };
            }
            stumps.push(s);
        }
    }
    StumpEnsemble {
        base,
        stumps,
        logistic,
    }
}

fn threshold_index(binned: &Binned, s: &Stump) -> usize {
    binned.thresholds[s.feature].partition_point(|t| *t < s.threshold)
}

/// L2 boosting of stumps starting from the target mean.
pub fn fit_boosted_regression(
    f: &Features,
    y: &[f64],
    rounds: usize,
    learning_rate: f64,
    stumps_per_round: usize,
    thresholds: usize,
) -> StumpEnsemble {
    let base = y.iter().sum::<f64>() / y.len() as f64;
    boost(f, base, rounds, learning_rate, stumps_per_round, thresholds, false, |i| y[i])
}

/// Newton (logit) boosting of stumps starting from the log-odds of the base rate.
pub fn fit_boosted_classifier(
    f: &Features,
    labels: &[bool],
    rounds: usize,
    learning_rate: f64,
    stumps_per_round: usize,
    thresholds: usize,
) -> StumpEnsemble {
    let rate = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
    let base = (rate / (1.0 - rate)).ln();
    boost(f, base, rounds, learning_rate, stumps_per_round, thresholds, true, |i| {
        labels[i] as u8 as f64
    })
}
