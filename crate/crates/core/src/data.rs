//! Observations, datasets, fold assignments and estimate reports.
//!
//! A dataset is stored column-wise. The primary outcome is an `Option`, so the
//! labelling indicator is structural: a unit is labelled exactly when its
//! outcome is present.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::seeding::rng_from_seed;

/// One unit's record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub t: bool,
    pub s: Vec<f64>,
    /// Present exactly when the unit is labelled.
    pub y: Option<f64>,
}

impl Observation {
    pub fn r(&self) -> bool {
        self.y.is_some()
    }
}

/// Borrowed view of one unit inside a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitRef<'a> {
    pub x: &'a [f64],
    pub t: bool,
    pub s: &'a [f64],
    pub y: Option<f64>,
}

impl UnitRef<'_> {
    pub fn r(&self) -> bool {
        self.y.is_some()
    }

    pub fn to_owned(&self) -> Observation {
        Observation {
            x: self.x.to_vec(),
            t: self.t,
            s: self.s.to_vec(),
            y: self.y,
        }
    }
}

/// An ordered collection of units sharing covariate and surrogate dimensions.
/// Unit order is significant; every per-unit output is index-aligned to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d_x: usize,
    d_s: usize,
    x: Vec<f64>,
    t: Vec<bool>,
    s: Vec<f64>,
    y: Vec<Option<f64>>,
}

/// `(N, N_l, N_u, r̂_N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub n: usize,
    pub n_labelled: usize,
    pub n_unlabelled: usize,
    pub r_hat: f64,
}

impl Dataset {
    /// An empty dataset with the given dimensions, to be filled with [`Dataset::push`].
    pub fn with_dims(d_x: usize, d_s: usize) -> Result<Self> {
        if d_x == 0 || d_s == 0 {
            return Err(Error::InvalidInput(format!(
                "d_x and d_s must be at least 1 (got d_x = {d_x}, d_s = {d_s})"
            )));
        }
        Ok(Dataset {
            d_x,
            d_s,
            x: Vec::new(),
            t: Vec::new(),
            s: Vec::new(),
            y: Vec::new(),
        })
    }

    pub fn with_capacity(d_x: usize, d_s: usize, n: usize) -> Result<Self> {
        let mut ds = Self::with_dims(d_x, d_s)?;
        ds.x.reserve(n * d_x);
        ds.s.reserve(n * d_s);
        ds.t.reserve(n);
        ds.y.reserve(n);
        Ok(ds)
    }

    pub fn from_observations(obs: &[Observation]) -> Result<Self> {
        let first = obs.first().ok_or(Error::EmptyDataset)?;
        let mut ds = Self::with_capacity(first.x.len(), first.s.len(), obs.len())?;
        for o in obs {
            ds.push(&o.x, o.t, &o.s, o.y)?;
        }
        Ok(ds)
    }

    /// Appends a unit, checking dimensions and finiteness.
    pub fn push(&mut self, x: &[f64], t: bool, s: &[f64], y: Option<f64>) -> Result<()> {
        let index = self.len();
        if x.len() != self.d_x || s.len() != self.d_s {
            return Err(Error::InvalidInput(format!(
                "unit {index}: expected d_x = {}, d_s = {}, got {} and {}",
                self.d_x,
                self.d_s,
                x.len(),
                s.len()
            )));
        }
        if x.iter().chain(s).chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("unit {index}: non-finite value")));
        }
        self.x.extend_from_slice(x);
        self.t.push(t);
        self.s.extend_from_slice(s);
        self.y.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.d_x..(i + 1) * self.d_x]
    }

    #[inline]
    pub fn s(&self, i: usize) -> &[f64] {
        &self.s[i * self.d_s..(i + 1) * self.d_s]
    }

    #[inline]
    pub fn t(&self, i: usize) -> bool {
        self.t[i]
    }

    #[inline]
    pub fn y(&self, i: usize) -> Option<f64> {
        self.y[i]
    }

    #[inline]
    pub fn r(&self, i: usize) -> bool {
        self.y[i].is_some()
    }

    pub fn unit(&self, i: usize) -> UnitRef<'_> {
        UnitRef {
            x: self.x(i),
            t: self.t[i],
            s: self.s(i),
            y: self.y[i],
        }
    }

    pub fn units(&self) -> impl Iterator<Item = UnitRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.unit(i))
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.units().map(|u| u.to_owned()).collect()
    }

    pub fn labelled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.r(i)).collect()
    }

    pub fn unlabelled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.r(i)).collect()
    }

    pub fn n_labelled(&self) -> usize {
        self.y.iter().filter(|y| y.is_some()).count()
    }

    /// Returns a copy with every outcome set to `None`; used when an outcome
    /// column must be hidden from a learner.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::with_capacity(self.d_x, self.d_s, indices.len())
            .expect("dimensions already validated");
        for &i in indices {
            out.x.extend_from_slice(self.x(i));
            out.s.extend_from_slice(self.s(i));
            out.t.push(self.t[i]);
            out.y.push(self.y[i]);
        }
        out
    }
}

/// Sample-size summary of a dataset.
pub fn dataset_split_counts(dataset: &Dataset) -> Result<SplitCounts> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = dataset.len();
    let n_labelled = dataset.n_labelled();
    Ok(SplitCounts {
        n,
        n_labelled,
        n_unlabelled: n - n_labelled,
        r_hat: n_labelled as f64 / n as f64,
    })
}

/// Stratified K-fold partition. Fold ids are `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

impl FoldAssignment {
    /// Units whose fold is `fold`, in dataset order.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    /// Units outside `fold`, in dataset order.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }
}

/// Randomly partitions labelled and unlabelled units separately into `k`
/// near-equal folds. The partition is a pure function of
/// `(dataset order, k, seed)`.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be at least 2, got {k}")));
    }
    let mut labelled = dataset.labelled_indices();
    if labelled.len() < k {
        return Err(Error::TooFewLabelled {
            labelled: labelled.len(),
            k,
        });
    }
    let mut unlabelled = dataset.unlabelled_indices();
    let mut rng = rng_from_seed(seed);
    labelled.shuffle(&mut rng);
    unlabelled.shuffle(&mut rng);

    let mut fold_of = vec![0; dataset.len()];
    for (pos, &i) in labelled.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    // continue the round robin where the labelled stratum stopped so the
    // overall fold sizes stay balanced too
    let offset = labelled.len() % k;
    for (pos, &i) in unlabelled.iter().enumerate() {
        fold_of[i] = (pos + offset) % k;
    }
    Ok(FoldAssignment { k, fold_of, seed })
}

/// Normalisation the reported variance refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    /// Variance of `√N (δ̂ − δ*)`.
    SqrtN,
    /// Variance of `√N_l (δ̂ − δ*)`.
    SqrtNl,
}

/// Output of one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub delta_hat: f64,
    pub variance_hat: f64,
    pub scale: Scale,
    pub ci: [f64; 2],
    pub alpha: f64,
    pub n: usize,
    pub n_l: usize,
    /// Plug-in influence values `ψ(W_i; δ̂, η̂_{k(i)})`, index-aligned with the dataset.
    #[serde(skip)]
    pub influence_values: Vec<f64>,
}

impl EstimateReport {
    pub fn ci_low(&self) -> f64 {
        self.ci[0]
    }

    pub fn ci_high(&self) -> f64 {
        self.ci[1]
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci[0] <= value && value <= self.ci[1]
    }

    pub fn effective_n(&self) -> usize {
        match self.scale {
            Scale::SqrtN => self.n,
            Scale::SqrtNl => self.n_l,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

// ---------------------------------------------------------------------------
// File formats

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the `x1..xdx,t,s1..sds,r,y` CSV layout; `y` is empty when `r = 0`.
pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=dataset.d_x()).map(|j| format!("x{j}")).collect();
    header.push("t".into());
    header.extend((1..=dataset.d_s()).map(|j| format!("s{j}")));
    header.push("r".into());
    header.push("y".into());
    w.write_record(&header)?;
    for u in dataset.units() {
        let mut rec: Vec<String> = u.x.iter().map(|&v| fmt_real(v)).collect();
        rec.push(if u.t { "1" } else { "0" }.into());
        rec.extend(u.s.iter().map(|&v| fmt_real(v)));
        rec.push(if u.r() { "1" } else { "0" }.into());
        rec.push(u.y.map(fmt_real).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_binary(field: &str, name: &str, line: usize) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            line,
            message: format!("column `{name}` must be 0 or 1, got `{other}`"),
        }),
    }
}

fn parse_real(field: &str, name: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("column `{name}`: {e}"),
    })
}

fn check_outcome(r: bool, y: Option<f64>, line: usize) -> Result<Option<f64>> {
    match (r, y) {
        (true, Some(v)) => Ok(Some(v)),
        (false, None) => Ok(None),
        (true, None) => Err(Error::Parse {
            line,
            message: "r = 1 but y is missing".into(),
        }),
        (false, Some(_)) => Err(Error::Parse {
            line,
            message: "r = 0 but y is recorded".into(),
        }),
    }
}

/// Reads the CSV layout written by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let t_pos = header
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing `t` column".into(),
        })?;
    let d_x = t_pos;
    let d_s = header.len().saturating_sub(t_pos + 3);
    let mut expected: Vec<String> = (1..=d_x).map(|j| format!("x{j}")).collect();
    expected.push("t".into());
    expected.extend((1..=d_s).map(|j| format!("s{j}")));
    expected.push("r".into());
    expected.push("y".into());
    if header != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be `{}`", expected.join(",")),
        });
    }
    let mut ds = Dataset::with_dims(d_x, d_s)?;
    let mut x = vec![0.0; d_x];
    let mut s = vec![0.0; d_s];
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", header.len(), rec.len()),
            });
        }
        for j in 0..d_x {
            x[j] = parse_real(&rec[j], &header[j], line)?;
        }
        let t = parse_binary(&rec[d_x], "t", line)?;
        for j in 0..d_s {
            s[j] = parse_real(&rec[d_x + 1 + j], &header[d_x + 1 + j], line)?;
        }
        let r = parse_binary(&rec[d_x + 1 + d_s], "r", line)?;
        let y_field = rec[d_x + 2 + d_s].trim();
        let y = if y_field.is_empty() {
            None
        } else {
            Some(parse_real(y_field, "y", line)?)
        };
        let y = check_outcome(r, y, line)?;
        ds.push(&x, t, &s, y).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(ds)
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    x: Vec<f64>,
    t: u8,
    s: Vec<f64>,
    r: u8,
    y: Option<f64>,
}

/// Writes one JSON object per unit with an explicit `null` outcome when unlabelled.
pub fn write_jsonl<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    for u in dataset.units() {
        let row = JsonRow {
            x: u.x.to_vec(),
            t: u.t as u8,
            s: u.s.to_vec(),
            r: u.r() as u8,
            y: u.y,
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: Read>(input: R) -> Result<Dataset> {
    let mut ds: Option<Dataset> = None;
    for (row, line) in BufReader::new(input).lines().enumerate() {
        let line_no = row + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let bin = |v: u8, name: &str| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::Parse {
                line: line_no,
                message: format!("`{name}` must be 0 or 1"),
            }),
        };
        let t = bin(rec.t, "t")?;
        let r = bin(rec.r, "r")?;
        let y = check_outcome(r, rec.y, line_no)?;
        let ds = match &mut ds {
            Some(ds) => ds,
            None => ds.insert(Dataset::with_dims(rec.x.len(), rec.s.len())?),
        };
        ds.push(&rec.x, t, &rec.s, y).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
    }
    ds.ok_or(Error::EmptyDataset)
}

/// Loads a dataset, choosing the format from the file extension
/// (`.jsonl` / `.ndjson` → JSON lines, anything else → CSV).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => read_jsonl(file),
        _ => read_csv(file),
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => write_jsonl(dataset, file),
        _ => write_csv(dataset, file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(labelled: usize, unlabelled: usize) -> Dataset {
        let mut ds = Dataset::with_dims(1, 1).unwrap();
        for i in 0..labelled + unlabelled {
            let y = (i < labelled).then_some(i as f64);
            ds.push(&[i as f64 / 10.0], i % 2 == 0, &[1.0], y).unwrap();
        }
        ds
    }

    #[test]
    fn split_counts_examples() {
        let c = dataset_split_counts(&toy(3, 1)).unwrap();
        assert_eq!((c.n, c.n_labelled, c.n_unlabelled, c.r_hat), (4, 3, 1, 0.75));
        assert_eq!(dataset_split_counts(&toy(5, 0)).unwrap().r_hat, 1.0);
        let c = dataset_split_counts(&toy(10, 990)).unwrap();
        assert_eq!((c.n, c.n_labelled, c.n_unlabelled, c.r_hat), (1000, 10, 990, 0.01));
    }

    #[test]
    fn split_counts_rejects_empty() {
        let ds = Dataset::with_dims(1, 1).unwrap();
        assert!(matches!(dataset_split_counts(&ds), Err(Error::EmptyDataset)));
    }

    #[test]
    fn push_rejects_bad_units() {
        let mut ds = Dataset::with_dims(2, 1).unwrap();
        assert!(ds.push(&[1.0], false, &[0.0], None).is_err());
        assert!(ds.push(&[1.0, f64::NAN], false, &[0.0], None).is_err());
        assert!(ds.push(&[1.0, 0.0], false, &[0.0], Some(f64::INFINITY)).is_err());
        assert!(Dataset::with_dims(0, 1).is_err());
    }

    #[test]
    fn folds_are_stratified() {
        let ds = toy(100, 100);
        let f = make_folds(&ds, 5, 11).unwrap();
        for k in 0..5 {
            let m = f.members(k);
            let l = m.iter().filter(|&&i| ds.r(i)).count();
            assert!((19..=21).contains(&l));
            assert!((19..=21).contains(&(m.len() - l)));
        }
        assert_eq!(f, make_folds(&ds, 5, 11).unwrap());
    }

    #[test]
    fn uneven_labelled_split() {
        let ds = toy(7, 3);
        let f = make_folds(&ds, 2, 3).unwrap();
        let mut sizes: Vec<usize> = (0..2)
            .map(|k| f.members(k).iter().filter(|&&i| ds.r(i)).count())
            .collect();
        sizes.sort();
        assert_eq!(sizes, vec![3, 4]);
    }

    #[test]
    fn fold_errors() {
        let ds = toy(3, 10);
        assert!(matches!(make_folds(&ds, 1, 0), Err(Error::InvalidInput(_))));
        assert!(matches!(
            make_folds(&ds, 4, 0),
            Err(Error::TooFewLabelled { labelled: 3, k: 4 })
        ));
    }

    #[test]
    fn csv_rejects_contradictory_rows() {
        let bad = "x1,t,s1,r,y\n0.5,1,0.1,0,2.0\n";
        assert!(matches!(read_csv(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad = "x1,t,s1,r,y\n0.5,1,0.1,1,\n";
        assert!(matches!(read_csv(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad = "x1,t,s1,r,z\n0.5,1,0.1,1,1\n";
        assert!(read_csv(bad.as_bytes()).is_err());
        let bad = "x1,t,s1,r,y\n0.5,2,0.1,1,1\n";
        assert!(read_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn jsonl_uses_explicit_null() {
        let ds = toy(1, 1);
        let mut buf = Vec::new();
        write_jsonl(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("\"y\":null"));
        let bad = r#"{"x":[0.1],"t":1,"s":[0.2],"r":0,"y":1.0}"#;
        assert!(read_jsonl(bad.as_bytes()).is_err());
    }

    fn arb_dataset() -> impl Strategy<Value = Vec<Observation>> {
        let unit = (
            prop::collection::vec(-1e300..1e300_f64, 2),
            any::<bool>(),
            prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1),
            prop::option::of(prop::num::f64::NORMAL),
        )
            .prop_map(|(x, t, s, y)| Observation { x, t, s, y });
        prop::collection::vec(unit, 1..40)
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(obs in arb_dataset()) {
            let ds = Dataset::from_observations(&obs).unwrap();
            let mut buf = Vec::new();
            write_csv(&ds, &mut buf).unwrap();
            let back = read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.observations().len(), obs.len());
            for (a, b) in back.units().zip(ds.units()) {
                prop_assert!(a.x.iter().zip(b.x).all(|(p, q)| p.to_bits() == q.to_bits()));
                prop_assert!(a.s.iter().zip(b.s).all(|(p, q)| p.to_bits() == q.to_bits()));
                prop_assert_eq!(a.y.map(f64::to_bits), b.y.map(f64::to_bits));
                prop_assert_eq!(a.t, b.t);
            }
        }

        #[test]
        fn jsonl_round_trip(obs in arb_dataset()) {
            let ds = Dataset::from_observations(&obs).unwrap();
            let mut buf = Vec::new();
            write_jsonl(&ds, &mut buf).unwrap();
            prop_assert_eq!(read_jsonl(buf.as_slice()).unwrap(), ds);
        }

        #[test]
        fn folds_partition_units(nl in 2usize..60, nu in 0usize..60, k in 2usize..6, seed in any::<u64>()) {
            prop_assume!(nl >= k);
            let ds = toy(nl, nu);
            let f = make_folds(&ds, k, seed).unwrap();
            let mut seen = vec![0usize; ds.len()];
            for fold in 0..k {
                let m = f.members(fold);
                let l = m.iter().filter(|&&i| ds.r(i)).count() as f64;
                let u = m.len() as f64 - l;
                prop_assert!((l - nl as f64 / k as f64).abs() <= 1.0);
                prop_assert!((u - nu as f64 / k as f64).abs() <= 1.0);
                prop_assert!(l >= 1.0);
                for i in m { seen[i] += 1; }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
