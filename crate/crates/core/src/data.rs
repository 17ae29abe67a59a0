//! Dataset loading, synthetic generation, splitting and standardisation.
//!
//! LIBSVM text is `label idx:val idx:val …` per line with 1-based,
//! strictly increasing indices; blank lines and `#` comments are skipped.
//! Labels may be `{−1, +1}` or `{0, 1}`. Dense CSV has a header
//! `y,f1,…,fd` and may carry an extra `group` column of `0`/`1` marking the
//! second (unprivileged) group.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DesignMatrix};
use crate::losses::LossKind;
use crate::problem::Problem;
use crate::regularizers::RegularizerSpec;
use crate::weights::WeightScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    File(PathBuf),
    Text,
    Synthetic(SyntheticSpec),
    Split { parent: Box<DataSource>, part: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub x: DesignMatrix,
    /// Labels in `{−1, +1}`.
    pub y: Vec<f64>,
    pub source: DataSource,
    /// `true` marks membership of the second group.
    pub group: Option<Vec<bool>>,
}

impl RawDataset {
    pub fn new(x: DesignMatrix, y: Vec<f64>, source: DataSource, group: Option<Vec<bool>>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Empty("dataset has no samples".into()));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                what: "label vector",
                expected: n,
                got: y.len(),
            });
        }
        if let Some(g) = &group {
            if g.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "group mask",
                    expected: n,
                    got: g.len(),
                });
            }
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::arg("labels must be ±1"));
        }
        if !x.all_finite() {
            return Err(Error::arg("dataset has non-finite features"));
        }
        Ok(Self { x, y, source, group })
    }

    pub fn sample_count(&self) -> usize {
        self.x.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.x.ncols()
    }

    pub fn into_problem(self, loss: LossKind, scheme: WeightScheme, reg: RegularizerSpec) -> Result<Problem> {
        Problem::new(self.x, self.y, loss, scheme, reg)
    }

    pub fn problem(&self, loss: LossKind, scheme: WeightScheme, reg: RegularizerSpec) -> Result<Problem> {
        self.clone().into_problem(loss, scheme, reg)
    }

    pub fn select(&self, rows: &[usize], source: DataSource) -> RawDataset {
        RawDataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            source,
            group: self.group.as_ref().map(|g| rows.iter().map(|&i| g[i]).collect()),
        }
    }
}

/// Maps raw labels onto ±1. Accepts `{−1, +1}` or `{0, 1}` but not a mix of
/// `0` and `−1`.
fn normalize_labels(raw: &[(usize, f64)]) -> Result<Vec<f64>> {
    let has_zero = raw.iter().any(|&(_, v)| v == 0.0);
    let mut out = Vec::with_capacity(raw.len());
    for &(line, v) in raw {
        let y = match v {
            1.0 => 1.0,
            -1.0 if !has_zero => -1.0,
            0.0 => -1.0,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("label {v} is not in {{-1, +1}} or {{0, 1}}"),
                })
            }
        };
        out.push(y);
    }
    Ok(out)
}

pub fn parse_libsvm(text: &str, source: DataSource) -> Result<RawDataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut ncols = 0usize;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let bad = |message: String| Error::Parse { line, message };
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| bad(format!("cannot parse label {label_tok:?}")))?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| bad(format!("expected idx:val, got {tok:?}")))?;
            let i: usize = i.parse().map_err(|_| bad(format!("bad feature index {i:?}")))?;
            if i == 0 {
                return Err(bad("feature indices are 1-based".into()));
            }
            if i <= last {
                return Err(bad(format!("feature index {i} is not increasing")));
            }
            let v: f64 = v.parse().map_err(|_| bad(format!("bad feature value {v:?}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite feature value {v}")));
            }
            last = i;
            ncols = ncols.max(i);
            if v != 0.0 {
                row.push((i - 1, v));
            }
        }
        labels.push((line, label));
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty("LIBSVM input has no samples".into()));
    }
    let y = normalize_labels(&labels)?;
    let x = DesignMatrix::Sparse(CsrMatrix::from_rows(ncols.max(1), rows)?);
    RawDataset::new(x, y, source, None)
}

pub fn load_libsvm(path: &Path) -> Result<RawDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_libsvm(&text, DataSource::File(path.to_path_buf()))
}

/// LIBSVM text for a dataset. Only nonzero entries are written; values use
/// the shortest representation that parses back to the same `f64`.
pub fn libsvm_string(data: &RawDataset) -> String {
    let mut out = String::new();
    for i in 0..data.sample_count() {
        out.push_str(if data.y[i] > 0.0 { "+1" } else { "-1" });
        for j in 0..data.feature_count() {
            let v = data.x.get(i, j);
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v).expect("writing to a String");
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(path: &Path, data: &RawDataset) -> Result<()> {
    std::fs::write(path, libsvm_string(data))?;
    Ok(())
}

pub fn parse_csv(text: &str, source: DataSource) -> Result<RawDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names.first() != Some(&"y") {
        return Err(Error::Parse {
            line: 1,
            message: "first column must be `y`".into(),
        });
    }
    let group_col = names.iter().position(|&c| c == "group");
    let feature_cols: Vec<usize> = (1..names.len()).filter(|&c| Some(c) != group_col).collect();
    for (k, &c) in feature_cols.iter().enumerate() {
        if names[c] != format!("f{}", k + 1) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column f{}, got {:?}", k + 1, names[c]),
            });
        }
    }
    if feature_cols.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no feature columns".into(),
        });
    }
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut group = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let bad = |message: String| Error::Parse { line, message };
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != names.len() {
            return Err(bad(format!("expected {} fields, got {}", names.len(), record.len())));
        }
        let num = |c: usize| -> Result<f64> {
            let f = &record[c];
            let v: f64 = f.parse().map_err(|_| bad(format!("bad number {f:?} in column {}", names[c])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("non-finite value in column {}", names[c])))
            }
        };
        labels.push((line, num(0)?));
        for &c in &feature_cols {
            data.push(num(c)?);
        }
        if let Some(c) = group_col {
            group.push(match &record[c] {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("group must be 0 or 1, got {other:?}"))),
            });
        }
    }
    if labels.is_empty() {
        return Err(Error::Empty("CSV input has no samples".into()));
    }
    let y = normalize_labels(&labels)?;
    let x = DesignMatrix::dense(labels.len(), feature_cols.len(), data)?;
    RawDataset::new(x, y, source, group_col.map(|_| group))
}

pub fn load_csv(path: &Path) -> Result<RawDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, DataSource::File(path.to_path_buf()))
}

/// Picks the loader from the file extension: `.csv` is dense CSV, anything
/// else LIBSVM.
pub fn load_dataset(path: &Path) -> Result<RawDataset> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => load_csv(path),
        _ => load_libsvm(path),
    }
}

pub fn csv_string(data: &RawDataset) -> String {
    let mut out = String::from("y");
    for j in 0..data.feature_count() {
        write!(out, ",f{}", j + 1).expect("writing to a String");
    }
    if data.group.is_some() {
        out.push_str(",group");
    }
    out.push('\n');
    for i in 0..data.sample_count() {
        write!(out, "{}", data.y[i]).expect("writing to a String");
        for j in 0..data.feature_count() {
            write!(out, ",{}", data.x.get(i, j)).expect("writing to a String");
        }
        if let Some(g) = &data.group {
            write!(out, ",{}", u8::from(g[i])).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    /// Share of the features carrying class signal; at least one does.
    pub informative_fraction: f64,
    pub class_sep: f64,
    pub flip_fraction: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            informative_fraction: 0.5,
            class_sep: 1.0,
            flip_fraction: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::param("synthetic data needs n ≥ 1 and d ≥ 1"));
        }
        if !(0.0..=1.0).contains(&self.informative_fraction) {
            return Err(Error::param("informative_fraction must lie in [0, 1]"));
        }
        if !(self.class_sep.is_finite() && self.class_sep >= 0.0) {
            return Err(Error::param("class_sep must be finite and nonnegative"));
        }
        if !(0.0..0.5).contains(&self.flip_fraction) {
            return Err(Error::param("flip_fraction must lie in [0, 0.5)"));
        }
        Ok(())
    }

    pub fn informative(&self) -> usize {
        ((self.informative_fraction * self.d as f64).round() as usize).clamp(1, self.d)
    }
}

/// Two Gaussian classes with unit covariance centred at `±class_sep·u`,
/// `u` a random unit vector supported on the first `informative()`
/// features. Labels are fair coin flips; afterwards exactly
/// `round(flip_fraction·n)` randomly chosen labels are inverted.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<RawDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.informative();
    let mut u: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let nu = crate::linalg::norm(&u);
    if nu == 0.0 {
        u[0] = 1.0;
    } else {
        u.iter_mut().for_each(|v| *v /= nu);
    }
    let mut data = Vec::with_capacity(spec.n * spec.d);
    let mut y = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
        for j in 0..spec.d {
            let noise: f64 = rng.sample(StandardNormal);
            let centre = u.get(j).map_or(0.0, |uj| label * spec.class_sep * uj);
            data.push(centre + noise);
        }
        y.push(label);
    }
    let flips = (spec.flip_fraction * spec.n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..spec.n).collect();
    idx.shuffle(&mut rng);
    for &i in &idx[..flips] {
        y[i] = -y[i];
    }
    let x = DesignMatrix::dense(spec.n, spec.d, data)?;
    RawDataset::new(x, y, DataSource::Synthetic(spec.clone()), None)
}

/// Seeded random group mask with each sample in the second group with
/// probability `share`.
pub fn random_group_mask(n: usize, share: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>() < share).collect()
}

/// Index sets of a seeded shuffle cut into contiguous slices. Cut points
/// are `round(n·(f_1 + … + f_j))`, so part sizes always add up to `n`.
pub fn split_indices(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(Error::param("split fractions must be nonnegative and finite"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("split fractions sum to {total}, not 1")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = Vec::with_capacity(fractions.len());
    let mut acc = 0.0;
    let mut start = 0;
    for (j, f) in fractions.iter().enumerate() {
        acc += f;
        let end = if j + 1 == fractions.len() {
            n
        } else {
            ((acc * n as f64).round() as usize).clamp(start, n)
        };
        parts.push(idx[start..end].to_vec());
        start = end;
    }
    Ok(parts)
}

pub fn split(data: &RawDataset, fractions: &[f64], seed: u64) -> Result<Vec<RawDataset>> {
    let parts = split_indices(data.sample_count(), fractions, seed)?;
    Ok(parts
        .iter()
        .enumerate()
        .map(|(part, rows)| {
            data.select(
                rows,
                DataSource::Split {
                    parent: Box::new(data.source.clone()),
                    part,
                },
            )
        })
        .collect())
}

/// Per-feature affine map fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation, or 1 for zero-variance features.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &RawDataset) -> Result<Self> {
        let n = train.sample_count();
        let d = train.feature_count();
        if n == 0 {
            return Err(Error::Empty("cannot standardise an empty training set".into()));
        }
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| train.x.get(i, j)).collect();
            if col.iter().all(|&v| v == col[0]) {
                mean[j] = col[0];
                continue;
            }
            let mu = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            mean[j] = mu;
            let sd = var.sqrt();
            if sd > 1e-12 * mu.abs().max(1.0) {
                scale[j] = sd;
            }
        }
        Ok(Self { mean, scale })
    }

    /// Applies the map; the result is always dense.
    pub fn apply(&self, data: &RawDataset) -> Result<RawDataset> {
        let d = data.feature_count();
        if d != self.mean.len() {
            return Err(Error::DimensionMismatch {
                what: "feature count",
                expected: self.mean.len(),
                got: d,
            });
        }
        let n = data.sample_count();
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                out.push((data.x.get(i, j) - self.mean[j]) / self.scale[j]);
            }
        }
        Ok(RawDataset {
            x: DesignMatrix::dense(n, d, out)?,
            y: data.y.clone(),
            source: data.source.clone(),
            group: data.group.clone(),
        })
    }
}

/// Standardises `train` and every dataset in `others` with statistics from
/// `train` alone.
pub fn standardize(train: &RawDataset, others: &[RawDataset]) -> Result<(RawDataset, Vec<RawDataset>)> {
    let st = Standardizer::fit(train)?;
    let t = st.apply(train)?;
    let rest = others.iter().map(|o| st.apply(o)).collect::<Result<Vec<_>>>()?;
    Ok((t, rest))
}
