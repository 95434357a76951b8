//! Sparse examples, LIBSVM text I/O, row normalization and synthetic problems.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// One training example: a sparse feature vector and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseExample {
    indices: Vec<usize>,
    values: Vec<f64>,
    label: f64,
}

impl SparseExample {
    /// Builds an example, rejecting unsorted indices, length mismatches and stored zeros.
    pub fn new(indices: Vec<usize>, values: Vec<f64>, label: f64) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidData(format!("{} indices but {} values", indices.len(), values.len())));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidData("feature indices must be strictly increasing".into()));
        }
        if values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(Error::InvalidData("stored feature values must be finite and non-zero".into()));
        }
        if !label.is_finite() {
            return Err(Error::InvalidData("label must be finite".into()));
        }
        Ok(SparseExample { indices, values, label })
    }

    /// Builds an example from a dense row, dropping exact zeros.
    pub fn from_dense(row: &[f64], label: f64) -> Result<Self> {
        let (indices, values) =
            row.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, &v)| (j, v)).unzip();
        Self::new(indices, values, label)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> f64 {
        self.label
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Inner product with a dense vector, summed in index order.
    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&j, &v)| v * x[j]).sum()
    }

    /// `out += scale * a`
    #[inline]
    pub fn axpy(&self, scale: f64, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] += scale * v;
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut row = vec![0.0; dim];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            row[j] = v;
        }
        row
    }

    fn with_label(&self, label: f64) -> Self {
        SparseExample { indices: self.indices.clone(), values: self.values.clone(), label }
    }
}

/// An immutable collection of examples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<SparseExample>,
    dim: usize,
}

/// Label type of a synthetic problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

impl Dataset {
    pub fn new(examples: Vec<SparseExample>, dim: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidData("empty dataset".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidData("feature dimension must be at least 1".into()));
        }
        for (row, ex) in examples.iter().enumerate() {
            if let Some(&last) = ex.indices.last() {
                if last >= dim {
                    return Err(Error::InvalidData(format!(
                        "row {row}: feature index {last} outside dimension {dim}"
                    )));
                }
            }
        }
        Ok(Dataset { examples, dim })
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[SparseExample] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &SparseExample {
        &self.examples[i]
    }

    pub fn labels(&self) -> impl Iterator<Item = f64> + '_ {
        self.examples.iter().map(|e| e.label)
    }

    /// Parses LIBSVM text (`<label> <idx>:<val> ...`, 1-based indices).
    ///
    /// Blank lines and `#` comments are skipped. A declared dimension overrides the
    /// inferred one and any index beyond it is an error.
    pub fn parse_libsvm<R: BufRead>(reader: R, declared_dim: Option<usize>) -> Result<Self> {
        if declared_dim == Some(0) {
            return Err(Error::Parameter("declared dimension must be positive".into()));
        }
        let mut examples = Vec::new();
        let mut inferred = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
            let content = match line.find('#') {
                Some(pos) => &line[..pos],
                None => &line[..],
            };
            let mut tokens = content.split_whitespace();
            let Some(label_tok) = tokens.next() else { continue };
            let parse_err = |message: String| Error::Parse { line: lineno, message };
            let label: f64 = label_tok
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(format!("bad label `{label_tok}`")))?;
            let mut indices = Vec::new();
            let mut values = Vec::new();
            let mut prev: Option<usize> = None;
            for tok in tokens {
                let (idx_s, val_s) =
                    tok.split_once(':').ok_or_else(|| parse_err(format!("malformed token `{tok}`")))?;
                let idx: usize =
                    idx_s.parse().map_err(|_| parse_err(format!("bad feature index `{idx_s}`")))?;
                if idx == 0 {
                    return Err(parse_err("feature indices are 1-based; found 0".into()));
                }
                let val: f64 = val_s
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| parse_err(format!("bad feature value `{val_s}`")))?;
                if let Some(p) = prev {
                    if idx <= p {
                        return Err(parse_err(format!("feature indices not increasing ({p} then {idx})")));
                    }
                }
                if let Some(d) = declared_dim {
                    if idx > d {
                        return Err(parse_err(format!("feature index {idx} exceeds declared dimension {d}")));
                    }
                }
                prev = Some(idx);
                inferred = inferred.max(idx);
                if val != 0.0 {
                    indices.push(idx - 1);
                    values.push(val);
                }
            }
            examples.push(SparseExample { indices, values, label });
        }
        let dim = declared_dim.unwrap_or(inferred.max(1));
        Dataset::new(examples, dim)
    }

    pub fn from_libsvm_str(text: &str, declared_dim: Option<usize>) -> Result<Self> {
        Self::parse_libsvm(text.as_bytes(), declared_dim)
    }

    pub fn from_libsvm_file(path: &std::path::Path, declared_dim: Option<usize>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_libsvm(std::io::BufReader::new(file), declared_dim)
    }

    /// Serializes to LIBSVM text with shortest round-trip float formatting.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            let _ = write!(out, "{}", ex.label);
            for (&j, &v) in ex.indices.iter().zip(&ex.values) {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
            out.push('\n');
        }
        out
    }

    /// Scales every row to unit Euclidean norm.
    pub fn normalize_rows(&self) -> Result<Self> {
        let mut examples = Vec::with_capacity(self.n());
        for (row, ex) in self.examples.iter().enumerate() {
            let norm = ex.squared_norm().sqrt();
            if norm == 0.0 {
                return Err(Error::InvalidData(format!("row {row} is all-zero and cannot be normalized")));
            }
            let values = ex.values.iter().map(|v| v / norm).collect();
            examples.push(SparseExample { indices: ex.indices.clone(), values, label: ex.label });
        }
        Ok(Dataset { examples, dim: self.dim })
    }

    /// Draws `k` distinct examples uniformly without replacement.
    pub fn subsample(&self, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > self.n() {
            return Err(Error::Parameter(format!("subsample size {k} must be in [1, {}]", self.n())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = index::sample(&mut rng, self.n(), k);
        let examples = picked.iter().map(|i| self.examples[i].clone()).collect();
        Ok(Dataset { examples, dim: self.dim })
    }

    /// Random train/test partition; the training part gets `ceil(fraction * n)` examples.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Parameter(format!("train fraction {train_fraction} must lie in (0, 1)")));
        }
        let n = self.n();
        if n < 2 {
            return Err(Error::Parameter("need at least two examples to split".into()));
        }
        let n_train = ((train_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perm = index::sample(&mut rng, n, n);
        let pick = |ids: &[usize]| Dataset {
            examples: ids.iter().map(|&i| self.examples[i].clone()).collect(),
            dim: self.dim,
        };
        let perm = perm.into_vec();
        Ok((pick(&perm[..n_train]), pick(&perm[n_train..])))
    }

    /// True when every label is exactly +1 or -1.
    pub fn is_binary(&self) -> bool {
        self.labels().all(|b| b == 1.0 || b == -1.0)
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<f64> {
        let mut classes: Vec<f64> = self.labels().collect();
        classes.sort_by(f64::total_cmp);
        classes.dedup();
        classes
    }

    /// Relabels to +1 for `class` and -1 for everything else.
    pub fn one_vs_rest(&self, class: f64) -> Self {
        let examples =
            self.examples.iter().map(|e| e.with_label(if e.label == class { 1.0 } else { -1.0 })).collect();
        Dataset { examples, dim: self.dim }
    }

    /// Same examples embedded in a (possibly larger) feature space.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Dataset::new(self.examples.clone(), dim)
    }
}

fn random_unit_row(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return row.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// Planted linear model with unit-norm Gaussian rows.
///
/// Returns the dataset and the planted weight vector. Labels are computed from the
/// already-normalized rows, so with zero noise the planted weights fit exactly.
pub fn synth_linear(
    n: usize,
    d: usize,
    noise_std: f64,
    seed: u64,
    kind: TaskKind,
) -> Result<(Dataset, Vec<f64>)> {
    if n == 0 || d == 0 {
        return Err(Error::Parameter("synthetic problems need n >= 1 and d >= 1".into()));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::Parameter(format!("noise std {noise_std} must be finite and >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let row = random_unit_row(&mut rng, d);
        let mut ex = SparseExample::from_dense(&row, 0.0)?;
        let noise: f64 = StandardNormal.sample(&mut rng);
        let response = ex.dot(&weights) + noise_std * noise;
        ex.label = match kind {
            TaskKind::Regression => response,
            TaskKind::Classification => {
                if response >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        examples.push(ex);
    }
    Ok((Dataset::new(examples, d)?, weights))
}

/// Linearly separable binary problem: unit rows whose margin `|<a, w>|` against a
/// planted unit normal `w` is at least `margin`.
pub fn synth_separable(n: usize, d: usize, margin: f64, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    if n == 0 || d < 2 {
        return Err(Error::Parameter("separable problems need n >= 1 and d >= 2".into()));
    }
    if !(0.0..0.5).contains(&margin) {
        return Err(Error::Parameter(format!("margin {margin} must lie in [0, 0.5)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = random_unit_row(&mut rng, d);
    let mut examples = Vec::with_capacity(n);
    while examples.len() < n {
        let row = random_unit_row(&mut rng, d);
        let ex = SparseExample::from_dense(&row, 0.0)?;
        let score = ex.dot(&normal);
        if score.abs() >= margin {
            examples.push(ex.with_label(if score > 0.0 { 1.0 } else { -1.0 }));
        }
    }
    Ok((Dataset::new(examples, d)?, normal))
}
