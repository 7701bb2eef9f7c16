//! Soft-margin support vector machines.
//!
//! Binary training solves the dual
//!
//! ```text
//! max  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j k(x_i, x_j)
//! s.t. 0 <= a_i <= C,  sum_i a_i y_i = 0
//! ```
//!
//! with sequential minimal optimization: each step picks the maximal
//! violating pair and solves the two-variable subproblem analytically.
//! Training stops once the maximal KKT violation drops to the tolerance.
//! Multi-class identification trains one classifier per class (one-vs-all)
//! and predicts the class with the largest decision value.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

pub type KernelFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

#[derive(Clone, Default)]
pub enum Kernel {
    #[default]
    Linear,
    /// Any symmetric positive-semidefinite function. Not serializable.
    Custom(Arc<KernelFn>),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Linear => f.write_str("Linear"),
            Kernel::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Kernel {
    pub fn custom(f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Kernel::Custom(Arc::new(f))
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => dot(a, b),
            Kernel::Custom(f) => f(a, b),
        }
    }

    fn code(&self) -> Option<u32> {
        match self {
            Kernel::Linear => Some(0),
            Kernel::Custom(_) => None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    /// Penalty cost.
    pub c: f64,
    /// Stop when the maximal KKT violation is at most this.
    pub tolerance: f64,
    pub max_updates: usize,
    /// Kernel rows kept in the LRU cache; `None` caches every row.
    pub cache_rows: Option<usize>,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-3,
            max_updates: 10_000_000,
            cache_rows: None,
        }
    }
}

impl SvmParams {
    pub fn with_c(c: f64) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }
}

/// Kernel rows on demand with least-recently-used eviction.
struct KernelRows<'a, V> {
    xs: &'a [V],
    kernel: &'a Kernel,
    capacity: usize,
    rows: HashMap<usize, (Vec<f64>, u64)>,
    clock: u64,
}

impl<'a, V: AsRef<[f64]>> KernelRows<'a, V> {
    fn new(xs: &'a [V], kernel: &'a Kernel, capacity: Option<usize>) -> Self {
        let capacity = capacity.unwrap_or(xs.len()).max(2);
        Self {
            xs,
            kernel,
            capacity,
            rows: HashMap::new(),
            clock: 0,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        let now = self.clock;
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                let oldest = self
                    .rows
                    .iter()
                    .min_by_key(|(_, (_, t))| *t)
                    .map(|(&k, _)| k)
                    .expect("cache is nonempty");
                self.rows.remove(&oldest);
            }
            let xi = self.xs[i].as_ref();
            let row = self.xs.iter().map(|x| self.kernel.eval(xi, x.as_ref())).collect();
            self.rows.insert(i, (row, now));
        }
        let entry = self.rows.get_mut(&i).expect("row inserted");
        entry.1 = now;
        &entry.0
    }
}

/// Raw dual solution, including the zero multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision offset; `f(x) = sum a_i y_i k(x_i, x) + bias`.
    pub bias: f64,
    pub objective: f64,
    pub updates: usize,
    pub max_violation: f64,
}

fn validate_binary<V: AsRef<[f64]>>(xs: &[V], ys: &[f64]) -> Result<usize> {
    if xs.len() != ys.len() {
        return Err(Error::arg(format!("{} vectors but {} labels", xs.len(), ys.len())));
    }
    if xs.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    if let Some(y) = ys.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::arg(format!("binary labels must be +1 or -1, got {y}")));
    }
    if !ys.contains(&1.0) || !ys.contains(&-1.0) {
        return Err(Error::arg("binary training needs examples of both classes"));
    }
    let d = xs[0].as_ref().len();
    if xs.iter().any(|x| x.as_ref().len() != d) {
        return Err(Error::arg("training vectors have different lengths"));
    }
    Ok(d)
}

/// Solves the soft-margin dual with SMO.
pub fn solve_dual<V: AsRef<[f64]>>(xs: &[V], ys: &[f64], kernel: &Kernel, params: &SvmParams) -> Result<DualSolution> {
    validate_binary(xs, ys)?;
    if !(params.c.is_finite() && params.c > 0.0) {
        return Err(Error::arg(format!("penalty C must be positive, got {}", params.c)));
    }
    let n = xs.len();
    let c = params.c;
    let diag: Vec<f64> = xs.iter().map(|x| kernel.eval(x.as_ref(), x.as_ref())).collect();
    let mut rows = KernelRows::new(xs, kernel, params.cache_rows);
    let mut alpha = vec![0.0; n];
    // gradient of 1/2 a'Qa - e'a
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let mut updates = 0;
    let violation = loop {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let (mut g_max, mut g_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for t in 0..n {
            let s = -ys[t] * grad[t];
            if in_up(alpha[t], ys[t]) && s > g_max {
                g_max = s;
                i = t;
            }
            if in_low(alpha[t], ys[t]) && s < g_min {
                g_min = s;
                j = t;
            }
        }
        let gap = g_max - g_min;
        if i == usize::MAX || j == usize::MAX || gap <= params.tolerance {
            break gap.max(0.0);
        }
        if updates >= params.max_updates {
            return Err(Error::Training {
                iterations: updates,
                violation: gap,
            });
        }
        updates += 1;

        let k_ij = rows.row(i)[j];
        let (yi, yj) = (ys[i], ys[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = diag[i] + diag[j] - 2.0 * k_ij;
        if quad <= 0.0 {
            quad = TAU;
        }
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let row_i = rows.row(i).to_vec();
        let row_j = rows.row(j);
        for t in 0..n {
            grad[t] += ys[t] * (yi * row_i[t] * di + yj * row_j[t] * dj);
        }
    };

    // Offset: average over free multipliers, else midpoint of the feasible
    // interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = -0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    Ok(DualSolution {
        alpha,
        bias: -rho,
        objective,
        updates,
        max_violation: violation,
    })
}

/// A trained binary classifier holding only its support vectors.
#[derive(Debug, Clone)]
pub struct BinarySvmModel {
    support_vectors: Vec<Vec<f64>>,
    dual_coefs: Vec<f64>,
    bias: f64,
    kernel: Kernel,
    c: f64,
    /// Primal weights, available for the linear kernel.
    weights: Option<Vec<f64>>,
}

impl PartialEq for BinarySvmModel {
    fn eq(&self, other: &Self) -> bool {
        self.support_vectors == other.support_vectors
            && self.dual_coefs == other.dual_coefs
            && self.bias == other.bias
            && self.c == other.c
            && self.kernel.code() == other.kernel.code()
            && self.kernel.code().is_some()
    }
}

impl BinarySvmModel {
    fn from_parts(support_vectors: Vec<Vec<f64>>, dual_coefs: Vec<f64>, bias: f64, kernel: Kernel, c: f64, dim: usize) -> Self {
        let weights = matches!(kernel, Kernel::Linear).then(|| {
            let mut w = vec![0.0; dim];
            for (sv, coef) in support_vectors.iter().zip(&dual_coefs) {
                for (wi, x) in w.iter_mut().zip(sv) {
                    *wi += coef * x;
                }
            }
            w
        });
        Self {
            support_vectors,
            dual_coefs,
            bias,
            kernel,
            c,
            weights,
        }
    }

    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    /// `a_i * y_i` per support vector.
    pub fn dual_coefs(&self) -> &[f64] {
        &self.dual_coefs
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.weights
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.support_vectors.first().map(Vec::len))
            .unwrap_or(0)
    }

    /// Signed margin `sum a_i y_i k(x_i, x) + b`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::arg(format!(
                "input length {} does not match model dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.decision_unchecked(x))
    }

    fn decision_unchecked(&self, x: &[f64]) -> f64 {
        match &self.weights {
            Some(w) => dot(w, x) + self.bias,
            None => {
                self.support_vectors
                    .iter()
                    .zip(&self.dual_coefs)
                    .map(|(sv, coef)| coef * self.kernel.eval(sv, x))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.decision_value(x)? >= 0.0 { 1.0 } else { -1.0 })
    }
}

pub fn train_binary<V: AsRef<[f64]>>(xs: &[V], ys: &[f64], kernel: &Kernel, params: &SvmParams) -> Result<BinarySvmModel> {
    let dim = validate_binary(xs, ys)?;
    let sol = solve_dual(xs, ys, kernel, params)?;
    let (mut svs, mut coefs) = (Vec::new(), Vec::new());
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            svs.push(xs[t].as_ref().to_vec());
            coefs.push(a * ys[t]);
        }
    }
    Ok(BinarySvmModel::from_parts(svs, coefs, sol.bias, kernel.clone(), params.c, dim))
}

pub fn decision_value(model: &BinarySvmModel, x: &[f64]) -> Result<f64> {
    model.decision_value(x)
}

/// One-vs-all ensemble: `models[i]` separates `classes[i]` from the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSvmModel {
    classes: Vec<usize>,
    models: Vec<BinarySvmModel>,
    dim: usize,
}

pub fn train_multiclass<V: AsRef<[f64]> + Sync>(
    xs: &[V],
    labels: &[usize],
    kernel: &Kernel,
    params: &SvmParams,
) -> Result<MulticlassSvmModel> {
    if xs.len() != labels.len() {
        return Err(Error::arg(format!("{} vectors but {} labels", xs.len(), labels.len())));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::arg("multi-class training needs at least 2 classes"));
    }
    let dim = xs[0].as_ref().len();
    let models = classes
        .par_iter()
        .map(|&class| {
            let ys: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            train_binary(xs, &ys, kernel, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MulticlassSvmModel { classes, models, dim })
}

pub fn predict(model: &MulticlassSvmModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

impl MulticlassSvmModel {
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn models(&self) -> &[BinarySvmModel] {
        &self.models
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::arg(format!(
                "input length {} does not match model dimension {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self.models.iter().map(|m| m.decision_unchecked(x)).collect())
    }

    /// Class with the largest decision value; ties go to the smaller label.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let values = self.decision_values(x)?;
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = i;
            }
        }
        Ok(self.classes[best])
    }

    /// Binary layout, little-endian: magic `SVM1`; u32 M, d, kernel kind
    /// (0 = linear); f64 C; then per class an i32 label, u32 support-vector
    /// count, f64 bias, the dual coefficients and the support vectors (row
    /// by row), all f64.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let kind = self.models[0]
            .kernel
            .code()
            .ok_or_else(|| Error::arg("custom kernels cannot be serialized"))?;
        let mut w = LeWriter::new();
        w.bytes(b"SVM1");
        w.u32(self.classes.len() as u32);
        w.u32(self.dim as u32);
        w.u32(kind);
        w.f64(self.models[0].c);
        for (class, m) in self.classes.iter().zip(&self.models) {
            w.i32(*class as i32);
            w.u32(m.support_vectors.len() as u32);
            w.f64(m.bias);
            w.f64s(&m.dual_coefs);
            for sv in &m.support_vectors {
                w.f64s(sv);
            }
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(bytes, "SVM model");
        r.magic(b"SVM1")?;
        let m = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let kind = r.u32()?;
        if kind != 0 {
            return Err(r.err(format!("unsupported kernel kind {kind}")));
        }
        let c = r.f64()?;
        if m < 2 {
            return Err(r.err(format!("{m} classes")));
        }
        let mut classes = Vec::with_capacity(m);
        let mut models = Vec::with_capacity(m);
        for _ in 0..m {
            let label = r.i32()?;
            if label < 0 {
                return Err(r.err(format!("negative class label {label}")));
            }
            let n_sv = r.u32()? as usize;
            let bias = r.f64()?;
            let coefs = r.f64s(n_sv)?;
            let svs = (0..n_sv).map(|_| r.f64s(dim)).collect::<Result<Vec<_>>>()?;
            classes.push(label as usize);
            models.push(BinarySvmModel::from_parts(svs, coefs, bias, Kernel::Linear, c, dim));
        }
        r.finish()?;
        if classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(r.err("class labels are not strictly ascending"));
        }
        Ok(Self { classes, models, dim })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
