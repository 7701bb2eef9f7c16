//! Principal component analysis on scattering features.
//!
//! The model diagonalizes the unnormalized scatter matrix
//! `C = sum_i z_i z_i^T` of the centered training vectors (no `1/M`
//! factor, so eigenvalues are `M` times the sample covariance's). When the
//! dimension exceeds the sample count the problem is reduced to an `M x M`
//! one through a thin QR factorization of the centered data.
//!
//! Eigenvectors are sign-canonicalized so that each one's largest-magnitude
//! entry is positive.

use std::path::Path;

use nalgebra::DMatrix;

use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};
use crate::scattering::FeatureVector;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    basis: Vec<Vec<f64>>,
    k: usize,
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

pub fn fit_pca<V: AsRef<[f64]>>(features: &[V], k: usize) -> Result<PcaModel> {
    PcaModel::fit(features, k)
}

pub fn project(model: &PcaModel, vector: &[f64]) -> Result<Vec<f64>> {
    model.project(vector)
}

pub fn retained_variance(model: &PcaModel, k: usize) -> Result<f64> {
    model.retained_variance(k)
}

pub fn choose_k(model: &PcaModel, epsilon: f64) -> Result<usize> {
    model.choose_k(epsilon)
}

/// Arithmetic mean of equal-length vectors.
fn mean_of<V: AsRef<[f64]>>(features: &[V], d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.as_ref()) {
            *m += v;
        }
    }
    let n = features.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn canonical_sign(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

impl PcaModel {
    /// Fits the model and keeps `k` components for projection.
    pub fn fit<V: AsRef<[f64]>>(features: &[V], k: usize) -> Result<PcaModel> {
        let m = features.len();
        if m < 2 {
            return Err(Error::arg(format!("PCA needs at least 2 vectors, got {m}")));
        }
        let d = features[0].as_ref().len();
        if d == 0 {
            return Err(Error::arg("PCA input vectors are empty"));
        }
        if let Some(bad) = features.iter().position(|f| f.as_ref().len() != d) {
            return Err(Error::arg(format!(
                "vector {bad} has length {}, expected {d}",
                features[bad].as_ref().len()
            )));
        }
        let limit = (m - 1).min(d);
        if k == 0 || k > limit {
            return Err(Error::arg(format!(
                "PCA component count {k} outside 1..={limit}"
            )));
        }

        let mean = mean_of(features, d);
        let z = DMatrix::from_fn(m, d, |i, j| features[i].as_ref()[j] - mean[j]);
        let (values, vectors) = if m >= d {
            let eig = (z.transpose() * &z).symmetric_eigen();
            (eig.eigenvalues, eig.eigenvectors)
        } else {
            // Z^T = QR, so C = Q (R R^T) Q^T with the small factor m x m.
            let qr = z.transpose().qr();
            let (q, r) = (qr.q(), qr.r());
            let eig = (&r * r.transpose()).symmetric_eigen();
            (eig.eigenvalues, q * eig.eigenvectors)
        };
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let top = order.first().map(|&i| values[i]).unwrap_or(0.0);

        let mut eigenvalues = Vec::new();
        let mut basis = Vec::new();
        for &i in order.iter().take(limit) {
            let lambda = values[i];
            if top <= 0.0 || lambda <= RANK_TOL * top {
                break;
            }
            let mut v: Vec<f64> = vectors.column(i).iter().copied().collect();
            canonical_sign(&mut v);
            eigenvalues.push(lambda);
            basis.push(v);
        }
        let rank = basis.len();
        if k > rank {
            return Err(Error::arg(format!(
                "requested {k} PCA components but the training data has rank {rank}; use at most {rank}"
            )));
        }
        Ok(PcaModel {
            mean,
            eigenvalues,
            basis,
            k,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Same model with a different number of retained components.
    pub fn with_k(&self, k: usize) -> Result<PcaModel> {
        if k == 0 || k > self.rank() {
            return Err(Error::arg(format!(
                "component count {k} outside 1..={}",
                self.rank()
            )));
        }
        Ok(PcaModel { k, ..self.clone() })
    }

    /// `(v_j . (x - mean))` for the first `k` components.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::arg(format!(
                "vector length {} does not match PCA dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        Ok(self.basis[..self.k]
            .iter()
            .map(|v| v.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn project_all<V: AsRef<[f64]>>(&self, xs: &[V]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.project(x.as_ref())).collect()
    }

    /// Maps projection coefficients back to feature space.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, v) in coeffs.iter().zip(&self.basis) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        }
        out
    }

    /// Fraction of total variance captured by the first `k` components.
    pub fn retained_variance(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.rank() {
            return Err(Error::arg(format!("k={k} outside 1..={}", self.rank())));
        }
        let total: f64 = self.eigenvalues.iter().sum();
        let part: f64 = self.eigenvalues[..k].iter().sum();
        Ok(part / total)
    }

    /// Smallest `k` whose retained variance reaches `epsilon`.
    pub fn choose_k(&self, epsilon: f64) -> Result<usize> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::arg(format!("variance target {epsilon} outside (0, 1]")));
        }
        let total: f64 = self.eigenvalues.iter().sum();
        let mut acc = 0.0;
        for (i, l) in self.eigenvalues.iter().enumerate() {
            acc += l;
            if acc / total >= epsilon {
                return Ok(i + 1);
            }
        }
        Ok(self.rank())
    }

    /// Binary layout, little-endian: magic `PCA1`; u32 d, r, K; then the
    /// mean (d), eigenvalues (r) and basis rows (r x d) as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = LeWriter::new();
        w.bytes(b"PCA1");
        w.u32(self.dim() as u32);
        w.u32(self.rank() as u32);
        w.u32(self.k as u32);
        w.f64s(&self.mean);
        w.f64s(&self.eigenvalues);
        for row in &self.basis {
            w.f64s(row);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(bytes, "PCA model");
        r.magic(b"PCA1")?;
        let d = r.u32()? as usize;
        let rank = r.u32()? as usize;
        let k = r.u32()? as usize;
        if rank > d || k > rank || d == 0 {
            return Err(r.err(format!("inconsistent header d={d} r={rank} K={k}")));
        }
        let mean = r.f64s(d)?;
        let eigenvalues = r.f64s(rank)?;
        let basis = (0..rank).map(|_| r.f64s(d)).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            mean,
            eigenvalues,
            basis,
            k,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Per-dimension z-scoring fitted on training projections. Dimensions with
/// zero spread are only centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit<V: AsRef<[f64]>>(xs: &[V]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::arg("cannot standardize an empty set"));
        }
        let d = xs[0].as_ref().len();
        let mean = mean_of(xs, d);
        let mut var = vec![0.0; d];
        for x in xs {
            for ((v, a), m) in var.iter_mut().zip(x.as_ref()).zip(&mean) {
                *v += (a - m) * (a - m);
            }
        }
        let n = xs.len() as f64;
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((a, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *a = (*a - m) * s;
        }
    }

    pub fn apply_all(&self, xs: &mut [Vec<f64>]) {
        xs.iter_mut().for_each(|x| self.apply(x));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(m: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn symmetric_pair() {
        let model = fit_pca(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 1).unwrap();
        assert_eq!(model.mean(), &[0.0, 0.0]);
        assert!((model.eigenvalues()[0] - 2.0).abs() < 1e-12);
        assert!((model.basis()[0][0] - 1.0).abs() < 1e-12);
        assert!(model.basis()[0][1].abs() < 1e-12);
        assert!(model.project(&[0.0, 0.0]).unwrap()[0].abs() < 1e-15);
        assert!((model.project(&[1.0, 0.0]).unwrap()[0] - 1.0).abs() < 1e-12);
        assert_eq!(model.rank(), 1);
    }

    #[test]
    fn full_sized_model() {
        let data = random_data(300, 782, 4);
        let model = fit_pca(&data, 200).unwrap();
        assert_eq!(model.k(), 200);
        assert_eq!(model.project(&data[0]).unwrap().len(), 200);
    }

    #[test]
    fn retained_variance_and_choose_k() {
        let model = PcaModel {
            mean: vec![0.0, 0.0],
            eigenvalues: vec![3.0, 1.0],
            basis: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            k: 2,
        };
        assert_eq!(model.retained_variance(1).unwrap(), 0.75);
        assert_eq!(model.retained_variance(2).unwrap(), 1.0);
        assert_eq!(model.choose_k(0.7).unwrap(), 1);
        assert_eq!(model.choose_k(0.8).unwrap(), 2);
        assert_eq!(model.choose_k(1.0).unwrap(), 2);
        assert!(model.choose_k(0.0).is_err());
        assert!(model.retained_variance(3).is_err());
    }

    #[test]
    fn argument_errors() {
        assert!(fit_pca(&[vec![1.0, 2.0]], 1).is_err());
        let data = random_data(5, 3, 0);
        assert!(fit_pca(&data, 0).is_err());
        assert!(fit_pca(&data, 4).is_err());
        assert!(fit_pca(&[vec![1.0, 2.0], vec![1.0]], 1).is_err());
        let model = fit_pca(&data, 2).unwrap();
        assert!(model.project(&[1.0]).is_err());
        // rank-deficient: three collinear points have rank 1
        let line = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        match fit_pca(&line, 2) {
            Err(Error::Argument(msg)) => assert!(msg.contains("at most 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn training_projections_are_decorrelated() {
        let data = random_data(12, 8, 7);
        let model = fit_pca(&data, 8).unwrap();
        let proj = model.project_all(&data).unwrap();
        let k = model.k();
        let mut scatter = vec![vec![0.0; k]; k];
        for p in &proj {
            for a in 0..k {
                for b in 0..k {
                    scatter[a][b] += p[a] * p[b];
                }
            }
        }
        let max_diag = (0..k).map(|a| scatter[a][a]).fold(0.0, f64::max);
        for a in 0..k {
            let rel = (scatter[a][a] - model.eigenvalues()[a]).abs() / model.eigenvalues()[a];
            assert!(rel < 1e-8);
            for b in 0..k {
                if a != b {
                    assert!(scatter[a][b].abs() <= 1e-6 * max_diag);
                }
            }
        }
    }

    #[test]
    fn full_rank_round_trip() {
        for (m, d) in [(10, 4), (6, 15)] {
            let data = random_data(m, d, (m * d) as u64);
            let probe = fit_pca(&data, 1).unwrap();
            let model = probe.with_k(probe.rank()).unwrap();
            for x in &data {
                let back = model.reconstruct(&model.project(x).unwrap());
                let err: f64 = back.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!(err <= 1e-6 * norm);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_with_canonical_signs() {
        let model = fit_pca(&random_data(9, 20, 3), 3).unwrap();
        for (i, a) in model.basis().iter().enumerate() {
            let peak = a.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(peak > 0.0);
            for (j, b) in model.basis().iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - want).abs() < 1e-8);
            }
        }
        assert!(model.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn standardizer_gives_unit_spread() {
        let mut data = random_data(20, 3, 8);
        data.iter_mut().for_each(|x| x[2] = 5.0);
        let s = Standardizer::fit(&data).unwrap();
        s.apply_all(&mut data);
        for j in 0..2 {
            let m: f64 = data.iter().map(|x| x[j]).sum::<f64>() / 20.0;
            let v: f64 = data.iter().map(|x| (x[j] - m).powi(2)).sum::<f64>() / 20.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        assert!(data.iter().all(|x| x[2] == 0.0));
    }

    #[test]
    fn model_file_round_trip() {
        let model = fit_pca(&random_data(7, 5, 1), 3).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..4], b"PCA1");
        assert_eq!(PcaModel::from_bytes(&bytes).unwrap(), model);
        assert!(PcaModel::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    }
}
