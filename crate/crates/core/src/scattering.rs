//! Translation-invariant scattering transform.
//!
//! Layer 0 is `f * phi`. A layer-`k` map is
//! `||f * psi_{j1,l1}| * ... * psi_{jk,lk}| * phi` with scale indices strictly
//! decreasing along the path (`jk < ... < j1 < J`); other scale orderings are
//! pruned. Maps are kept at full resolution and emitted in canonical order:
//! by layer, then lexicographically by `(j1, l1, j2, l2, ...)`.
//!
//! Each map is pooled into its mean and population variance, interleaved
//! per map, to form the feature vector.

use std::fmt;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::imageio::GrayImage;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScatteringPath {
    pub scales: Vec<usize>,
    pub orientations: Vec<usize>,
}

impl ScatteringPath {
    pub fn root() -> Self {
        Self {
            scales: Vec::new(),
            orientations: Vec::new(),
        }
    }

    pub fn layer(&self) -> usize {
        self.scales.len()
    }

    fn child(&self, scale: usize, orientation: usize) -> Self {
        let mut p = self.clone();
        p.scales.push(scale);
        p.orientations.push(orientation);
        p
    }

    /// Scales a child of this path may use: all `j < J` at the first layer,
    /// strictly smaller than the last scale afterwards.
    fn child_scales(&self, scales: usize) -> std::ops::Range<usize> {
        0..self.scales.last().copied().unwrap_or(scales)
    }
}

impl Ord for ScatteringPath {
    /// Canonical order: by layer, then lexicographically over the
    /// `(scale, orientation)` pairs.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let pairs = |p: &Self| p.scales.iter().copied().zip(p.orientations.iter().copied()).collect::<Vec<_>>();
        self.layer()
            .cmp(&other.layer())
            .then_with(|| pairs(self).cmp(&pairs(other)))
    }
}

impl PartialOrd for ScatteringPath {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ScatteringPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scales.is_empty() {
            return f.write_str("phi");
        }
        for (i, (j, l)) in self.scales.iter().zip(&self.orientations).enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "j{j}l{l}")?;
        }
        Ok(())
    }
}

/// Mean accumulated relative to the first sample, exact for constant input.
pub(crate) fn shifted_mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    let mut it = values.peekable();
    let Some(&first) = it.peek() else { return 0.0 };
    first + it.map(|v| v - first).sum::<f64>() / n as f64
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of scattering maps up to layer `max_layer`:
/// `sum_{k=0}^{m} L^k * C(J, k)`.
pub fn path_count(scales: usize, orientations: usize, max_layer: usize) -> Result<usize> {
    if max_layer > scales {
        return Err(Error::arg(format!(
            "{max_layer} layers need at least {max_layer} scales, got {scales}"
        )));
    }
    Ok((0..=max_layer)
        .map(|k| orientations.pow(k as u32) * binomial(scales, k))
        .sum())
}

/// All paths up to `max_layer` in canonical order.
pub fn enumerate_paths(scales: usize, orientations: usize, max_layer: usize) -> Vec<ScatteringPath> {
    let mut out = vec![ScatteringPath::root()];
    let mut frontier = vec![ScatteringPath::root()];
    for _ in 0..max_layer {
        let mut next = Vec::new();
        for p in &frontier {
            for j in p.child_scales(scales) {
                for l in 0..orientations {
                    next.push(p.child(j, l));
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScatteringParams {
    pub scales: usize,
    pub orientations: usize,
    pub max_layer: usize,
    pub width: usize,
    pub height: usize,
}

impl ScatteringParams {
    pub fn map_count(&self) -> usize {
        path_count(self.scales, self.orientations, self.max_layer).expect("validated params")
    }

    pub fn feature_len(&self) -> usize {
        2 * self.map_count()
    }
}

#[derive(Debug, Clone)]
pub struct ScatteringResult {
    pub maps: Vec<(ScatteringPath, Array2<f64>)>,
    pub params: ScatteringParams,
}

/// Runs the scattering cascade on `image` up to layer `max_layer`.
pub fn scatter(image: &GrayImage, bank: &FilterBank, max_layer: usize) -> Result<ScatteringResult> {
    if image.width() != bank.width() || image.height() != bank.height() {
        return Err(Error::arg(format!(
            "image is {}x{} but the filter bank was built for {}x{}",
            image.width(),
            image.height(),
            bank.width(),
            bank.height()
        )));
    }
    path_count(bank.scales(), bank.orientations(), max_layer)?;
    let params = ScatteringParams {
        scales: bank.scales(),
        orientations: bank.orientations(),
        max_layer,
        width: bank.width(),
        height: bank.height(),
    };
    let fft = bank.fft();
    let phi = bank.lowpass();
    let average = |spectrum: &Array2<Complex64>| -> Array2<f64> {
        let mut s = spectrum * &phi.mapv(|v| Complex64::new(v, 0.0));
        fft.inverse(&mut s);
        s.mapv(|c| c.re)
    };

    let mut maps = Vec::with_capacity(params.map_count());
    let root_spec = fft.forward_real(image.pixels());
    maps.push((ScatteringPath::root(), average(&root_spec)));

    // (path, spectrum of its modulus map) for the current layer
    let mut frontier = vec![(ScatteringPath::root(), root_spec)];
    for layer in 1..=max_layer {
        let mut next = Vec::new();
        for (path, spec) in &frontier {
            for j in path.child_scales(params.scales) {
                for l in 0..params.orientations {
                    let mut u = spec * bank.bandpass(j, l);
                    fft.inverse(&mut u);
                    let modulus = u.mapv(|c| c.norm());
                    let u_spec = fft.forward_real(&modulus);
                    let child = path.child(j, l);
                    maps.push((child.clone(), average(&u_spec)));
                    if layer < max_layer {
                        next.push((child, u_spec));
                    }
                }
            }
        }
        frontier = next;
    }
    debug_assert_eq!(maps.len(), params.map_count());
    Ok(ScatteringResult { maps, params })
}

/// Pooled scattering descriptor: `(mean, variance)` per map, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Option<usize>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, label: None }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Mean and population variance of a map.
pub fn mean_variance(map: &Array2<f64>) -> (f64, f64) {
    let n = map.len() as f64;
    let mean = shifted_mean(map.iter().copied(), map.len());
    let var = map.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

pub fn pool_features(result: &ScatteringResult) -> Result<FeatureVector> {
    if result.maps.is_empty() {
        return Err(Error::arg("scattering result has no maps"));
    }
    let mut values = Vec::with_capacity(2 * result.maps.len());
    for (_, map) in &result.maps {
        let (m, v) = mean_variance(map);
        values.push(m);
        values.push(v);
    }
    Ok(FeatureVector::new(values))
}

/// `scatter` followed by `pool_features`.
pub fn extract_features(image: &GrayImage, bank: &FilterBank, max_layer: usize) -> Result<FeatureVector> {
    pool_features(&scatter(image, bank, max_layer)?)
}

const FEATURE_MAGIC: &[u8; 4] = b"SCF1";

/// Contents of a feature file: the scattering parameters and one labeled
/// vector per image, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub params: ScatteringParams,
    pub labels: Vec<i32>,
    pub vectors: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn new(params: ScatteringParams) -> Self {
        Self {
            params,
            labels: Vec::new(),
            vectors: Vec::new(),
        }
    }

    pub fn push(&mut self, label: i32, values: Vec<f64>) -> Result<()> {
        if values.len() != self.params.feature_len() {
            return Err(Error::arg(format!(
                "feature length {} does not match {}",
                values.len(),
                self.params.feature_len()
            )));
        }
        self.labels.push(label);
        self.vectors.push(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Binary layout, little-endian: magic `SCF1`; u32 J, L, m, width,
    /// height, feature length, record count; then per record an i32 label
    /// followed by the feature values as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut w = LeWriter::new();
        w.bytes(FEATURE_MAGIC);
        for v in [p.scales, p.orientations, p.max_layer, p.width, p.height, p.feature_len(), self.len()] {
            w.u32(v as u32);
        }
        for (label, values) in self.labels.iter().zip(&self.vectors) {
            w.i32(*label);
            w.f64s(values);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(bytes, "feature");
        r.magic(FEATURE_MAGIC)?;
        let mut header = [0usize; 7];
        for h in header.iter_mut() {
            *h = r.u32()? as usize;
        }
        let [scales, orientations, max_layer, width, height, feature_len, count] = header;
        let count_ok = path_count(scales, orientations, max_layer)
            .map(|c| 2 * c == feature_len)
            .unwrap_or(false);
        if !count_ok {
            return Err(r.err(format!(
                "feature length {feature_len} inconsistent with J={scales}, L={orientations}, m={max_layer}"
            )));
        }
        let params = ScatteringParams {
            scales,
            orientations,
            max_layer,
            width,
            height,
        };
        let mut set = FeatureSet::new(params);
        for _ in 0..count {
            let label = r.i32()?;
            let values = r.f64s(feature_len)?;
            set.labels.push(label);
            set.vectors.push(values);
        }
        r.finish()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// CSV with a `label` column followed by `mean_<path>,var_<path>` pairs.
    pub fn to_csv(&self) -> String {
        let p = &self.params;
        let mut s = format!(
            "# J={} L={} m={} width={} height={}\nlabel",
            p.scales, p.orientations, p.max_layer, p.width, p.height
        );
        for path in enumerate_paths(p.scales, p.orientations, p.max_layer) {
            s.push_str(&format!(",mean_{path},var_{path}"));
        }
        s.push('\n');
        for (label, values) in self.labels.iter().zip(&self.vectors) {
            s.push_str(&label.to_string());
            for v in values {
                s.push(',');
                s.push_str(&format!("{v:e}"));
            }
            s.push('\n');
        }
        s
    }
}
