//! Frequency-domain Morlet filter bank and periodic FFT convolution.
//!
//! Filters are sampled on the image grid in the spatial domain, periodized,
//! and stored as their 2-D DFT. Convolution is circular: forward transform,
//! pointwise product, inverse transform. Frequencies follow the usual DFT
//! layout, with `x` along columns and `y` along rows.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Morlet shape parameters. Scale `j` uses bandwidth `sigma0 * 2^j` and
/// center frequency `xi0 / 2^j`; the low-pass uses
/// `lowpass_sigma0 * 2^(J-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorletConfig {
    pub slant: f64,
    pub sigma0: f64,
    pub xi0: f64,
    pub lowpass_sigma0: f64,
}

impl Default for MorletConfig {
    fn default() -> Self {
        Self {
            slant: 0.5,
            sigma0: 0.8,
            xi0: 3.0 * PI / 4.0,
            lowpass_sigma0: 0.8,
        }
    }
}

impl MorletConfig {
    pub fn sigma(&self, j: usize) -> f64 {
        self.sigma0 * 2f64.powi(j as i32)
    }

    pub fn xi(&self, j: usize) -> f64 {
        self.xi0 / 2f64.powi(j as i32)
    }

    pub fn lowpass_sigma(&self, scales: usize) -> f64 {
        self.lowpass_sigma0 * 2f64.powi(scales as i32 - 1)
    }

    pub fn angle(orientation: usize, orientations: usize) -> f64 {
        orientation as f64 * PI / orientations as f64
    }
}

/// Cached row/column plans for 2-D transforms of one grid size.
#[derive(Clone)]
pub struct Fft2d {
    height: usize,
    width: usize,
    fwd_rows: Arc<dyn Fft<f64>>,
    fwd_cols: Arc<dyn Fft<f64>>,
    inv_rows: Arc<dyn Fft<f64>>,
    inv_cols: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fft2d({}x{})", self.width, self.height)
    }
}

impl Fft2d {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            fwd_rows: planner.plan_fft_forward(width),
            fwd_cols: planner.plan_fft_forward(height),
            inv_rows: planner.plan_fft_inverse(width),
            inv_cols: planner.plan_fft_inverse(height),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn run(&self, data: &mut Array2<Complex64>, rows: &dyn Fft<f64>, cols: &dyn Fft<f64>) {
        assert_eq!(data.dim(), (self.height, self.width));
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().to_owned();
        }
        rows.process(data.as_slice_mut().expect("standard layout"));
        let mut t = data.t().as_standard_layout().to_owned();
        cols.process(t.as_slice_mut().expect("standard layout"));
        data.assign(&t.t());
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.run(data, self.fwd_rows.as_ref(), self.fwd_cols.as_ref());
    }

    /// Inverse transform including the `1 / (H W)` factor.
    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.run(data, self.inv_rows.as_ref(), self.inv_cols.as_ref());
        let norm = 1.0 / (self.height * self.width) as f64;
        data.mapv_inplace(|c| c * norm);
    }

    pub fn forward_real(&self, input: &Array2<f64>) -> Array2<Complex64> {
        let mut data = input.mapv(|v| Complex64::new(v, 0.0));
        self.forward(&mut data);
        data
    }

    /// Circular convolution of a real array with a frequency-domain filter.
    pub fn convolve(&self, input: &Array2<f64>, filter: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        if input.dim() != filter.dim() || input.dim() != self.dim() {
            return Err(Error::arg(format!(
                "convolution size mismatch: input {:?}, filter {:?}",
                input.dim(),
                filter.dim()
            )));
        }
        let mut spec = self.forward_real(input);
        spec *= filter;
        self.inverse(&mut spec);
        Ok(spec)
    }
}

/// Circular convolution via FFT, planning the transform on the fly.
pub fn convolve(input: &Array2<f64>, filter: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    if input.dim() != filter.dim() {
        return Err(Error::arg(format!(
            "convolution size mismatch: input {:?}, filter {:?}",
            input.dim(),
            filter.dim()
        )));
    }
    let (h, w) = input.dim();
    Fft2d::new(h, w).convolve(input, filter)
}

/// `J x L` Morlet band-pass filters plus one Gaussian low-pass, all stored
/// in the frequency domain at the image resolution.
#[derive(Debug, Clone)]
pub struct FilterBank {
    scales: usize,
    orientations: usize,
    width: usize,
    height: usize,
    config: MorletConfig,
    bandpass: Vec<Array2<Complex64>>,
    lowpass: Array2<f64>,
    fft: Fft2d,
}

impl FilterBank {
    pub fn new(scales: usize, orientations: usize, width: usize, height: usize) -> Result<Self> {
        Self::with_config(scales, orientations, width, height, MorletConfig::default())
    }

    pub fn with_config(
        scales: usize,
        orientations: usize,
        width: usize,
        height: usize,
        config: MorletConfig,
    ) -> Result<Self> {
        if scales == 0 || orientations == 0 {
            return Err(Error::arg("filter bank needs at least one scale and one orientation"));
        }
        if scales > 16 {
            return Err(Error::arg(format!("{scales} scales is more than supported (16)")));
        }
        let support = 1usize << scales;
        if width < support || height < support {
            return Err(Error::arg(format!(
                "image {width}x{height} is smaller than the coarsest filter support {support}"
            )));
        }
        let fft = Fft2d::new(height, width);
        let mut bandpass = Vec::with_capacity(scales * orientations);
        for j in 0..scales {
            for l in 0..orientations {
                let theta = MorletConfig::angle(l, orientations);
                let spatial = morlet(height, width, config.sigma(j), theta, config.xi(j), config.slant);
                let mut f = spatial;
                fft.forward(&mut f);
                bandpass.push(f);
            }
        }
        let mut phi = gabor(height, width, config.lowpass_sigma(scales), 0.0, 0.0, 1.0);
        let total: f64 = phi.iter().map(|c| c.re).sum();
        phi.mapv_inplace(|c| Complex64::new(c.re / total, 0.0));
        fft.forward(&mut phi);
        // The periodized Gaussian is even, so its spectrum is real.
        let lowpass = phi.mapv(|c| c.re);
        Ok(Self {
            scales,
            orientations,
            width,
            height,
            config,
            bandpass,
            lowpass,
            fft,
        })
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn orientations(&self) -> usize {
        self.orientations
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn config(&self) -> &MorletConfig {
        &self.config
    }

    pub fn fft(&self) -> &Fft2d {
        &self.fft
    }

    pub fn bandpass(&self, scale: usize, orientation: usize) -> &Array2<Complex64> {
        assert!(scale < self.scales && orientation < self.orientations);
        &self.bandpass[scale * self.orientations + orientation]
    }

    pub fn lowpass(&self) -> &Array2<f64> {
        &self.lowpass
    }

    pub fn lowpass_complex(&self) -> Array2<Complex64> {
        self.lowpass.mapv(|v| Complex64::new(v, 0.0))
    }

    pub fn bandpass_count(&self) -> usize {
        self.bandpass.len()
    }

    /// Spatial samples of a band-pass filter (inverse DFT).
    pub fn spatial_bandpass(&self, scale: usize, orientation: usize) -> Array2<Complex64> {
        let mut f = self.bandpass(scale, orientation).clone();
        self.fft.inverse(&mut f);
        f
    }

    pub fn spatial_lowpass(&self) -> Array2<f64> {
        let mut f = self.lowpass_complex();
        self.fft.inverse(&mut f);
        f.mapv(|c| c.re)
    }

    pub fn convolve(&self, input: &Array2<f64>, filter: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        self.fft.convolve(input, filter)
    }

    /// Writes the spatial magnitude of every filter as a binary PGM,
    /// centered and scaled to the filter's own maximum.
    pub fn dump_pgm(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for j in 0..self.scales {
            for l in 0..self.orientations {
                let mag = self.spatial_bandpass(j, l).mapv(|c| c.norm());
                write_pgm(&dir.join(format!("psi_j{j}_l{l}.pgm")), &mag)?;
            }
        }
        write_pgm(&dir.join("phi.pgm"), &self.spatial_lowpass().mapv(f64::abs))
    }
}

fn write_pgm(path: &Path, values: &Array2<f64>) -> Result<()> {
    let (h, w) = values.dim();
    let max = values.iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for r in 0..h {
        for c in 0..w {
            // fftshift so the filter center lands mid-image
            let v = values[[(r + h / 2) % h, (c + w / 2) % w]];
            bytes.push((v * scale).round().clamp(0.0, 255.0) as u8);
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

fn signed_offset(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Periodized Gabor function with an anisotropic Gaussian envelope. The
/// envelope has curvature `1/sigma^2` along the carrier direction and
/// `slant^2/sigma^2` across it.
fn gabor(height: usize, width: usize, sigma: f64, theta: f64, xi: f64, slant: f64) -> Array2<Complex64> {
    let (ct, st) = (theta.cos(), theta.sin());
    let inv = 1.0 / (2.0 * sigma * sigma);
    // Enough periods that the envelope tail is below double precision.
    let reach = 9.0 * sigma / slant.min(1.0);
    let kx = (reach / width as f64).ceil() as i64 + 1;
    let ky = (reach / height as f64).ceil() as i64 + 1;
    let norm = slant / (2.0 * PI * sigma * sigma);
    Array2::from_shape_fn((height, width), |(r, c)| {
        let x0 = signed_offset(c, width);
        let y0 = signed_offset(r, height);
        let mut acc = Complex64::new(0.0, 0.0);
        for py in -ky..=ky {
            let y = y0 + (py * height as i64) as f64;
            for px in -kx..=kx {
                let x = x0 + (px * width as i64) as f64;
                let along = x * ct + y * st;
                let across = -x * st + y * ct;
                let env = (-(along * along + slant * slant * across * across) * inv).exp();
                acc += Complex64::from_polar(env, xi * along);
            }
        }
        acc * norm
    })
}

/// Gabor minus a scaled envelope so the filter sums to exactly zero.
fn morlet(height: usize, width: usize, sigma: f64, theta: f64, xi: f64, slant: f64) -> Array2<Complex64> {
    let wave = gabor(height, width, sigma, theta, xi, slant);
    let env = gabor(height, width, sigma, theta, 0.0, slant);
    let beta = wave.sum() / env.sum();
    wave - env.mapv(|e| e * beta)
}
