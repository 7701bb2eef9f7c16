//! Pipeline configuration: built-in defaults, an optional TOML file, and
//! command-line overrides, applied in that order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fpscat_core::scattering::ScatteringParams;
use fpscat_core::{Error, Result, SvmParams};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Svg,
    Both,
}

impl ReportFormat {
    pub fn csv(self) -> bool {
        matches!(self, ReportFormat::Csv | ReportFormat::Both)
    }

    pub fn svg(self) -> bool {
        matches!(self, ReportFormat::Svg | ReportFormat::Both)
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            "both" => Ok(ReportFormat::Both),
            other => Err(format!("expected csv, svg or both, got {other:?}")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Svg => "svg",
            ReportFormat::Both => "both",
        })
    }
}

/// Image size given as `WxH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resize {
    pub width: usize,
    pub height: usize,
}

impl FromStr for Resize {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| format!("invalid dimension {v:?} in {s:?}"))
        };
        Ok(Resize {
            width: parse(w)?,
            height: parse(h)?,
        })
    }
}

impl<'de> Deserialize<'de> for Resize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Settings that may come from the config file or the command line. Every
/// field is optional; unset fields fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub resize: Option<Resize>,
    pub scales: Option<usize>,
    pub orientations: Option<usize>,
    pub layers: Option<usize>,
    pub pca_k: Option<usize>,
    pub svm_c: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub format: Option<ReportFormat>,
    pub standardize: Option<bool>,
    pub holdout: Option<usize>,
    pub raw_distance: Option<bool>,
    pub k_grid: Option<Vec<usize>>,
}

impl Overrides {
    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: Overrides) -> Overrides {
        Overrides {
            manifest: self.manifest.or(base.manifest),
            out: self.out.or(base.out),
            resize: self.resize.or(base.resize),
            scales: self.scales.or(base.scales),
            orientations: self.orientations.or(base.orientations),
            layers: self.layers.or(base.layers),
            pca_k: self.pca_k.or(base.pca_k),
            svm_c: self.svm_c.or(base.svm_c),
            epsilon: self.epsilon.or(base.epsilon),
            seed: self.seed.or(base.seed),
            format: self.format.or(base.format),
            standardize: self.standardize.or(base.standardize),
            holdout: self.holdout.or(base.holdout),
            raw_distance: self.raw_distance.or(base.raw_distance),
            k_grid: self.k_grid.or(base.k_grid),
        }
    }
}

pub fn load_config_file(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::invalid(format!("config {}: {}", path.display(), e.message())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub width: usize,
    pub height: usize,
    pub scales: usize,
    pub orientations: usize,
    pub layers: usize,
    /// `None` means "200, capped at the PCA rank".
    pub pca_k: Option<usize>,
    pub svm_c: f64,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub format: ReportFormat,
    pub standardize: bool,
    pub holdout: usize,
    pub raw_distance: bool,
    pub k_grid: Option<Vec<usize>>,
}

pub const DEFAULT_K: usize = 200;

impl PipelineConfig {
    pub fn resolve(o: Overrides) -> Result<Self> {
        let manifest = o
            .manifest
            .ok_or_else(|| Error::arg("no manifest given; pass --manifest or set `manifest` in the config file"))?;
        let resize = o.resize.unwrap_or(Resize { width: 80, height: 60 });
        let cfg = PipelineConfig {
            manifest,
            out: o.out.unwrap_or_else(|| PathBuf::from("out")),
            width: resize.width,
            height: resize.height,
            scales: o.scales.unwrap_or(5),
            orientations: o.orientations.unwrap_or(6),
            layers: o.layers.unwrap_or(2),
            pca_k: o.pca_k,
            svm_c: o.svm_c.unwrap_or(1.0),
            epsilon: o.epsilon,
            seed: o.seed.unwrap_or(0),
            format: o.format.unwrap_or(ReportFormat::Both),
            standardize: o.standardize.unwrap_or(false),
            holdout: o.holdout.unwrap_or(0),
            raw_distance: o.raw_distance.unwrap_or(false),
            k_grid: o.k_grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.orientations == 0 {
            return Err(Error::arg("--scales and --orients must be at least 1"));
        }
        if self.layers > self.scales {
            return Err(Error::arg(format!(
                "--layers {} exceeds --scales {}",
                self.layers, self.scales
            )));
        }
        if self.width < (1 << self.scales) || self.height < (1 << self.scales) {
            return Err(Error::arg(format!(
                "{}x{} is too small for {} scales (need at least {} pixels per side)",
                self.width,
                self.height,
                self.scales,
                1usize << self.scales
            )));
        }
        if self.pca_k == Some(0) {
            return Err(Error::arg("--pca-k must be at least 1"));
        }
        if !(self.svm_c.is_finite() && self.svm_c > 0.0) {
            return Err(Error::arg(format!("--svm-c must be positive, got {}", self.svm_c)));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::arg(format!("--epsilon must lie in (0, 1], got {e}")));
            }
        }
        if let Some(grid) = &self.k_grid {
            if grid.is_empty() || grid.contains(&0) {
                return Err(Error::arg("--k-grid needs one or more positive values"));
            }
        }
        Ok(())
    }

    pub fn scattering(&self) -> ScatteringParams {
        ScatteringParams {
            scales: self.scales,
            orientations: self.orientations,
            max_layer: self.layers,
            width: self.width,
            height: self.height,
        }
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams::with_c(self.svm_c)
    }

    pub fn features_path(&self) -> PathBuf {
        self.out.join("features.scf")
    }

    pub fn pca_path(&self) -> PathBuf {
        self.out.join("pca.bin")
    }

    pub fn svm_path(&self) -> PathBuf {
        self.out.join("svm.bin")
    }
}
