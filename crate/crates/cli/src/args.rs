//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, ReportFormat, Resize};

#[derive(Debug, Parser)]
#[command(name = "fpscat", version, about = "Scattering-transform fingerprint recognition pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute scattering features for every manifest entry.
    Extract {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write the filter bank as PGM images into this directory.
        #[arg(long, value_name = "DIR")]
        dump_filters: Option<PathBuf>,
    },
    /// Fit PCA and the one-vs-all SVM on the training split.
    Fit(CommonArgs),
    /// Identification accuracy, FAR/FRR curve and EER on the test split.
    Evaluate(CommonArgs),
    /// Identification accuracy as a function of the number of PCA components.
    SweepK(CommonArgs),
    /// Verification-only FAR/FRR curve and equal error rate.
    Eer(CommonArgs),
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Extract { common, .. } => common,
            Command::Fit(c) | Command::Evaluate(c) | Command::SweepK(c) | Command::Eer(c) => c,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Tab-separated `path subject [train|test]` file.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// TOML file with default settings; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Resize every image to WxH before scattering [default: 80x60].
    #[arg(long, value_name = "WxH")]
    pub resize: Option<Resize>,
    /// Number of wavelet scales J [default: 5].
    #[arg(long, value_name = "J")]
    pub scales: Option<usize>,
    /// Number of wavelet orientations L [default: 6].
    #[arg(long, value_name = "L")]
    pub orients: Option<usize>,
    /// Scattering depth m [default: 2].
    #[arg(long, value_name = "M")]
    pub layers: Option<usize>,
    /// PCA components K [default: 200, capped at the PCA rank].
    #[arg(long, value_name = "K")]
    pub pca_k: Option<usize>,
    /// SVM penalty C [default: 1].
    #[arg(long, value_name = "C")]
    pub svm_c: Option<f64>,
    /// Pick the smallest K retaining this fraction of variance.
    #[arg(long, value_name = "EPS")]
    pub epsilon: Option<f64>,
    /// Seed for the per-subject train/test split [default: 0].
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Directory for features, models and reports [default: out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Report formats to write [default: both].
    #[arg(long, value_name = "csv|svg|both")]
    pub format: Option<ReportFormat>,
    /// Z-score PCA projections before the SVM.
    #[arg(long)]
    pub standardize: bool,
    /// Drop the first N subjects from the manifest.
    #[arg(long, value_name = "N")]
    pub holdout: Option<usize>,
    /// Compute verification distances on raw scattering features.
    #[arg(long)]
    pub raw_distance: bool,
    /// Comma-separated component counts for the accuracy sweep.
    #[arg(long, value_name = "K,...", value_delimiter = ',')]
    pub k_grid: Option<Vec<usize>>,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            manifest: self.manifest.clone(),
            out: self.out.clone(),
            resize: self.resize,
            scales: self.scales,
            orientations: self.orients,
            layers: self.layers,
            pca_k: self.pca_k,
            svm_c: self.svm_c,
            epsilon: self.epsilon,
            seed: self.seed,
            format: self.format,
            standardize: self.standardize.then_some(true),
            holdout: self.holdout,
            raw_distance: self.raw_distance.then_some(true),
            k_grid: self.k_grid.clone(),
        }
    }
}
