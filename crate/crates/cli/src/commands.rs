//! The five pipeline stages. Each returns a summary for the terminal; all
//! files they write depend only on the configuration and inputs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use fpscat_core::eval::{
    accuracy_vs_components, compute_eer, far_frr_curve, identify, min_distance_scores, threshold_grid,
    SplitData,
};
use fpscat_core::imageio::{load_image, load_manifest_or_split};
use fpscat_core::pca::Standardizer;
use fpscat_core::scattering::{extract_features, FeatureSet};
use fpscat_core::svm::train_multiclass;
use fpscat_core::{DatasetManifest, Error, EvalReport, FilterBank, Kernel, MulticlassSvmModel, PcaModel, Result, Split};
use rayon::prelude::*;

use crate::config::{PipelineConfig, DEFAULT_K};
use crate::report;

const CURVE_POINTS: usize = 101;
const SWEEP_GRID: [usize; 9] = [1, 2, 5, 10, 20, 50, 100, 150, 200];

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found; run the earlier stage first")),
        ))
    }
}

pub fn load_dataset(cfg: &PipelineConfig) -> Result<DatasetManifest> {
    let manifest = load_manifest_or_split(&cfg.manifest, cfg.seed)?.holdout(cfg.holdout)?;
    if manifest.is_empty() {
        return Err(Error::invalid(format!("manifest {} has no entries", cfg.manifest.display())));
    }
    Ok(manifest)
}

/// Feature vectors divided by the manifest's train/test assignment.
pub struct Splits {
    pub train: Vec<Vec<f64>>,
    pub train_labels: Vec<usize>,
    pub test: Vec<Vec<f64>>,
    pub test_labels: Vec<usize>,
}

impl Splits {
    pub fn data(&self) -> SplitData<'_> {
        SplitData {
            train: &self.train,
            train_labels: &self.train_labels,
            test: &self.test,
            test_labels: &self.test_labels,
        }
    }
}

fn load_splits(cfg: &PipelineConfig, manifest: &DatasetManifest) -> Result<Splits> {
    let path = cfg.features_path();
    require(&path, "feature file")?;
    let set = FeatureSet::load(&path)?;
    let p = set.params;
    if p != cfg.scattering() {
        return Err(Error::invalid(format!(
            "{} was extracted with J={} L={} m={} at {}x{}; rerun extract with the current settings",
            path.display(),
            p.scales,
            p.orientations,
            p.max_layer,
            p.width,
            p.height
        )));
    }
    let labels_match = set.len() == manifest.len()
        && set
            .labels
            .iter()
            .zip(&manifest.entries)
            .all(|(&l, e)| usize::try_from(l) == Ok(e.label));
    if !labels_match {
        return Err(Error::invalid(format!(
            "{} does not match manifest {}; rerun extract",
            path.display(),
            cfg.manifest.display()
        )));
    }
    let mut s = Splits {
        train: Vec::new(),
        train_labels: Vec::new(),
        test: Vec::new(),
        test_labels: Vec::new(),
    };
    for (v, e) in set.vectors.into_iter().zip(&manifest.entries) {
        match e.split {
            Split::Train => {
                s.train.push(v);
                s.train_labels.push(e.label);
            }
            Split::Test => {
                s.test.push(v);
                s.test_labels.push(e.label);
            }
        }
    }
    if s.train.is_empty() {
        return Err(Error::invalid("manifest has no training images"));
    }
    Ok(s)
}

pub struct ExtractSummary {
    pub images: usize,
    pub feature_len: usize,
    pub path: PathBuf,
    pub seconds: f64,
}

impl fmt::Display for ExtractSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "extracted {} feature vectors of length {} to {}",
            self.images,
            self.feature_len,
            self.path.display()
        )?;
        write!(
            f,
            "time: {:.2} s total, {:.1} ms per image",
            self.seconds,
            1e3 * self.seconds / self.images as f64
        )
    }
}

pub fn extract(cfg: &PipelineConfig, dump_filters: Option<&Path>) -> Result<ExtractSummary> {
    let start = Instant::now();
    let manifest = load_dataset(cfg)?;
    let bank = FilterBank::new(cfg.scales, cfg.orientations, cfg.width, cfg.height)?;
    if let Some(dir) = dump_filters {
        bank.dump_pgm(dir)?;
    }
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let path = cfg.features_path();
    let partial = path.with_extension("scf.part");
    let _ = std::fs::remove_file(&path);

    let total = manifest.len();
    let step = (total / 20).max(1);
    let done = AtomicUsize::new(0);
    let vectors: Vec<Vec<f64>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let img = load_image(&e.path, cfg.width, cfg.height)?;
            let v = extract_features(&img, &bank, cfg.layers)?.values;
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n.is_multiple_of(step) || n == total {
                eprintln!("extract: {n}/{total}");
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;

    let mut set = FeatureSet::new(cfg.scattering());
    for (v, e) in vectors.into_iter().zip(&manifest.entries) {
        let label = i32::try_from(e.label).map_err(|_| Error::invalid("too many subjects"))?;
        set.push(label, v)?;
    }
    let written = set.save(&partial).and_then(|()| {
        std::fs::rename(&partial, &path).map_err(|e| Error::io(&path, e))
    });
    if let Err(e) = written {
        let _ = std::fs::remove_file(&partial);
        return Err(e);
    }
    if cfg.format.csv() {
        write_file(&cfg.out.join("features.csv"), set.to_csv())?;
    }
    Ok(ExtractSummary {
        images: total,
        feature_len: cfg.scattering().feature_len(),
        path,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub struct FitSummary {
    pub train_images: usize,
    pub rank: usize,
    pub k: usize,
    pub retained_variance: f64,
    pub classes: usize,
    pub support_vectors: usize,
    pub seconds: f64,
}

impl fmt::Display for FitSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "PCA: {} of {} components kept from {} training images ({:.2}% of variance)",
            self.k,
            self.rank,
            self.train_images,
            100.0 * self.retained_variance
        )?;
        writeln!(
            f,
            "SVM: {} one-vs-all classifiers, {} support vectors in total",
            self.classes, self.support_vectors
        )?;
        write!(f, "time: {:.2} s", self.seconds)
    }
}

fn choose_components(cfg: &PipelineConfig, full: &PcaModel) -> Result<usize> {
    let rank = full.rank();
    match (cfg.pca_k, cfg.epsilon) {
        (Some(k), _) if k > rank => Err(Error::arg(format!(
            "--pca-k {k} exceeds the rank {rank} of the training features; use at most {rank}"
        ))),
        (Some(k), _) => Ok(k),
        (None, Some(eps)) => full.choose_k(eps),
        (None, None) => Ok(DEFAULT_K.min(rank)),
    }
}

type Projected = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn project(pca: &PcaModel, splits: &Splits, standardize: bool) -> Result<Projected> {
    let mut train = pca.project_all(&splits.train)?;
    let mut test = pca.project_all(&splits.test)?;
    if standardize {
        let s = Standardizer::fit(&train)?;
        s.apply_all(&mut train);
        s.apply_all(&mut test);
    }
    Ok((train, test))
}

pub fn fit(cfg: &PipelineConfig) -> Result<FitSummary> {
    let start = Instant::now();
    let manifest = load_dataset(cfg)?;
    let splits = load_splits(cfg, &manifest)?;
    let full = PcaModel::fit(&splits.train, 1)?;
    let k = choose_components(cfg, &full)?;
    let pca = full.with_k(k)?;
    let (train, _) = project(&pca, &splits, cfg.standardize)?;
    let svm = train_multiclass(&train, &splits.train_labels, &Kernel::Linear, &cfg.svm())?;
    pca.save(&cfg.pca_path())?;
    svm.save(&cfg.svm_path())?;
    Ok(FitSummary {
        train_images: splits.train.len(),
        rank: pca.rank(),
        k,
        retained_variance: pca.retained_variance(k)?,
        classes: svm.classes().len(),
        support_vectors: svm.models().iter().map(|m| m.support_vectors().len()).sum(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub struct EvalSummary {
    pub accuracy: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub probes: usize,
    pub sweep: Vec<(usize, f64)>,
    pub ms_per_probe: f64,
    pub seconds: f64,
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "identification accuracy: {:.2}% over {} probes", 100.0 * self.accuracy, self.probes)?;
        writeln!(
            f,
            "equal error rate: {:.2}% at distance {:.6}",
            100.0 * self.eer,
            self.eer_threshold
        )?;
        if !self.sweep.is_empty() {
            let parts: Vec<String> = self.sweep.iter().map(|(k, a)| format!("{k}:{:.3}", a)).collect();
            writeln!(f, "accuracy by K: {}", parts.join(" "))?;
        }
        writeln!(f, "matching time: {:.4} ms per probe", self.ms_per_probe)?;
        write!(f, "time: {:.2} s", self.seconds)
    }
}

fn load_models(cfg: &PipelineConfig) -> Result<(PcaModel, MulticlassSvmModel)> {
    let (pp, sp) = (cfg.pca_path(), cfg.svm_path());
    require(&pp, "PCA model")?;
    require(&sp, "SVM model")?;
    let pca = PcaModel::load(&pp)?;
    let svm = MulticlassSvmModel::load(&sp)?;
    if svm.dim() != pca.k() {
        return Err(Error::invalid(format!(
            "{} expects {} inputs but {} produces {}; rerun fit",
            sp.display(),
            svm.dim(),
            pp.display(),
            pca.k()
        )));
    }
    Ok((pca, svm))
}

fn sweep_grid(cfg: &PipelineConfig, rank: usize, extra: Option<usize>) -> Result<Vec<usize>> {
    let mut grid = match &cfg.k_grid {
        Some(g) => {
            if let Some(&k) = g.iter().find(|&&k| k > rank) {
                return Err(Error::arg(format!(
                    "--k-grid value {k} exceeds the rank {rank} of the training features; use at most {rank}"
                )));
            }
            g.clone()
        }
        None => {
            let mut g: Vec<usize> = SWEEP_GRID.iter().copied().filter(|&k| k <= rank).collect();
            g.push(rank.min(DEFAULT_K));
            g.extend(extra);
            g
        }
    };
    grid.sort_unstable();
    grid.dedup();
    Ok(grid)
}

fn write_sweep(cfg: &PipelineConfig, sweep: &[(usize, f64)]) -> Result<()> {
    if cfg.format.csv() {
        write_file(&cfg.out.join("accuracy_vs_k.csv"), report::sweep_csv(sweep))?;
    }
    if cfg.format.svg() {
        write_file(&cfg.out.join("accuracy_vs_k.svg"), report::sweep_svg(sweep))?;
    }
    Ok(())
}

pub fn evaluate(cfg: &PipelineConfig) -> Result<EvalSummary> {
    let start = Instant::now();
    let (pca, svm) = load_models(cfg)?;
    let manifest = load_dataset(cfg)?;
    let splits = load_splits(cfg, &manifest)?;
    if splits.test.is_empty() {
        return Err(Error::invalid("manifest has no test images"));
    }
    let (train, test) = project(&pca, &splits, cfg.standardize)?;

    let t0 = Instant::now();
    for x in &test {
        svm.predict(x)?;
    }
    let ms_per_probe = 1e3 * t0.elapsed().as_secs_f64() / test.len() as f64;

    let ident = identify(&svm, &test, &splits.test_labels)?;
    let scores = if cfg.raw_distance {
        min_distance_scores(&splits.train, &splits.train_labels, &splits.test, &splits.test_labels)?
    } else {
        min_distance_scores(&train, &splits.train_labels, &test, &splits.test_labels)?
    };
    let (eer, eer_threshold) = compute_eer(&scores)?;
    let report = EvalReport {
        accuracy: ident.accuracy,
        curve: far_frr_curve(&scores, &threshold_grid(&scores, CURVE_POINTS))?,
        eer,
        eer_threshold,
        confusion: ident.confusion,
        classes: ident.classes,
    };
    let sweep = accuracy_vs_components(
        splits.data(),
        &sweep_grid(cfg, pca.rank(), Some(pca.k()))?,
        &cfg.svm(),
        cfg.standardize,
    )?;

    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    if cfg.format.csv() {
        let csv = report::report_csv(&report, pca.k(), scores.genuine.len(), scores.impostor.len());
        write_file(&cfg.out.join("report.csv"), csv)?;
        write_file(&cfg.out.join("confusion.csv"), report::confusion_csv(&report, &manifest.subject_ids))?;
    }
    if cfg.format.svg() {
        write_file(
            &cfg.out.join("far_frr.svg"),
            report::far_frr_svg(&report.curve, report.eer, report.eer_threshold),
        )?;
    }
    write_sweep(cfg, &sweep)?;
    Ok(EvalSummary {
        accuracy: report.accuracy,
        eer: report.eer,
        eer_threshold: report.eer_threshold,
        probes: splits.test.len(),
        sweep,
        ms_per_probe,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub struct SweepSummary {
    pub points: Vec<(usize, f64)>,
    pub rank: usize,
    pub chosen: Option<(f64, usize, f64)>,
}

impl fmt::Display for SweepSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "k,accuracy (PCA rank {})", self.rank)?;
        for (k, a) in &self.points {
            writeln!(f, "{k},{a:.4}")?;
        }
        if let Some((eps, k, v)) = self.chosen {
            writeln!(f, "K={k} retains {:.2}% of variance (target {:.2}%)", 100.0 * v, 100.0 * eps)?;
        }
        Ok(())
    }
}

pub fn sweep_k(cfg: &PipelineConfig) -> Result<SweepSummary> {
    let manifest = load_dataset(cfg)?;
    let splits = load_splits(cfg, &manifest)?;
    if splits.test.is_empty() {
        return Err(Error::invalid("manifest has no test images"));
    }
    let full = PcaModel::fit(&splits.train, 1)?;
    let chosen = match cfg.epsilon {
        Some(eps) => {
            let k = full.choose_k(eps)?;
            Some((eps, k, full.retained_variance(k)?))
        }
        None => None,
    };
    let grid = sweep_grid(cfg, full.rank(), chosen.map(|c| c.1))?;
    let points = accuracy_vs_components(splits.data(), &grid, &cfg.svm(), cfg.standardize)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_sweep(cfg, &points)?;
    Ok(SweepSummary {
        points,
        rank: full.rank(),
        chosen,
    })
}

pub struct EerSummary {
    pub eer: f64,
    pub threshold: f64,
    pub genuine: usize,
    pub impostor: usize,
}

impl fmt::Display for EerSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "equal error rate: {:.2}% at distance {:.6} ({} genuine, {} impostor scores)",
            100.0 * self.eer,
            self.threshold,
            self.genuine,
            self.impostor
        )
    }
}

/// Verification only: minimum-distance scores of test probes against the
/// training gallery, in PCA space unless `raw_distance` is set.
pub fn eer(cfg: &PipelineConfig) -> Result<EerSummary> {
    let manifest = load_dataset(cfg)?;
    let splits = load_splits(cfg, &manifest)?;
    if splits.test.is_empty() {
        return Err(Error::invalid("manifest has no test images"));
    }
    let scores = if cfg.raw_distance {
        min_distance_scores(&splits.train, &splits.train_labels, &splits.test, &splits.test_labels)?
    } else {
        require(&cfg.pca_path(), "PCA model")?;
        let pca = PcaModel::load(&cfg.pca_path())?;
        let (train, test) = project(&pca, &splits, cfg.standardize)?;
        min_distance_scores(&train, &splits.train_labels, &test, &splits.test_labels)?
    };
    let curve = far_frr_curve(&scores, &threshold_grid(&scores, CURVE_POINTS))?;
    let (eer, threshold) = compute_eer(&scores)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    if cfg.format.csv() {
        let summary = [("eer", eer.to_string()), ("eer_threshold", threshold.to_string())];
        write_file(&cfg.out.join("far_frr.csv"), report::curve_csv(&curve, &summary))?;
    }
    if cfg.format.svg() {
        write_file(&cfg.out.join("far_frr.svg"), report::far_frr_svg(&curve, eer, threshold))?;
    }
    Ok(EerSummary {
        eer,
        threshold,
        genuine: scores.genuine.len(),
        impostor: scores.impostor.len(),
    })
}
