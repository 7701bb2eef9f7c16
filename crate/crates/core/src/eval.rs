//! Identification accuracy and minimum-distance verification metrics.
//!
//! Verification scores come from a probe-vs-gallery protocol: for every
//! probe, the Euclidean distance to its nearest same-subject template is a
//! genuine score and the distance to its nearest other-subject template is
//! an impostor score. A probe is accepted at threshold `t` when its distance
//! is `<= t`.

use crate::error::{Error, Result};
use crate::pca::{PcaModel, Standardizer};
use crate::svm::{train_multiclass, Kernel, MulticlassSvmModel, SvmParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub curve: Vec<CurvePoint>,
    pub eer: f64,
    pub eer_threshold: f64,
    /// `confusion[true][predicted]`, indexed by position in `classes`.
    pub confusion: Vec<Vec<usize>>,
    pub classes: Vec<usize>,
}

/// Result of running a classifier over a labeled test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub confusion: Vec<Vec<usize>>,
    pub classes: Vec<usize>,
}

pub fn identify<V: AsRef<[f64]>>(model: &MulticlassSvmModel, xs: &[V], labels: &[usize]) -> Result<Identification> {
    if xs.is_empty() {
        return Err(Error::arg("empty test set"));
    }
    if xs.len() != labels.len() {
        return Err(Error::arg(format!("{} vectors but {} labels", xs.len(), labels.len())));
    }
    let classes = model.classes().to_vec();
    let index = |l: usize| classes.binary_search(&l).ok();
    let mut confusion = vec![vec![0; classes.len()]; classes.len()];
    let mut predictions = Vec::with_capacity(xs.len());
    let mut correct = 0;
    for (x, &l) in xs.iter().zip(labels) {
        let p = model.predict(x.as_ref())?;
        if p == l {
            correct += 1;
        }
        if let (Some(t), Some(q)) = (index(l), index(p)) {
            confusion[t][q] += 1;
        }
        predictions.push(p);
    }
    Ok(Identification {
        accuracy: correct as f64 / xs.len() as f64,
        predictions,
        confusion,
        classes,
    })
}

/// Fraction of test vectors whose predicted label matches.
pub fn accuracy<V: AsRef<[f64]>>(model: &MulticlassSvmModel, xs: &[V], labels: &[usize]) -> Result<f64> {
    Ok(identify(model, xs, labels)?.accuracy)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn min_distance_scores<G: AsRef<[f64]>, P: AsRef<[f64]>>(
    gallery: &[G],
    gallery_labels: &[usize],
    probes: &[P],
    probe_labels: &[usize],
) -> Result<ScoreSet> {
    if gallery.is_empty() || probes.is_empty() {
        return Err(Error::arg("gallery and probe sets must be nonempty"));
    }
    if gallery.len() != gallery_labels.len() || probes.len() != probe_labels.len() {
        return Err(Error::arg("vector and label counts differ"));
    }
    let mut genuine = Vec::with_capacity(probes.len());
    let mut impostor = Vec::with_capacity(probes.len());
    for (p, &pl) in probes.iter().zip(probe_labels) {
        let (mut same, mut other) = (f64::INFINITY, f64::INFINITY);
        for (g, &gl) in gallery.iter().zip(gallery_labels) {
            if g.as_ref().len() != p.as_ref().len() {
                return Err(Error::arg("gallery and probe vectors differ in length"));
            }
            let d = euclidean(g.as_ref(), p.as_ref());
            if gl == pl {
                same = same.min(d);
            } else {
                other = other.min(d);
            }
        }
        if same.is_infinite() {
            return Err(Error::invalid(format!("probe subject {pl} has no gallery template")));
        }
        genuine.push(same);
        if other.is_finite() {
            impostor.push(other);
        }
    }
    Ok(ScoreSet { genuine, impostor })
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// FAR and FRR at a threshold given pre-sorted score lists.
fn rates(genuine: &[f64], impostor: &[f64], t: f64) -> (f64, f64) {
    let accepted_impostors = impostor.partition_point(|&d| d <= t);
    let accepted_genuine = genuine.partition_point(|&d| d <= t);
    (
        accepted_impostors as f64 / impostor.len() as f64,
        (genuine.len() - accepted_genuine) as f64 / genuine.len() as f64,
    )
}

fn check_scores(scores: &ScoreSet) -> Result<()> {
    if scores.genuine.is_empty() || scores.impostor.is_empty() {
        return Err(Error::arg("genuine and impostor score lists must be nonempty"));
    }
    if scores
        .genuine
        .iter()
        .chain(&scores.impostor)
        .any(|d| !(d.is_finite() && *d >= 0.0))
    {
        return Err(Error::arg("scores must be finite nonnegative distances"));
    }
    Ok(())
}

/// `FAR(t)` = impostor fraction `<= t`, `FRR(t)` = genuine fraction `> t`.
pub fn far_frr_curve(scores: &ScoreSet, grid: &[f64]) -> Result<Vec<CurvePoint>> {
    check_scores(scores)?;
    if grid.is_empty() {
        return Err(Error::arg("threshold grid is empty"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::arg("threshold grid must be ascending"));
    }
    let g = sorted(&scores.genuine);
    let i = sorted(&scores.impostor);
    Ok(grid
        .iter()
        .map(|&t| {
            let (far, frr) = rates(&g, &i, t);
            CurvePoint { threshold: t, far, frr }
        })
        .collect())
}

/// Equal error rate over thresholds at every distinct score and every
/// midpoint between consecutive distinct scores. Returns `(eer, threshold)`
/// where `eer = (FAR + FRR) / 2` at the threshold minimizing `|FAR - FRR|`
/// (smallest such threshold).
pub fn compute_eer(scores: &ScoreSet) -> Result<(f64, f64)> {
    check_scores(scores)?;
    let g = sorted(&scores.genuine);
    let i = sorted(&scores.impostor);
    let mut values: Vec<f64> = g.iter().chain(&i).copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut consider = |t: f64| {
        let (far, frr) = rates(&g, &i, t);
        let gap = (far - frr).abs();
        if gap < best.0 {
            best = (gap, t, (far + frr) / 2.0);
        }
    };
    for (k, &v) in values.iter().enumerate() {
        consider(v);
        if let Some(&next) = values.get(k + 1) {
            consider(0.5 * (v + next));
        }
    }
    Ok((best.2, best.1))
}

/// `n` evenly spaced thresholds from 0 to slightly past the largest score.
pub fn threshold_grid(scores: &ScoreSet, n: usize) -> Vec<f64> {
    let max = scores
        .genuine
        .iter()
        .chain(&scores.impostor)
        .copied()
        .fold(0.0, f64::max);
    let hi = if max > 0.0 { max * 1.05 } else { 1.0 };
    let n = n.max(2);
    (0..n).map(|k| hi * k as f64 / (n - 1) as f64).collect()
}

/// Full report: identification on the test set plus minimum-distance
/// verification with the training set as gallery.
pub fn evaluate<V: AsRef<[f64]>>(
    model: &MulticlassSvmModel,
    gallery: &[V],
    gallery_labels: &[usize],
    test: &[V],
    test_labels: &[usize],
    grid_points: usize,
) -> Result<EvalReport> {
    let ident = identify(model, test, test_labels)?;
    let scores = min_distance_scores(gallery, gallery_labels, test, test_labels)?;
    let grid = threshold_grid(&scores, grid_points);
    let curve = far_frr_curve(&scores, &grid)?;
    let (eer, eer_threshold) = compute_eer(&scores)?;
    Ok(EvalReport {
        accuracy: ident.accuracy,
        curve,
        eer,
        eer_threshold,
        confusion: ident.confusion,
        classes: ident.classes,
    })
}

/// Labeled train/test split of raw feature vectors.
#[derive(Debug, Clone, Copy)]
pub struct SplitData<'a> {
    pub train: &'a [Vec<f64>],
    pub train_labels: &'a [usize],
    pub test: &'a [Vec<f64>],
    pub test_labels: &'a [usize],
}

/// Identification accuracy for each PCA component count in `k_grid`. PCA
/// is fitted once on the training vectors and truncated per `k`.
pub fn accuracy_vs_components(
    data: SplitData<'_>,
    k_grid: &[usize],
    params: &SvmParams,
    standardize: bool,
) -> Result<Vec<(usize, f64)>> {
    let k_max = *k_grid
        .iter()
        .max()
        .ok_or_else(|| Error::arg("component grid is empty"))?;
    let full = PcaModel::fit(data.train, k_max)?;
    k_grid
        .iter()
        .map(|&k| {
            let pca = full.with_k(k)?;
            let acc = pipeline_accuracy(&pca, data, params, standardize)?;
            Ok((k, acc))
        })
        .collect()
}

/// Projects both splits, optionally standardizes, trains a linear
/// one-vs-all SVM and reports test accuracy.
pub fn pipeline_accuracy(pca: &PcaModel, data: SplitData<'_>, params: &SvmParams, standardize: bool) -> Result<f64> {
    let mut train = pca.project_all(data.train)?;
    let mut test = pca.project_all(data.test)?;
    if standardize {
        let s = Standardizer::fit(&train)?;
        s.apply_all(&mut train);
        s.apply_all(&mut test);
    }
    let model = train_multiclass(&train, data.train_labels, &Kernel::Linear, params)?;
    accuracy(&model, &test, data.test_labels)
}
