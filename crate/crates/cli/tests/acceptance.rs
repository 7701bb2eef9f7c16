//! Acceptance checks for the complete pipeline. Each test prints one
//! `criterion N: PASS|FAIL` line with the measured values.

#![allow(clippy::needless_range_loop)]

mod common;
#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use fpscat_core::eval::compute_eer;
use fpscat_core::filterbank::FilterBank;
use fpscat_core::scattering::{extract_features, pool_features, scatter};
use fpscat_core::svm::{solve_dual, train_binary, train_multiclass};
use fpscat_core::synth::{Jitter, RidgePattern};
use fpscat_core::{GrayImage, Kernel, PcaModel, ScoreSet, SvmParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {n} ({name}): {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

#[test]
fn criterion_1_structural_counts() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = RidgePattern::random(&mut rng).render(80, 60, &Jitter::default(), &mut rng);
    let bank = FilterBank::new(5, 6, 80, 60).unwrap();
    let result = scatter(&img, &bank, 2).unwrap();
    let features = pool_features(&result).unwrap();
    let elapsed = start.elapsed();
    let pass = result.maps.len() == 391 && features.len() == 782 && elapsed < Duration::from_secs(5);
    report(
        1,
        "structural fidelity",
        pass,
        format!("maps={} features={} time={}", result.maps.len(), features.len(), secs(elapsed)),
    );
}

#[test]
fn criterion_2_cascade_oracle() {
    let start = Instant::now();
    let bank = FilterBank::new(3, 2, 16, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut shape_ok = true;
    for _ in 0..20 {
        let img = Array2::from_shape_fn((16, 16), |_| rng.random::<f64>());
        let fast = scatter(&GrayImage::from_array(img.clone()).unwrap(), &bank, 2).unwrap();
        let slow = oracles::scatter_oracle(&img, &bank, 2);
        shape_ok &= fast.maps.len() == slow.len();
        for ((path, map), (opath, omap)) in fast.maps.iter().zip(&slow) {
            let pairs: Vec<(usize, usize)> = path.scales.iter().copied().zip(path.orientations.iter().copied()).collect();
            shape_ok &= &pairs == opath;
            let err = map.iter().zip(omap).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    let elapsed = start.elapsed();
    let pass = shape_ok && worst <= 1e-8 && elapsed < Duration::from_secs(60);
    report(
        2,
        "cascade oracle",
        pass,
        format!("images=20 max_abs_err={worst:.3e} paths_match={shape_ok} time={}", secs(elapsed)),
    );
}

fn circular_shift(img: &GrayImage, dx: isize, dy: isize) -> GrayImage {
    let (h, w) = (img.height() as isize, img.width() as isize);
    let p = img.pixels();
    GrayImage::from_array(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        p[[(r as isize - dy).rem_euclid(h) as usize, (c as isize - dx).rem_euclid(w) as usize]]
    }))
    .unwrap()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn criterion_3_translation_invariance() {
    let start = Instant::now();
    let bank = FilterBank::new(5, 6, 80, 60).unwrap();
    let max_shift = 1isize << (5 - 2);
    let shifts = [(1, 0), (0, 1), (3, -5), (max_shift, 0), (0, -max_shift), (max_shift, max_shift), (-max_shift, 4)];
    let still = Jitter {
        shift: 0.0,
        rotation: 0.0,
        noise: 0.02,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let textures: Vec<GrayImage> = (0..10)
        .map(|_| RidgePattern::random(&mut rng).render(80, 60, &still, &mut rng))
        .collect();
    let base: Vec<Vec<f64>> = textures
        .iter()
        .map(|t| extract_features(t, &bank, 2).unwrap().values)
        .collect();
    let mut worst_rel: f64 = 0.0;
    let mut worst_intra: f64 = 0.0;
    for (t, f) in textures.iter().zip(&base) {
        for &(dx, dy) in &shifts {
            let g = extract_features(&circular_shift(t, dx, dy), &bank, 2).unwrap().values;
            let d = distance(f, &g);
            worst_rel = worst_rel.max(d / norm(f));
            worst_intra = worst_intra.max(d);
        }
    }
    let mut min_inter = f64::INFINITY;
    for i in 0..base.len() {
        for j in i + 1..base.len() {
            min_inter = min_inter.min(distance(&base[i], &base[j]));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_rel <= 0.15 && min_inter > worst_intra && elapsed < Duration::from_secs(60);
    report(
        3,
        "translation invariance",
        pass,
        format!(
            "max_rel_change={worst_rel:.3e} max_intra={worst_intra:.3e} min_inter={min_inter:.3e} time={}",
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_4_pca_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = rng.random_range(2..=20);
        let d = rng.random_range(1..=30);
        let data: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let model = PcaModel::fit(&data, 1).unwrap();
        let (mean, scatter) = oracles::scatter_matrix(&data);
        let (vals, vecs) = oracles::jacobi_eigen(scatter);
        let r = model.rank();
        let total: f64 = vals.iter().sum();
        for j in 0..d {
            worst = worst.max((model.mean()[j] - mean[j]).abs());
        }
        for k in 0..d {
            let got = if k < r { model.eigenvalues()[k] } else { 0.0 };
            worst = worst.max((got - vals[k]).abs());
        }
        let full = model.with_k(r).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let proj = full.project(&x).unwrap();
        for k in 0..r {
            let want: f64 = (0..d).map(|j| vecs[k][j] * (x[j] - mean[j])).sum();
            worst = worst.max((proj[k] - want).abs());
            let ratio = vals[..=k].iter().sum::<f64>() / total;
            worst = worst.max((model.retained_variance(k + 1).unwrap() - ratio).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-8 && elapsed < Duration::from_secs(30);
    report(
        4,
        "PCA oracle",
        pass,
        format!("datasets=50 max_abs_err={worst:.3e} time={}", secs(elapsed)),
    );
}

fn linear(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn criterion_5_svm_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_obj: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(1..=3);
        let c = [0.1, 1.0, 10.0][case % 3];
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let mut ys: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        ys[0] = 1.0;
        ys[1] = -1.0;
        let params = SvmParams::with_c(c);
        let sol = solve_dual(&xs, &ys, &Kernel::Linear, &params).unwrap();
        let best = oracles::brute_dual_qp(&xs, &ys, c, linear);
        worst_obj = worst_obj.max((sol.objective - best.objective).abs());

        let model = train_binary(&xs, &ys, &Kernel::Linear, &params).unwrap();
        let balance: f64 = sol.alpha.iter().zip(&ys).map(|(a, y)| a * y).sum();
        worst_kkt = worst_kkt.max(balance.abs());
        for ((x, &y), &a) in xs.iter().zip(&ys).zip(&sol.alpha) {
            let box_violation = (-a).max(a - c).max(0.0);
            let margin = y * model.decision_value(x).unwrap();
            let v = if a == 0.0 {
                (1.0 - margin).max(0.0)
            } else if a == c {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst_kkt = worst_kkt.max(v).max(box_violation);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_obj <= 1e-3 && worst_kkt <= 1e-3 && elapsed < Duration::from_secs(120);
    report(
        5,
        "SVM oracle",
        pass,
        format!(
            "datasets=100 max_objective_gap={worst_obj:.3e} max_kkt_violation={worst_kkt:.3e} time={}",
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_6_eer() {
    let start = Instant::now();
    let same: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let identical = compute_eer(&ScoreSet {
        genuine: same.clone(),
        impostor: same,
    })
    .unwrap()
    .0;
    let separated = compute_eer(&ScoreSet {
        genuine: vec![0.1, 0.2, 0.3],
        impostor: vec![0.5, 0.7, 0.9],
    })
    .unwrap()
    .0;
    // genuine ~ U(0, 1), impostor ~ U(0.5, 1.5) cross at FAR = FRR = 0.25
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let overlapping = compute_eer(&ScoreSet {
        genuine: (0..10_000).map(|_| rng.random_range(0.0..1.0)).collect(),
        impostor: (0..10_000).map(|_| rng.random_range(0.5..1.5)).collect(),
    })
    .unwrap()
    .0;
    let elapsed = start.elapsed();
    let pass = identical == 0.5
        && separated == 0.0
        && (overlapping - 0.25).abs() <= 0.02
        && elapsed < Duration::from_secs(10);
    report(
        6,
        "EER correctness",
        pass,
        format!(
            "identical={identical} separated={separated} uniforms={overlapping:.4} (analytic 0.25) time={}",
            secs(elapsed)
        ),
    );
}

fn summary(out: &Path) -> BTreeMap<String, f64> {
    let text = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let block = text.split("\n\n").nth(1).expect("summary block");
    block
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

fn run_stages(manifest: &Path, out: &Path, extra: &[&str]) {
    for stage in ["extract", "fit", "evaluate"] {
        let mut args = vec![stage, "--manifest", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = common::fpscat(&args);
        assert!(
            o.status.success(),
            "{stage} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn criterion_7_end_to_end_discrimination() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_dataset(dir.path(), 10, 10, 80, 60, 0);
    let out = dir.path().join("out");
    run_stages(&manifest, &out, &[]);
    let s = summary(&out);
    let elapsed = start.elapsed();
    let (acc, eer) = (s["accuracy"], s["eer"]);
    let pass = acc >= 0.9 && eer <= 0.15 && elapsed < Duration::from_secs(300);
    report(
        7,
        "end-to-end discrimination",
        pass,
        format!(
            "accuracy={acc:.3} eer={eer:.3} K={} time={}",
            s["pca_components"],
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_8_matching_latency() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (classes, dim, per_class) = (100, 200, 3);
    let centers: Vec<Vec<f64>> = (0..classes).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            xs.push(center.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect::<Vec<f64>>());
            labels.push(c);
        }
    }
    let model = train_multiclass(&xs, &labels, &Kernel::Linear, &SvmParams::default()).unwrap();
    let probes: Vec<Vec<f64>> = (0..500)
        .map(|i| centers[i % classes].iter().map(|v| v + rng.random_range(-0.3..0.3)).collect())
        .collect();
    let start = Instant::now();
    let mut correct = 0;
    for (i, p) in probes.iter().enumerate() {
        if model.predict(p).unwrap() == i % classes {
            correct += 1;
        }
    }
    let ms = 1e3 * start.elapsed().as_secs_f64() / probes.len() as f64;
    report(
        8,
        "matching latency",
        ms <= 97.0,
        format!("classes=100 dim=200 mean={ms:.4} ms/probe (limit 97) probe_accuracy={:.2}", correct as f64 / 500.0),
    );
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_dataset(dir.path(), 4, 6, 48, 40, 9);
    let flags = ["--scales", "3", "--orients", "4", "--resize", "48x40", "--seed", "11", "--format", "both"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_stages(&manifest, &a, &flags);
    run_stages(&manifest, &b, &flags);
    let first = snapshot(&a);
    run_stages(&manifest, &a, &flags);
    let rerun = snapshot(&a);
    let second = snapshot(&b);
    let names: Vec<&String> = first.keys().collect();
    let pass = first.len() >= 8 && first == second && first == rerun;
    report(
        9,
        "determinism",
        pass,
        format!("files={} identical={} {:?}", first.len(), pass, names),
    );
}
