//! CSV tables and SVG charts written by `evaluate`, `sweep-k` and `eer`.

use std::fmt::Write;

use fpscat_core::eval::CurvePoint;
use fpscat_core::EvalReport;

use crate::svg::{Chart, Series};

pub fn curve_csv(curve: &[CurvePoint], summary: &[(&str, String)]) -> String {
    let mut s = String::from("threshold,far,frr\n");
    for p in curve {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.far, p.frr);
    }
    s.push_str("\nmetric,value\n");
    for (k, v) in summary {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

pub fn report_csv(report: &EvalReport, k: usize, genuine: usize, impostor: usize) -> String {
    curve_csv(
        &report.curve,
        &[
            ("accuracy", report.accuracy.to_string()),
            ("eer", report.eer.to_string()),
            ("eer_threshold", report.eer_threshold.to_string()),
            ("pca_components", k.to_string()),
            ("genuine_scores", genuine.to_string()),
            ("impostor_scores", impostor.to_string()),
        ],
    )
}

/// Rows are true subjects, columns predicted subjects, both named by the
/// subject ids from the manifest.
pub fn confusion_csv(report: &EvalReport, subject_ids: &[i64]) -> String {
    let names: Vec<String> = report.classes.iter().map(|&c| subject_ids[c].to_string()).collect();
    let mut s = format!("true\\predicted,{}\n", names.join(","));
    for (name, row) in names.iter().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "{name},{}", cells.join(","));
    }
    s
}

pub fn sweep_csv(points: &[(usize, f64)]) -> String {
    let mut s = String::from("k,accuracy\n");
    for (k, a) in points {
        let _ = writeln!(s, "{k},{a}");
    }
    s
}

pub fn far_frr_svg(curve: &[CurvePoint], eer: f64, threshold: f64) -> String {
    let far: Vec<(f64, f64)> = curve.iter().map(|p| (p.threshold, p.far)).collect();
    let frr: Vec<(f64, f64)> = curve.iter().map(|p| (p.threshold, p.frr)).collect();
    let label = format!("EER {:.2}%", eer * 100.0);
    Chart {
        title: "FAR and FRR vs distance threshold",
        x_label: "distance threshold",
        y_label: "error rate",
        series: vec![
            Series {
                name: "FAR",
                color: "#c0392b",
                points: &far,
            },
            Series {
                name: "FRR",
                color: "#2c6fbb",
                points: &frr,
            },
        ],
        marker: Some((threshold, &label)),
    }
    .render()
}

pub fn sweep_svg(points: &[(usize, f64)]) -> String {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(k, a)| (k as f64, a)).collect();
    Chart {
        title: "Identification accuracy vs PCA components",
        x_label: "PCA components",
        y_label: "accuracy",
        series: vec![Series {
            name: "accuracy",
            color: "#27ae60",
            points: &pts,
        }],
        marker: None,
    }
    .render()
}
