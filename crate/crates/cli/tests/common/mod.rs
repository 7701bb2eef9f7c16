#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fpscat_core::synth::dataset;
use image::{ImageBuffer, Luma};

/// Renders a seeded synthetic dataset as 8-bit PNGs under `dir` and writes
/// a manifest without a split column, so the pipeline splits it per subject.
pub fn write_dataset(dir: &Path, subjects: usize, per_subject: usize, width: usize, height: usize, seed: u64) -> PathBuf {
    std::fs::create_dir_all(dir.join("img")).unwrap();
    let mut manifest = String::new();
    for (i, (img, subject)) in dataset(subjects, per_subject, width, height, seed).iter().enumerate() {
        let name = format!("img/s{subject:02}_{i:03}.png");
        let buf = ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
            Luma([(img.pixels()[[y as usize, x as usize]] * 255.0).round() as u8])
        });
        buf.save(dir.join(&name)).unwrap();
        manifest.push_str(&format!("{name}\t{}\n", 100 + subject));
    }
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest).unwrap();
    path
}

pub fn fpscat(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_fpscat"))
        .args(args)
        .output()
        .expect("binary runs")
}
