//! Image decoding, resizing and dataset manifests.
//!
//! Images are converted to luminance with BT.601 weights, scaled to `[0, 1]`
//! by the format's maximum value, and resized bilinearly (pixel-center
//! aligned). No contrast normalization is applied.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// A grayscale image with intensities in `[0, 1]`, stored as a
/// `(height, width)` array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pixels: Array2<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::arg(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        let arr = Array2::from_shape_vec((height, width), pixels)
            .map_err(|e| Error::arg(e.to_string()))?;
        Self::from_array(arr)
    }

    /// Wraps a `(height, width)` array, checking the intensity range.
    pub fn from_array(pixels: Array2<f64>) -> Result<Self> {
        let (h, w) = pixels.dim();
        if w == 0 || h == 0 {
            return Err(Error::arg("image dimensions must be positive"));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::arg(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { pixels })
    }

    /// Constant image, handy for tests and padding.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn mean(&self) -> f64 {
        crate::scattering::shifted_mean(self.pixels.iter().copied(), self.pixels.len())
    }

    /// Bilinear resize. Sample positions are aligned on pixel centers, so a
    /// resize to the current size returns the image unchanged.
    pub fn resize(&self, target_w: usize, target_h: usize) -> Result<GrayImage> {
        if target_w == 0 || target_h == 0 {
            return Err(Error::arg("resize target must be positive"));
        }
        let (src_h, src_w) = self.pixels.dim();
        if src_w == target_w && src_h == target_h {
            return Ok(self.clone());
        }
        let xs = axis_samples(src_w, target_w);
        let ys = axis_samples(src_h, target_h);
        let p = &self.pixels;
        let out = Array2::from_shape_fn((target_h, target_w), |(r, c)| {
            let (y0, y1, ty) = ys[r];
            let (x0, x1, tx) = xs[c];
            // a + t * (b - a) keeps constant regions exact.
            let top = p[[y0, x0]] + tx * (p[[y0, x1]] - p[[y0, x0]]);
            let bot = p[[y1, x0]] + tx * (p[[y1, x1]] - p[[y1, x0]]);
            (top + ty * (bot - top)).clamp(0.0, 1.0)
        });
        Ok(GrayImage { pixels: out })
    }
}

fn axis_samples(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Decodes an image file (PNG, BMP, PGM/PPM), converts it to luminance and
/// resizes it to `target_w x target_h`.
pub fn load_image(path: impl AsRef<Path>, target_w: usize, target_h: usize) -> Result<GrayImage> {
    let path = path.as_ref();
    if target_w == 0 || target_h == 0 {
        return Err(Error::arg("resize target must be positive"));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    to_gray(&decoded).resize(target_w, target_h)
}

fn to_gray(img: &DynamicImage) -> GrayImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let rgb = |r: f64, g: f64, b: f64| LUMA_R * r + LUMA_G * g + LUMA_B * b;
    let pixels: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| p[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| p[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| p[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => img
            .to_rgb16()
            .pixels()
            .map(|p| rgb(p[0] as f64, p[1] as f64, p[2] as f64) / 65535.0)
            .collect(),
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => img
            .to_rgb32f()
            .pixels()
            .map(|p| rgb(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect(),
        _ => img
            .to_rgb8()
            .pixels()
            .map(|p| rgb(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0)
            .collect(),
    };
    let pixels = pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    GrayImage {
        pixels: Array2::from_shape_vec((h, w), pixels).expect("decoded buffer matches dimensions"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    /// Canonical label in `0..M`.
    pub label: usize,
    pub split: Split,
}

/// Labeled images with a train/test assignment. Labels are canonicalized to
/// `0..M` in order of first appearance; `subject_ids[label]` keeps the id
/// that appeared in the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub subject_ids: Vec<i64>,
}

impl DatasetManifest {
    /// Builds a manifest from `(path, subject id, split)` triples,
    /// canonicalizing labels and checking the split invariants.
    pub fn from_triples(items: Vec<(PathBuf, i64, Split)>) -> Result<Self> {
        let mut index: HashMap<i64, usize> = HashMap::new();
        let mut subject_ids = Vec::new();
        let mut entries = Vec::with_capacity(items.len());
        for (path, id, split) in items {
            let label = *index.entry(id).or_insert_with(|| {
                subject_ids.push(id);
                subject_ids.len() - 1
            });
            entries.push(ManifestEntry { path, label, split });
        }
        let manifest = DatasetManifest {
            entries,
            subject_ids,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(&e.path) {
                return Err(Error::invalid(format!(
                    "image {} listed more than once",
                    e.path.display()
                )));
            }
        }
        let mut has_train = vec![false; self.subject_ids.len()];
        for e in self.entries.iter().filter(|e| e.split == Split::Train) {
            has_train[e.label] = true;
        }
        if let Some(e) = self.entries.iter().find(|e| !has_train[e.label]) {
            return Err(Error::invalid(format!(
                "subject {} appears only in the test split",
                self.subject_ids[e.label]
            )));
        }
        Ok(())
    }

    pub fn num_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn train(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Split::Test)
    }

    /// Removes the first `n` subjects (in canonical order) and relabels the
    /// rest. Returns the remaining manifest.
    pub fn holdout(&self, n: usize) -> Result<DatasetManifest> {
        if n == 0 {
            return Ok(self.clone());
        }
        if n >= self.num_subjects() {
            return Err(Error::arg(format!(
                "cannot hold out {n} of {} subjects",
                self.num_subjects()
            )));
        }
        let triples = self
            .entries
            .iter()
            .filter(|e| e.label >= n)
            .map(|e| (e.path.clone(), self.subject_ids[e.label], e.split))
            .collect();
        DatasetManifest::from_triples(triples)
    }
}

struct RawLine {
    path: PathBuf,
    subject: i64,
    split: Option<Split>,
}

fn parse_manifest(path: &Path) -> Result<Vec<RawLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(parse_err(lineno, "empty image path".into()));
        }
        let subject = fields[1]
            .trim()
            .parse::<i64>()
            .map_err(|_| parse_err(lineno, format!("subject id {:?} is not an integer", fields[1])))?;
        let split = match fields.get(2).map(|s| s.trim()) {
            None => None,
            Some("train") => Some(Split::Train),
            Some("test") => Some(Split::Test),
            Some(other) => {
                return Err(parse_err(
                    lineno,
                    format!("split must be `train` or `test`, got {other:?}"),
                ))
            }
        };
        out.push(RawLine {
            path: base.join(fields[0]),
            subject,
            split,
        });
    }
    Ok(out)
}

/// Reads a manifest: one `<path>\t<subject-id>\t<train|test>` entry per
/// line, `#` comments allowed. Paths are resolved against the manifest's
/// directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let raw = parse_manifest(path)?;
    let mut triples = Vec::with_capacity(raw.len());
    for r in raw {
        let split = r.split.ok_or_else(|| {
            Error::invalid(format!("{}: entry {} has no split column", path.display(), r.path.display()))
        })?;
        triples.push((r.path, r.subject, split));
    }
    DatasetManifest::from_triples(triples)
}

/// Like [`load_manifest`], but a file whose lines all omit the split column
/// is split per subject with [`split_half`].
pub fn load_manifest_or_split(path: impl AsRef<Path>, seed: u64) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let raw = parse_manifest(path)?;
    if !raw.is_empty() && raw.iter().all(|r| r.split.is_none()) {
        let pairs: Vec<(PathBuf, i64)> = raw.into_iter().map(|r| (r.path, r.subject)).collect();
        return split_half(&pairs, seed);
    }
    load_manifest(path)
}

/// Shuffles each subject's images with a seeded RNG and puts the first
/// half (rounded up) in training, the rest in test. Entry order is kept.
pub fn split_half(entries: &[(PathBuf, i64)], seed: u64) -> Result<DatasetManifest> {
    let mut order: Vec<i64> = Vec::new();
    let mut members: HashMap<i64, Vec<usize>> = HashMap::new();
    for (i, (_, id)) in entries.iter().enumerate() {
        members
            .entry(*id)
            .or_insert_with(|| {
                order.push(*id);
                Vec::new()
            })
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = vec![Split::Test; entries.len()];
    for id in &order {
        let idx = members.get_mut(id).expect("subject recorded");
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "subject {id} has a single image; at least 2 are needed to split"
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = idx.len().div_ceil(2);
        for &i in &idx[..n_train] {
            split[i] = Split::Train;
        }
    }
    let triples = entries
        .iter()
        .zip(split)
        .map(|((p, id), s)| (p.clone(), *id, s))
        .collect();
    DatasetManifest::from_triples(triples)
}

/// Writes a manifest back out in the tab-separated format, with paths made
/// relative to `base` where possible.
pub fn write_manifest(manifest: &DatasetManifest, base: &Path) -> String {
    let mut s = String::from("# path\tsubject\tsplit\n");
    for e in &manifest.entries {
        let p = e.path.strip_prefix(base).unwrap_or(&e.path);
        s.push_str(&format!(
            "{}\t{}\t{}\n",
            p.display(),
            manifest.subject_ids[e.label],
            e.split
        ));
    }
    s
}
