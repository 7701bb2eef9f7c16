//! Brute-force reference implementations used to freeze expected values.
//! None of these share code paths with the library beyond reading filters.

#![allow(dead_code, clippy::needless_range_loop, clippy::type_complexity)]

use std::f64::consts::PI;

use fpscat_core::FilterBank;
use ndarray::Array2;
use num_complex::Complex64;

/// Direct O(N^2) inverse DFT of a frequency-domain array.
pub fn idft2(spec: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = spec.dim();
    let norm = 1.0 / (h * w) as f64;
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((ky, kx), v) in spec.indexed_iter() {
            let phase = 2.0 * PI * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
            acc += v * Complex64::from_polar(1.0, phase);
        }
        acc * norm
    })
}

/// Direct circular convolution `(f * g)[p] = sum_q f[q] g[p - q]`.
pub fn circular_conv(f: &Array2<Complex64>, g: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = f.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for v in 0..h {
            for u in 0..w {
                acc += f[[v, u]] * g[[(y + h - v) % h, (x + w - u) % w]];
            }
        }
        acc
    })
}

pub fn to_complex(a: &Array2<f64>) -> Array2<Complex64> {
    a.mapv(|v| Complex64::new(v, 0.0))
}

/// Scattering maps computed step by step in the spatial domain, in the
/// canonical order (layer, then `(j1, l1, j2, l2, ...)`).
pub fn scatter_oracle(img: &Array2<f64>, bank: &FilterBank, max_layer: usize) -> Vec<(Vec<(usize, usize)>, Array2<f64>)> {
    let scales = bank.scales();
    let orients = bank.orientations();
    let psi: Vec<Vec<Array2<Complex64>>> = (0..scales)
        .map(|j| (0..orients).map(|l| idft2(bank.bandpass(j, l))).collect())
        .collect();
    let phi = idft2(&to_complex(bank.lowpass()));
    let average = |u: &Array2<f64>| circular_conv(&to_complex(u), &phi).mapv(|c| c.re);

    let mut out = vec![(vec![], average(img))];
    let mut frontier: Vec<(Vec<(usize, usize)>, Array2<f64>)> = vec![(vec![], img.clone())];
    for _ in 0..max_layer {
        let mut next = Vec::new();
        for (path, u) in &frontier {
            let bound = path.last().map(|&(j, _)| j).unwrap_or(scales);
            for j in 0..bound {
                for l in 0..orients {
                    let m = circular_conv(&to_complex(u), &psi[j][l]).mapv(|c| c.norm());
                    let mut p = path.clone();
                    p.push((j, l));
                    next.push((p, m));
                }
            }
        }
        next.sort_by(|a, b| a.0.cmp(&b.0));
        for (p, u) in &next {
            out.push((p.clone(), average(u)));
        }
        frontier = next;
    }
    out
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in non-increasing order and eigenvectors (as rows) with the
/// largest-magnitude entry made positive.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let total: f64 = a.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| {
            let mut col: Vec<f64> = v.iter().map(|row| row[i]).collect();
            let peak = col.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if peak < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            (a[i][i], col)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs.into_iter().unzip()
}

/// `sum_i (x_i - mean)(x_i - mean)^T`, formed explicitly.
pub fn scatter_matrix(data: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = data[0].len();
    let m = data.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / m).collect();
    let mut c = vec![vec![0.0; d]; d];
    for x in data {
        for a in 0..d {
            for b in 0..d {
                c[a][b] += (x[a] - mean[a]) * (x[b] - mean[b]);
            }
        }
    }
    (mean, c)
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

pub struct QpOptimum {
    pub objective: f64,
    pub alpha: Vec<f64>,
}

/// Global maximum of the soft-margin dual by enumerating every
/// lower/upper/free assignment and solving the stationarity system on the
/// free set. Exponential in `n`; meant for `n <= 8`.
pub fn brute_dual_qp(xs: &[Vec<f64>], ys: &[f64], c: f64, kernel: impl Fn(&[f64], &[f64]) -> f64) -> QpOptimum {
    let n = xs.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| ys[i] * ys[j] * kernel(&xs[i], &xs[j])).collect())
        .collect();
    let objective = |a: &[f64]| {
        let lin: f64 = a.iter().sum();
        let quad: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[i] * a[j] * q[i][j]).sum();
        lin - 0.5 * quad
    };
    let mut best = QpOptimum {
        objective: f64::NEG_INFINITY,
        alpha: vec![0.0; n],
    };
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut rem = code;
        for s in state.iter_mut() {
            *s = (rem % 3) as u8;
            rem /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let bound_sum: f64 = (0..n).filter(|&i| state[i] != 2).map(|i| ys[i] * alpha[i]).sum();
        if free.is_empty() {
            if bound_sum.abs() > 1e-12 {
                continue;
            }
        } else {
            let f = free.len();
            let mut a = vec![vec![0.0; f + 1]; f + 1];
            let mut b = vec![0.0; f + 1];
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[r][s] = q[i][j];
                }
                a[r][f] = ys[i];
                a[f][r] = ys[i];
                b[r] = 1.0 - (0..n).filter(|&j| state[j] != 2).map(|j| q[i][j] * alpha[j]).sum::<f64>();
            }
            b[f] = -bound_sum;
            let Some(sol) = solve_dense(a, b) else { continue };
            if sol[..f].iter().any(|&v| v < -1e-9 || v > c + 1e-9) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r].clamp(0.0, c);
            }
        }
        let val = objective(&alpha);
        if val > best.objective {
            best = QpOptimum { objective: val, alpha };
        }
    }
    best
}

/// Dual objective at a given multiplier vector.
pub fn dual_objective(xs: &[Vec<f64>], ys: &[f64], alpha: &[f64], kernel: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let n = xs.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * ys[i] * ys[j] * kernel(&xs[i], &xs[j]);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// All-pairs distances; genuine = nearest same-label gallery entry,
/// impostor = nearest other-label gallery entry, per probe.
pub fn pairwise_scores(gallery: &[Vec<f64>], gl: &[usize], probes: &[Vec<f64>], pl: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut dist = vec![vec![0.0; gallery.len()]; probes.len()];
    for (i, p) in probes.iter().enumerate() {
        for (j, g) in gallery.iter().enumerate() {
            dist[i][j] = p.iter().zip(g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        }
    }
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for i in 0..probes.len() {
        let same = (0..gallery.len()).filter(|&j| gl[j] == pl[i]).map(|j| dist[i][j]).fold(f64::INFINITY, f64::min);
        let other = (0..gallery.len()).filter(|&j| gl[j] != pl[i]).map(|j| dist[i][j]).fold(f64::INFINITY, f64::min);
        genuine.push(same);
        impostor.push(other);
    }
    (genuine, impostor)
}

/// Exhaustive EER: evaluate FAR/FRR by counting at every candidate.
pub fn eer_by_counting(genuine: &[f64], impostor: &[f64]) -> (f64, f64) {
    let mut cands: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let mids: Vec<f64> = cands.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    cands.extend(mids);
    cands.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &t in &cands {
        let far = impostor.iter().filter(|&&d| d <= t).count() as f64 / impostor.len() as f64;
        let frr = genuine.iter().filter(|&&d| d > t).count() as f64 / genuine.len() as f64;
        if (far - frr).abs() < best.0 {
            best = ((far - frr).abs(), (far + frr) / 2.0, t);
        }
    }
    (best.1, best.2)
}
