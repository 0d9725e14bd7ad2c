//! Gray-level closed-form matting Laplacian and a Jacobi-preconditioned
//! conjugate gradient solver.

use crate::imgcore::GrayImage;
use crate::{Error, Result};

/// Regulariser added to each window variance (divided by the window size).
pub const MATTING_EPS: f64 = 1e-7;

const STENCIL: usize = 5;
const TAPS: usize = STENCIL * STENCIL;

/// Matting Laplacian over 3x3 windows, stored as a 5x5 stencil per pixel
/// (two pixels interact iff they share a window, so offsets stay within 2).
#[derive(Debug, Clone)]
pub struct MattingLaplacian {
    width: usize,
    height: usize,
    coef: Vec<f64>,
}

impl MattingLaplacian {
    /// Only windows that fit entirely inside the image contribute.
    pub fn new(guide: &GrayImage, eps: f64) -> Self {
        let (w, h) = guide.dims();
        let mut coef = vec![0.0; w * h * TAPS];
        if w >= 3 && h >= 3 {
            let mut idx = [0usize; 9];
            let mut vals = [0.0f64; 9];
            for cy in 1..h - 1 {
                for cx in 1..w - 1 {
                    let mut k = 0;
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let (x, y) = (cx + dx - 1, cy + dy - 1);
                            idx[k] = y * w + x;
                            vals[k] = guide.get(x, y);
                            k += 1;
                        }
                    }
                    let mean = vals.iter().sum::<f64>() / 9.0;
                    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 9.0;
                    let inv = 1.0 / (var + eps / 9.0);
                    for a in 0..9 {
                        let (ia, da) = (idx[a], vals[a] - mean);
                        let (xa, ya) = (ia % w, ia / w);
                        for b in 0..9 {
                            let ib = idx[b];
                            let (xb, yb) = (ib % w, ib / w);
                            let delta = if a == b { 1.0 } else { 0.0 };
                            let value = delta - (1.0 + da * (vals[b] - mean) * inv) / 9.0;
                            let k = (yb + 2 - ya) * STENCIL + (xb + 2 - xa);
                            coef[ia * TAPS + k] += value;
                        }
                    }
                }
            }
        }
        Self {
            width: w,
            height: h,
            coef,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Entry `L[i][j]`; zero when the pixels share no window.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let w = self.width as isize;
        let dx = (j as isize % w) - (i as isize % w);
        let dy = (j as isize / w) - (i as isize / w);
        if dx.abs() > 2 || dy.abs() > 2 {
            return 0.0;
        }
        self.coef[i * TAPS + ((dy + 2) as usize) * STENCIL + (dx + 2) as usize]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.width * self.height)
            .map(|i| self.coef[i * TAPS + 2 * STENCIL + 2])
            .collect()
    }

    /// `out = L x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width as isize, self.height as isize);
        for y in 0..h {
            for xx in 0..w {
                let i = (y * w + xx) as usize;
                let row = &self.coef[i * TAPS..(i + 1) * TAPS];
                let mut acc = 0.0;
                for dy in -2..=2isize {
                    let ny = y + dy;
                    if ny < 0 || ny >= h {
                        continue;
                    }
                    for dx in -2..=2isize {
                        let nx = xx + dx;
                        if nx < 0 || nx >= w {
                            continue;
                        }
                        let c = row[((dy + 2) as usize) * STENCIL + (dx + 2) as usize];
                        if c != 0.0 {
                            acc += c * x[(ny * w + nx) as usize];
                        }
                    }
                }
                out[i] = acc;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive (semi-)definite `A`, starting
/// from zero, until `|r| <= tol * |b|`. Returns the solution and the number
/// of iterations used.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    diagonal: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let inv_diag: Vec<f64> = diagonal
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;
    for iter in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= tol {
            return Ok((x, iter));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}
