//! Dense-band factorizations for the grid operators (row-major lattice
//! ordering gives a bandwidth of about one grid row).

use crate::{Error, Result};
use std::ops::{Div, Mul, Sub};

/// Scalars the band solvers can act on.
pub trait BandScalar: Copy + Sub<Output = Self> + Mul<f64, Output = Self> + Div<f64, Output = Self> {}
impl BandScalar for f64 {}
impl BandScalar for num_complex::Complex64 {}

/// Cholesky factor `L L^T` of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    /// Row `i` holds `L[i][i-bw..=i]`.
    l: Vec<f64>,
}

impl BandCholesky {
    /// `entry(i, j)` must return `A[i][j]` for `j <= i` within the band.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                l[i * w + (j + bw - i)] = entry(i, j);
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::SolverFailure(format!("matrix not positive definite at row {i}")));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place<T: BandScalar>(&self, b: &mut [T]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s = s - b[k] * self.l[i * w + (k + bw - i)];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s = s - b[k] * self.l[k * w + (i + bw - k)];
            }
            b[i] = s / self.l[i * w + bw];
        }
    }
}

/// LU factorization with partial pivoting of a general band matrix with
/// `kl` sub- and `ku` super-diagonals.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    /// Upper factor bandwidth after pivoting fill.
    ku2: usize,
    /// Row `i` holds `U[i][i..=i+ku2]`.
    u: Vec<f64>,
    /// Multipliers `L[i+1..=i+kl][i]` per column `i`.
    l: Vec<f64>,
    piv: Vec<usize>,
    min_pivot: f64,
}

impl BandLu {
    /// `entry(i, j)` must return `A[i][j]` for `|i - j|` within the band.
    pub fn factor(n: usize, kl: usize, ku: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let ku2 = kl + ku;
        // Working rows store columns i-kl ..= i+ku2.
        let w = kl + ku2 + 1;
        let mut a = vec![0.0; n * w];
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                a[i * w + (j + kl - i)] = entry(i, j);
            }
        }
        let at = |i: usize, j: usize| i * w + (j + kl - i);
        let mut l = vec![0.0; n * kl.max(1)];
        let mut piv = vec![0usize; n];
        let mut min_pivot = f64::INFINITY;
        let mut scale = 0.0f64;
        for v in &a {
            scale = scale.max(v.abs());
        }
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a[at(k, k)].abs();
            for i in k + 1..=last {
                let v = a[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if best == 0.0 {
                return Err(Error::SolverFailure(format!("singular band matrix at column {k}")));
            }
            min_pivot = min_pivot.min(best);
            let jend = (k + ku2).min(n - 1);
            if p != k {
                for j in k..=jend {
                    a.swap(at(k, j), at(p, j));
                }
            }
            let d = a[at(k, k)];
            for i in k + 1..=last {
                let m = a[at(i, k)] / d;
                l[k * kl.max(1) + (i - k - 1)] = m;
                a[at(i, k)] = 0.0;
                if m != 0.0 {
                    for j in k + 1..=jend {
                        let ukj = a[at(k, j)];
                        a[at(i, j)] -= m * ukj;
                    }
                }
            }
        }
        let mut u = vec![0.0; n * (ku2 + 1)];
        for i in 0..n {
            for j in i..(i + ku2 + 1).min(n) {
                u[i * (ku2 + 1) + (j - i)] = a[at(i, j)];
            }
        }
        Ok(Self {
            n,
            kl,
            ku2,
            u,
            l,
            piv,
            min_pivot: min_pivot / scale.max(f64::MIN_POSITIVE),
        })
    }

    /// Smallest pivot magnitude relative to the largest matrix entry.
    pub fn relative_min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve_in_place<T: BandScalar>(&self, b: &mut [T]) {
        let (n, kl, ku2) = (self.n, self.kl, self.ku2);
        let lw = kl.max(1);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..(k + kl + 1).min(n) {
                let m = self.l[k * lw + (i - k - 1)];
                if m != 0.0 {
                    b[i] = b[i] - bk * m;
                }
            }
        }
        let uw = ku2 + 1;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..(i + uw).min(n) {
                s = s - b[j] * self.u[i * uw + (j - i)];
            }
            b[i] = s / self.u[i * uw];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(d: f64) -> impl Fn(usize, usize) -> f64 {
        move |i, j| match i.abs_diff(j) {
            0 => d,
            1 => -1.0,
            3 => 0.25,
            _ => 0.0,
        }
    }

    fn matvec(n: usize, bw: usize, a: &impl Fn(usize, usize) -> f64, x: &[f64]) -> Vec<f64> {
        (0..n)
            .map(|i| {
                (i.saturating_sub(bw)..(i + bw + 1).min(n))
                    .map(|j| a(i, j) * x[j])
                    .sum()
            })
            .collect()
    }

    #[test]
    fn cholesky_solves_spd_band() {
        let n = 40;
        let a = band(4.0);
        let f = BandCholesky::factor(n, 3, &a).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = matvec(n, 3, &a, &x);
        f.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_solves_indefinite_band() {
        let n = 50;
        let a = band(0.3);
        let f = BandLu::factor(n, 3, 3, &a).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.71).cos()).collect();
        let mut b = matvec(n, 3, &a, &x);
        f.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-10, "{} vs {}", b[i], x[i]);
        }
    }
}
