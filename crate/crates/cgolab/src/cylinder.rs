//! The cylinder `(0,T) x M0`: the first-order resolvent `S_z` on the line,
//! the mode-wise remainder solve and CGO assembly.

use crate::quasimode::{discrete_residual, Quasimode};
use crate::spectral::{project, synthesize_many, Grid, SpectralBasis};
use crate::{Error, Result, C64};
use rayon::prelude::*;

/// Smallest admissible `|Re z|` for [`sz_solve`].
pub const RE_Z_FLOOR: f64 = 1e-8;

/// `phi1(w) = (1 - e^{-w}) / w` and `phi2(w) = (1 - e^{-w} - w e^{-w}) / w^2`.
fn phi12(w: C64) -> (C64, C64, C64) {
    let e = (-w).exp();
    if w.norm() < 0.1 {
        // series: phi1 = sum (-w)^n/(n+1)!, phi2 = sum (n+1)(-w)^n/(n+2)!
        let mut p1 = C64::new(0.0, 0.0);
        let mut p2 = C64::new(0.0, 0.0);
        let mut pw = C64::new(1.0, 0.0);
        let mut fact = 1.0f64;
        for n in 0..12 {
            fact *= (n + 1) as f64;
            p1 += pw / fact;
            p2 += pw * ((n + 1) as f64) / (fact * (n + 2) as f64);
            pw *= -w;
        }
        (e, p1, p2)
    } else {
        let p1 = (-e + 1.0) / w;
        let p2 = (-e - w * e + 1.0) / (w * w);
        (e, p1, p2)
    }
}

/// Solve `u' - z u = f` on a uniform grid of spacing `h`, `f` piecewise linear
/// and supported inside the grid; the decaying solution is selected.
pub fn sz_solve(z: C64, f: &[C64], h: f64) -> Result<Vec<C64>> {
    sz_solve_with_tail(z, f, h, C64::new(0.0, 0.0))
}

/// As [`sz_solve`] with a prescribed value at the starting end (the right end
/// for `Re z > 0`, the left end otherwise).
fn sz_solve_with_tail(z: C64, f: &[C64], h: f64, start: C64) -> Result<Vec<C64>> {
    if z.re.abs() < RE_Z_FLOOR {
        return Err(Error::ZeroRealPart {
            re: z.re,
            floor: RE_Z_FLOOR,
        });
    }
    let n = f.len();
    let mut u = vec![C64::new(0.0, 0.0); n];
    if n == 0 {
        return Ok(u);
    }
    if z.re > 0.0 {
        let (e, p1, p2) = phi12(z * h);
        let (wa, wb) = ((p1 - p2) * h, p2 * h);
        u[n - 1] = start;
        for i in (0..n - 1).rev() {
            u[i] = e * u[i + 1] - (f[i] * wa + f[i + 1] * wb);
        }
    } else {
        let (e, p1, p2) = phi12(-z * h);
        let (wa, wb) = ((p1 - p2) * h, p2 * h);
        u[0] = start;
        for i in 0..n - 1 {
            u[i + 1] = e * u[i] + f[i + 1] * wa + f[i] * wb;
        }
    }
    Ok(u)
}

/// Solve `(d - p)(d - q) u = f` on the line, `Re p, Re q != 0`.
pub fn second_order_solve(p: C64, q: C64, f: &[C64], h: f64, split_floor: f64) -> Result<Vec<C64>> {
    if (p - q).norm() >= split_floor {
        let a = sz_solve(p, f, h)?;
        let b = sz_solve(q, f, h)?;
        let d = p - q;
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y) / d).collect());
    }
    let g = sz_solve(q, f, h)?;
    // The tail of S_q f outside the grid is exponential; integrate it exactly
    // when S_p starts on that side.
    let n = g.len();
    let start = if (p.re > 0.0) != (q.re > 0.0) {
        let gb = if p.re > 0.0 { g[n - 1] } else { g[0] };
        -gb / (p - q)
    } else {
        C64::new(0.0, 0.0)
    };
    sz_solve_with_tail(p, &g, h, start)
}

/// Principal square root of a real number (positive imaginary part when negative).
pub fn principal_sqrt(x: f64) -> C64 {
    if x >= 0.0 {
        C64::new(x.sqrt(), 0.0)
    } else {
        C64::new(0.0, (-x).sqrt())
    }
}

/// Uniform grid in `x1` covering `(0, T)` plus a margin on both sides where
/// sources are cut off smoothly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineGrid {
    pub t_len: f64,
    /// Cells in `(0, T)`.
    pub cells: usize,
    /// Transition length of the source cutoff outside `(0, T)`.
    pub ramp: f64,
    /// Extra zero padding beyond the ramp.
    pub pad: f64,
}

impl LineGrid {
    pub fn new(t_len: f64, cells: usize) -> Result<Self> {
        if !(t_len > 0.0) || cells == 0 {
            return Err(Error::Domain(format!("line grid needs T > 0 and cells > 0 (T={t_len}, cells={cells})")));
        }
        Ok(Self {
            t_len,
            cells,
            ramp: 0.5,
            pad: 1.0,
        })
    }

    pub fn h(&self) -> f64 {
        self.t_len / self.cells as f64
    }

    /// Cells before `x1 = 0`.
    pub fn offset(&self) -> usize {
        ((self.ramp + self.pad) / self.h()).ceil() as usize
    }

    pub fn len(&self) -> usize {
        self.cells + 2 * self.offset() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.offset() as f64) * self.h()
    }

    /// Smooth cutoff equal to 1 on `[0, T]` and 0 beyond the ramp.
    pub fn cutoff(&self, x: f64) -> f64 {
        let d = if x < 0.0 {
            -x
        } else if x > self.t_len {
            x - self.t_len
        } else {
            0.0
        };
        if d >= self.ramp {
            return 0.0;
        }
        let u = d / self.ramp;
        1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    }

    /// Plane `i` of a cylinder field sits at line index `offset + i`.
    pub fn plane_index(&self, plane: usize) -> usize {
        self.offset() + plane
    }
}

/// Complex field on the planes `x1 = i h1`, `i = 0..=N1`, over all disk nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3D {
    pub planes: usize,
    pub nodes: usize,
    pub h1: f64,
    pub data: Vec<C64>,
}

impl Field3D {
    pub fn zeros(planes: usize, nodes: usize, h1: f64) -> Self {
        Self {
            planes,
            nodes,
            h1,
            data: vec![C64::new(0.0, 0.0); planes * nodes],
        }
    }

    pub fn from_fn(planes: usize, grid: &Grid, h1: f64, f: impl Fn(f64, [f64; 2]) -> C64 + Sync) -> Self {
        let nodes = grid.n_all();
        let mut out = Self::zeros(planes, nodes, h1);
        out.data.par_chunks_mut(nodes).enumerate().for_each(|(i, row)| {
            let x1 = i as f64 * h1;
            for (v, p) in row.iter_mut().zip(&grid.nodes) {
                *v = f(x1, *p);
            }
        });
        out
    }

    pub fn plane(&self, i: usize) -> &[C64] {
        &self.data[i * self.nodes..(i + 1) * self.nodes]
    }

    pub fn plane_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.nodes..(i + 1) * self.nodes]
    }

    pub fn at(&self, plane: usize, node: usize) -> C64 {
        self.data[plane * self.nodes + node]
    }

    /// Trapezoid rule in `x1` times the disk quadrature.
    pub fn integrate(&self, grid: &Grid) -> C64 {
        (0..self.planes)
            .map(|i| {
                let w = if i == 0 || i + 1 == self.planes { 0.5 } else { 1.0 };
                grid.integrate(self.plane(i)) * (w * self.h1)
            })
            .sum()
    }

    /// As [`Self::integrate`] with the second-order volume weights.
    pub fn integrate_volume(&self, grid: &Grid) -> C64 {
        (0..self.planes)
            .map(|i| {
                let w = if i == 0 || i + 1 == self.planes { 0.5 } else { 1.0 };
                grid.integrate_volume(self.plane(i)) * (w * self.h1)
            })
            .sum()
    }

    pub fn l2_norm(&self, grid: &Grid) -> f64 {
        let sq = Field3D {
            data: self.data.iter().map(|v| C64::new(v.norm_sqr(), 0.0)).collect(),
            ..*self
        };
        sq.integrate(grid).re.max(0.0).sqrt()
    }

    pub fn map2(&self, other: &Field3D, f: impl Fn(C64, C64) -> C64 + Sync) -> Field3D {
        assert_eq!(self.data.len(), other.data.len());
        Field3D {
            data: self.data.par_iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
            ..*self
        }
    }

    pub fn scale(&self, c: C64) -> Field3D {
        Field3D {
            data: self.data.iter().map(|v| v * c).collect(),
            ..*self
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Mode coefficients on the padded line: `modes[j][i]`.
pub type ModeLines = Vec<Vec<C64>>;

/// `r_j = S_{mu_j - zeta} S_{-mu_j - zeta} f_j` for every mode, solving
/// `((d + zeta)^2 - mu_j^2) r_j = f_j` with `mu_j = sqrt(omega_j^2 - k^2)`.
pub fn remainder_modes(zeta: C64, k: f64, eigenvalues: &[f64], fhat: &ModeLines, h: f64) -> Result<ModeLines> {
    let tau = zeta.re.abs();
    for (j, &w2) in eigenvalues.iter().enumerate() {
        let gap = w2 - k * k;
        if gap > 0.0 && (tau * tau - gap).abs() < 1e-6 * (1.0 + tau * tau) {
            return Err(Error::Resonance {
                j,
                omega2: w2,
                tau,
                k,
            });
        }
    }
    eigenvalues
        .par_iter()
        .zip(fhat.par_iter())
        .map(|(&w2, f)| {
            let mu = principal_sqrt(w2 - k * k);
            second_order_solve(mu - zeta, -mu - zeta, f, h, 1e-3 * (1.0 + tau))
        })
        .collect()
}

/// The four CGO families of the reconstruction: `e^{zeta x1}(v + r)` with
/// `zeta = sign * (tau + i lambda)` and `v` the quasimode, or with
/// `zeta = sign * (tau - i lambda)` and the conjugate quasimode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CgoKind {
    pub sign: i8,
    pub conj: bool,
}

impl CgoKind {
    pub const V1: CgoKind = CgoKind { sign: -1, conj: false };
    pub const V2: CgoKind = CgoKind { sign: 1, conj: true };
    pub const V3: CgoKind = CgoKind { sign: -1, conj: false };
    pub const V4: CgoKind = CgoKind { sign: 1, conj: true };

    pub fn zeta(&self, tau: f64, lambda: f64) -> C64 {
        let l = if self.conj { -lambda } else { lambda };
        C64::new(tau, l) * f64::from(self.sign)
    }
}

/// A CGO solution sampled on the cylinder planes.
#[derive(Debug, Clone)]
pub struct CgoSolution {
    pub field: Field3D,
    pub remainder: Field3D,
    pub kind: CgoKind,
    pub zeta: C64,
    pub k: f64,
    /// Transversal profile `v` (or its conjugate) on all disk nodes.
    pub profile: Vec<C64>,
    /// `|r|_{L^2}` over the cylinder.
    pub remainder_norm: f64,
    /// `|f|_{L^2}` of the cut-off source over the padded line.
    pub source_norm: f64,
    /// Fraction of the source norm outside the retained modes.
    pub truncation: f64,
    /// `|(Delta_h + k^2) u| / (|s|^2 |u|)` over interior planes.
    pub helmholtz_residual: f64,
}

/// Build `e^{zeta x1}(v + r)` for the given family.
pub fn assemble_cgo(kind: CgoKind, qm: &Quasimode, grid: &Grid, basis: &SpectralBasis, line: &LineGrid) -> Result<CgoSolution> {
    let sp = qm.sp;
    let zeta = kind.zeta(sp.tau, sp.lambda);
    let cj = |v: C64| if kind.conj { v.conj() } else { v };
    let profile: Vec<C64> = qm.field.iter().map(|&v| cj(v)).collect();
    let res = discrete_residual(qm, grid);
    let f0: Vec<C64> = res.field[..grid.n_int].iter().map(|&v| cj(v)).collect();
    let fhat0 = project(&f0, grid, basis);
    let f_norm = grid.l2_norm(&f0);
    let kept: f64 = fhat0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let truncation = if f_norm > 0.0 {
        ((f_norm * f_norm - kept * kept).max(0.0)).sqrt() / f_norm
    } else {
        0.0
    };
    let h = line.h();
    let nl = line.len();
    let chi: Vec<f64> = (0..nl).map(|i| line.cutoff(line.x(i))).collect();
    let fhat: ModeLines = fhat0.iter().map(|&c| chi.iter().map(|&x| c * x).collect()).collect();
    let source_norm = f_norm * (chi.iter().map(|x| x * x).sum::<f64>() * h).sqrt();
    let rhat = remainder_modes(zeta, sp.k, &basis.eigenvalues, &fhat, h)?;
    let planes = line.cells + 1;
    let nodes = grid.n_all();
    let mut remainder = Field3D::zeros(planes, nodes, h);
    let coeffs: Vec<Vec<C64>> = (0..planes)
        .map(|i| {
            let li = line.plane_index(i);
            rhat.iter().map(|r| r[li]).collect()
        })
        .collect();
    for (row, r) in remainder.data.chunks_mut(nodes).zip(synthesize_many(&coeffs, basis)) {
        row[..grid.n_int].copy_from_slice(&r);
    }
    let mut field = Field3D::zeros(planes, nodes, h);
    field.data.par_chunks_mut(nodes).enumerate().for_each(|(i, row)| {
        let e = (zeta * (i as f64 * h)).exp();
        let rr = remainder.plane(i);
        for n in 0..nodes {
            row[n] = e * (profile[n] + rr[n]);
        }
    });
    let remainder_norm = remainder.l2_norm(grid);
    let helmholtz_residual = helmholtz_residual(&field, sp.k, grid) / (sp.s.norm_sqr() * interior_norm(&field, grid));
    Ok(CgoSolution {
        field,
        remainder,
        kind,
        zeta,
        k: sp.k,
        profile,
        remainder_norm,
        source_norm,
        truncation,
        helmholtz_residual,
    })
}

fn interior_norm(u: &Field3D, grid: &Grid) -> f64 {
    (1..u.planes - 1)
        .map(|i| grid.l2_norm(u.plane(i)).powi(2) * u.h1)
        .sum::<f64>()
        .sqrt()
}

/// `|(d1^2 + Delta_h + k^2) u|_{L^2}` over planes `1..N1-1` with the
/// three-point stencil in `x1`.
pub fn helmholtz_residual(u: &Field3D, k: f64, grid: &Grid) -> f64 {
    let h1 = u.h1;
    (1..u.planes - 1)
        .into_par_iter()
        .map(|i| {
            let lap = grid.neg_laplacian(u.plane(i));
            let r: Vec<C64> = (0..grid.n_int)
                .map(|n| (u.at(i + 1, n) - u.at(i, n) * 2.0 + u.at(i - 1, n)) / (h1 * h1) - lap[n] + u.at(i, n) * (k * k))
                .collect();
            grid.l2_norm(&r).powi(2) * h1
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// Sizes entering the `C^2` growth bound of a CGO solution.
#[derive(Debug, Clone, Copy)]
pub struct C2Report {
    pub sup: f64,
    /// Largest second difference in any lattice direction.
    pub second: f64,
    pub c2: f64,
    /// `c2 / ((k^2 + tau^2 + lambda^2)^{(n+14)/16} e^{sigma |lambda|} e^{D tau})`.
    pub ratio: f64,
}

pub fn cgo_c2_bound_check(cgo: &CgoSolution, grid: &Grid, tau: f64, lambda: f64, sigma: f64, d: f64, dim: usize) -> C2Report {
    let u = &cgo.field;
    let sup = u.max_abs();
    let h = grid.h;
    let h1 = u.h1;
    let mut second = 0.0f64;
    for i in 0..u.planes {
        let p = u.plane(i);
        if i > 0 && i + 1 < u.planes {
            for n in 0..grid.n_int {
                let d2 = (u.at(i + 1, n) - p[n] * 2.0 + u.at(i - 1, n)).norm() / (h1 * h1);
                second = second.max(d2);
            }
        }
        for (n, arms) in grid.arms.iter().enumerate() {
            for pair in [(0, 1), (2, 3)] {
                if let (crate::spectral::Arm::Interior(a), crate::spectral::Arm::Interior(b)) = (arms[pair.0], arms[pair.1]) {
                    let d2 = (p[a] - p[n] * 2.0 + p[b]).norm() / (h * h);
                    second = second.max(d2);
                }
            }
        }
    }
    let c2 = sup + second;
    let k = cgo.k;
    let denom = (k * k + tau * tau + lambda * lambda).powf((dim as f64 + 14.0) / 16.0) * (sigma * lambda.abs()).exp() * (d * tau).exp();
    C2Report {
        sup,
        second,
        c2,
        ratio: c2 / denom,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_value() {
        let h = 0.01;
        let f: Vec<C64> = (0..4001)
            .map(|i| {
                let x = i as f64 * h;
                C64::new(if (2.0..38.0).contains(&x) { 1.0 } else { 0.0 }, 0.0)
            })
            .collect();
        let u = sz_solve(C64::new(2.0, 0.0), &f, h).unwrap();
        assert!((u[2000] + C64::new(0.5, 0.0)).norm() < 1e-10);
        let u = sz_solve(C64::new(-2.0, 0.0), &f, h).unwrap();
        assert!((u[2000] - C64::new(0.5, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn zero_real_part_rejected() {
        assert!(matches!(
            sz_solve(C64::new(0.0, 1.0), &[C64::new(1.0, 0.0)], 0.1),
            Err(Error::ZeroRealPart { .. })
        ));
    }

    #[test]
    fn second_order_paths_agree() {
        let h = 0.005;
        let f: Vec<C64> = (0..1201)
            .map(|i| {
                let x = i as f64 * h - 3.0;
                C64::new((-4.0 * x * x).exp(), 0.3 * x * (-4.0 * x * x).exp())
            })
            .collect();
        let p = C64::new(1.0, 0.3);
        let q = C64::new(-1.5, 0.2);
        let a = second_order_solve(p, q, &f, h, 0.0).unwrap();
        let b = second_order_solve(p, q, &f, h, f64::INFINITY).unwrap();
        for i in 0..f.len() {
            assert!((a[i] - b[i]).norm() < 1e-5, "{i}");
        }
    }
}
