//! Forward Helmholtz solves on the cylinder, the linearized DtN maps of the
//! cubic nonlinearity, polarization, the Calderon pairing and noise.
//!
//! The discrete operator is the disk stencil in `x'` and the three-point
//! stencil in `x1`. Solves diagonalize `x1` with a sine transform and factor
//! one real band matrix `A + (kappa_m - k^2) W` per axial mode.

use crate::banded::BandLu;
use crate::cylinder::Field3D;
use crate::spectral::{Arm, Grid};
use crate::{Error, Result, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Samples on the cylinder boundary: both caps (interior disk nodes), then the
/// side `planes x boundary nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    pub values: Vec<C64>,
    pub weights: Vec<f64>,
    pub n_int: usize,
    pub n_bdy: usize,
    pub planes: usize,
}

impl BoundaryField {
    pub fn zeros(grid: &Grid, planes: usize, h1: f64) -> Self {
        let n_int = grid.n_int;
        let n_bdy = grid.n_bdy;
        let mut weights = Vec::with_capacity(2 * n_int + planes * n_bdy);
        weights.extend_from_slice(&grid.volume_weights);
        weights.extend_from_slice(&grid.volume_weights);
        for p in 0..planes {
            let w1 = if p == 0 || p + 1 == planes { 0.5 * h1 } else { h1 };
            weights.extend(grid.bdy_weights.iter().map(|w| w * w1));
        }
        Self {
            values: vec![C64::new(0.0, 0.0); weights.len()],
            weights,
            n_int,
            n_bdy,
            planes,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cap(&self, end: usize) -> &[C64] {
        &self.values[end * self.n_int..(end + 1) * self.n_int]
    }

    pub fn side(&self, plane: usize) -> &[C64] {
        let o = 2 * self.n_int + plane * self.n_bdy;
        &self.values[o..o + self.n_bdy]
    }

    fn side_offset(&self, plane: usize) -> usize {
        2 * self.n_int + plane * self.n_bdy
    }

    /// Bilinear boundary integral `int f g dS` (no conjugation).
    pub fn pair(&self, other: &BoundaryField) -> C64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * *w)
            .sum()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v.norm().powf(p) * w)
            .sum::<f64>()
            .powf(1.0 / p)
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> BoundaryField {
        BoundaryField {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn zip(&self, other: &BoundaryField, f: impl Fn(C64, C64) -> C64) -> BoundaryField {
        BoundaryField {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            ..self.clone()
        }
    }

    /// Discrete `C^2` norm: sup of the values plus sups of first and second
    /// tangential differences (lattice directions on the caps, `x1` and arclength
    /// on the side).
    pub fn c2_norm(&self, grid: &Grid, h1: f64) -> f64 {
        let sup = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut d1 = 0.0f64;
        let mut d2 = 0.0f64;
        let h = grid.h;
        for end in 0..2 {
            let c = self.cap(end);
            for (i, arms) in grid.arms.iter().enumerate() {
                for (a, b) in [(0, 1), (2, 3)] {
                    if let (Arm::Interior(p), Arm::Interior(q)) = (arms[a], arms[b]) {
                        d1 = d1.max((c[p] - c[q]).norm() / (2.0 * h));
                        d2 = d2.max((c[p] - c[i] * 2.0 + c[q]).norm() / (h * h));
                    }
                }
            }
        }
        let nb = self.n_bdy;
        let two_pi = 2.0 * PI;
        for p in 0..self.planes {
            let s = self.side(p);
            for b in 0..nb {
                let bn = (b + 1) % nb;
                let bp = (b + nb - 1) % nb;
                let dn = (grid.bdy_angle[bn] - grid.bdy_angle[b]).rem_euclid(two_pi);
                let dp = (grid.bdy_angle[b] - grid.bdy_angle[bp]).rem_euclid(two_pi);
                d1 = d1.max((s[bn] - s[bp]).norm() / (dn + dp));
                let second = ((s[bn] - s[b]) / dn - (s[b] - s[bp]) / dp) * (2.0 / (dn + dp));
                d2 = d2.max(second.norm());
                if p > 0 && p + 1 < self.planes {
                    let (u, w) = (self.side(p + 1)[b], self.side(p - 1)[b]);
                    d1 = d1.max((u - w).norm() / (2.0 * h1));
                    d2 = d2.max((u - s[b] * 2.0 + w).norm() / (h1 * h1));
                }
            }
        }
        sup + d1 + d2
    }
}

/// Boundary trace of a cylinder field.
pub fn trace(u: &Field3D, grid: &Grid) -> BoundaryField {
    let mut bf = BoundaryField::zeros(grid, u.planes, u.h1);
    let n = grid.n_int;
    bf.values[..n].copy_from_slice(&u.plane(0)[..n]);
    bf.values[n..2 * n].copy_from_slice(&u.plane(u.planes - 1)[..n]);
    for p in 0..u.planes {
        let o = bf.side_offset(p);
        bf.values[o..o + grid.n_bdy].copy_from_slice(&u.plane(p)[n..]);
    }
    bf
}

/// Real coefficient `c(x1, x')` on the cylinder planes.
#[derive(Debug, Clone)]
pub struct Coefficient {
    pub field: Field3D,
    /// Discrete `H^1` norm.
    pub h1_bound: f64,
}

impl Coefficient {
    pub fn from_fn(grid: &Grid, planes: usize, h1: f64, f: impl Fn(f64, [f64; 2]) -> f64 + Sync) -> Self {
        let field = Field3D::from_fn(planes, grid, h1, |x1, p| C64::new(f(x1, p), 0.0));
        let h1_bound = h1_norm(&field, grid);
        Self { field, h1_bound }
    }

    pub fn zero(grid: &Grid, planes: usize, h1: f64) -> Self {
        Self::from_fn(grid, planes, h1, |_, _| 0.0)
    }
}

fn h1_norm(c: &Field3D, grid: &Grid) -> f64 {
    let mut grad2 = 0.0;
    let h = grid.h;
    for p in 0..c.planes {
        let w1 = if p == 0 || p + 1 == c.planes { 0.5 } else { 1.0 } * c.h1;
        let u = c.plane(p);
        for (i, arms) in grid.arms.iter().enumerate() {
            let mut g = 0.0;
            for (a, b) in [(0, 1), (2, 3)] {
                let val = |arm: Arm| match arm {
                    Arm::Interior(j) => u[j],
                    Arm::Boundary(b, _) => u[grid.n_int + b],
                };
                g += ((val(arms[a]) - val(arms[b])) / (2.0 * h)).norm_sqr();
            }
            if p > 0 && p + 1 < c.planes {
                g += ((c.at(p + 1, i) - c.at(p - 1, i)) / (2.0 * c.h1)).norm_sqr();
            }
            grad2 += g * grid.h * grid.h * w1;
        }
    }
    (c.l2_norm(grid).powi(2) + grad2).sqrt()
}

/// Third-order normal derivative functionals on the side of the cylinder.
#[derive(Debug, Clone)]
struct SideStencil {
    /// `(node, weight)` pairs per boundary node (all-node indices).
    taps: Vec<Vec<(usize, f64)>>,
}

fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let m = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= m * a[c][k];
            }
            b[r] -= m * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

impl SideStencil {
    fn new(grid: &Grid) -> Self {
        let h = grid.h;
        let taps = (0..grid.n_bdy)
            .into_par_iter()
            .map(|b| {
                let xb = grid.nodes[grid.n_int + b];
                let mut near: Vec<(f64, usize)> = grid
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (((p[0] - xb[0]).powi(2) + (p[1] - xb[1]).powi(2)).sqrt(), i))
                    .filter(|(d, _)| *d < 4.5 * h)
                    .collect();
                near.sort_by(|a, b| a.partial_cmp(b).unwrap());
                near.truncate(30);
                // Weighted least squares for a cubic; extract the radial derivative.
                let basis = |p: [f64; 2]| {
                    let (u, v) = ((p[0] - xb[0]) / h, (p[1] - xb[1]) / h);
                    [1.0, u, v, u * u, u * v, v * v, u * u * u, u * u * v, u * v * v, v * v * v]
                };
                let mut ata = vec![vec![0.0; 10]; 10];
                let rows: Vec<([f64; 10], f64)> = near
                    .iter()
                    .map(|&(d, i)| (basis(grid.nodes[i]), (-(d / (2.0 * h)).powi(2)).exp()))
                    .collect();
                for (r, w) in &rows {
                    for i in 0..10 {
                        for j in 0..10 {
                            ata[i][j] += w * r[i] * r[j];
                        }
                    }
                }
                // d/dr = (x_b . grad)/|x_b|; grad coefficients are c1/h, c2/h.
                let rn = (xb[0] * xb[0] + xb[1] * xb[1]).sqrt();
                let ef = (-grid.manifold.conformal.phi(xb)).exp();
                let mut sel = vec![0.0; 10];
                sel[1] = xb[0] / (rn * h) * ef;
                sel[2] = xb[1] / (rn * h) * ef;
                // functional = sel^T (A^T W A)^{-1} A^T W
                let z = solve_small(ata, sel);
                near.iter()
                    .zip(&rows)
                    .map(|(&(_, i), (r, w))| (i, w * (0..10).map(|k| z[k] * r[k]).sum::<f64>()))
                    .collect()
            })
            .collect();
        Self { taps }
    }
}

/// Outward normal derivative on the cylinder boundary.
fn normal_derivative_with(v: &Field3D, grid: &Grid, side: &SideStencil) -> BoundaryField {
    let mut bf = BoundaryField::zeros(grid, v.planes, v.h1);
    let n = grid.n_int;
    let h1 = v.h1;
    let last = v.planes - 1;
    for i in 0..n {
        let d = |a: usize, s: isize| {
            let at = |j: isize| v.at((a as isize + s * j) as usize, i);
            (at(0) * 11.0 - at(1) * 18.0 + at(2) * 9.0 - at(3) * 2.0) / (6.0 * h1)
        };
        bf.values[i] = d(0, 1);
        bf.values[n + i] = d(last, -1);
    }
    for p in 0..v.planes {
        let o = bf.side_offset(p);
        let row = v.plane(p);
        for (b, taps) in side.taps.iter().enumerate() {
            bf.values[o + b] = taps.iter().map(|&(i, w)| row[i] * w).sum();
        }
    }
    bf
}

/// Discrete Helmholtz solver `(Delta + k^2) u = h`, `u = f` on the boundary,
/// for a fixed wavenumber.
pub struct HelmholtzSolver {
    pub k: f64,
    pub grid: Grid,
    pub planes: usize,
    pub h1: f64,
    sines: Vec<f64>,
    kappa: Vec<f64>,
    factors: Vec<BandLu>,
    side: SideStencil,
}

impl std::fmt::Debug for HelmholtzSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HelmholtzSolver")
            .field("k", &self.k)
            .field("planes", &self.planes)
            .field("h1", &self.h1)
            .finish()
    }
}

/// Relative pivot below which an axial block counts as resonant.
const PIVOT_FLOOR: f64 = 1e-10;

impl HelmholtzSolver {
    /// Factor the axial blocks. `eigenvalues` (if given) name the resonant
    /// transversal mode when a block is singular.
    pub fn new(grid: &Grid, planes: usize, h1: f64, k: f64, eigenvalues: Option<&[f64]>) -> Result<Self> {
        if planes < 4 {
            return Err(Error::Domain(format!("need at least 4 planes, got {planes}")));
        }
        let nc = planes - 1;
        let kappa: Vec<f64> = (1..nc).map(|m| (2.0 - 2.0 * (PI * m as f64 / nc as f64).cos()) / (h1 * h1)).collect();
        if let Some(ev) = eigenvalues {
            for (mi, km) in kappa.iter().enumerate() {
                for (j, w2) in ev.iter().enumerate() {
                    if (w2 + km - k * k).abs() < 1e-8 * (1.0 + k * k) {
                        return Err(Error::HelmholtzResonance { j, m: mi + 1 });
                    }
                }
            }
        }
        let n = grid.n_int;
        let bw = grid.bandwidth;
        let factors: Vec<BandLu> = kappa
            .par_iter()
            .enumerate()
            .map(|(mi, &km)| {
                let shift = km - k * k;
                let lu = BandLu::factor(n, bw, bw, |i, j| {
                    let a = grid.consistent_entry(i, j);
                    if i == j {
                        a + shift * grid.weights[i]
                    } else {
                        a
                    }
                })
                .map_err(|_| Error::HelmholtzResonance { j: 0, m: mi + 1 })?;
                if lu.relative_min_pivot() < PIVOT_FLOOR {
                    let j = eigenvalues
                        .and_then(|ev| {
                            ev.iter()
                                .enumerate()
                                .min_by(|a, b| (a.1 + km - k * k).abs().partial_cmp(&(b.1 + km - k * k).abs()).unwrap())
                                .map(|(j, _)| j)
                        })
                        .unwrap_or(0);
                    return Err(Error::HelmholtzResonance { j, m: mi + 1 });
                }
                Ok(lu)
            })
            .collect::<Result<_>>()?;
        let sines = (1..nc)
            .flat_map(|m| (1..nc).map(move |p| (PI * (m * p) as f64 / nc as f64).sin()))
            .collect();
        Ok(Self {
            k,
            grid: grid.clone(),
            planes,
            h1,
            sines,
            kappa,
            factors,
            side: SideStencil::new(grid),
        })
    }

    /// General solve; either argument may be absent (zero).
    pub fn solve(&self, bdy: Option<&BoundaryField>, src: Option<&Field3D>) -> Result<Field3D> {
        let g = &self.grid;
        let n = g.n_int;
        let nodes = g.n_all();
        let nc = self.planes - 1;
        let h1 = self.h1;
        let mut u = Field3D::zeros(self.planes, nodes, h1);
        if let Some(b) = bdy {
            if b.n_int != n || b.n_bdy != g.n_bdy || b.planes != self.planes {
                return Err(Error::Shape("boundary field does not match the solver grid".into()));
            }
            u.plane_mut(0)[..n].copy_from_slice(b.cap(0));
            u.plane_mut(nc)[..n].copy_from_slice(b.cap(1));
            for p in 0..self.planes {
                u.plane_mut(p)[n..].copy_from_slice(b.side(p));
            }
        }
        if let Some(s) = src {
            if s.planes != self.planes || s.nodes != nodes {
                return Err(Error::Shape("source field does not match the solver grid".into()));
            }
        }
        // Right-hand sides of interior planes: -W h + boundary couplings.
        let mut rhs: Vec<Vec<C64>> = (1..nc)
            .into_par_iter()
            .map(|p| {
                let mut r = vec![C64::new(0.0, 0.0); n];
                if let Some(s) = src {
                    for i in 0..n {
                        r[i] = -s.at(p, i) * g.weights[i];
                    }
                }
                if bdy.is_some() {
                    let row = u.plane(p);
                    for (i, arms) in g.arms.iter().enumerate() {
                        for (d, arm) in arms.iter().enumerate() {
                            if let Arm::Boundary(b, th) = *arm {
                                r[i] += row[n + b] * (g.consistent_scale(i, d) / th);
                            }
                        }
                    }
                    if p == 1 || p == nc - 1 {
                        let cap = if p == 1 { u.plane(0) } else { u.plane(nc) };
                        for i in 0..n {
                            r[i] += cap[i] * (g.weights[i] / (h1 * h1));
                        }
                    }
                }
                r
            })
            .collect();
        // Sine transform, banded solves, inverse transform.
        let m_count = nc - 1;
        let mut hat: Vec<Vec<C64>> = (0..m_count)
            .into_par_iter()
            .map(|mi| {
                let mut acc = vec![C64::new(0.0, 0.0); n];
                for (pi, r) in rhs.iter().enumerate() {
                    let s = self.sines[mi * m_count + pi];
                    for i in 0..n {
                        acc[i] += r[i] * s;
                    }
                }
                self.factors[mi].solve_in_place(&mut acc);
                acc
            })
            .collect();
        let norm = 2.0 / nc as f64;
        rhs.par_iter_mut().enumerate().for_each(|(pi, r)| {
            r.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for (mi, h) in hat.iter().enumerate() {
                let s = self.sines[mi * m_count + pi] * norm;
                for i in 0..n {
                    r[i] += h[i] * s;
                }
            }
        });
        hat.clear();
        for (pi, r) in rhs.into_iter().enumerate() {
            u.plane_mut(pi + 1)[..n].copy_from_slice(&r);
        }
        Ok(u)
    }

    /// `(Delta + k^2) v = 0`, `v = f` on the boundary.
    pub fn helmholtz_solve(&self, f: &BoundaryField) -> Result<Field3D> {
        self.solve(Some(f), None)
    }

    /// `(Delta + k^2) w = h`, `w = 0` on the boundary.
    pub fn source_solve(&self, h: &Field3D) -> Result<Field3D> {
        self.solve(None, Some(h))
    }

    pub fn normal_derivative(&self, v: &Field3D) -> BoundaryField {
        normal_derivative_with(v, &self.grid, &self.side)
    }

    /// Discrete residual `|(Delta_h + k^2) u - h|` at interior nodes of interior planes.
    pub fn residual(&self, u: &Field3D, h: Option<&Field3D>) -> f64 {
        let g = &self.grid;
        let h1 = self.h1;
        (1..self.planes - 1)
            .map(|p| {
                let lap = g.neg_laplacian_consistent(u.plane(p));
                let r: Vec<C64> = (0..g.n_int)
                    .map(|i| {
                        let d2 = (u.at(p + 1, i) - u.at(p, i) * 2.0 + u.at(p - 1, i)) / (h1 * h1);
                        let src = h.map_or(C64::new(0.0, 0.0), |s| s.at(p, i));
                        d2 - lap[i] + u.at(p, i) * (self.k * self.k) - src
                    })
                    .collect();
                g.l2_norm(&r).powi(2) * h1
            })
            .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
            .sqrt()
    }

    /// Axial Dirichlet eigenvalues `kappa_m`, `m = 1..N1-1`.
    pub fn axial_eigenvalues(&self) -> &[f64] {
        &self.kappa
    }

    /// `D^3 Lambda(f1, f2, f3) = d_nu w` with `(Delta + k^2) w = 6 c v1 v2 v3`.
    pub fn d3_lambda(&self, c: &Coefficient, f1: &BoundaryField, f2: &BoundaryField, f3: &BoundaryField) -> Result<BoundaryField> {
        let v: Vec<Field3D> = [f1, f2, f3]
            .par_iter()
            .map(|f| self.helmholtz_solve(f))
            .collect::<Result<_>>()?;
        let prod = cubic_source(c, &v[0], &v[1], &v[2], 6.0);
        let w = self.source_solve(&prod)?;
        Ok(self.normal_derivative(&w))
    }

    /// `Lambda'(f) = d_nu v` with `(Delta + k^2) v = c u_f^3`.
    pub fn lambda_prime(&self, c: &Coefficient, f: &BoundaryField) -> Result<BoundaryField> {
        let u = self.helmholtz_solve(f)?;
        let src = cubic_source(c, &u, &u, &u, 1.0);
        let w = self.source_solve(&src)?;
        Ok(self.normal_derivative(&w))
    }

    /// The seven-term polarization of [`Self::lambda_prime`].
    pub fn polarize(&self, c: &Coefficient, f1: &BoundaryField, f2: &BoundaryField, f3: &BoundaryField) -> Result<BoundaryField> {
        let f = [f1, f2, f3];
        let outs: Vec<BoundaryField> = POLARIZATION
            .par_iter()
            .map(|(mask, _)| {
                let mut sum = f1.map(|_| C64::new(0.0, 0.0));
                for (g, &on) in f.iter().zip(mask) {
                    if on {
                        sum = sum.zip(g, |a, b| a + b);
                    }
                }
                self.lambda_prime(c, &sum)
            })
            .collect::<Result<_>>()?;
        let mut acc = f1.map(|_| C64::new(0.0, 0.0));
        for (o, (_, s)) in outs.iter().zip(&POLARIZATION) {
            acc = acc.zip(o, |a, b| a + b * *s);
        }
        Ok(acc)
    }
}

/// Subsets and signs of the polarization identity
/// `6abc = sum_S sign_S (sum_{i in S} a_i)^3`.
pub const POLARIZATION: [([bool; 3], f64); 7] = [
    ([true, true, true], 1.0),
    ([true, true, false], -1.0),
    ([true, false, true], -1.0),
    ([false, true, true], -1.0),
    ([true, false, false], 1.0),
    ([false, true, false], 1.0),
    ([false, false, true], 1.0),
];

/// The polarization identity applied to the scalar cube.
pub fn polarize_scalar(a: f64, b: f64, c: f64) -> f64 {
    POLARIZATION
        .iter()
        .map(|(mask, s)| {
            let x: f64 = [a, b, c].iter().zip(mask).filter(|(_, &on)| on).map(|(v, _)| v).sum();
            s * x * x * x
        })
        .sum()
}

fn cubic_source(c: &Coefficient, a: &Field3D, b: &Field3D, d: &Field3D, factor: f64) -> Field3D {
    Field3D {
        data: c
            .field
            .data
            .par_iter()
            .zip(&a.data)
            .zip(&b.data)
            .zip(&d.data)
            .map(|(((c, x), y), z)| c * x * y * z * factor)
            .collect(),
        ..*a
    }
}

/// Both sides of the Calderon identity: `6 int c v1 v2 v3 v4` and
/// `int D^3 Lambda(f1, f2, f3) f4`.
#[derive(Debug, Clone, Copy)]
pub struct Pairing {
    pub lhs: C64,
    pub rhs: C64,
}

impl Pairing {
    pub fn discrepancy(&self) -> f64 {
        let s = self.lhs.norm().max(self.rhs.norm());
        if s == 0.0 {
            0.0
        } else {
            (self.lhs - self.rhs).norm() / s
        }
    }
}

/// Interior side `6 int_N c v1 v2 v3 v4 dV`.
pub fn interior_pairing(c: &Coefficient, v: [&Field3D; 4], grid: &Grid) -> C64 {
    let prod = Field3D {
        data: (0..c.field.data.len())
            .into_par_iter()
            .map(|i| c.field.data[i] * v[0].data[i] * v[1].data[i] * v[2].data[i] * v[3].data[i] * 6.0)
            .collect(),
        ..c.field
    };
    prod.integrate_volume(grid)
}

pub fn calderon_pairing(solver: &HelmholtzSolver, c: &Coefficient, v: [&Field3D; 4]) -> Result<Pairing> {
    let g = &solver.grid;
    let f: Vec<BoundaryField> = v.iter().map(|u| trace(u, g)).collect();
    let lhs = interior_pairing(c, v, g);
    let data = solver.d3_lambda(c, &f[0], &f[1], &f[2])?;
    Ok(Pairing { lhs, rhs: data.pair(&f[3]) })
}

/// Add complex Gaussian noise rescaled to `|noise|_{L^{4/3}} = eps * scale`.
pub fn add_noise(data: &BoundaryField, eps: f64, scale: f64, seed: u64) -> BoundaryField {
    if eps == 0.0 {
        return data.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<C64> = (0..data.len())
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            C64::new(a, b)
        })
        .collect();
    let nf = BoundaryField {
        values: noise,
        ..data.clone()
    };
    let target = eps * scale;
    let k = target / nf.lp_norm(4.0 / 3.0);
    data.zip(&nf, |d, e| d + e * k)
}

/// The perturbation `add_noise` would add (for norm checks).
pub fn noise_field(data: &BoundaryField, eps: f64, scale: f64, seed: u64) -> BoundaryField {
    add_noise(data, eps, scale, seed).zip(data, |a, b| a - b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TransversalManifold;
    use crate::spectral::build_grid;

    #[test]
    fn source_solve_inverts_discrete_operator() {
        let g = build_grid(&TransversalManifold::flat(), 0.125).unwrap();
        let planes = 9;
        let h1 = 1.0 / 8.0;
        let s = HelmholtzSolver::new(&g, planes, h1, 3.3, None).unwrap();
        let h = Field3D::from_fn(planes, &g, h1, |x1, p| C64::new((x1 * 3.0).sin() * (1.0 - p[0] * p[0]), p[1]));
        let mut h = h;
        for p in [0, planes - 1] {
            h.plane_mut(p).iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        }
        let w = s.source_solve(&h).unwrap();
        let res = s.residual(&w, Some(&h));
        assert!(res < 1e-10 * h.l2_norm(&g), "{res}");
    }

    #[test]
    fn boundary_data_reproduced_by_harmonic_polynomial() {
        // u = x1 * x -> Delta u = 0; with k = 0 the discrete solve is exact for
        // this field because all stencils are exact on linear functions.
        let g = build_grid(&TransversalManifold::flat(), 0.125).unwrap();
        let planes = 9;
        let h1 = 1.0 / 8.0;
        let s = HelmholtzSolver::new(&g, planes, h1, 0.0, None).unwrap();
        let exact = Field3D::from_fn(planes, &g, h1, |x1, p| C64::new(x1 * p[0] + p[1], 0.0));
        let u = s.helmholtz_solve(&trace(&exact, &g)).unwrap();
        let err = u.map2(&exact, |a, b| a - b).max_abs();
        assert!(err < 1e-10, "{err}");
        let dn = s.normal_derivative(&u);
        // side: d_r (x1 x + y) = x1 cos + sin
        let p = planes / 2;
        for b in 0..g.n_bdy {
            let x = g.nodes[g.n_int + b];
            let want = p as f64 * h1 * x[0] + x[1];
            assert!((dn.side(p)[b].re - want).abs() < 1e-8);
        }
    }
}
