//! Cartesian grid on the disk and the Dirichlet eigensystem of `-Delta_{g0}`.
//!
//! Interior couplings are the 5-point stencil; an arm that crosses the circle
//! ends at the intersection point with weight `1/theta` (the symmetric
//! Shortley-Weller variant). With the conformal mass `h^2 e^{2 phi}` this gives
//! the generalized problem `A u = omega^2 W u`, solved through
//! `B = W^{-1/2} A W^{-1/2}`.

use crate::banded::BandCholesky;
use crate::geometry::{Conformal, Point, TransversalManifold};
use crate::{Error, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::{Read, Write};
use std::path::Path;

/// Neighbor of an interior node along one lattice direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arm {
    Interior(usize),
    /// Boundary node index and arm fraction `theta` in `(0, 1]`.
    Boundary(usize, f64),
}

/// Grid on the disk. Interior nodes come first in row-major lattice order,
/// boundary nodes (grid-line/circle intersections) follow, sorted by angle.
#[derive(Debug, Clone)]
pub struct Grid {
    pub manifold: TransversalManifold,
    pub h: f64,
    pub n_axis: usize,
    pub nodes: Vec<Point>,
    pub n_int: usize,
    pub n_bdy: usize,
    /// Mass weights `h^2 e^{2 phi}` of interior nodes.
    pub weights: Vec<f64>,
    /// Second-order volume quadrature: cells clipped to the disk, rim cells of
    /// exterior lattice nodes folded into the nearest interior node.
    pub volume_weights: Vec<f64>,
    /// Arclength weights `e^{phi} ds` of boundary nodes.
    pub bdy_weights: Vec<f64>,
    /// Polar angle of boundary nodes.
    pub bdy_angle: Vec<f64>,
    /// Arms E, W, N, S of each interior node.
    pub arms: Vec<[Arm; 4]>,
    /// Lattice position `(i, j)` of each interior node.
    pub lattice: Vec<(usize, usize)>,
    /// Interior index at lattice position `i + j * n_axis`.
    pub lattice_index: Vec<Option<usize>>,
    pub bandwidth: usize,
}

const DIRS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Build the grid with spacing close to `h` (adjusted so `2/h` is an integer).
pub fn build_grid(m: &TransversalManifold, h: f64) -> Result<Grid> {
    if !(h > 0.0) || h > 0.5 {
        return Err(Error::Domain(format!("grid spacing {h} must lie in (0, 0.5]")));
    }
    let cells = (2.0 / h).round() as usize;
    let h = 2.0 / cells as f64;
    let n = cells + 1;
    let coord = |i: usize| -1.0 + i as f64 * h;
    let inside = |i: usize, j: usize| {
        let (x, y) = (coord(i), coord(j));
        x * x + y * y < 1.0 - 1e-12
    };
    let mut lattice_index = vec![None; n * n];
    let mut lattice = Vec::new();
    let mut nodes = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if inside(i, j) {
                lattice_index[i + j * n] = Some(lattice.len());
                lattice.push((i, j));
                nodes.push([coord(i), coord(j)]);
            }
        }
    }
    let n_int = lattice.len();
    // Boundary intersections, deduplicated by position.
    let mut bpts: Vec<Point> = Vec::new();
    let mut raw_arms = vec![[(usize::MAX, 0.0f64); 4]; n_int];
    let key = |p: Point| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
    let mut lookup = std::collections::HashMap::new();
    for (k, &(i, j)) in lattice.iter().enumerate() {
        let (x, y) = (coord(i), coord(j));
        for (d, &(di, dj)) in DIRS.iter().enumerate() {
            let ii = i as isize + di;
            let jj = j as isize + dj;
            let nb = if ii >= 0 && jj >= 0 && (ii as usize) < n && (jj as usize) < n {
                lattice_index[ii as usize + jj as usize * n]
            } else {
                None
            };
            if nb.is_none() {
                let p = if di != 0 {
                    [(1.0 - y * y).sqrt() * di as f64, y]
                } else {
                    [x, (1.0 - x * x).sqrt() * dj as f64]
                };
                let theta = ((p[0] - x).abs() + (p[1] - y).abs()) / h;
                let id = *lookup.entry(key(p)).or_insert_with(|| {
                    bpts.push(p);
                    bpts.len() - 1
                });
                raw_arms[k][d] = (id, theta.clamp(1e-12, 1.0));
            }
        }
    }
    // Sort boundary nodes by angle and remap.
    let mut order: Vec<usize> = (0..bpts.len()).collect();
    let ang = |p: Point| p[1].atan2(p[0]);
    order.sort_by(|&a, &b| ang(bpts[a]).partial_cmp(&ang(bpts[b])).unwrap());
    let mut remap = vec![0usize; bpts.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let n_bdy = bpts.len();
    let bdy_angle: Vec<f64> = order.iter().map(|&o| ang(bpts[o])).collect();
    for &o in &order {
        nodes.push(bpts[o]);
    }
    let mut arms = vec![[Arm::Interior(0); 4]; n_int];
    let mut bandwidth = 0usize;
    for (k, &(i, j)) in lattice.iter().enumerate() {
        for (d, &(di, dj)) in DIRS.iter().enumerate() {
            let (id, th) = raw_arms[k][d];
            arms[k][d] = if id == usize::MAX {
                let nb = lattice_index[(i as isize + di) as usize + (j as isize + dj) as usize * n].unwrap();
                bandwidth = bandwidth.max(nb.abs_diff(k));
                Arm::Interior(nb)
            } else {
                Arm::Boundary(remap[id], th)
            };
        }
    }
    let weights = nodes[..n_int].iter().map(|&p| h * h * m.factor(p)).collect();
    let volume_weights = volume_weights(&lattice, &lattice_index, n, h, &nodes[..n_int], m);
    let two_pi = 2.0 * std::f64::consts::PI;
    let bdy_weights = (0..n_bdy)
        .map(|b| {
            let prev = if b == 0 { bdy_angle[n_bdy - 1] - two_pi } else { bdy_angle[b - 1] };
            let next = if b + 1 == n_bdy { bdy_angle[0] + two_pi } else { bdy_angle[b + 1] };
            0.5 * (next - prev) * m.conformal.phi(nodes[n_int + b]).exp()
        })
        .collect();
    Ok(Grid {
        manifold: *m,
        h,
        n_axis: n,
        nodes,
        n_int,
        n_bdy,
        weights,
        volume_weights,
        bdy_weights,
        bdy_angle,
        arms,
        lattice,
        lattice_index,
        bandwidth,
    })
}

/// Area of `[x0, x1] x [y0, y1]` inside the unit disk.
fn clipped_area(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let corners = [(x0, y0), (x0, y1), (x1, y0), (x1, y1)];
    let r2 = |(x, y): (f64, f64)| x * x + y * y;
    if corners.iter().all(|&c| r2(c) <= 1.0) {
        return (x1 - x0) * (y1 - y0);
    }
    let near = |a: f64, b: f64| if a <= 0.0 && b >= 0.0 { 0.0 } else { a.abs().min(b.abs()) };
    if near(x0, x1).powi(2) + near(y0, y1).powi(2) >= 1.0 {
        return 0.0;
    }
    let n = 512;
    let dx = (x1 - x0) / n as f64;
    (0..n)
        .map(|i| {
            let x = x0 + (i as f64 + 0.5) * dx;
            let s = (1.0 - x * x).max(0.0).sqrt();
            (y1.min(s) - y0.max(-s)).max(0.0)
        })
        .sum::<f64>()
        * dx
}

fn volume_weights(
    lattice: &[(usize, usize)],
    lattice_index: &[Option<usize>],
    n: usize,
    h: f64,
    interior: &[Point],
    m: &TransversalManifold,
) -> Vec<f64> {
    let coord = |i: usize| -1.0 + i as f64 * h;
    let area = |i: usize, j: usize| {
        let (x, y) = (coord(i), coord(j));
        clipped_area(x - 0.5 * h, x + 0.5 * h, y - 0.5 * h, y + 0.5 * h)
    };
    let mut w: Vec<f64> = lattice.iter().map(|&(i, j)| area(i, j)).collect();
    for j in 0..n {
        for i in 0..n {
            if lattice_index[i + j * n].is_some() {
                continue;
            }
            let a = area(i, j);
            if a == 0.0 {
                continue;
            }
            let (x, y) = (coord(i), coord(j));
            let mut best: Option<(f64, usize)> = None;
            for dj in -2isize..=2 {
                for di in -2isize..=2 {
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    if ii < 0 || jj < 0 || ii as usize >= n || jj as usize >= n {
                        continue;
                    }
                    if let Some(k) = lattice_index[ii as usize + jj as usize * n] {
                        let d = (coord(ii as usize) - x).powi(2) + (coord(jj as usize) - y).powi(2);
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, k));
                        }
                    }
                }
            }
            if let Some((_, k)) = best {
                w[k] += a;
            }
        }
    }
    w.iter().zip(interior).map(|(a, &p)| a * m.factor(p)).collect()
}

impl Grid {
    pub fn n_all(&self) -> usize {
        self.n_int + self.n_bdy
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn coupling(arm: &Arm) -> f64 {
        match *arm {
            Arm::Interior(_) => 1.0,
            Arm::Boundary(_, th) => 1.0 / th,
        }
    }

    /// Diagonal of the stiffness matrix `A`.
    pub fn stiffness_diag(&self, i: usize) -> f64 {
        self.arms[i].iter().map(Self::coupling).sum()
    }

    /// `A u` for interior values `u` (homogeneous Dirichlet data).
    pub fn stiffness_apply(&self, u: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut s = 0.0;
            for arm in &self.arms[i] {
                let c = Self::coupling(arm);
                s += c * u[i];
                if let Arm::Interior(j) = *arm {
                    s -= c * u[j];
                }
            }
            *o = s;
        });
    }

    /// `-Delta_h u` at interior nodes for a field given on all nodes
    /// (boundary values act as Dirichlet data).
    pub fn neg_laplacian(&self, u: &[C64]) -> Vec<C64> {
        assert_eq!(u.len(), self.n_all());
        (0..self.n_int)
            .into_par_iter()
            .map(|i| {
                let mut s = C64::new(0.0, 0.0);
                for arm in &self.arms[i] {
                    let (c, v) = match *arm {
                        Arm::Interior(j) => (1.0, u[j]),
                        Arm::Boundary(b, th) => (1.0 / th, u[self.n_int + b]),
                    };
                    s += (u[i] - v) * c;
                }
                s / self.weights[i]
            })
            .collect()
    }

    fn arm_length(arm: &Arm) -> f64 {
        match *arm {
            Arm::Interior(_) => 1.0,
            Arm::Boundary(_, th) => th,
        }
    }

    /// Row scale of arm `d` at node `i` that turns the symmetric stiffness into
    /// the consistent Shortley-Weller difference `2 / (theta_a + theta_b)`.
    pub fn consistent_scale(&self, i: usize, d: usize) -> f64 {
        let pair = &self.arms[i][d & !1..(d & !1) + 2];
        2.0 / (Self::arm_length(&pair[0]) + Self::arm_length(&pair[1]))
    }

    /// Entry of the consistent (nonsymmetric) stiffness.
    pub fn consistent_entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return (0..4).map(|d| self.consistent_scale(i, d) * Self::coupling(&self.arms[i][d])).sum();
        }
        for (d, arm) in self.arms[i].iter().enumerate() {
            if *arm == Arm::Interior(j) {
                return -self.consistent_scale(i, d);
            }
        }
        0.0
    }

    /// As [`Self::neg_laplacian`] with the consistent rows; second-order
    /// gradients up to the boundary.
    pub fn neg_laplacian_consistent(&self, u: &[C64]) -> Vec<C64> {
        assert_eq!(u.len(), self.n_all());
        (0..self.n_int)
            .into_par_iter()
            .map(|i| {
                let mut s = C64::new(0.0, 0.0);
                for (d, arm) in self.arms[i].iter().enumerate() {
                    let (c, v) = match *arm {
                        Arm::Interior(j) => (1.0, u[j]),
                        Arm::Boundary(b, th) => (1.0 / th, u[self.n_int + b]),
                    };
                    s += (u[i] - v) * (c * self.consistent_scale(i, d));
                }
                s / self.weights[i]
            })
            .collect()
    }

    /// Entry `A[i][j]` of the stiffness matrix (zero outside the stencil).
    pub fn stiffness_entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.stiffness_diag(i);
        }
        for arm in &self.arms[i] {
            if *arm == Arm::Interior(j) {
                return -1.0;
            }
        }
        0.0
    }

    /// `int f dV` with the volume quadrature (interior nodes only).
    pub fn integrate_volume(&self, f: &[C64]) -> C64 {
        f[..self.n_int]
            .iter()
            .zip(&self.volume_weights)
            .fold(C64::new(0.0, 0.0), |a, (v, w)| a + v * *w)
    }

    pub fn volume(&self) -> f64 {
        self.volume_weights.iter().sum()
    }

    /// Weighted inner product over interior nodes (no conjugation).
    pub fn integrate(&self, f: &[C64]) -> C64 {
        f[..self.n_int]
            .iter()
            .zip(&self.weights)
            .fold(C64::new(0.0, 0.0), |a, (v, w)| a + v * *w)
    }

    pub fn l2_norm(&self, f: &[C64]) -> f64 {
        f[..self.n_int]
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v.norm_sqr() * w)
            .sum::<f64>()
            .sqrt()
    }

    pub fn lp_norm(&self, f: &[C64], p: f64) -> f64 {
        f[..self.n_int]
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v.norm().powf(p) * w)
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// Sample a function on all nodes.
    pub fn sample(&self, f: impl Fn(Point) -> C64 + Sync) -> Vec<C64> {
        self.nodes.par_iter().map(|&p| f(p)).collect()
    }
}

/// Dirichlet eigenpairs `(omega_j^2, phi_j)`, ascending, `W`-orthonormal.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub eigenvalues: Vec<f64>,
    /// Mode `j` occupies `vectors[j * n_int .. (j + 1) * n_int]`.
    pub vectors: Vec<f64>,
    pub n_int: usize,
}

/// Eigensolver settings.
#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub seed: u64,
    /// Relative eigen-residual target.
    pub tol: f64,
    pub block: usize,
    pub max_restarts: usize,
    /// Problems up to this size use a dense solve.
    pub dense_limit: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed_0001,
            tol: 1e-10,
            block: 4,
            max_restarts: 40,
            dense_limit: 900,
        }
    }
}

/// Lowest `j_count` Dirichlet eigenpairs of `-Delta_{g0}` on the grid.
pub fn dirichlet_eigensystem(grid: &Grid, j_count: usize) -> Result<SpectralBasis> {
    dirichlet_eigensystem_with(grid, j_count, &EigenOptions::default())
}

pub fn dirichlet_eigensystem_with(grid: &Grid, j_count: usize, opts: &EigenOptions) -> Result<SpectralBasis> {
    let n = grid.n_int;
    if j_count == 0 || j_count > n / 2 {
        return Err(Error::Domain(format!(
            "requested {j_count} modes from {n} interior nodes (limit {})",
            n / 2
        )));
    }
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let (vals, vecs) = if n <= opts.dense_limit {
        dense_lowest(grid, &sw, j_count)?
    } else {
        krylov_lowest(grid, &sw, j_count, opts)?
    };
    let mut vectors = vec![0.0; j_count * n];
    for j in 0..j_count {
        let psi = &vecs[j];
        // fix sign: largest component positive
        let mut imax = 0;
        for i in 0..n {
            if psi[i].abs() > psi[imax].abs() + 1e-12 {
                imax = i;
            }
        }
        let sgn = if psi[imax] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[j * n + i] = sgn * psi[i] / sw[i];
        }
    }
    Ok(SpectralBasis {
        eigenvalues: vals,
        vectors,
        n_int: n,
    })
}

fn b_apply(grid: &Grid, sw: &[f64], x: &[f64]) -> Vec<f64> {
    let u: Vec<f64> = x.iter().zip(sw).map(|(a, s)| a / s).collect();
    let mut au = vec![0.0; x.len()];
    grid.stiffness_apply(&u, &mut au);
    au.iter().zip(sw).map(|(a, s)| a / s).collect()
}

fn dense_lowest(grid: &Grid, sw: &[f64], j_count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = grid.n_int;
    let b = faer::Mat::<f64>::from_fn(n, n, |i, j| grid.stiffness_entry(i, j) / (sw[i] * sw[j]));
    let eig = b
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::SolverFailure(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let vals = (0..j_count).map(|j| s[j]).collect();
    let vecs = (0..j_count).map(|j| (0..n).map(|i| u[(i, j)]).collect()).collect();
    Ok((vals, vecs))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

type Dense = faer::Mat<f64>;

/// Orthonormalize the columns `from..to` of `q` against `0..from` and each
/// other (block classical Gram-Schmidt, applied twice). Columns that vanish
/// are replaced by random vectors.
fn orthonormalize_block(q: &mut Dense, from: usize, to: usize, rng: &mut ChaCha8Rng) {
    let n = q.nrows();
    for _ in 0..2 {
        if from > 0 {
            let c = q.as_ref().subcols(0, from).transpose() * q.as_ref().subcols(from, to - from);
            let upd = q.as_ref().subcols(0, from) * &c;
            let mut blk = q.as_mut().subcols_mut(from, to - from);
            blk -= &upd;
        }
    }
    for j in from..to {
        for attempt in 0..6 {
            let before = if attempt == 0 { dot(q.col_as_slice(j), q.col_as_slice(j)).sqrt() } else { 1.0 };
            for _ in 0..2 {
                for i in 0..j {
                    let c = dot(q.col_as_slice(i), q.col_as_slice(j));
                    if c != 0.0 {
                        for r in 0..n {
                            let v = q[(r, i)];
                            q[(r, j)] -= c * v;
                        }
                    }
                }
            }
            let nv = dot(q.col_as_slice(j), q.col_as_slice(j)).sqrt();
            if nv > 1e-8 * before.max(1e-300) {
                q.col_as_slice_mut(j).iter_mut().for_each(|x| *x /= nv);
                break;
            }
            for r in 0..n {
                q[(r, j)] = rng.random::<f64>() - 0.5;
            }
        }
    }
}

/// Shift-invert block Krylov with thick restarts on `B^{-1} = W^{1/2} A^{-1} W^{1/2}`.
fn krylov_lowest(grid: &Grid, sw: &[f64], j_count: usize, opts: &EigenOptions) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = grid.n_int;
    let chol = BandCholesky::factor(n, grid.bandwidth, |i, j| grid.stiffness_entry(i, j))?;
    let apply = |src: &[f64], dst: &mut [f64]| {
        for ((d, a), s) in dst.iter_mut().zip(src).zip(sw) {
            *d = a * s;
        }
        chol.solve_in_place(dst);
        dst.iter_mut().zip(sw).for_each(|(a, s)| *a *= s);
    };
    let p = opts.block.max(1);
    let m_max = (2 * j_count + 8 * p).max(j_count + 60).min(n);
    let keep = (j_count + 2 * p).min(m_max - p);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q = Dense::zeros(n, m_max);
    let mut z = Dense::zeros(n, m_max);
    for j in 0..p {
        for r in 0..n {
            q[(r, j)] = rng.random::<f64>() - 0.5;
        }
    }
    orthonormalize_block(&mut q, 0, p, &mut rng);
    let mut len = p;
    let mut applied = 0usize;
    for _restart in 0..=opts.max_restarts {
        loop {
            for j in applied..len {
                let (src, dst) = (q.col_as_slice(j).to_vec(), z.col_as_slice_mut(j));
                apply(&src, dst);
            }
            let block_start = applied;
            applied = len;
            if len >= m_max {
                break;
            }
            let add = p.min(m_max - len);
            for c in 0..add {
                let src = z.col_as_slice(block_start + c.min(applied - block_start - 1)).to_vec();
                q.col_as_slice_mut(len + c).copy_from_slice(&src);
            }
            orthonormalize_block(&mut q, len, len + add, &mut rng);
            len += add;
        }
        let m = len;
        let qm = q.as_ref().subcols(0, m);
        let zm = z.as_ref().subcols(0, m);
        let t0 = qm.transpose() * zm;
        let t = Dense::from_fn(m, m, |a, b| 0.5 * (t0[(a, b)] + t0[(b, a)]));
        let eig = t
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("{e:?}")))?;
        let s = eig.S().column_vector();
        let u = eig.U();
        let nk = keep.min(m);
        // Largest theta first.
        let uk = Dense::from_fn(m, nk, |a, c| u[(a, m - 1 - c)]);
        let thetas: Vec<f64> = (0..nk).map(|c| s[m - 1 - c]).collect();
        let y = qm * &uk;
        let zy = zm * &uk;
        let mut resid = Dense::zeros(n, nk);
        let mut worst = 0.0f64;
        let mut rnorm = vec![0.0; nk];
        for c in 0..nk {
            for r in 0..n {
                resid[(r, c)] = zy[(r, c)] - thetas[c] * y[(r, c)];
            }
            rnorm[c] = dot(resid.col_as_slice(c), resid.col_as_slice(c)).sqrt() / thetas[c].abs();
            if c < j_count {
                worst = worst.max(rnorm[c]);
            }
        }
        if worst < opts.tol || m == n {
            let vecs: Vec<Vec<f64>> = (0..j_count).map(|c| y.col_as_slice(c).to_vec()).collect();
            let vals = vecs.iter().map(|v| dot(v, &b_apply(grid, sw, v))).collect();
            return Ok((vals, vecs));
        }
        // Thick restart: keep the Ritz vectors and continue from the residuals
        // of the least converged wanted pairs.
        let mut order: Vec<usize> = (0..j_count.min(nk)).collect();
        order.sort_by(|&a, &b| rnorm[b].partial_cmp(&rnorm[a]).unwrap());
        for c in 0..nk {
            q.col_as_slice_mut(c).copy_from_slice(y.col_as_slice(c));
            z.col_as_slice_mut(c).copy_from_slice(zy.col_as_slice(c));
        }
        let add = p.min(m_max - nk);
        for (i, &c) in order.iter().take(add).enumerate() {
            q.col_as_slice_mut(nk + i).copy_from_slice(resid.col_as_slice(c));
        }
        orthonormalize_block(&mut q, nk, nk + add, &mut rng);
        len = nk + add;
        applied = nk;
    }
    Err(Error::SolverFailure(format!(
        "eigensolver did not converge {j_count} modes within {} restarts",
        opts.max_restarts
    )))
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn mode(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n_int..(j + 1) * self.n_int]
    }

    /// Keep only the first `j` modes.
    pub fn truncated(&self, j: usize) -> SpectralBasis {
        let j = j.min(self.len());
        SpectralBasis {
            eigenvalues: self.eigenvalues[..j].to_vec(),
            vectors: self.vectors[..j * self.n_int].to_vec(),
            n_int: self.n_int,
        }
    }

    /// Largest relative eigen-residual `|A phi - omega^2 W phi| / (omega^2 |W phi|)`.
    pub fn max_residual(&self, grid: &Grid) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|j| {
                let v = self.mode(j);
                let mut av = vec![0.0; self.n_int];
                grid.stiffness_apply(v, &mut av);
                let w2 = self.eigenvalues[j];
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..self.n_int {
                    let wv = grid.weights[i] * v[i];
                    num += (av[i] - w2 * wv).powi(2) / grid.weights[i];
                    den += (w2 * wv).powi(2) / grid.weights[i];
                }
                (num / den).sqrt()
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self, grid: &Grid) -> f64 {
        let j = self.len();
        (0..j)
            .into_par_iter()
            .map(|a| {
                let mut worst = 0.0f64;
                for b in 0..=a {
                    let s: f64 = (0..self.n_int)
                        .map(|i| grid.weights[i] * self.mode(a)[i] * self.mode(b)[i])
                        .sum();
                    let target = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((s - target).abs());
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Coefficients `f_hat(j) = sum_i W_i f_i phi_j(i)` of a field on the grid
/// (interior values; extra boundary entries are ignored).
pub fn project(f: &[C64], grid: &Grid, basis: &SpectralBasis) -> Vec<C64> {
    let n = basis.n_int;
    let wf: Vec<C64> = f[..n].iter().zip(&grid.weights).map(|(v, w)| v * *w).collect();
    (0..basis.len())
        .into_par_iter()
        .map(|j| {
            let phi = basis.mode(j);
            wf.iter().zip(phi).fold(C64::new(0.0, 0.0), |a, (v, p)| a + v * *p)
        })
        .collect()
}

/// Interior field `sum_j c_j phi_j`.
pub fn synthesize(coeffs: &[C64], basis: &SpectralBasis) -> Vec<C64> {
    let n = basis.n_int;
    let jn = coeffs.len().min(basis.len());
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..jn {
                s += coeffs[j] * basis.vectors[j * n + i];
            }
            s
        })
        .collect()
}

/// `synthesize` for several coefficient vectors at once (one matrix product).
pub fn synthesize_many(coeffs: &[Vec<C64>], basis: &SpectralBasis) -> Vec<Vec<C64>> {
    let n = basis.n_int;
    let jn = basis.len();
    let m = coeffs.len();
    let phi = faer::MatRef::from_column_major_slice(&basis.vectors[..n * jn], n, jn);
    let re = Dense::from_fn(jn, m, |j, p| coeffs[p].get(j).map_or(0.0, |c| c.re));
    let im = Dense::from_fn(jn, m, |j, p| coeffs[p].get(j).map_or(0.0, |c| c.im));
    let ur = phi * &re;
    let ui = phi * &im;
    (0..m)
        .map(|p| ur.col_as_slice(p).iter().zip(ui.col_as_slice(p)).map(|(&a, &b)| C64::new(a, b)).collect())
        .collect()
}

const CACHE_MAGIC: &[u8; 8] = b"CGOLBASI";
const CACHE_VERSION: u32 = 1;

fn conformal_key(c: &Conformal) -> [f64; 3] {
    match *c {
        Conformal::Flat => [0.0, 0.0, 0.0],
        Conformal::Constant { value } => [1.0, value, 0.0],
        Conformal::GaussianBump { amplitude, width } => [2.0, amplitude, width],
    }
}

/// Write the basis to a versioned little-endian cache file keyed by
/// `(domain, phi, h, J)`.
pub fn save_basis(path: &Path, grid: &Grid, basis: &SpectralBasis) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + 8 * (basis.vectors.len() + basis.len()));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    for v in conformal_key(&grid.manifold.conformal) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&grid.h.to_le_bytes());
    buf.extend_from_slice(&(basis.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(basis.n_int as u64).to_le_bytes());
    for v in basis.eigenvalues.iter().chain(&basis.vectors) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&buf)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Read a cached basis; fails with [`Error::Cache`] if the key does not match.
pub fn load_basis(path: &Path, grid: &Grid, j_count: usize) -> Result<SpectralBasis> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |k: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + k).ok_or_else(|| Error::Cache("truncated file".into()))?;
        pos += k;
        Ok(s)
    };
    if take(8)? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let ver = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if ver != CACHE_VERSION {
        return Err(Error::Cache(format!("version {ver} unsupported")));
    }
    let mut f = || -> Result<f64> { Ok(f64::from_le_bytes(take(8)?.try_into().unwrap())) };
    let key = [f()?, f()?, f()?];
    let h = f()?;
    if key != conformal_key(&grid.manifold.conformal) || h != grid.h {
        return Err(Error::Cache("key mismatch".into()));
    }
    let jn = f()?.to_bits() as usize;
    let n = f()?.to_bits() as usize;
    if n != grid.n_int || jn < j_count {
        return Err(Error::Cache("size mismatch".into()));
    }
    let mut vals = Vec::with_capacity(jn);
    for _ in 0..jn {
        vals.push(f()?);
    }
    let mut vectors = Vec::with_capacity(j_count * n);
    for _ in 0..j_count * n {
        vectors.push(f()?);
    }
    vals.truncate(j_count);
    Ok(SpectralBasis {
        eigenvalues: vals,
        vectors,
        n_int: n,
    })
}

/// Load the basis from `cache` if present and matching, otherwise compute and store it.
pub fn cached_eigensystem(grid: &Grid, j_count: usize, cache: Option<&Path>) -> Result<SpectralBasis> {
    if let Some(p) = cache {
        if let Ok(b) = load_basis(p, grid, j_count) {
            return Ok(b);
        }
    }
    let b = dirichlet_eigensystem(grid, j_count)?;
    if let Some(p) = cache {
        save_basis(p, grid, &b)?;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_area() {
        let g = build_grid(&TransversalManifold::flat(), 0.02).unwrap();
        let r = g.total_weight() / std::f64::consts::PI;
        assert!((0.995..=1.005).contains(&r), "{r}");
    }

    #[test]
    fn small_grid_first_eigenvalue() {
        let g = build_grid(&TransversalManifold::flat(), 0.1).unwrap();
        let b = dirichlet_eigensystem(&g, 6).unwrap();
        let j0 = 2.404825557695773f64;
        assert!((b.eigenvalues[0] / (j0 * j0) - 1.0).abs() < 0.02);
        assert!(b.orthonormality_defect(&g) < 1e-10);
    }

    #[test]
    fn krylov_matches_dense() {
        let g = build_grid(&TransversalManifold::flat(), 1.0 / 16.0).unwrap();
        let opts = EigenOptions {
            dense_limit: 0,
            ..Default::default()
        };
        let a = dirichlet_eigensystem_with(&g, 40, &opts).unwrap();
        let d = dirichlet_eigensystem_with(
            &g,
            40,
            &EigenOptions {
                dense_limit: usize::MAX,
                ..Default::default()
            },
        )
        .unwrap();
        for j in 0..40 {
            assert!((a.eigenvalues[j] - d.eigenvalues[j]).abs() < 1e-8 * d.eigenvalues[j]);
        }
        assert!(a.max_residual(&g) < 1e-8);
    }
}
