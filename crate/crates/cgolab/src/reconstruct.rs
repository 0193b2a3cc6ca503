//! Recovery of `c_hat(2 lambda, y0)` from four CGO solutions concentrating at
//! `y0`, the two-case parameter schedule and the Fourier inversion in `x1`.

use crate::cylinder::{assemble_cgo, CgoKind, CgoSolution, LineGrid};
use crate::dtn::{add_noise, interior_pairing, trace, Coefficient, HelmholtzSolver};
use crate::geometry::{shoot_geodesic, Geodesic, Point, ShootOptions, TransversalManifold};
use crate::quasimode::{assemble_quasimode, beam_data, make_spectral_parameter, Quasimode, QuasimodeConfig};
use crate::spectral::{Grid, SpectralBasis};
use crate::{Error, Result, C64};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Regime of the parameter schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    /// 1 when `k > E = -log eps`, else 2.
    pub case: u8,
    pub tau: f64,
    /// Half-width `rho` of the `lambda` window.
    pub window: f64,
}

/// `tau` and the `lambda` window for wavenumber `k` and noise level `eps`.
/// Exact data (`eps = 0`) follow the first case.
pub fn parameter_schedule(k: f64, eps: f64, sigma: f64, d: f64) -> Result<Schedule> {
    if !(k > 1.0) {
        return Err(Error::Domain(format!("schedule needs k > 1, got {k}")));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Domain(format!("schedule needs 0 <= eps < 1, got {eps}")));
    }
    if !(sigma > 0.0) || !(d > 0.0) {
        return Err(Error::Domain("sigma and D must be positive".into()));
    }
    if eps == 0.0 {
        return Ok(Schedule {
            case: 1,
            tau: 1.0,
            window: k.ln() / (2.0 * sigma),
        });
    }
    let e = -eps.ln();
    if k > e {
        Ok(Schedule {
            case: 1,
            tau: 1.0,
            window: k.ln() / (2.0 * sigma),
        })
    } else {
        Ok(Schedule {
            case: 2,
            tau: (e / (2.0 * d)).max(1.0),
            window: (k * k + e * e).ln() / (4.0 * sigma),
        })
    }
}

/// Two geodesics crossing transversally at `y0`.
#[derive(Debug, Clone)]
pub struct GeodesicPair {
    pub gamma: Geodesic,
    pub eta: Geodesic,
    pub dir_gamma: Point,
    pub dir_eta: Point,
    /// Crossing angle in degrees.
    pub angle: f64,
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Geodesics through `y0` in `g0`-orthogonal directions, trying rotations of
/// the pair until both exit nontangentially and meet only at `y0`.
pub fn pick_geodesics(m: &TransversalManifold, y0: Point, min_angle_deg: f64) -> Result<GeodesicPair> {
    if !m.contains(y0) {
        return Err(Error::Domain(format!("y0 = ({}, {}) is not interior", y0[0], y0[1])));
    }
    let opts = ShootOptions::default();
    for step in 0..12 {
        let a = step as f64 * PI / 12.0;
        let dg = [a.cos(), a.sin()];
        let de = [-a.sin(), a.cos()];
        let angle = 90.0f64;
        if angle < min_angle_deg {
            continue;
        }
        let (Ok(g), Ok(e)) = (shoot_geodesic(m, y0, dg, &opts), shoot_geodesic(m, y0, de, &opts)) else {
            continue;
        };
        if !(g.entry_nontangential && g.exit_nontangential && e.entry_nontangential && e.exit_nontangential) {
            continue;
        }
        if single_intersection(&g, &e, y0) {
            return Ok(GeodesicPair {
                gamma: g,
                eta: e,
                dir_gamma: dg,
                dir_eta: de,
                angle,
            });
        }
    }
    Err(Error::NoValidPair { x: y0[0], y: y0[1] })
}

fn single_intersection(g: &Geodesic, e: &Geodesic, y0: Point) -> bool {
    let near = 0.1;
    let gs: Vec<Point> = g.samples().iter().step_by(5).map(|s| s.x).filter(|&x| dist(x, y0) > near).collect();
    let es: Vec<Point> = e.samples().iter().step_by(5).map(|s| s.x).filter(|&x| dist(x, y0) > near).collect();
    gs.iter().all(|a| es.iter().all(|b| dist(*a, *b) > 0.02))
}

/// `(varsigma/pi)^{d/2} int b(z) e^{-varsigma |z - z0|^2} dz` in `d = 2` by the
/// trapezoid rule on a box of half-width `8/sqrt(varsigma)`.
pub fn laplace_quadrature(b: impl Fn(Point) -> f64, z0: Point, varsigma: f64) -> f64 {
    let r = 8.0 / varsigma.sqrt();
    let n = 400usize;
    let h = 2.0 * r / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        for j in 0..=n {
            let z = [z0[0] - r + i as f64 * h, z0[1] - r + j as f64 * h];
            let w = if i == 0 || i == n { 0.5 } else { 1.0 } * if j == 0 || j == n { 0.5 } else { 1.0 };
            let d2 = (z[0] - z0[0]).powi(2) + (z[1] - z0[1]).powi(2);
            s += w * b(z) * (-varsigma * d2).exp();
        }
    }
    s * h * h * varsigma / PI
}

/// Weight `b0` relating the pairing to `c_hat(2 lambda, y0)`.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationFactor {
    pub b0: C64,
    /// Hessian of `Im(Theta_gamma + Theta_eta)` at `y0`.
    pub hessian: [[f64; 2]; 2],
}

impl CalibrationFactor {
    pub fn hessian_positive(&self) -> bool {
        let h = self.hessian;
        h[0][0] > 0.0 && h[0][0] * h[1][1] - h[0][1] * h[1][0] > 0.0
    }
}

/// Floor on `|b0|` below which the slice is not computed.
pub const B0_FLOOR: f64 = 1e-12;

/// `b0 = 6 int_{M0} |v|^2 |w|^2 dV`: the pairing of the four quasimode
/// profiles with `c_hat = 1`.
pub fn calibrate_b0(v: &Quasimode, w: &Quasimode, grid: &Grid, y0: Point) -> Result<CalibrationFactor> {
    let prod: Vec<C64> = v
        .field
        .iter()
        .zip(&w.field)
        .map(|(a, b)| C64::new(6.0 * a.norm_sqr() * b.norm_sqr(), 0.0))
        .collect();
    let b0 = grid.integrate(&prod);
    if !(b0.norm() >= B0_FLOOR) {
        return Err(Error::CalibrationDegenerate {
            b0: b0.norm(),
            floor: B0_FLOOR,
        });
    }
    let im_theta = |x: Point| -> f64 {
        let a = v.chart.inverse_fast(x).map_or(0.0, |(t, y)| v.phase.theta(t, y).im);
        let b = w.chart.inverse_fast(x).map_or(0.0, |(t, y)| w.phase.theta(t, y).im);
        a + b
    };
    let e = 1e-3;
    let f0 = im_theta(y0);
    let fx = |dx: f64, dy: f64| im_theta([y0[0] + dx, y0[1] + dy]);
    let hxx = (fx(e, 0.0) - 2.0 * f0 + fx(-e, 0.0)) / (e * e);
    let hyy = (fx(0.0, e) - 2.0 * f0 + fx(0.0, -e)) / (e * e);
    let hxy = (fx(e, e) - fx(e, -e) - fx(-e, e) + fx(-e, -e)) / (4.0 * e * e);
    Ok(CalibrationFactor {
        b0,
        hessian: [[hxx, hxy], [hxy, hyy]],
    })
}

/// `c_hat_est(2 lambda, y0) = pairing / b0`.
pub fn fourier_slice(pairing: C64, calib: &CalibrationFactor) -> Result<C64> {
    if !(calib.b0.norm() >= B0_FLOOR) {
        return Err(Error::CalibrationDegenerate {
            b0: calib.b0.norm(),
            floor: B0_FLOOR,
        });
    }
    Ok(pairing / calib.b0)
}

/// Smooth compactly supported bump `exp(1 - 1/(1 - r^2))` for `r < 1`.
pub fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

/// Separable test coefficient `c = amplitude * b(x1) q(x')` with compact bumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableBump {
    pub amplitude: f64,
    /// Center and half-width of the `x1` bump.
    pub x1_center: f64,
    pub x1_half_width: f64,
    /// Center and width of the transversal Gaussian.
    pub center: Point,
    pub width: f64,
    /// Radius of the transversal support.
    pub support: f64,
}

impl Default for SeparableBump {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            x1_center: 0.5,
            x1_half_width: 0.4,
            center: [0.1, -0.05],
            width: 0.3,
            support: 0.9,
        }
    }
}

impl SeparableBump {
    pub fn b(&self, x1: f64) -> f64 {
        bump((x1 - self.x1_center) / self.x1_half_width)
    }

    pub fn q(&self, x: Point) -> f64 {
        let d2 = (x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2);
        (-d2 / (self.width * self.width)).exp() * bump((x[0] * x[0] + x[1] * x[1]).sqrt() / self.support)
    }

    pub fn value(&self, x1: f64, x: Point) -> f64 {
        self.amplitude * self.b(x1) * self.q(x)
    }

    /// `b_hat(xi) = int e^{-i xi x1} b(x1) dx1` (trapezoid on the support;
    /// spectrally accurate for the smooth bump).
    pub fn b_hat(&self, xi: f64) -> C64 {
        let n = 2000;
        let a = self.x1_center - self.x1_half_width;
        let h = 2.0 * self.x1_half_width / n as f64;
        (0..=n)
            .map(|i| {
                let x = a + i as f64 * h;
                C64::from_polar(self.b(x) * h, -xi * x)
            })
            .sum()
    }

    pub fn c_hat(&self, xi: f64, x: Point) -> C64 {
        self.b_hat(xi) * (self.amplitude * self.q(x))
    }

    /// `(1/pi) int_{|lambda| > rho} |c_hat(2 lambda, x)|^2 d lambda`.
    pub fn tail_mass(&self, rho: f64, x: Point) -> f64 {
        let total = self.amplitude * self.amplitude * self.q(x).powi(2) * self.b_l2_squared();
        let inner = self.band_mass(rho) * (self.amplitude * self.q(x)).powi(2);
        (total - inner).max(0.0)
    }

    fn b_l2_squared(&self) -> f64 {
        let n = 4000;
        let a = self.x1_center - self.x1_half_width;
        let h = 2.0 * self.x1_half_width / n as f64;
        (0..=n).map(|i| self.b(a + i as f64 * h).powi(2) * h).sum()
    }

    /// `(1/pi) int_{|lambda| <= rho} |b_hat(2 lambda)|^2 d lambda` (Simpson).
    fn band_mass(&self, rho: f64) -> f64 {
        let n = 200;
        let h = 2.0 * rho / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let l = -rho + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * self.b_hat(2.0 * l).norm_sqr();
        }
        s * h / (3.0 * PI)
    }

    pub fn coefficient(&self, grid: &Grid, line: &LineGrid) -> Coefficient {
        Coefficient::from_fn(grid, line.cells + 1, line.h(), |x1, x| self.value(x1, x))
    }
}

/// Everything that is shared by the tasks of one reconstruction.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub manifold: TransversalManifold,
    pub grid: Grid,
    pub basis: SpectralBasis,
    pub line: LineGrid,
    pub qcfg: QuasimodeConfig,
    pub sigma: f64,
    pub d: f64,
    pub min_angle_deg: f64,
}

/// The four CGO solutions of one slice point.
#[derive(Debug, Clone)]
pub struct CgoQuadruple {
    pub v: [CgoSolution; 4],
    pub calib: CalibrationFactor,
    pub gamma_qm: Quasimode,
    pub eta_qm: Quasimode,
}

/// How the pairing is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairingPath {
    /// `6 int c v1 v2 v3 v4` with the CGO fields.
    Interior,
    /// Boundary data `D^3 Lambda(f1, f2, f3)` (plus noise) paired with `f4`.
    Data { eps: f64, seed: u64 },
}

impl Pipeline {
    /// Build `v1..v4` for `(k, tau, lambda)` at `y0`; `tau` is nudged by
    /// `1e-3` on resonance (up to five times).
    pub fn quadruple(&self, k: f64, tau: f64, lambda: f64, y0: Point) -> Result<CgoQuadruple> {
        let pair = pick_geodesics(&self.manifold, y0, self.min_angle_deg)?;
        let (cg, pg, ag) = beam_data(&self.manifold, y0, pair.dir_gamma, &self.qcfg)?;
        let (ce, pe, ae) = beam_data(&self.manifold, y0, pair.dir_eta, &self.qcfg)?;
        let mut tau = tau;
        let mut last = None;
        for _ in 0..6 {
            let spg = make_spectral_parameter(k, tau, lambda)?;
            let spe = make_spectral_parameter(k, tau, 0.0)?;
            let qg = assemble_quasimode(&cg, &pg, &ag, &spg, &self.qcfg, &self.grid)?;
            let qe = assemble_quasimode(&ce, &pe, &ae, &spe, &self.qcfg, &self.grid)?;
            let build = |kind: CgoKind, q: &Quasimode| assemble_cgo(kind, q, &self.grid, &self.basis, &self.line);
            let res = (|| -> Result<[CgoSolution; 4]> {
                Ok([
                    build(CgoKind::V1, &qg)?,
                    build(CgoKind::V2, &qg)?,
                    build(CgoKind::V3, &qe)?,
                    build(CgoKind::V4, &qe)?,
                ])
            })();
            match res {
                Ok(v) => {
                    let calib = calibrate_b0(&qg, &qe, &self.grid, y0)?;
                    return Ok(CgoQuadruple {
                        v,
                        calib,
                        gamma_qm: qg,
                        eta_qm: qe,
                    });
                }
                Err(e @ Error::Resonance { .. }) => {
                    last = Some(e);
                    tau += 1e-3;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::SolverFailure("resonance retries exhausted".into())))
    }

    /// One slice value `c_hat_est(2 lambda, y0)`.
    pub fn slice_value(
        &self,
        c: &Coefficient,
        solver: Option<&HelmholtzSolver>,
        k: f64,
        tau: f64,
        lambda: f64,
        y0: Point,
        path: PairingPath,
    ) -> Result<C64> {
        let q = self.quadruple(k, tau, lambda, y0)?;
        let fields = [&q.v[0].field, &q.v[1].field, &q.v[2].field, &q.v[3].field];
        let pairing = match path {
            PairingPath::Interior => interior_pairing(c, fields, &self.grid),
            PairingPath::Data { eps, seed } => {
                let s = solver.ok_or_else(|| Error::Invariant("data path needs a Helmholtz solver".into()))?;
                let f: Vec<_> = fields.iter().map(|u| trace(u, &self.grid)).collect();
                let data = s.d3_lambda(c, &f[0], &f[1], &f[2])?;
                let scale: f64 = f[..3].iter().map(|b| b.c2_norm(&self.grid, self.line.h())).product();
                let noisy = add_noise(&data, eps, scale, seed);
                noisy.pair(&f[3])
            }
        };
        fourier_slice(pairing, &q.calib)
    }
}

/// Interior lattice of `y0` points within `radius` of the origin.
pub fn y0_lattice(radius: f64, spacing: f64) -> Vec<(Point, f64)> {
    let n = (radius / spacing).floor() as i64;
    let mut out = Vec::new();
    for j in -n..=n {
        for i in -n..=n {
            let p = [i as f64 * spacing, j as f64 * spacing];
            if p[0] * p[0] + p[1] * p[1] <= radius * radius + 1e-12 {
                out.push((p, spacing * spacing));
            }
        }
    }
    out
}

/// Symmetric `lambda` grid with `2 half + 1` points on `[-window, window]`.
pub fn lambda_grid(window: f64, half: usize) -> Vec<f64> {
    if half == 0 {
        return vec![0.0];
    }
    (0..=2 * half).map(|i| window * (i as f64 - half as f64) / half as f64).collect()
}

/// Estimated slice on a `y0 x lambda` grid.
#[derive(Debug, Clone)]
pub struct FourierSlice {
    pub y0: Vec<(Point, f64)>,
    pub lambdas: Vec<f64>,
    /// `values[y][l]`, `None` where the task failed.
    pub values: Vec<Vec<Option<C64>>>,
}

/// Error metrics of the truncated inversion.
#[derive(Debug, Clone, Copy)]
pub struct InversionMetrics {
    /// `|c_rec - c|_{L^2}` over `R x Y` (windowed part plus tail).
    pub l2_error: f64,
    pub windowed_error: f64,
    pub tail: f64,
    /// `M / (1 + rho^2)` with `M` the discrete `H^1` norm.
    pub tail_budget: f64,
    pub truth_norm: f64,
    pub failed: usize,
}

fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let l = if i > 0 { xs[i] - xs[i - 1] } else { 0.0 };
            let r = if i + 1 < n { xs[i + 1] - xs[i] } else { 0.0 };
            0.5 * (l + r)
        })
        .collect()
}

/// Truncated inverse transform `c_rec(x1, y0) = (1/pi) int_{|lambda|<=rho} c_hat(2 lambda) e^{2 i lambda x1}`.
pub fn invert_fourier_at(slice: &FourierSlice, y_index: usize, x1: f64) -> f64 {
    let w = trapezoid_weights(&slice.lambdas);
    slice
        .lambdas
        .iter()
        .zip(&w)
        .zip(&slice.values[y_index])
        .map(|((&l, &wl), v)| (v.unwrap_or_default() * C64::from_polar(wl, 2.0 * l * x1)).re)
        .sum::<f64>()
        / PI
}

/// Plancherel error of the truncated inversion against the separable truth.
pub fn invert_fourier(slice: &FourierSlice, window: f64, truth: &SeparableBump, h1_bound: f64) -> InversionMetrics {
    let w = trapezoid_weights(&slice.lambdas);
    let mut windowed = 0.0;
    let mut tail = 0.0;
    let mut norm = 0.0;
    let mut failed = 0;
    let b2 = truth.b_l2_squared();
    for (yi, &(y0, wy)) in slice.y0.iter().enumerate() {
        for (li, &l) in slice.lambdas.iter().enumerate() {
            let exact = truth.c_hat(2.0 * l, y0);
            let est = match slice.values[yi][li] {
                Some(v) => v,
                None => {
                    failed += 1;
                    C64::new(0.0, 0.0)
                }
            };
            windowed += wy * w[li] * (est - exact).norm_sqr() / PI;
        }
        tail += wy * truth.tail_mass(window, y0);
        norm += wy * (truth.amplitude * truth.q(y0)).powi(2) * b2;
    }
    InversionMetrics {
        l2_error: (windowed + tail).sqrt(),
        windowed_error: windowed.sqrt(),
        tail: tail.sqrt(),
        tail_budget: h1_bound / (1.0 + window * window),
        truth_norm: norm.sqrt(),
        failed,
    }
}

/// SplitMix64 step, used to derive per-task noise seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run all `(y0, lambda)` tasks of one reconstruction.
pub fn compute_slice(
    p: &Pipeline,
    c: &Coefficient,
    solver: Option<&HelmholtzSolver>,
    k: f64,
    sched: &Schedule,
    y0: &[(Point, f64)],
    lambdas: &[f64],
    path: PairingPath,
) -> FourierSlice {
    let tasks: Vec<(usize, usize)> = (0..y0.len()).flat_map(|i| (0..lambdas.len()).map(move |j| (i, j))).collect();
    let vals: Vec<Option<C64>> = tasks
        .par_iter()
        .map(|&(i, j)| {
            let path = match path {
                PairingPath::Data { eps, seed } => PairingPath::Data {
                    eps,
                    seed: mix_seed(seed, (i * 1_000 + j) as u64),
                },
                other => other,
            };
            p.slice_value(c, solver, k, sched.tau, lambdas[j], y0[i].0, path).ok()
        })
        .collect();
    let values = vals.chunks(lambdas.len()).map(|c| c.to_vec()).collect();
    FourierSlice {
        y0: y0.to_vec(),
        lambdas: lambdas.to_vec(),
        values,
    }
}

/// Sampling of `y0` and `lambda` for one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceSampling {
    pub y0_radius: f64,
    pub y0_spacing: f64,
    /// `lambda` points per side of zero.
    pub lambda_half: usize,
}

impl Default for SliceSampling {
    fn default() -> Self {
        Self {
            y0_radius: 0.5,
            y0_spacing: 0.25,
            lambda_half: 2,
        }
    }
}

/// Outcome of one `(k, eps)` reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub k: f64,
    pub eps: f64,
    pub schedule: Schedule,
    pub slice: FourierSlice,
    pub metrics: InversionMetrics,
}

/// Schedule, simulate boundary data, estimate the slice and invert.
pub fn reconstruct(
    p: &Pipeline,
    truth: &SeparableBump,
    k: f64,
    eps: f64,
    seed: u64,
    sampling: &SliceSampling,
) -> Result<Reconstruction> {
    let schedule = parameter_schedule(k, eps, p.sigma, p.d)?;
    let planes = p.line.cells + 1;
    let solver = HelmholtzSolver::new(&p.grid, planes, p.line.h(), k, Some(&p.basis.eigenvalues))?;
    let c = truth.coefficient(&p.grid, &p.line);
    let y0 = y0_lattice(sampling.y0_radius, sampling.y0_spacing);
    let lambdas = lambda_grid(schedule.window, sampling.lambda_half);
    let slice = compute_slice(p, &c, Some(&solver), k, &schedule, &y0, &lambdas, PairingPath::Data { eps, seed });
    let metrics = invert_fourier(&slice, schedule.window, truth, c.h1_bound);
    Ok(Reconstruction {
        k,
        eps,
        schedule,
        slice,
        metrics,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Noiseless slice errors `|c_hat_est(0, y0) - c_hat(0, y0)|` against `varsigma`.
#[derive(Debug, Clone)]
pub struct SliceStudy {
    pub varsigma: Vec<f64>,
    /// `errors[v][p]` per `varsigma` and point.
    pub errors: Vec<Vec<f64>>,
    /// Mean error over the points.
    pub mean: Vec<f64>,
    pub slope: f64,
}

/// Slice study with the interior pairing of the four CGO solutions at
/// `tau = 1`, `lambda = 0`, `k = sqrt(varsigma^2 - 1)`.
pub fn interior_slice_study(p: &Pipeline, truth: &SeparableBump, varsigma: &[f64], points: &[Point]) -> Result<SliceStudy> {
    let c = truth.coefficient(&p.grid, &p.line);
    let mut errors = Vec::new();
    for &vs in varsigma {
        let k = (vs * vs - 1.0).sqrt();
        let row = points
            .iter()
            .map(|&y0| {
                let est = p.slice_value(&c, None, k, 1.0, 0.0, y0, PairingPath::Interior)?;
                Ok((est - truth.c_hat(0.0, y0)).norm())
            })
            .collect::<Result<Vec<f64>>>()?;
        errors.push(row);
    }
    let mean: Vec<f64> = errors.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let slope = loglog_slope(varsigma, &mean);
    Ok(SliceStudy {
        varsigma: varsigma.to_vec(),
        errors,
        mean,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let sigma = 5f64.sqrt() * 2.0;
        let s = parameter_schedule(100.0, 1e-3, sigma, 1.0).unwrap();
        assert_eq!((s.case, s.tau), (1, 1.0));
        assert!((s.window - 100f64.ln() / (4.0 * 5f64.sqrt())).abs() < 1e-12);
        let s = parameter_schedule(2.0, 1e-3, sigma, 1.0).unwrap();
        let e = -(1e-3f64).ln();
        assert_eq!(s.case, 2);
        assert!((s.tau - e / 2.0).abs() < 1e-12);
        assert!((s.window - 0.22057).abs() < 1e-4);
        assert!(parameter_schedule(2.0, 1.0, sigma, 1.0).is_err());
        assert!(parameter_schedule(1.0, 0.5, sigma, 1.0).is_err());
        assert_eq!(parameter_schedule(1.01, 0.999, sigma, 1.0).unwrap().case, 1);
    }

    #[test]
    fn laplace_constant_is_exact() {
        for vs in [25.0, 100.0, 400.0] {
            assert!((laplace_quadrature(|_| 1.0, [0.0, 0.0], vs) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_center_pair_is_orthogonal_diameters() {
        let p = pick_geodesics(&TransversalManifold::flat(), [0.0, 0.0], 30.0).unwrap();
        assert!((p.gamma.length - 2.0).abs() < 1e-9 && (p.eta.length - 2.0).abs() < 1e-9);
        assert_eq!(p.dir_gamma, [1.0, 0.0]);
    }
}
