//! Gaussian beam quasimodes `v = varsigma^{(n-2)/8} e^{i s Theta} a` on `M0`.
//!
//! The phase is `Theta = t + H(t) y^2 / 2` in Fermi coordinates with the
//! scalar Riccati equation `H' + H^2 + K = 0`, the amplitude is the leading
//! transport solution `a0 = c0 exp(-1/2 int H)` times a transversal cutoff.

use crate::geometry::{build_fermi_chart, shoot_geodesic, FermiChart, Point, ShootOptions, TransversalManifold};
use crate::spectral::Grid;
use crate::{Error, Result, C64};
use rayon::prelude::*;

/// The spectral parameter `(k, tau, lambda)` with `s = sqrt(k^2 + (tau + i lambda)^2)`
/// and `varsigma = sqrt(k^2 + tau^2 - lambda^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParameter {
    pub k: f64,
    pub tau: f64,
    pub lambda: f64,
    pub s: C64,
    pub varsigma: f64,
}

/// Principal square root of `a + i b` for `a > 0`, written so that
/// `Re >= sqrt(a)` survives rounding.
fn sqrt_right_half(a: f64, b: f64) -> C64 {
    let r = a.hypot(b);
    let re = ((r + a) * 0.5).sqrt();
    C64::new(re, b / (2.0 * re))
}

/// Build the spectral parameter; requires `tau >= 1` and `k^2 + tau^2 - lambda^2 >= 1`.
pub fn make_spectral_parameter(k: f64, tau: f64, lambda: f64) -> Result<SpectralParameter> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::Domain(format!("wavenumber k={k} must be finite and nonnegative")));
    }
    if !(tau >= 1.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau={tau} must be at least 1")));
    }
    if !lambda.is_finite() {
        return Err(Error::Domain("lambda must be finite".into()));
    }
    let a = k * k + tau * tau - lambda * lambda;
    if !(a >= 1.0) {
        return Err(Error::Domain(format!(
            "k^2 + tau^2 - lambda^2 = {a} is below 1 for (k, tau, lambda) = ({k}, {tau}, {lambda})"
        )));
    }
    let s = sqrt_right_half(a, 2.0 * tau * lambda);
    Ok(SpectralParameter {
        k,
        tau,
        lambda,
        s,
        varsigma: a.sqrt(),
    })
}

impl SpectralParameter {
    /// `s^2 = k^2 + (tau + i lambda)^2`.
    pub fn s2(&self) -> C64 {
        let z = C64::new(self.tau, self.lambda);
        z * z + self.k * self.k
    }

    /// Both inequalities `Re s >= varsigma` and `|Im s| <= sqrt(5) |lambda|`.
    pub fn satisfies_bounds(&self) -> bool {
        self.s.re >= self.varsigma && self.s.im.abs() <= 5f64.sqrt() * self.lambda.abs()
    }
}

/// Construction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasimodeConfig {
    /// Tube width `delta'`; the beam is supported in `|y| <= delta'/2`.
    pub delta: f64,
    /// Phase order (only 2 is implemented).
    pub phase_order: usize,
    /// Amplitude order (only 0 is implemented).
    pub amplitude_order: usize,
    /// Total dimension `n` of the cylinder; fixes the `(n-2)/8` normalization.
    pub dim: usize,
    pub h0: C64,
    pub c0: C64,
    /// Largest admissible `h * sqrt(varsigma)`.
    pub beam_resolution: f64,
}

impl Default for QuasimodeConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            phase_order: 2,
            amplitude_order: 0,
            dim: 3,
            h0: C64::new(0.0, 1.0),
            c0: C64::new(1.0, 0.0),
            beam_resolution: 0.2,
        }
    }
}

impl QuasimodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::config("quasimode.delta", "must be positive"));
        }
        if self.phase_order != 2 {
            return Err(Error::config("quasimode.phase_order", "only order 2 is implemented"));
        }
        if self.amplitude_order != 0 {
            return Err(Error::config("quasimode.amplitude_order", "only order 0 is implemented"));
        }
        if self.dim < 2 {
            return Err(Error::config("quasimode.dim", "must be at least 2"));
        }
        if !(self.h0.im > 0.0) {
            return Err(Error::config("quasimode.h0", "imaginary part must be positive"));
        }
        Ok(())
    }
}

/// Uniformly sampled path on the extended geodesic parameter range.
#[derive(Debug, Clone)]
struct Path {
    t0: f64,
    dt: f64,
}

impl Path {
    /// Cell index and local coordinate in `[0, 1]`.
    fn locate(&self, t: f64, n: usize) -> (usize, f64) {
        let u = (t - self.t0) / self.dt;
        let k = (u.floor().max(0.0) as usize).min(n - 2);
        (k, u - k as f64)
    }

    fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
}

fn hermite(p0: C64, p1: C64, d0: C64, d1: C64, s: f64, h: f64) -> C64 {
    let s2 = s * s;
    let s3 = s2 * s;
    p0 * (2.0 * s3 - 3.0 * s2 + 1.0) + d0 * (h * (s3 - 2.0 * s2 + s)) + p1 * (-2.0 * s3 + 3.0 * s2) + d1 * (h * (s3 - s2))
}

/// Solution `H(t)` of the Riccati equation along a Fermi chart.
#[derive(Debug, Clone)]
pub struct PhaseJet {
    path: Path,
    /// `H` at the geodesic samples.
    pub h: Vec<C64>,
    /// Curvature at half steps.
    curv: Vec<f64>,
    pub h0: C64,
}

/// Threshold on `|H|` signalling blow-up.
const RICCATI_CAP: f64 = 1e6;

/// Integrate `H' = -H^2 - K(t)` from `H(0) = h0` at the entry point over the
/// extended geodesic range.
pub fn solve_riccati(chart: &FermiChart, h0: C64) -> Result<PhaseJet> {
    if !(h0.im > 0.0) {
        return Err(Error::Domain(format!("Im H0 = {} must be positive", h0.im)));
    }
    let geo = &chart.geodesic;
    let samples = geo.extended_samples();
    let n = samples.len();
    let dt = geo.h;
    let path = Path { t0: samples[0].t, dt };
    let m = geo.manifold;
    // Curvature on the half-step lattice.
    let curv: Vec<f64> = (0..2 * n - 1)
        .into_par_iter()
        .map(|j| {
            if j % 2 == 0 {
                m.curvature(samples[j / 2].x)
            } else {
                geo.curvature_at(path.time(j / 2) + 0.5 * dt)
            }
        })
        .collect();
    let zero = samples.iter().position(|s| s.t.abs() < 0.5 * dt).unwrap_or(0);
    let f = |h: C64, k: f64| -h * h - k;
    let mut hs = vec![C64::new(0.0, 0.0); n];
    hs[zero] = h0;
    let step = |h: C64, ka: f64, km: f64, kb: f64, d: f64| {
        let k1 = f(h, ka);
        let k2 = f(h + k1 * (0.5 * d), km);
        let k3 = f(h + k2 * (0.5 * d), km);
        let k4 = f(h + k3 * d, kb);
        h + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (d / 6.0)
    };
    for i in zero..n - 1 {
        hs[i + 1] = step(hs[i], curv[2 * i], curv[2 * i + 1], curv[2 * i + 2], dt);
        if !(hs[i + 1].norm() < RICCATI_CAP) {
            return Err(Error::RiccatiBlowup {
                t: path.time(i + 1),
                norm: hs[i + 1].norm(),
            });
        }
    }
    for i in (1..=zero).rev() {
        hs[i - 1] = step(hs[i], curv[2 * i], curv[2 * i - 1], curv[2 * i - 2], -dt);
        if !(hs[i - 1].norm() < RICCATI_CAP) {
            return Err(Error::RiccatiBlowup {
                t: path.time(i - 1),
                norm: hs[i - 1].norm(),
            });
        }
    }
    Ok(PhaseJet { path, h: hs, curv, h0 })
}

impl PhaseJet {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn t_at(&self, k: usize) -> f64 {
        self.path.time(k)
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.path.t0, self.path.time(self.h.len() - 1))
    }

    /// Curvature along the geodesic (cubic interpolation of half-step samples).
    pub fn curvature(&self, t: f64) -> f64 {
        let hh = 0.5 * self.path.dt;
        let n = self.curv.len();
        let u = (t - self.path.t0) / hh;
        let k = (u.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let x = u - k as f64;
        let w = lagrange_weights(x);
        (0..4).map(|i| w[i] * self.curv[k + i]).sum()
    }

    fn curvature_dot(&self, t: f64) -> f64 {
        let e = 0.25 * self.path.dt;
        (self.curvature(t + e) - self.curvature(t - e)) / (2.0 * e)
    }

    /// `H(t)`, `H'(t)` and `H''(t)`.
    pub fn eval(&self, t: f64) -> (C64, C64, C64) {
        let (k, s) = self.path.locate(t, self.h.len());
        let dt = self.path.dt;
        let kt = self.curvature(t);
        let d0 = -self.h[k] * self.h[k] - self.curv[2 * k];
        let d1 = -self.h[k + 1] * self.h[k + 1] - self.curv[2 * k + 2];
        let h = hermite(self.h[k], self.h[k + 1], d0, d1, s, dt);
        let hd = -h * h - kt;
        let hdd = -h * hd * 2.0 - self.curvature_dot(t);
        (h, hd, hdd)
    }

    /// Complex phase `Theta(t, y) = t + H(t) y^2 / 2`.
    pub fn theta(&self, t: f64, y: f64) -> C64 {
        self.eval(t).0 * (0.5 * y * y) + t
    }

    /// Smallest `Im H` over the samples.
    pub fn min_im(&self) -> f64 {
        self.h.iter().map(|h| h.im).fold(f64::INFINITY, f64::min)
    }

    /// Largest `|H' + H^2 + K|` using five-point differences of the samples.
    pub fn riccati_residual(&self) -> f64 {
        let dt = self.path.dt;
        (2..self.h.len() - 2)
            .map(|i| {
                let d = (self.h[i - 2] - self.h[i - 1] * 8.0 + self.h[i + 1] * 8.0 - self.h[i + 2]) / (12.0 * dt);
                (d + self.h[i] * self.h[i] + self.curv[2 * i]).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn lagrange_weights(x: f64) -> [f64; 4] {
    [
        -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0,
        x * (x - 2.0) * (x - 3.0) / 2.0,
        -x * (x - 1.0) * (x - 3.0) / 2.0,
        x * (x - 1.0) * (x - 2.0) / 6.0,
    ]
}

/// Leading amplitude `a0(t) = c0 exp(l(t))` with `l' = -H/2`, `l(0) = 0`.
#[derive(Debug, Clone)]
pub struct AmplitudeJet {
    pub c0: C64,
    /// `l` at the geodesic samples.
    pub log: Vec<C64>,
    path: Path,
}

pub fn transport_amplitude(phase: &PhaseJet, c0: C64) -> Result<AmplitudeJet> {
    if c0.norm() == 0.0 || !c0.norm().is_finite() {
        return Err(Error::ZeroAmplitude);
    }
    let n = phase.len();
    let dt = phase.path.dt;
    let zero = (0..n).find(|&i| phase.t_at(i).abs() < 0.5 * dt).unwrap_or(0);
    let mut log = vec![C64::new(0.0, 0.0); n];
    // Simpson per cell with the Hermite midpoint.
    let cell = |i: usize| {
        let mid = phase.eval(phase.t_at(i) + 0.5 * dt).0;
        (phase.h[i] + mid * 4.0 + phase.h[i + 1]) * (-0.5 * dt / 6.0)
    };
    for i in zero..n - 1 {
        log[i + 1] = log[i] + cell(i);
    }
    for i in (1..=zero).rev() {
        log[i - 1] = log[i] - cell(i - 1);
    }
    Ok(AmplitudeJet {
        c0,
        log,
        path: phase.path.clone(),
    })
}

impl AmplitudeJet {
    /// `a0(t)` by Hermite interpolation of the logarithm.
    pub fn eval(&self, phase: &PhaseJet, t: f64) -> C64 {
        let (k, s) = self.path.locate(t, self.log.len());
        let d0 = phase.h[k] * -0.5;
        let d1 = phase.h[k + 1] * -0.5;
        self.c0 * hermite(self.log[k], self.log[k + 1], d0, d1, s, self.path.dt).exp()
    }

    pub fn sample(&self, k: usize) -> C64 {
        self.c0 * self.log[k].exp()
    }

    /// Largest `|a0' + H a0 / 2|` relative to `|a0|` (five-point differences).
    pub fn transport_residual(&self, phase: &PhaseJet) -> f64 {
        let dt = self.path.dt;
        (2..self.log.len() - 2)
            .map(|i| {
                let a = |j: usize| self.sample(j);
                let d = (a(i - 2) - a(i - 1) * 8.0 + a(i + 1) * 8.0 - a(i + 2)) / (12.0 * dt);
                (d + phase.h[i] * a(i) * 0.5).norm() / a(i).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Quintic smoothstep cutoff in `r = |y| / delta'`: 1 for `r <= 1/4`, 0 for `r >= 1/2`.
pub fn cutoff(r: f64) -> (f64, f64, f64) {
    let r = r.abs();
    if r <= 0.25 {
        return (1.0, 0.0, 0.0);
    }
    if r >= 0.5 {
        return (0.0, 0.0, 0.0);
    }
    let x = (r - 0.25) * 4.0;
    let p = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
    let dp = 30.0 * x * x * (1.0 - x) * (1.0 - x);
    let ddp = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
    (1.0 - p, -4.0 * dp, -16.0 * ddp)
}

/// A Gaussian beam sampled on the disk grid.
#[derive(Debug, Clone)]
pub struct Quasimode {
    /// Values on all grid nodes (interior then boundary).
    pub field: Vec<C64>,
    pub sp: SpectralParameter,
    pub cfg: QuasimodeConfig,
    pub chart: FermiChart,
    pub phase: PhaseJet,
    pub amplitude: AmplitudeJet,
    /// Fermi coordinates of nodes inside the tube.
    pub coords: Vec<Option<(f64, f64)>>,
    /// `varsigma^{(n-2)/8}`.
    pub scale: f64,
}

/// Pointwise jet of the beam at Fermi coordinates `(t, y)`.
struct BeamJet {
    theta: [C64; 6],
    amp: [C64; 6],
}

impl Quasimode {
    fn jet(&self, t: f64, y: f64) -> BeamJet {
        jet(&self.phase, &self.amplitude, self.cfg.delta, t, y)
    }

    pub fn beam_width(&self) -> f64 {
        1.0 / self.sp.varsigma.sqrt()
    }

    /// Value at a point of the plane (zero outside the tube).
    pub fn value_at(&self, x: Point) -> C64 {
        match chart_coords(&self.chart, x) {
            Some((t, y)) if y.abs() < 0.5 * self.cfg.delta => self.value_tc(t, y),
            _ => C64::new(0.0, 0.0),
        }
    }

    fn value_tc(&self, t: f64, y: f64) -> C64 {
        let j = self.jet(t, y);
        (C64::i() * self.sp.s * j.theta[0]).exp() * j.amp[0] * self.scale
    }
}

/// `(Theta, Theta_t, Theta_y, Theta_tt, Theta_ty, Theta_yy)` and the same for `a`.
fn jet(phase: &PhaseJet, amp: &AmplitudeJet, delta: f64, t: f64, y: f64) -> BeamJet {
    let (h, hd, hdd) = phase.eval(t);
    let y2 = 0.5 * y * y;
    let theta = [h * y2 + t, hd * y2 + 1.0, h * y, hdd * y2, hd * y, h];
    let a0 = amp.eval(phase, t);
    let a0t = -h * a0 * 0.5;
    let a0tt = (h * h * 0.25 - hd * 0.5) * a0;
    let (c, dc, ddc) = cutoff(y / delta);
    let sg = if y < 0.0 { -1.0 } else { 1.0 };
    let cy = dc * sg / delta;
    let cyy = ddc / (delta * delta);
    BeamJet {
        theta,
        amp: [a0 * c, a0t * c, a0 * cy, a0tt * c, a0t * cy, a0 * cyy],
    }
}

fn chart_coords(chart: &FermiChart, x: Point) -> Option<(f64, f64)> {
    let (t, y) = chart.inverse_fast(x)?;
    let (ta, tb) = chart.geodesic.t_range();
    if t <= ta + 0.05 || t >= tb - 0.05 {
        return None;
    }
    Some((t, y))
}

/// Shoot the geodesic through `x0` in direction `dir` and build its chart,
/// phase and amplitude.
pub fn beam_data(
    m: &TransversalManifold,
    x0: Point,
    dir: Point,
    cfg: &QuasimodeConfig,
) -> Result<(FermiChart, PhaseJet, AmplitudeJet)> {
    cfg.validate()?;
    let geo = shoot_geodesic(m, x0, dir, &ShootOptions::default())?;
    let chart = build_fermi_chart(&geo, cfg.delta)?;
    let phase = solve_riccati(&chart, cfg.h0)?;
    let amp = transport_amplitude(&phase, cfg.c0)?;
    Ok((chart, phase, amp))
}

/// Sample the beam on `grid`.
pub fn assemble_quasimode(
    chart: &FermiChart,
    phase: &PhaseJet,
    amplitude: &AmplitudeJet,
    sp: &SpectralParameter,
    cfg: &QuasimodeConfig,
    grid: &Grid,
) -> Result<Quasimode> {
    cfg.validate()?;
    let required = cfg.beam_resolution / sp.varsigma.sqrt();
    if grid.h > required * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse { h: grid.h, required });
    }
    let scale = sp.varsigma.powf((cfg.dim as f64 - 2.0) / 8.0);
    let coords: Vec<Option<(f64, f64)>> = grid
        .nodes
        .par_iter()
        .map(|&x| chart_coords(chart, x).filter(|&(_, y)| y.abs() < 0.5 * cfg.delta))
        .collect();
    let mut qm = Quasimode {
        field: Vec::new(),
        sp: *sp,
        cfg: *cfg,
        chart: chart.clone(),
        phase: phase.clone(),
        amplitude: amplitude.clone(),
        coords,
        scale,
    };
    qm.field = qm
        .coords
        .par_iter()
        .map(|c| match *c {
            Some((t, y)) => qm.value_tc(t, y),
            None => C64::new(0.0, 0.0),
        })
        .collect();
    Ok(qm)
}

/// Shoot, build and sample in one call.
pub fn build_quasimode(
    m: &TransversalManifold,
    x0: Point,
    dir: Point,
    sp: &SpectralParameter,
    cfg: &QuasimodeConfig,
    grid: &Grid,
) -> Result<Quasimode> {
    let (chart, phase, amp) = beam_data(m, x0, dir, cfg)?;
    assemble_quasimode(&chart, &phase, &amp, sp, cfg, grid)
}

/// Residual `(-Delta_g0 - s^2) v` with its grid `L^2` norm and the relative
/// size `|f| / (|s|^2 |v|)`.
#[derive(Debug, Clone)]
pub struct Residual {
    pub field: Vec<C64>,
    pub norm: f64,
    pub relative: f64,
}

/// Residual of the beam from its analytic jets (chart Laplace-Beltrami operator).
pub fn quasimode_residual(qm: &Quasimode, grid: &Grid) -> Residual {
    let s = qm.sp.s;
    let s2 = s * s;
    let i = C64::i();
    let affine = qm.chart.manifold().conformal.is_affine();
    let field: Vec<C64> = qm
        .coords
        .par_iter()
        .map(|c| {
            let Some((t, y)) = *c else {
                return C64::new(0.0, 0.0);
            };
            let jt = qm.jet(t, y);
            let (th, a) = (jt.theta, jt.amp);
            // inverse metric and contracted Christoffel symbols
            let (gi, gam) = if affine {
                (inv2(&qm.chart.metric_in_chart(t, y)), [0.0, 0.0])
            } else {
                match qm.chart.metric_jet(t, y) {
                    Some(j) => contracted_christoffel(&j.g, &j.dt, &j.dy),
                    None => {
                        let g = qm.chart.metric_in_chart(t, y);
                        (inv2(&g), [0.0, 0.0])
                    }
                }
            };
            let lap = |d: &[C64; 6]| {
                d[3] * gi[0][0] + d[4] * (2.0 * gi[0][1]) + d[5] * gi[1][1] - d[1] * gam[0] - d[2] * gam[1]
            };
            let inner = |p: &[C64; 6], q: &[C64; 6]| {
                p[1] * q[1] * gi[0][0] + (p[1] * q[2] + p[2] * q[1]) * gi[0][1] + p[2] * q[2] * gi[1][1]
            };
            let grad2 = inner(&th, &th);
            let val = s2 * (grad2 - 1.0) * a[0] - i * s * (inner(&th, &a) * 2.0 + lap(&th) * a[0]) - lap(&a);
            (i * s * th[0]).exp() * val * qm.scale
        })
        .collect();
    finish_residual(qm, grid, field)
}

/// Residual with the grid operator `-Delta_h` in place of the analytic one.
pub fn discrete_residual(qm: &Quasimode, grid: &Grid) -> Residual {
    let s2 = qm.sp.s * qm.sp.s;
    let lap = grid.neg_laplacian(&qm.field);
    let mut field: Vec<C64> = lap.iter().zip(&qm.field).map(|(l, v)| l - s2 * v).collect();
    field.resize(grid.n_all(), C64::new(0.0, 0.0));
    finish_residual(qm, grid, field)
}

fn finish_residual(qm: &Quasimode, grid: &Grid, field: Vec<C64>) -> Residual {
    let norm = grid.l2_norm(&field);
    let vn = grid.l2_norm(&qm.field);
    let relative = if vn > 0.0 { norm / (qm.sp.s.norm_sqr() * vn) } else { 0.0 };
    Residual { field, norm, relative }
}

fn inv2(g: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]]
}

/// `g^{ab}` and `g^{ab} Gamma^c_{ab}` from the metric and its first derivatives.
fn contracted_christoffel(g: &[[f64; 2]; 2], dt: &[[f64; 2]; 2], dy: &[[f64; 2]; 2]) -> ([[f64; 2]; 2], [f64; 2]) {
    let gi = inv2(g);
    let d = [dt, dy];
    let mut gam = [0.0; 2];
    for c in 0..2 {
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let mut gab_c = 0.0;
                for e in 0..2 {
                    gab_c += 0.5 * gi[c][e] * (d[a][b][e] + d[b][a][e] - d[e][a][b]);
                }
                acc += gi[a][b] * gab_c;
            }
        }
        gam[c] = acc;
    }
    (gi, gam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shoot_geodesic;

    #[test]
    fn spectral_parameter_examples() {
        let p = make_spectral_parameter(2.0, 1.0, 0.0).unwrap();
        assert!((p.s.re - 5f64.sqrt()).abs() < 1e-14 && p.s.im == 0.0);
        let p = make_spectral_parameter(2.0, 1.0, 1.0).unwrap();
        assert!((p.s - C64::new(4.0, 2.0).sqrt()).norm() < 1e-14);
        assert_eq!(p.varsigma, 2.0);
        assert!(p.satisfies_bounds());
        assert_eq!(make_spectral_parameter(1.0, 1.0, 1.0).unwrap().varsigma, 1.0);
        assert!(make_spectral_parameter(1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn flat_riccati_closed_form() {
        let m = TransversalManifold::flat();
        let geo = shoot_geodesic(&m, [0.0, 0.0], [1.0, 0.0], &ShootOptions::default()).unwrap();
        let chart = build_fermi_chart(&geo, 1.0).unwrap();
        let ph = solve_riccati(&chart, C64::new(0.0, 2.0)).unwrap();
        for k in (0..ph.len()).step_by(97) {
            let t = ph.t_at(k);
            let exact = (C64::new(t, 0.0) - C64::new(0.0, 0.5)).inv();
            assert!((ph.h[k] - exact).norm() < 1e-10);
        }
        assert!(ph.riccati_residual() < 1e-8);
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(cutoff(0.1).0, 1.0);
        assert_eq!(cutoff(0.6).0, 0.0);
        let e = 1e-6;
        let r = 0.37;
        let fd = (cutoff(r + e).0 - cutoff(r - e).0) / (2.0 * e);
        assert!((fd - cutoff(r).1).abs() < 1e-6);
    }
}
