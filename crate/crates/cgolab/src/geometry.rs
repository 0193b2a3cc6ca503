//! The transversal manifold `(M0, g0)`: the unit disk with conformal metric
//! `g0 = e^{2 phi} I`, its geodesics, parallel frames and Fermi charts.

use crate::ode::{rk4_span, rk4_step};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

/// Closed family of conformal factors `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Conformal {
    Flat,
    Constant { value: f64 },
    /// `phi(x) = amplitude * exp(-|x|^2 / width^2)`.
    GaussianBump { amplitude: f64, width: f64 },
}

impl Conformal {
    pub fn phi(&self, x: Point) -> f64 {
        match *self {
            Conformal::Flat => 0.0,
            Conformal::Constant { value } => value,
            Conformal::GaussianBump { amplitude, width } => {
                amplitude * (-(x[0] * x[0] + x[1] * x[1]) / (width * width)).exp()
            }
        }
    }

    pub fn grad(&self, x: Point) -> Point {
        match *self {
            Conformal::Flat | Conformal::Constant { .. } => [0.0, 0.0],
            Conformal::GaussianBump { width, .. } => {
                let p = self.phi(x);
                let c = -2.0 / (width * width);
                [c * x[0] * p, c * x[1] * p]
            }
        }
    }

    pub fn hessian(&self, x: Point) -> [[f64; 2]; 2] {
        match *self {
            Conformal::Flat | Conformal::Constant { .. } => [[0.0; 2]; 2],
            Conformal::GaussianBump { width, .. } => {
                let p = self.phi(x);
                let w2 = width * width;
                let mut h = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        let d = if i == j { 1.0 } else { 0.0 };
                        h[i][j] = (4.0 * x[i] * x[j] / (w2 * w2) - 2.0 * d / w2) * p;
                    }
                }
                h
            }
        }
    }

    pub fn laplacian(&self, x: Point) -> f64 {
        let h = self.hessian(x);
        h[0][0] + h[1][1]
    }

    /// True when the metric is a constant multiple of the identity, so
    /// geodesics are straight lines and Fermi charts are affine.
    pub fn is_affine(&self) -> bool {
        !matches!(self, Conformal::GaussianBump { amplitude, .. } if *amplitude != 0.0)
    }

    /// Lower and upper bounds of `phi` on the closed unit disk.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Conformal::Flat => (0.0, 0.0),
            Conformal::Constant { value } => (value, value),
            Conformal::GaussianBump { amplitude, width } => {
                let edge = amplitude * (-1.0 / (width * width)).exp();
                (edge.min(amplitude), edge.max(amplitude))
            }
        }
    }
}

/// The disk `{|x| < 1}` with metric `e^{2 phi} I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransversalManifold {
    pub conformal: Conformal,
}

impl TransversalManifold {
    pub fn new(conformal: Conformal) -> Self {
        Self { conformal }
    }

    pub fn flat() -> Self {
        Self::new(Conformal::Flat)
    }

    pub fn radius(&self) -> f64 {
        1.0
    }

    pub fn contains(&self, x: Point) -> bool {
        x[0] * x[0] + x[1] * x[1] < 1.0
    }

    /// Conformal factor `e^{2 phi}`.
    pub fn factor(&self, x: Point) -> f64 {
        (2.0 * self.conformal.phi(x)).exp()
    }

    pub fn metric(&self, x: Point) -> [[f64; 2]; 2] {
        let f = self.factor(x);
        [[f, 0.0], [0.0, f]]
    }

    pub fn inner(&self, x: Point, a: Point, b: Point) -> f64 {
        self.factor(x) * (a[0] * b[0] + a[1] * b[1])
    }

    pub fn norm(&self, x: Point, a: Point) -> f64 {
        self.inner(x, a, a).sqrt()
    }

    /// Gaussian curvature `K = -e^{-2 phi} Laplacian(phi)`.
    pub fn curvature(&self, x: Point) -> f64 {
        -(-2.0 * self.conformal.phi(x)).exp() * self.conformal.laplacian(x)
    }

    /// Christoffel symbols `Gamma^k_ij` of the conformal metric.
    pub fn christoffel(&self, x: Point) -> [[[f64; 2]; 2]; 2] {
        let g = self.conformal.grad(x);
        let mut c = [[[0.0; 2]; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let dik = if i == k { 1.0 } else { 0.0 };
                    let djk = if j == k { 1.0 } else { 0.0 };
                    let dij = if i == j { 1.0 } else { 0.0 };
                    c[k][i][j] = dik * g[j] + djk * g[i] - dij * g[k];
                }
            }
        }
        c
    }

    /// Geodesic acceleration `-Gamma(v, v)`.
    #[inline]
    pub fn acceleration(&self, x: Point, v: Point) -> Point {
        let g = self.conformal.grad(x);
        let gv = g[0] * v[0] + g[1] * v[1];
        let vv = v[0] * v[0] + v[1] * v[1];
        [-2.0 * gv * v[0] + vv * g[0], -2.0 * gv * v[1] + vv * g[1]]
    }

    /// Covariant transport rate `-Gamma(v, e)` for a vector `e` carried along velocity `v`.
    #[inline]
    pub fn transport(&self, x: Point, v: Point, e: Point) -> Point {
        let g = self.conformal.grad(x);
        let ge = g[0] * e[0] + g[1] * e[1];
        let gv = g[0] * v[0] + g[1] * v[1];
        let ve = v[0] * e[0] + v[1] * e[1];
        [
            -(v[0] * ge + e[0] * gv - ve * g[0]),
            -(v[1] * ge + e[1] * gv - ve * g[1]),
        ]
    }

    /// Geodesic flow on `[x, v]`.
    pub fn geodesic_rhs(&self, y: &[f64; 4]) -> [f64; 4] {
        let a = self.acceleration([y[0], y[1]], [y[2], y[3]]);
        [y[2], y[3], a[0], a[1]]
    }

    /// Geodesic flow together with its linearization, state `[x, v, dx, dv]`.
    pub fn variational_rhs(&self, y: &[f64; 8]) -> [f64; 8] {
        let x = [y[0], y[1]];
        let v = [y[2], y[3]];
        let dx = [y[4], y[5]];
        let dv = [y[6], y[7]];
        let a = self.acceleration(x, v);
        let g = self.conformal.grad(x);
        let hs = self.conformal.hessian(x);
        let gv = g[0] * v[0] + g[1] * v[1];
        let vv = v[0] * v[0] + v[1] * v[1];
        let mut da = [0.0; 2];
        for k in 0..2 {
            let mut s = 0.0;
            for m in 0..2 {
                let hv_m = hs[m][0] * v[0] + hs[m][1] * v[1];
                let dadx = -2.0 * v[k] * hv_m + vv * hs[k][m];
                let dkm = if k == m { 1.0 } else { 0.0 };
                let dadv = -2.0 * dkm * gv - 2.0 * v[k] * g[m] + 2.0 * v[m] * g[k];
                s += dadx * dx[m] + dadv * dv[m];
            }
            da[k] = s;
        }
        [v[0], v[1], a[0], a[1], dv[0], dv[1], da[0], da[1]]
    }
}

/// Options for [`shoot_geodesic`].
#[derive(Debug, Clone, Copy)]
pub struct ShootOptions {
    /// RK4 step in arclength.
    pub h: f64,
    /// Arclength cap; exceeding it signals a trapped geodesic.
    pub cap: f64,
    /// Minimum cosine between the velocity and the boundary normal.
    pub nontangential: f64,
    /// Integrate backward to the entry point as well as forward.
    pub both_directions: bool,
    /// Extension beyond both endpoints (the metric is defined on the plane).
    pub pad: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            cap: 50.0,
            nontangential: 0.1,
            both_directions: true,
            pad: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoSample {
    pub t: f64,
    pub x: Point,
    pub v: Point,
}

/// Unit-speed geodesic through the disk, `t = 0` at the entry point and
/// `t = length` at the exit point. Samples are uniform in `t` and extend by
/// `pad` beyond both ends.
#[derive(Debug, Clone)]
pub struct Geodesic {
    pub manifold: TransversalManifold,
    pub h: f64,
    pub length: f64,
    /// Cosine of the angle with the inward normal at entry.
    pub entry_cos: f64,
    /// Cosine of the angle with the outward normal at exit.
    pub exit_cos: f64,
    pub entry_nontangential: bool,
    pub exit_nontangential: bool,
    samples: Vec<GeoSample>,
    zero: usize,
}

fn norm2(x: Point) -> f64 {
    x[0] * x[0] + x[1] * x[1]
}

/// Bisect for the fraction of a step at which the trajectory leaves the disk.
fn crossing(m: &TransversalManifold, y: &[f64; 4], h: f64) -> (f64, [f64; 4]) {
    let f = |_t: f64, s: &[f64; 4]| m.geodesic_rhs(s);
    let (mut lo, mut hi) = (0.0f64, h);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let s = rk4_step(&f, 0.0, y, mid);
        if norm2([s[0], s[1]]) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() < 1e-16 {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    (tau, rk4_step(&f, 0.0, y, tau))
}

/// Shoot the geodesic through `x0` with direction `dir` (rescaled to unit
/// `g0`-speed).
pub fn shoot_geodesic(m: &TransversalManifold, x0: Point, dir: Point, opts: &ShootOptions) -> Result<Geodesic> {
    if !m.contains(x0) {
        return Err(Error::Domain(format!("start point ({}, {}) not interior", x0[0], x0[1])));
    }
    let dn = m.norm(x0, dir);
    if !(dn > 0.0) || !dn.is_finite() {
        return Err(Error::Domain("direction must be nonzero".into()));
    }
    let v0 = [dir[0] / dn, dir[1] / dn];
    let h = opts.h;
    let f = |_t: f64, s: &[f64; 4]| m.geodesic_rhs(s);
    let max_steps = (opts.cap / h).ceil() as usize;

    // Entry state.
    let (entry, entry_cos) = if opts.both_directions {
        let mut y = [x0[0], x0[1], -v0[0], -v0[1]];
        let mut steps = 0usize;
        loop {
            let next = rk4_step(&f, 0.0, &y, h);
            if norm2([next[0], next[1]]) >= 1.0 {
                let (_, c) = crossing(m, &y, h);
                y = c;
                break;
            }
            y = next;
            steps += 1;
            if steps > max_steps {
                return Err(Error::NoExit { cap: opts.cap });
            }
        }
        let e = [y[0], y[1], -y[2], -y[3]];
        let r = norm2([e[0], e[1]]).sqrt();
        let vn = norm2([e[2], e[3]]).sqrt();
        let cos = -(e[0] * e[2] + e[1] * e[3]) / (r * vn);
        (e, cos)
    } else {
        ([x0[0], x0[1], v0[0], v0[1]], 1.0)
    };

    // Forward sweep from the entry point on the uniform grid.
    let mut fwd = vec![entry];
    let mut y = entry;
    let length;
    let exit_state;
    loop {
        let next = rk4_step(&f, 0.0, &y, h);
        if norm2([next[0], next[1]]) >= 1.0 {
            let (tau, c) = crossing(m, &y, h);
            length = (fwd.len() - 1) as f64 * h + tau;
            exit_state = c;
            break;
        }
        fwd.push(next);
        y = next;
        if fwd.len() > max_steps {
            return Err(Error::NoExit { cap: opts.cap });
        }
    }
    let r = norm2([exit_state[0], exit_state[1]]).sqrt();
    let vn = norm2([exit_state[2], exit_state[3]]).sqrt();
    let exit_cos = (exit_state[0] * exit_state[2] + exit_state[1] * exit_state[3]) / (r * vn);

    let pad_n = (opts.pad / h).ceil() as usize;
    let n_total = ((length + opts.pad) / h).ceil() as usize + 1;
    while fwd.len() < n_total {
        let next = rk4_step(&f, 0.0, &y, h);
        fwd.push(next);
        y = next;
    }
    let mut back = Vec::with_capacity(pad_n);
    let mut yb = entry;
    for _ in 0..pad_n {
        yb = rk4_step(&f, 0.0, &yb, -h);
        back.push(yb);
    }
    let mut samples = Vec::with_capacity(back.len() + fwd.len());
    for (i, s) in back.iter().enumerate().rev() {
        samples.push(GeoSample {
            t: -((i + 1) as f64) * h,
            x: [s[0], s[1]],
            v: [s[2], s[3]],
        });
    }
    for (i, s) in fwd.iter().enumerate() {
        samples.push(GeoSample {
            t: i as f64 * h,
            x: [s[0], s[1]],
            v: [s[2], s[3]],
        });
    }

    let geo = Geodesic {
        manifold: *m,
        h,
        length,
        entry_cos,
        exit_cos,
        entry_nontangential: entry_cos >= opts.nontangential,
        exit_nontangential: exit_cos >= opts.nontangential,
        samples,
        zero: pad_n,
    };
    if !geo.entry_nontangential {
        return Err(Error::TangentialExit {
            cos_angle: entry_cos,
            threshold: opts.nontangential,
        });
    }
    if !geo.exit_nontangential {
        return Err(Error::TangentialExit {
            cos_angle: exit_cos,
            threshold: opts.nontangential,
        });
    }
    if let Some(t) = geo.first_conjugate_point() {
        return Err(Error::ConjugatePoint { t });
    }
    Ok(geo)
}

impl Geodesic {
    /// Samples with `0 <= t <= length`.
    pub fn samples(&self) -> &[GeoSample] {
        let end = self.zero + (self.length / self.h).floor() as usize + 1;
        &self.samples[self.zero..end.min(self.samples.len())]
    }

    /// All samples including the extensions beyond the endpoints.
    pub fn extended_samples(&self) -> &[GeoSample] {
        &self.samples
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    pub fn entry(&self) -> GeoSample {
        self.samples[self.zero]
    }

    fn nearest_index(&self, t: f64) -> usize {
        let k = ((t - self.samples[0].t) / self.h).round();
        (k.max(0.0) as usize).min(self.samples.len() - 1)
    }

    /// Position and velocity at arbitrary `t` (one RK4 step from the nearest sample).
    pub fn state_at(&self, t: f64) -> (Point, Point) {
        let s = self.samples[self.nearest_index(t)];
        let f = |_t: f64, y: &[f64; 4]| self.manifold.geodesic_rhs(y);
        let y = rk4_step(&f, 0.0, &[s.x[0], s.x[1], s.v[0], s.v[1]], t - s.t);
        ([y[0], y[1]], [y[2], y[3]])
    }

    /// Gaussian curvature along the geodesic.
    pub fn curvature_at(&self, t: f64) -> f64 {
        self.manifold.curvature(self.state_at(t).0)
    }

    /// Largest deviation of `|v|_g` from 1 over the samples in `[0, L]`.
    pub fn speed_defect(&self) -> f64 {
        self.samples()
            .iter()
            .map(|s| (self.manifold.norm(s.x, s.v) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest central-difference residual of `x' = v`, `v' = -Gamma(v,v)`.
    pub fn equation_residual(&self) -> f64 {
        let s = &self.samples;
        let mut worst = 0.0f64;
        let lo = self.zero.max(1);
        let hi = (self.zero + (self.length / self.h) as usize).min(s.len() - 2);
        for k in lo..=hi {
            let a = self.manifold.acceleration(s[k].x, s[k].v);
            for i in 0..2 {
                let dv = (s[k + 1].v[i] - s[k - 1].v[i]) / (2.0 * self.h);
                let dx = (s[k + 1].x[i] - s[k - 1].x[i]) / (2.0 * self.h);
                worst = worst.max((dv - a[i]).abs()).max((dx - s[k].v[i]).abs());
            }
        }
        worst
    }

    /// First zero of the Jacobi field `J'' + K J = 0`, `J(0)=0`, `J'(0)=1` on `(0, L]`.
    pub fn first_conjugate_point(&self) -> Option<f64> {
        let m = self.manifold;
        let f = |_t: f64, y: &[f64; 6]| {
            let a = m.acceleration([y[0], y[1]], [y[2], y[3]]);
            let k = m.curvature([y[0], y[1]]);
            [y[2], y[3], a[0], a[1], y[5], -k * y[4]]
        };
        let e = self.entry();
        let mut y = [e.x[0], e.x[1], e.v[0], e.v[1], 0.0, 1.0];
        let n = (self.length / self.h).ceil() as usize;
        let h = self.length / n as f64;
        for i in 0..n {
            y = rk4_step(&f, 0.0, &y, h);
            if y[4] <= 0.0 {
                return Some((i + 1) as f64 * h);
            }
        }
        None
    }
}

/// Parallel normal frame `E(t)` along a geodesic, aligned with its extended samples.
#[derive(Debug, Clone)]
pub struct Frame {
    pub e: Vec<Point>,
}

fn frame_rhs(m: &TransversalManifold, y: &[f64; 6]) -> [f64; 6] {
    let x = [y[0], y[1]];
    let v = [y[2], y[3]];
    let a = m.acceleration(x, v);
    let de = m.transport(x, v, [y[4], y[5]]);
    [v[0], v[1], a[0], a[1], de[0], de[1]]
}

/// Transport `E(0) = J gamma'(0)` (rotation by +90 degrees) along the geodesic.
pub fn parallel_frame(geo: &Geodesic) -> Frame {
    let m = geo.manifold;
    let f = |_t: f64, y: &[f64; 6]| frame_rhs(&m, y);
    let s = &geo.samples;
    let mut e = vec![[0.0; 2]; s.len()];
    let z = geo.zero;
    let e0 = [-s[z].v[1], s[z].v[0]];
    e[z] = e0;
    let mut y = [s[z].x[0], s[z].x[1], s[z].v[0], s[z].v[1], e0[0], e0[1]];
    for k in z + 1..s.len() {
        y = rk4_step(&f, 0.0, &y, geo.h);
        e[k] = [y[4], y[5]];
    }
    let mut y = [s[z].x[0], s[z].x[1], s[z].v[0], s[z].v[1], e0[0], e0[1]];
    for k in (0..z).rev() {
        y = rk4_step(&f, 0.0, &y, -geo.h);
        e[k] = [y[4], y[5]];
    }
    Frame { e }
}

impl Frame {
    /// Largest deviation from orthonormality of `(gamma', E)` in `g0`.
    pub fn orthonormality_defect(&self, geo: &Geodesic) -> f64 {
        let m = geo.manifold;
        geo.samples
            .iter()
            .zip(&self.e)
            .map(|(s, e)| {
                let n = (m.inner(s.x, *e, *e) - 1.0).abs();
                let o = m.inner(s.x, *e, s.v).abs();
                n.max(o)
            })
            .fold(0.0, f64::max)
    }
}

/// Uniform tensor table of the chart map and its derivatives.
#[derive(Debug, Clone)]
struct ChartTable {
    t0: f64,
    y0: f64,
    d: f64,
    nt: usize,
    ny: usize,
    /// Per node: `[F, F_t, F_y]` as six numbers.
    data: Vec<[f64; 6]>,
}

impl ChartTable {
    fn node(&self, i: usize, j: usize) -> &[f64; 6] {
        &self.data[i * self.ny + j]
    }

    /// Tensor cubic Lagrange interpolation; `None` outside the table.
    fn eval(&self, t: f64, y: f64) -> Option<[f64; 6]> {
        let u = (t - self.t0) / self.d;
        let w = (y - self.y0) / self.d;
        if u < 0.0 || w < 0.0 || u > (self.nt - 1) as f64 || w > (self.ny - 1) as f64 {
            return None;
        }
        let iu = (u.floor() as isize - 1).clamp(0, self.nt as isize - 4) as usize;
        let iw = (w.floor() as isize - 1).clamp(0, self.ny as isize - 4) as usize;
        let lu = lagrange4(u - iu as f64);
        let lw = lagrange4(w - iw as f64);
        let mut out = [0.0; 6];
        for a in 0..4 {
            for b in 0..4 {
                let c = lu[a] * lw[b];
                let n = self.node(iu + a, iw + b);
                for q in 0..6 {
                    out[q] += c * n[q];
                }
            }
        }
        Some(out)
    }
}

/// Cubic Lagrange weights on nodes 0,1,2,3 at position `s`.
fn lagrange4(s: f64) -> [f64; 4] {
    [
        -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
        s * (s - 2.0) * (s - 3.0) / 2.0,
        -s * (s - 1.0) * (s - 3.0) / 2.0,
        s * (s - 1.0) * (s - 2.0) / 6.0,
    ]
}

/// Fermi chart `F(t, y) = exp_{gamma(t)}(y E(t))` on the tube `|y| <= delta/2`.
#[derive(Debug, Clone)]
pub struct FermiChart {
    pub geodesic: Geodesic,
    pub frame: Frame,
    pub delta: f64,
    table: Option<ChartTable>,
}

/// Chart-table spacing in both coordinates.
const TABLE_STEP: f64 = 0.01;

/// Build the Fermi chart; checks self-intersection and injectivity on the tube.
pub fn build_fermi_chart(geo: &Geodesic, delta: f64) -> Result<FermiChart> {
    if !(delta > 0.0) {
        return Err(Error::Domain("tube radius must be positive".into()));
    }
    check_self_intersection(geo, delta)?;
    let frame = parallel_frame(geo);
    let mut chart = FermiChart {
        geodesic: geo.clone(),
        frame,
        delta,
        table: None,
    };
    if !geo.manifold.conformal.is_affine() {
        chart.table = Some(chart.tabulate());
        chart.check_injective()?;
    }
    Ok(chart)
}

fn check_self_intersection(geo: &Geodesic, delta: f64) -> Result<()> {
    let s = geo.samples();
    let stride = ((0.1 * delta / geo.h).floor() as usize).max(1);
    let pts: Vec<&GeoSample> = s.iter().step_by(stride).collect();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if (pts[j].t - pts[i].t).abs() > 4.0 * delta {
                let d = ((pts[i].x[0] - pts[j].x[0]).powi(2) + (pts[i].x[1] - pts[j].x[1]).powi(2)).sqrt();
                if d < 0.5 * delta {
                    return Err(Error::SelfIntersecting { t1: pts[i].t, t2: pts[j].t });
                }
            }
        }
    }
    Ok(())
}

impl FermiChart {
    pub fn manifold(&self) -> &TransversalManifold {
        &self.geodesic.manifold
    }

    /// Geodesic state and frame vector at `t`.
    pub fn base(&self, t: f64) -> (Point, Point, Point) {
        let geo = &self.geodesic;
        let k = geo.nearest_index(t);
        let s = geo.samples[k];
        let e = self.frame.e[k];
        let m = geo.manifold;
        let f = |_t: f64, y: &[f64; 6]| frame_rhs(&m, y);
        let y = rk4_step(&f, 0.0, &[s.x[0], s.x[1], s.v[0], s.v[1], e[0], e[1]], t - s.t);
        ([y[0], y[1]], [y[2], y[3]], [y[4], y[5]])
    }

    /// `F(t, y)` and its Jacobian columns `(F_t, F_y)`, integrated directly.
    pub fn forward_with_jacobian(&self, t: f64, y: f64) -> (Point, Point, Point) {
        let m = self.geodesic.manifold;
        let (x, v, e) = self.base(t);
        if m.conformal.is_affine() {
            return ([x[0] + y * e[0], x[1] + y * e[1]], v, e);
        }
        let de = m.transport(x, v, e);
        // d/dy of the normal geodesic; the t-variation is the Jacobi field with
        // initial data (gamma', D_t E) = (v, de).
        let s0 = [x[0], x[1], e[0], e[1], v[0], v[1], de[0], de[1]];
        let f = |_s: f64, z: &[f64; 8]| m.variational_rhs(z);
        let n = ((y.abs() / self.geodesic.h).ceil() as usize).max(1);
        let z = rk4_span(&f, 0.0, &s0, y, n);
        ([z[0], z[1]], [z[4], z[5]], [z[2], z[3]])
    }

    pub fn forward(&self, t: f64, y: f64) -> Point {
        self.forward_with_jacobian(t, y).0
    }

    fn tabulate(&self) -> ChartTable {
        let (ta, tb) = self.geodesic.t_range();
        let d = TABLE_STEP;
        let ymax = 0.75 * self.delta + 3.0 * d;
        let t0 = ta + d;
        let nt = ((tb - d - t0) / d).floor() as usize + 1;
        let ny_half = (ymax / d).ceil() as usize;
        let ny = 2 * ny_half + 1;
        let y0 = -(ny_half as f64) * d;
        let m = self.geodesic.manifold;
        let f = |_s: f64, z: &[f64; 8]| m.variational_rhs(z);
        let sub = ((d / self.geodesic.h).round() as usize).max(1);
        let mut data = vec![[0.0; 6]; nt * ny];
        for i in 0..nt {
            let t = t0 + i as f64 * d;
            let (x, v, e) = self.base(t);
            let de = m.transport(x, v, e);
            let start = [x[0], x[1], e[0], e[1], v[0], v[1], de[0], de[1]];
            data[i * ny + ny_half] = [x[0], x[1], v[0], v[1], e[0], e[1]];
            for sign in [1.0f64, -1.0] {
                let mut z = start;
                for j in 1..=ny_half {
                    z = rk4_span(&f, 0.0, &z, sign * d, sub);
                    let jj = if sign > 0.0 { ny_half + j } else { ny_half - j };
                    data[i * ny + jj] = [z[0], z[1], z[4], z[5], z[2], z[3]];
                }
            }
        }
        ChartTable { t0, y0, d, nt, ny, data }
    }

    /// `F` and Jacobian from the table (curved) or closed form (affine).
    fn fast_map(&self, t: f64, y: f64) -> Option<(Point, Point, Point)> {
        match &self.table {
            None => Some(self.forward_with_jacobian(t, y)),
            Some(tab) => tab.eval(t, y).map(|q| ([q[0], q[1]], [q[2], q[3]], [q[4], q[5]])),
        }
    }

    fn seed(&self, x: Point) -> (f64, f64) {
        let geo = &self.geodesic;
        let stride = ((0.01 / geo.h).round() as usize).max(1);
        let mut best = (f64::INFINITY, 0usize);
        for (k, s) in geo.samples.iter().enumerate().step_by(stride) {
            let d = (s.x[0] - x[0]).powi(2) + (s.x[1] - x[1]).powi(2);
            if d < best.0 {
                best = (d, k);
            }
        }
        let s = geo.samples[best.1];
        let e = self.frame.e[best.1];
        let dx = [x[0] - s.x[0], x[1] - s.x[1]];
        let m = geo.manifold;
        (s.t + m.inner(s.x, dx, s.v), m.inner(s.x, dx, e))
    }

    fn newton<F>(&self, x: Point, map: F, start: (f64, f64)) -> Option<(f64, f64)>
    where
        F: Fn(f64, f64) -> Option<(Point, Point, Point)>,
    {
        let (mut t, mut y) = start;
        for _ in 0..30 {
            let (p, ft, fy) = map(t, y)?;
            let r = [p[0] - x[0], p[1] - x[1]];
            let det = ft[0] * fy[1] - ft[1] * fy[0];
            if det.abs() < 1e-14 {
                return None;
            }
            let dt = (r[0] * fy[1] - r[1] * fy[0]) / det;
            let dy = (ft[0] * r[1] - ft[1] * r[0]) / det;
            t -= dt;
            y -= dy;
            if dt.abs() + dy.abs() < 1e-14 {
                return Some((t, y));
            }
        }
        let (p, _, _) = map(t, y)?;
        if ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt() < 1e-10 {
            Some((t, y))
        } else {
            None
        }
    }

    /// Chart coordinates of `x` from the tabulated map (fast, accurate to ~1e-8).
    pub fn inverse_fast(&self, x: Point) -> Option<(f64, f64)> {
        let start = self.seed(x);
        if start.1.abs() > 0.75 * self.delta {
            return None;
        }
        if self.table.is_none() {
            return self.newton(x, |t, y| Some(self.forward_with_jacobian(t, y)), start);
        }
        self.newton(x, |t, y| self.fast_map(t, y), start)
    }

    /// Chart coordinates of `x`, polished with the directly integrated map.
    pub fn inverse(&self, x: Point) -> Option<(f64, f64)> {
        let start = self.inverse_fast(x)?;
        if self.table.is_none() {
            return Some(start);
        }
        self.newton(x, |t, y| Some(self.forward_with_jacobian(t, y)), start)
    }

    /// Pulled-back metric `g_ab = e^{2 phi(F)} F_a . F_b` from the direct map.
    pub fn metric_in_chart(&self, t: f64, y: f64) -> [[f64; 2]; 2] {
        let (p, ft, fy) = self.forward_with_jacobian(t, y);
        pullback(&self.geodesic.manifold, p, ft, fy)
    }

    /// Pulled-back metric from the fast map.
    pub fn metric_fast(&self, t: f64, y: f64) -> Option<[[f64; 2]; 2]> {
        let (p, ft, fy) = self.fast_map(t, y)?;
        Some(pullback(&self.geodesic.manifold, p, ft, fy))
    }

    /// Metric and its first derivatives `(g, d_t g, d_y g)` in chart coordinates.
    pub fn metric_jet(&self, t: f64, y: f64) -> Option<MetricJet> {
        if self.table.is_none() {
            let (p, ft, fy) = self.forward_with_jacobian(t, y);
            let g = pullback(self.manifold(), p, ft, fy);
            return Some(MetricJet {
                g,
                dt: [[0.0; 2]; 2],
                dy: [[0.0; 2]; 2],
            });
        }
        let eta = 1e-5;
        let g = self.metric_fast(t, y)?;
        let gtp = self.metric_fast(t + eta, y)?;
        let gtm = self.metric_fast(t - eta, y)?;
        let gyp = self.metric_fast(t, y + eta)?;
        let gym = self.metric_fast(t, y - eta)?;
        let mut dt = [[0.0; 2]; 2];
        let mut dy = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                dt[a][b] = (gtp[a][b] - gtm[a][b]) / (2.0 * eta);
                dy[a][b] = (gyp[a][b] - gym[a][b]) / (2.0 * eta);
            }
        }
        Some(MetricJet { g, dt, dy })
    }

    fn check_injective(&self) -> Result<()> {
        let geo = &self.geodesic;
        let n = 20;
        for i in 0..n {
            let t = geo.length * (i as f64 + 0.5) / n as f64;
            for j in 0..n {
                let y = self.delta * (-0.5 + (j as f64 + 0.5) / n as f64);
                let (p, ft, fy) = self.forward_with_jacobian(t, y);
                let det = ft[0] * fy[1] - ft[1] * fy[0];
                if det <= 0.0 {
                    return Err(Error::TubeTooWide {
                        delta: self.delta,
                        detail: format!("singular Jacobian at t={t:.3}, y={y:.3}"),
                    });
                }
                match self.inverse(p) {
                    Some((tt, yy)) if (tt - t).abs() < 1e-6 && (yy - y).abs() < 1e-6 => {}
                    _ => {
                        return Err(Error::TubeTooWide {
                            delta: self.delta,
                            detail: format!("inverse map mismatch at t={t:.3}, y={y:.3}"),
                        })
                    }
                }
            }
        }
        Ok(())
    }
}

/// Chart metric with its first derivatives in `(t, y)`.
#[derive(Debug, Clone, Copy)]
pub struct MetricJet {
    pub g: [[f64; 2]; 2],
    pub dt: [[f64; 2]; 2],
    pub dy: [[f64; 2]; 2],
}

fn pullback(m: &TransversalManifold, p: Point, ft: Point, fy: Point) -> [[f64; 2]; 2] {
    let f = m.factor(p);
    let tt = f * (ft[0] * ft[0] + ft[1] * ft[1]);
    let ty = f * (ft[0] * fy[0] + ft[1] * fy[1]);
    let yy = f * (fy[0] * fy[0] + fy[1] * fy[1]);
    [[tt, ty], [ty, yy]]
}

/// Supremum of geodesic lengths over a shooting grid of `n_theta` boundary
/// angles and `n_alpha` directions.
pub fn diameter_with(m: &TransversalManifold, n_theta: usize, n_alpha: usize) -> Result<f64> {
    let opts = ShootOptions {
        nontangential: 0.0,
        pad: 0.0,
        ..Default::default()
    };
    let mut best = 0.0f64;
    for i in 0..n_theta {
        let th = 2.0 * std::f64::consts::PI * i as f64 / n_theta as f64;
        let p = [0.999 * th.cos(), 0.999 * th.sin()];
        for j in 0..n_alpha {
            // directions symmetric about the inward normal, including it
            let a = std::f64::consts::FRAC_PI_2 * (2.0 * j as f64 / (n_alpha - 1).max(1) as f64 - 1.0) * 0.95;
            let ang = th + std::f64::consts::PI + a;
            match shoot_geodesic(m, p, [ang.cos(), ang.sin()], &opts) {
                Ok(g) => best = best.max(g.length),
                Err(Error::TangentialExit { .. }) | Err(Error::ConjugatePoint { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(best)
}

/// Diameter used for `sigma = sqrt(5) diam`.
pub fn diameter(m: &TransversalManifold) -> Result<f64> {
    if m.conformal.is_affine() {
        return Ok(2.0 * m.conformal.phi([0.0, 0.0]).exp());
    }
    diameter_with(m, 16, 33)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump() -> TransversalManifold {
        TransversalManifold::new(Conformal::GaussianBump {
            amplitude: 0.05,
            width: 0.5,
        })
    }

    #[test]
    fn flat_horizontal_chord() {
        let g = shoot_geodesic(&TransversalManifold::flat(), [0.0, 0.0], [1.0, 0.0], &Default::default()).unwrap();
        assert!((g.length - 2.0).abs() < 1e-12);
        let e = g.entry();
        assert!((e.x[0] + 1.0).abs() < 1e-12 && e.x[1].abs() < 1e-12);
    }

    #[test]
    fn flat_vertical_chord_off_center() {
        let g = shoot_geodesic(&TransversalManifold::flat(), [0.5, 0.0], [0.0, 1.0], &Default::default()).unwrap();
        assert!((g.length - 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tangential_exit_rejected() {
        let r = shoot_geodesic(&TransversalManifold::flat(), [0.0, 0.999], [1.0, 0.0], &Default::default());
        assert!(matches!(r, Err(Error::TangentialExit { .. })));
    }

    #[test]
    fn curvature_vanishes_when_flat() {
        let m = TransversalManifold::flat();
        assert_eq!(m.curvature([0.3, -0.2]), 0.0);
        let b = bump();
        assert!(b.curvature([0.0, 0.0]) > 0.0);
    }

    #[test]
    fn flat_frame_is_constant_normal() {
        let g = shoot_geodesic(&TransversalManifold::flat(), [0.2, 0.1], [1.0, 1.0], &Default::default()).unwrap();
        let f = parallel_frame(&g);
        let e0 = f.e[0];
        for e in &f.e {
            assert!((e[0] - e0[0]).abs() < 1e-14 && (e[1] - e0[1]).abs() < 1e-14);
        }
        assert!(f.orthonormality_defect(&g) < 1e-12);
    }

    #[test]
    fn curved_chart_round_trip() {
        let g = shoot_geodesic(&bump(), [0.1, 0.05], [1.0, 0.3], &Default::default()).unwrap();
        let c = build_fermi_chart(&g, 1.0).unwrap();
        for &(t, y) in &[(0.3, 0.2), (1.0, -0.4), (1.7, 0.1)] {
            let p = c.forward(t, y);
            let (tt, yy) = c.inverse(p).unwrap();
            assert!((tt - t).abs() < 1e-9 && (yy - y).abs() < 1e-9);
            let (tf, yf) = c.inverse_fast(p).unwrap();
            assert!((tf - t).abs() < 1e-6 && (yf - y).abs() < 1e-6);
        }
    }
}
