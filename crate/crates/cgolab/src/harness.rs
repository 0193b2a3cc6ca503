//! Run configuration, command implementations and output formats for the
//! `cgolab` binary.

use crate::cylinder::{sz_solve, second_order_solve, CgoKind, Field3D, LineGrid};
use crate::dtn::{calderon_pairing, noise_field, trace, BoundaryField, Coefficient, HelmholtzSolver};
use crate::geometry::{build_fermi_chart, diameter, parallel_frame, shoot_geodesic, Conformal, Point, ShootOptions, TransversalManifold};
use crate::quasimode::{
    build_quasimode, discrete_residual, make_spectral_parameter, quasimode_residual, QuasimodeConfig,
};
use crate::reconstruct::{
    calibrate_b0, interior_slice_study, laplace_quadrature, parameter_schedule, pick_geodesics, reconstruct,
    Pipeline, Reconstruction, SeparableBump, SliceSampling, SliceStudy,
};
use crate::spectral::{build_grid, cached_eigensystem, Grid};
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Transversal manifold family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifoldConfig {
    /// `flat`, `constant` or `gaussian`.
    pub family: String,
    /// Constant value of `phi` (family `constant`).
    pub value: f64,
    /// Amplitude and width of `phi` (family `gaussian`).
    pub amplitude: f64,
    pub width: f64,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        Self {
            family: "flat".into(),
            value: 0.0,
            amplitude: 0.1,
            width: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Transversal spacing.
    pub h: f64,
    /// Cells of the `x1` grid on `(0, T)`.
    pub cells: usize,
    /// Cylinder length `T`.
    pub t_len: f64,
    /// Retained Dirichlet modes `J`.
    pub modes: usize,
    /// Directory for cached eigenbases (empty: no cache).
    pub cache: String,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            h: 1.0 / 48.0,
            cells: 32,
            t_len: 1.0,
            modes: 400,
            cache: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasimodeSection {
    pub delta: f64,
    pub h0_re: f64,
    pub h0_im: f64,
    pub c0: f64,
    pub beam_resolution: f64,
    /// Base point and direction for `cgolab quasimode`.
    pub x0: [f64; 2],
    pub direction: [f64; 2],
}

impl Default for QuasimodeSection {
    fn default() -> Self {
        let q = QuasimodeConfig::default();
        Self {
            delta: q.delta,
            h0_re: q.h0.re,
            h0_im: q.h0.im,
            c0: q.c0.re,
            beam_resolution: q.beam_resolution,
            x0: [0.0, 0.0],
            direction: [1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub k: Vec<f64>,
    pub eps: Vec<f64>,
    /// Record wall time per row (otherwise `wall_ms` is written as 0).
    pub timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k: vec![4.0, 8.0, 16.0, 32.0],
            eps: vec![1e-3],
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructSection {
    pub y0_radius: f64,
    pub y0_spacing: f64,
    pub lambda_half: usize,
    pub min_angle_deg: f64,
    /// Amplitude of the separable test coefficient (0 gives `c = 0`).
    pub amplitude: f64,
    /// Values of `varsigma` for the noiseless slice study.
    pub varsigma: Vec<f64>,
    /// `y0` points of the slice study.
    pub study_points: Vec<[f64; 2]>,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        let s = SliceSampling::default();
        Self {
            y0_radius: s.y0_radius,
            y0_spacing: s.y0_spacing,
            lambda_half: s.lambda_half,
            min_angle_deg: 30.0,
            amplitude: 1.0,
            varsigma: vec![10.0, 20.0, 40.0, 80.0],
            study_points: vec![[0.0, 0.0], [0.2, 0.1], [-0.2, 0.15], [0.1, -0.25], [-0.15, -0.1]],
        }
    }
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: String,
    pub manifold: ManifoldConfig,
    pub grid: GridConfig,
    pub quasimode: QuasimodeSection,
    pub sweep: SweepConfig,
    pub reconstruct: ReconstructSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: "out".into(),
            manifold: ManifoldConfig::default(),
            grid: GridConfig::default(),
            quasimode: QuasimodeSection::default(),
            sweep: SweepConfig::default(),
            reconstruct: ReconstructSection::default(),
        }
    }
}

fn check(ok: bool, key: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, msg))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let key = e.message().split('`').nth(1).unwrap_or("<document>").to_string();
            Error::Config {
                key,
                msg: e.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.manifold;
        check(
            matches!(m.family.as_str(), "flat" | "constant" | "gaussian"),
            "manifold.family",
            "expected flat, constant or gaussian",
        )?;
        check(m.value.is_finite(), "manifold.value", "must be finite")?;
        check(m.amplitude.is_finite(), "manifold.amplitude", "must be finite")?;
        check(m.width > 0.0, "manifold.width", "must be positive")?;
        let g = &self.grid;
        check(g.h > 0.0 && g.h <= 0.5, "grid.h", "must lie in (0, 0.5]")?;
        check(g.cells >= 4, "grid.cells", "must be at least 4")?;
        check(g.t_len > 0.0, "grid.t_len", "must be positive")?;
        check(g.modes >= 1, "grid.modes", "must be at least 1")?;
        let q = &self.quasimode;
        check(q.delta > 0.0 && q.delta <= 1.0, "quasimode.delta", "must lie in (0, 1]")?;
        check(q.h0_im > 0.0, "quasimode.h0_im", "must be positive")?;
        check(q.c0 != 0.0, "quasimode.c0", "must be nonzero")?;
        check(q.beam_resolution > 0.0, "quasimode.beam_resolution", "must be positive")?;
        check(q.direction != [0.0, 0.0], "quasimode.direction", "must be nonzero")?;
        let s = &self.sweep;
        check(s.k.iter().all(|&k| k > 1.0), "sweep.k", "every k must exceed 1")?;
        check(s.eps.iter().all(|&e| (0.0..1.0).contains(&e)), "sweep.eps", "every eps must lie in [0, 1)")?;
        let r = &self.reconstruct;
        check(r.y0_radius > 0.0 && r.y0_radius < 1.0, "reconstruct.y0_radius", "must lie in (0, 1)")?;
        check(r.y0_spacing > 0.0, "reconstruct.y0_spacing", "must be positive")?;
        check(r.min_angle_deg > 0.0 && r.min_angle_deg <= 90.0, "reconstruct.min_angle_deg", "must lie in (0, 90]")?;
        check(r.varsigma.iter().all(|&v| v >= 1.0), "reconstruct.varsigma", "every value must be at least 1")?;
        Ok(())
    }

    pub fn manifold(&self) -> TransversalManifold {
        let m = &self.manifold;
        TransversalManifold::new(match m.family.as_str() {
            "constant" => Conformal::Constant { value: m.value },
            "gaussian" => Conformal::GaussianBump {
                amplitude: m.amplitude,
                width: m.width,
            },
            _ => Conformal::Flat,
        })
    }

    pub fn quasimode_config(&self) -> QuasimodeConfig {
        let q = &self.quasimode;
        QuasimodeConfig {
            delta: q.delta,
            h0: C64::new(q.h0_re, q.h0_im),
            c0: C64::new(q.c0, 0.0),
            beam_resolution: q.beam_resolution,
            ..QuasimodeConfig::default()
        }
    }

    pub fn sampling(&self) -> SliceSampling {
        SliceSampling {
            y0_radius: self.reconstruct.y0_radius,
            y0_spacing: self.reconstruct.y0_spacing,
            lambda_half: self.reconstruct.lambda_half,
        }
    }

    pub fn truth(&self) -> SeparableBump {
        SeparableBump {
            amplitude: self.reconstruct.amplitude,
            ..SeparableBump::default()
        }
    }

    fn cache_path(&self) -> Option<PathBuf> {
        if self.grid.cache.is_empty() {
            return None;
        }
        let m = &self.manifold;
        let name = format!(
            "basis_{}_{:.6}_{:.6}_{:.6}_{:.8}_{}.bin",
            m.family, m.value, m.amplitude, m.width, self.grid.h, self.grid.modes
        );
        Some(Path::new(&self.grid.cache).join(name))
    }

    /// Grid, eigenbasis and line grid shared by every command.
    pub fn pipeline(&self) -> Result<Pipeline> {
        let manifold = self.manifold();
        let grid = build_grid(&manifold, self.grid.h)?;
        let cache = self.cache_path();
        if let Some(p) = &cache {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let modes = self.grid.modes.min(grid.n_int / 2);
        let basis = cached_eigensystem(&grid, modes, cache.as_deref())?;
        let line = LineGrid::new(self.grid.t_len, self.grid.cells)?;
        let sigma = 5f64.sqrt() * diameter(&manifold)?;
        Ok(Pipeline {
            manifold,
            grid,
            basis,
            line,
            qcfg: self.quasimode_config(),
            sigma,
            d: self.grid.t_len,
            min_angle_deg: self.reconstruct.min_angle_deg,
        })
    }
}

const DUMP_MAGIC: &[u8; 8] = b"CGOLDUMP";
const DUMP_VERSION: u32 = 1;

/// Complex samples on a product of axes, with optional node coordinates for
/// the unstructured transversal axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub name: String,
    pub dims: Vec<u64>,
    pub spacings: Vec<f64>,
    pub t_len: f64,
    /// Coordinates of the last axis (empty when the axis is regular).
    pub coords: Vec<Point>,
    pub data: Vec<C64>,
}

impl GridDump {
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.name.len() as u32).to_le_bytes())?;
        w.write_all(self.name.as_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for d in &self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        for s in &self.spacings {
            w.write_all(&s.to_le_bytes())?;
        }
        w.write_all(&self.t_len.to_le_bytes())?;
        w.write_all(&(self.coords.len() as u64).to_le_bytes())?;
        for p in &self.coords {
            w.write_all(&p[0].to_le_bytes())?;
            w.write_all(&p[1].to_le_bytes())?;
        }
        w.write_all(&(self.data.len() as u64).to_le_bytes())?;
        for z in &self.data {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { b: &bytes, i: 0 };
        if cur.take(8)? != DUMP_MAGIC {
            return Err(Error::Cache("not a grid dump".into()));
        }
        let version = cur.u32()?;
        if version != DUMP_VERSION {
            return Err(Error::Cache(format!("dump version {version} unsupported")));
        }
        let nl = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(nl)?.to_vec()).map_err(|_| Error::Cache("bad name".into()))?;
        let nd = cur.u32()? as usize;
        let dims = (0..nd).map(|_| cur.u64()).collect::<Result<Vec<_>>>()?;
        let spacings = (0..nd).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let t_len = cur.f64()?;
        let nc = cur.u64()? as usize;
        let coords = (0..nc).map(|_| Ok([cur.f64()?, cur.f64()?])).collect::<Result<Vec<_>>>()?;
        let n = cur.u64()? as usize;
        let data = (0..n).map(|_| Ok(C64::new(cur.f64()?, cur.f64()?))).collect::<Result<Vec<_>>>()?;
        if dims.iter().product::<u64>() as usize != n {
            return Err(Error::Cache("dims do not match sample count".into()));
        }
        Ok(Self {
            name,
            dims,
            spacings,
            t_len,
            coords,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn from_field(name: &str, f: &Field3D, grid: &Grid, t_len: f64) -> Self {
        Self {
            name: name.into(),
            dims: vec![f.planes as u64, f.nodes as u64],
            spacings: vec![f.h1, grid.h],
            t_len,
            coords: grid.nodes.clone(),
            data: f.data.clone(),
        }
    }
}

struct Cursor<'a> {
    b: &'a [u8],
    i: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self.b.get(self.i..self.i + n).ok_or_else(|| Error::Cache("truncated dump".into()))?;
        self.i += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// One row of the stability curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: f64,
    pub eps: f64,
    pub case: u8,
    pub tau: f64,
    pub window: f64,
    /// NaN when the row failed.
    pub l2_error: f64,
    pub wall_ms: u64,
    pub error: Option<String>,
}

/// Rows sorted by `(eps, k)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StabilityCurve {
    pub rows: Vec<SweepRow>,
}

pub const CSV_HEADER: &str = "k,eps,case,tau,lambda_window,l2_error,wall_ms";

impl StabilityCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{},{}", r.k, r.eps, r.case, r.tau, r.window, r.l2_error, r.wall_ms);
        }
        s
    }

    /// Gnuplot data: one block per `eps`, columns `k l2_error`.
    pub fn to_gnuplot(&self) -> String {
        let mut s = String::from("# k l2_error\n");
        for (i, eps) in self.eps_values().iter().enumerate() {
            if i > 0 {
                s.push_str("\n\n");
            }
            let _ = writeln!(s, "# eps = {eps}");
            for r in self.rows.iter().filter(|r| r.eps == *eps) {
                let _ = writeln!(s, "{} {}", r.k, r.l2_error);
            }
        }
        s
    }

    fn eps_values(&self) -> Vec<f64> {
        let mut e: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !e.contains(&r.eps) {
                e.push(r.eps);
            }
        }
        e
    }

    /// Log-log line plot of the error against `k`, one polyline per `eps`.
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (640.0, 420.0, 60.0);
        let pts: Vec<&SweepRow> = self.rows.iter().filter(|r| r.l2_error.is_finite() && r.l2_error > 0.0).collect();
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        );
        if pts.is_empty() {
            s.push_str("<text x=\"20\" y=\"40\">no finite rows</text>\n</svg>\n");
            return s;
        }
        let lx = |k: f64| k.log10();
        let ly = |e: f64| e.log10();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for r in &pts {
            x0 = x0.min(lx(r.k));
            x1 = x1.max(lx(r.k));
            y0 = y0.min(ly(r.l2_error));
            y1 = y1.max(ly(r.l2_error));
        }
        if x1 - x0 < 1e-9 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-9 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let px = |k: f64| m + (lx(k) - x0) / (x1 - x0) * (w - 2.0 * m);
        let py = |e: f64| h - m - (ly(e) - y0) / (y1 - y0) * (h - 2.0 * m);
        let _ = writeln!(
            s,
            "<line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>",
            h - m,
            w - m,
            h - m,
            h - m
        );
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">k (log scale)</text>", w / 2.0, h - 15.0);
        let _ = writeln!(
            s,
            "<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">L2 error (log scale)</text>",
            h / 2.0,
            h / 2.0
        );
        for r in &pts {
            let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>", px(r.k), h - m + 16.0, r.k);
        }
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.3e}</text>", m - 4.0, py(10f64.powf(y0)), 10f64.powf(y0));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.3e}</text>", m - 4.0, py(10f64.powf(y1)) + 4.0, 10f64.powf(y1));
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
        for (i, eps) in self.eps_values().iter().enumerate() {
            let c = colors[i % colors.len()];
            let line: Vec<String> = pts
                .iter()
                .filter(|r| r.eps == *eps)
                .map(|r| format!("{:.1},{:.1}", px(r.k), py(r.l2_error)))
                .collect();
            if line.is_empty() {
                continue;
            }
            let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"2\" points=\"{}\"/>", line.join(" "));
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" fill=\"{c}\">eps = {eps}</text>",
                w - m - 90.0,
                m + 16.0 * i as f64
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let p = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&p)?;
    Ok(p)
}

/// Every `(eps, k)` row; failures are recorded and the sweep continues.
pub fn run_sweep(cfg: &RunConfig, p: &Pipeline) -> StabilityCurve {
    let truth = cfg.truth();
    let sampling = cfg.sampling();
    let mut eps = cfg.sweep.eps.clone();
    eps.sort_by(f64::total_cmp);
    let mut ks = cfg.sweep.k.clone();
    ks.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    for &e in &eps {
        for &k in &ks {
            let start = Instant::now();
            let res = reconstruct(p, &truth, k, e, cfg.seed, &sampling);
            let wall_ms = if cfg.sweep.timing { start.elapsed().as_millis() as u64 } else { 0 };
            let sched = parameter_schedule(k, e, p.sigma, p.d).ok();
            let row = match res {
                Ok(r) => SweepRow {
                    k,
                    eps: e,
                    case: r.schedule.case,
                    tau: r.schedule.tau,
                    window: r.schedule.window,
                    l2_error: r.metrics.l2_error,
                    wall_ms,
                    error: None,
                },
                Err(err) => SweepRow {
                    k,
                    eps: e,
                    case: sched.map_or(0, |s| s.case),
                    tau: sched.map_or(f64::NAN, |s| s.tau),
                    window: sched.map_or(f64::NAN, |s| s.window),
                    l2_error: f64::NAN,
                    wall_ms,
                    error: Some(err.to_string()),
                },
            };
            rows.push(row);
        }
    }
    StabilityCurve { rows }
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<StabilityCurve> {
    if cfg.sweep.k.is_empty() || cfg.sweep.eps.is_empty() {
        return Err(Error::config("sweep.k", "k and eps lists must be nonempty"));
    }
    let dir = out_dir(cfg)?;
    let p = cfg.pipeline()?;
    let curve = run_sweep(cfg, &p);
    std::fs::write(dir.join("sweep.csv"), curve.to_csv())?;
    std::fs::write(dir.join("sweep.dat"), curve.to_gnuplot())?;
    std::fs::write(dir.join("sweep.svg"), curve.to_svg())?;
    for r in curve.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("row k={} eps={} failed: {}", r.k, r.eps, r.error.as_deref().unwrap_or(""));
    }
    Ok(curve)
}

/// Report of `cgolab quasimode`.
#[derive(Debug, Clone)]
pub struct QuasimodeReport {
    pub varsigma: f64,
    pub relative_residual: f64,
    pub discrete_relative_residual: f64,
    pub l4_norm: f64,
    /// `|v|_{L^4} e^{-sigma |lambda|}`.
    pub l4_ratio: f64,
}

pub fn cmd_quasimode(cfg: &RunConfig, k: f64, tau: f64, lambda: f64) -> Result<QuasimodeReport> {
    let sp = make_spectral_parameter(k, tau, lambda)?;
    let m = cfg.manifold();
    let grid = build_grid(&m, cfg.grid.h)?;
    let q = &cfg.quasimode;
    let qm = build_quasimode(&m, q.x0, q.direction, &sp, &cfg.quasimode_config(), &grid)?;
    let sigma = 5f64.sqrt() * diameter(&m)?;
    let res = quasimode_residual(&qm, &grid);
    let dres = discrete_residual(&qm, &grid);
    let l4 = grid.lp_norm(&qm.field, 4.0);
    let dir = out_dir(cfg)?;
    let f = Field3D {
        planes: 1,
        nodes: grid.n_all(),
        h1: 0.0,
        data: qm.field.clone(),
    };
    GridDump::from_field("quasimode", &f, &grid, 0.0).save(&dir.join("quasimode.bin"))?;
    Ok(QuasimodeReport {
        varsigma: sp.varsigma,
        relative_residual: res.relative,
        discrete_relative_residual: dres.relative,
        l4_norm: l4,
        l4_ratio: l4 * (-sigma * lambda.abs()).exp(),
    })
}

/// Single reconstruction with dumps of `c_true`, `c_rec` and the slice.
pub fn cmd_reconstruct(cfg: &RunConfig, k: f64, eps: f64) -> Result<Reconstruction> {
    let dir = out_dir(cfg)?;
    let p = cfg.pipeline()?;
    let truth = cfg.truth();
    let r = reconstruct(&p, &truth, k, eps, cfg.seed, &cfg.sampling())?;
    let c = truth.coefficient(&p.grid, &p.line);
    GridDump::from_field("c_true", &c.field, &p.grid, p.line.t_len).save(&dir.join("c_true.bin"))?;
    let planes = p.line.cells + 1;
    let y: Vec<Point> = r.slice.y0.iter().map(|&(y, _)| y).collect();
    let mut rec = Vec::with_capacity(planes * y.len());
    for i in 0..planes {
        let x1 = i as f64 * p.line.h();
        for yi in 0..y.len() {
            rec.push(C64::new(crate::reconstruct::invert_fourier_at(&r.slice, yi, x1), 0.0));
        }
    }
    GridDump {
        name: "c_rec".into(),
        dims: vec![planes as u64, y.len() as u64],
        spacings: vec![p.line.h(), cfg.reconstruct.y0_spacing],
        t_len: p.line.t_len,
        coords: y.clone(),
        data: rec,
    }
    .save(&dir.join("c_rec.bin"))?;
    let nl = r.slice.lambdas.len();
    let dl = if nl > 1 { r.slice.lambdas[1] - r.slice.lambdas[0] } else { 0.0 };
    GridDump {
        name: "fourier_slice".into(),
        dims: vec![y.len() as u64, nl as u64],
        spacings: vec![cfg.reconstruct.y0_spacing, dl],
        t_len: p.line.t_len,
        coords: y,
        data: r.slice.values.iter().flatten().map(|v| v.unwrap_or(C64::new(f64::NAN, f64::NAN))).collect(),
    }
    .save(&dir.join("fourier_slice.bin"))?;
    Ok(r)
}

/// Noiseless slice errors against `varsigma` (`tau = 1`, `lambda = 0`).
pub fn cmd_slice_study(cfg: &RunConfig) -> Result<SliceStudy> {
    let p = cfg.pipeline()?;
    let truth = cfg.truth();
    interior_slice_study(&p, &truth, &cfg.reconstruct.varsigma, &cfg.reconstruct.study_points)
}

/// One named invariant with its measured value and limit.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("invariant,status,measured,limit\n");
        for c in &self.checks {
            let _ = writeln!(s, "{},{},{:e},{:e}", c.name, if c.passed { "pass" } else { "fail" }, c.measured, c.limit);
        }
        s
    }

    fn below(&mut self, name: &'static str, measured: f64, limit: f64) {
        self.checks.push(Check {
            name,
            passed: measured <= limit,
            measured,
            limit,
        });
    }

    fn run(&mut self, name: &'static str, limit: f64, f: impl FnOnce() -> Result<f64>) {
        match f() {
            Ok(v) => self.below(name, v, limit),
            Err(_) => self.checks.push(Check {
                name,
                passed: false,
                measured: f64::NAN,
                limit,
            }),
        }
    }
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Invariant suite on small grids of the configured manifold.
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    use rand::{Rng, SeedableRng};
    let m = cfg.manifold();
    let mut rep = VerifyReport::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);

    rep.run("spectral_parameter.re_s_lower_bound", 0.0, || {
        let mut worst = f64::MIN;
        for _ in 0..2000 {
            let tau: f64 = rng.random_range(1.0..50.0);
            let lam: f64 = rng.random_range(-20.0..20.0);
            let kmin = (1.0 + lam * lam - tau * tau).max(0.0).sqrt();
            let k = kmin + rng.random_range(0.0..50.0);
            let sp = make_spectral_parameter(k, tau, lam)?;
            worst = worst.max(sp.varsigma - sp.s.re);
            worst = worst.max(sp.s.im.abs() - 5f64.sqrt() * lam.abs());
        }
        Ok(worst.max(0.0))
    });

    let geo = shoot_geodesic(&m, [0.1, -0.05], [0.8, 0.6], &ShootOptions::default());
    rep.run("geometry.speed_defect", 1e-8, || Ok(geo.as_ref().map_err(clone_err)?.speed_defect()));
    rep.run("geometry.equation_residual", 1e-6, || Ok(geo.as_ref().map_err(clone_err)?.equation_residual()));
    rep.run("geometry.no_conjugate_point", 0.0, || {
        Ok(if geo.as_ref().map_err(clone_err)?.first_conjugate_point().is_some() { 1.0 } else { 0.0 })
    });
    rep.run("geometry.frame_orthonormality", 1e-8, || {
        let g = geo.as_ref().map_err(clone_err)?;
        Ok(parallel_frame(g).orthonormality_defect(g))
    });
    rep.run("geometry.chart_round_trip", 1e-8, || {
        let g = geo.as_ref().map_err(clone_err)?;
        let chart = build_fermi_chart(g, cfg.quasimode.delta)?;
        let mut worst: f64 = 0.0;
        for (t, y) in [(0.5, 0.1), (1.0, -0.2), (1.3, 0.05)] {
            let x = chart.forward(t, y);
            let (tt, yy) = chart.inverse(x).ok_or_else(|| Error::Invariant("inverse failed".into()))?;
            worst = worst.max((tt - t).abs() + (yy - y).abs());
        }
        Ok(worst)
    });
    rep.run("geometry.diameter_positive", 0.0, || Ok(if diameter(&m)? > 0.0 { 0.0 } else { 1.0 }));

    let qcfg = cfg.quasimode_config();
    let grid = build_grid(&m, 1.0 / 32.0)?;
    let sp = make_spectral_parameter(20.0, 1.0, 0.0)?;
    let qm = build_quasimode(&m, cfg.quasimode.x0, cfg.quasimode.direction, &sp, &qcfg, &grid);
    rep.run("quasimode.riccati_residual", 1e-6, || Ok(qm.as_ref().map_err(clone_err)?.phase.riccati_residual()));
    rep.run("quasimode.im_h_positive", 0.0, || Ok(-qm.as_ref().map_err(clone_err)?.phase.min_im()));
    rep.run("quasimode.transport_residual", 1e-6, || {
        let q = qm.as_ref().map_err(clone_err)?;
        Ok(q.amplitude.transport_residual(&q.phase))
    });
    rep.run("quasimode.residual_decreases", 1.0, || {
        let q = qm.as_ref().map_err(clone_err)?;
        let sp2 = make_spectral_parameter(40.0, 1.0, 0.0)?;
        let q2 = build_quasimode(&m, cfg.quasimode.x0, cfg.quasimode.direction, &sp2, &qcfg, &grid)?;
        Ok(quasimode_residual(&q2, &grid).relative / quasimode_residual(q, &grid).relative)
    });

    rep.run("spectral.area", 1e-3, || Ok((grid.volume() - reference_area(&m)).abs() / reference_area(&m)));
    let small = build_grid(&m, 1.0 / 16.0)?;
    let basis = cached_eigensystem(&small, 12, None);
    rep.run("spectral.eigen_residual", 1e-8, || Ok(basis.as_ref().map_err(clone_err)?.max_residual(&small)));
    rep.run("spectral.orthonormality", 1e-10, || Ok(basis.as_ref().map_err(clone_err)?.orthonormality_defect(&small)));
    rep.run("spectral.eigenvalues_sorted", 0.0, || {
        let b = basis.as_ref().map_err(clone_err)?;
        Ok(if b.eigenvalues.windows(2).all(|w| w[0] <= w[1]) { 0.0 } else { 1.0 })
    });

    rep.run("cylinder.sz_bound", 1.05, || {
        let h = 0.01;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let re = rng.random_range(1.0..32.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let z = C64::new(re, rng.random_range(-20.0..20.0));
            let f: Vec<C64> = (0..1201)
                .map(|i| {
                    let x = i as f64 * h - 6.0;
                    C64::new((-(x * x)).exp() * (3.0 * x).cos(), x * (-(x * x)).exp())
                })
                .collect();
            let u = sz_solve(z, &f, h)?;
            let n = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(n(&u) / n(&f) * re.abs());
        }
        Ok(worst)
    });
    rep.run("cylinder.factorization_paths_agree", 1e-5, || {
        let h = 0.005;
        let f: Vec<C64> = (0..1201)
            .map(|i| {
                let x = i as f64 * h - 3.0;
                C64::new((-4.0 * x * x).exp(), 0.3 * x * (-4.0 * x * x).exp())
            })
            .collect();
        let (p, q) = (C64::new(1.0, 0.3), C64::new(-1.5, 0.2));
        let a = second_order_solve(p, q, &f, h, 0.0)?;
        let b = second_order_solve(p, q, &f, h, f64::INFINITY)?;
        let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale)
    });
    rep.run("cylinder.cgo_sign_convention", 0.0, || {
        let ok = CgoKind::V1.zeta(2.0, 0.5) == C64::new(-2.0, -0.5) && CgoKind::V2.zeta(2.0, 0.5) == C64::new(2.0, -0.5);
        Ok(if ok { 0.0 } else { 1.0 })
    });

    let cgrid = build_grid(&m, 0.125)?;
    let planes = 9;
    let h1 = 0.125;
    let solver = HelmholtzSolver::new(&cgrid, planes, h1, 2.3, None);
    let coef = Coefficient::from_fn(&cgrid, planes, h1, |x1, x| (1.0 + x[0]) * (std::f64::consts::PI * x1).sin());
    rep.run("dtn.source_solve_residual", 1e-9, || {
        let s = solver.as_ref().map_err(clone_err)?;
        let src = Field3D::from_fn(planes, &cgrid, h1, |x1, x| C64::new(x1 * (1.0 - x[0] * x[0]), x[1]));
        let u = s.source_solve(&src)?;
        Ok(s.residual(&u, Some(&src)) / src.l2_norm(&cgrid))
    });
    rep.run("dtn.helmholtz_solve_residual", 1e-9, || {
        let s = solver.as_ref().map_err(clone_err)?;
        let f = trace(&Field3D::from_fn(planes, &cgrid, h1, |x1, x| C64::new(x1 + x[0], x[1])), &cgrid);
        let u = s.helmholtz_solve(&f)?;
        Ok(s.residual(&u, None) / u.l2_norm(&cgrid).max(1e-300))
    });
    let fields: Vec<Field3D> = (0..4)
        .map(|j| {
            let a = 0.3 + 0.2 * j as f64;
            Field3D::from_fn(planes, &cgrid, h1, move |x1, x| C64::new((a * x1).cos() + x[0], a * x[1]))
        })
        .collect();
    let bdy: Vec<BoundaryField> = fields.iter().map(|u| trace(u, &cgrid)).collect();
    rep.run("dtn.polarization", 1e-8, || {
        let s = solver.as_ref().map_err(clone_err)?;
        let d = s.d3_lambda(&coef, &bdy[0], &bdy[1], &bdy[2])?;
        let p = s.polarize(&coef, &bdy[0], &bdy[1], &bdy[2])?;
        Ok(d.zip(&p, |a, b| a - b).l2_norm() / d.l2_norm().max(1e-300))
    });
    rep.run("dtn.d3_symmetry", 1e-8, || {
        let s = solver.as_ref().map_err(clone_err)?;
        let a = s.d3_lambda(&coef, &bdy[0], &bdy[1], &bdy[2])?.pair(&bdy[3]);
        let b = s.d3_lambda(&coef, &bdy[2], &bdy[0], &bdy[1])?.pair(&bdy[3]);
        Ok(rel(b, a))
    });
    rep.run("dtn.calderon_identity", 0.25, || {
        let s = solver.as_ref().map_err(clone_err)?;
        let u: Vec<Field3D> = bdy.iter().map(|b| s.helmholtz_solve(b)).collect::<Result<_>>()?;
        Ok(calderon_pairing(s, &coef, [&u[0], &u[1], &u[2], &u[3]])?.discrepancy())
    });
    rep.run("dtn.noise_norm", 1e-10, || {
        let n = noise_field(&bdy[0], 1e-3, 2.0, cfg.seed);
        Ok((n.lp_norm(4.0 / 3.0) - 2e-3).abs() / 2e-3)
    });

    rep.run("reconstruct.laplace_constant", 1e-10, || Ok((laplace_quadrature(|_| 1.0, [0.1, 0.2], 100.0) - 1.0).abs()));
    rep.run("reconstruct.schedule_seam", 4.0, || {
        let sigma = 5f64.sqrt() * 2.0;
        let e = -(1e-3f64).ln();
        let a = parameter_schedule(e + 1e-9, 1e-3, sigma, 1.0)?;
        let b = parameter_schedule(e, 1e-3, sigma, 1.0)?;
        Ok((a.window / b.window).max(b.window / a.window))
    });
    rep.run("reconstruct.geodesic_pair_angle", 0.0, || {
        let p = pick_geodesics(&m, [0.1, 0.1], cfg.reconstruct.min_angle_deg)?;
        Ok((cfg.reconstruct.min_angle_deg - p.angle).max(0.0))
    });
    rep.run("reconstruct.hessian_positive", 0.0, || {
        let p = pick_geodesics(&m, [0.0, 0.0], cfg.reconstruct.min_angle_deg)?;
        let v = build_quasimode(&m, [0.0, 0.0], p.dir_gamma, &sp, &qcfg, &grid)?;
        let w = build_quasimode(&m, [0.0, 0.0], p.dir_eta, &sp, &qcfg, &grid)?;
        Ok(if calibrate_b0(&v, &w, &grid, [0.0, 0.0])?.hessian_positive() { 0.0 } else { 1.0 })
    });

    rep.run("harness.config_round_trip", 0.0, || {
        let back = RunConfig::from_toml(&cfg.to_toml())?;
        Ok(if &back == cfg { 0.0 } else { 1.0 })
    });
    rep.run("harness.dump_round_trip", 0.0, || {
        let d = GridDump {
            name: "t".into(),
            dims: vec![2, 3],
            spacings: vec![0.5, 0.25],
            t_len: 1.0,
            coords: vec![[0.0, 1.0]; 3],
            data: (0..6).map(|i| C64::new(i as f64, -(i as f64))).collect(),
        };
        let mut buf = Vec::new();
        d.write_to(&mut buf)?;
        Ok(if GridDump::read_from(&mut buf.as_slice())? == d { 0.0 } else { 1.0 })
    });

    let dir = out_dir(cfg)?;
    std::fs::write(dir.join("verify.csv"), rep.to_csv())?;
    Ok(rep)
}

fn clone_err(e: &Error) -> Error {
    Error::Invariant(e.to_string())
}

/// `int_{|x|<1} e^{2 phi}` by the midpoint rule in polar coordinates.
fn reference_area(m: &TransversalManifold) -> f64 {
    let (nr, nt) = (400, 400);
    let (dr, dt) = (1.0 / nr as f64, std::f64::consts::TAU / nt as f64);
    let mut s = 0.0;
    for i in 0..nr {
        let r = (i as f64 + 0.5) * dr;
        for j in 0..nt {
            let t = (j as f64 + 0.5) * dt;
            s += m.factor([r * t.cos(), r * t.sin()]) * r;
        }
    }
    s * dr * dt
}
