//! Explicit ODE integrators on fixed-size states.
//!
//! [`rk4_step`] is the production integrator (fixed step, bit-reproducible);
//! [`Dopri`] is an adaptive Dormand-Prince 5(4) integrator used as a
//! high-accuracy reference.

use crate::{Error, Result};

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k1 = f(t, y);
    let y2 = axpy(y, &k1, 0.5 * h);
    let k2 = f(t + 0.5 * h, &y2);
    let y3 = axpy(y, &k2, 0.5 * h);
    let k3 = f(t + 0.5 * h, &y3);
    let y4 = axpy(y, &k3, h);
    let k4 = f(t + h, &y4);
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrate from `t0` to `t1` with `n` equal RK4 steps.
pub fn rk4_span<const N: usize, F>(f: &F, t0: f64, y0: &[f64; N], t1: f64, n: usize) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let n = n.max(1);
    let h = (t1 - t0) / n as f64;
    let mut y = *y0;
    for i in 0..n {
        y = rk4_step(f, t0 + i as f64 * h, &y, h);
    }
    y
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], k: &[f64; N], a: f64) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += a * k[i];
    }
    out
}

/// Adaptive Dormand-Prince 5(4) integrator with mixed error control.
#[derive(Debug, Clone, Copy)]
pub struct Dopri {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Dopri {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-13,
            max_steps: 2_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl Dopri {
    /// Integrate from `t0` to `t1` (either direction), landing exactly on `t1`.
    pub fn integrate<const N: usize, F>(&self, f: &F, t0: f64, y0: &[f64; N], t1: f64) -> Result<[f64; N]>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(*y0);
        }
        let dir = span.signum();
        let mut t = t0;
        let mut y = *y0;
        let mut h = dir * (span.abs() * 1e-3).min(1e-2);
        let mut k1 = f(t, &y);
        for _ in 0..self.max_steps {
            if (t1 - t) * dir <= 0.0 {
                return Ok(y);
            }
            if (t + h - t1) * dir > 0.0 {
                h = t1 - t;
            }
            let mut tmp = [0.0; N];
            for i in 0..N {
                tmp[i] = y[i] + h * A21 * k1[i];
            }
            let k2 = f(t + C2 * h, &tmp);
            for i in 0..N {
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            let k3 = f(t + C3 * h, &tmp);
            for i in 0..N {
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            let k4 = f(t + C4 * h, &tmp);
            for i in 0..N {
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            let k5 = f(t + C5 * h, &tmp);
            for i in 0..N {
                tmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let k6 = f(t + h, &tmp);
            let mut ynew = [0.0; N];
            for i in 0..N {
                ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            let k7 = f(t + h, &ynew);
            let mut err = 0.0f64;
            for i in 0..N {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(ynew[i].abs());
                err = err.max((e / sc).abs());
            }
            if err <= 1.0 {
                t += h;
                y = ynew;
                k1 = k7;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
            if h.abs() < 1e-14 * (1.0 + t.abs()) {
                return Err(Error::SolverFailure("adaptive step underflow".into()));
            }
        }
        Err(Error::SolverFailure("adaptive integrator exceeded step budget".into()))
    }

    /// Integrate and record the state at each of the monotone `times`.
    pub fn trajectory<const N: usize, F>(&self, f: &F, t0: f64, y0: &[f64; N], times: &[f64]) -> Result<Vec<[f64; N]>>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let mut out = Vec::with_capacity(times.len());
        let mut t = t0;
        let mut y = *y0;
        for &tt in times {
            y = self.integrate(f, t, &y, tt)?;
            t = tt;
            out.push(y);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn osc(_t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], -y[0]]
    }

    #[test]
    fn rk4_harmonic_oscillator_fourth_order() {
        let exact = [1.0f64.cos(), -1.0f64.sin()];
        let e1 = {
            let y = rk4_span(&osc, 0.0, &[1.0, 0.0], 1.0, 50);
            (y[0] - exact[0]).abs()
        };
        let e2 = {
            let y = rk4_span(&osc, 0.0, &[1.0, 0.0], 1.0, 100);
            (y[0] - exact[0]).abs()
        };
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn dopri_matches_exact_backward_and_forward() {
        let d = Dopri::default();
        let y = d.integrate(&osc, 0.0, &[1.0, 0.0], 3.0).unwrap();
        assert!((y[0] - 3.0f64.cos()).abs() < 1e-10);
        let z = d.integrate(&osc, 3.0, &y, 0.0).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-10 && z[1].abs() < 1e-10);
    }
}
