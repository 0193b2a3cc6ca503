use cgolab::cylinder::{remainder_modes, sz_solve};
use cgolab::dtn::polarize_scalar;
use cgolab::harness::{GridDump, RunConfig};
use cgolab::quasimode::make_spectral_parameter;
use cgolab::reconstruct::{lambda_grid, parameter_schedule, y0_lattice};
use cgolab::{Error, C64};
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b)| C64::new(a, b))
}

proptest! {
    #[test]
    fn spectral_parameter_bounds(k in 0.0..200.0f64, tau in 1.0..200.0f64, lam in -200.0..200.0f64) {
        prop_assume!(k * k + tau * tau - lam * lam >= 1.0);
        let sp = make_spectral_parameter(k, tau, lam).unwrap();
        prop_assert!(sp.s.re >= sp.varsigma);
        prop_assert!(sp.s.im.abs() <= 5f64.sqrt() * lam.abs());
        prop_assert!(((sp.s * sp.s) - C64::new(k * k + tau * tau - lam * lam, 2.0 * tau * lam)).norm() <= 1e-9 * (1.0 + sp.s.norm_sqr()));
    }

    #[test]
    fn spectral_parameter_rejects_inadmissible(k in 0.0..5.0f64, tau in 1.0..5.0f64, extra in 0.01..10.0f64) {
        let lam = (k * k + tau * tau - 1.0 + extra).sqrt();
        prop_assert!(matches!(make_spectral_parameter(k, tau, lam), Err(Error::Domain(_))));
    }

    #[test]
    fn sz_is_linear_and_bounded(
        re in prop_oneof![1.0..32.0f64, -32.0..-1.0f64],
        im in -20.0..20.0f64,
        a in c64(),
        w in 0.5..8.0f64,
    ) {
        let h = 0.01;
        let z = C64::new(re, im);
        let f: Vec<C64> = (0..1601).map(|i| {
            let x = i as f64 * h - 8.0;
            C64::new((-(x * x)).exp(), 0.0) * C64::from_polar(1.0, w * x)
        }).collect();
        let g: Vec<C64> = (0..1601).map(|i| {
            let x = i as f64 * h - 8.0;
            C64::new(0.0, (-(x - 1.0).powi(2) * 2.0).exp())
        }).collect();
        let fg: Vec<C64> = f.iter().zip(&g).map(|(x, y)| a * x + y).collect();
        let uf = sz_solve(z, &f, h).unwrap();
        let ug = sz_solve(z, &g, h).unwrap();
        let ufg = sz_solve(z, &fg, h).unwrap();
        let scale = uf.iter().chain(&ug).map(|v| v.norm()).fold(0.0, f64::max) * (1.0 + a.norm());
        for i in 0..uf.len() {
            prop_assert!((ufg[i] - (a * uf[i] + ug[i])).norm() <= 1e-12 * scale);
        }
        let n = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(n(&uf) <= 1.05 * n(&f) / re.abs());
    }

    #[test]
    fn remainder_is_linear(tau in 1.0..6.0f64, lam in -2.0..2.0f64, a in c64()) {
        let ev = [5.78, 14.68, 26.37, 30.47];
        let h = 1.0 / 32.0;
        let line = |s: f64| -> Vec<C64> {
            (0..49).map(|i| {
                let x = i as f64 * h - 0.25;
                let r = (x - 0.5) / 0.4;
                C64::new(if r.abs() < 1.0 { (-1.0 / (1.0 - r * r)).exp() * (s * x).cos() } else { 0.0 }, 0.0)
            }).collect()
        };
        let f: Vec<Vec<C64>> = (0..4).map(|j| line(j as f64)).collect();
        let g: Vec<Vec<C64>> = (0..4).map(|j| line(3.0 - j as f64 * 0.5)).collect();
        let fg: Vec<Vec<C64>> = f.iter().zip(&g).map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + q).collect()).collect();
        let zeta = C64::new(tau, lam);
        let rf = remainder_modes(zeta, 3.0, &ev, &f, h).unwrap();
        let rg = remainder_modes(zeta, 3.0, &ev, &g, h).unwrap();
        let rfg = remainder_modes(zeta, 3.0, &ev, &fg, h).unwrap();
        let scale = rf.iter().chain(&rg).flatten().map(|v| v.norm()).fold(1e-300, f64::max) * (1.0 + a.norm());
        for j in 0..4 {
            for i in 0..rf[j].len() {
                prop_assert!((rfg[j][i] - (a * rf[j][i] + rg[j][i])).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn polarization_identity(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
        let want = 6.0 * a * b * c;
        prop_assert!((polarize_scalar(a, b, c) - want).abs() <= 1e-10 * (1.0 + (a.abs() + b.abs() + c.abs()).powi(3)));
    }

    #[test]
    fn schedule_cases(k in 1.01..100.0f64, eps in 1e-8..0.99f64, sigma in 0.5..10.0f64, d in 0.2..4.0f64) {
        let s = parameter_schedule(k, eps, sigma, d).unwrap();
        let e = -eps.ln();
        prop_assert!(s.window > 0.0);
        prop_assert!(s.tau >= 1.0);
        if k > e {
            prop_assert_eq!(s.case, 1);
            prop_assert_eq!(s.tau, 1.0);
            prop_assert!((s.window - k.ln() / (2.0 * sigma)).abs() < 1e-12);
        } else {
            prop_assert_eq!(s.case, 2);
            prop_assert!((s.window - (k * k + e * e).ln() / (4.0 * sigma)).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_grid_is_symmetric(window in 0.01..5.0f64, half in 0usize..6) {
        let g = lambda_grid(window, half);
        prop_assert_eq!(g.len(), 2 * half + 1);
        for (a, b) in g.iter().zip(g.iter().rev()) {
            prop_assert!((a + b).abs() < 1e-12);
        }
        prop_assert!(g.iter().all(|l| l.abs() <= window + 1e-12));
    }

    #[test]
    fn lattice_stays_inside(radius in 0.05..0.9f64, spacing in 0.05..0.5f64) {
        for (p, w) in y0_lattice(radius, spacing) {
            prop_assert!(p[0].hypot(p[1]) <= radius + 1e-9);
            prop_assert!((w - spacing * spacing).abs() < 1e-12);
        }
    }

    #[test]
    fn config_round_trips(
        seed in any::<u64>(),
        h in 0.01..0.5f64,
        modes in 1usize..1000,
        ks in prop::collection::vec(1.5..64.0f64, 1..6),
        eps in prop::collection::vec(0.0..0.5f64, 1..4),
        timing in any::<bool>(),
    ) {
        let mut cfg = RunConfig::default();
        cfg.seed = seed;
        cfg.grid.h = h;
        cfg.grid.modes = modes;
        cfg.sweep.k = ks;
        cfg.sweep.eps = eps;
        cfg.sweep.timing = timing;
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn dump_round_trips(
        name in "[a-z_]{0,12}",
        data in prop::collection::vec((-1e6..1e6f64, -1e6..1e6f64), 0..64),
        spacing in 1e-3..1.0f64,
        t_len in 0.0..10.0f64,
    ) {
        let d = GridDump {
            name,
            dims: vec![data.len() as u64],
            spacings: vec![spacing],
            t_len,
            coords: data.iter().map(|&(a, b)| [a, b]).collect(),
            data: data.iter().map(|&(a, b)| C64::new(a, b)).collect(),
        };
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        prop_assert_eq!(&buf[..8], b"CGOLDUMP");
        prop_assert_eq!(GridDump::read_from(&mut buf.as_slice()).unwrap(), d);
    }
}

#[test]
fn dump_rejects_bad_magic() {
    let mut bytes = b"NOTADUMP\x01\x00\x00\x00".to_vec();
    bytes.extend_from_slice(&[0; 32]);
    assert!(GridDump::read_from(&mut bytes.as_slice()).is_err());
}

#[test]
fn negative_h_names_key() {
    match RunConfig::from_toml("[grid]\nh = -0.1\n") {
        Err(Error::Config { key, .. }) => assert_eq!(key, "grid.h"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn unknown_key_rejected() {
    match RunConfig::from_toml("[grid]\nspacing = 0.1\n") {
        Err(Error::Config { key, .. }) => assert_eq!(key, "spacing"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn zero_real_part_rejected() {
    let f = vec![C64::new(1.0, 0.0); 10];
    assert!(matches!(sz_solve(C64::new(0.0, 3.0), &f, 0.1), Err(Error::ZeroRealPart { .. })));
}

#[test]
fn resonant_tau_rejected() {
    // omega^2 - k^2 = 4 = tau^2
    let f = vec![vec![C64::new(1.0, 0.0); 8]];
    assert!(matches!(
        remainder_modes(C64::new(2.0, 0.0), 1.0, &[5.0], &f, 0.1),
        Err(Error::Resonance { .. })
    ));
}

#[test]
fn schedule_domain_errors() {
    assert!(parameter_schedule(1.0, 1e-3, 1.0, 1.0).is_err());
    assert!(parameter_schedule(4.0, 1.0, 1.0, 1.0).is_err());
    assert!(parameter_schedule(4.0, -0.1, 1.0, 1.0).is_err());
    assert_eq!(parameter_schedule(4.0, 0.0, 1.0, 1.0).unwrap().case, 1);
}
