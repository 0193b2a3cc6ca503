use cgolab_ffi::*;
use std::ffi::{c_char, CString};
use std::ptr;

const SMALL: &str = "[grid]\nh = 0.0625\nmodes = 8\ncells = 8\n";

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { cgolab_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn pipeline(text: &str) -> (i32, *mut CgolabPipeline) {
    let c = CString::new(text).unwrap();
    let mut p = ptr::null_mut();
    let code = unsafe { cgolab_pipeline_new(c.as_ptr(), &mut p) };
    (code, p)
}

#[test]
fn spectral_parameter_round_trip() {
    let (mut re, mut im, mut vs) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { cgolab_spectral_parameter(3.0, 4.0, 0.0, &mut re, &mut im, &mut vs) }, CGOLAB_OK);
    assert!((re - 5.0).abs() < 1e-14 && im.abs() < 1e-14 && (vs - 5.0).abs() < 1e-14);
    let code = unsafe { cgolab_spectral_parameter(1.0, 1.0, 2.0, &mut re, &mut im, &mut vs) };
    assert_eq!(code, CGOLAB_ERR_DOMAIN);
    assert!(!last_error().is_empty());
}

#[test]
fn schedule_cases() {
    let (mut case, mut tau, mut w) = (0, 0.0, 0.0);
    let sigma = 2.0 * 5f64.sqrt();
    assert_eq!(unsafe { cgolab_schedule(100.0, 1e-3, sigma, 1.0, &mut case, &mut tau, &mut w) }, CGOLAB_OK);
    assert_eq!((case, tau), (1, 1.0));
    assert_eq!(unsafe { cgolab_schedule(2.0, 1e-3, sigma, 1.0, &mut case, &mut tau, &mut w) }, CGOLAB_OK);
    assert_eq!(case, 2);
    assert_eq!(unsafe { cgolab_schedule(2.0, 1.5, sigma, 1.0, &mut case, &mut tau, &mut w) }, CGOLAB_ERR_DOMAIN);
}

#[test]
fn null_pointers_are_rejected() {
    unsafe {
        assert_eq!(cgolab_spectral_parameter(3.0, 1.0, 0.0, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), CGOLAB_ERR_NULL);
        assert_eq!(cgolab_pipeline_new(ptr::null(), ptr::null_mut()), CGOLAB_ERR_NULL);
        let mut n = 0usize;
        assert_eq!(cgolab_pipeline_nodes(ptr::null(), &mut n), CGOLAB_ERR_NULL);
        cgolab_pipeline_free(ptr::null_mut());
        cgolab_quasimode_free(ptr::null_mut());
    }
}

#[test]
fn bad_config_reports_key() {
    let (code, p) = pipeline("[grid]\nh = -1.0\n");
    assert_eq!(code, CGOLAB_ERR_CONFIG);
    assert!(p.is_null());
    assert!(last_error().contains("grid.h"));
}

#[test]
fn pipeline_and_quasimode() {
    let (code, p) = pipeline(SMALL);
    assert_eq!(code, CGOLAB_OK, "{}", last_error());
    unsafe {
        let mut n = 0usize;
        assert_eq!(cgolab_pipeline_nodes(p, &mut n), CGOLAB_OK);
        assert!(n > 700);
        let mut ev = [0.0; 8];
        let mut written = 0usize;
        assert_eq!(cgolab_pipeline_eigenvalues(p, ev.as_mut_ptr(), 8, &mut written), CGOLAB_OK);
        assert_eq!(written, 8);
        assert!((ev[0] - 5.7832).abs() < 0.1, "{}", ev[0]);
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        let mut short = [0.0; 2];
        assert_eq!(cgolab_pipeline_eigenvalues(p, short.as_mut_ptr(), 2, &mut written), CGOLAB_ERR_BUFFER);

        let mut q = ptr::null_mut();
        assert_eq!(cgolab_quasimode_new(p, 0.0, 0.0, 1.0, 0.0, 3.0, 1.0, 0.0, &mut q), CGOLAB_OK, "{}", last_error());
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        assert_eq!(cgolab_quasimode_field(q, re.as_mut_ptr(), im.as_mut_ptr(), n), CGOLAB_OK);
        assert!(re.iter().zip(&im).any(|(a, b)| a.abs() + b.abs() > 0.1));
        assert_eq!(cgolab_quasimode_field(q, re.as_mut_ptr(), im.as_mut_ptr(), n - 1), CGOLAB_ERR_BUFFER);
        let mut r = 0.0;
        assert_eq!(cgolab_quasimode_residual(p, q, &mut r), CGOLAB_OK);
        assert!(r.is_finite() && r > 0.0);
        cgolab_quasimode_free(q);

        let mut q2 = ptr::null_mut();
        assert_eq!(cgolab_quasimode_new(p, 0.0, 0.0, 1.0, 0.0, 60.0, 1.0, 0.0, &mut q2), CGOLAB_ERR_GEOMETRY);
        assert!(q2.is_null());
        assert!(last_error().contains("resolve the beam"));
        cgolab_pipeline_free(p);
    }
}

#[test]
fn truncated_error_buffer() {
    let (code, _) = pipeline("[grid]\nh = -1.0\n");
    assert_eq!(code, CGOLAB_ERR_CONFIG);
    let mut buf = [0 as c_char; 4];
    assert_eq!(unsafe { cgolab_last_error(buf.as_mut_ptr(), 4) }, CGOLAB_ERR_BUFFER);
    assert_eq!(buf[3], 0);
}

#[test]
fn header_declares_every_entry_point() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cgolab.h")).unwrap();
    for name in [
        "cgolab_last_error",
        "cgolab_spectral_parameter",
        "cgolab_schedule",
        "cgolab_pipeline_new",
        "cgolab_pipeline_free",
        "cgolab_pipeline_nodes",
        "cgolab_pipeline_eigenvalues",
        "cgolab_quasimode_new",
        "cgolab_quasimode_free",
        "cgolab_quasimode_field",
        "cgolab_quasimode_residual",
        "cgolab_reconstruct",
        "typedef struct CgolabPipeline CgolabPipeline",
        "#define CGOLAB_ERR_RESONANCE -7",
    ] {
        assert!(h.contains(name), "missing {name}");
    }
}
