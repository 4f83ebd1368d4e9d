use std::ffi::{c_char, CStr, CString};
use std::ptr;

use twinfocus::measure::{coincidence_map, sum_projection};
use twinfocus::medium::{make_medium, MediumKind, MediumSpec};
use twinfocus::state::{build_double_gaussian, schmidt_number, GaussianStateParams, ModeGrid, PhaseMask};
use twinfocus_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe { tf_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

struct Handles {
    medium: *mut TfMedium,
    state: *mut TfState,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            tf_medium_free(self.medium);
            tf_state_free(self.state);
        }
    }
}

fn handles(kind: TfMediumKind, seed: u64) -> Handles {
    let mut medium = ptr::null_mut();
    let mut state = ptr::null_mut();
    unsafe {
        assert_eq!(tf_medium_new(kind, seed, 3, 3, 296e-6, 4, 4, &mut medium), TfStatus::Ok);
        assert_eq!(tf_state_double_gaussian(3, 3, 296e-6, 2.9e-5, 8.0e2, &mut state), TfStatus::Ok);
    }
    Handles { medium, state }
}

#[test]
fn scalar_entry_points_match_core() {
    let mut k = 0.0;
    assert_eq!(unsafe { tf_schmidt_number(2.9e-5, 8.0e2, &mut k) }, TfStatus::Ok);
    assert_eq!(k, schmidt_number(&GaussianStateParams::new(2.9e-5, 8.0e2).unwrap()).unwrap());
    let mut t = 0.0;
    assert_eq!(unsafe { tf_optimal_phase(0.0, 1.0, 0.0, 0.0, 0.5, &mut t) }, TfStatus::Ok);
    assert!((t - (std::f64::consts::TAU - 0.5)).abs() < 1e-12);
    let v = unsafe { CStr::from_ptr(tf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut k = 0.0;
    assert_eq!(unsafe { tf_schmidt_number(-1.0, 8.0e2, &mut k) }, TfStatus::InvalidArgument);
    assert!(last_error().contains("sigma_r"));
    assert_eq!(unsafe { tf_schmidt_number(1.0, 1.0, ptr::null_mut()) }, TfStatus::NullPointer);
    assert!(last_error().contains("out"));
    assert_eq!(unsafe { tf_schmidt_number(1.0, 1.0, &mut k) }, TfStatus::Ok);
    assert_eq!(last_error(), "");

    let mut small = [0 as c_char; 4];
    unsafe { tf_schmidt_number(-1.0, 1.0, &mut k) };
    let full = unsafe { tf_last_error_message(small.as_mut_ptr(), small.len()) };
    assert!(full > 3);
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes().len(), 3);
}

#[test]
fn handles_round_trip_through_core() {
    let h = handles(TfMediumKind::IidComplex, 5);
    let (mut n_out, mut n_in) = (0, 0);
    assert_eq!(unsafe { tf_medium_dims(h.medium, &mut n_out, &mut n_in) }, TfStatus::Ok);
    assert_eq!((n_out, n_in), (16, 9));

    let theta: Vec<f64> = (0..9).map(|i| 0.3 * i as f64).collect();
    let mut gp = vec![0.0; 49];
    let st = unsafe { tf_sum_projection(h.state, h.medium, theta.as_ptr(), 9, gp.as_mut_ptr(), gp.len()) };
    assert_eq!(st, TfStatus::Ok);

    let g = ModeGrid::square(3, 296e-6).unwrap();
    let t = make_medium(&MediumSpec::new(MediumKind::IidComplex, 5), (4, 4), &g).unwrap();
    let s = build_double_gaussian(&g, &GaussianStateParams::new(2.9e-5, 8.0e2).unwrap()).unwrap();
    let expected = sum_projection(&coincidence_map(&s, &PhaseMask::new(g, theta.clone()).unwrap(), &t).unwrap(), false);
    assert_eq!(gp, expected.data);

    let st = unsafe { tf_sum_projection(h.state, h.medium, theta.as_ptr(), 9, gp.as_mut_ptr(), 10) };
    assert_eq!(st, TfStatus::BufferTooSmall);
    let st = unsafe { tf_sum_projection(h.state, h.medium, theta.as_ptr(), 8, gp.as_mut_ptr(), gp.len()) };
    assert_eq!(st, TfStatus::Dimension);
    let st = unsafe { tf_sum_projection(ptr::null(), h.medium, theta.as_ptr(), 9, gp.as_mut_ptr(), gp.len()) };
    assert_eq!(st, TfStatus::NullPointer);
}

#[test]
fn optimization_raises_the_target() {
    let h = handles(TfMediumKind::PhaseScreenFourier, 3);
    let mut theta = vec![0.0; 9];
    let mut flat = vec![0.0; 49];
    unsafe { tf_sum_projection(h.state, h.medium, theta.as_ptr(), 9, flat.as_mut_ptr(), 49) };
    let mut value = 0.0;
    let st = unsafe { tf_optimize_sum_coordinate(h.state, h.medium, 4, 4, 40, 0.5, 1, theta.as_mut_ptr(), 9, &mut value) };
    assert_eq!(st, TfStatus::Ok, "{}", last_error());
    assert!(value > flat[4 * 7 + 4]);
    let st = unsafe { tf_optimize_sum_coordinate(h.state, h.medium, 4, 4, 40, 1.5, 1, theta.as_mut_ptr(), 9, &mut value) };
    assert_eq!(st, TfStatus::InvalidArgument);
}

#[test]
fn scenarios_run_from_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new(r#"{"scenario":"focus-classical","grid":{"n_side":4},"optimizer":{"steps":20}}"#).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { tf_run_scenario(cfg.as_ptr(), out.as_ptr()) }, TfStatus::Ok, "{}", last_error());
    assert!(dir.path().join("manifest.json").exists());
    let bad = CString::new(r#"{"scenario":"focus-classical","extra":1}"#).unwrap();
    assert_eq!(unsafe { tf_run_scenario(bad.as_ptr(), out.as_ptr()) }, TfStatus::Config);
    assert_eq!(unsafe { tf_run_scenario(ptr::null(), ptr::null()) }, TfStatus::NullPointer);
}
