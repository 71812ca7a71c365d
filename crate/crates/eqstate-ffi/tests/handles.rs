use std::ffi::{CStr, CString};
use std::ptr;

use eqstate_ffi::*;

fn last_error() -> String {
    let p = eq_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn two_shift_pressure_through_handles() {
    unsafe {
        let mut map = ptr::null_mut();
        let spec = CString::new(r#"{"kind": "doubling"}"#).unwrap();
        assert_eq!(eq_map_from_json(spec.as_ptr(), &mut map), EqStatus::Ok);
        assert_eq!(eq_map_num_atoms(map), 2);

        let mut pot = ptr::null_mut();
        let vals = [0.0, 2f64.ln()];
        assert_eq!(eq_potential_per_atom(vals.as_ptr(), 2, &mut pot), EqStatus::Ok);

        let mut model = ptr::null_mut();
        assert_eq!(eq_model_new(map, pot, 6, &mut model), EqStatus::Ok);
        assert!((eq_model_lambda(model) - 3.0).abs() < 1e-12);
        assert!((eq_model_pressure(model) - 3f64.ln()).abs() < 1e-12);

        let n = eq_model_len(model);
        assert_eq!(n, 64);
        let mut h = vec![0.0; n];
        let mut nu = vec![0.0; n];
        assert_eq!(eq_model_eigendata(model, h.as_mut_ptr(), nu.as_mut_ptr(), n), EqStatus::Ok);
        assert!(h.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!((nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(eq_model_eigendata(model, h.as_mut_ptr(), ptr::null_mut(), n - 1), EqStatus::InvalidArgument);

        let mut e = EqEntropy::default();
        assert_eq!(eq_entropy(model, pot, &mut e), EqStatus::Ok);
        assert!(e.identity_defect.abs() < 1e-12);

        let obs = CString::new(r#"{"kind": "atom_indicator", "atom": 0}"#).unwrap();
        let mut c = [0.0; 4];
        assert_eq!(eq_correlations(map, model, obs.as_ptr(), 3, c.as_mut_ptr()), EqStatus::Ok);
        assert!((c[0] - 2.0 / 9.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|x| x.abs() < 1e-12));

        eq_model_free(model);
        eq_potential_free(pot);
        eq_map_free(map);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut map = ptr::null_mut();
        assert_eq!(eq_map_benchmark(-1.0, &mut map), EqStatus::InvalidArgument);
        assert!(map.is_null());
        assert!(last_error().contains("delta0"));

        let spec = CString::new(r#"{"kind": "custom", "bad": 0, "delta0": 0, "atoms": [{"left": 0, "right": 1}], "branches": [{"affine": {"slope": 0.5, "intercept": 0}}]}"#).unwrap();
        assert_eq!(eq_map_from_json(spec.as_ptr(), &mut map), EqStatus::InvalidMap);

        let bad = CString::new("{not json").unwrap();
        assert_eq!(eq_map_from_json(bad.as_ptr(), &mut map), EqStatus::InvalidArgument);
        assert_eq!(eq_map_from_json(ptr::null(), &mut map), EqStatus::NullPointer);
        assert_eq!(eq_model_new(ptr::null(), ptr::null(), 3, ptr::null_mut()), EqStatus::NullPointer);
        assert!(eq_model_lambda(ptr::null()).is_nan());
        eq_map_free(ptr::null_mut());
        eq_string_free(ptr::null_mut());
    }
}

#[test]
fn verify_reports_json() {
    unsafe {
        let cfg = CString::new(r#"{"map": {"kind": "doubling"}}"#).unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(eq_verify_json(cfg.as_ptr(), &mut out), EqStatus::Ok);
        let s = CStr::from_ptr(out).to_str().unwrap().to_owned();
        eq_string_free(out);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["route_a"], true);

        let cfg = CString::new(r#"{"depth": 0}"#).unwrap();
        assert_eq!(eq_verify_json(cfg.as_ptr(), &mut out), EqStatus::InvalidArgument);
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(eq_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
