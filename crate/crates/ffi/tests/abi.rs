//! Exercises the C ABI from Rust through raw pointers.

use std::ffi::{CStr, CString};
use std::ptr;

use convflow_ffi::*;

fn preset(name: &str, seed: u64) -> *mut ConvflowModel {
    let name = CString::new(name).unwrap();
    let mut model = ptr::null_mut();
    let status = unsafe { convflow_model_from_preset(name.as_ptr(), seed, &mut model) };
    assert_eq!(status, ConvflowStatus::Ok);
    assert!(!model.is_null());
    model
}

fn last_error() -> String {
    let p = convflow_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn preset_shapes() {
    for (name, dim, params) in [("synthetic-k8", 2, 64), ("dense-50", 50, 660), ("dense-100", 100, 1470)] {
        let m = preset(name, 0);
        unsafe {
            assert_eq!(convflow_model_dim(m), dim);
            assert_eq!(convflow_model_param_count(m), params);
            convflow_model_free(m);
        }
    }
}

#[test]
fn unknown_preset_and_null_arguments() {
    let name = CString::new("nope").unwrap();
    let mut model = ptr::null_mut();
    let status = unsafe { convflow_model_from_preset(name.as_ptr(), 0, &mut model) };
    assert_eq!(status, ConvflowStatus::InvalidArgument);
    assert!(model.is_null());
    assert!(last_error().contains("nope"));

    let status = unsafe { convflow_model_from_preset(ptr::null(), 0, &mut model) };
    assert_eq!(status, ConvflowStatus::NullPointer);
    let mut x = [0.0; 2];
    let status = unsafe { convflow_model_forward(ptr::null(), x.as_ptr(), 2, x.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(status, ConvflowStatus::NullPointer);
    unsafe { convflow_model_free(ptr::null_mut()) };
    assert_eq!(unsafe { convflow_model_dim(ptr::null()) }, 0);
}

#[test]
fn forward_inverse_and_density() {
    let m = preset("synthetic-k8", 5);
    let z = [0.4, -1.1];
    let mut x = [0.0; 2];
    let mut back = [0.0; 2];
    let mut logdet = f64::NAN;
    let mut logp = f64::NAN;
    unsafe {
        assert_eq!(convflow_model_forward(m, z.as_ptr(), 2, x.as_mut_ptr(), &mut logdet), ConvflowStatus::Ok);
        assert_eq!(convflow_model_inverse(m, x.as_ptr(), 2, back.as_mut_ptr()), ConvflowStatus::Ok);
        assert_eq!(convflow_model_log_density(m, x.as_ptr(), 2, &mut logp), ConvflowStatus::Ok);
        assert_eq!(
            convflow_model_forward(m, z.as_ptr(), 3, x.as_mut_ptr(), &mut logdet),
            ConvflowStatus::DimensionMismatch
        );
        convflow_model_free(m);
    }
    assert!((back[0] - z[0]).abs() < 1e-6 && (back[1] - z[1]).abs() < 1e-6);
    // change of variables: log p(x) = log N(z) - logdet
    let log_n = -(z[0] * z[0] + z[1] * z[1]) / 2.0 - (2.0 * std::f64::consts::PI).ln();
    assert!((logp - (log_n - logdet)).abs() < 1e-6, "{logp} vs {}", log_n - logdet);
}

#[test]
fn params_round_trip_and_validation() {
    let m = preset("synthetic-k8", 1);
    let mut params = vec![0.0; 64];
    unsafe {
        assert_eq!(convflow_model_get_params(m, params.as_mut_ptr(), 64), ConvflowStatus::Ok);
        assert_eq!(convflow_model_get_params(m, params.as_mut_ptr(), 63), ConvflowStatus::DimensionMismatch);
        let zeros = vec![0.0; 64];
        assert_eq!(convflow_model_set_params(m, zeros.as_ptr(), 64), ConvflowStatus::Ok);
        let mut x = [0.0; 2];
        let mut logdet = 1.0;
        let z = [0.25, -3.0];
        assert_eq!(convflow_model_forward(m, z.as_ptr(), 2, x.as_mut_ptr(), &mut logdet), ConvflowStatus::Ok);
        assert_eq!(x, z, "zero parameters leave eight reversals, an even number");
        assert_eq!(logdet, 0.0);
        let mut bad = zeros.clone();
        bad[3] = f64::NAN;
        assert_eq!(convflow_model_set_params(m, bad.as_ptr(), 64), ConvflowStatus::InvalidArgument);
        convflow_model_free(m);
    }
}

#[test]
fn non_invertible_model_reports_status() {
    let json = CString::new(r#"{"version":1,"dim":2,"layers":[{"kind":"planar","activation":"tanh"}]}"#).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(convflow_model_from_config_json(json.as_ptr(), 0, &mut m), ConvflowStatus::Ok);
        let x = [0.1, 0.2];
        let mut out = [0.0; 2];
        assert_eq!(convflow_model_inverse(m, x.as_ptr(), 2, out.as_mut_ptr()), ConvflowStatus::NotInvertible);
        let mut logp = 0.0;
        assert_eq!(convflow_model_log_density(m, x.as_ptr(), 2, &mut logp), ConvflowStatus::NotInvertible);
        convflow_model_free(m);
    }
}

#[test]
fn sample_is_seeded() {
    let m = preset("synthetic-k8", 2);
    let mut a = vec![0.0; 20];
    let mut b = vec![0.0; 20];
    unsafe {
        assert_eq!(convflow_model_sample(m, 7, 10, a.as_mut_ptr(), 20), ConvflowStatus::Ok);
        assert_eq!(convflow_model_sample(m, 7, 10, b.as_mut_ptr(), 20), ConvflowStatus::Ok);
        assert_eq!(convflow_model_sample(m, 7, 10, b.as_mut_ptr(), 19), ConvflowStatus::DimensionMismatch);
        convflow_model_free(m);
    }
    assert_eq!(a, b);
    assert!(a.iter().all(|v| v.is_finite()));
}

#[test]
fn train_save_load() {
    let m = preset("synthetic-k8", 4);
    let energy = CString::new("u1").unwrap();
    let mut loss = f64::NAN;
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(convflow_model_train(m, energy.as_ptr(), 200, 16, 5e-3, 1, &mut loss), ConvflowStatus::Ok);
        assert!(loss.is_finite());
        let bad = CString::new("u9").unwrap();
        assert_eq!(
            convflow_model_train(m, bad.as_ptr(), 10, 4, 1e-3, 1, ptr::null_mut()),
            ConvflowStatus::InvalidArgument
        );
        assert_eq!(
            convflow_model_train(m, energy.as_ptr(), 0, 4, 1e-3, 1, ptr::null_mut()),
            ConvflowStatus::InvalidArgument
        );

        assert_eq!(convflow_model_save(m, path.as_ptr()), ConvflowStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(convflow_model_load(path.as_ptr(), &mut loaded), ConvflowStatus::Ok);
        let mut p1 = vec![0.0; 64];
        let mut p2 = vec![0.0; 64];
        convflow_model_get_params(m, p1.as_mut_ptr(), 64);
        convflow_model_get_params(loaded, p2.as_mut_ptr(), 64);
        assert!(p1.iter().zip(&p2).all(|(a, b)| a.to_bits() == b.to_bits()));
        convflow_model_free(loaded);
        convflow_model_free(m);

        let missing = CString::new(dir.path().join("absent.json").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(convflow_model_load(missing.as_ptr(), &mut none), ConvflowStatus::Io);
    }
}
