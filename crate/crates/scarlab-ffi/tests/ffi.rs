use std::ffi::{CStr, CString};
use std::ptr;

use scarlab_ffi::*;

fn last_error() -> String {
    let p = scarlab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn jacobi_matches_circular_limit() {
    let (mut sn, mut cn, mut dn) = (0.0, 0.0, 0.0);
    let st = unsafe { scarlab_jacobi(0.7, 0.0, &mut sn, &mut cn, &mut dn) };
    assert_eq!(st, ScarlabStatus::Ok);
    assert!((sn - 0.7f64.sin()).abs() < 1e-14);
    assert!((cn - 0.7f64.cos()).abs() < 1e-14);
    assert!((dn - 1.0).abs() < 1e-14);

    let mut k = 0.0;
    assert_eq!(unsafe { scarlab_complete_k(0.0, &mut k) }, ScarlabStatus::Ok);
    assert!((k - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
}

#[test]
fn bad_modulus_reports_input_error() {
    let mut k = 0.0;
    let st = unsafe { scarlab_complete_k(1.5, &mut k) };
    assert_eq!(st, ScarlabStatus::InvalidInput);
    assert!(!last_error().is_empty());
}

#[test]
fn null_outputs_are_rejected() {
    let st = unsafe { scarlab_jacobi(0.1, 0.5, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, ScarlabStatus::NullPointer);
    unsafe {
        scarlab_graph_free(ptr::null_mut());
        scarlab_scar_free(ptr::null_mut());
    }
}

#[test]
fn chain_scar_round_trip() {
    let kind = CString::new("chain").unwrap();
    let dims = [6usize];
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { scarlab_graph_generate(kind.as_ptr(), dims.as_ptr(), 1, &mut g) },
        ScarlabStatus::Ok
    );
    let mut nv = 0;
    assert_eq!(unsafe { scarlab_graph_vertices(g, &mut nv) }, ScarlabStatus::Ok);
    assert_eq!(nv, 6);

    let mut s = ptr::null_mut();
    let st = unsafe { scarlab_scar_new(g, 0.5, 1, 6, 0.6, 0.4, 1, 1.0, 1.0, &mut s) };
    assert_eq!(st, ScarlabStatus::Ok, "{}", last_error());
    let mut r = f64::NAN;
    assert_eq!(unsafe { scarlab_scar_residual(s, &mut r) }, ScarlabStatus::Ok);
    assert!(r < 1e-10, "residual {r}");

    let mut needed = 0;
    let st = unsafe { scarlab_scar_amplitudes(s, ptr::null_mut(), ptr::null_mut(), 0, &mut needed) };
    assert_eq!(st, ScarlabStatus::BufferTooSmall);
    assert_eq!(needed, 64);
    let mut re = vec![0.0; needed];
    let mut im = vec![0.0; needed];
    let st = unsafe { scarlab_scar_amplitudes(s, re.as_mut_ptr(), im.as_mut_ptr(), needed, &mut needed) };
    assert_eq!(st, ScarlabStatus::Ok);
    let norm: f64 = re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum();
    assert!((norm - 1.0).abs() < 1e-12);

    unsafe {
        scarlab_scar_free(s);
        scarlab_graph_free(g);
    }
}

#[test]
fn bad_helicity_and_kind() {
    let kind = CString::new("no-such-lattice").unwrap();
    let dims = [4usize];
    let mut g = ptr::null_mut();
    let st = unsafe { scarlab_graph_generate(kind.as_ptr(), dims.as_ptr(), 1, &mut g) };
    assert_eq!(st, ScarlabStatus::InvalidInput);
    assert!(g.is_null());

    let kind = CString::new("chain").unwrap();
    assert_eq!(
        unsafe { scarlab_graph_generate(kind.as_ptr(), dims.as_ptr(), 1, &mut g) },
        ScarlabStatus::Ok
    );
    let mut s = ptr::null_mut();
    let st = unsafe { scarlab_scar_new(g, 0.5, 1, 4, 0.5, 0.0, 0, 1.0, 1.0, &mut s) };
    assert_eq!(st, ScarlabStatus::InvalidInput);
    assert!(last_error().contains("helicity"));
    unsafe { scarlab_graph_free(g) };
}

#[test]
fn square_lattice_classifies() {
    let kind = CString::new("square").unwrap();
    let dims = [3usize, 3];
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { scarlab_graph_generate(kind.as_ptr(), dims.as_ptr(), 2, &mut g) },
        ScarlabStatus::Ok
    );
    let mut c = ScarlabClassification::Unknown;
    assert_eq!(unsafe { scarlab_graph_classify(g, &mut c) }, ScarlabStatus::Ok);
    assert_ne!(c, ScarlabClassification::Unknown);
    unsafe { scarlab_graph_free(g) };
}

#[test]
fn chain_degeneracy_matches_tower() {
    let (mut count, mut expected, mut special, mut resolved) = (0, 0, 0, 0);
    let st =
        unsafe { scarlab_chain_degeneracy(1.0, 5, 1, 0.8, &mut count, &mut expected, &mut special, &mut resolved) };
    assert_eq!(st, ScarlabStatus::Ok);
    assert_eq!(special, 0);
    assert_eq!(count, expected);
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(scarlab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/scarlab.h")).unwrap();
    for name in [
        "scarlab_last_error",
        "scarlab_version",
        "scarlab_jacobi",
        "scarlab_complete_k",
        "scarlab_graph_generate",
        "scarlab_graph_from_json",
        "scarlab_graph_free",
        "scarlab_graph_vertices",
        "scarlab_graph_classify",
        "scarlab_scar_new",
        "scarlab_scar_free",
        "scarlab_scar_residual",
        "scarlab_scar_energy",
        "scarlab_scar_amplitudes",
        "scarlab_chain_degeneracy",
        "SCARLAB_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
