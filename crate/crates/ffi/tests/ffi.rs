use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use evcs_ffi::*;

fn scenario(seed: u64, evs: usize, slots: usize) -> *mut EvcsScenario {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { evcs_scenario_synthetic(seed, evs, slots, &mut s) }, EvcsStatus::Ok);
    assert!(!s.is_null());
    s
}

fn run(s: *const EvcsScenario) -> (EvcsStatus, *mut EvcsOutcome) {
    let mut o = ptr::null_mut();
    let status = unsafe { evcs_run(s, EvcsHUpdate::Anchored as u32, false, &mut o) };
    (status, o)
}

fn last_error() -> String {
    let p = evcs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn summary_matches_the_core_engine() {
    let s = scenario(3, 20, 48);
    let (status, o) = run(s);
    assert_eq!(status, EvcsStatus::Ok);
    let mut sum = EvcsSummary::default();
    assert_eq!(unsafe { evcs_outcome_summary(o, &mut sum) }, EvcsStatus::Ok);

    let core = evcs_core::SyntheticConfig { seed: 3, evs: 20, slots: 48, ..Default::default() }.build().unwrap();
    let want = evcs_core::run_two_stage(&core, &Default::default()).unwrap();
    assert_eq!((sum.slots, sum.evs), (48, 20));
    assert_eq!(sum.total_cost, want.stage2.total_cost);
    assert_eq!(sum.flexibility_value, want.value.total);
    assert_eq!(sum.trades, want.stage2.trades());
    assert_eq!(sum.violations, 0);
    assert!(sum.min_target_margin >= -1e-9 && sum.aggregation_residual <= 1e-9);

    unsafe {
        evcs_outcome_free(o);
        evcs_scenario_free(s);
    }
}

#[test]
fn series_copy_with_size_query() {
    let s = scenario(1, 10, 24);
    let (_, o) = run(s);
    let mut len = 0;
    assert_eq!(unsafe { evcs_outcome_series(o, EvcsSeries::Dispatch as u32, ptr::null_mut(), 0, &mut len) }, EvcsStatus::Ok);
    assert_eq!(len, 24);

    let mut lo = vec![0.0; len];
    let mut hi = vec![0.0; len];
    let mut pd = vec![0.0; len];
    for (which, buf) in [(EvcsSeries::BandLower, &mut lo), (EvcsSeries::BandUpper, &mut hi), (EvcsSeries::Dispatch, &mut pd)] {
        assert_eq!(unsafe { evcs_outcome_series(o, which as u32, buf.as_mut_ptr(), buf.len(), &mut len) }, EvcsStatus::Ok);
    }
    for k in 0..len {
        assert!(lo[k] <= pd[k] && pd[k] <= hi[k]);
    }

    let mut short = vec![0.0; 3];
    let status = unsafe { evcs_outcome_series(o, EvcsSeries::Carbon as u32, short.as_mut_ptr(), 3, &mut len) };
    assert_eq!(status, EvcsStatus::BufferTooSmall);
    assert_eq!(len, 24);
    assert_eq!(unsafe { evcs_outcome_series(o, 99, short.as_mut_ptr(), 3, &mut len) }, EvcsStatus::InvalidArgument);

    unsafe {
        evcs_outcome_free(o);
        evcs_scenario_free(s);
    }
}

#[test]
fn invalid_inputs_map_to_status_codes() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { evcs_scenario_synthetic(1, 5, 0, &mut s) }, EvcsStatus::InvalidArgument);
    assert!(s.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { evcs_scenario_synthetic(1, 5, 24, ptr::null_mut()) }, EvcsStatus::NullPointer);
    assert_eq!(run(ptr::null()).0, EvcsStatus::NullPointer);

    let missing = CString::new("/nonexistent/evcs.cfg").unwrap();
    assert_eq!(unsafe { evcs_scenario_load(missing.as_ptr(), &mut s) }, EvcsStatus::Io);
    assert!(last_error().contains("nonexistent"));

    let s = scenario(1, 5, 24);
    unsafe {
        assert_eq!(evcs_scenario_set_alpha(s, 1.5), EvcsStatus::InvalidArgument);
        assert_eq!(evcs_scenario_set_v1(s, f64::NAN), EvcsStatus::InvalidArgument);
        assert_eq!(evcs_scenario_set_v2(s, 1e9), EvcsStatus::Ok);
    }
    assert_eq!(run(s).0, EvcsStatus::InvalidArgument);
    assert!(last_error().contains("v2"));
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { evcs_run(s, 7, false, &mut o) }, EvcsStatus::InvalidArgument);
    unsafe {
        evcs_scenario_free(s);
        evcs_scenario_free(ptr::null_mut());
        evcs_outcome_free(ptr::null_mut());
    }
}

#[test]
fn zero_v2_is_accepted() {
    let s = scenario(1, 30, 144);
    unsafe { evcs_scenario_set_v2(s, 0.0) };
    let (status, o) = run(s);
    assert_eq!(status, EvcsStatus::Ok);
    let mut sum = EvcsSummary::default();
    unsafe { evcs_outcome_summary(o, &mut sum) };
    assert_eq!(sum.v2, 0.0);
    unsafe {
        evcs_outcome_free(o);
        evcs_scenario_free(s);
    }
}

#[test]
fn config_files_load_through_the_c_path() {
    let dir = tempfile::tempdir().unwrap();
    let core = evcs_core::SyntheticConfig { seed: 2, evs: 8, slots: 24, ..Default::default() }.build().unwrap();
    let cfg = evcs_core::scenario::save_scenario(&core, dir.path(), "c").unwrap();
    let path = CString::new(cfg.to_str().unwrap()).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { evcs_scenario_load(path.as_ptr(), &mut s) }, EvcsStatus::Ok);
    let (status, o) = run(s);
    assert_eq!(status, EvcsStatus::Ok);
    unsafe {
        evcs_outcome_free(o);
        evcs_scenario_free(s);
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/evcs.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["evcs_run", "evcs_outcome_series", "EVCS_STATUS_BUFFER_TOO_SMALL", "EVCS_SERIES_CARBON", "EVCS_H_UPDATE_RECURSIVE"] {
        assert!(text.contains(name), "{name}");
    }
    for (cc, lang) in [("cc", "c"), ("c++", "c++")] {
        match Command::new(cc).args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang]).arg(&header).status() {
            Ok(st) => assert!(st.success(), "{cc} rejected the header"),
            Err(_) => eprintln!("{cc} not found; skipping"),
        }
    }
}
