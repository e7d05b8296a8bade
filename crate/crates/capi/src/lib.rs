//! C ABI for driving the simulator from other languages: build a
//! configuration key by key, run the seed sweep, then read per-run
//! metrics rows or a CSV dump.
//!
//! Every object crossing the boundary is an opaque handle owned by
//! this library; callers must release handles with the matching
//! `*_free` function exactly once. All functions tolerate NULL
//! arguments by returning `VISNET_NULL_ARGUMENT` (or a zero/NULL
//! result for the infallible accessors) instead of crashing.

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use visnet::config::{ConfigError, ScenarioConfig};
use visnet::experiment::run_experiment;
use visnet::metrics::{to_csv, RunMetrics};

/// Opaque run configuration; create with `visnet_config_new`.
pub struct VisnetConfig(ScenarioConfig);

/// Opaque result set of one sweep; one row per simulated seed.
pub struct VisnetResults(Vec<RunMetrics>);

/// Outcome of a fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VisnetStatus {
    VisnetOk = 0,
    /// A required pointer argument was NULL.
    VisnetNullArgument = 1,
    /// A string argument was not valid UTF-8.
    VisnetInvalidUtf8 = 2,
    /// The configuration key does not exist.
    VisnetInvalidKey = 3,
    /// The value could not be parsed for its key.
    VisnetInvalidValue = 4,
    /// The assembled configuration failed cross-field validation.
    VisnetInvalidConfig = 5,
    /// The sweep could not run (for example the image file is
    /// unreadable).
    VisnetRunFailed = 6,
    /// A row index was past the end of the result set.
    VisnetOutOfRange = 7,
}

/// One result row with the same columns as the CSV export.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct VisnetRunRow {
    pub scenario: u8,
    pub seed: u64,
    pub fragments_sent: u64,
    pub fragments_delivered: u64,
    pub avg_loss_ratio: f64,
    pub images_attempted: u32,
    pub images_received: u32,
    pub complete: u32,
    pub usable: u32,
    pub unusable: u32,
    pub mean_latency_s: f64,
    pub latency_ratio: f64,
}

/// A new configuration holding the built-in defaults. Never NULL.
/// Release with `visnet_config_free`.
#[no_mangle]
pub extern "C" fn visnet_config_new() -> *mut VisnetConfig {
    Box::into_raw(Box::new(VisnetConfig(ScenarioConfig::default())))
}

/// Releases a configuration. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn visnet_config_free(cfg: *mut VisnetConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets one configuration value. Keys and value syntax are exactly the
/// config-file keys of the command-line tool ("scenario", "nodes",
/// "area", "range", "seed", "runs", "alpha", "beta", "path-factor",
/// "capture-rate", "images-per-burst", "sentry-fraction",
/// "facing-spread", "energy-floor", "image-file").
#[no_mangle]
pub unsafe extern "C" fn visnet_config_set(
    cfg: *mut VisnetConfig,
    key: *const c_char,
    value: *const c_char,
) -> VisnetStatus {
    let Some(cfg) = cfg.as_mut() else {
        return VisnetStatus::VisnetNullArgument;
    };
    if key.is_null() || value.is_null() {
        return VisnetStatus::VisnetNullArgument;
    }
    let (Ok(key), Ok(value)) = (CStr::from_ptr(key).to_str(), CStr::from_ptr(value).to_str())
    else {
        return VisnetStatus::VisnetInvalidUtf8;
    };
    match cfg.0.apply_file(&format!("{key} = {value}")) {
        Ok(()) => VisnetStatus::VisnetOk,
        Err(ConfigError::UnknownKey { .. }) => VisnetStatus::VisnetInvalidKey,
        Err(_) => VisnetStatus::VisnetInvalidValue,
    }
}

/// Runs the configured seed sweep. On success stores a result handle
/// in `out`; release it with `visnet_results_free`.
#[no_mangle]
pub unsafe extern "C" fn visnet_run(
    cfg: *const VisnetConfig,
    out: *mut *mut VisnetResults,
) -> VisnetStatus {
    let Some(out) = out.as_mut() else {
        return VisnetStatus::VisnetNullArgument;
    };
    *out = ptr::null_mut();
    let Some(cfg) = cfg.as_ref() else {
        return VisnetStatus::VisnetNullArgument;
    };
    if cfg.0.validate().is_err() {
        return VisnetStatus::VisnetInvalidConfig;
    }
    match run_experiment(&cfg.0) {
        Ok(rows) => {
            *out = Box::into_raw(Box::new(VisnetResults(rows)));
            VisnetStatus::VisnetOk
        }
        Err(_) => VisnetStatus::VisnetRunFailed,
    }
}

/// Releases a result set. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn visnet_results_free(results: *mut VisnetResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Number of rows in the result set; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn visnet_results_len(results: *const VisnetResults) -> usize {
    results.as_ref().map_or(0, |r| r.0.len())
}

/// Copies row `index` into `row`.
#[no_mangle]
pub unsafe extern "C" fn visnet_results_row(
    results: *const VisnetResults,
    index: usize,
    row: *mut VisnetRunRow,
) -> VisnetStatus {
    let (Some(results), Some(row)) = (results.as_ref(), row.as_mut()) else {
        return VisnetStatus::VisnetNullArgument;
    };
    let Some(m) = results.0.get(index) else {
        return VisnetStatus::VisnetOutOfRange;
    };
    *row = VisnetRunRow {
        scenario: m.scenario,
        seed: m.seed,
        fragments_sent: m.fragments_sent,
        fragments_delivered: m.fragments_delivered,
        avg_loss_ratio: m.avg_loss_ratio,
        images_attempted: m.images_attempted,
        images_received: m.images_received,
        complete: m.complete,
        usable: m.usable,
        unusable: m.unusable,
        mean_latency_s: m.mean_latency_s,
        latency_ratio: m.latency_ratio,
    };
    VisnetStatus::VisnetOk
}

/// Renders the result set as CSV, one row per run, and stores a
/// NUL-terminated copy in `out`. Release it with `visnet_string_free`.
#[no_mangle]
pub unsafe extern "C" fn visnet_results_to_csv(
    results: *const VisnetResults,
    out: *mut *mut c_char,
) -> VisnetStatus {
    let Some(out) = out.as_mut() else {
        return VisnetStatus::VisnetNullArgument;
    };
    *out = ptr::null_mut();
    let Some(results) = results.as_ref() else {
        return VisnetStatus::VisnetNullArgument;
    };
    let text = CString::new(to_csv(&results.0)).expect("CSV never contains NUL bytes");
    *out = text.into_raw();
    VisnetStatus::VisnetOk
}

/// Releases a string produced by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn visnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Static description of a status code; never NULL.
#[no_mangle]
pub extern "C" fn visnet_status_message(status: VisnetStatus) -> *const c_char {
    let msg: &'static CStr = match status {
        VisnetStatus::VisnetOk => c"ok",
        VisnetStatus::VisnetNullArgument => c"a required argument was NULL",
        VisnetStatus::VisnetInvalidUtf8 => c"string argument was not valid UTF-8",
        VisnetStatus::VisnetInvalidKey => c"unknown configuration key",
        VisnetStatus::VisnetInvalidValue => c"value could not be parsed for its key",
        VisnetStatus::VisnetInvalidConfig => c"configuration failed validation",
        VisnetStatus::VisnetRunFailed => c"the sweep could not run",
        VisnetStatus::VisnetOutOfRange => c"row index past the end of the results",
    };
    msg.as_ptr()
}

#[cfg(test)]
mod tests {
    use super::*;

    unsafe fn set(cfg: *mut VisnetConfig, key: &str, value: &str) -> VisnetStatus {
        let key = CString::new(key).unwrap();
        let value = CString::new(value).unwrap();
        visnet_config_set(cfg, key.as_ptr(), value.as_ptr())
    }

    #[test]
    fn sweep_through_the_c_boundary_matches_the_library() {
        unsafe {
            let cfg = visnet_config_new();
            assert_eq!(set(cfg, "scenario", "2"), VisnetStatus::VisnetOk);
            assert_eq!(set(cfg, "nodes", "60"), VisnetStatus::VisnetOk);
            assert_eq!(set(cfg, "area", "600x600"), VisnetStatus::VisnetOk);
            assert_eq!(set(cfg, "sentry-fraction", "1.0"), VisnetStatus::VisnetOk);
            assert_eq!(set(cfg, "facing-spread", "1.0"), VisnetStatus::VisnetOk);
            assert_eq!(set(cfg, "runs", "2"), VisnetStatus::VisnetOk);
            assert_eq!(set(cfg, "seed", "9"), VisnetStatus::VisnetOk);

            let mut results = ptr::null_mut();
            assert_eq!(visnet_run(cfg, &mut results), VisnetStatus::VisnetOk);
            assert_eq!(visnet_results_len(results), 2);

            let mut reference = ScenarioConfig::default();
            reference
                .apply_file(
                    "scenario = 2\nnodes = 60\narea = 600x600\nsentry-fraction = 1.0\n\
                     facing-spread = 1.0\nruns = 2\nseed = 9\n",
                )
                .unwrap();
            let expected = run_experiment(&reference).unwrap();

            let mut row = VisnetRunRow {
                scenario: 0,
                seed: 0,
                fragments_sent: 0,
                fragments_delivered: 0,
                avg_loss_ratio: 0.0,
                images_attempted: 0,
                images_received: 0,
                complete: 0,
                usable: 0,
                unusable: 0,
                mean_latency_s: 0.0,
                latency_ratio: 0.0,
            };
            for (i, want) in expected.iter().enumerate() {
                assert_eq!(visnet_results_row(results, i, &mut row), VisnetStatus::VisnetOk);
                assert_eq!(row.scenario, want.scenario);
                assert_eq!(row.seed, want.seed);
                assert_eq!(row.fragments_sent, want.fragments_sent);
                assert_eq!(row.fragments_delivered, want.fragments_delivered);
                assert_eq!(row.avg_loss_ratio, want.avg_loss_ratio);
                assert_eq!(row.usable, want.usable);
                assert_eq!(row.latency_ratio, want.latency_ratio);
            }
            assert_eq!(
                visnet_results_row(results, expected.len(), &mut row),
                VisnetStatus::VisnetOutOfRange,
            );

            let mut csv = ptr::null_mut();
            assert_eq!(visnet_results_to_csv(results, &mut csv), VisnetStatus::VisnetOk);
            let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
            assert_eq!(text, to_csv(&expected));
            visnet_string_free(csv);

            visnet_results_free(results);
            visnet_config_free(cfg);
        }
    }

    #[test]
    fn bad_keys_values_and_configs_map_to_distinct_statuses() {
        unsafe {
            let cfg = visnet_config_new();
            assert_eq!(set(cfg, "bogus", "1"), VisnetStatus::VisnetInvalidKey);
            assert_eq!(set(cfg, "nodes", "many"), VisnetStatus::VisnetInvalidValue);
            assert_eq!(set(cfg, "scenario", "4"), VisnetStatus::VisnetInvalidValue);

            // Weights that no longer sum to 1 pass key parsing but fail
            // whole-config validation at run time.
            assert_eq!(set(cfg, "alpha", "0.9"), VisnetStatus::VisnetOk);
            let mut results = ptr::null_mut();
            assert_eq!(visnet_run(cfg, &mut results), VisnetStatus::VisnetInvalidConfig);
            assert!(results.is_null());
            visnet_config_free(cfg);
        }
    }

    #[test]
    fn null_arguments_are_rejected_not_dereferenced() {
        unsafe {
            let key = CString::new("nodes").unwrap();
            let value = CString::new("5").unwrap();
            assert_eq!(
                visnet_config_set(ptr::null_mut(), key.as_ptr(), value.as_ptr()),
                VisnetStatus::VisnetNullArgument,
            );
            let cfg = visnet_config_new();
            assert_eq!(
                visnet_config_set(cfg, ptr::null(), value.as_ptr()),
                VisnetStatus::VisnetNullArgument,
            );
            assert_eq!(
                visnet_config_set(cfg, key.as_ptr(), ptr::null()),
                VisnetStatus::VisnetNullArgument,
            );
            assert_eq!(visnet_run(cfg, ptr::null_mut()), VisnetStatus::VisnetNullArgument);
            let mut results = ptr::null_mut();
            assert_eq!(
                visnet_run(ptr::null(), &mut results),
                VisnetStatus::VisnetNullArgument,
            );
            assert_eq!(visnet_results_len(ptr::null()), 0);
            let mut csv = ptr::null_mut();
            assert_eq!(
                visnet_results_to_csv(ptr::null(), &mut csv),
                VisnetStatus::VisnetNullArgument,
            );
            visnet_config_free(ptr::null_mut());
            visnet_results_free(ptr::null_mut());
            visnet_string_free(ptr::null_mut());
            visnet_config_free(cfg);
        }
    }

    #[test]
    fn status_messages_cover_every_code() {
        for status in [
            VisnetStatus::VisnetOk,
            VisnetStatus::VisnetNullArgument,
            VisnetStatus::VisnetInvalidUtf8,
            VisnetStatus::VisnetInvalidKey,
            VisnetStatus::VisnetInvalidValue,
            VisnetStatus::VisnetInvalidConfig,
            VisnetStatus::VisnetRunFailed,
            VisnetStatus::VisnetOutOfRange,
        ] {
            let msg = visnet_status_message(status);
            assert!(!msg.is_null());
            let text = unsafe { CStr::from_ptr(msg) }.to_str().unwrap();
            assert!(!text.is_empty());
        }
    }
}
