//! C ABI over the warm-start search engine.
//!
//! Conventions:
//! - Handles (`EmberSpace`, `EmberState`, `EmberStore`) are opaque pointers
//!   owned by the library; free them with the matching `_free` function.
//! - Every fallible call returns an [`EmberStatus`]; on any non-Ok status the
//!   thread-local message from [`ember_last_error_message`] explains why.
//! - Structured data crosses the boundary as UTF-8 JSON (configurations,
//!   feature vectors, reports, traces) or TOML (prior parameters), matching
//!   the documents the CLI reads and writes. Strings returned by the library
//!   are released with [`ember_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ember_core::analysis::{summarize, Summary};
use ember_core::error::Error;
use ember_core::meta::{DistanceMetric, MetaFeatureVector};
use ember_core::prior::{build_prior, knn_prior, tv_distance, PriorParams, PriorReport};
use ember_core::search::{run_search, Budget, RunRates};
use ember_core::space::{Configuration, SamplerState, SearchSpace};
use ember_core::store::{
    ExperienceDraft, ExperienceStore, FailureKind, FitnessVector, Outcome, SystemProfile,
};
use ember_core::surrogate::{make_task_family, FamilySpec};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmberStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidInput = 4,
    IoError = 5,
    Panic = 6,
}

/// Opaque search-space handle.
pub struct EmberSpace(SearchSpace);
/// Opaque sampler-state handle.
pub struct EmberState(SamplerState);
/// Opaque experience-store handle.
pub struct EmberStore(ExperienceStore);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let cstring = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message contained NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_of(err: &Error) -> EmberStatus {
    match err {
        Error::Parse(_) | Error::Serde(_) => EmberStatus::ParseError,
        Error::Io(_) => EmberStatus::IoError,
        _ => EmberStatus::InvalidInput,
    }
}

fn fail(err: Error) -> EmberStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Run `body` with panic containment; panics become `EmberStatus::Panic`.
fn guarded<F: FnOnce() -> EmberStatus>(body: F) -> EmberStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in ember".into());
            set_error(message);
            EmberStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string or the call fails cleanly.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, EmberStatus> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(EmberStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        EmberStatus::InvalidUtf8
    })
}

unsafe fn read_opt_str<'a>(ptr: *const c_char) -> Result<Option<&'a str>, EmberStatus> {
    if ptr.is_null() {
        Ok(None)
    } else {
        read_str(ptr).map(Some)
    }
}

fn give_string(out: *mut *mut c_char, text: String) -> EmberStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return EmberStatus::NullArgument;
    }
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            EmberStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL byte".into());
            EmberStatus::InvalidInput
        }
    }
}

macro_rules! deref {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(v) => v,
            None => {
                set_error("null handle".into());
                return EmberStatus::NullArgument;
            }
        }
    };
}

macro_rules! deref_mut {
    ($ptr:expr) => {
        match unsafe { $ptr.as_mut() } {
            Some(v) => v,
            None => {
                set_error("null handle".into());
                return EmberStatus::NullArgument;
            }
        }
    };
}

// ---------------------------------------------------------------------------
// Library metadata and error retrieval
// ---------------------------------------------------------------------------

/// Library version as a heap string; free with `ember_string_free`.
#[no_mangle]
pub extern "C" fn ember_version() -> *mut c_char {
    CString::new(env!("CARGO_PKG_VERSION")).unwrap().into_raw()
}

/// Message of the last error on this thread (empty string when none);
/// free with `ember_string_free`.
#[no_mangle]
pub extern "C" fn ember_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.clone().into_raw())
            .unwrap_or_else(|| CString::new("").unwrap().into_raw())
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from an ember call and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ember_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Search space
// ---------------------------------------------------------------------------

/// Parse a space definition document (TOML).
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ember_space_parse(
    text: *const c_char,
    out: *mut *mut EmberSpace,
) -> EmberStatus {
    guarded(|| {
        let text = match read_str(text) {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        match SearchSpace::parse(text) {
            Ok(space) => {
                *out = Box::into_raw(Box::new(EmberSpace(space)));
                EmberStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `space` must come from `ember_space_parse` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ember_space_free(space: *mut EmberSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Number of fine-tuning methods in the space.
///
/// # Safety
/// `space` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ember_space_method_count(
    space: *const EmberSpace,
    out: *mut usize,
) -> EmberStatus {
    guarded(|| {
        let space = deref!(space);
        if out.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        *out = space.0.methods().len();
        EmberStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Sampler state
// ---------------------------------------------------------------------------

/// Uniform initial sampler state over a space.
///
/// # Safety
/// `space` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ember_state_init_uniform(
    space: *const EmberSpace,
    out: *mut *mut EmberState,
) -> EmberStatus {
    guarded(|| {
        let space = deref!(space);
        if out.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        *out = Box::into_raw(Box::new(EmberState(space.0.init_uniform())));
        EmberStatus::Ok
    })
}

/// # Safety
/// `state` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ember_state_free(state: *mut EmberState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Copy the method marginal into `buf` (capacity `cap`); `written` receives
/// the vector length. Fails with InvalidInput when `cap` is too small.
///
/// # Safety
/// `buf` must point to at least `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ember_state_method_marginal(
    state: *const EmberState,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> EmberStatus {
    guarded(|| {
        let state = deref!(state);
        if buf.is_null() || written.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        let marginal = state.0.method_marginal();
        if marginal.len() > cap {
            set_error(format!(
                "buffer holds {cap}, marginal needs {}",
                marginal.len()
            ));
            return EmberStatus::InvalidInput;
        }
        std::ptr::copy_nonoverlapping(marginal.as_ptr(), buf, marginal.len());
        *written = marginal.len();
        EmberStatus::Ok
    })
}

/// Serialize a sampler state to JSON.
///
/// # Safety
/// Pointers must be valid; free the string with `ember_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ember_state_to_json(
    state: *const EmberState,
    out: *mut *mut c_char,
) -> EmberStatus {
    guarded(|| {
        let state = deref!(state);
        match serde_json::to_string(&state.0) {
            Ok(json) => give_string(out, json),
            Err(e) => fail(Error::Serde(e.to_string())),
        }
    })
}

/// Deserialize a sampler state from JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ember_state_from_json(
    json: *const c_char,
    out: *mut *mut EmberState,
) -> EmberStatus {
    guarded(|| {
        let json = match read_str(json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        match serde_json::from_str::<SamplerState>(json) {
            Ok(state) => {
                *out = Box::into_raw(Box::new(EmberState(state)));
                EmberStatus::Ok
            }
            Err(e) => fail(Error::Serde(e.to_string())),
        }
    })
}

/// Draw one configuration (deterministic per seed) as a JSON document.
///
/// # Safety
/// Pointers must be valid; free the string with `ember_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ember_state_sample_json(
    space: *const EmberSpace,
    state: *const EmberState,
    seed: u64,
    out: *mut *mut c_char,
) -> EmberStatus {
    guarded(|| {
        let space = deref!(space);
        let state = deref!(state);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match state.0.sample(&space.0, &mut rng) {
            Ok(config) => match serde_json::to_string(&config) {
                Ok(json) => give_string(out, json),
                Err(e) => fail(Error::Serde(e.to_string())),
            },
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Experience store
// ---------------------------------------------------------------------------

/// Open (or create) an experience store file.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ember_store_open(
    path: *const c_char,
    out: *mut *mut EmberStore,
) -> EmberStatus {
    guarded(|| {
        let path = match read_str(path) {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        match ExperienceStore::open(PathBuf::from(path)) {
            Ok(store) => {
                *out = Box::into_raw(Box::new(EmberStore(store)));
                EmberStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `store` must come from `ember_store_open` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ember_store_free(store: *mut EmberStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Count records of a family, optionally excluding one task
/// (`exclude_task` may be NULL).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ember_store_count(
    store: *const EmberStore,
    family: *const c_char,
    exclude_task: *const c_char,
    out: *mut usize,
) -> EmberStatus {
    guarded(|| {
        let store = deref!(store);
        let family = match read_str(family) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let exclude = match read_opt_str(exclude_task) {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        match store.0.query(family, exclude) {
            Ok(records) => {
                *out = records.len();
                EmberStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Record shape accepted by `ember_store_append_json`: the store record
/// without the id (assigned on append). Exactly one of `metrics`/`failure`
/// must be present.
#[derive(Deserialize)]
struct DraftWire {
    task_id: String,
    family: String,
    timestamp: String,
    config: Configuration,
    #[serde(default)]
    metrics: Option<FitnessVector>,
    #[serde(default)]
    failure: Option<FailureKind>,
    task_features: MetaFeatureVector,
    system: SystemProfile,
}

/// Append one experience from its JSON representation; `out_id` receives the
/// assigned record id.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ember_store_append_json(
    store: *mut EmberStore,
    record_json: *const c_char,
    out_id: *mut u64,
) -> EmberStatus {
    guarded(|| {
        let store = deref_mut!(store);
        let json = match read_str(record_json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out_id.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        let wire: DraftWire = match serde_json::from_str(json) {
            Ok(w) => w,
            Err(e) => return fail(Error::Serde(e.to_string())),
        };
        let outcome = match (wire.metrics, wire.failure) {
            (Some(m), None) => Outcome::Success(m),
            (None, Some(f)) => Outcome::Failure(f),
            _ => return fail(Error::Invalid("set exactly one of metrics/failure".into())),
        };
        let draft = ExperienceDraft {
            task_id: wire.task_id,
            family: wire.family,
            config: wire.config,
            outcome,
            task_features: wire.task_features,
            system: wire.system,
        };
        match store.0.append(draft, &wire.timestamp) {
            Ok(id) => {
                *out_id = id;
                EmberStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Warm starting
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ReportWire<'a> {
    report: &'a PriorReport,
}

fn prior_inputs(
    store: &ExperienceStore,
    family: &str,
    exclude_task: Option<&str>,
    features_json: &str,
    system_json: &str,
) -> Result<
    (
        Vec<ember_core::store::Experience>,
        MetaFeatureVector,
        SystemProfile,
    ),
    Error,
> {
    let experiences = store.query(family, exclude_task)?;
    let features: MetaFeatureVector =
        serde_json::from_str(features_json).map_err(|e| Error::Serde(e.to_string()))?;
    let system: SystemProfile =
        serde_json::from_str(system_json).map_err(|e| Error::Serde(e.to_string()))?;
    Ok((experiences, features, system))
}

/// Build the experience-aware prior from stored experiences. `prior_toml`
/// holds the prior parameters; `exclude_task` may be NULL. On success
/// `out_state` owns the warmed state and `out_report_json` the
/// per-experience (distance, utility, alpha) report.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ember_build_prior_json(
    space: *const EmberSpace,
    store: *const EmberStore,
    family: *const c_char,
    exclude_task: *const c_char,
    features_json: *const c_char,
    system_json: *const c_char,
    prior_toml: *const c_char,
    out_state: *mut *mut EmberState,
    out_report_json: *mut *mut c_char,
) -> EmberStatus {
    guarded(|| {
        let space = deref!(space);
        let store = deref!(store);
        let family = match read_str(family) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let features_json = match read_str(features_json) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let system_json = match read_str(system_json) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let prior_toml = match read_str(prior_toml) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let exclude = match read_opt_str(exclude_task) {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out_state.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        let params = match PriorParams::parse(prior_toml) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        let (experiences, features, system) =
            match prior_inputs(&store.0, family, exclude, features_json, system_json) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
        let uniform = space.0.init_uniform();
        match build_prior(
            &space.0,
            &uniform,
            &experiences,
            &features,
            &system,
            &params,
        ) {
            Ok((state, report)) => {
                let json = match serde_json::to_string(&ReportWire { report: &report }) {
                    Ok(j) => j,
                    Err(e) => return fail(Error::Serde(e.to_string())),
                };
                *out_state = Box::into_raw(Box::new(EmberState(state)));
                give_string(out_report_json, json)
            }
            Err(e) => fail(e),
        }
    })
}

/// The naive kNN warm-start baseline over the same store.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ember_knn_prior_json(
    space: *const EmberSpace,
    store: *const EmberStore,
    family: *const c_char,
    exclude_task: *const c_char,
    k: usize,
    features_json: *const c_char,
    system_json: *const c_char,
    out_state: *mut *mut EmberState,
    out_report_json: *mut *mut c_char,
) -> EmberStatus {
    guarded(|| {
        let space = deref!(space);
        let store = deref!(store);
        let family = match read_str(family) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let features_json = match read_str(features_json) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let system_json = match read_str(system_json) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let exclude = match read_opt_str(exclude_task) {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out_state.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        let (experiences, features, system) =
            match prior_inputs(&store.0, family, exclude, features_json, system_json) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
        let uniform = space.0.init_uniform();
        match knn_prior(
            &space.0,
            &uniform,
            &experiences,
            k,
            &features,
            &system,
            DistanceMetric::Euclidean,
            None,
        ) {
            Ok((state, report)) => {
                let json = match serde_json::to_string(&ReportWire { report: &report }) {
                    Ok(j) => j,
                    Err(e) => return fail(Error::Serde(e.to_string())),
                };
                *out_state = Box::into_raw(Box::new(EmberState(state)));
                give_string(out_report_json, json)
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Surrogate search
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TraceRecordWire {
    index: u64,
    config: Configuration,
    metrics: Option<FitnessVector>,
    failure: Option<FailureKind>,
    timestamp_secs: f64,
}

#[derive(Serialize)]
struct TraceWire {
    seed: u64,
    records: Vec<TraceRecordWire>,
    final_state: SamplerState,
    summary: Summary,
}

/// Run the sample-evaluate-update loop on one task of a surrogate family
/// (`family_toml` is a family spec document). `max_evaluations` 0 means
/// unlimited; `wall_clock_limit_secs` <= 0 means unlimited; at least one
/// limit must be set. Returns the full trace plus its summary as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ember_run_surrogate_search_json(
    space: *const EmberSpace,
    initial_state: *const EmberState,
    family_toml: *const c_char,
    task_id: *const c_char,
    max_evaluations: u64,
    wall_clock_limit_secs: f64,
    per_eval_timeout_secs: f64,
    batch_size: usize,
    seed: u64,
    out_trace_json: *mut *mut c_char,
) -> EmberStatus {
    guarded(|| {
        let space = deref!(space);
        let state = deref!(initial_state);
        let family_toml = match read_str(family_toml) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let task_id = match read_str(task_id) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let spec = match FamilySpec::parse(family_toml) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let tasks = match make_task_family(&space.0, &spec) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        let task = match tasks.iter().find(|t| t.task_id == task_id) {
            Some(t) => t,
            None => return fail(Error::Invalid(format!("unknown task `{task_id}`"))),
        };
        let budget = Budget {
            max_evaluations: (max_evaluations > 0).then_some(max_evaluations),
            wall_clock_limit_secs: (wall_clock_limit_secs > 0.0).then_some(wall_clock_limit_secs),
            per_pipeline_timeout_secs: per_eval_timeout_secs,
        };
        match run_search(
            &space.0,
            &state.0,
            task,
            &budget,
            batch_size,
            seed,
            RunRates::default(),
        ) {
            Ok(trace) => {
                let wire = TraceWire {
                    seed: trace.seed,
                    records: trace
                        .records
                        .iter()
                        .map(|r| {
                            let (metrics, failure) = match &r.outcome {
                                Outcome::Success(m) => (Some(m.clone()), None),
                                Outcome::Failure(f) => (None, Some(*f)),
                            };
                            TraceRecordWire {
                                index: r.index,
                                config: r.config.clone(),
                                metrics,
                                failure,
                                timestamp_secs: r.timestamp_secs,
                            }
                        })
                        .collect(),
                    final_state: trace.final_state.clone(),
                    summary: summarize(&trace, None),
                };
                match serde_json::to_string(&wire) {
                    Ok(json) => give_string(out_trace_json, json),
                    Err(e) => fail(Error::Serde(e.to_string())),
                }
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

/// Total-variation distance between two probability vectors of length `len`.
///
/// # Safety
/// `p` and `q` must point to at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ember_tv_distance(
    p: *const f64,
    q: *const f64,
    len: usize,
    out: *mut f64,
) -> EmberStatus {
    guarded(|| {
        if p.is_null() || q.is_null() || out.is_null() {
            set_error("null pointer argument".into());
            return EmberStatus::NullArgument;
        }
        let p = std::slice::from_raw_parts(p, len);
        let q = std::slice::from_raw_parts(q, len);
        match tv_distance(p, q) {
            Ok(d) => {
                *out = d;
                EmberStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// ROUGE-L F1 between two texts, using the library tokenizer.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ember_rouge_l_f1(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut f64,
) -> EmberStatus {
    guarded(|| {
        let candidate = match read_str(candidate) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let reference = match read_str(reference) {
            Ok(v) => v,
            Err(s) => return s,
        };
        if out.is_null() {
            set_error("null output pointer".into());
            return EmberStatus::NullArgument;
        }
        let c = ember_core::meta::tokenize(candidate);
        let r = ember_core::meta::tokenize(reference);
        *out = ember_core::meta::rouge_l_f1(&c, &r);
        EmberStatus::Ok
    })
}

/// Extract label-based meta-features from `label TAB text` lines; returns
/// the feature vector as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ember_extract_label_features_json(
    data: *const c_char,
    out: *mut *mut c_char,
) -> EmberStatus {
    guarded(|| {
        let data = match read_str(data) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let docs = match ember_core::meta::parse_labeled(data) {
            Ok(d) => d,
            Err(e) => return fail(e),
        };
        match ember_core::meta::extract_label_based(&docs) {
            Ok(v) => match serde_json::to_string(&v) {
                Ok(json) => give_string(out, json),
                Err(e) => fail(Error::Serde(e.to_string())),
            },
            Err(e) => fail(e),
        }
    })
}
