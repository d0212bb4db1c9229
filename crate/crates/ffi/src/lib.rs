//! C ABI over the eegvl core library.
//!
//! Objects cross the boundary as opaque heap handles created by `*_load`,
//! `*_fit` or `*_from_data` and released with the matching `*_free`. Every
//! fallible call returns an [`EegvlStatus`]; the message for the most recent
//! failure on the calling thread is available from
//! [`eegvl_last_error_message`]. Panics are caught and reported as
//! `EEGVL_STATUS_PANIC`, never unwound into C.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use eegvl::client::{estimate_cost, Label};
use eegvl::eval::kappa_from_pairs;
use eegvl::ica::{
    activations, apply_rejection, fit_extended_infomax, fit_fastica, FastIcaParams, IcaModel, InfomaxParams,
};
use eegvl::render::welch_psd;
use eegvl::signal::{load_container, load_edf, save_container, Montage, Recording};
use eegvl::triage::{decide_label, TriagePolicy, Verdict};

/// Packed as major << 16 | minor.
pub const EEGVL_ABI_VERSION: u32 = 1 << 16;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EegvlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Signal = 4,
    Ica = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Label codes; the numeric order is the library's canonical label order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EegvlLabel {
    Brain = 0,
    Eye = 1,
    Muscle = 2,
    Heart = 3,
    LineNoise = 4,
    ChannelNoise = 5,
    OtherArtifact = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EegvlVerdict {
    Keep = 0,
    Reject = 1,
    Flag = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EegvlIcaMethod {
    Fastica = 0,
    ExtendedInfomax = 1,
}

/// Opaque multichannel recording.
pub struct EegvlRecording {
    inner: Recording,
}

/// Opaque fitted ICA model.
pub struct EegvlModel {
    inner: IcaModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|c| *c.borrow_mut() = msg.into());
}

fn fail(status: EegvlStatus, msg: impl std::fmt::Display) -> EegvlStatus {
    set_error(msg.to_string());
    status
}

fn guard(f: impl FnOnce() -> EegvlStatus) -> EegvlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(EegvlStatus::Panic, format!("panic: {msg}"))
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(EegvlStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, EegvlStatus> {
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(EegvlStatus::InvalidArgument, "path is not valid UTF-8"))
}

fn label_from(code: u32) -> Option<Label> {
    Label::ALL.get(code as usize).copied()
}

#[no_mangle]
pub extern "C" fn eegvl_abi_version() -> u32 {
    EEGVL_ABI_VERSION
}

/// Copies the last error message (NUL-terminated, truncated to `cap - 1`
/// bytes) into `buf` and returns its full length. With a null `buf` only the
/// length is returned.
#[no_mangle]
pub unsafe extern "C" fn eegvl_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|c| {
        let msg = c.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads an `.edf` file, or any other path as a recording container.
#[no_mangle]
pub unsafe extern "C" fn eegvl_recording_load(path: *const c_char, out: *mut *mut EegvlRecording) -> EegvlStatus {
    guard(|| {
        non_null!(path, out);
        let p = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let is_edf = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("edf"));
        let r = if is_edf { load_edf(p) } else { load_container(p) };
        match r {
            Ok(rec) => {
                *out = Box::into_raw(Box::new(EegvlRecording { inner: rec }));
                EegvlStatus::Ok
            }
            Err(e) => fail(EegvlStatus::Signal, format!("{}: {e}", p.display())),
        }
    })
}

/// Builds a recording from row-major `n_channels × n_samples` data and
/// standard 10-20 channel labels.
#[no_mangle]
pub unsafe extern "C" fn eegvl_recording_from_data(
    data: *const f64,
    n_channels: usize,
    n_samples: usize,
    sfreq: f64,
    labels: *const *const c_char,
    out: *mut *mut EegvlRecording,
) -> EegvlStatus {
    guard(|| {
        non_null!(data, labels, out);
        if n_channels == 0 || n_samples == 0 {
            return fail(EegvlStatus::InvalidArgument, "empty recording");
        }
        let mut names = Vec::with_capacity(n_channels);
        for i in 0..n_channels {
            let l = *labels.add(i);
            if l.is_null() {
                return fail(EegvlStatus::NullPointer, format!("label {i} is null"));
            }
            match CStr::from_ptr(l).to_str() {
                Ok(s) => names.push(s.to_string()),
                Err(_) => return fail(EegvlStatus::InvalidArgument, format!("label {i} is not UTF-8")),
            }
        }
        let montage = match Montage::standard_1020(&names) {
            Ok(m) => m,
            Err(e) => return fail(EegvlStatus::Signal, e),
        };
        let samples = std::slice::from_raw_parts(data, n_channels * n_samples).to_vec();
        match Recording::new(samples, n_channels, sfreq, names, montage) {
            Ok(rec) => {
                *out = Box::into_raw(Box::new(EegvlRecording { inner: rec }));
                EegvlStatus::Ok
            }
            Err(e) => fail(EegvlStatus::Signal, e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn eegvl_recording_save(rec: *const EegvlRecording, path: *const c_char) -> EegvlStatus {
    guard(|| {
        non_null!(rec, path);
        let p = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match save_container(&(*rec).inner, p) {
            Ok(()) => EegvlStatus::Ok,
            Err(e) => fail(EegvlStatus::Io, e),
        }
    })
}

/// Releases a recording; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn eegvl_recording_free(rec: *mut EegvlRecording) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Zero for a null handle.
#[no_mangle]
pub unsafe extern "C" fn eegvl_recording_n_channels(rec: *const EegvlRecording) -> usize {
    rec.as_ref().map_or(0, |r| r.inner.n_channels())
}

/// Zero for a null handle.
#[no_mangle]
pub unsafe extern "C" fn eegvl_recording_n_samples(rec: *const EegvlRecording) -> usize {
    rec.as_ref().map_or(0, |r| r.inner.n_samples())
}

/// Zero for a null handle.
#[no_mangle]
pub unsafe extern "C" fn eegvl_recording_sfreq(rec: *const EegvlRecording) -> f64 {
    rec.as_ref().map_or(0.0, |r| r.inner.sfreq())
}

/// Copies the row-major samples into `buf`, which must hold
/// `n_channels * n_samples` values.
#[no_mangle]
pub unsafe extern "C" fn eegvl_recording_copy_data(rec: *const EegvlRecording, buf: *mut f64, len: usize) -> EegvlStatus {
    guard(|| {
        non_null!(rec, buf);
        let d = (*rec).inner.data();
        if len < d.len() {
            return fail(EegvlStatus::BufferTooSmall, format!("need {} values, got {len}", d.len()));
        }
        std::ptr::copy_nonoverlapping(d.as_ptr(), buf, d.len());
        EegvlStatus::Ok
    })
}

/// Fits ICA. `n_components == 0` picks the default (numerical rank, at most 40).
#[no_mangle]
pub unsafe extern "C" fn eegvl_ica_fit(
    rec: *const EegvlRecording,
    method: EegvlIcaMethod,
    n_components: usize,
    seed: u64,
    out: *mut *mut EegvlModel,
) -> EegvlStatus {
    guard(|| {
        non_null!(rec, out);
        let n = (n_components > 0).then_some(n_components);
        let r = match method {
            EegvlIcaMethod::Fastica => {
                fit_fastica(&(*rec).inner, &FastIcaParams { n_components: n, seed, ..Default::default() })
            }
            EegvlIcaMethod::ExtendedInfomax => {
                fit_extended_infomax(&(*rec).inner, &InfomaxParams { n_components: n, seed, ..Default::default() })
            }
        };
        match r {
            Ok(m) => {
                *out = Box::into_raw(Box::new(EegvlModel { inner: m }));
                EegvlStatus::Ok
            }
            Err(e) => fail(EegvlStatus::Ica, e),
        }
    })
}

/// Releases a model; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn eegvl_model_free(model: *mut EegvlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Zero for a null handle.
#[no_mangle]
pub unsafe extern "C" fn eegvl_model_n_components(model: *const EegvlModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_components())
}

/// Component time courses, row-major `n_components × n_samples`.
#[no_mangle]
pub unsafe extern "C" fn eegvl_model_activations(
    model: *const EegvlModel,
    rec: *const EegvlRecording,
    buf: *mut f64,
    len: usize,
) -> EegvlStatus {
    guard(|| {
        non_null!(model, rec, buf);
        let acts = match activations(&(*model).inner, &(*rec).inner) {
            Ok(a) => a,
            Err(e) => return fail(EegvlStatus::Ica, e),
        };
        let need = acts.n_components() * acts.n_samples();
        if len < need {
            return fail(EegvlStatus::BufferTooSmall, format!("need {need} values, got {len}"));
        }
        for i in 0..acts.n_components() {
            let row = acts.row(i);
            std::ptr::copy_nonoverlapping(row.as_ptr(), buf.add(i * acts.n_samples()), row.len());
        }
        EegvlStatus::Ok
    })
}

/// Reconstructs `rec` without the listed components into a new handle.
/// `rejected` may be null when `n_rejected` is zero.
#[no_mangle]
pub unsafe extern "C" fn eegvl_apply_rejection(
    model: *const EegvlModel,
    rec: *const EegvlRecording,
    rejected: *const usize,
    n_rejected: usize,
    out: *mut *mut EegvlRecording,
) -> EegvlStatus {
    guard(|| {
        non_null!(model, rec, out);
        if n_rejected > 0 && rejected.is_null() {
            return fail(EegvlStatus::NullPointer, "rejected is null");
        }
        let set: BTreeSet<usize> = if n_rejected == 0 {
            BTreeSet::new()
        } else {
            std::slice::from_raw_parts(rejected, n_rejected).iter().copied().collect()
        };
        match apply_rejection(&(*model).inner, &(*rec).inner, &set) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(EegvlRecording { inner: r }));
                EegvlStatus::Ok
            }
            Err(e) => fail(EegvlStatus::Ica, e),
        }
    })
}

/// Welch PSD with a Hann window. `freqs` and `psd` must each hold
/// `seg_len / 2 + 1` values.
#[no_mangle]
pub unsafe extern "C" fn eegvl_welch_psd(
    signal: *const f64,
    n: usize,
    sfreq: f64,
    seg_len: usize,
    overlap: f64,
    freqs: *mut f64,
    psd: *mut f64,
    n_bins: usize,
) -> EegvlStatus {
    guard(|| {
        non_null!(signal, freqs, psd);
        let x = std::slice::from_raw_parts(signal, n);
        let s = match welch_psd(x, sfreq, seg_len, overlap) {
            Ok(s) => s,
            Err(e) => return fail(EegvlStatus::InvalidArgument, e),
        };
        if n_bins < s.psd.len() {
            return fail(EegvlStatus::BufferTooSmall, format!("need {} bins, got {n_bins}", s.psd.len()));
        }
        std::ptr::copy_nonoverlapping(s.freqs.as_ptr(), freqs, s.freqs.len());
        std::ptr::copy_nonoverlapping(s.psd.as_ptr(), psd, s.psd.len());
        EegvlStatus::Ok
    })
}

/// Cohen's kappa between two label-code sequences of length `n`.
#[no_mangle]
pub unsafe extern "C" fn eegvl_cohens_kappa(a: *const u32, b: *const u32, n: usize, out: *mut f64) -> EegvlStatus {
    guard(|| {
        non_null!(a, b, out);
        if n == 0 {
            return fail(EegvlStatus::InvalidArgument, "label sequences are empty");
        }
        let conv = |p: *const u32| -> Option<Vec<Label>> {
            std::slice::from_raw_parts(p, n).iter().map(|c| label_from(*c)).collect()
        };
        match (conv(a), conv(b)) {
            (Some(x), Some(y)) => {
                *out = kappa_from_pairs(&x, &y);
                EegvlStatus::Ok
            }
            _ => fail(EegvlStatus::InvalidArgument, "label code out of range"),
        }
    })
}

/// Verdict under the default triage policy.
#[no_mangle]
pub unsafe extern "C" fn eegvl_triage_decide(label: u32, confidence: f64, out: *mut EegvlVerdict) -> EegvlStatus {
    guard(|| {
        non_null!(out);
        let Some(l) = label_from(label) else {
            return fail(EegvlStatus::InvalidArgument, format!("label code {label} out of range"));
        };
        if !(0.0..=1.0).contains(&confidence) {
            return fail(EegvlStatus::InvalidArgument, format!("confidence {confidence} outside [0, 1]"));
        }
        let (v, _) = decide_label(l, confidence, &TriagePolicy::default());
        *out = match v {
            Verdict::Keep => EegvlVerdict::Keep,
            Verdict::Reject => EegvlVerdict::Reject,
            Verdict::Flag => EegvlVerdict::Flag,
        };
        EegvlStatus::Ok
    })
}

/// List-price estimate for classifying `n_components` at `per_component_usd`.
#[no_mangle]
pub extern "C" fn eegvl_estimate_cost(n_components: usize, per_component_usd: f64) -> f64 {
    estimate_cost(n_components, per_component_usd)
}
