//! C ABI over the `rieszpot` library.
//!
//! Every entry point returns an [`RpStatus`]; on failure the message is kept
//! per thread and read with [`rp_last_error`]. Spaces are opaque handles that
//! own their measure. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rieszpot::config::RunConfig;
use rieszpot::lebesgue::{luxemburg_norm, ExponentFunction};
use rieszpot::measure::{check_upper_doubling, DiscreteMeasure};
use rieszpot::operators::{potential_in, GridFunction, KernelSpec, LambdaSpec, Quadrature, Setting};
use rieszpot::space::{build_space, QuasiMetricSpace, SpaceSpec};
use rieszpot::two_component::{build_glued, glued_measure, GlueSpec, GluedMeasure, TwoComponentSpace};
use rieszpot::verify::{self, Verdict};
use rieszpot::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON or a rejected spec, kernel, exponent or function.
    InvalidInput = 3,
    LengthMismatch = 4,
    /// The run finished but its hypotheses did not hold.
    HypothesesNotMet = 5,
    /// The run finished and a tracked constant grew or a bound failed.
    Violated = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpQuadrature {
    Plain = 0,
    SelfCell = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpExperiment {
    Hls = 0,
    Hedberg = 1,
    Necessity = 2,
    Maximal = 3,
}

enum Domain {
    Plain(QuasiMetricSpace, DiscreteMeasure),
    Glued(TwoComponentSpace, GluedMeasure),
}

/// A space together with its measure.
pub struct RpSpace {
    domain: Domain,
}

impl RpSpace {
    fn setting(&self) -> Setting<'_> {
        match &self.domain {
            Domain::Plain(s, mu) => Setting::new(s, mu),
            Domain::Glued(tc, gm) => Setting::glued(tc, gm),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(RpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::LengthMismatch { .. } => RpStatus::LengthMismatch,
            Error::Io(_) => RpStatus::Internal,
            _ => RpStatus::InvalidInput,
        };
        Fail(status, e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> RpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RpStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside rieszpot".into());
            RpStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(RpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Fail(RpStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn json<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T, Fail> {
    serde_json::from_str(s).map_err(|e| Fail(RpStatus::InvalidInput, format!("{what}: {e}")))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn space_ref<'a>(h: *const RpSpace) -> Result<&'a RpSpace, Fail> {
    h.as_ref().ok_or_else(|| null("space handle"))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn rp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a space from a JSON spec with its natural quadrature measure.
///
/// # Safety
/// `spec_json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_space_from_json(spec_json: *const c_char, out: *mut *mut RpSpace) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec: SpaceSpec = json(text(spec_json, "spec_json")?, "space spec")?;
        let space = build_space(&spec)?;
        let mu = DiscreteMeasure::natural(&space);
        *out = Box::into_raw(Box::new(RpSpace { domain: Domain::Plain(space, mu) }));
        Ok(())
    })
}

/// Builds a two-component space from a JSON glue spec, carrying the glued measure.
///
/// # Safety
/// `spec_json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_glue_from_json(spec_json: *const c_char, out: *mut *mut RpSpace) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec: GlueSpec = json(text(spec_json, "spec_json")?, "glue spec")?;
        let tc = build_glued(&spec)?;
        let gm = glued_measure(&tc);
        *out = Box::into_raw(Box::new(RpSpace { domain: Domain::Glued(tc, gm) }));
        Ok(())
    })
}

/// # Safety
/// `space` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rp_space_free(space: *mut RpSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// # Safety
/// `space` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_space_len(space: *const RpSpace, out: *mut usize) -> RpStatus {
    guard(|| {
        let s = space_ref(space)?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.setting().space.len();
        Ok(())
    })
}

/// Replaces the measure of a plain space by explicit node weights.
///
/// # Safety
/// `space` must be a live handle and `weights` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_space_set_weights(space: *mut RpSpace, weights: *const f64, n: usize) -> RpStatus {
    guard(|| {
        let s = space.as_mut().ok_or_else(|| null("space handle"))?;
        let w = slice(weights, n, "weights")?.to_vec();
        match &mut s.domain {
            Domain::Plain(sp, mu) => *mu = DiscreteMeasure::for_space(sp, w)?,
            Domain::Glued(..) => return Err(Fail(RpStatus::InvalidInput, "glued spaces keep their glued measure".into())),
        }
        Ok(())
    })
}

/// Applies the potential with kernel `kernel_spec` (e.g. `jalpha:alpha=0.5`) to `f`.
///
/// # Safety
/// `f` and `out` must each point to `n` doubles, `n` being the node count.
#[no_mangle]
pub unsafe extern "C" fn rp_potential_apply(
    space: *const RpSpace,
    kernel_spec: *const c_char,
    quadrature: RpQuadrature,
    f: *const f64,
    n: usize,
    out: *mut f64,
) -> RpStatus {
    guard(|| {
        let s = space_ref(space)?;
        let ks: KernelSpec = text(kernel_spec, "kernel_spec")?.parse()?;
        let setting = s.setting();
        let f = GridFunction::new(slice(f, n, "f")?.to_vec())?;
        f.check_len(setting.space.len())?;
        if out.is_null() {
            return Err(null("out"));
        }
        let q = match quadrature {
            RpQuadrature::Plain => Quadrature::Plain,
            RpQuadrature::SelfCell => Quadrature::SelfCell,
        };
        let g = potential_in(&setting, &ks, &f, q)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(g.values());
        Ok(())
    })
}

/// Luxemburg norm of `f` for the per-node exponents `p`.
///
/// # Safety
/// `p` and `f` must each point to `n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rp_luxemburg_norm(space: *const RpSpace, p: *const f64, f: *const f64, n: usize, out: *mut f64) -> RpStatus {
    guard(|| {
        let s = space_ref(space)?;
        let setting = s.setting();
        let pexp = ExponentFunction::new(slice(p, n, "p")?.to_vec())?;
        let f = GridFunction::new(slice(f, n, "f")?.to_vec())?;
        f.check_len(setting.space.len())?;
        *out.as_mut().ok_or_else(|| null("out"))? = luxemburg_norm(setting.mu, &pexp, &f)?;
        Ok(())
    })
}

/// Upper doubling check against `lambda_spec` (e.g. `power(n=1)`).
///
/// # Safety
/// `holds` and `best_constant` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rp_check_upper_doubling(
    space: *const RpSpace,
    lambda_spec: *const c_char,
    holds: *mut bool,
    best_constant: *mut f64,
) -> RpStatus {
    guard(|| {
        let s = space_ref(space)?;
        let spec: LambdaSpec = text(lambda_spec, "lambda_spec")?.parse()?;
        let setting = s.setting();
        let lam = setting.lambda(&spec)?;
        let rep = check_upper_doubling(setting.space, setting.mu, &lam);
        *holds.as_mut().ok_or_else(|| null("holds"))? = rep.holds;
        *best_constant.as_mut().ok_or_else(|| null("best_constant"))? = rep.best_constant;
        Ok(())
    })
}

/// Runs a verification experiment from a JSON run config and hands back the
/// JSON report, to be released with [`rp_string_free`]. The report is
/// written even when the status is `HypothesesNotMet` or `Violated`.
///
/// # Safety
/// `config_json` must be a nul-terminated string and `report_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_verify(experiment: RpExperiment, config_json: *const c_char, report_out: *mut *mut c_char) -> RpStatus {
    let mut verdict = Verdict::Stable;
    let mut reason = None;
    let status = guard(|| {
        if report_out.is_null() {
            return Err(null("report_out"));
        }
        *report_out = ptr::null_mut();
        let cfg: RunConfig = json(text(config_json, "config_json")?, "run config")?;
        let rep = match experiment {
            RpExperiment::Hls => verify::verify_sufficiency(&cfg)?,
            RpExperiment::Hedberg => verify::verify_hedberg(&cfg)?,
            RpExperiment::Necessity => verify::verify_necessity(&cfg)?,
            RpExperiment::Maximal => verify::verify_maximal_bounds(&cfg)?,
        };
        verdict = rep.verdict;
        reason = rep.reason.clone();
        let s = rep.to_json()?;
        *report_out = CString::new(s).map_err(|e| Fail(RpStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    });
    if status != RpStatus::Ok {
        return status;
    }
    let status = match verdict {
        Verdict::Stable => RpStatus::Ok,
        Verdict::HypothesesNotMet => RpStatus::HypothesesNotMet,
        Verdict::Growing | Verdict::Violated => RpStatus::Violated,
    };
    if let Some(r) = reason {
        set_error(r);
    }
    status
}

/// # Safety
/// `s` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
