//! C ABI for latent-steer.
//!
//! Objects cross the boundary as opaque handles created by `ls_*_new`,
//! `ls_*_load` or `ls_*_fit` and released with the matching `ls_*_free`.
//! Every function returns an [`LsStatus`]; on failure a message is
//! available from [`ls_last_error_message`] on the same thread. Arrays are
//! caller-owned and passed with explicit lengths. Matrices are column-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use latent_steer::linalg::{AttributeVector, LatentVector};
use latent_steer::pipeline::{demo_world, fit_world_axes};
use latent_steer::steering::{steer, AttributeOracle, ImageEmbedding, NormalizationMode};
use latent_steer::text::{classify_text, AttributeLexicon};
use latent_steer::ttfx::{load_world, world_to_ttfx, AxesArtifact};
use latent_steer::world::{encode, make_world, SyntheticWorld, WorldSpec};
use latent_steer::{AblationGroup, Error, ErrorClass, SteeringConfig, TextEmbedding};

/// Result of every call. Codes 2-5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    Validation = 2,
    Io = 3,
    Numerical = 4,
    EmptySpecification = 5,
    NullPointer = 6,
    BufferSize = 7,
    Panic = 8,
}

impl From<&Error> for LsStatus {
    fn from(e: &Error) -> Self {
        match e.class() {
            ErrorClass::Validation => Self::Validation,
            ErrorClass::Io => Self::Io,
            ErrorClass::Numerical => Self::Numerical,
            ErrorClass::EmptySpecification => Self::EmptySpecification,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsNormalization {
    StrictUnitL1 = 0,
    PreserveInitialL1 = 1,
}

/// Mirror of the steering configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsSteeringConfig {
    pub step_size: f64,
    pub enable_differentiation: bool,
    pub enable_reweight: bool,
    pub enable_normalization: bool,
    pub enable_feature_lock: bool,
    pub normalization: LsNormalization,
}

impl From<SteeringConfig> for LsSteeringConfig {
    fn from(c: SteeringConfig) -> Self {
        Self {
            step_size: c.step_size,
            enable_differentiation: c.enable_differentiation,
            enable_reweight: c.enable_reweight,
            enable_normalization: c.enable_normalization,
            enable_feature_lock: c.enable_feature_lock,
            normalization: match c.normalization_mode {
                NormalizationMode::StrictUnitL1 => LsNormalization::StrictUnitL1,
                NormalizationMode::PreserveInitialL1 => LsNormalization::PreserveInitialL1,
            },
        }
    }
}

impl From<LsSteeringConfig> for SteeringConfig {
    fn from(c: LsSteeringConfig) -> Self {
        Self {
            step_size: c.step_size,
            enable_differentiation: c.enable_differentiation,
            enable_reweight: c.enable_reweight,
            enable_normalization: c.enable_normalization,
            enable_feature_lock: c.enable_feature_lock,
            normalization_mode: match c.normalization {
                LsNormalization::StrictUnitL1 => NormalizationMode::StrictUnitL1,
                LsNormalization::PreserveInitialL1 => NormalizationMode::PreserveInitialL1,
            },
        }
    }
}

/// Synthetic world (attribute oracle). Opaque.
pub struct LsWorld {
    inner: SyntheticWorld,
}

/// Fitted raw and orthonormal axes. Opaque.
pub struct LsAxes {
    inner: AxesArtifact,
}

/// Attribute lexicon. Opaque.
pub struct LsLexicon {
    inner: AttributeLexicon,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(LsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(LsStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LsStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            LsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LsStatus::Validation, "path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), Failure> {
    if expected == got {
        Ok(())
    } else {
        Err(Failure(
            LsStatus::BufferSize,
            format!("`{what}` has length {got}, expected {expected}"),
        ))
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL. The
/// pointer stays valid until the next `ls_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Unbiased, noiseless world over the first `n_attr` CelebA attributes.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ls_world_new(
    d_z: usize,
    n_attr: usize,
    rho: f64,
    kappa: f64,
    seed: u64,
    out: *mut *mut LsWorld,
) -> LsStatus {
    guard(|| {
        let mut spec = WorldSpec::new(d_z, n_attr, rho, seed)?;
        spec.kappa = kappa;
        put(
            out,
            LsWorld {
                inner: make_world(spec)?,
            },
        )
    })
}

/// The shipped demo world (d_z = 8 over Male, Smiling, Young).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ls_world_demo(out: *mut *mut LsWorld) -> LsStatus {
    guard(|| put(out, LsWorld { inner: demo_world()? }))
}

/// # Safety
/// `file` must be a NUL-terminated path; `out` as for [`ls_world_new`].
#[no_mangle]
pub unsafe extern "C" fn ls_world_load(file: *const c_char, out: *mut *mut LsWorld) -> LsStatus {
    guard(|| {
        put(
            out,
            LsWorld {
                inner: load_world(path(file)?)?,
            },
        )
    })
}

/// # Safety
/// `world` must be a live handle; `file` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn ls_world_save(world: *const LsWorld, file: *const c_char) -> LsStatus {
    guard(|| {
        let w = as_ref(world, "world")?;
        Ok(world_to_ttfx(&w.inner).write(path(file)?)?)
    })
}

/// # Safety
/// `world` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_world_free(world: *mut LsWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// # Safety
/// `world` must be a live handle; `d_z` and `n_attr` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_world_dims(world: *const LsWorld, d_z: *mut usize, n_attr: *mut usize) -> LsStatus {
    guard(|| {
        let spec = as_ref(world, "world")?.inner.spec();
        if d_z.is_null() || n_attr.is_null() {
            return Err(null("dims"));
        }
        *d_z = spec.d_z;
        *n_attr = spec.n_attr;
        Ok(())
    })
}

/// Attribute probabilities at `z` (length d_z) into `out` (length n_attr).
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ls_world_encode(
    world: *const LsWorld,
    z: *const f64,
    z_len: usize,
    out: *mut f64,
    out_len: usize,
) -> LsStatus {
    guard(|| {
        let w = &as_ref(world, "world")?.inner;
        check_len("z", w.spec().d_z, z_len)?;
        check_len("out", w.spec().n_attr, out_len)?;
        let z = LatentVector::new(slice(z, z_len, "z")?.to_vec())?;
        let p = encode(w, &z)?;
        slice_mut(out, out_len, "out")?.copy_from_slice(p.values());
        Ok(())
    })
}

/// Samples `n` labelled latents from `world` and fits its axes.
///
/// # Safety
/// `world` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_axes_fit(
    world: *const LsWorld,
    n: usize,
    ridge: f64,
    seed: u64,
    out: *mut *mut LsAxes,
) -> LsStatus {
    guard(|| {
        let w = &as_ref(world, "world")?.inner;
        let axes = fit_world_axes(w, n, ridge, seed)?;
        put(
            out,
            LsAxes {
                inner: AxesArtifact {
                    axes,
                    attributes: w.attributes().clone(),
                },
            },
        )
    })
}

/// # Safety
/// `file` must be a NUL-terminated path; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_axes_load(file: *const c_char, out: *mut *mut LsAxes) -> LsStatus {
    guard(|| {
        put(
            out,
            LsAxes {
                inner: AxesArtifact::load(path(file)?)?,
            },
        )
    })
}

/// # Safety
/// `axes` must be a live handle; `file` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn ls_axes_save(axes: *const LsAxes, file: *const c_char) -> LsStatus {
    guard(|| {
        let a = as_ref(axes, "axes")?;
        Ok(a.inner.to_ttfx().write(path(file)?)?)
    })
}

/// # Safety
/// `axes` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_axes_free(axes: *mut LsAxes) {
    if !axes.is_null() {
        drop(Box::from_raw(axes));
    }
}

/// Copies the orthonormal basis (d_z × n_attr, column-major) into `out`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ls_axes_basis(axes: *const LsAxes, out: *mut f64, len: usize) -> LsStatus {
    guard(|| {
        let m = as_ref(axes, "axes")?.inner.axes.basis.matrix();
        check_len("out", m.as_col_major().len(), len)?;
        slice_mut(out, len, "out")?.copy_from_slice(m.as_col_major());
        Ok(())
    })
}

/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_lexicon_default(out: *mut *mut LsLexicon) -> LsStatus {
    guard(|| {
        put(
            out,
            LsLexicon {
                inner: AttributeLexicon::default_lexicon(),
            },
        )
    })
}

/// # Safety
/// `file` must be a NUL-terminated path; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_lexicon_load(file: *const c_char, out: *mut *mut LsLexicon) -> LsStatus {
    guard(|| {
        put(
            out,
            LsLexicon {
                inner: AttributeLexicon::load(path(file)?)?,
            },
        )
    })
}

/// # Safety
/// `lexicon` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_lexicon_free(lexicon: *mut LsLexicon) {
    if !lexicon.is_null() {
        drop(Box::from_raw(lexicon));
    }
}

/// Classifies UTF-8 `text` into 40 CelebA targets. `values` and `mask`
/// must both have length 40.
///
/// # Safety
/// `text` must be NUL-terminated; arrays must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn ls_classify(
    lexicon: *const LsLexicon,
    text: *const c_char,
    values: *mut f64,
    mask: *mut bool,
    len: usize,
) -> LsStatus {
    guard(|| {
        let lex = &as_ref(lexicon, "lexicon")?.inner;
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|_| Failure(LsStatus::Validation, "text is not valid UTF-8".into()))?;
        check_len("values", latent_steer::attributes::CELEBA_ATTRIBUTES.len(), len)?;
        let e = classify_text(text, lex).embedding;
        slice_mut(values, len, "values")?.copy_from_slice(e.values());
        slice_mut(mask, len, "mask")?.copy_from_slice(e.mask());
        Ok(())
    })
}

/// Preset for ablation group 'A'..'E' (case-insensitive).
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_config_for_group(group: c_char, out: *mut LsSteeringConfig) -> LsStatus {
    guard(|| {
        let g: AblationGroup = (group as u8 as char).to_string().parse()?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = g.config().into();
        Ok(())
    })
}

/// Steers `z` (length d_z) toward `trg_values`/`trg_mask` (length n_attr)
/// and writes the result to `out_z`.
///
/// `org` is the attribute prediction at `z`; pass NULL to have `world`
/// compute it. `world` may be NULL when `org` is given. `moves`, when not
/// NULL, receives the number of moves applied.
///
/// # Safety
/// Handles must be live; arrays must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ls_steer(
    axes: *const LsAxes,
    world: *const LsWorld,
    config: *const LsSteeringConfig,
    z: *const f64,
    d_z: usize,
    trg_values: *const f64,
    trg_mask: *const bool,
    org: *const f64,
    n_attr: usize,
    out_z: *mut f64,
    moves: *mut usize,
) -> LsStatus {
    guard(|| {
        let axes = &as_ref(axes, "axes")?.inner.axes;
        let config: SteeringConfig = (*as_ref(config, "config")?).into();
        let world = world.as_ref().map(|w| &w.inner);
        check_len("z", axes.latent_dim(), d_z)?;
        check_len("trg", axes.attr_count(), n_attr)?;
        let z = LatentVector::new(slice(z, d_z, "z")?.to_vec())?;
        let trg = TextEmbedding::new(
            AttributeVector::new(slice(trg_values, n_attr, "trg_values")?.to_vec())?,
            slice(trg_mask, n_attr, "trg_mask")?.to_vec(),
        )?;
        let org = match (org.is_null(), world) {
            (false, _) => ImageEmbedding::new(slice(org, n_attr, "org")?.to_vec())?,
            (true, Some(w)) => encode(w, &z)?,
            (true, None) => return Err(null("org and world")),
        };
        let oracle = world.map(|w| w as &dyn AttributeOracle);
        let (steered, trace) = steer(&z, &trg, &org, axes, &config, oracle)?;
        slice_mut(out_z, d_z, "out_z")?.copy_from_slice(steered.as_slice());
        if !moves.is_null() {
            *moves = trace.entries.len();
        }
        Ok(())
    })
}
