//! C ABI over the bridgecat library.
//!
//! Every fallible call returns a `BcStatus`; on failure the message is
//! available from `bc_last_error_message` on the same thread. Handles are
//! opaque, created by `*_read`/`*_load`/`*_parse` and released with the
//! matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use bridgecat::bridge::{generate, BridgeSchedule, SamplerConfig};
use bridgecat::geometry::xyz::{format_structure, parse_structure, read_structure, write_structure};
use bridgecat::geometry::{Structure, Vec3};
use bridgecat::metrics::dmae;
use bridgecat::nn::DenoiserModel;
use bridgecat::screening::{oracle_relax, SurrogateOracle};
use bridgecat::train::load_checkpoint;
use bridgecat::Error;

/// Call outcome.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Checkpoint = 5,
    Data = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Periodic slab structure.
pub struct BcStructure(Structure);

/// Denoiser with its bridge schedule.
pub struct BcModel {
    model: DenoiserModel,
    schedule: BridgeSchedule,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BcStatus {
    match e {
        Error::Parse { .. } | Error::UnknownSymbol(_) | Error::BulkPeriodicity | Error::Json(_) => BcStatus::Parse,
        Error::Io(_) => BcStatus::Io,
        Error::Checkpoint(_) => BcStatus::Checkpoint,
        Error::InvalidArgument(_) | Error::Config(_) => BcStatus::InvalidArgument,
        _ => BcStatus::Data,
    }
}

struct Failure(BcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BcStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BcStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    Ok(PathBuf::from(str_arg(p, what)?))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(BcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_structure_read(path: *const c_char, out: *mut *mut BcStructure) -> BcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let s = read_structure(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(BcStructure(s)));
        Ok(())
    })
}

/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_structure_parse(text: *const c_char, out: *mut *mut BcStructure) -> BcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let s = parse_structure(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(BcStructure(s)));
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bc_structure_write(s: *const BcStructure, path: *const c_char) -> BcStatus {
    guard(|| {
        write_structure(path_arg(path, "path")?, &handle(s, "structure")?.0)?;
        Ok(())
    })
}

/// Serialise into `buf` (capacity `len` bytes, NUL included). `needed`
/// receives the required capacity; `BufferTooSmall` when `len` is short.
///
/// # Safety
/// `s` must be a live handle, `buf` writable for `len` bytes (or null with
/// `len` 0) and `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_structure_format(
    s: *const BcStructure,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> BcStatus {
    guard(|| {
        let text = format_structure(&handle(s, "structure")?.0)?;
        let needed = out_ptr(needed, "needed")?;
        *needed = text.len() + 1;
        if len < text.len() + 1 {
            return Err(Failure(
                BcStatus::BufferTooSmall,
                format!("need {} bytes", text.len() + 1),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bc_structure_free(s: *mut BcStructure) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle and `n` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_structure_atom_count(s: *const BcStructure, n: *mut usize) -> BcStatus {
    guard(|| {
        *out_ptr(n, "n")? = handle(s, "structure")?.0.len();
        Ok(())
    })
}

/// Copy Cartesian positions (Å) as x0 y0 z0 x1 … into `buf` of `len`
/// doubles; `len` must be at least 3·N.
///
/// # Safety
/// `s` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bc_structure_positions(s: *const BcStructure, buf: *mut f64, len: usize) -> BcStatus {
    guard(|| {
        let s = &handle(s, "structure")?.0;
        if len < 3 * s.len() {
            return Err(Failure(
                BcStatus::BufferTooSmall,
                format!("need {} doubles", 3 * s.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let out = std::slice::from_raw_parts_mut(buf, 3 * s.len());
        for (i, p) in s.positions.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(&[p.x, p.y, p.z]);
        }
        Ok(())
    })
}

/// Replace positions from `len` = 3·N doubles.
///
/// # Safety
/// `s` must be a live handle and `buf` readable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bc_structure_set_positions(s: *mut BcStructure, buf: *const f64, len: usize) -> BcStatus {
    guard(|| {
        let s = &mut s.as_mut().ok_or_else(|| null("structure"))?.0;
        if len != 3 * s.len() {
            return Err(Failure(
                BcStatus::InvalidArgument,
                format!("expected {} doubles, got {len}", 3 * s.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = std::slice::from_raw_parts(buf, len);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Failure(BcStatus::InvalidArgument, "positions must be finite".into()));
        }
        s.positions = v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        Ok(())
    })
}

/// Distance-matrix mean absolute error between two structures (Å).
///
/// # Safety
/// `a`, `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_dmae(a: *const BcStructure, b: *const BcStructure, out: *mut f64) -> BcStatus {
    guard(|| {
        *out_ptr(out, "out")? = dmae(&handle(a, "a")?.0, &handle(b, "b")?.0)?;
        Ok(())
    })
}

/// Load a checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_model_load(path: *const c_char, out: *mut *mut BcModel) -> BcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let ckpt = load_checkpoint(path_arg(path, "path")?)?;
        let schedule = BridgeSchedule::from_descriptor(&ckpt.schedule)?;
        let model = DenoiserModel::from_parts(ckpt.config, ckpt.params)?;
        *out = Box::into_raw(Box::new(BcModel { model, schedule }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bc_model_free(m: *mut BcModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Run the reverse bridge from `initial`; `steps` sampling steps, noise
/// scale `eta` in [0, 1], random stream `seed`.
///
/// # Safety
/// `m`, `initial` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_generate(
    m: *const BcModel,
    initial: *const BcStructure,
    steps: usize,
    eta: f64,
    seed: u64,
    out: *mut *mut BcStructure,
) -> BcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let m = handle(m, "model")?;
        let sampler = SamplerConfig {
            sample_steps: steps,
            eta,
            seed,
            ..SamplerConfig::default()
        };
        let g = generate(&handle(initial, "initial")?.0, &m.model, &m.schedule, &sampler)?;
        *out = Box::into_raw(Box::new(BcStructure(g)));
        Ok(())
    })
}

/// Classifier confidence in (0, 1).
///
/// # Safety
/// `m`, `s` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_confidence(m: *const BcModel, s: *const BcStructure, out: *mut f64) -> BcStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(m, "model")?
            .model
            .classifier_forward(&handle(s, "structure")?.0)?;
        Ok(())
    })
}

/// Relax with the default surrogate oracle. `steps` and `energy` (eV) may
/// be null.
///
/// # Safety
/// `s` must be a live handle, `out` writable, `steps`/`energy` null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn bc_oracle_relax(
    s: *const BcStructure,
    out: *mut *mut BcStructure,
    steps: *mut usize,
    energy: *mut f64,
) -> BcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let r = oracle_relax(&handle(s, "structure")?.0, &SurrogateOracle::default())?;
        if let Some(p) = steps.as_mut() {
            *p = r.steps;
        }
        if let Some(p) = energy.as_mut() {
            *p = r.energy;
        }
        *out = Box::into_raw(Box::new(BcStructure(r.structure)));
        Ok(())
    })
}
