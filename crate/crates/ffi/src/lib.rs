//! C ABI over reverbkit: model loading and inference, T60 analysis, and a
//! block-streaming convolver.
//!
//! Every function returns an [`RkStatus`]; on failure the message is kept
//! per thread and read with [`rk_last_error`]. Handles are opaque and must
//! be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use reverbkit::acoustics::estimate_t60;
use reverbkit::convolver::{ConvolutionPlan, StreamState};
use reverbkit::dataset::Image;
use reverbkit::dsp::AudioBuffer;
use reverbkit::gan::{infer, GanModel};
use reverbkit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Io = 4,
    Format = 5,
    Untrained = 6,
    Silent = 7,
    InsufficientDecay = 8,
    Numeric = 9,
    /// A Rust panic was caught at the boundary.
    Internal = 10,
}

impl From<&Error> for RkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::EmptyInput(_)
            | Error::InvalidParameter { .. }
            | Error::SampleRateMismatch { .. }
            | Error::NotCola { .. }
            | Error::WrongSpectrogramKind { .. }
            | Error::AlreadyTrimmed { .. }
            | Error::ChannelLayout { .. } => RkStatus::InvalidArgument,
            Error::ShapeMismatch { .. } => RkStatus::ShapeMismatch,
            Error::Io { .. } => RkStatus::Io,
            Error::Format { .. } | Error::Wav(_) | Error::Image(_) => RkStatus::Format,
            Error::Untrained => RkStatus::Untrained,
            Error::Silent => RkStatus::Silent,
            Error::InsufficientDecay { .. } => RkStatus::InsufficientDecay,
            Error::NonFinite(_) | Error::Diverged { .. } => RkStatus::Numeric,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(RkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(RkStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RkStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RkStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RkStatus::Internal
        }
    }
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or valid for `len` writes.
unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn rk_status_name(status: RkStatus) -> *const c_char {
    let s: &'static CStr = match status {
        RkStatus::Ok => c"ok",
        RkStatus::NullPointer => c"null pointer",
        RkStatus::InvalidArgument => c"invalid argument",
        RkStatus::ShapeMismatch => c"shape mismatch",
        RkStatus::Io => c"i/o error",
        RkStatus::Format => c"malformed file",
        RkStatus::Untrained => c"model has not been trained",
        RkStatus::Silent => c"signal is silent",
        RkStatus::InsufficientDecay => c"insufficient decay range",
        RkStatus::Numeric => c"non-finite value",
        RkStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `cap`). Returns the full message length
/// including the terminator, 0 if there is none.
///
/// # Safety
/// `buf` must be null or valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn rk_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// A loaded generator model.
pub struct RkModel {
    inner: GanModel,
}

/// Loads a checkpoint written by the `reverbkit train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_model_load(path: *const c_char, out: *mut *mut RkModel) -> RkStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(RkStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let inner = GanModel::load(path)?;
        *out = Box::into_raw(Box::new(RkModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from [`rk_model_load`], and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn rk_model_free(model: *mut RkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side of the square input images.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_model_image_size(model: *const RkModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.preset.image_size)
}

/// Samples in a generated impulse response.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_model_ir_length(model: *const RkModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.preset.stft.num_samples)
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_model_sample_rate(model: *const RkModel) -> u32 {
    model.as_ref().map_or(0, |m| m.inner.preset.stft.sample_rate)
}

/// Generates an impulse response.
///
/// `rgb` is planar `[3][size][size]` in [0, 1]; `depth` is `[size][size]`
/// in [0, 1] and may be null when `use_depth_override` is set, in which
/// case every depth value is `depth_override`. `out` receives
/// [`rk_model_ir_length`] samples.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn rk_model_infer(
    model: *const RkModel,
    rgb: *const f32,
    depth: *const f32,
    seed: u64,
    use_depth_override: bool,
    depth_override: f32,
    out: *mut f32,
    out_len: usize,
) -> RkStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let s = model.preset.image_size;
        let rgb = Image::new(s, s, 3, slice(rgb, 3 * s * s, "rgb")?.to_vec())?;
        let depth = if depth.is_null() && use_depth_override {
            Image::filled(s, s, 1, 0.0)
        } else {
            Image::new(s, s, 1, slice(depth, s * s, "depth")?.to_vec())?
        };
        let n = model.preset.stft.num_samples;
        if out_len != n {
            return Err(Fail(RkStatus::ShapeMismatch, format!("out_len must be {n}, got {out_len}")));
        }
        let out = slice_mut(out, out_len, "out")?;
        let result = infer(model, &rgb, &depth, seed, use_depth_override.then_some(depth_override))?;
        out.copy_from_slice(result.ir.samples());
        Ok(())
    })
}

/// Broadband T60 of an impulse response, in seconds.
///
/// # Safety
/// `samples` must be valid for `len` reads; `out_t60` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_estimate_t60(samples: *const f32, len: usize, sample_rate: u32, out_t60: *mut f64) -> RkStatus {
    guard(|| {
        if out_t60.is_null() {
            return Err(null("out_t60"));
        }
        let ir = AudioBuffer::new(slice(samples, len, "samples")?.to_vec(), sample_rate)?;
        *out_t60 = estimate_t60(&ir)?.t60;
        Ok(())
    })
}

/// Uniformly partitioned streaming convolver.
pub struct RkConvolver {
    state: StreamState,
}

/// # Safety
/// `ir` must be valid for `ir_len` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_convolver_new(
    ir: *const f32,
    ir_len: usize,
    sample_rate: u32,
    block_size: usize,
    out: *mut *mut RkConvolver,
) -> RkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ir = AudioBuffer::new(slice(ir, ir_len, "ir")?.to_vec(), sample_rate)?;
        let plan = Arc::new(ConvolutionPlan::new(&ir, block_size)?);
        *out = Box::into_raw(Box::new(RkConvolver {
            state: StreamState::new(plan),
        }));
        Ok(())
    })
}

/// # Safety
/// `conv` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_convolver_block_size(conv: *const RkConvolver) -> usize {
    conv.as_ref().map_or(0, |c| c.state.plan().block_size())
}

/// Consumes one block of `len` (= block size) input samples and writes the
/// same number of output samples.
///
/// # Safety
/// `input` and `output` must be valid for `len` elements and must not
/// overlap.
#[no_mangle]
pub unsafe extern "C" fn rk_convolver_process(
    conv: *mut RkConvolver,
    input: *const f32,
    output: *mut f32,
    len: usize,
) -> RkStatus {
    guard(|| {
        let conv = conv.as_mut().ok_or_else(|| null("conv"))?;
        let block = conv.state.process_block(slice(input, len, "input")?)?;
        slice_mut(output, len, "output")?.copy_from_slice(&block);
        Ok(())
    })
}

/// Clears the convolver history.
///
/// # Safety
/// `conv` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_convolver_reset(conv: *mut RkConvolver) -> RkStatus {
    guard(|| {
        conv.as_mut().ok_or_else(|| null("conv"))?.state.reset();
        Ok(())
    })
}

/// # Safety
/// `conv` must be null or come from [`rk_convolver_new`], and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn rk_convolver_free(conv: *mut RkConvolver) {
    if !conv.is_null() {
        drop(Box::from_raw(conv));
    }
}
