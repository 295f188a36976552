//! C ABI over the adversarial-game library.
//!
//! Models travel as opaque handles created from checkpoint files; every
//! fallible call returns an [`AdvStatus`] and leaves a message for
//! [`advgame_last_error`]. Buffers are caller-allocated: pass the expected
//! length and the call fails with `INVALID_ARGUMENT` on any mismatch.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use advgame::attacks::{fgsm, pgd, PgdConfig};
use advgame::checkpoint;
use advgame::losses::{BaseLoss, Target};
use advgame::models::{adversarial_example, AttackModel, DefenseNet, LpConstraint, LpNorm, TaskKind};
use advgame::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numeric = 5,
}

/// Norm selector for attack budgets.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvNorm {
    L1 = 1,
    L2 = 2,
    LInf = 3,
}

impl From<AdvNorm> for LpNorm {
    fn from(n: AdvNorm) -> LpNorm {
        match n {
            AdvNorm::L1 => LpNorm::One,
            AdvNorm::L2 => LpNorm::Two,
            AdvNorm::LInf => LpNorm::Inf,
        }
    }
}

/// Opaque defense-model handle.
pub struct AdvDefense {
    model: DefenseNet,
}

/// Opaque attack-network handle.
pub struct AdvAttack {
    model: AttackModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new("").unwrap());
}

fn fail(status: AdvStatus, message: impl Into<Vec<u8>>) -> AdvStatus {
    let text = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
    status
}

fn fail_with(err: Error) -> AdvStatus {
    let status = match &err {
        Error::Io(_) => AdvStatus::Io,
        Error::Parse(_) => AdvStatus::Parse,
        Error::Numeric(_) => AdvStatus::Numeric,
        Error::Shape { .. } | Error::State(_) | Error::Config(_) => AdvStatus::InvalidArgument,
    };
    fail(status, err.to_string())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn advgame_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn advgame_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn path_from(ptr: *const c_char) -> Result<String, AdvStatus> {
    if ptr.is_null() {
        return Err(fail(AdvStatus::NullPointer, "path is null"));
    }
    // SAFETY: caller guarantees `ptr` is a valid NUL-terminated string.
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(s.to_owned()),
        Err(_) => Err(fail(AdvStatus::InvalidArgument, "path is not valid UTF-8")),
    }
}

unsafe fn slice_from<'a>(ptr: *const f64, len: usize) -> Result<&'a [f64], AdvStatus> {
    if ptr.is_null() {
        return Err(fail(AdvStatus::NullPointer, "buffer is null"));
    }
    // SAFETY: caller guarantees `ptr` points to at least `len` readable f64.
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

unsafe fn slice_from_mut<'a>(ptr: *mut f64, len: usize) -> Result<&'a mut [f64], AdvStatus> {
    if ptr.is_null() {
        return Err(fail(AdvStatus::NullPointer, "output buffer is null"));
    }
    // SAFETY: caller guarantees `ptr` points to at least `len` writable f64.
    Ok(unsafe { std::slice::from_raw_parts_mut(ptr, len) })
}

fn target_for(task: TaskKind, label: i64, target_value: f64) -> Result<Target, AdvStatus> {
    match task {
        TaskKind::Classification { classes } => {
            if label < 0 || label as usize >= classes {
                return Err(fail(
                    AdvStatus::InvalidArgument,
                    format!("label {label} out of range for {classes} classes"),
                ));
            }
            Ok(Target::Class(label as usize))
        }
        TaskKind::Regression => Ok(Target::Real(target_value)),
    }
}

/// Load a defense checkpoint (`advgame-defense` JSON) into a new handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
/// A handle returned through `out` must be released with
/// [`advgame_defense_free`].
#[no_mangle]
pub unsafe extern "C" fn advgame_defense_load(
    path: *const c_char,
    out: *mut *mut AdvDefense,
) -> AdvStatus {
    clear_error();
    if out.is_null() {
        return fail(AdvStatus::NullPointer, "output handle is null");
    }
    let path = match unsafe { path_from(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match checkpoint::load_defense(&path) {
        Ok((model, _)) => {
            // SAFETY: `out` is valid per the contract above.
            unsafe { *out = Box::into_raw(Box::new(AdvDefense { model })) };
            AdvStatus::Ok
        }
        Err(err) => fail_with(err),
    }
}

/// Release a defense handle. Passing NULL is a no-op.
///
/// # Safety
/// `handle` must have come from [`advgame_defense_load`] and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn advgame_defense_free(handle: *mut AdvDefense) {
    if !handle.is_null() {
        // SAFETY: caller guarantees ownership transfer back to Rust.
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Input dimension of a defense model; 0 for a NULL handle.
///
/// # Safety
/// `handle` must be NULL or a live defense handle.
#[no_mangle]
pub unsafe extern "C" fn advgame_defense_input_dim(handle: *const AdvDefense) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.model.input_dim()
}

/// Output dimension (class count, or 1 for regression); 0 for NULL.
///
/// # Safety
/// `handle` must be NULL or a live defense handle.
#[no_mangle]
pub unsafe extern "C" fn advgame_defense_output_dim(handle: *const AdvDefense) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.model.net().output_dim()
}

/// Evaluate the defense on one point, writing logits (or the regression
/// prediction) into `out`.
///
/// # Safety
/// `x` must hold `x_len` readable f64, `out` must hold `out_len` writable
/// f64, and `handle` must be a live defense handle.
#[no_mangle]
pub unsafe extern "C" fn advgame_defense_predict(
    handle: *const AdvDefense,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> AdvStatus {
    clear_error();
    if handle.is_null() {
        return fail(AdvStatus::NullPointer, "defense handle is null");
    }
    let defense = &unsafe { &*handle }.model;
    let x = match unsafe { slice_from(x, x_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let out = match unsafe { slice_from_mut(out, out_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    if x_len != defense.input_dim() || out_len != defense.net().output_dim() {
        return fail(
            AdvStatus::InvalidArgument,
            format!(
                "expected input {} / output {}, got {x_len} / {out_len}",
                defense.input_dim(),
                defense.net().output_dim()
            ),
        );
    }
    match defense.output(x) {
        Ok(values) => {
            out.copy_from_slice(&values);
            AdvStatus::Ok
        }
        Err(err) => fail_with(err),
    }
}

/// Predicted class index (classification models only).
///
/// # Safety
/// As [`advgame_defense_predict`]; `out_class` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn advgame_defense_predict_class(
    handle: *const AdvDefense,
    x: *const f64,
    x_len: usize,
    out_class: *mut usize,
) -> AdvStatus {
    clear_error();
    if handle.is_null() || out_class.is_null() {
        return fail(AdvStatus::NullPointer, "null handle or output");
    }
    let defense = &unsafe { &*handle }.model;
    let x = match unsafe { slice_from(x, x_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    if x_len != defense.input_dim() {
        return fail(AdvStatus::InvalidArgument, "input dimension mismatch");
    }
    match defense.predict_class(x) {
        Ok(class) => {
            unsafe { *out_class = class };
            AdvStatus::Ok
        }
        Err(err) => fail_with(err),
    }
}

/// Load an attack-network checkpoint (`advgame-attack` JSON).
///
/// # Safety
/// As [`advgame_defense_load`]; release with [`advgame_attack_free`].
#[no_mangle]
pub unsafe extern "C" fn advgame_attack_load(
    path: *const c_char,
    out: *mut *mut AdvAttack,
) -> AdvStatus {
    clear_error();
    if out.is_null() {
        return fail(AdvStatus::NullPointer, "output handle is null");
    }
    let path = match unsafe { path_from(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match checkpoint::load_attack(&path) {
        Ok((model, _)) => {
            unsafe { *out = Box::into_raw(Box::new(AdvAttack { model })) };
            AdvStatus::Ok
        }
        Err(err) => fail_with(err),
    }
}

/// Release an attack handle. Passing NULL is a no-op.
///
/// # Safety
/// `handle` must have come from [`advgame_attack_load`] and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn advgame_attack_free(handle: *mut AdvAttack) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Input dimension of the attack network; 0 for NULL.
///
/// # Safety
/// `handle` must be NULL or a live attack handle.
#[no_mangle]
pub unsafe extern "C" fn advgame_attack_input_dim(handle: *const AdvAttack) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.model.input_dim()
}

/// Class count of the attack network, or -1 for regression attacks.
///
/// # Safety
/// `handle` must be NULL or a live attack handle.
#[no_mangle]
pub unsafe extern "C" fn advgame_attack_classes(handle: *const AdvAttack) -> i64 {
    if handle.is_null() {
        return 0;
    }
    match unsafe { &*handle }.model.task() {
        TaskKind::Classification { classes } => classes as i64,
        TaskKind::Regression => -1,
    }
}

/// The trained perturbation `lambda(x, label)`, forward-only (semi-white
/// box). For regression attacks the label is ignored.
///
/// # Safety
/// Buffer contracts as in [`advgame_defense_predict`].
#[no_mangle]
pub unsafe extern "C" fn advgame_attack_perturbation(
    handle: *const AdvAttack,
    x: *const f64,
    x_len: usize,
    label: i64,
    out: *mut f64,
    out_len: usize,
) -> AdvStatus {
    clear_error();
    if handle.is_null() {
        return fail(AdvStatus::NullPointer, "attack handle is null");
    }
    let attack = &unsafe { &*handle }.model;
    let x = match unsafe { slice_from(x, x_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let out = match unsafe { slice_from_mut(out, out_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    if x_len != attack.input_dim() || out_len != attack.input_dim() {
        return fail(AdvStatus::InvalidArgument, "dimension mismatch");
    }
    let target = match target_for(attack.task(), label, 0.0) {
        Ok(t) => t,
        Err(status) => return status,
    };
    match attack.forward(x, &target) {
        Ok(lambda) => {
            out.copy_from_slice(&lambda);
            AdvStatus::Ok
        }
        Err(err) => fail_with(err),
    }
}

/// `x + lambda(x, label)`, optionally clipped back into the unit cube.
///
/// # Safety
/// Buffer contracts as in [`advgame_defense_predict`].
#[no_mangle]
pub unsafe extern "C" fn advgame_adversarial_example(
    handle: *const AdvAttack,
    x: *const f64,
    x_len: usize,
    label: i64,
    clip_input: bool,
    out: *mut f64,
    out_len: usize,
) -> AdvStatus {
    clear_error();
    if handle.is_null() {
        return fail(AdvStatus::NullPointer, "attack handle is null");
    }
    let attack = &unsafe { &*handle }.model;
    let x = match unsafe { slice_from(x, x_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let out = match unsafe { slice_from_mut(out, out_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    if x_len != attack.input_dim() || out_len != attack.input_dim() {
        return fail(AdvStatus::InvalidArgument, "dimension mismatch");
    }
    let target = match target_for(attack.task(), label, 0.0) {
        Ok(t) => t,
        Err(status) => return status,
    };
    match adversarial_example(attack, x, &target, clip_input) {
        Ok(adv) => {
            out.copy_from_slice(&adv);
            AdvStatus::Ok
        }
        Err(err) => fail_with(err),
    }
}

/// Single-step signed-gradient attack against a defense (linf budget).
/// `label` selects the class for classification models; `target_value`
/// supplies the regression target.
///
/// # Safety
/// Buffer contracts as in [`advgame_defense_predict`].
#[no_mangle]
pub unsafe extern "C" fn advgame_fgsm(
    handle: *const AdvDefense,
    x: *const f64,
    x_len: usize,
    label: i64,
    target_value: f64,
    delta: f64,
    out: *mut f64,
    out_len: usize,
) -> AdvStatus {
    clear_error();
    if handle.is_null() {
        return fail(AdvStatus::NullPointer, "defense handle is null");
    }
    let defense = &unsafe { &*handle }.model;
    let x = match unsafe { slice_from(x, x_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let out = match unsafe { slice_from_mut(out, out_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    if x_len != defense.input_dim() || out_len != defense.input_dim() {
        return fail(AdvStatus::InvalidArgument, "dimension mismatch");
    }
    let constraint = match LpConstraint::new(LpNorm::Inf, delta) {
        Ok(c) => c,
        Err(err) => return fail_with(err),
    };
    let (base, target) = match defense.task() {
        TaskKind::Classification { .. } => (
            BaseLoss::CrossEntropy,
            match target_for(defense.task(), label, target_value) {
                Ok(t) => t,
                Err(status) => return status,
            },
        ),
        TaskKind::Regression => (BaseLoss::MeanSquaredError, Target::Real(target_value)),
    };
    match fgsm(defense, base, x, &target, &constraint) {
        Ok(adv) => {
            out.copy_from_slice(&adv);
            AdvStatus::Ok
        }
        Err(err) => fail_with(err),
    }
}

/// Multi-restart projected-gradient attack against a defense.
///
/// # Safety
/// Buffer contracts as in [`advgame_defense_predict`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn advgame_pgd(
    handle: *const AdvDefense,
    x: *const f64,
    x_len: usize,
    label: i64,
    target_value: f64,
    norm: AdvNorm,
    delta: f64,
    gamma: f64,
    steps: usize,
    restarts: usize,
    early_stop: bool,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> AdvStatus {
    clear_error();
    if handle.is_null() {
        return fail(AdvStatus::NullPointer, "defense handle is null");
    }
    let defense = &unsafe { &*handle }.model;
    let x = match unsafe { slice_from(x, x_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let out = match unsafe { slice_from_mut(out, out_len) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    if x_len != defense.input_dim() || out_len != defense.input_dim() {
        return fail(AdvStatus::InvalidArgument, "dimension mismatch");
    }
    let constraint = match LpConstraint::new(norm.into(), delta) {
        Ok(c) => c,
        Err(err) => return fail_with(err),
    };
    let mut cfg = match PgdConfig::new(constraint, gamma, steps, restarts) {
        Ok(c) => c,
        Err(err) => return fail_with(err),
    };
    cfg.early_stop_on_misclassify = early_stop;
    cfg.seed = seed;
    let (base, target) = match defense.task() {
        TaskKind::Classification { .. } => (
            BaseLoss::CrossEntropy,
            match target_for(defense.task(), label, target_value) {
                Ok(t) => t,
                Err(status) => return status,
            },
        ),
        TaskKind::Regression => (BaseLoss::MeanSquaredError, Target::Real(target_value)),
    };
    match pgd(defense, base, x, &target, &cfg) {
        Ok(adv) => {
            out.copy_from_slice(&adv);
            AdvStatus::Ok
        }
        Err(err) => fail_with(err),
    }
}
