//! C ABI: opaque instance handles, integer error codes, caller-owned output
//! buffers. See include/netcontest.h for the matching declarations.

use std::ffi::{c_char, c_double, c_int, CStr};
use std::ptr;

use netcontest::equilibrium::solve_equilibrium;
use netcontest::error::Error;
use netcontest::instance::ContestInstance;
use netcontest::transfer::transfer_derivative;

pub const NC_OK: c_int = 0;
pub const NC_ERR_PARSE: c_int = 1;
pub const NC_ERR_VALIDATION: c_int = 2;
pub const NC_ERR_CONVERGENCE: c_int = 3;
pub const NC_ERR_SINGULAR: c_int = 4;
pub const NC_ERR_INDEX: c_int = 5;
pub const NC_ERR_NULL: c_int = 6;
pub const NC_ERR_OTHER: c_int = 7;

/// Opaque handle; only ever passed back through this API.
pub struct NcInstance {
    inner: ContestInstance,
}

fn code_of(e: &Error) -> c_int {
    match e {
        Error::Parse(_) => NC_ERR_PARSE,
        Error::Validation(_) | Error::Domain(_) | Error::Shape(_) => NC_ERR_VALIDATION,
        Error::Convergence { .. } | Error::SearchExhausted(_) => NC_ERR_CONVERGENCE,
        Error::SingularSystem(_) => NC_ERR_SINGULAR,
        Error::Index(_) => NC_ERR_INDEX,
        _ => NC_ERR_OTHER,
    }
}

/// Parse an instance from UTF-8 JSON. On success *out receives an owned
/// handle which must be released with nc_instance_free.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn nc_instance_parse(
    json: *const c_char,
    out: *mut *mut NcInstance,
) -> c_int {
    if json.is_null() || out.is_null() {
        return NC_ERR_NULL;
    }
    *out = ptr::null_mut();
    let Ok(text) = CStr::from_ptr(json).to_str() else {
        return NC_ERR_PARSE;
    };
    match ContestInstance::from_json(text) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(NcInstance { inner }));
            NC_OK
        }
        Err(e) => code_of(&e),
    }
}

/// # Safety
/// `handle` must be null or a pointer previously returned by
/// nc_instance_parse that has not yet been freed.
#[no_mangle]
pub unsafe extern "C" fn nc_instance_free(handle: *mut NcInstance) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of players, or -1 on a null handle.
///
/// # Safety
/// `handle` must be a live handle from nc_instance_parse.
#[no_mangle]
pub unsafe extern "C" fn nc_instance_players(handle: *const NcInstance) -> c_int {
    if handle.is_null() {
        return -1;
    }
    (*handle).inner.n() as c_int
}

/// Solve the equilibrium; writes n payoffs and n lambda values into the
/// caller buffers (either may be null to skip). `len` is the buffer capacity.
///
/// # Safety
/// `handle` must be live; non-null buffers must hold at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nc_solve(
    handle: *const NcInstance,
    payoffs: *mut c_double,
    lambda: *mut c_double,
    len: usize,
) -> c_int {
    if handle.is_null() {
        return NC_ERR_NULL;
    }
    let inst = &(*handle).inner;
    if (!payoffs.is_null() || !lambda.is_null()) && len < inst.n() {
        return NC_ERR_VALIDATION;
    }
    match solve_equilibrium(inst) {
        Ok(sol) => {
            if !payoffs.is_null() {
                ptr::copy_nonoverlapping(sol.payoffs.as_ptr(), payoffs, inst.n());
            }
            if !lambda.is_null() {
                ptr::copy_nonoverlapping(sol.lambda.as_ptr(), lambda, inst.n());
            }
            NC_OK
        }
        Err(e) => code_of(&e),
    }
}

/// Payoff derivatives at tau = 0 for the transfer a -> b.
///
/// # Safety
/// `handle` must be live; `d_u_a` and `d_u_b` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn nc_transfer_derivative(
    handle: *const NcInstance,
    a: usize,
    b: usize,
    d_u_a: *mut c_double,
    d_u_b: *mut c_double,
) -> c_int {
    if handle.is_null() || d_u_a.is_null() || d_u_b.is_null() {
        return NC_ERR_NULL;
    }
    match transfer_derivative(&(*handle).inner, a, b, 1e-12) {
        Ok(s) => {
            *d_u_a = s.d_u_a;
            *d_u_b = s.d_u_b;
            NC_OK
        }
        Err(e) => code_of(&e),
    }
}

/// Static description of an error code.
#[no_mangle]
pub extern "C" fn nc_error_message(code: c_int) -> *const c_char {
    let msg: &'static [u8] = match code {
        NC_OK => b"ok\0",
        NC_ERR_PARSE => b"malformed instance JSON\0",
        NC_ERR_VALIDATION => b"instance or argument validation failed\0",
        NC_ERR_CONVERGENCE => b"solver did not converge\0",
        NC_ERR_SINGULAR => b"linear system numerically singular\0",
        NC_ERR_INDEX => b"player index out of range\0",
        NC_ERR_NULL => b"null pointer argument\0",
        _ => b"unknown error\0",
    };
    msg.as_ptr() as *const c_char
}
