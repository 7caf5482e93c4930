//! Stream rANS entropy coder behind a flat-buffer C ABI.
//!
//! The arithmetic is byte-identical to the selic package's pure-Python
//! reference coder: 64-bit state starting at 2^32, 16-bit probability
//! precision (tables sum to 65536), 32-bit renormalization words emitted
//! when the state would overflow, and a stream layout of the final state
//! (little-endian u64) followed by the renormalization words in the order
//! the decoder consumes them.
//!
//! Callers pass every table as a slice of one shared cumulative-frequency
//! array: symbol i uses `cdf[offsets[i] .. offsets[i] + lens[i]]`, a
//! non-decreasing sequence from 0 to 65536 (so `lens[i]` is alphabet size
//! plus one). No function panics across the FFI boundary; failures come
//! back as negative status codes and leave output buffers beyond the
//! declared capacity untouched.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};

pub const ABI_VERSION: u32 = 1;

const PRECISION: u32 = 16;
const PROB_SCALE: u32 = 1 << PRECISION;
const STATE_LOWER: u64 = 1 << 32;
const MASK16: u64 = 0xFFFF;

pub const OK: i32 = 0;
/// Null pointer with nonzero length, mismatched array lengths, or a panic.
pub const ERR_ARGS: i32 = -1;
/// A table slice is out of bounds, shorter than 2 entries, does not start
/// at 0 or end at 65536, or decreases somewhere.
pub const ERR_CDF: i32 = -2;
/// A symbol lies outside its table's alphabet or has zero width.
pub const ERR_SYMBOL: i32 = -3;
/// The output buffer capacity is smaller than the encoded stream.
pub const ERR_BUFFER: i32 = -4;
/// The input stream ended before the requested symbol count was decoded.
pub const ERR_TRUNCATED: i32 = -5;

/// Validates each distinct (offset, len) table slice exactly once, with a
/// fast path for the common case of one table coding a long symbol run.
#[derive(Default)]
struct Validator {
    last: Option<(usize, usize)>,
    seen: HashSet<(usize, usize)>,
}

impl Validator {
    fn ensure(&mut self, off: usize, len: usize, cum: &[u32]) -> Result<(), i32> {
        let key = (off, len);
        if self.last == Some(key) {
            return Ok(());
        }
        if !self.seen.contains(&key) {
            if cum[0] != 0 || cum[len - 1] != PROB_SCALE {
                return Err(ERR_CDF);
            }
            if cum.windows(2).any(|w| w[1] < w[0]) {
                return Err(ERR_CDF);
            }
            self.seen.insert(key);
        }
        self.last = Some(key);
        Ok(())
    }
}

fn table<'a>(
    cdf: &'a [u32],
    offsets: &[u64],
    lens: &[u32],
    i: usize,
    validator: &mut Validator,
) -> Result<&'a [u32], i32> {
    let off = usize::try_from(offsets[i]).map_err(|_| ERR_CDF)?;
    let len = lens[i] as usize;
    let end = off.checked_add(len).ok_or(ERR_CDF)?;
    if len < 2 || end > cdf.len() {
        return Err(ERR_CDF);
    }
    let cum = &cdf[off..end];
    validator.ensure(off, len, cum)?;
    Ok(cum)
}

/// Encode `symbols`, the i-th under its table slice; returns the stream.
pub fn encode(
    symbols: &[u32],
    cdf: &[u32],
    offsets: &[u64],
    lens: &[u32],
) -> Result<Vec<u8>, i32> {
    if offsets.len() != symbols.len() || lens.len() != symbols.len() {
        return Err(ERR_ARGS);
    }
    let mut validator = Validator::default();
    let mut x: u64 = STATE_LOWER;
    let mut words: Vec<u32> = Vec::new();
    for i in (0..symbols.len()).rev() {
        let cum = table(cdf, offsets, lens, i, &mut validator)?;
        let s = symbols[i] as usize;
        if s + 1 >= cum.len() {
            return Err(ERR_SYMBOL);
        }
        let lo = cum[s] as u64;
        let f = cum[s + 1] as u64 - lo;
        if f == 0 {
            return Err(ERR_SYMBOL);
        }
        // x >= f << 48 without overflowing u64 at f = 65536.
        if (x >> 48) >= f {
            words.push((x & 0xFFFF_FFFF) as u32);
            x >>= 32;
        }
        x = ((x / f) << PRECISION) | ((x % f) + lo);
    }
    let mut out = Vec::with_capacity(8 + 4 * words.len());
    out.extend_from_slice(&x.to_le_bytes());
    for w in words.iter().rev() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

/// Decode `out.len()` symbols from `data`; inverse of `encode`.
pub fn decode(
    data: &[u8],
    cdf: &[u32],
    offsets: &[u64],
    lens: &[u32],
    out: &mut [u32],
) -> Result<(), i32> {
    if offsets.len() != out.len() || lens.len() != out.len() {
        return Err(ERR_ARGS);
    }
    if data.len() < 8 {
        return Err(ERR_TRUNCATED);
    }
    let mut x = u64::from_le_bytes(data[..8].try_into().unwrap());
    let mut pos = 8usize;
    let mut validator = Validator::default();
    for i in 0..out.len() {
        let cum = table(cdf, offsets, lens, i, &mut validator)?;
        let cv = (x & MASK16) as u32;
        // cum[0] = 0 <= cv and cum[last] = 65536 > cv keep s in bounds.
        let s = cum.partition_point(|&c| c <= cv) - 1;
        let lo = cum[s] as u64;
        let f = cum[s + 1] as u64 - lo;
        x = f * (x >> PRECISION) + cv as u64 - lo;
        if x < STATE_LOWER {
            if pos + 4 > data.len() {
                return Err(ERR_TRUNCATED);
            }
            let w = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap());
            x = (x << 32) | w as u64;
            pos += 4;
        }
        out[i] = s as u32;
    }
    Ok(())
}

/// Borrow a raw array; a null pointer is acceptable only for length zero.
///
/// # Safety
/// `ptr` must reference `len` readable elements when nonnull.
unsafe fn borrow<'a, T>(ptr: *const T, len: usize) -> Result<&'a [T], i32> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(ERR_ARGS);
    }
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

#[no_mangle]
pub extern "C" fn selic_rc_abi_version() -> u32 {
    ABI_VERSION
}

/// Encode `n` symbols into `out` (capacity `cap`), writing the stream
/// length to `out_len`. Returns 0 or a negative status code; on any
/// failure nothing is written to `out`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths (`symbols`,
/// `offsets`, `lens`: `n` elements; `cdf`: `cdf_len`; `out`: `cap` bytes).
#[no_mangle]
pub unsafe extern "C" fn selic_rc_encode(
    symbols: *const u32,
    n: usize,
    cdf: *const u32,
    cdf_len: usize,
    offsets: *const u64,
    lens: *const u32,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> i32 {
    catch_unwind(AssertUnwindSafe(|| {
        if out_len.is_null() {
            return ERR_ARGS;
        }
        let symbols = match unsafe { borrow(symbols, n) } { Ok(v) => v, Err(e) => return e };
        let cdf = match unsafe { borrow(cdf, cdf_len) } { Ok(v) => v, Err(e) => return e };
        let offsets = match unsafe { borrow(offsets, n) } { Ok(v) => v, Err(e) => return e };
        let lens = match unsafe { borrow(lens, n) } { Ok(v) => v, Err(e) => return e };
        let stream = match encode(symbols, cdf, offsets, lens) {
            Ok(v) => v,
            Err(e) => return e,
        };
        if stream.len() > cap {
            return ERR_BUFFER;
        }
        if out.is_null() {
            return ERR_ARGS;
        }
        unsafe {
            std::ptr::copy_nonoverlapping(stream.as_ptr(), out, stream.len());
            *out_len = stream.len();
        }
        OK
    }))
    .unwrap_or(ERR_ARGS)
}

/// Decode `count` symbols from `data` into `out`. Returns 0 or a negative
/// status code; `out` is never written past `count` elements.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths (`data`: `len`
/// bytes; `offsets`, `lens`, `out`: `count` elements; `cdf`: `cdf_len`).
#[no_mangle]
pub unsafe extern "C" fn selic_rc_decode(
    data: *const u8,
    len: usize,
    cdf: *const u32,
    cdf_len: usize,
    offsets: *const u64,
    lens: *const u32,
    count: usize,
    out: *mut u32,
) -> i32 {
    catch_unwind(AssertUnwindSafe(|| {
        let data = match unsafe { borrow(data, len) } { Ok(v) => v, Err(e) => return e };
        let cdf = match unsafe { borrow(cdf, cdf_len) } { Ok(v) => v, Err(e) => return e };
        let offsets = match unsafe { borrow(offsets, count) } { Ok(v) => v, Err(e) => return e };
        let lens = match unsafe { borrow(lens, count) } { Ok(v) => v, Err(e) => return e };
        if count > 0 && out.is_null() {
            return ERR_ARGS;
        }
        let out = if count == 0 {
            &mut [][..]
        } else {
            unsafe { std::slice::from_raw_parts_mut(out, count) }
        };
        match decode(data, cdf, offsets, lens, out) {
            Ok(()) => OK,
            Err(e) => e,
        }
    }))
    .unwrap_or(ERR_ARGS)
}
