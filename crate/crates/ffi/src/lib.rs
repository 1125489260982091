// SPDX-License-Identifier: MIT OR Apache-2.0

//! C ABI over the `owml` library.
//!
//! Every function returns an [`OwmlStatus`]. On failure a description is
//! kept per thread and can be read with [`owml_last_error_message`].
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Panics never cross the boundary;
//! they surface as [`OwmlStatus::Panic`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use owml::analysis::{self, AurocMethod};
use owml::dataset::{tokenize_moves, VOCAB_SIZE};
use owml::gpt::{load_gpt, Gpt};
use owml::othello::{stability_map, Board, Player, Tile};
use owml::sae::SaeModel;
use owml::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OwmlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IllegalMove = 3,
    ShapeMismatch = 4,
    FormatError = 5,
    IoError = 6,
    MissingInput = 7,
    ConfigError = 8,
    NonFinite = 9,
    SingleClass = 10,
    BufferTooSmall = 11,
    Panic = 12,
    Internal = 13,
}

/// AUROC flavour for [`owml_auroc`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OwmlAurocMethod {
    Rank = 0,
    BinaryTrapezoid = 1,
}

/// Confusion counts of a `> 0` binarised feature against labels.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OwmlConfusion {
    pub tp: u32,
    pub fp: u32,
    pub tn: u32,
    pub fn_: u32,
}

/// Opaque Othello position.
pub struct OwmlBoard(Board);

/// Opaque trained transformer.
pub struct OwmlGpt(Gpt<f32>);

/// Opaque sparse autoencoder.
pub struct OwmlSae(SaeModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> OwmlStatus {
    match e {
        Error::IllegalMove { .. } => OwmlStatus::IllegalMove,
        Error::TileOutOfRange(_) | Error::TokenOutOfRange { .. } | Error::LayerOutOfRange { .. } => {
            OwmlStatus::InvalidArgument
        }
        Error::InvalidBoard(_) | Error::InvalidTokens(_) | Error::InvalidLabel(_) | Error::EmptyGame => {
            OwmlStatus::InvalidArgument
        }
        Error::ShapeMismatch(_) | Error::LengthMismatch { .. } => OwmlStatus::ShapeMismatch,
        Error::Format(_) | Error::TruncatedFile(_) => OwmlStatus::FormatError,
        Error::Io { .. } => OwmlStatus::IoError,
        Error::MissingInput(_) => OwmlStatus::MissingInput,
        Error::Config(_) => OwmlStatus::ConfigError,
        Error::NonFiniteValue(_) => OwmlStatus::NonFinite,
        Error::SingleClass => OwmlStatus::SingleClass,
        Error::ZeroVector | Error::AllMasked => OwmlStatus::InvalidArgument,
    }
}

/// Internal failure carrying its own status.
struct Fail(OwmlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(OwmlStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OwmlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OwmlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            OwmlStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(OwmlStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn owml_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length
/// in bytes, excluding the terminator. Returns 0 when there is none.
#[no_mangle]
pub unsafe extern "C" fn owml_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// New board in the standard opening position.
#[no_mangle]
pub unsafe extern "C" fn owml_board_new(board: *mut *mut OwmlBoard) -> OwmlStatus {
    guard(|| {
        *out(board, "board")? = Box::into_raw(Box::new(OwmlBoard(Board::initial())));
        Ok(())
    })
}

/// Board from disc masks; `to_move` is 0 for black, 1 for white.
#[no_mangle]
pub unsafe extern "C" fn owml_board_from_masks(
    black: u64,
    white: u64,
    to_move: u8,
    board: *mut *mut OwmlBoard,
) -> OwmlStatus {
    guard(|| {
        let p = match to_move {
            0 => Player::Black,
            1 => Player::White,
            _ => return Err(Fail(OwmlStatus::InvalidArgument, format!("to_move {to_move}"))),
        };
        let b = Board::from_masks(black, white, p)?;
        *out(board, "board")? = Box::into_raw(Box::new(OwmlBoard(b)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn owml_board_free(board: *mut OwmlBoard) {
    if !board.is_null() {
        drop(Box::from_raw(board));
    }
}

/// Disc masks and side to move (0 black, 1 white).
#[no_mangle]
pub unsafe extern "C" fn owml_board_state(
    board: *const OwmlBoard,
    black: *mut u64,
    white: *mut u64,
    to_move: *mut u8,
) -> OwmlStatus {
    guard(|| {
        let b = &board.as_ref().ok_or_else(|| null("board"))?.0;
        *out(black, "black")? = b.black();
        *out(white, "white")? = b.white();
        *out(to_move, "to_move")? = u8::from(b.to_move() == Player::White);
        Ok(())
    })
}

/// Legal moves of the side to move as a tile bitmask.
#[no_mangle]
pub unsafe extern "C" fn owml_board_legal_moves(board: *const OwmlBoard, mask: *mut u64) -> OwmlStatus {
    guard(|| {
        let b = &board.as_ref().ok_or_else(|| null("board"))?.0;
        *out(mask, "mask")? = b.legal_moves();
        Ok(())
    })
}

/// Plays `tile` (0..64, row-major from a1) in place. When the opponent
/// then has no move but the mover does, the turn passes back.
#[no_mangle]
pub unsafe extern "C" fn owml_board_play(board: *mut OwmlBoard, tile: u8) -> OwmlStatus {
    guard(|| {
        let b = &mut board.as_mut().ok_or_else(|| null("board"))?.0;
        let t = Tile::new(usize::from(tile))?;
        *b = b.apply_move(t)?.resolve_pass();
        Ok(())
    })
}

/// Stable-tile bitmask of the position.
#[no_mangle]
pub unsafe extern "C" fn owml_board_stable_tiles(board: *const OwmlBoard, mask: *mut u64) -> OwmlStatus {
    guard(|| {
        let b = &board.as_ref().ok_or_else(|| null("board"))?.0;
        *out(mask, "mask")? = stability_map(b).stable_mask;
        Ok(())
    })
}

/// Tokenises a move list (tile indices) into `tokens[0..max_len]`,
/// EOS-terminated and PAD-filled. `tokens` must hold `max_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn owml_tokenize(
    moves: *const u8,
    n_moves: usize,
    max_len: usize,
    tokens: *mut u8,
) -> OwmlStatus {
    guard(|| {
        let moves = slice(moves, n_moves, "moves")?
            .iter()
            .map(|&m| Tile::new(usize::from(m)))
            .collect::<Result<Vec<_>, _>>()?;
        let seq = tokenize_moves(&moves, max_len)?;
        slice_mut(tokens, max_len, "tokens")?.copy_from_slice(seq.tokens());
        Ok(())
    })
}

/// Confusion counts with `values[i] > 0` as the prediction. `labels`
/// holds one byte per sample; non-zero is positive.
#[no_mangle]
pub unsafe extern "C" fn owml_binary_confusion(
    values: *const f32,
    labels: *const u8,
    n: usize,
    result: *mut OwmlConfusion,
) -> OwmlStatus {
    guard(|| {
        let v = slice(values, n, "values")?;
        let y: Vec<bool> = slice(labels, n, "labels")?.iter().map(|&l| l != 0).collect();
        let c = analysis::binary_confusion(v, &y)?;
        *out(result, "result")? = OwmlConfusion {
            tp: c.tp,
            fp: c.fp,
            tn: c.tn,
            fn_: c.fn_,
        };
        Ok(())
    })
}

/// `2tp / (2tp + fp + fn)`, 0 when the denominator is 0.
#[no_mangle]
pub extern "C" fn owml_f1(tp: u32, fp: u32, fn_: u32) -> f64 {
    analysis::f1(tp, fp, fn_)
}

/// Area under the ROC curve of `values` against `labels`.
#[no_mangle]
pub unsafe extern "C" fn owml_auroc(
    values: *const f32,
    labels: *const u8,
    n: usize,
    method: OwmlAurocMethod,
    result: *mut f64,
) -> OwmlStatus {
    guard(|| {
        let v = slice(values, n, "values")?;
        let y: Vec<bool> = slice(labels, n, "labels")?.iter().map(|&l| l != 0).collect();
        let m = match method {
            OwmlAurocMethod::Rank => AurocMethod::Rank,
            OwmlAurocMethod::BinaryTrapezoid => AurocMethod::BinaryTrapezoid,
        };
        *out(result, "result")? = analysis::auroc(v, &y, m)?;
        Ok(())
    })
}

/// Loads a transformer checkpoint.
#[no_mangle]
pub unsafe extern "C" fn owml_gpt_load(file: *const c_char, model: *mut *mut OwmlGpt) -> OwmlStatus {
    guard(|| {
        let m = load_gpt(path(file)?)?;
        *out(model, "model")? = Box::into_raw(Box::new(OwmlGpt(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn owml_gpt_free(model: *mut OwmlGpt) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size, i.e. the length of a logits row.
#[no_mangle]
pub extern "C" fn owml_vocab_size() -> usize {
    VOCAB_SIZE
}

/// Next-token logits after `tokens[0..n]`, written to `logits[0..66]`.
#[no_mangle]
pub unsafe extern "C" fn owml_gpt_next_logits(
    model: *const OwmlGpt,
    tokens: *const u8,
    n: usize,
    logits: *mut f32,
    logits_len: usize,
) -> OwmlStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let toks = slice(tokens, n, "tokens")?;
        if n == 0 {
            return Err(Fail(OwmlStatus::InvalidArgument, "empty token sequence".into()));
        }
        if logits_len < VOCAB_SIZE {
            return Err(Fail(
                OwmlStatus::BufferTooSmall,
                format!("logits needs {VOCAB_SIZE} slots"),
            ));
        }
        let (all, _) = m.forward_tokens(toks, 0)?;
        slice_mut(logits, VOCAB_SIZE, "logits")?.copy_from_slice(all.row(all.rows() - 1));
        Ok(())
    })
}

/// Loads a sparse autoencoder checkpoint.
#[no_mangle]
pub unsafe extern "C" fn owml_sae_load(file: *const c_char, sae: *mut *mut OwmlSae) -> OwmlStatus {
    guard(|| {
        let m = SaeModel::load(path(file)?)?;
        *out(sae, "sae")? = Box::into_raw(Box::new(OwmlSae(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn owml_sae_free(sae: *mut OwmlSae) {
    if !sae.is_null() {
        drop(Box::from_raw(sae));
    }
}

/// Input and latent widths.
#[no_mangle]
pub unsafe extern "C" fn owml_sae_dims(
    sae: *const OwmlSae,
    d_in: *mut usize,
    d_latent: *mut usize,
) -> OwmlStatus {
    guard(|| {
        let m = &sae.as_ref().ok_or_else(|| null("sae"))?.0;
        *out(d_in, "d_in")? = m.d_in();
        *out(d_latent, "d_latent")? = m.d_latent();
        Ok(())
    })
}

/// Encodes one raw activation vector into its sparse code.
#[no_mangle]
pub unsafe extern "C" fn owml_sae_encode(
    sae: *const OwmlSae,
    x: *const f32,
    d_in: usize,
    code: *mut f32,
    d_latent: usize,
) -> OwmlStatus {
    guard(|| {
        let m = &sae.as_ref().ok_or_else(|| null("sae"))?.0;
        if d_in != m.d_in() {
            return Err(Fail(
                OwmlStatus::ShapeMismatch,
                format!("d_in {d_in} != {}", m.d_in()),
            ));
        }
        if d_latent < m.d_latent() {
            return Err(Fail(
                OwmlStatus::BufferTooSmall,
                format!("code needs {} slots", m.d_latent()),
            ));
        }
        let h = m.encode(slice(x, d_in, "x")?)?;
        slice_mut(code, h.len(), "code")?.copy_from_slice(&h);
        Ok(())
    })
}
