//! Versioned little-endian binary model files.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::{ContextModel, GatedFusionHead, WindowEncoder};
use crate::error::{Error, Result};
use crate::features::OrderTrackScope;
use crate::vocab::CharVocab;

const MAGIC: &[u8; 4] = b"WMCX";
const VERSION: u32 = 1;

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], version: u32) -> Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(version)?;
    Ok(())
}

pub(crate) fn read_header<R: Read>(r: &mut R, magic: &[u8; 4], version: u32) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::BadModelFile(format!("bad magic {:?}", String::from_utf8_lossy(&m))));
    }
    let v = r.read_u32::<LittleEndian>()?;
    if v != version {
        return Err(Error::BadModelFile(format!("unsupported version {v}")));
    }
    Ok(())
}

pub(crate) fn write_usize<W: Write>(w: &mut W, x: usize) -> Result<()> {
    w.write_u64::<LittleEndian>(x as u64)?;
    Ok(())
}

pub(crate) fn read_usize<R: Read>(r: &mut R) -> Result<usize> {
    let x = r.read_u64::<LittleEndian>()?;
    usize::try_from(x).map_err(|_| Error::BadModelFile(format!("size {x} out of range")))
}

pub(crate) fn write_vocab<W: Write>(w: &mut W, vocab: &CharVocab) -> Result<()> {
    write_usize(w, vocab.chars().len())?;
    for &c in vocab.chars() {
        w.write_u32::<LittleEndian>(c as u32)?;
    }
    Ok(())
}

pub(crate) fn read_vocab<R: Read>(r: &mut R) -> Result<CharVocab> {
    let n = read_usize(r)?;
    let mut chars = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let code = r.read_u32::<LittleEndian>()?;
        chars.push(char::from_u32(code).ok_or_else(|| Error::BadModelFile(format!("invalid char {code:#x}")))?);
    }
    Ok(CharVocab::from_chars(chars))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    r.read_f64_into::<LittleEndian>(out)?;
    Ok(())
}

pub(crate) fn ensure_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::BadModelFile("trailing bytes".into()));
    }
    Ok(())
}

pub fn write_context_model<W: Write>(w: &mut W, m: &ContextModel<WindowEncoder>) -> Result<()> {
    write_header(w, MAGIC, VERSION)?;
    w.write_u64::<LittleEndian>(m.seed)?;
    for x in [m.head.d_enc(), m.head.d(), m.head.d_f(), m.encoder.radius, m.max_context, m.max_disease] {
        write_usize(w, x)?;
    }
    w.write_u8(match m.scope {
        OrderTrackScope::EnumeratorOnly => 0,
        OrderTrackScope::WholeItem => 1,
    })?;
    write_vocab(w, &m.encoder.vocab)?;
    write_f64s(w, m.encoder.table.as_slice().expect("contiguous"))?;
    for t in m.head.tensors() {
        write_f64s(w, t)?;
    }
    Ok(())
}

pub fn read_context_model<R: Read>(r: &mut R) -> Result<ContextModel<WindowEncoder>> {
    read_header(r, MAGIC, VERSION)?;
    let seed = r.read_u64::<LittleEndian>()?;
    let d_enc = read_usize(r)?;
    let d = read_usize(r)?;
    let d_f = read_usize(r)?;
    let radius = read_usize(r)?;
    let max_context = read_usize(r)?;
    let max_disease = read_usize(r)?;
    let scope = match r.read_u8()? {
        0 => OrderTrackScope::EnumeratorOnly,
        1 => OrderTrackScope::WholeItem,
        other => return Err(Error::BadModelFile(format!("unknown order-track scope {other}"))),
    };
    if d_enc == 0 || d == 0 || d_f == 0 || d_enc.max(d).max(d_f) > 1 << 16 {
        return Err(Error::BadModelFile(format!("implausible dims {d_enc}/{d}/{d_f}")));
    }
    let vocab = read_vocab(r)?;
    let mut table = Array2::zeros((vocab.size(), d_enc));
    read_f64s(r, table.as_slice_mut().expect("contiguous"))?;
    let mut head = GatedFusionHead {
        w1: Array2::zeros((d_enc, d)),
        b1: Array1::zeros(d),
        e_pos: Array2::zeros((2, d_f)),
        e_neg: Array2::zeros((2, d_f)),
        e_order: Array2::zeros((2, d_f)),
        w_pos: Array2::zeros((d_f, d)),
        w_neg: Array2::zeros((d_f, d)),
        w_order: Array2::zeros((d_f, d)),
        b_f: Array1::zeros(d),
        w_fm: Array2::zeros((2 * d, d)),
        b_fm: Array1::zeros(d),
        w_g: Array2::zeros((2 * d, d)),
        c_g: Array1::zeros(d),
        w_y: Array2::zeros((2 * d, super::NUM_LABELS)),
        b_y: Array1::zeros(super::NUM_LABELS),
    };
    for t in head.tensors_mut() {
        read_f64s(r, t)?;
    }
    ensure_eof(r)?;
    Ok(ContextModel { encoder: WindowEncoder { vocab, table, radius }, head, max_context, max_disease, scope, seed })
}

pub fn save_context_model(path: impl AsRef<Path>, m: &ContextModel<WindowEncoder>) -> Result<()> {
    let mut buf = Vec::new();
    write_context_model(&mut buf, m)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_context_model(path: impl AsRef<Path>) -> Result<ContextModel<WindowEncoder>> {
    let bytes = std::fs::read(path)?;
    read_context_model(&mut bytes.as_slice())
}
