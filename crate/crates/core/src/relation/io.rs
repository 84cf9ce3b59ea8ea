use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::encoder::PairEncoder;
use super::finetune::{RelationHead, RelationModel, NUM_RELATIONS};
use crate::classifier::io::{ensure_eof, read_f64s, read_header, read_usize, read_vocab, write_f64s, write_header, write_usize, write_vocab};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"WMRL";
const VERSION: u32 = 1;

pub fn write_relation_model<W: Write>(w: &mut W, m: &RelationModel) -> Result<()> {
    write_header(w, MAGIC, VERSION)?;
    w.write_u64::<LittleEndian>(m.seed)?;
    write_usize(w, m.encoder.dim())?;
    write_vocab(w, &m.encoder.vocab)?;
    write_f64s(w, m.encoder.table.as_slice().expect("contiguous"))?;
    write_f64s(w, m.head.w.as_slice().expect("contiguous"))?;
    write_f64s(w, m.head.b.as_slice().expect("contiguous"))?;
    Ok(())
}

pub fn read_relation_model<R: Read>(r: &mut R) -> Result<RelationModel> {
    read_header(r, MAGIC, VERSION)?;
    let seed = r.read_u64::<LittleEndian>()?;
    let d = read_usize(r)?;
    if d == 0 || d > 1 << 16 {
        return Err(Error::BadModelFile(format!("implausible width {d}")));
    }
    let vocab = read_vocab(r)?;
    let mut table = Array2::zeros((vocab.size(), d));
    read_f64s(r, table.as_slice_mut().expect("contiguous"))?;
    let mut w = Array2::zeros((4 * d, NUM_RELATIONS));
    read_f64s(r, w.as_slice_mut().expect("contiguous"))?;
    let mut b = Array1::zeros(NUM_RELATIONS);
    read_f64s(r, b.as_slice_mut().expect("contiguous"))?;
    ensure_eof(r)?;
    Ok(RelationModel { encoder: PairEncoder { vocab, table }, head: RelationHead { w, b }, seed })
}

pub fn save_relation_model(path: impl AsRef<Path>, m: &RelationModel) -> Result<()> {
    let mut buf = Vec::new();
    write_relation_model(&mut buf, m)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_relation_model(path: impl AsRef<Path>) -> Result<RelationModel> {
    let bytes = std::fs::read(path)?;
    read_relation_model(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::CharVocab;

    #[test]
    fn round_trip_and_magic_check() {
        let m = RelationModel { encoder: PairEncoder::new(CharVocab::build(["肺炎"]), 4, 1), head: RelationHead::new(4, 1), seed: 1 };
        let mut buf = Vec::new();
        write_relation_model(&mut buf, &m).unwrap();
        assert_eq!(read_relation_model(&mut buf.as_slice()).unwrap(), m);
        buf[1] = b'?';
        assert!(matches!(read_relation_model(&mut buf.as_slice()), Err(Error::BadModelFile(_))));
    }
}
