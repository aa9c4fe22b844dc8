//! The FNEC on-disk checkpoint format: full training state in one binary
//! file.
//!
//! Layout (little-endian): magic `FNEC` | u32 version=1 | u32 image dim |
//! u32 text dim | u32 embed dim | f64 momentum | u32 epochs trained |
//! four encoders (query image, query text, momentum image, momentum text),
//! each as u64 weight length, f64 weights, u64 bias length, f64 biases |
//! two banks (image, text), each as u64 capacity, u64 entry count,
//! u64 entry dim, then per entry u64 id and f64 values |
//! tracker as u64 min ready count, f64 sigma floor, then for the positive
//! and negative fits: u64 count, f64 mean, f64 m2.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use fne_core::embedding::Embedding;
use fne_core::memory::{MemoryBank, MomentumParams};
use fne_core::model::LinearEncoder;
use fne_core::stats::{DistributionTracker, GaussianStats};
use fne_core::train::TrainState;

use crate::error::{io_err, CliError, FormatError, Result};
use crate::fned::{check_magic, check_version, ReadError};

const MAGIC: [u8; 4] = *b"FNEC";
const VERSION: u32 = 1;

/// A checkpoint: the complete training state plus how far it got.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub epochs_trained: u32,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_checkpoint(ckpt, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_encoder<W: Write>(enc: &LinearEncoder, w: &mut W) -> io::Result<()> {
    w.write_u64::<LittleEndian>(enc.weight().len() as u64)?;
    for &v in enc.weight() {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.write_u64::<LittleEndian>(enc.bias().len() as u64)?;
    for &v in enc.bias() {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn write_bank<W: Write>(bank: &MemoryBank, w: &mut W) -> io::Result<()> {
    w.write_u64::<LittleEndian>(bank.capacity() as u64)?;
    w.write_u64::<LittleEndian>(bank.len() as u64)?;
    let dim = bank.iter().next().map_or(0, |(_, e)| e.dim());
    w.write_u64::<LittleEndian>(dim as u64)?;
    for (id, emb) in bank.iter() {
        w.write_u64::<LittleEndian>(*id)?;
        for &v in emb.values() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

fn write_stats<W: Write>(stats: &GaussianStats, w: &mut W) -> io::Result<()> {
    w.write_u64::<LittleEndian>(stats.count())?;
    w.write_f64::<LittleEndian>(stats.mean())?;
    w.write_f64::<LittleEndian>(stats.m2())?;
    Ok(())
}

fn write_checkpoint<W: Write>(ckpt: &Checkpoint, w: &mut W) -> io::Result<()> {
    let s = &ckpt.state;
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(s.encoder_image.d_in() as u32)?;
    w.write_u32::<LittleEndian>(s.encoder_text.d_in() as u32)?;
    w.write_u32::<LittleEndian>(s.encoder_image.d_out() as u32)?;
    w.write_f64::<LittleEndian>(s.momentum.m)?;
    w.write_u32::<LittleEndian>(ckpt.epochs_trained)?;
    for enc in [&s.encoder_image, &s.encoder_text, &s.momentum_image, &s.momentum_text] {
        write_encoder(enc, w)?;
    }
    write_bank(&s.bank_image, w)?;
    write_bank(&s.bank_text, w)?;
    w.write_u64::<LittleEndian>(s.tracker.min_ready_count())?;
    w.write_f64::<LittleEndian>(s.tracker.sigma_floor())?;
    write_stats(s.tracker.positive(), w)?;
    write_stats(s.tracker.negative(), w)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    read_checkpoint(&mut r).map_err(|source| match source {
        ReadError::Io(e) => CliError::Io { path: path.to_path_buf(), source: e },
        ReadError::Format(f) => CliError::Format { path: path.to_path_buf(), source: f },
    })
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::result::Result<Vec<f64>, ReadError> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r.read_f64::<LittleEndian>()?);
    }
    Ok(out)
}

fn read_encoder<R: Read>(
    r: &mut R,
    d_in: usize,
    d_out: usize,
) -> std::result::Result<LinearEncoder, ReadError> {
    let w_len = r.read_u64::<LittleEndian>()? as usize;
    if w_len != d_in * d_out {
        return Err(FormatError::Inconsistent(format!(
            "encoder weight length {w_len} does not match {d_out}x{d_in}"
        ))
        .into());
    }
    let weight = read_f64s(r, w_len)?;
    let b_len = r.read_u64::<LittleEndian>()? as usize;
    if b_len != d_out {
        return Err(FormatError::Inconsistent(format!(
            "encoder bias length {b_len} does not match {d_out}"
        ))
        .into());
    }
    let bias = read_f64s(r, b_len)?;
    LinearEncoder::from_parts(d_in, d_out, weight, bias)
        .map_err(|e| FormatError::Inconsistent(e.to_string()).into())
}

fn read_bank<R: Read>(r: &mut R) -> std::result::Result<MemoryBank, ReadError> {
    let capacity = r.read_u64::<LittleEndian>()? as usize;
    let count = r.read_u64::<LittleEndian>()? as usize;
    let dim = r.read_u64::<LittleEndian>()? as usize;
    if count > capacity {
        return Err(FormatError::Inconsistent(format!(
            "bank holds {count} entries over capacity {capacity}"
        ))
        .into());
    }
    if count > 0 && dim == 0 {
        return Err(FormatError::Inconsistent(String::from(
            "bank entries with zero dimension",
        ))
        .into());
    }
    let mut bank = MemoryBank::new(capacity)
        .map_err(|e| ReadError::Format(FormatError::Inconsistent(e.to_string())))?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let id = r.read_u64::<LittleEndian>()?;
        let values = read_f64s(r, dim)?;
        let emb = Embedding::new(values)
            .map_err(|e| ReadError::Format(FormatError::Inconsistent(e.to_string())))?;
        entries.push((id, emb));
    }
    bank.enqueue_batch(entries)
        .map_err(|e| ReadError::Format(FormatError::Inconsistent(e.to_string())))?;
    Ok(bank)
}

fn read_stats<R: Read>(r: &mut R) -> std::result::Result<GaussianStats, ReadError> {
    let count = r.read_u64::<LittleEndian>()?;
    let mean = r.read_f64::<LittleEndian>()?;
    let m2 = r.read_f64::<LittleEndian>()?;
    Ok(GaussianStats::from_parts(count, mean, m2))
}

fn read_checkpoint<R: Read>(r: &mut R) -> std::result::Result<Checkpoint, ReadError> {
    check_magic(r, MAGIC)?;
    check_version(r, VERSION)?;
    let image_dim = r.read_u32::<LittleEndian>()? as usize;
    let text_dim = r.read_u32::<LittleEndian>()? as usize;
    let embed_dim = r.read_u32::<LittleEndian>()? as usize;
    let m = r.read_f64::<LittleEndian>()?;
    let epochs_trained = r.read_u32::<LittleEndian>()?;
    let momentum = MomentumParams::new(m)
        .map_err(|e| ReadError::Format(FormatError::Inconsistent(e.to_string())))?;
    let encoder_image = read_encoder(r, image_dim, embed_dim)?;
    let encoder_text = read_encoder(r, text_dim, embed_dim)?;
    let momentum_image = read_encoder(r, image_dim, embed_dim)?;
    let momentum_text = read_encoder(r, text_dim, embed_dim)?;
    let bank_image = read_bank(r)?;
    let bank_text = read_bank(r)?;
    let min_ready_count = r.read_u64::<LittleEndian>()?;
    let sigma_floor = r.read_f64::<LittleEndian>()?;
    let positive = read_stats(r)?;
    let negative = read_stats(r)?;
    Ok(Checkpoint {
        state: TrainState {
            encoder_image,
            encoder_text,
            momentum_image,
            momentum_text,
            bank_image,
            bank_text,
            tracker: DistributionTracker::from_parts(
                positive,
                negative,
                min_ready_count,
                sigma_floor,
            ),
            momentum,
        },
        epochs_trained,
    })
}
