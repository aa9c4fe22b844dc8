//! The FNED on-disk dataset format.
//!
//! Layout (all integers and floats little-endian):
//! magic `FNED` | u32 version=1 | u32 image dim | u32 text dim |
//! u64 image count | u64 text count | pair mapping u64[text count] |
//! image matrix f32[image count * image dim] row-major |
//! text matrix f32[text count * text dim] row-major |
//! marker u8 (0: no cluster section, 1: cluster labels follow) |
//! [u64 image labels, u64 text labels]
//!
//! Views are stored as f32; the generator quantizes through f32 so a
//! save/load round trip reproduces datasets exactly.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use fne_core::datagen::{ClusterLabels, PairedDataset};

use crate::error::{io_err, CliError, FormatError, Result};

const MAGIC: [u8; 4] = *b"FNED";
const VERSION: u32 = 1;

pub fn save_dataset(dataset: &PairedDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_dataset(dataset, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_dataset<W: Write>(dataset: &PairedDataset, w: &mut W) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(dataset.image_dim() as u32)?;
    w.write_u32::<LittleEndian>(dataset.text_dim() as u32)?;
    w.write_u64::<LittleEndian>(dataset.n_images() as u64)?;
    w.write_u64::<LittleEndian>(dataset.n_texts() as u64)?;
    for &i in dataset.pairs() {
        w.write_u64::<LittleEndian>(i as u64)?;
    }
    for row in dataset.image_views() {
        for &v in row {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    for row in dataset.text_views() {
        for &v in row {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    match dataset.clusters() {
        None => w.write_u8(0)?,
        Some(c) => {
            w.write_u8(1)?;
            for &label in &c.image {
                w.write_u64::<LittleEndian>(label)?;
            }
            for &label in &c.text {
                w.write_u64::<LittleEndian>(label)?;
            }
        }
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<PairedDataset> {
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    read_dataset(&mut r).map_err(|source| match source {
        ReadError::Io(e) => CliError::Io { path: path.to_path_buf(), source: e },
        ReadError::Format(f) => CliError::Format { path: path.to_path_buf(), source: f },
    })
}

pub enum ReadError {
    Io(io::Error),
    Format(FormatError),
}

impl From<io::Error> for ReadError {
    fn from(e: io::Error) -> Self {
        // A short read means the payload promised more than the file holds.
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ReadError::Format(FormatError::Truncated)
        } else {
            ReadError::Io(e)
        }
    }
}

impl From<FormatError> for ReadError {
    fn from(e: FormatError) -> Self {
        ReadError::Format(e)
    }
}

pub fn check_magic<R: Read>(r: &mut R, expected: [u8; 4]) -> std::result::Result<(), ReadError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if found != expected {
        return Err(FormatError::BadMagic { expected, found }.into());
    }
    Ok(())
}

pub fn check_version<R: Read>(r: &mut R, expected: u32) -> std::result::Result<(), ReadError> {
    let found = r.read_u32::<LittleEndian>()?;
    if found != expected {
        return Err(FormatError::UnsupportedVersion { expected, found }.into());
    }
    Ok(())
}

fn read_dataset<R: Read>(r: &mut R) -> std::result::Result<PairedDataset, ReadError> {
    check_magic(r, MAGIC)?;
    check_version(r, VERSION)?;
    let image_dim = r.read_u32::<LittleEndian>()? as usize;
    let text_dim = r.read_u32::<LittleEndian>()? as usize;
    let n_images = r.read_u64::<LittleEndian>()? as usize;
    let n_texts = r.read_u64::<LittleEndian>()? as usize;
    if n_images == 0 || n_texts == 0 || image_dim == 0 || text_dim == 0 {
        return Err(FormatError::Inconsistent(format!(
            "counts and dims must be positive: {n_images} images x {image_dim}, \
             {n_texts} texts x {text_dim}"
        ))
        .into());
    }

    let mut pair_of = Vec::with_capacity(n_texts);
    for t in 0..n_texts {
        let i = r.read_u64::<LittleEndian>()? as usize;
        if i >= n_images {
            return Err(FormatError::Inconsistent(format!(
                "text {t} maps to image {i}, but there are only {n_images} images"
            ))
            .into());
        }
        pair_of.push(i);
    }

    let mut read_matrix = |rows: usize, dim: usize| -> std::result::Result<Vec<Vec<f64>>, ReadError> {
        let mut matrix = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut row = Vec::with_capacity(dim);
            for _ in 0..dim {
                row.push(r.read_f32::<LittleEndian>()? as f64);
            }
            matrix.push(row);
        }
        Ok(matrix)
    };
    let image_views = read_matrix(n_images, image_dim)?;
    let text_views = read_matrix(n_texts, text_dim)?;

    let clusters = match r.read_u8()? {
        0 => None,
        1 => {
            let mut image = Vec::with_capacity(n_images);
            for _ in 0..n_images {
                image.push(r.read_u64::<LittleEndian>()?);
            }
            let mut text = Vec::with_capacity(n_texts);
            for _ in 0..n_texts {
                text.push(r.read_u64::<LittleEndian>()?);
            }
            Some(ClusterLabels { image, text })
        }
        other => {
            return Err(FormatError::Inconsistent(format!(
                "unknown cluster-section marker {other}"
            ))
            .into())
        }
    };

    PairedDataset::new(image_views, text_views, pair_of, clusters)
        .map_err(|e| FormatError::Inconsistent(e.to_string()).into())
}
