//! The `SGSW` raster file format.
//!
//! Layout: magic bytes `SGSW`, one format-version byte (1), a
//! little-endian `u32` header length, the header as JSON
//! (`{scan_id, dtype, sections: [{index, rows, cols}]}`), then raw
//! little-endian pixel data per section in row-major order. Probability
//! rasters use dtype `f32`; masks use dtype `u8` with values 0/1.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::model::{ProbabilityRaster, ReferenceMask, SectionGrid};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"SGSW";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not an SGSW raster (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported format version {version}")]
    BadVersion { path: PathBuf, version: u8 },
    #[error("{path}: malformed header: {message}")]
    BadHeader { path: PathBuf, message: String },
    #[error("{path}: expected dtype {expected}, found {actual}")]
    DtypeMismatch {
        path: PathBuf,
        expected: RasterDtype,
        actual: RasterDtype,
    },
    #[error("{path}: section {section}: mask byte {value} is neither 0 nor 1")]
    BadMaskValue {
        path: PathBuf,
        section: u32,
        value: u8,
    },
    #[error("{path}: truncated pixel data for section {section}")]
    Truncated { path: PathBuf, section: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RasterDtype {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "u8")]
    U8,
}

impl fmt::Display for RasterDtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RasterDtype::F32 => write!(f, "f32"),
            RasterDtype::U8 => write!(f, "u8"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionDims {
    pub index: u32,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub scan_id: String,
    pub dtype: RasterDtype,
    pub sections: Vec<SectionDims>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RasterError + '_ {
    move |source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads only the header, leaving pixel data untouched.
pub fn read_header(path: &Path) -> Result<RasterHeader, RasterError> {
    let mut reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    read_header_from(&mut reader, path).map(|(h, _)| h)
}

fn read_header_from<R: Read>(
    reader: &mut R,
    path: &Path,
) -> Result<(RasterHeader, usize), RasterError> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(io_err(path))?;
    if magic != MAGIC {
        return Err(RasterError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut version = [0u8; 1];
    reader.read_exact(&mut version).map_err(io_err(path))?;
    if version[0] != FORMAT_VERSION {
        return Err(RasterError::BadVersion {
            path: path.to_path_buf(),
            version: version[0],
        });
    }
    let mut len_bytes = [0u8; 4];
    reader.read_exact(&mut len_bytes).map_err(io_err(path))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    reader.read_exact(&mut header_bytes).map_err(io_err(path))?;
    let header: RasterHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| RasterError::BadHeader {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    Ok((header, header_len))
}

/// Incremental writer: header first, then one call per section in
/// header order.
pub struct RasterWriter {
    writer: BufWriter<File>,
    path: PathBuf,
    header: RasterHeader,
    next_section: usize,
}

impl RasterWriter {
    pub fn create(path: &Path, header: RasterHeader) -> Result<Self, RasterError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut writer = BufWriter::new(file);
        let header_json = serde_json::to_vec(&header).expect("header serialization");
        writer.write_all(&MAGIC).map_err(io_err(path))?;
        writer.write_all(&[FORMAT_VERSION]).map_err(io_err(path))?;
        writer
            .write_all(&(header_json.len() as u32).to_le_bytes())
            .map_err(io_err(path))?;
        writer.write_all(&header_json).map_err(io_err(path))?;
        Ok(RasterWriter {
            writer,
            path: path.to_path_buf(),
            header,
            next_section: 0,
        })
    }

    fn expect_dims(&mut self, rows: usize, cols: usize) -> (usize, u32) {
        assert!(
            self.next_section < self.header.sections.len(),
            "more sections written than declared in header"
        );
        let dims = &self.header.sections[self.next_section];
        assert_eq!(
            (rows, cols),
            (dims.rows, dims.cols),
            "section {} dimensions do not match header",
            dims.index
        );
        let idx = self.next_section;
        self.next_section += 1;
        (idx, dims.index)
    }

    pub fn write_section_f32<F: Scalar>(&mut self, grid: &Grid<F>) -> Result<(), RasterError> {
        assert_eq!(self.header.dtype, RasterDtype::F32);
        self.expect_dims(grid.rows(), grid.cols());
        let mut buf = Vec::with_capacity(grid.len() * 4);
        for &v in grid.as_slice() {
            let v32 = v.to_f32().unwrap_or(f32::NAN);
            buf.extend_from_slice(&v32.to_le_bytes());
        }
        self.writer.write_all(&buf).map_err(io_err(&self.path))
    }

    pub fn write_section_mask(&mut self, grid: &Grid<bool>) -> Result<(), RasterError> {
        assert_eq!(self.header.dtype, RasterDtype::U8);
        self.expect_dims(grid.rows(), grid.cols());
        let buf: Vec<u8> = grid.as_slice().iter().map(|&b| u8::from(b)).collect();
        self.writer.write_all(&buf).map_err(io_err(&self.path))
    }

    pub fn finish(mut self) -> Result<(), RasterError> {
        assert_eq!(
            self.next_section,
            self.header.sections.len(),
            "fewer sections written than declared in header"
        );
        self.writer.flush().map_err(io_err(&self.path))
    }
}

/// Writes a probability raster; values are stored at f32 precision.
pub fn write_probability_raster<F: Scalar>(
    path: &Path,
    raster: &ProbabilityRaster<F>,
) -> Result<(), RasterError> {
    let header = RasterHeader {
        scan_id: raster.scan_id.clone(),
        dtype: RasterDtype::F32,
        sections: raster
            .sections
            .iter()
            .map(|s| SectionDims {
                index: s.index,
                rows: s.grid.rows(),
                cols: s.grid.cols(),
            })
            .collect(),
    };
    let mut writer = RasterWriter::create(path, header)?;
    for section in &raster.sections {
        writer.write_section_f32(&section.grid)?;
    }
    writer.finish()
}

pub fn write_reference_mask(path: &Path, mask: &ReferenceMask) -> Result<(), RasterError> {
    let header = RasterHeader {
        scan_id: mask.scan_id.clone(),
        dtype: RasterDtype::U8,
        sections: mask
            .sections
            .iter()
            .map(|s| SectionDims {
                index: s.index,
                rows: s.grid.rows(),
                cols: s.grid.cols(),
            })
            .collect(),
    };
    let mut writer = RasterWriter::create(path, header)?;
    for section in &mask.sections {
        writer.write_section_mask(&section.grid)?;
    }
    writer.finish()
}

/// Loads a probability raster, widening stored f32 values to `F`.
///
/// Values are not range-checked here so that [`crate::model::validate_scan`]
/// can report out-of-range pixels.
pub fn load_probability_raster<F: Scalar>(path: &Path) -> Result<ProbabilityRaster<F>, RasterError> {
    let mut reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let (header, _) = read_header_from(&mut reader, path)?;
    if header.dtype != RasterDtype::F32 {
        return Err(RasterError::DtypeMismatch {
            path: path.to_path_buf(),
            expected: RasterDtype::F32,
            actual: header.dtype,
        });
    }
    let mut sections = Vec::with_capacity(header.sections.len());
    for dims in &header.sections {
        let n = dims.rows * dims.cols;
        let mut bytes = vec![0u8; n * 4];
        reader
            .read_exact(&mut bytes)
            .map_err(|_| RasterError::Truncated {
                path: path.to_path_buf(),
                section: dims.index,
            })?;
        let mut data = Vec::with_capacity(n);
        for chunk in bytes.chunks_exact(4) {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            data.push(F::from_f32(v).unwrap_or_else(F::nan));
        }
        sections.push(SectionGrid {
            index: dims.index,
            grid: Grid::from_vec(dims.rows, dims.cols, data),
        });
    }
    Ok(ProbabilityRaster {
        scan_id: header.scan_id,
        sections,
    })
}

pub fn load_reference_mask(path: &Path) -> Result<ReferenceMask, RasterError> {
    let mut reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let (header, _) = read_header_from(&mut reader, path)?;
    if header.dtype != RasterDtype::U8 {
        return Err(RasterError::DtypeMismatch {
            path: path.to_path_buf(),
            expected: RasterDtype::U8,
            actual: header.dtype,
        });
    }
    let mut sections = Vec::with_capacity(header.sections.len());
    for dims in &header.sections {
        let n = dims.rows * dims.cols;
        let mut bytes = vec![0u8; n];
        reader
            .read_exact(&mut bytes)
            .map_err(|_| RasterError::Truncated {
                path: path.to_path_buf(),
                section: dims.index,
            })?;
        let mut data = Vec::with_capacity(n);
        for b in bytes {
            match b {
                0 => data.push(false),
                1 => data.push(true),
                other => {
                    return Err(RasterError::BadMaskValue {
                        path: path.to_path_buf(),
                        section: dims.index,
                        value: other,
                    })
                }
            }
        }
        sections.push(SectionGrid {
            index: dims.index,
            grid: Grid::from_vec(dims.rows, dims.cols, data),
        });
    }
    Ok(ReferenceMask {
        scan_id: header.scan_id,
        sections,
    })
}
