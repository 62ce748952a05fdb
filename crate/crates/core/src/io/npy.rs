//! NPY v1.0/v2.0 arrays of little-endian `f4`/`f8`, C order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::HsiImage;
use crate::linalg::Matrix;

const MAGIC: &[u8] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// A dense array as stored on disk: its shape and values in C order.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NpyArray {
    /// Interprets a 2-D array of shape `(rows, cols)` as a matrix.
    pub fn into_matrix(self, path: &Path) -> Result<Matrix> {
        match self.shape[..] {
            [rows, cols] => Matrix::from_row_major(rows, cols, &self.data),
            _ => Err(Error::format(
                path,
                format!("expected a 2-D array, got shape {:?}", self.shape),
            )),
        }
    }
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_npy(&bytes).map_err(|msg| Error::format(path, msg))
}

fn parse_npy(bytes: &[u8]) -> std::result::Result<NpyArray, String> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err("not an NPY file (bad magic)".into());
    }
    let (header_len, header_start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 => {
            if bytes.len() < 12 {
                return Err("truncated NPY preamble".into());
            }
            let len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
            (len as usize, 12)
        }
        v => return Err(format!("unsupported NPY format version {v}.{}", bytes[7])),
    };
    let data_start = header_start + header_len;
    if bytes.len() < data_start {
        return Err("truncated NPY header".into());
    }
    let header = std::str::from_utf8(&bytes[header_start..data_start])
        .map_err(|_| "NPY header is not valid text".to_string())?;
    let (dtype, shape) = parse_header(header)?;

    let count: usize = shape.iter().product();
    let payload = &bytes[data_start..];
    let expected = count * dtype.size();
    if payload.len() != expected {
        return Err(format!(
            "data section holds {} bytes, shape {shape:?} needs {expected}",
            payload.len()
        ));
    }
    let data = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(NpyArray { shape, data })
}

/// Value text following `'key':` in the header dictionary.
fn dict_value<'a>(header: &'a str, key: &str) -> std::result::Result<&'a str, String> {
    let pattern = format!("'{key}'");
    let at = header
        .find(&pattern)
        .ok_or_else(|| format!("NPY header lacks '{key}'"))?;
    let rest = header[at + pattern.len()..].trim_start();
    rest.strip_prefix(':')
        .map(str::trim_start)
        .ok_or_else(|| format!("malformed '{key}' entry in NPY header"))
}

fn parse_header(header: &str) -> std::result::Result<(Dtype, Vec<usize>), String> {
    let descr = dict_value(header, "descr")?;
    let descr = descr
        .strip_prefix('\'')
        .and_then(|s| s.split('\'').next())
        .ok_or("malformed 'descr' entry in NPY header")?;
    let dtype = match descr {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        other => {
            return Err(format!(
            "unsupported dtype '{other}' (expected little-endian float32 '<f4' or float64 '<f8')"
        ))
        }
    };

    let order = dict_value(header, "fortran_order")?;
    if order.starts_with("True") {
        return Err("Fortran-ordered arrays are not supported; save with C order".into());
    } else if !order.starts_with("False") {
        return Err("malformed 'fortran_order' entry in NPY header".into());
    }

    let shape = dict_value(header, "shape")?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or("malformed 'shape' entry in NPY header")?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| format!("bad dimension '{s}' in NPY shape"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((dtype, shape))
}

/// Reads a cube: `(L, N)` arrays as-is, `(H, W, L)` arrays flattened so that
/// pixel `row·W + col` holds the spectrum at `(row, col)`.
pub fn read_cube_npy(path: &Path) -> Result<HsiImage> {
    let arr = read_npy(path)?;
    match arr.shape[..] {
        [_, _] => HsiImage::new(arr.into_matrix(path)?),
        [h, w, l] => {
            // C order (h, w, l) is already pixel-major: one contiguous spectrum per pixel
            let data = Matrix::from_col_major(l, h * w, arr.data)?;
            HsiImage::new(data)?.with_spatial(h, w)
        }
        _ => Err(Error::format(
            path,
            format!(
                "expected a (bands, pixels) or (height, width, bands) array, got shape {:?}",
                arr.shape
            ),
        )),
    }
}

fn encode(shape: &[usize], values: impl Iterator<Item = f64>) -> Vec<u8> {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    let shape_text = if dims.len() == 1 {
        format!("({},)", dims[0])
    } else {
        format!("({})", dims.join(", "))
    };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape_text}, }}");
    // preamble (10 bytes) + header + newline padded to a multiple of 64
    let unpadded = MAGIC.len() + 4 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + 8 * shape.iter().product::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Writes a matrix as a 2-D `(rows, cols)` float64 array.
pub fn write_npy(path: &Path, m: &Matrix) -> Result<()> {
    let bytes = encode(&[m.rows(), m.cols()], m.to_row_major().into_iter());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a cube as `(H, W, L)` when its raster shape is known, else as `(L, N)`.
pub fn write_cube_npy(path: &Path, image: &HsiImage) -> Result<()> {
    match image.spatial() {
        Some((h, w)) => {
            let bytes = encode(
                &[h, w, image.bands()],
                image.data().as_slice().iter().copied(),
            );
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        None => write_npy(path, image.data()),
    }
}
