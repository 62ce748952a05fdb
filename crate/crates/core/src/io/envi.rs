//! ENVI header plus raw band-sequential data.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::HsiImage;
use crate::linalg::Matrix;

/// Parsed `key = value` pairs; keys lowercased, brace blocks kept verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    fields: HashMap<String, String>,
}

impl EnviHeader {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first.trim() == "ENVI" => {}
            _ => return Err("header does not start with 'ENVI'".into()),
        }
        let mut fields = HashMap::new();
        let mut pending: Option<(String, String)> = None;
        for line in lines {
            if let Some((key, mut value)) = pending.take() {
                value.push(' ');
                value.push_str(line.trim());
                if line.contains('}') {
                    fields.insert(key, value);
                } else {
                    pending = Some((key, value));
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if value.starts_with('{') && !value.contains('}') {
                pending = Some((key, value));
            } else {
                fields.insert(key, value);
            }
        }
        if let Some((key, _)) = pending {
            return Err(format!("unterminated '{{' in field '{key}'"));
        }
        Ok(Self { fields })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    fn required_usize(&self, key: &str) -> std::result::Result<usize, String> {
        let v = self
            .get(key)
            .ok_or_else(|| format!("missing required field '{key}'"))?;
        v.parse()
            .map_err(|_| format!("field '{key}' is not a non-negative integer: '{v}'"))
    }

    fn optional_usize(&self, key: &str, default: usize) -> std::result::Result<usize, String> {
        match self.get(key) {
            None => Ok(default),
            Some(_) => self.required_usize(key),
        }
    }

    /// Entries of a `{a, b, c}` list field.
    pub fn list(&self, key: &str) -> Option<Vec<&str>> {
        let v = self.get(key)?;
        let inner = v.trim().strip_prefix('{')?.strip_suffix('}')?;
        Some(
            inner
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect(),
        )
    }
}

/// Loads a BSQ cube described by `header_path` from `data_path`.
pub fn read_envi(header_path: &Path, data_path: &Path) -> Result<HsiImage> {
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = EnviHeader::parse(&text).map_err(|m| Error::format(header_path, m))?;
    let fail = |m: String| Error::format(header_path, m);

    let samples = header.required_usize("samples").map_err(fail)?;
    let lines = header.required_usize("lines").map_err(fail)?;
    let bands = header.required_usize("bands").map_err(fail)?;
    let offset = header.optional_usize("header offset", 0).map_err(fail)?;

    let interleave = header
        .get("interleave")
        .unwrap_or("bsq")
        .to_ascii_lowercase();
    if interleave != "bsq" {
        return Err(fail(format!(
            "unsupported interleave '{interleave}' (only bsq is supported)"
        )));
    }
    let width = match header.required_usize("data type").map_err(fail)? {
        4 => 4,
        5 => 8,
        t => {
            return Err(fail(format!(
                "unsupported data type {t} (only 4 = float32 and 5 = float64)"
            )))
        }
    };
    match header.optional_usize("byte order", 0).map_err(fail)? {
        0 => {}
        1 => {
            return Err(fail(
                "unsupported byte order 1 (big-endian); only little-endian data is supported"
                    .into(),
            ))
        }
        b => return Err(fail(format!("invalid byte order {b}"))),
    }

    let wavelengths = match header.list("wavelength") {
        None => None,
        Some(items) => Some(
            items
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| fail(format!("bad wavelength entry '{s}'")))
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };

    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    let pixels = lines * samples;
    let needed = offset + bands * pixels * width;
    if bytes.len() < needed {
        return Err(Error::format(
            data_path,
            format!(
                "data file holds {} bytes, header describes {needed}",
                bytes.len()
            ),
        ));
    }
    let payload = &bytes[offset..needed];
    let values: Vec<f64> = if width == 4 {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    } else {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    // BSQ: band-major planes of line-major rasters, i.e. an L × N row-major matrix
    let data = Matrix::from_row_major(bands, pixels, &values)?;
    let image = HsiImage::new(data)?.with_spatial(lines, samples)?;
    match wavelengths {
        Some(w) => image.with_wavelengths(w),
        None => Ok(image),
    }
}

/// Data file accompanying `header_path`: the same stem with no extension,
/// or with `.img`, `.raw`, `.dat` or `.bsq`.
pub fn find_envi_data(header_path: &Path) -> Result<PathBuf> {
    let stem = header_path.with_extension("");
    std::iter::once(stem.clone())
        .chain(["img", "raw", "dat", "bsq"].map(|e| stem.with_extension(e)))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::format(header_path, "no data file found next to the header"))
}
