//! File formats: NPY and ENVI cubes in; CSV, NPY, PGM and JSON results out.

mod envi;
mod npy;
mod report;
mod tabular;

use std::fs;
use std::path::Path;

pub use envi::{find_envi_data, read_envi, EnviHeader};
pub use npy::{read_cube_npy, read_npy, write_cube_npy, write_npy, NpyArray};
pub use report::{ConfigEcho, InputDescriptor, RunReport};
pub use tabular::{read_matrix_csv, write_matrix_csv};

use crate::edaa::RunResult;
use crate::error::{Error, Result};
use crate::image::HsiImage;
use crate::linalg::Matrix;

/// Loads a cube by extension: `.npy`, or an ENVI `.hdr` with its data file.
pub fn read_cube(path: &Path) -> Result<HsiImage> {
    match extension(path).as_deref() {
        Some("npy") => read_cube_npy(path),
        Some("hdr") => read_envi(path, &find_envi_data(path)?),
        _ => Err(Error::format(
            path,
            "unrecognized cube format (expected .npy or an ENVI .hdr)",
        )),
    }
}

/// Loads a 2-D matrix from `.npy` or `.csv` (with header row).
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    match extension(path).as_deref() {
        Some("npy") => read_npy(path)?.into_matrix(path),
        Some("csv") => read_matrix_csv(path),
        _ => Err(Error::format(
            path,
            "unrecognized matrix format (expected .npy or .csv)",
        )),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
}

/// Binary 8-bit greyscale image; each value in `[0, 1]` maps to `round(255·v)`.
pub fn write_pgm(path: &Path, height: usize, width: usize, values: &[f64]) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::InvalidInput(format!(
            "{} values for a {height}x{width} map",
            values.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        values
            .iter()
            .map(|v| (255.0 * v.clamp(0.0, 1.0)).round() as u8),
    );
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `endmembers.csv`, `abundances.npy`, `report.json` and, when the
/// raster shape is known, one `maps/endmember_<k>.pgm` per endmember.
pub fn write_outputs(
    dir: &Path,
    result: &RunResult,
    report: &RunReport,
    spatial: Option<(usize, usize)>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix_csv(&dir.join("endmembers.csv"), result.endmembers.matrix())?;
    write_npy(&dir.join("abundances.npy"), result.abundances.matrix())?;
    let report_path = dir.join("report.json");
    fs::write(&report_path, report.to_json()).map_err(|e| Error::io(&report_path, e))?;

    if let Some((h, w)) = spatial {
        let maps = dir.join("maps");
        fs::create_dir_all(&maps).map_err(|e| Error::io(&maps, e))?;
        let a = result.abundances.matrix();
        for k in 0..a.rows() {
            write_pgm(&maps.join(format!("endmember_{k}.pgm")), h, w, &a.row(k))?;
        }
    }
    Ok(())
}
