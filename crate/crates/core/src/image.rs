//! Hyperspectral observations and the factor matrices of the mixing model.

use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};

/// Column sums of simplex-valued matrices must be within this of 1.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// An `L × N` reflectance matrix (bands × pixels), optionally with the
/// `(height, width)` raster it was flattened from and per-band wavelengths.
///
/// Pixel `i` sits at raster position `(i / width, i % width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiImage {
    data: Matrix,
    spatial: Option<(usize, usize)>,
    wavelengths: Option<Vec<f64>>,
}

impl HsiImage {
    pub fn new(data: Matrix) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::InvalidInput(format!(
                "image must have at least one band and one pixel, got {}x{}",
                data.rows(),
                data.cols()
            )));
        }
        if let Some(pos) = data.as_slice().iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % data.rows(), pos / data.rows());
            return Err(Error::NonFinite(format!("image band {i} pixel {j}")));
        }
        if let Some(pos) = data.as_slice().iter().position(|&v| v < 0.0) {
            let (i, j) = (pos % data.rows(), pos / data.rows());
            return Err(Error::InvalidInput(format!(
                "negative reflectance {} at band {i} pixel {j}",
                data.as_slice()[pos]
            )));
        }
        Ok(Self {
            data,
            spatial: None,
            wavelengths: None,
        })
    }

    pub fn with_spatial(mut self, height: usize, width: usize) -> Result<Self> {
        if height * width != self.pixels() {
            return Err(Error::InvalidInput(format!(
                "spatial shape {height}x{width} does not cover {} pixels",
                self.pixels()
            )));
        }
        self.spatial = Some((height, width));
        Ok(self)
    }

    pub fn with_wavelengths(mut self, wavelengths: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != self.bands() {
            return Err(Error::InvalidInput(format!(
                "{} wavelengths given for {} bands",
                wavelengths.len(),
                self.bands()
            )));
        }
        self.wavelengths = Some(wavelengths);
        Ok(self)
    }

    #[inline]
    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }

    #[inline]
    pub fn bands(&self) -> usize {
        self.data.rows()
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.data.cols()
    }

    pub fn spatial(&self) -> Option<(usize, usize)> {
        self.spatial
    }

    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.wavelengths.as_deref()
    }

    /// Indices of pixels whose spectrum is identically zero.
    pub fn zero_pixels(&self) -> Vec<usize> {
        self.data
            .columns()
            .enumerate()
            .filter(|(_, c)| c.iter().all(|&v| v == 0.0))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Result of per-pixel ℓ2 normalization.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub image: HsiImage,
    /// Pixels left at zero because their spectrum had zero norm.
    pub zero_pixels: Vec<usize>,
}

/// Scales every pixel spectrum to unit ℓ2 norm. Zero spectra stay zero and
/// are reported; an image with no nonzero pixel is rejected.
pub fn l2_normalize(image: &HsiImage) -> Result<Normalized> {
    let mut data = image.data.clone();
    let mut zero_pixels = Vec::new();
    for (i, col) in data.columns_mut().enumerate() {
        let n = norm2(col);
        if n == 0.0 {
            zero_pixels.push(i);
        } else {
            col.iter_mut().for_each(|v| *v /= n);
        }
    }
    if zero_pixels.len() == image.pixels() {
        return Err(Error::DegenerateInput);
    }
    Ok(Normalized {
        image: HsiImage {
            data,
            spatial: image.spatial,
            wavelengths: image.wavelengths.clone(),
        },
        zero_pixels,
    })
}

fn check_simplex_columns(m: &Matrix, what: &'static str, tol: f64) -> Result<()> {
    for (j, c) in m.columns().enumerate() {
        if let Some(v) = c.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "{what} column {j} has entry {v} outside the simplex"
            )));
        }
        let sum: f64 = c.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::SimplexViolation {
                what,
                column: j,
                sum,
            });
        }
    }
    Ok(())
}

/// `p × N` abundances; every column lies on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix(Matrix);

impl AbundanceMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        check_simplex_columns(&m, "abundance", SIMPLEX_TOL)?;
        Ok(Self(m))
    }

    pub(crate) fn new_unchecked(m: Matrix) -> Self {
        Self(m)
    }

    /// Rescales each column to sum to one when it deviates by more than
    /// `tol`. Returns the matrix and whether any column was touched.
    pub fn renormalized(mut m: Matrix, tol: f64) -> Result<(Self, bool)> {
        let mut touched = false;
        for (j, c) in m.columns_mut().enumerate() {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("abundance column {j}")));
            }
            c.iter_mut().for_each(|v| *v = v.max(0.0));
            let sum: f64 = c.iter().sum();
            if sum <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "abundance column {j} has no positive entry"
                )));
            }
            if (sum - 1.0).abs() > tol {
                touched = true;
                c.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok((Self::new(m)?, touched))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn endmembers(&self) -> usize {
        self.0.rows()
    }

    pub fn pixels(&self) -> usize {
        self.0.cols()
    }
}

/// `N × p` pixel contributions; every column lies on the simplex `Δ_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMatrix(Matrix);

impl ContributionMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        check_simplex_columns(&m, "contribution", SIMPLEX_TOL)?;
        Ok(Self(m))
    }

    pub(crate) fn new_unchecked(m: Matrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// `L × p` endmember spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix(Matrix);

impl EndmemberMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonFinite("endmember matrix".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn bands(&self) -> usize {
        self.0.rows()
    }

    pub fn endmembers(&self) -> usize {
        self.0.cols()
    }
}
