//! Synthetic scenes from the linear mixing model `X = E·A + noise`.

use crate::error::{Error, Result};
use crate::image::{AbundanceMatrix, EndmemberMatrix, HsiImage};
use crate::linalg::{matmul, norm2, Matrix};
use crate::rng::Prng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub bands: usize,
    pub pixels: usize,
    pub endmembers: usize,
    /// Target signal-to-noise ratio in dB; `None` for a noiseless scene.
    pub snr_db: Option<f64>,
    /// Dirichlet concentration of the abundance columns.
    pub dirichlet_alpha: f64,
    /// Overwrite the first `p` pixels with one pure pixel per endmember.
    pub pure_pixels: bool,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(bands: usize, pixels: usize, endmembers: usize) -> Self {
        Self {
            bands,
            pixels,
            endmembers,
            snr_db: None,
            dirichlet_alpha: 1.0,
            pure_pixels: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.endmembers < 2 || self.bands < self.endmembers {
            return Err(Error::InvalidConfig(format!(
                "need bands >= endmembers >= 2, got {} bands and {} endmembers",
                self.bands, self.endmembers
            )));
        }
        if self.pixels < self.endmembers {
            return Err(Error::InvalidConfig(format!(
                "need at least as many pixels as endmembers, got {}",
                self.pixels
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidConfig("SNR must be finite".into()));
            }
        }
        if !(self.dirichlet_alpha.is_finite() && self.dirichlet_alpha > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "Dirichlet concentration must be positive, got {}",
                self.dirichlet_alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub image: HsiImage,
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMatrix,
}

/// One draw from `Dirichlet(alpha·1ₚ)` via normalized Gamma variates.
pub fn dirichlet_column(rng: &mut Prng, p: usize, alpha: f64) -> Vec<f64> {
    if p == 1 {
        return vec![1.0];
    }
    loop {
        let mut v: Vec<f64> = (0..p).map(|_| rng.next_gamma(alpha)).collect();
        let sum: f64 = v.iter().sum();
        // tiny alpha can underflow every variate; redraw
        if sum > 0.0 && sum.is_finite() {
            v.iter_mut().for_each(|x| *x /= sum);
            return v;
        }
    }
}

/// Level of the flat continuum shared by every spectrum. Real materials
/// are strongly correlated; this keeps pairwise cosines around 0.9-0.98.
const CONTINUUM: f64 = 0.8;

/// Smooth non-negative spectrum: a flat continuum plus a few Gaussian
/// bumps over the band axis, scaled to unit ℓ2 norm.
fn smooth_spectrum(rng: &mut Prng, bands: usize) -> Vec<f64> {
    let l = bands as f64;
    let baseline = CONTINUUM * (1.0 + rng.next_unit());
    let bumps = 3 + rng.next_index(3);
    let params: Vec<(f64, f64, f64)> = (0..bumps)
        .map(|_| {
            let center = rng.next_unit() * (l - 1.0);
            let width = l * (0.03 + 0.1 * rng.next_unit());
            let amplitude = 0.2 + 0.8 * rng.next_unit();
            (center, width, amplitude)
        })
        .collect();
    let mut s: Vec<f64> = (0..bands)
        .map(|b| {
            let t = b as f64;
            baseline
                + params
                    .iter()
                    .map(|&(c, w, a)| a * (-(t - c).powi(2) / (2.0 * w * w)).exp())
                    .sum::<f64>()
        })
        .collect();
    let n = norm2(&s);
    s.iter_mut().for_each(|v| *v /= n);
    s
}

/// Draws a scene. The stream is consumed in a fixed order (spectra,
/// abundances, noise), so the output is a pure function of `spec`.
pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let (l, n, p) = (spec.bands, spec.pixels, spec.endmembers);
    let mut rng = Prng::new(spec.seed);

    let spectra: Vec<Vec<f64>> = (0..p).map(|_| smooth_spectrum(&mut rng, l)).collect();
    let e = Matrix::from_columns(l, &spectra)?;

    let mut a = Matrix::zeros(p, n);
    for col in a.columns_mut() {
        col.copy_from_slice(&dirichlet_column(&mut rng, p, spec.dirichlet_alpha));
    }
    if spec.pure_pixels {
        for k in 0..p {
            let col = a.col_mut(k);
            col.fill(0.0);
            col[k] = 1.0;
        }
    }

    let clean = matmul(&e, &a)?;
    let x = match spec.snr_db {
        None => clean,
        Some(snr) => {
            let noise: Vec<f64> = (0..l * n).map(|_| rng.next_normal()).collect();
            let noise_power: f64 = noise.iter().map(|v| v * v).sum();
            let target = clean.frobenius_norm_sq() / 10f64.powf(snr / 10.0);
            let scale = (target / noise_power).sqrt();
            let data = clean
                .as_slice()
                .iter()
                .zip(&noise)
                .map(|(c, z)| (c + scale * z).max(0.0))
                .collect();
            Matrix::from_col_major(l, n, data)?
        }
    };

    Ok(Synthetic {
        image: HsiImage::new(x)?,
        endmembers: EndmemberMatrix::new(e)?,
        abundances: AbundanceMatrix::new(a)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edaa::{default_abundance_step, estimate_abundances};

    #[test]
    fn noiseless_scene_is_exactly_mixed() {
        let mut spec = SynthSpec::new(20, 100, 3);
        spec.seed = 4;
        let s = generate(&spec).unwrap();
        let ea = matmul(s.endmembers.matrix(), s.abundances.matrix()).unwrap();
        assert_eq!(s.image.data().sub(&ea).unwrap().frobenius_norm_sq(), 0.0);
        for c in s.endmembers.matrix().columns() {
            assert!((norm2(c) - 1.0).abs() < 1e-12);
            assert!(c.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn realized_snr_matches_target() {
        for seed in 0..5 {
            let mut spec = SynthSpec::new(20, 500, 3);
            spec.snr_db = Some(20.0);
            spec.seed = seed;
            let s = generate(&spec).unwrap();
            let ea = matmul(s.endmembers.matrix(), s.abundances.matrix()).unwrap();
            let noise = s.image.data().sub(&ea).unwrap().frobenius_norm_sq();
            let snr = 10.0 * (ea.frobenius_norm_sq() / noise).log10();
            assert!((snr - 20.0).abs() < 0.1, "{snr}");
        }
    }

    #[test]
    fn pure_pixels_are_basis_vectors() {
        let mut spec = SynthSpec::new(10, 50, 4);
        spec.pure_pixels = true;
        let s = generate(&spec).unwrap();
        for k in 0..4 {
            let col = s.abundances.matrix().col(k);
            for (i, &v) in col.iter().enumerate() {
                assert_eq!(v, if i == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let mut spec = SynthSpec::new(15, 60, 3);
        spec.snr_db = Some(25.0);
        spec.seed = 11;
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.abundances, b.abundances);
        spec.seed = 12;
        assert_ne!(generate(&spec).unwrap().image, a.image);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&SynthSpec::new(2, 10, 3)).is_err());
        assert!(generate(&SynthSpec::new(10, 2, 3)).is_err());
        assert!(generate(&SynthSpec::new(10, 10, 1)).is_err());
        let mut s = SynthSpec::new(10, 10, 3);
        s.dirichlet_alpha = 0.0;
        assert!(generate(&s).is_err());
        s.dirichlet_alpha = 1.0;
        s.snr_db = Some(f64::INFINITY);
        assert!(generate(&s).is_err());
    }

    #[test]
    fn dirichlet_columns() {
        let mut rng = Prng::new(1);
        for &alpha in &[0.1, 1.0, 5.0] {
            for _ in 0..100 {
                let c = dirichlet_column(&mut rng, 4, alpha);
                assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(c.iter().all(|&v| v >= 0.0));
            }
        }
        assert_eq!(dirichlet_column(&mut rng, 1, 0.3), vec![1.0]);
    }

    #[test]
    fn dirichlet_mean_is_uniform() {
        let mut rng = Prng::new(8);
        let n = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            for (m, v) in mean.iter_mut().zip(dirichlet_column(&mut rng, 3, 1.0)) {
                *m += v / n as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0 / 3.0).abs() < 0.01, "{mean:?}");
        }
    }

    #[test]
    fn noiseless_scene_lies_in_the_endmember_cone() {
        // interior mixtures only: at a zero-residual optimum the gradient
        // vanishes, so exact zeros (pure pixels) are approached sublinearly
        let mut spec = SynthSpec::new(20, 60, 3);
        spec.seed = 2;
        let s = generate(&spec).unwrap();
        let eta = default_abundance_step(&s.endmembers).unwrap();
        let a = estimate_abundances(&s.image, &s.endmembers, 100_000, eta).unwrap();
        let recon = matmul(s.endmembers.matrix(), a.matrix()).unwrap();
        let err = s
            .image
            .data()
            .sub(&recon)
            .unwrap()
            .frobenius_norm_sq()
            .sqrt();
        let scale = s.image.data().frobenius_norm_sq().sqrt();
        assert!(err < 1e-6 * scale, "{err} vs {scale}");
    }
}
