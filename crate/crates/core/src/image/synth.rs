use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridGeometry, ImageGrid};
use crate::error::{Error, Result};

/// Synthetic test images. `amplitude` is the peak value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImageSpec {
    /// `A exp(-|x - c|^2 / (2 sigma^2))`.
    Gaussian {
        #[serde(default)]
        center: [f64; 2],
        sigma: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    AnisotropicGaussian {
        #[serde(default)]
        center: [f64; 2],
        /// Widths along the rotated axes.
        sigmas: [f64; 2],
        #[serde(default)]
        orientation: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Gaussian envelope times `cos(2 pi k <x - c, u> + phase)`.
    Gabor {
        #[serde(default)]
        center: [f64; 2],
        sigma: f64,
        frequency: f64,
        #[serde(default)]
        orientation: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// White noise smoothed at `correlation_length`, under a Gaussian envelope.
    BandlimitedNoise {
        seed: u64,
        correlation_length: f64,
        envelope_sigma: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Values below this fraction of the peak are stored as exact zeros.
const FLUSH: f64 = 1e-12;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

impl ImageSpec {
    pub fn gaussian(center: [f64; 2], sigma: f64) -> Self {
        ImageSpec::Gaussian {
            center,
            sigma,
            amplitude: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let amp = match *self {
            ImageSpec::Gaussian { sigma, amplitude, .. } => {
                positive("sigma", sigma)?;
                amplitude
            }
            ImageSpec::AnisotropicGaussian { sigmas, amplitude, .. } => {
                positive("sigmas[0]", sigmas[0])?;
                positive("sigmas[1]", sigmas[1])?;
                amplitude
            }
            ImageSpec::Gabor {
                sigma,
                frequency,
                amplitude,
                ..
            } => {
                positive("sigma", sigma)?;
                if !(frequency >= 0.0 && frequency.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "frequency must be >= 0, got {frequency}"
                    )));
                }
                amplitude
            }
            ImageSpec::BandlimitedNoise {
                correlation_length,
                envelope_sigma,
                amplitude,
                ..
            } => {
                positive("correlation_length", correlation_length)?;
                positive("envelope_sigma", envelope_sigma)?;
                amplitude
            }
        };
        if !amp.is_finite() {
            return Err(Error::InvalidArgument(format!("amplitude must be finite, got {amp}")));
        }
        Ok(())
    }

    fn amplitude(&self) -> f64 {
        match *self {
            ImageSpec::Gaussian { amplitude, .. }
            | ImageSpec::AnisotropicGaussian { amplitude, .. }
            | ImageSpec::Gabor { amplitude, .. }
            | ImageSpec::BandlimitedNoise { amplitude, .. } => amplitude,
        }
    }
}

/// Samples `spec` on `geometry` and requires the support margin `margin`.
pub fn synthesize(spec: &ImageSpec, geometry: GridGeometry, margin: f64) -> Result<ImageGrid> {
    geometry.validate()?;
    if geometry.resolution < 16 {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be at least 16, got {}",
            geometry.resolution
        )));
    }
    spec.validate()?;
    if spec.amplitude() == 0.0 {
        return Ok(ImageGrid::zeros(geometry));
    }
    let mut values = match *spec {
        ImageSpec::Gaussian {
            center,
            sigma,
            amplitude,
        } => sample(geometry, |x, y| {
            let (dx, dy) = (x - center[0], y - center[1]);
            amplitude * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        }),
        ImageSpec::AnisotropicGaussian {
            center,
            sigmas,
            orientation,
            amplitude,
        } => {
            let (s, c) = orientation.sin_cos();
            sample(geometry, |x, y| {
                let (dx, dy) = (x - center[0], y - center[1]);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                amplitude * (-(u * u / (2.0 * sigmas[0] * sigmas[0]) + v * v / (2.0 * sigmas[1] * sigmas[1]))).exp()
            })
        }
        ImageSpec::Gabor {
            center,
            sigma,
            frequency,
            orientation,
            phase,
            amplitude,
        } => {
            let (s, c) = orientation.sin_cos();
            let k = 2.0 * std::f64::consts::PI * frequency;
            sample(geometry, |x, y| {
                let (dx, dy) = (x - center[0], y - center[1]);
                let env = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                amplitude * env * (k * (c * dx + s * dy) + phase).cos()
            })
        }
        ImageSpec::BandlimitedNoise {
            seed,
            correlation_length,
            envelope_sigma,
            center,
            amplitude,
        } => noise(geometry, seed, correlation_length, envelope_sigma, center, amplitude),
    };
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in &mut values {
        if v.abs() < FLUSH * peak {
            *v = 0.0;
        }
    }
    let f = ImageGrid::from_values(geometry, values)?;
    if !f.margin_ok(margin) {
        return Err(Error::DegenerateInput(format!(
            "support-margin violation: image needs margin {margin} but its support comes within {:.4} of the grid boundary",
            f.clear_margin()
        )));
    }
    Ok(f)
}

fn sample<F: Fn(f64, f64) -> f64 + Sync>(geometry: GridGeometry, f: F) -> Vec<f64> {
    let n = geometry.resolution;
    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        let y = geometry.coord(j);
        for (i, v) in row.iter_mut().enumerate() {
            *v = f(geometry.coord(i), y);
        }
    });
    values
}

fn noise(
    geometry: GridGeometry,
    seed: u64,
    correlation_length: f64,
    envelope_sigma: f64,
    center: [f64; 2],
    amplitude: f64,
) -> Vec<f64> {
    let n = geometry.resolution;
    let h = geometry.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let s = correlation_length / h;
    let half = (4.0 * s).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|k| {
            let d = k as f64 - half as f64;
            (-d * d / (2.0 * s * s)).exp()
        })
        .collect();
    let conv_row = |src: &[f64], dst: &mut [f64]| {
        for (i, d) in dst.iter_mut().enumerate() {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let mut acc = 0.0;
            for (k, v) in src[lo..=hi].iter().enumerate() {
                acc += kernel[lo + k + half - i] * v;
            }
            *d = acc;
        }
    };
    let mut rows = vec![0.0; n * n];
    rows.par_chunks_mut(n)
        .zip(white.par_chunks(n))
        .for_each(|(dst, src)| conv_row(src, dst));
    // transpose, blur columns, and transpose back
    let mut t = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            t[i * n + j] = rows[j * n + i];
        }
    }
    let mut cols = vec![0.0; n * n];
    cols.par_chunks_mut(n)
        .zip(t.par_chunks(n))
        .for_each(|(dst, src)| conv_row(src, dst));

    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        let y = geometry.coord(j) - center[1];
        for (i, v) in row.iter_mut().enumerate() {
            let x = geometry.coord(i) - center[0];
            *v = cols[i * n + j] * (-(x * x + y * y) / (2.0 * envelope_sigma * envelope_sigma)).exp();
        }
    });
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let c = amplitude / peak;
        for v in &mut out {
            *v *= c;
        }
    }
    out
}
