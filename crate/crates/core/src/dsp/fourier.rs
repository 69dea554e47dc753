use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unnormalized DFT bins `X(k) = Σₙ x(n)·e^{−2πikn/N}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    /// Sample rate of the originating signal (Hz).
    pub sample_rate: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Frequency of bin `k` in Hz (bins above N/2 are negative frequencies).
    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.bins.len() as f64
    }

    /// One-sided amplitude spectrum `(frequency Hz, |X(k)|)` for `k ≤ N/2`.
    pub fn one_sided_amplitude(&self) -> Vec<(f64, f64)> {
        (0..=self.bins.len() / 2)
            .map(|k| (self.frequency(k), self.bins[k].norm()))
            .collect()
    }
}

fn transform(mut buf: Vec<Complex64>, inverse: bool) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(buf.len())
    } else {
        planner.plan_fft_forward(buf.len())
    };
    fft.process(&mut buf);
    buf
}

pub fn dft_complex(x: &[Complex64], sample_rate: f64) -> Result<Spectrum> {
    if x.is_empty() {
        return Err(Error::invalid("DFT of an empty sequence"));
    }
    Ok(Spectrum {
        bins: transform(x.to_vec(), false),
        sample_rate,
    })
}

pub fn dft(x: &[f64], sample_rate: f64) -> Result<Spectrum> {
    let buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_complex(&buf, sample_rate)
}

/// Inverse DFT, `x(n) = (1/N) Σₖ X(k)·e^{2πikn/N}`.
pub fn idft(spectrum: &Spectrum) -> Result<Vec<Complex64>> {
    if spectrum.is_empty() {
        return Err(Error::invalid("inverse DFT of an empty spectrum"));
    }
    let n = spectrum.len() as f64;
    Ok(transform(spectrum.bins.clone(), true)
        .into_iter()
        .map(|v| v / n)
        .collect())
}

/// Keeps every `factor`-th sample starting with the first.
pub fn downsample<T: Copy>(x: &[T], factor: usize) -> Result<Vec<T>> {
    if factor == 0 {
        return Err(Error::invalid("decimation factor must be positive"));
    }
    if !x.len().is_multiple_of(factor) {
        return Err(Error::NotDivisible {
            length: x.len(),
            factor,
        });
    }
    Ok(x.iter().step_by(factor).copied().collect())
}

/// Folds a length `L·M` spectrum onto `M` bins: `out(m) = Σₗ X(m + l·M)`.
pub fn alias(spectrum: &Spectrum, factor: usize) -> Result<Spectrum> {
    if factor == 0 {
        return Err(Error::invalid("alias factor must be positive"));
    }
    let n = spectrum.len();
    if !n.is_multiple_of(factor) {
        return Err(Error::NotDivisible { length: n, factor });
    }
    let m = n / factor;
    let bins = (0..m)
        .map(|k| (0..factor).map(|l| spectrum.bins[k + l * m]).sum())
        .collect();
    Ok(Spectrum {
        bins,
        sample_rate: spectrum.sample_rate / factor as f64,
    })
}

/// `max |DFT(downsample(x)) − ALIAS(DFT(x))/L|`; zero up to rounding for every `x`.
pub fn verify_downsampling_theorem(x: &[Complex64], factor: usize) -> Result<f64> {
    let decimated = downsample(x, factor)?;
    let lhs = dft_complex(&decimated, 1.0 / factor as f64)?;
    let rhs = alias(&dft_complex(x, 1.0)?, factor)?;
    let scale = 1.0 / factor as f64;
    Ok(lhs
        .bins
        .iter()
        .zip(&rhs.bins)
        .map(|(a, b)| (a - b * scale).norm())
        .fold(0.0, f64::max))
}

pub fn verify_downsampling_theorem_real(x: &[f64], factor: usize) -> Result<f64> {
    let buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    verify_downsampling_theorem(&buf, factor)
}
