//! Fourier analysis, the downsample/alias operator pair and Butterworth
//! anti-aliasing filters.

mod butterworth;
mod fourier;

pub use butterworth::{
    antialias_downsample, antialias_filter, butterworth_design, ButterworthFilter, FilterKind,
    Section,
};
pub use fourier::{
    alias, dft, dft_complex, downsample, idft, verify_downsampling_theorem,
    verify_downsampling_theorem_real, Spectrum,
};

/// One-sided amplitude spectrum of a real series sampled every `dt` seconds.
pub fn amplitude_spectrum(x: &[f64], dt: f64) -> crate::Result<Vec<(f64, f64)>> {
    Ok(dft(x, 1.0 / dt)?.one_sided_amplitude())
}
