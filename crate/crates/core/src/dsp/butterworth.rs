//! Butterworth low-pass design as cascaded second-order sections.
//!
//! Analog prototypes place the `N` poles equally spaced on the left half of
//! the circle of radius `ω_c`, so `|B(ω)|² = 1/(1 + (ω/ω_c)^{2N})`. Digital
//! filters use the bilinear map `s = (1 − z⁻¹)/(1 + z⁻¹)` with the cutoff
//! pre-warped to `tan(ω_c/2)`, which gives exactly
//! `|B(ω)|² = 1/(1 + (tan(ω/2)/tan(ω_c/2))^{2N})`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rational section `(b0 + b1·w + b2·w²) / (1 + a1·w + a2·w²)`.
///
/// For analog sections `w = 1/s`; for digital ones `w = z⁻¹`. First-order
/// sections have `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Section {
    fn response(&self, w: Complex64) -> Complex64 {
        let num = self.b[0] + w * (self.b[1] + w * self.b[2]);
        let den = self.a[0] + w * (self.a[1] + w * self.a[2]);
        num / den
    }

    fn is_first_order(&self) -> bool {
        self.a[2] == 0.0 && self.b[2] == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    Analog,
    Digital,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ButterworthFilter {
    pub order: usize,
    /// Analog: rad/s. Digital: normalized rad/sample in `(0, π)`.
    pub cutoff: f64,
    pub kind: FilterKind,
    pub sections: Vec<Section>,
}

/// Analog prototype poles in the upper-left quadrant plus the real pole for odd orders.
fn prototype_poles(order: usize, radius: f64) -> (Vec<Complex64>, Option<f64>) {
    let n = order as f64;
    let pairs = (0..order / 2)
        .map(|p| {
            let theta = PI * (2.0 * p as f64 + 1.0 + n) / (2.0 * n);
            Complex64::from_polar(radius, theta)
        })
        .collect();
    let real = (order % 2 == 1).then_some(-radius);
    (pairs, real)
}

/// Designs a Butterworth low-pass filter.
///
/// `cutoff` is in rad/s for [`FilterKind::Analog`] and normalized rad/sample
/// for [`FilterKind::Digital`] (use [`ButterworthFilter::digital_hz`] for Hz).
pub fn butterworth_design(order: usize, cutoff: f64, kind: FilterKind) -> Result<ButterworthFilter> {
    if order == 0 {
        return Err(Error::invalid("filter order must be at least 1"));
    }
    match kind {
        FilterKind::Analog if !(cutoff.is_finite() && cutoff > 0.0) => {
            return Err(Error::invalid(format!("analog cutoff must be positive, got {cutoff}")));
        }
        FilterKind::Digital if !(cutoff > 0.0 && cutoff < PI) => {
            return Err(Error::invalid(format!(
                "digital cutoff must lie in (0, π) rad/sample, got {cutoff}"
            )));
        }
        _ => {}
    }
    let radius = match kind {
        FilterKind::Analog => cutoff,
        FilterKind::Digital => (cutoff / 2.0).tan(),
    };
    let (pairs, real) = prototype_poles(order, radius);
    let mut sections = Vec::with_capacity(order.div_ceil(2));
    if let Some(p) = real {
        // ω_c/(s + ω_c)
        let analog = Section {
            b: [0.0, -p, 0.0],
            a: [1.0, -p, 0.0],
        };
        sections.push(match kind {
            FilterKind::Analog => analog,
            FilterKind::Digital => bilinear_first_order(-p),
        });
    }
    for pole in pairs {
        // |p|²/(s² − 2Re(p)s + |p|²)
        let c1 = -2.0 * pole.re;
        let c0 = pole.norm_sqr();
        sections.push(match kind {
            FilterKind::Analog => Section {
                b: [0.0, 0.0, c0],
                a: [1.0, c1, c0],
            },
            FilterKind::Digital => bilinear_second_order(c1, c0),
        });
    }
    let filter = ButterworthFilter {
        order,
        cutoff,
        kind,
        sections,
    };
    if !filter.is_stable() {
        return Err(Error::NonFinite("designed filter has an unstable pole".into()));
    }
    Ok(filter)
}

/// `w/(s + w)` with `s = (1 − z⁻¹)/(1 + z⁻¹)`.
fn bilinear_first_order(w: f64) -> Section {
    let d = 1.0 + w;
    Section {
        b: [w / d, w / d, 0.0],
        a: [1.0, (w - 1.0) / d, 0.0],
    }
}

/// `c0/(s² + c1·s + c0)` with `s = (1 − z⁻¹)/(1 + z⁻¹)`.
fn bilinear_second_order(c1: f64, c0: f64) -> Section {
    let d = 1.0 + c1 + c0;
    Section {
        b: [c0 / d, 2.0 * c0 / d, c0 / d],
        a: [1.0, 2.0 * (c0 - 1.0) / d, (1.0 - c1 + c0) / d],
    }
}

impl ButterworthFilter {
    /// Digital design from a cutoff in Hz at `sample_rate` Hz.
    pub fn digital_hz(order: usize, cutoff_hz: f64, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !(cutoff_hz > 0.0 && cutoff_hz < sample_rate / 2.0) {
            return Err(Error::invalid(format!(
                "cutoff {cutoff_hz} Hz must lie below Nyquist of {sample_rate} Hz"
            )));
        }
        butterworth_design(order, 2.0 * PI * cutoff_hz / sample_rate, FilterKind::Digital)
    }

    /// Complex response at `omega` (rad/s analog, rad/sample digital).
    pub fn response(&self, omega: f64) -> Complex64 {
        let w = match self.kind {
            // w = 1/s at s = jω
            FilterKind::Analog => {
                if omega == 0.0 {
                    return Complex64::new(1.0, 0.0);
                }
                Complex64::new(0.0, -1.0 / omega)
            }
            FilterKind::Digital => Complex64::from_polar(1.0, -omega),
        };
        self.sections.iter().map(|s| s.response(w)).product()
    }

    pub fn magnitude(&self, omega: f64) -> f64 {
        self.response(omega).norm()
    }

    /// The closed-form squared magnitude the design is meant to realize.
    pub fn ideal_magnitude_squared(&self, omega: f64) -> f64 {
        let ratio = match self.kind {
            FilterKind::Analog => omega / self.cutoff,
            FilterKind::Digital => (omega / 2.0).tan() / (self.cutoff / 2.0).tan(),
        };
        1.0 / (1.0 + ratio.abs().powi(2 * self.order as i32))
    }

    /// Poles of every section.
    pub fn poles(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        for s in &self.sections {
            match self.kind {
                // den(s) = s² + (a1/a0)... written in w = 1/s: a0 + a1/s + a2/s²
                FilterKind::Analog => {
                    if s.is_first_order() {
                        out.push(Complex64::new(-s.a[1] / s.a[0], 0.0));
                    } else {
                        out.extend(quadratic_roots(s.a[0], s.a[1], s.a[2]));
                    }
                }
                // a0 + a1 z⁻¹ + a2 z⁻² = 0 ⇔ a0 z² + a1 z + a2 = 0
                FilterKind::Digital => {
                    if s.is_first_order() {
                        out.push(Complex64::new(-s.a[1] / s.a[0], 0.0));
                    } else {
                        out.extend(quadratic_roots(s.a[0], s.a[1], s.a[2]));
                    }
                }
            }
        }
        out
    }

    pub fn is_stable(&self) -> bool {
        let poles = self.poles();
        match self.kind {
            FilterKind::Analog => poles.iter().all(|p| p.re < 0.0),
            FilterKind::Digital => poles.iter().all(|p| p.norm() < 1.0),
        }
    }

    /// Runs the section cascade over `x`; zero-phase applies it forward and backward.
    ///
    /// Only digital filters act on samples; analog designs return an error.
    pub fn apply(&self, x: &[f64], zero_phase: bool) -> Result<Vec<f64>> {
        if self.kind != FilterKind::Digital {
            return Err(Error::invalid("only digital filters can be applied to samples"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("filter input".into()));
        }
        Ok(if zero_phase {
            self.filtfilt(x)
        } else {
            self.sosfilt(x, None)
        })
    }

    /// Direct-form-II-transposed cascade; `initial` is the input level the
    /// section states are settled to (steady state for a constant input).
    fn sosfilt(&self, x: &[f64], initial: Option<f64>) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut level = initial;
        for s in &self.sections {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            let (mut z1, mut z2) = match level {
                Some(u) => {
                    let gain = (b0 + b1 + b2) / (1.0 + a1 + a2);
                    let out = gain * u;
                    let z2 = b2 * u - a2 * out;
                    (b1 * u - a1 * out + z2, z2)
                }
                None => (0.0, 0.0),
            };
            for v in y.iter_mut() {
                let input = *v;
                let out = b0 * input + z1;
                z1 = b1 * input - a1 * out + z2;
                z2 = b2 * input - a2 * out;
                *v = out;
            }
            level = level.map(|u| u * (b0 + b1 + b2) / (1.0 + a1 + a2));
        }
        y
    }

    fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return x.to_vec();
        }
        // Odd extension at both ends suppresses start-up transients.
        let pad = (6 * self.sections.len() + 3).max(self.settle_length()).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        let forward = self.sosfilt(&ext, Some(ext[0]));
        let mut rev: Vec<f64> = forward.into_iter().rev().collect();
        let start = rev[0];
        rev = self.sosfilt(&rev, Some(start));
        rev.reverse();
        rev[pad..pad + n].to_vec()
    }

    /// Rough decay length (samples) of the slowest pole.
    fn settle_length(&self) -> usize {
        let r = self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
        if r <= 0.0 || r >= 1.0 {
            return 0;
        }
        // e-folding time times 3
        (3.0 / -r.ln()).ceil() as usize
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> [Complex64; 2] {
    let disc = Complex64::new(b * b - 4.0 * a * c, 0.0).sqrt();
    [(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)]
}

/// Zero-phase low-pass at half the decimated Nyquist frequency, then keep every
/// `factor`-th sample.
pub fn antialias_downsample(x: &[f64], factor: usize, order: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::invalid("decimation factor must be positive"));
    }
    if !x.len().is_multiple_of(factor) {
        return Err(Error::NotDivisible {
            length: x.len(),
            factor,
        });
    }
    let filter = antialias_filter(factor, order)?;
    let smoothed = filter.apply(x, true)?;
    super::downsample(&smoothed, factor)
}

/// The low-pass used by [`antialias_downsample`]: cutoff `π/(2L)` rad/sample.
pub fn antialias_filter(factor: usize, order: usize) -> Result<ButterworthFilter> {
    butterworth_design(order, PI / (2.0 * factor as f64), FilterKind::Digital)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_analog_points() {
        let f = butterworth_design(1, 3.0, FilterKind::Analog).unwrap();
        assert!((f.magnitude(0.0) - 1.0).abs() < 1e-12);
        assert!((f.magnitude(3.0) - 0.5_f64.sqrt()).abs() < 1e-12);
        assert!((f.magnitude(6.0).powi(2) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn fourth_order_analog_at_twice_cutoff() {
        let f = butterworth_design(4, 1.0, FilterKind::Analog).unwrap();
        assert!((f.magnitude(2.0).powi(2) - 1.0 / 257.0).abs() < 1e-12);
    }

    #[test]
    fn digital_half_power_at_cutoff() {
        let f = butterworth_design(4, 0.5 * PI, FilterKind::Digital).unwrap();
        assert!((f.magnitude(0.5 * PI).powi(2) - 0.5).abs() < 1e-12);
        assert!((f.magnitude(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn design_errors() {
        assert!(butterworth_design(0, 1.0, FilterKind::Analog).is_err());
        assert!(butterworth_design(2, PI, FilterKind::Digital).is_err());
        assert!(butterworth_design(2, -1.0, FilterKind::Analog).is_err());
        assert!(ButterworthFilter::digital_hz(2, 60.0, 100.0).is_err());
    }

    #[test]
    fn section_layout() {
        let f = butterworth_design(5, 0.3, FilterKind::Digital).unwrap();
        assert_eq!(f.sections.len(), 3);
        assert!(f.sections[0].is_first_order());
        assert!(f.is_stable());
        assert_eq!(f.poles().len(), 5);
        let a = butterworth_design(6, 2.0, FilterKind::Analog).unwrap();
        assert!(a.is_stable());
        for p in a.poles() {
            assert!((p.norm() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_passes_and_zero_stays_zero() {
        let f = butterworth_design(8, 0.1 * PI, FilterKind::Digital).unwrap();
        let y = f.apply(&[2.5; 500], false).unwrap();
        assert!((y[499] - 2.5).abs() < 1e-9);
        let y = f.apply(&[2.5; 500], true).unwrap();
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-9));
        assert!(f.apply(&[0.0; 64], true).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stopband_tone_is_crushed() {
        let cutoff = 0.05 * PI;
        let f = butterworth_design(6, cutoff, FilterKind::Digital).unwrap();
        let w = 4.0 * cutoff;
        let x: Vec<f64> = (0..4000).map(|n| (w * n as f64).sin()).collect();
        let y = f.apply(&x, false).unwrap();
        let tail = y[2000..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(tail < 1e-3, "steady-state amplitude {tail}");
    }

    #[test]
    fn analog_filters_cannot_run_on_samples() {
        let f = butterworth_design(2, 1.0, FilterKind::Analog).unwrap();
        assert!(f.apply(&[1.0], false).is_err());
    }

    #[test]
    fn antialias_identity_factor_is_lowpass_only() {
        let x: Vec<f64> = (0..256).map(|n| (0.01 * n as f64).sin()).collect();
        let y = antialias_downsample(&x, 1, 4).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(crate::series::relative_l2_error(&y, &x) < 1e-3);
        assert!(antialias_downsample(&x, 3, 4).is_err());
    }
}
