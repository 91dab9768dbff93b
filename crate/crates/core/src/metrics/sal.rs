// SPDX-License-Identifier: Apache-2.0

//! Spectral arc length of a speed profile.
//!
//! SAL = ∫₀^ω_c sqrt((1/ω_c)² + (dV̂/dω)²) dω with V̂ = |V(ω)| / |V(0)|.
//! The floor term alone integrates to 1, so SAL ≥ 1 and grows with
//! spectral roughness.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// 20 Hz.
pub const DEFAULT_CUTOFF: f64 = 40.0 * std::f64::consts::PI;
pub const MIN_SAMPLES: usize = 64;

/// Zero-padding factor of the default estimate.
pub const PADDING: usize = 4;

/// Normalized magnitude spectrum on ω_k = 2πk / (n_fft dt), up to Nyquist,
/// with n_fft the next power of two at or above `padding` times the length.
pub fn normalized_spectrum(speed: &[f64], dt: f64, padding: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_fft = (padding.max(1) * speed.len()).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = speed.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n_fft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let v0 = buf[0].norm();
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(Error::Metric("SAL undefined: zero-mean or non-finite speed profile".into()));
    }
    let half = n_fft / 2 + 1;
    let dw = 2.0 * std::f64::consts::PI / (n_fft as f64 * dt);
    let omega = (0..half).map(|k| k as f64 * dw).collect();
    let mag = buf[..half].iter().map(|c| c.norm() / v0).collect();
    Ok((omega, mag))
}

pub fn sal(speed: &[f64], dt: f64, omega_c: f64) -> Result<f64> {
    sal_with_padding(speed, dt, omega_c, PADDING)
}

pub fn sal_with_padding(speed: &[f64], dt: f64, omega_c: f64, padding: usize) -> Result<f64> {
    if speed.len() < MIN_SAMPLES {
        return Err(Error::Metric(format!("SAL needs at least {MIN_SAMPLES} samples, got {}", speed.len())));
    }
    if !(dt > 0.0) || !(omega_c > 0.0) || dt > std::f64::consts::PI / omega_c {
        return Err(Error::Metric(format!("SAL needs dt <= pi/omega_c, got dt {dt}, omega_c {omega_c}")));
    }
    if speed.iter().any(|v| !v.is_finite()) {
        return Err(Error::Metric("SAL: non-finite speed sample".into()));
    }
    let (omega, v) = normalized_spectrum(speed, dt, padding)?;
    let dw = omega[1] - omega[0];
    let m = omega.len();
    let deriv: Vec<f64> = (0..m)
        .map(|k| match k {
            0 => (v[1] - v[0]) / dw,
            k if k == m - 1 => (v[k] - v[k - 1]) / dw,
            k => (v[k + 1] - v[k - 1]) / (2.0 * dw),
        })
        .collect();
    let floor = 1.0 / omega_c;
    let f = |k: usize| (floor * floor + deriv[k] * deriv[k]).sqrt();
    let mut total = 0.0;
    let mut k = 0;
    while k + 1 < m && omega[k + 1] <= omega_c {
        total += 0.5 * (f(k) + f(k + 1)) * dw;
        k += 1;
    }
    // Partial final interval up to ω_c, integrand interpolated linearly.
    let rest = omega_c - omega[k];
    if rest > 0.0 && k + 1 < m {
        let fc = f(k) + (f(k + 1) - f(k)) * rest / dw;
        total += 0.5 * (f(k) + fc) * rest;
    }
    Ok(total)
}

/// Speed from positions by central differences, then zero-phase first-order
/// low-pass at `cutoff_hz`.
pub fn speed_profile(x: &[nalgebra::Vector3<f64>], dt: f64, cutoff_hz: f64) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b, span) = match i {
                0 => (0, 1, 1.0),
                i if i == n - 1 => (n - 2, n - 1, 1.0),
                i => (i - 1, i + 1, 2.0),
            };
            (x[b] - x[a]).norm() / (span * dt)
        })
        .collect();
    let alpha = {
        let tau = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
        dt / (dt + tau)
    };
    let mut fwd = raw.clone();
    for i in 1..n {
        fwd[i] = fwd[i - 1] + alpha * (raw[i] - fwd[i - 1]);
    }
    let mut out = fwd.clone();
    for i in (0..n - 1).rev() {
        out[i] = out[i + 1] + alpha * (fwd[i] - out[i + 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Arc length over [0, ω_c] of the closed-form normalized spectrum of N
    /// equal samples, |sin(Nωdt/2) / (N sin(ωdt/2))|, by fine midpoint quadrature.
    fn rectangle_oracle(n: usize, dt: f64, omega_c: f64) -> f64 {
        let mag = |w: f64| {
            let a = w * dt / 2.0;
            if a.abs() < 1e-15 {
                1.0
            } else {
                ((n as f64 * a).sin() / (n as f64 * a.sin())).abs()
            }
        };
        let m = 2_000_000;
        let h = omega_c / m as f64;
        (0..m)
            .map(|i| {
                let w = (i as f64 + 0.5) * h;
                let d = (mag(w + h / 2.0) - mag(w - h / 2.0)) / h;
                ((1.0 / omega_c).powi(2) + d * d).sqrt() * h
            })
            .sum()
    }

    #[test]
    fn constant_speed_converges_to_closed_form_spectrum() {
        // A finite constant profile is a rectangle whose spectrum has sidelobes,
        // so its SAL sits well above 1. Refining the frequency grid converges
        // to the arc length of the exact spectrum.
        let (n, dt) = (128, 0.01);
        let want = rectangle_oracle(n, dt, DEFAULT_CUTOFF);
        let v = vec![0.05; n];
        let mut prev = f64::INFINITY;
        for pad in [4, 16, 64, 256] {
            let got = sal_with_padding(&v, dt, DEFAULT_CUTOFF, pad).unwrap();
            let rel = (got - want).abs() / want;
            assert!(rel < prev, "pad {pad}: {rel} not below {prev}");
            prev = rel;
        }
        assert!(prev < 0.01, "finest grid off by {prev}");
        assert!(want > 2.0);
    }

    #[test]
    fn smooth_bump_is_near_one() {
        // A Gaussian speed bump has a Gaussian spectrum: one monotone drop of
        // height 1, so SAL ≈ sqrt(1 + 1) bounded by 1 + 1.
        let dt = 0.01;
        let v: Vec<f64> = (0..400).map(|i| (-((i as f64 - 200.0) * dt / 0.3).powi(2)).exp()).collect();
        let s = sal(&v, dt, DEFAULT_CUTOFF).unwrap();
        assert!(s > 1.0 && s < 2.0, "{s}");
    }

    #[test]
    fn ripple_increases_sal() {
        let dt = 0.01;
        let bump = |i: usize| (-((i as f64 - 250.0) * dt / 0.8).powi(2)).exp();
        let mut prev = 0.0;
        for eps in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let v: Vec<f64> = (0..500).map(|i| bump(i) * (1.0 + eps * (2.0 * PI * 3.0 * i as f64 * dt).sin())).collect();
            let s = sal(&v, dt, DEFAULT_CUTOFF).unwrap();
            assert!(s > prev, "eps {eps}: {s} <= {prev}");
            prev = s;
        }
    }

    #[test]
    fn errors() {
        assert!(sal(&[0.0; 100], 0.01, DEFAULT_CUTOFF).is_err());
        assert!(sal(&[1.0; 10], 0.01, DEFAULT_CUTOFF).is_err());
        assert!(sal(&[1.0; 100], 0.05, DEFAULT_CUTOFF).is_err());
    }

    #[test]
    fn speed_profile_of_uniform_motion() {
        let x: Vec<_> = (0..50).map(|i| nalgebra::Vector3::new(0.02 * i as f64 * 0.01, 0.0, 0.0)).collect();
        for v in speed_profile(&x, 0.01, 20.0) {
            assert!((v - 0.02).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn floor_and_amplitude_invariance(
            vals in prop::collection::vec(0.0f64..1.0, 64..300),
            scale in 1e-3f64..1e3,
        ) {
            prop_assume!(vals.iter().sum::<f64>() > 1e-3);
            let s = sal(&vals, 0.01, DEFAULT_CUTOFF).unwrap();
            prop_assert!(s >= 1.0 - 1e-6);
            let scaled: Vec<f64> = vals.iter().map(|v| v * scale).collect();
            let s2 = sal(&scaled, 0.01, DEFAULT_CUTOFF).unwrap();
            prop_assert!((s - s2).abs() <= 1e-9 * s.max(1.0), "{} vs {}", s, s2);
        }
    }
}
