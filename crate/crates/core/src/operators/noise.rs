// SPDX-License-Identifier: Apache-2.0

//! Band-limited Gaussian noise for operator tremor and drift.
//!
//! Each channel is white Gaussian noise, held over one period, driving a
//! second-order Butterworth low-pass. The output is scaled to the requested
//! stationary standard deviation and the filter starts in its stationary
//! distribution, so statistics do not depend on elapsed time. The derivative
//! is the filter's velocity state, exact for the discretized system.

use nalgebra::{Matrix2, Matrix3, Vector2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BandLimitedNoise {
    a: Matrix2<f64>,
    b: Vector2<f64>,
    scale: f64,
    states: Vec<Vector2<f64>>,
    rng: ChaCha8Rng,
}

/// Stationary covariance P = A P Aᵀ + B Bᵀ by Smith doubling.
fn stationary_covariance(a: &Matrix2<f64>, b: &Vector2<f64>) -> Matrix2<f64> {
    let mut p = b * b.transpose();
    let mut ak = *a;
    for _ in 0..64 {
        p += ak * p * ak.transpose();
        ak = ak * ak;
        if ak.norm() < 1e-300 {
            break;
        }
    }
    p
}

impl BandLimitedNoise {
    pub fn new(channels: usize, sigma: f64, bandwidth_hz: f64, dt: f64, mut rng: ChaCha8Rng) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("noise sigma", format!("must be >= 0, got {sigma}")));
        }
        if !(bandwidth_hz > 0.0 && dt > 0.0 && bandwidth_hz < 0.5 / dt) {
            return Err(Error::invalid("noise bandwidth", format!("need 0 < {bandwidth_hz} Hz < Nyquist of dt {dt}")));
        }
        let w = 2.0 * std::f64::consts::PI * bandwidth_hz;
        let zeta = std::f64::consts::FRAC_1_SQRT_2;
        // Zero-order-hold discretization through the augmented exponential.
        let aug = Matrix3::new(0.0, dt, 0.0, -w * w * dt, -2.0 * zeta * w * dt, w * w * dt, 0.0, 0.0, 0.0).exp();
        let a = aug.fixed_view::<2, 2>(0, 0).into_owned();
        let b = aug.fixed_view::<2, 1>(0, 2).into_owned();
        let p = stationary_covariance(&a, &b);
        let scale = sigma / p[(0, 0)].sqrt();
        let chol = p.cholesky().map(|c| c.l()).unwrap_or_else(|| Matrix2::from_diagonal(&p.diagonal().map(f64::sqrt)));
        let states = (0..channels)
            .map(|_| {
                let z = Vector2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                chol * z
            })
            .collect();
        Ok(Self { a, b, scale, states, rng })
    }

    /// Noise that is identically zero.
    pub fn silent(channels: usize, rng: ChaCha8Rng) -> Self {
        Self { a: Matrix2::zeros(), b: Vector2::zeros(), scale: 0.0, states: vec![Vector2::zeros(); channels], rng }
    }

    pub fn channels(&self) -> usize {
        self.states.len()
    }

    pub fn advance(&mut self) {
        for s in self.states.iter_mut() {
            let w: f64 = StandardNormal.sample(&mut self.rng);
            *s = self.a * *s + self.b * w;
        }
    }

    pub fn value(&self, ch: usize) -> f64 {
        self.scale * self.states[ch].x
    }

    pub fn rate(&self, ch: usize) -> f64 {
        self.scale * self.states[ch].y
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.channels()).map(|c| self.value(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn gen(sigma: f64, bw: f64, seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut g = BandLimitedNoise::new(1, sigma, bw, 1e-3, ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut v = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for _ in 0..n {
            g.advance();
            v.push(g.value(0));
            r.push(g.rate(0));
        }
        (v, r)
    }

    #[test]
    fn stationary_standard_deviation() {
        // Averaged over seeds: each 200 s run spans ~400 correlation times.
        let mut var = 0.0;
        for seed in 0..8 {
            let (v, _) = gen(0.7, 2.0, seed, 200_000);
            var += v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        }
        let sd = (var / 8.0).sqrt();
        assert!((sd - 0.7).abs() < 0.05, "{sd}");
    }

    #[test]
    fn rate_is_the_derivative() {
        // The input is held over each step, so the filter is smooth inside a
        // step and the trapezoid rule on the rate must reproduce each increment.
        let (v, r) = gen(1.0, 1.0, 3, 20_000);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..v.len() - 1 {
            let inc = v[k + 1] - v[k];
            num += (inc - 0.5e-3 * (r[k] + r[k + 1])).powi(2);
            den += inc * inc;
        }
        assert!((num / den).sqrt() < 1e-3, "{}", (num / den).sqrt());
    }

    fn band_power(v: &[f64], dt: f64, lo: f64, hi: f64) -> f64 {
        let n = v.len();
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let df = 1.0 / (n as f64 * dt);
        (1..n / 2).filter(|&k| (lo..hi).contains(&(k as f64 * df))).map(|k| buf[k].norm_sqr()).sum::<f64>() * dt / n as f64
    }

    #[test]
    fn psd_scales_with_sigma_squared_and_is_band_limited() {
        let (a, _) = gen(0.5, 2.0, 11, 1 << 17);
        let (b, _) = gen(1.0, 2.0, 12, 1 << 17);
        let ratio = band_power(&b, 1e-3, 0.1, 2.0) / band_power(&a, 1e-3, 0.1, 2.0);
        assert!(ratio > 2.0 && ratio < 8.0, "{ratio}");
        // Well above the corner the power collapses (-40 dB/decade).
        let pass = band_power(&b, 1e-3, 0.1, 2.0);
        let stop = band_power(&b, 1e-3, 20.0, 40.0);
        assert!(stop < 1e-3 * pass, "{stop} vs {pass}");
    }

    #[test]
    fn seeded_and_silent() {
        assert_eq!(gen(1.0, 1.0, 5, 100), gen(1.0, 1.0, 5, 100));
        assert_ne!(gen(1.0, 1.0, 5, 100).0, gen(1.0, 1.0, 6, 100).0);
        assert!(gen(0.0, 1.0, 5, 100).0.iter().all(|&x| x == 0.0));
        let mut s = BandLimitedNoise::silent(3, ChaCha8Rng::seed_from_u64(0));
        s.advance();
        assert_eq!(s.values(), vec![0.0; 3]);
        assert!(BandLimitedNoise::new(1, 1.0, 600.0, 1e-3, ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
