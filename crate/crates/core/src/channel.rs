//! Tapped-delay-line MIMO channel with block fading.
//!
//! Each realization draws independent complex Gaussian tap matrices whose per
//! tap variances follow an exponential power delay profile normalized to unit
//! total energy, so the average per-link channel gain is one. Taps sit on a
//! uniform grid at the sample period, which makes the frequency response at
//! FFT bin `k` a plain DFT over the tap index.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of the propagation environment and array sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelProfile {
    /// Transmit antennas (the beamformer side; rows of the steering matrix).
    pub n_tx: usize,
    /// Receive antennas (the beamformee side).
    pub n_rx: usize,
    pub n_taps: usize,
    /// Tap grid spacing in seconds (one per sample period).
    pub tap_spacing_s: f64,
    /// RMS delay spread of the exponential profile, seconds.
    pub rms_delay_spread_s: f64,
}

impl Default for ChannelProfile {
    fn default() -> Self {
        // 20 MHz sampling grid, 8 taps at 50 ns, 50 ns delay spread.
        ChannelProfile {
            n_tx: 8,
            n_rx: 2,
            n_taps: 8,
            tap_spacing_s: 50e-9,
            rms_delay_spread_s: 50e-9,
        }
    }
}

impl ChannelProfile {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::config("channel needs at least one antenna per side"));
        }
        if self.n_taps == 0 {
            return Err(Error::config("channel needs at least one tap"));
        }
        if self.tap_spacing_s <= 0.0 || !self.tap_spacing_s.is_finite() {
            return Err(Error::config("tap spacing must be positive"));
        }
        if self.n_taps > 1 && (self.rms_delay_spread_s <= 0.0 || !self.rms_delay_spread_s.is_finite())
        {
            return Err(Error::config(
                "rms delay spread must be positive for a multi-tap profile",
            ));
        }
        Ok(())
    }

    /// Per-tap powers of the exponential profile, normalized to sum to one.
    pub fn tap_powers(&self) -> Result<Vec<f64>> {
        self.validate()?;
        if self.n_taps == 1 {
            return Ok(vec![1.0]);
        }
        let ratio = self.tap_spacing_s / self.rms_delay_spread_s;
        let raw: Vec<f64> = (0..self.n_taps).map(|t| (-(t as f64) * ratio).exp()).collect();
        let total: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|p| p / total).collect())
    }
}

/// One block-fading draw: `taps[t]` is the `n_rx x n_tx` matrix of tap `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<DMatrix<Complex64>>,
}

impl ChannelRealization {
    pub fn n_rx(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.taps[0].ncols()
    }

    /// Total tap energy per (rx, tx) link, summed over taps.
    pub fn link_energy(&self, rx: usize, tx: usize) -> f64 {
        self.taps.iter().map(|m| m[(rx, tx)].norm_sqr()).sum()
    }
}

/// Frequency response sampled at a set of FFT bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqChannel {
    /// One `n_rx x n_tx` matrix per requested bin, in request order.
    pub h: Vec<DMatrix<Complex64>>,
    pub subcarriers: Vec<usize>,
}

/// Draw one channel realization. The same (profile, seed) pair always yields
/// the same taps: entries are drawn tap by tap, row-major, real part first.
pub fn generate_channel(profile: &ChannelProfile, seed: u64) -> Result<ChannelRealization> {
    let powers = profile.tap_powers()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taps = Vec::with_capacity(profile.n_taps);
    for &p in &powers {
        let sigma = (p / 2.0).sqrt();
        // fill row-major by hand so the draw order is pinned down
        let mut tap = DMatrix::from_element(profile.n_rx, profile.n_tx, Complex64::new(0.0, 0.0));
        for r in 0..profile.n_rx {
            for c in 0..profile.n_tx {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                tap[(r, c)] = Complex64::new(re * sigma, im * sigma);
            }
        }
        taps.push(tap);
    }
    Ok(ChannelRealization { taps })
}

/// Evaluate the DFT of the tap sequence at the requested bins:
/// `H[k] = sum_t taps[t] * exp(-j 2 pi k t / n_fft)`.
pub fn frequency_response(
    real: &ChannelRealization,
    subcarriers: &[usize],
    n_fft: usize,
) -> Result<FreqChannel> {
    if n_fft == 0 {
        return Err(Error::config("n_fft must be positive"));
    }
    if real.taps.len() > n_fft {
        return Err(Error::config(format!(
            "{} taps do not fit an {}-point FFT grid",
            real.taps.len(),
            n_fft
        )));
    }
    let mut h = Vec::with_capacity(subcarriers.len());
    for &k in subcarriers {
        if k >= n_fft {
            return Err(Error::config(format!(
                "subcarrier bin {k} outside FFT grid of {n_fft}"
            )));
        }
        let mut hk = DMatrix::from_element(real.n_rx(), real.n_tx(), Complex64::new(0.0, 0.0));
        for (t, tap) in real.taps.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * (k as f64) * (t as f64) / (n_fft as f64);
            let w = Complex64::from_polar(1.0, phase);
            hk += tap * w;
        }
        h.push(hk);
    }
    Ok(FreqChannel {
        h,
        subcarriers: subcarriers.to_vec(),
    })
}

/// The default feedback grid: 64 evenly spaced bins, every fourth bin of a
/// 256-point grid (bin 256 wraps to 0).
pub fn default_subcarriers(n_fft: usize, n_sc: usize) -> Result<Vec<usize>> {
    if n_sc == 0 || n_fft == 0 || n_fft % n_sc != 0 {
        return Err(Error::config(format!(
            "cannot spread {n_sc} subcarriers evenly over {n_fft} bins"
        )));
    }
    let step = n_fft / n_sc;
    Ok((1..=n_sc).map(|k| (k * step) % n_fft).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tap_powers_sum_to_one() {
        let p = ChannelProfile::default();
        let powers = p.tap_powers().unwrap();
        assert_eq!(powers.len(), 8);
        let sum: f64 = powers.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "powers sum to {sum}");
        // strictly decaying
        for w in powers.windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn single_tap_profile_is_flat() {
        let p = ChannelProfile {
            n_taps: 1,
            ..ChannelProfile::default()
        };
        assert_eq!(p.tap_powers().unwrap(), vec![1.0]);
        let real = generate_channel(&p, 3).unwrap();
        let fr = frequency_response(&real, &[0, 10, 100], 256).unwrap();
        for hk in &fr.h[1..] {
            let d = (hk - &fr.h[0]).norm();
            assert!(d < 1e-12, "single tap response should be frequency flat");
        }
    }

    #[test]
    fn zero_delay_spread_rejected() {
        let p = ChannelProfile {
            rms_delay_spread_s: 0.0,
            ..ChannelProfile::default()
        };
        assert!(p.tap_powers().is_err());
    }

    #[test]
    fn same_seed_same_channel() {
        let p = ChannelProfile::default();
        let a = generate_channel(&p, 99).unwrap();
        let b = generate_channel(&p, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_channel(&p, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mean_link_energy_is_unit() {
        // ensemble average of sum_t |h_t|^2 per link should approach 1
        let p = ChannelProfile::default();
        let n = 10_000;
        let mut acc = 0.0;
        for seed in 0..n {
            let real = generate_channel(&p, seed).unwrap();
            acc += real.link_energy(0, 0);
        }
        let mean = acc / n as f64;
        assert!(
            (mean - 1.0).abs() < 0.01,
            "mean link energy {mean} deviates more than 1%"
        );
    }

    #[test]
    fn parseval_over_full_grid() {
        // (1/N) sum_k |H_k|^2 == sum_t |h_t|^2 exactly, per realization
        let p = ChannelProfile::default();
        let real = generate_channel(&p, 7).unwrap();
        let n_fft = 256;
        let all: Vec<usize> = (0..n_fft).collect();
        let fr = frequency_response(&real, &all, n_fft).unwrap();
        let freq_energy: f64 = fr.h.iter().map(|h| h.norm_squared()).sum::<f64>() / n_fft as f64;
        let tap_energy: f64 = real.taps.iter().map(|t| t.norm_squared()).sum();
        let rel = (freq_energy - tap_energy).abs() / tap_energy;
        assert!(rel < 1e-9, "Parseval mismatch, relative error {rel}");
    }

    #[test]
    fn out_of_range_bin_rejected() {
        let p = ChannelProfile::default();
        let real = generate_channel(&p, 1).unwrap();
        assert!(frequency_response(&real, &[256], 256).is_err());
    }

    #[test]
    fn default_grid_is_even() {
        let g = default_subcarriers(256, 64).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g[0], 4);
        assert_eq!(g[62], 252);
        assert_eq!(g[63], 0); // bin 256 wraps
        let uniq: std::collections::HashSet<_> = g.iter().collect();
        assert_eq!(uniq.len(), 64);
    }
}
