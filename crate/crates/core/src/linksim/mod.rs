//! Monte-Carlo packet error rate simulation of a beamformed MIMO-OFDM link.
//!
//! One trial sounds a block-fading channel, runs the steering matrices
//! through the compression scheme under test, then transmits one coded
//! 16-QAM packet through `y = H Qhat x + n` per data subcarrier with an MMSE
//! receiver that knows the effective channel. Trials derive their seeds from
//! (master seed, SNR index, trial index), so results do not depend on
//! execution order and schemes sharing a master seed see identical channels
//! and noise.

pub mod coding;
pub mod qam;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{default_subcarriers, frequency_response, generate_channel, ChannelProfile};
use crate::codec::{Codec, SchemeSpec};
use crate::error::{Error, Result};
use crate::seedmix::{mix2, mix3};
use crate::steering::{compute_steering, SteeringMatrix};

/// Everything one PER run needs besides the scheme itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub profile: ChannelProfile,
    /// Spatial streams; equals the steering matrix columns.
    pub n_c: usize,
    pub n_sc: usize,
    pub n_fft: usize,
    pub payload_bits: usize,
    pub trials_per_point: usize,
    pub snr_grid_db: Vec<f64>,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            profile: ChannelProfile::default(),
            n_c: 2,
            n_sc: 64,
            n_fft: 256,
            payload_bits: 1000,
            trials_per_point: 1000,
            snr_grid_db: (8..=30).step_by(2).map(f64::from).collect(),
            master_seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if self.n_c == 0 || self.n_c > self.profile.n_tx.min(self.profile.n_rx) {
            return Err(Error::config(format!(
                "{} streams do not fit {}x{} antennas",
                self.n_c, self.profile.n_rx, self.profile.n_tx
            )));
        }
        if self.payload_bits == 0 {
            return Err(Error::config("payload must be at least one bit"));
        }
        if self.trials_per_point == 0 {
            return Err(Error::config("at least one trial per SNR point"));
        }
        if self.n_sc == 0 {
            return Err(Error::config("at least one data subcarrier"));
        }
        Ok(())
    }
}

/// One point of a PER curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerPoint {
    pub snr_db: f64,
    pub trials: u64,
    pub errors: u64,
    pub per: f64,
}

/// One CSV row: a PER point labeled with its scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PerRow {
    pub scheme: String,
    pub variant: String,
    pub params: String,
    pub point: PerPoint,
}

/// Label a finished curve for reporting.
pub fn per_rows(spec: &SchemeSpec, points: &[PerPoint]) -> Vec<PerRow> {
    let (scheme, variant, params) = spec.naming();
    points
        .iter()
        .map(|p| PerRow {
            scheme: scheme.clone(),
            variant: variant.clone(),
            params: params.clone(),
            point: p.clone(),
        })
        .collect()
}

pub fn render_per_csv(rows: &[PerRow]) -> String {
    let mut out = String::from("scheme,variant,params,snr_db,trials,errors,per\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.scheme, r.variant, r.params, r.point.snr_db, r.point.trials, r.point.errors,
            r.point.per
        ));
    }
    out
}

const PACKET_SALT: u64 = 0x7061_636B;

/// Transmit one zero-tailed rate-1/2 coded 16-QAM packet across the data
/// subcarriers and spatial streams and report whether it decoded cleanly.
/// `h_list` holds the true per-subcarrier channels, `q_hat` the steering
/// matrices the beamformer actually applies.
pub fn simulate_packet(
    h_list: &[DMatrix<Complex64>],
    q_hat: &[SteeringMatrix],
    snr_db: f64,
    payload_bits: usize,
    seed: u64,
) -> Result<bool> {
    if h_list.is_empty() || h_list.len() != q_hat.len() {
        return Err(Error::precondition(
            "channel and steering lists must be equal-length and non-empty",
        ));
    }
    let n_sc = h_list.len();
    let n_rx = h_list[0].nrows();
    let n_tx = h_list[0].ncols();
    let n_ss = q_hat[0].n_c();
    for (h, q) in h_list.iter().zip(q_hat) {
        if h.nrows() != n_rx || h.ncols() != n_tx || q.n_r() != n_tx || q.n_c() != n_ss {
            return Err(Error::precondition("inconsistent channel/steering dimensions"));
        }
    }
    if payload_bits == 0 {
        return Err(Error::config("payload must be at least one bit"));
    }
    let slot_bits = n_sc * n_ss * 4;
    if slot_bits == 0 {
        return Err(Error::config("zero symbol capacity per OFDM slot"));
    }

    let mut payload_rng = ChaCha8Rng::seed_from_u64(mix2(seed, 1));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(mix2(seed, 2));
    let payload: Vec<u8> = (0..payload_bits).map(|_| payload_rng.random_range(0..2u8)).collect();

    let mut coded = coding::conv_encode(&payload);
    let n_slots = coded.len().div_ceil(slot_bits);
    coded.resize(n_slots * slot_bits, 0);

    let sigma2 = 10f64.powf(-snr_db / 10.0);
    let es = 1.0 / n_ss as f64;
    let amp = es.sqrt();
    let noise_sigma = (sigma2 / 2.0).sqrt();

    // per-subcarrier receiver state, reused across slots (block fading)
    struct ScState {
        g: DMatrix<Complex64>,
        a_inv: DMatrix<Complex64>,
        beta: Vec<f64>,
        nu: Vec<f64>,
    }
    let mut states = Vec::with_capacity(n_sc);
    for (h, q) in h_list.iter().zip(q_hat) {
        let g = h * q.matrix();
        let mut a = g.adjoint() * &g;
        let reg = sigma2 * n_ss as f64;
        for j in 0..n_ss {
            a[(j, j)] += Complex64::new(reg, 0.0);
        }
        let a_inv = a
            .try_inverse()
            .ok_or_else(|| Error::precondition("equalizer matrix is singular"))?;
        let mut beta = Vec::with_capacity(n_ss);
        let mut nu = Vec::with_capacity(n_ss);
        for j in 0..n_ss {
            // computed as the residual first so high SNR does not cancel
            let one_minus_beta = (reg * a_inv[(j, j)].re).clamp(1e-300, 1.0);
            let b = (1.0 - one_minus_beta).max(1e-300);
            beta.push(b);
            nu.push((es * one_minus_beta / b).max(1e-300));
        }
        states.push(ScState { g, a_inv, beta, nu });
    }

    let n_symbols = coded.len() / 4;
    let mut llrs = vec![0.0f64; coded.len()];
    // slot-major transmit: all streams and subcarriers of slot 0, then slot 1
    for slot in 0..n_slots {
        for sc in 0..n_sc {
            let st = &states[sc];
            // gather this subcarrier's streams for the slot
            let mut x = DMatrix::from_element(n_ss, 1, Complex64::new(0.0, 0.0));
            for stream in 0..n_ss {
                let s_idx = slot * n_sc * n_ss + stream * n_sc + sc;
                debug_assert!(s_idx < n_symbols);
                let b = &coded[4 * s_idx..4 * s_idx + 4];
                x[(stream, 0)] = qam16_scaled(b, amp);
            }
            let mut y = &st.g * &x;
            for r in 0..n_rx {
                let re: f64 = StandardNormal.sample(&mut noise_rng);
                let im: f64 = StandardNormal.sample(&mut noise_rng);
                y[(r, 0)] += Complex64::new(re * noise_sigma, im * noise_sigma);
            }
            let z = &st.a_inv * (st.g.adjoint() * y);
            for stream in 0..n_ss {
                let xt = z[(stream, 0)] / st.beta[stream];
                let s_idx = slot * n_sc * n_ss + stream * n_sc + sc;
                let (i0, i1) = qam::qam16_axis_llrs(xt.re, amp, st.nu[stream]);
                let (q0, q1) = qam::qam16_axis_llrs(xt.im, amp, st.nu[stream]);
                llrs[4 * s_idx] = i0;
                llrs[4 * s_idx + 1] = i1;
                llrs[4 * s_idx + 2] = q0;
                llrs[4 * s_idx + 3] = q1;
            }
        }
    }

    let decoded = coding::viterbi_decode(&llrs, payload_bits)?;
    Ok(decoded == payload)
}

fn qam16_scaled(bits: &[u8], amp: f64) -> Complex64 {
    qam::qam16_map(&[bits[0], bits[1], bits[2], bits[3]]) * Complex64::new(amp, 0.0)
}

/// Run one trial end to end: sound the channel, compress and reconstruct the
/// steering matrices with `codec`, then one packet.
pub fn run_trial(cfg: &SimConfig, codec: &Codec, snr_db: f64, trial_seed: u64) -> Result<bool> {
    let bins = default_subcarriers(cfg.n_fft, cfg.n_sc)?;
    let realization = generate_channel(&cfg.profile, trial_seed)?;
    let freq = frequency_response(&realization, &bins, cfg.n_fft)?;
    let q: Vec<SteeringMatrix> = freq
        .h
        .iter()
        .map(|h| compute_steering(h, cfg.n_c))
        .collect::<Result<_>>()?;
    let q_hat = codec.roundtrip(&q)?;
    let packet_seed = crate::seedmix::splitmix64(trial_seed ^ PACKET_SALT);
    simulate_packet(&freq.h, &q_hat, snr_db, cfg.payload_bits, packet_seed)
}

/// PER at one SNR point over `trials_per_point` independent channels.
pub fn per_point(cfg: &SimConfig, codec: &Codec, snr_index: usize, snr_db: f64) -> Result<PerPoint> {
    cfg.validate()?;
    let outcomes: Vec<bool> = (0..cfg.trials_per_point)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = mix3(cfg.master_seed, snr_index as u64, trial as u64);
            run_trial(cfg, codec, snr_db, trial_seed)
        })
        .collect::<Result<_>>()?;
    let errors = outcomes.iter().filter(|&&ok| !ok).count() as u64;
    let trials = cfg.trials_per_point as u64;
    Ok(PerPoint {
        snr_db,
        trials,
        errors,
        per: errors as f64 / trials as f64,
    })
}

/// Test the one-sided claim "`worse` has PER at least that of `better`"
/// against the data. Returns true when the claim is refuted, i.e. `worse`
/// measured significantly LOWER than `better` under a pooled two-proportion
/// z test at threshold `z` (1.645 for 95% one-sided).
pub fn not_worse_refuted(worse: &PerPoint, better: &PerPoint, z: f64) -> bool {
    if worse.trials == 0 || better.trials == 0 {
        return false;
    }
    let (tw, tb) = (worse.trials as f64, better.trials as f64);
    let pooled = (worse.errors + better.errors) as f64 / (tw + tb);
    let se = (pooled * (1.0 - pooled) * (1.0 / tw + 1.0 / tb)).sqrt();
    if se == 0.0 {
        return false;
    }
    (worse.per - better.per) / se < -z
}

/// Full PER curve over the configured SNR grid.
pub fn per_curve(cfg: &SimConfig, codec: &Codec) -> Result<Vec<PerPoint>> {
    cfg.validate()?;
    if cfg.snr_grid_db.is_empty() {
        return Err(Error::config("empty SNR grid"));
    }
    cfg.snr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| per_point(cfg, codec, i, snr))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::SchemeArtifacts;

    fn perfect() -> Codec {
        Codec::new(SchemeSpec::Perfect, SchemeArtifacts::None).unwrap()
    }

    fn small_cfg(trials: usize) -> SimConfig {
        SimConfig {
            payload_bits: 200,
            trials_per_point: trials,
            ..SimConfig::default()
        }
    }

    #[test]
    fn high_snr_passes_and_deep_noise_fails() {
        let cfg = small_cfg(20);
        let codec = perfect();
        for trial in 0..20u64 {
            let seed = mix3(cfg.master_seed, 0, trial);
            assert!(run_trial(&cfg, &codec, 60.0, seed).unwrap(), "trial {trial} at 60 dB");
            assert!(!run_trial(&cfg, &codec, -30.0, seed).unwrap(), "trial {trial} at -30 dB");
        }
    }

    #[test]
    fn per_point_is_deterministic_and_scheduling_independent() {
        let cfg = small_cfg(40);
        let codec = perfect();
        let a = per_point(&cfg, &codec, 0, 12.0).unwrap();
        let b = per_point(&cfg, &codec, 0, 12.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials, 40);
        assert_eq!(a.errors, (a.per * 40.0).round() as u64);
    }

    #[test]
    fn per_improves_with_snr() {
        let cfg = small_cfg(60);
        let codec = perfect();
        let low = per_point(&cfg, &codec, 0, 4.0).unwrap();
        let high = per_point(&cfg, &codec, 1, 26.0).unwrap();
        assert!(
            low.per >= high.per,
            "PER {} at 4 dB vs {} at 26 dB",
            low.per,
            high.per
        );
        assert!(high.per < 0.2, "26 dB with perfect feedback should mostly pass");
    }

    #[test]
    fn legacy_feedback_tracks_perfect_closely_at_high_snr() {
        let cfg = small_cfg(30);
        let legacy = Codec::new(SchemeSpec::Legacy { n_b: 4 }, SchemeArtifacts::None).unwrap();
        let p = per_point(&cfg, &legacy, 0, 30.0).unwrap();
        assert!(p.per < 0.5, "legacy n_b=4 at 30 dB came out at PER {}", p.per);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let cfg = SimConfig {
            n_c: 3,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
        let ok = SimConfig::default();
        ok.validate().unwrap();
    }

    #[test]
    fn refutation_needs_a_significant_gap() {
        let p = |errors: u64| PerPoint { snr_db: 10.0, trials: 1000, errors, per: errors as f64 / 1000.0 };
        // clearly lower PER on the "worse" side refutes the claim
        assert!(not_worse_refuted(&p(50), &p(150), 1.645));
        // equal or higher never does
        assert!(!not_worse_refuted(&p(150), &p(150), 1.645));
        assert!(!not_worse_refuted(&p(200), &p(150), 1.645));
        // a one-error gap is noise, not refutation
        assert!(!not_worse_refuted(&p(149), &p(150), 1.645));
        // degenerate: both perfect
        assert!(!not_worse_refuted(&p(0), &p(0), 1.645));
    }

    #[test]
    fn csv_layout() {
        let rows = per_rows(
            &SchemeSpec::Legacy { n_b: 4 },
            &[PerPoint { snr_db: 10.0, trials: 100, errors: 7, per: 0.07 }],
        );
        let csv = render_per_csv(&rows);
        assert_eq!(
            csv.lines().next().unwrap(),
            "scheme,variant,params,snr_db,trials,errors,per"
        );
        assert_eq!(csv.lines().nth(1).unwrap(), "legacy,,n_b=4,10,100,7,0.07");
    }
}
