//! Autoencoder feedback codecs.
//!
//! Two schemes share the FNN machinery in [`fnn`]. The Q-series scheme
//! feeds each real/imaginary component of the steering matrix as a series
//! across subcarriers into one shared autoencoder and ships the latent as
//! narrowed floating-point words. The angle scheme runs two autoencoders
//! (one over phi series, one over psi series, inputs affinely scaled to
//! [-1, 1]) and ships mid-rise-quantized tanh latents.

pub mod fnn;

pub use fnn::{
    init_fnn, model_sharing_bits, mse_and_grads, ptq_dequantize, ptq_quantize, train_autoencoder,
    Activation, FnnModel, Grads, ModelRole, Quantization, QuantizedModel, TrainConfig,
    TrainedAutoencoder,
};

use half::f16;

use crate::bitio::{BitReader, BitWriter};
use crate::cbr::{CbrFormat, CompressedCbr};
use crate::error::{Error, Result};
use crate::givens::{angles_from_q, num_angles, q_from_angles, AngleSet};
use crate::kmeans::steering_vector;
use crate::kpi::MultCounter;
use crate::steering::{reorthonormalize, SteeringMatrix};

/// Largest finite binary16 magnitude.
pub const F16_MAX: f32 = 65504.0;

fn check_n_q(n_q: u8) -> Result<()> {
    if n_q != 16 && n_q != 32 {
        return Err(Error::config(format!("latent bit width n_q={n_q} not in {{16, 32}}")));
    }
    Ok(())
}

/// Narrow 32-bit values to `n_q`-bit patterns. 32 keeps the exact bits; 16
/// rounds to nearest-even binary16 after clamping to the finite range.
/// Returns the bit patterns and how many values were clamped.
pub fn reduce_bit_width(values: &[f32], n_q: u8) -> Result<(Vec<u32>, usize)> {
    check_n_q(n_q)?;
    let mut clamped = 0usize;
    let words = values
        .iter()
        .map(|&x| match n_q {
            32 => x.to_bits(),
            _ => {
                let y = if x > F16_MAX {
                    clamped += 1;
                    F16_MAX
                } else if x < -F16_MAX {
                    clamped += 1;
                    -F16_MAX
                } else {
                    x
                };
                f16::from_f32(y).to_bits() as u32
            }
        })
        .collect();
    Ok((words, clamped))
}

/// Exact widening of [`reduce_bit_width`] output back to f32.
pub fn extend_bit_width(words: &[u32], n_q: u8) -> Result<Vec<f32>> {
    check_n_q(n_q)?;
    words
        .iter()
        .map(|&w| match n_q {
            32 => Ok(f32::from_bits(w)),
            _ => {
                if w > u16::MAX as u32 {
                    return Err(Error::precondition(format!("word {w:#x} does not fit 16 bits")));
                }
                Ok(f16::from_bits(w as u16).to_f32())
            }
        })
        .collect()
}

/// Mid-rise quantizer index on [-1, 1] with `2^bits` levels.
pub fn midrise_quantize(x: f64, bits: u32) -> u32 {
    let n = 1u32 << bits;
    let delta = 2.0 / n as f64;
    let k = ((x + 1.0) / delta).floor();
    if k < 0.0 {
        0
    } else if k >= n as f64 {
        n - 1
    } else {
        k as u32
    }
}

/// Center of mid-rise cell `k`.
pub fn midrise_value(k: u32, bits: u32) -> f64 {
    let delta = 2.0 / (1u64 << bits) as f64;
    -1.0 + (k as f64 + 0.5) * delta
}

// affine maps taking the angle ranges onto [-1, 1]
fn scale_phi(x: f64) -> f64 {
    x / std::f64::consts::PI - 1.0
}

fn unscale_phi(y: f64) -> f64 {
    (y + 1.0) * std::f64::consts::PI
}

fn scale_psi(x: f64) -> f64 {
    4.0 * x / std::f64::consts::PI - 1.0
}

fn unscale_psi(y: f64) -> f64 {
    (y + 1.0) * std::f64::consts::PI / 4.0
}

fn check_uniform(q_list: &[SteeringMatrix]) -> Result<(usize, usize)> {
    let first = q_list
        .first()
        .ok_or_else(|| Error::precondition("empty subcarrier list"))?;
    let shape = (first.n_r(), first.n_c());
    for q in q_list {
        if (q.n_r(), q.n_c()) != shape {
            return Err(Error::precondition("mixed steering shapes in one report"));
        }
    }
    Ok(shape)
}

/// The component series of one sounding: `2 n_r n_c - n_c` vectors, each
/// running across the subcarriers, in the raw-matrix flattening order.
pub fn qseries_from_sounding(q_list: &[SteeringMatrix]) -> Result<Vec<Vec<f64>>> {
    let (n_r, n_c) = check_uniform(q_list)?;
    let n_series = 2 * n_r * n_c - n_c;
    let flat: Vec<Vec<f64>> = q_list.iter().map(steering_vector).collect();
    Ok((0..n_series)
        .map(|s| flat.iter().map(|v| v[s]).collect())
        .collect())
}

/// Training samples for the Q-series autoencoder: the component series of
/// every sounding, pooled.
pub fn qseries_samples(soundings: &[Vec<SteeringMatrix>]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for s in soundings {
        out.extend(qseries_from_sounding(s)?);
    }
    if out.is_empty() {
        return Err(Error::precondition("empty training set"));
    }
    Ok(out)
}

/// The scaled phi and psi series of one sounding (`n_a` vectors each).
pub fn angle_series_from_sounding(
    q_list: &[SteeringMatrix],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let (n_r, n_c) = check_uniform(q_list)?;
    let n_a = num_angles(n_r, n_c)?;
    let angles: Vec<AngleSet> = q_list.iter().map(angles_from_q).collect::<Result<_>>()?;
    let phi = (0..n_a)
        .map(|a| angles.iter().map(|s| scale_phi(s.phi[a])).collect())
        .collect();
    let psi = (0..n_a)
        .map(|a| angles.iter().map(|s| scale_psi(s.psi[a])).collect())
        .collect();
    Ok((phi, psi))
}

/// Pooled scaled phi and psi training samples across soundings.
pub fn angle_samples(
    soundings: &[Vec<SteeringMatrix>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut phis = Vec::new();
    let mut psis = Vec::new();
    for s in soundings {
        let (p, q) = angle_series_from_sounding(s)?;
        phis.extend(p);
        psis.extend(q);
    }
    if phis.is_empty() {
        return Err(Error::precondition("empty training set"));
    }
    Ok((phis, psis))
}

/// A matched encoder/decoder pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AePair {
    pub encoder: FnnModel,
    pub decoder: FnnModel,
}

impl AePair {
    pub fn latent_dim(&self) -> usize {
        self.encoder.n_out()
    }

    pub fn io_dim(&self) -> usize {
        self.encoder.n_in()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.encoder.role != ModelRole::Encoder || self.decoder.role != ModelRole::Decoder {
            return Err(Error::config("pair roles are swapped or duplicated"));
        }
        if self.encoder.n_out() != self.decoder.n_in()
            || self.encoder.n_in() != self.decoder.n_out()
        {
            return Err(Error::config("encoder and decoder shapes do not mirror"));
        }
        if self.encoder.n_out() >= self.encoder.n_in() {
            return Err(Error::config("latent width N_L must be smaller than input width N_0"));
        }
        Ok(())
    }
}

impl From<TrainedAutoencoder> for AePair {
    fn from(t: TrainedAutoencoder) -> Self {
        AePair { encoder: t.encoder, decoder: t.decoder }
    }
}

/// Feedback payload size of the Q-series scheme.
pub fn qseries_cbr_bits(n_r: usize, n_c: usize, n_l: usize, n_q: u8) -> usize {
    (2 * n_r * n_c - n_c) * n_l * n_q as usize
}

/// Feedback payload size of the angle scheme.
pub fn angle_cbr_bits(
    n_r: usize,
    n_c: usize,
    n_l_phi: usize,
    n_l_psi: usize,
    n_b: u8,
) -> Result<usize> {
    let n_a = num_angles(n_r, n_c)?;
    Ok(n_a * (n_l_phi * (n_b as usize + 2) + n_l_psi * n_b as usize))
}

/// Compress a sounding with the Q-series autoencoder.
pub fn ae_encode_qseries(
    q_list: &[SteeringMatrix],
    pair: &AePair,
    n_q: u8,
) -> Result<CompressedCbr> {
    ae_encode_qseries_inner(q_list, pair, n_q, None)
}

pub fn ae_encode_qseries_counted(
    q_list: &[SteeringMatrix],
    pair: &AePair,
    n_q: u8,
    counter: &mut MultCounter,
) -> Result<CompressedCbr> {
    ae_encode_qseries_inner(q_list, pair, n_q, Some(counter))
}

fn ae_encode_qseries_inner(
    q_list: &[SteeringMatrix],
    pair: &AePair,
    n_q: u8,
    mut counter: Option<&mut MultCounter>,
) -> Result<CompressedCbr> {
    pair.validate()?;
    check_n_q(n_q)?;
    let series = qseries_from_sounding(q_list)?;
    if q_list.len() != pair.io_dim() {
        return Err(Error::config(format!(
            "{} subcarriers do not match encoder N_0 = {}",
            q_list.len(),
            pair.io_dim()
        )));
    }
    let n_l = pair.latent_dim();
    let mut w = BitWriter::new();
    for s in &series {
        let latent = match counter.as_deref_mut() {
            Some(c) => pair.encoder.forward_counted(s, c)?,
            None => pair.encoder.forward(s)?,
        };
        let latent_f32: Vec<f32> = latent.iter().map(|&x| x as f32).collect();
        let (words, _clamped) = reduce_bit_width(&latent_f32, n_q)?;
        for word in words {
            w.write(word as u64, n_q as u32);
        }
    }
    Ok(CompressedCbr {
        format: CbrFormat::AeQSeries { n_l, n_q },
        n_sc: q_list.len(),
        bits: w.finish(),
    })
}

/// Invert the Q-series payload back to steering matrices.
pub fn ae_decode_qseries(
    cbr: &CompressedCbr,
    pair: &AePair,
    n_r: usize,
    n_c: usize,
) -> Result<Vec<SteeringMatrix>> {
    pair.validate()?;
    let n_l = pair.latent_dim();
    let n_q = match cbr.format {
        CbrFormat::AeQSeries { n_l: got_l, n_q } => {
            if got_l != n_l {
                return Err(Error::config(format!(
                    "payload latent width {got_l} does not match decoder ({n_l})"
                )));
            }
            n_q
        }
        _ => {
            return Err(Error::precondition(format!(
                "payload format {:?} is not a Q-series report",
                cbr.format
            )))
        }
    };
    if cbr.n_sc != pair.io_dim() {
        return Err(Error::config(format!(
            "{} subcarriers do not match decoder N_0 = {}",
            cbr.n_sc,
            pair.io_dim()
        )));
    }
    let n_series = 2 * n_r * n_c - n_c;
    cbr.expect_format(
        &CbrFormat::AeQSeries { n_l, n_q },
        qseries_cbr_bits(n_r, n_c, n_l, n_q),
    )?;
    let mut r = BitReader::new(&cbr.bits);
    let mut series = Vec::with_capacity(n_series);
    for _ in 0..n_series {
        let mut words = Vec::with_capacity(n_l);
        for _ in 0..n_l {
            words.push(r.read(n_q as u32)? as u32);
        }
        let latent: Vec<f64> = extend_bit_width(&words, n_q)?
            .into_iter()
            .map(|x| x as f64)
            .collect();
        series.push(pair.decoder.forward(&latent)?);
    }
    let mut out = Vec::with_capacity(cbr.n_sc);
    for k in 0..cbr.n_sc {
        let v: Vec<f64> = (0..n_series).map(|s| series[s][k]).collect();
        out.push(reorthonormalize(&crate::kmeans::unflatten_steering(&v, n_r, n_c))?);
    }
    Ok(out)
}

/// Compress a sounding with the two angle autoencoders.
pub fn ae_encode_angle(
    q_list: &[SteeringMatrix],
    phi_pair: &AePair,
    psi_pair: &AePair,
    n_b: u8,
) -> Result<CompressedCbr> {
    ae_encode_angle_inner(q_list, phi_pair, psi_pair, n_b, None)
}

pub fn ae_encode_angle_counted(
    q_list: &[SteeringMatrix],
    phi_pair: &AePair,
    psi_pair: &AePair,
    n_b: u8,
    counter: &mut MultCounter,
) -> Result<CompressedCbr> {
    ae_encode_angle_inner(q_list, phi_pair, psi_pair, n_b, Some(counter))
}

fn ae_encode_angle_inner(
    q_list: &[SteeringMatrix],
    phi_pair: &AePair,
    psi_pair: &AePair,
    n_b: u8,
    mut counter: Option<&mut MultCounter>,
) -> Result<CompressedCbr> {
    phi_pair.validate()?;
    psi_pair.validate()?;
    crate::givens::check_n_b(n_b)?;
    if q_list.len() != phi_pair.io_dim() || q_list.len() != psi_pair.io_dim() {
        return Err(Error::config(format!(
            "{} subcarriers do not match encoder N_0",
            q_list.len()
        )));
    }
    let (phi_series, psi_series) = angle_series_from_sounding(q_list)?;
    let b_phi = n_b as u32 + 2;
    let b_psi = n_b as u32;
    let mut w = BitWriter::new();
    for s in &phi_series {
        let latent = match counter.as_deref_mut() {
            Some(c) => phi_pair.encoder.forward_counted(s, c)?,
            None => phi_pair.encoder.forward(s)?,
        };
        for x in latent {
            w.write(midrise_quantize(x, b_phi) as u64, b_phi);
        }
    }
    for s in &psi_series {
        let latent = match counter.as_deref_mut() {
            Some(c) => psi_pair.encoder.forward_counted(s, c)?,
            None => psi_pair.encoder.forward(s)?,
        };
        for x in latent {
            w.write(midrise_quantize(x, b_psi) as u64, b_psi);
        }
    }
    Ok(CompressedCbr {
        format: CbrFormat::AeAngle {
            n_l_phi: phi_pair.latent_dim(),
            n_l_psi: psi_pair.latent_dim(),
            n_b,
        },
        n_sc: q_list.len(),
        bits: w.finish(),
    })
}

/// Invert the angle payload: dequantize latents, run the decoders, unscale,
/// and rebuild matrices (phi wraps, psi clamps inside the reconstruction).
pub fn ae_decode_angle(
    cbr: &CompressedCbr,
    phi_pair: &AePair,
    psi_pair: &AePair,
    n_r: usize,
    n_c: usize,
) -> Result<Vec<SteeringMatrix>> {
    phi_pair.validate()?;
    psi_pair.validate()?;
    let (n_l_phi, n_l_psi) = (phi_pair.latent_dim(), psi_pair.latent_dim());
    let n_b = match cbr.format {
        CbrFormat::AeAngle { n_l_phi: gp, n_l_psi: gs, n_b } => {
            if gp != n_l_phi || gs != n_l_psi {
                return Err(Error::config("payload latent widths do not match decoders"));
            }
            n_b
        }
        _ => {
            return Err(Error::precondition(format!(
                "payload format {:?} is not an angle-series report",
                cbr.format
            )))
        }
    };
    if cbr.n_sc != phi_pair.io_dim() || cbr.n_sc != psi_pair.io_dim() {
        return Err(Error::config("subcarrier count does not match decoder N_0"));
    }
    let n_a = num_angles(n_r, n_c)?;
    cbr.expect_format(
        &CbrFormat::AeAngle { n_l_phi, n_l_psi, n_b },
        angle_cbr_bits(n_r, n_c, n_l_phi, n_l_psi, n_b)?,
    )?;
    let b_phi = n_b as u32 + 2;
    let b_psi = n_b as u32;
    let mut r = BitReader::new(&cbr.bits);
    let mut read_series = |pair: &AePair, bits: u32, count: usize| -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut latent = Vec::with_capacity(pair.latent_dim());
            for _ in 0..pair.latent_dim() {
                latent.push(midrise_value(r.read(bits)? as u32, bits));
            }
            out.push(pair.decoder.forward(&latent)?);
        }
        Ok(out)
    };
    let phi_series = read_series(phi_pair, b_phi, n_a)?;
    let psi_series = read_series(psi_pair, b_psi, n_a)?;
    let mut out = Vec::with_capacity(cbr.n_sc);
    for k in 0..cbr.n_sc {
        let angles = AngleSet {
            n_r,
            n_c,
            phi: (0..n_a).map(|a| unscale_phi(phi_series[a][k])).collect(),
            psi: (0..n_a).map(|a| unscale_psi(psi_series[a][k])).collect(),
        };
        out.push(q_from_angles(&angles)?);
    }
    Ok(out)
}
