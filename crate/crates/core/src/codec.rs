//! Scheme registry: one place that names every compression scheme, carries
//! its trained artifacts, dispatches encode/decode, and produces the analytic
//! overhead/complexity accounting rows.

use serde::{Deserialize, Serialize};

use crate::autoenc::{
    ae_decode_angle, ae_decode_qseries, ae_encode_angle, ae_encode_angle_counted,
    ae_encode_qseries, ae_encode_qseries_counted, angle_cbr_bits, qseries_cbr_bits, AePair,
};
use crate::cbr::CompressedCbr;
use crate::error::{Error, Result};
use crate::givens::{
    check_n_b, legacy_cbr_bits, legacy_decode_cbr, legacy_encode_cbr, legacy_encode_cbr_counted,
    num_angles,
};
use crate::kmeans::{
    check_n_bf, compressed_codebook_bits, kmeans_cbr_bits, kmeans_decode_cbr, kmeans_encode_cbr,
    kmeans_encode_cbr_counted, Codebook, KmeansVariant,
};
use crate::kpi::{KpiReport, MultCounter, C_GIVENS_DEFAULT};
use crate::steering::SteeringMatrix;

/// Hidden width of the Q-series autoencoder halves.
pub const QSERIES_HIDDEN: usize = 40;
/// Hidden width of the angle autoencoder halves.
pub const ANGLE_HIDDEN: usize = 150;

/// Default encoder layer sizes for the Q-series scheme.
pub fn qseries_encoder_sizes(n_sc: usize, n_l: usize) -> Vec<usize> {
    vec![n_sc, QSERIES_HIDDEN, n_l]
}

/// Default encoder layer sizes for either half of the angle scheme.
pub fn angle_encoder_sizes(n_sc: usize, n_l: usize) -> Vec<usize> {
    vec![n_sc, ANGLE_HIDDEN, n_l]
}

/// A fully parameterized scheme selection. `Perfect` is the uncompressed
/// reference used by the link simulator; it has no payload accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SchemeSpec {
    Legacy { n_b: u8 },
    Kmeans { variant: KmeansVariant, n_bf: u8 },
    AeQSeries { n_l: usize, n_q: u8 },
    AeAngle { n_l_phi: usize, n_l_psi: usize, n_b: u8 },
    Perfect,
}

impl SchemeSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SchemeSpec::Legacy { n_b } => check_n_b(n_b),
            SchemeSpec::Kmeans { n_bf, .. } => check_n_bf(n_bf),
            SchemeSpec::AeQSeries { n_l, n_q } => {
                if n_l == 0 {
                    return Err(Error::config("latent width must be positive"));
                }
                if n_q != 16 && n_q != 32 {
                    return Err(Error::config(format!("n_q={n_q} not in {{16, 32}}")));
                }
                Ok(())
            }
            SchemeSpec::AeAngle { n_l_phi, n_l_psi, n_b } => {
                if n_l_phi == 0 || n_l_psi == 0 {
                    return Err(Error::config("latent widths must be positive"));
                }
                check_n_b(n_b)
            }
            SchemeSpec::Perfect => Ok(()),
        }
    }

    /// Parse a command-line scheme token:
    /// `legacy:<nb>`, `kmeans:<variant>:<nbf>`, `ae:qseries:<nl>[:<nq>]`,
    /// `ae:angle:<nlphi>:<nlpsi>[:<nb>]`, `perfect`.
    pub fn parse_token(token: &str) -> Result<SchemeSpec> {
        let bad = || Error::config(format!("unrecognized scheme token '{token}'"));
        let parts: Vec<&str> = token.split(':').collect();
        let spec = match parts.as_slice() {
            ["perfect"] => SchemeSpec::Perfect,
            ["legacy"] => SchemeSpec::Legacy { n_b: 4 },
            ["legacy", nb] => SchemeSpec::Legacy { n_b: nb.parse().map_err(|_| bad())? },
            ["kmeans", variant, nbf] => SchemeSpec::Kmeans {
                variant: KmeansVariant::from_token(variant)?,
                n_bf: nbf.parse().map_err(|_| bad())?,
            },
            ["ae", "qseries", nl] => SchemeSpec::AeQSeries {
                n_l: nl.parse().map_err(|_| bad())?,
                n_q: 16,
            },
            ["ae", "qseries", nl, nq] => SchemeSpec::AeQSeries {
                n_l: nl.parse().map_err(|_| bad())?,
                n_q: nq.parse().map_err(|_| bad())?,
            },
            ["ae", "angle", nlp, nls] => SchemeSpec::AeAngle {
                n_l_phi: nlp.parse().map_err(|_| bad())?,
                n_l_psi: nls.parse().map_err(|_| bad())?,
                n_b: 4,
            },
            ["ae", "angle", nlp, nls, nb] => SchemeSpec::AeAngle {
                n_l_phi: nlp.parse().map_err(|_| bad())?,
                n_l_psi: nls.parse().map_err(|_| bad())?,
                n_b: nb.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical token form, inverse of [`SchemeSpec::parse_token`].
    pub fn token(&self) -> String {
        match *self {
            SchemeSpec::Legacy { n_b } => format!("legacy:{n_b}"),
            SchemeSpec::Kmeans { variant, n_bf } => {
                format!("kmeans:{}:{}", variant.token(), n_bf)
            }
            SchemeSpec::AeQSeries { n_l, n_q } => format!("ae:qseries:{n_l}:{n_q}"),
            SchemeSpec::AeAngle { n_l_phi, n_l_psi, n_b } => {
                format!("ae:angle:{n_l_phi}:{n_l_psi}:{n_b}")
            }
            SchemeSpec::Perfect => "perfect".to_string(),
        }
    }

    /// The (scheme, variant, params) naming triple used in report rows.
    pub fn naming(&self) -> (String, String, String) {
        match *self {
            SchemeSpec::Legacy { n_b } => {
                ("legacy".into(), String::new(), format!("n_b={n_b}"))
            }
            SchemeSpec::Kmeans { variant, n_bf } => {
                ("kmeans".into(), variant.token().into(), format!("n_bf={n_bf}"))
            }
            SchemeSpec::AeQSeries { n_l, n_q } => {
                ("ae".into(), "qseries".into(), format!("n_l={n_l} n_q={n_q}"))
            }
            SchemeSpec::AeAngle { n_l_phi, n_l_psi, n_b } => (
                "ae".into(),
                "angle".into(),
                format!("n_l_phi={n_l_phi} n_l_psi={n_l_psi} n_b={n_b}"),
            ),
            SchemeSpec::Perfect => ("perfect".into(), String::new(), String::new()),
        }
    }
}

impl std::fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.token())
    }
}

/// Trained state a scheme needs at run time.
#[derive(Debug, Clone)]
pub enum SchemeArtifacts {
    None,
    Codebook(Codebook),
    QseriesAe(AePair),
    AngleAe { phi: AePair, psi: AePair },
}

/// A scheme bound to its artifacts, ready to encode and decode soundings.
#[derive(Debug, Clone)]
pub struct Codec {
    spec: SchemeSpec,
    artifacts: SchemeArtifacts,
}

impl Codec {
    pub fn new(spec: SchemeSpec, artifacts: SchemeArtifacts) -> Result<Codec> {
        spec.validate()?;
        match (&spec, &artifacts) {
            (SchemeSpec::Legacy { .. } | SchemeSpec::Perfect, SchemeArtifacts::None) => {}
            (SchemeSpec::Kmeans { variant, n_bf }, SchemeArtifacts::Codebook(cb)) => {
                cb.validate()?;
                if cb.variant != *variant || cb.n_bf != *n_bf {
                    return Err(Error::missing_artifact(format!(
                        "codebook is {}:{}, scheme wants {}:{}",
                        cb.variant.token(),
                        cb.n_bf,
                        variant.token(),
                        n_bf
                    )));
                }
            }
            (SchemeSpec::AeQSeries { n_l, .. }, SchemeArtifacts::QseriesAe(pair)) => {
                pair.validate()?;
                if pair.latent_dim() != *n_l {
                    return Err(Error::missing_artifact(format!(
                        "model latent width {} does not match scheme n_l={n_l}",
                        pair.latent_dim()
                    )));
                }
            }
            (SchemeSpec::AeAngle { n_l_phi, n_l_psi, .. }, SchemeArtifacts::AngleAe { phi, psi }) => {
                phi.validate()?;
                psi.validate()?;
                if phi.latent_dim() != *n_l_phi || psi.latent_dim() != *n_l_psi {
                    return Err(Error::missing_artifact(
                        "model latent widths do not match scheme parameters",
                    ));
                }
            }
            _ => {
                return Err(Error::missing_artifact(format!(
                    "scheme {} was given the wrong artifact kind",
                    spec.token()
                )))
            }
        }
        Ok(Codec { spec, artifacts })
    }

    pub fn spec(&self) -> &SchemeSpec {
        &self.spec
    }

    /// Compress one sounding. `Perfect` has no payload representation.
    pub fn encode(&self, q_list: &[SteeringMatrix]) -> Result<CompressedCbr> {
        self.encode_inner(q_list, None)
    }

    pub fn encode_counted(
        &self,
        q_list: &[SteeringMatrix],
        counter: &mut MultCounter,
    ) -> Result<CompressedCbr> {
        self.encode_inner(q_list, Some(counter))
    }

    fn encode_inner(
        &self,
        q_list: &[SteeringMatrix],
        counter: Option<&mut MultCounter>,
    ) -> Result<CompressedCbr> {
        match (&self.spec, &self.artifacts) {
            (SchemeSpec::Legacy { n_b }, _) => match counter {
                Some(c) => legacy_encode_cbr_counted(q_list, *n_b, c),
                None => legacy_encode_cbr(q_list, *n_b),
            },
            (SchemeSpec::Kmeans { .. }, SchemeArtifacts::Codebook(cb)) => match counter {
                Some(c) => kmeans_encode_cbr_counted(q_list, cb, c),
                None => kmeans_encode_cbr(q_list, cb),
            },
            (SchemeSpec::AeQSeries { n_q, .. }, SchemeArtifacts::QseriesAe(pair)) => match counter {
                Some(c) => ae_encode_qseries_counted(q_list, pair, *n_q, c),
                None => ae_encode_qseries(q_list, pair, *n_q),
            },
            (SchemeSpec::AeAngle { n_b, .. }, SchemeArtifacts::AngleAe { phi, psi }) => {
                match counter {
                    Some(c) => ae_encode_angle_counted(q_list, phi, psi, *n_b, c),
                    None => ae_encode_angle(q_list, phi, psi, *n_b),
                }
            }
            (SchemeSpec::Perfect, _) => {
                Err(Error::config("the perfect-feedback reference has no payload"))
            }
            _ => Err(Error::missing_artifact("codec artifacts missing")),
        }
    }

    /// Reconstruct steering matrices from a payload produced by [`Codec::encode`].
    pub fn decode(
        &self,
        cbr: &CompressedCbr,
        n_r: usize,
        n_c: usize,
    ) -> Result<Vec<SteeringMatrix>> {
        match (&self.spec, &self.artifacts) {
            (SchemeSpec::Legacy { .. }, _) => legacy_decode_cbr(cbr, n_r, n_c),
            (SchemeSpec::Kmeans { .. }, SchemeArtifacts::Codebook(cb)) => {
                kmeans_decode_cbr(cbr, cb)
            }
            (SchemeSpec::AeQSeries { .. }, SchemeArtifacts::QseriesAe(pair)) => {
                ae_decode_qseries(cbr, pair, n_r, n_c)
            }
            (SchemeSpec::AeAngle { .. }, SchemeArtifacts::AngleAe { phi, psi }) => {
                ae_decode_angle(cbr, phi, psi, n_r, n_c)
            }
            (SchemeSpec::Perfect, _) => {
                Err(Error::config("the perfect-feedback reference has no payload"))
            }
            _ => Err(Error::missing_artifact("codec artifacts missing")),
        }
    }

    /// What the beamformer ends up steering with: encode then decode, or the
    /// input itself for the perfect-feedback reference.
    pub fn roundtrip(&self, q_list: &[SteeringMatrix]) -> Result<Vec<SteeringMatrix>> {
        if matches!(self.spec, SchemeSpec::Perfect) {
            return Ok(q_list.to_vec());
        }
        let (n_r, n_c) = match q_list.first() {
            Some(q) => (q.n_r(), q.n_c()),
            None => return Err(Error::precondition("empty subcarrier list")),
        };
        let cbr = self.encode(q_list)?;
        self.decode(&cbr, n_r, n_c)
    }
}

/// Feedback payload bits per compressed report.
pub fn feedback_bits(spec: &SchemeSpec, n_r: usize, n_c: usize, n_sc: usize) -> Result<u64> {
    spec.validate()?;
    Ok(match *spec {
        SchemeSpec::Legacy { n_b } => legacy_cbr_bits(n_sc, n_r, n_c, n_b)? as u64,
        SchemeSpec::Kmeans { variant, n_bf } => kmeans_cbr_bits(variant, n_sc, n_bf) as u64,
        SchemeSpec::AeQSeries { n_l, n_q } => qseries_cbr_bits(n_r, n_c, n_l, n_q) as u64,
        SchemeSpec::AeAngle { n_l_phi, n_l_psi, n_b } => {
            angle_cbr_bits(n_r, n_c, n_l_phi, n_l_psi, n_b)? as u64
        }
        SchemeSpec::Perfect => {
            return Err(Error::config("perfect-feedback reference has no overhead accounting"))
        }
    })
}

/// One-time model-sharing bits: compressed codebook for K-means (on the
/// default n_b=4 grid), fp32 encoder parameters for the autoencoders.
pub fn model_bits(spec: &SchemeSpec, n_r: usize, n_c: usize, n_sc: usize) -> Result<u64> {
    spec.validate()?;
    Ok(match *spec {
        SchemeSpec::Legacy { .. } => 0,
        SchemeSpec::Kmeans { variant, n_bf } => {
            compressed_codebook_bits(variant, n_r, n_c, n_bf, 4)? as u64
        }
        SchemeSpec::AeQSeries { n_l, .. } => {
            encoder_param_bits(&qseries_encoder_sizes(n_sc, n_l))
        }
        SchemeSpec::AeAngle { n_l_phi, n_l_psi, .. } => {
            encoder_param_bits(&angle_encoder_sizes(n_sc, n_l_phi))
                + encoder_param_bits(&angle_encoder_sizes(n_sc, n_l_psi))
        }
        SchemeSpec::Perfect => {
            return Err(Error::config("perfect-feedback reference has no overhead accounting"))
        }
    })
}

fn encoder_param_bits(sizes: &[usize]) -> u64 {
    let weights: usize = sizes.windows(2).map(|w| w[0] * w[1]).sum();
    let biases: usize = sizes[1..].iter().sum();
    32 * (weights + biases) as u64
}

fn encoder_mults(sizes: &[usize]) -> u64 {
    sizes.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
}

/// Real multiplications per compressed report at the beamformee.
pub fn multiplications(spec: &SchemeSpec, n_r: usize, n_c: usize, n_sc: usize) -> Result<u64> {
    spec.validate()?;
    let n_a = num_angles(n_r, n_c)? as u64;
    Ok(match *spec {
        SchemeSpec::Legacy { .. } => C_GIVENS_DEFAULT,
        SchemeSpec::Kmeans { variant, n_bf } => {
            let m = crate::kmeans::vector_dim(variant, n_r, n_c)? as u64;
            let searches: u64 = match variant {
                KmeansVariant::SplitAngles => 2,
                _ => 1,
            };
            let search = n_sc as u64 * (1u64 << n_bf) * m * searches;
            match variant {
                KmeansVariant::SteeringMatrix => search,
                _ => search + C_GIVENS_DEFAULT,
            }
        }
        SchemeSpec::AeQSeries { n_l, .. } => {
            let series = (2 * n_r * n_c - n_c) as u64;
            series * encoder_mults(&qseries_encoder_sizes(n_sc, n_l))
        }
        SchemeSpec::AeAngle { n_l_phi, n_l_psi, .. } => {
            n_a * encoder_mults(&angle_encoder_sizes(n_sc, n_l_phi))
                + n_a * encoder_mults(&angle_encoder_sizes(n_sc, n_l_psi))
                + C_GIVENS_DEFAULT
        }
        SchemeSpec::Perfect => {
            return Err(Error::config("perfect-feedback reference has no overhead accounting"))
        }
    })
}

/// Analytic accounting row for one scheme.
pub fn kpi_row(spec: &SchemeSpec, n_r: usize, n_c: usize, n_sc: usize) -> Result<KpiReport> {
    let (scheme, variant, params) = spec.naming();
    Ok(KpiReport {
        scheme,
        variant,
        params,
        feedback_bits: feedback_bits(spec, n_r, n_c, n_sc)?,
        model_bits: model_bits(spec, n_r, n_c, n_sc)?,
        mults: multiplications(spec, n_r, n_c, n_sc)?,
        nmse_db: None,
    })
}

/// The default overhead/complexity sweep: legacy, the three K-means variants
/// over n_bf 13..=16, the angle autoencoder, and the Q-series autoencoder
/// over its latent widths.
pub fn full_sweep(n_r: usize, n_c: usize, n_sc: usize) -> Result<Vec<KpiReport>> {
    let mut specs = vec![SchemeSpec::Legacy { n_b: 4 }];
    for variant in [
        KmeansVariant::JointAngles,
        KmeansVariant::SplitAngles,
        KmeansVariant::SteeringMatrix,
    ] {
        for n_bf in 13..=16 {
            specs.push(SchemeSpec::Kmeans { variant, n_bf });
        }
    }
    specs.push(SchemeSpec::AeAngle { n_l_phi: 32, n_l_psi: 16, n_b: 4 });
    for n_l in [6usize, 8, 12, 16] {
        specs.push(SchemeSpec::AeQSeries { n_l, n_q: 16 });
    }
    specs.iter().map(|s| kpi_row(s, n_r, n_c, n_sc)).collect()
}
