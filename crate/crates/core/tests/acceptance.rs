//! Acceptance gate: one test per shipping criterion, each printing a single
//! PASS or FAIL line (run with `--nocapture` to see them). A failing
//! criterion also fails the test, so `cargo test` stays the single source of
//! truth.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use csilab::autoenc::{
    extend_bit_width, init_fnn, model_sharing_bits, mse_and_grads, ptq_quantize, reduce_bit_width,
    train_autoencoder, Activation, AePair, ModelRole, Quantization, TrainConfig,
};
use csilab::codec::{
    angle_encoder_sizes, full_sweep, multiplications, qseries_encoder_sizes, Codec,
    SchemeArtifacts, SchemeSpec,
};
use csilab::givens::{
    angles_from_q, angles_from_q_counted, dequantize_angles, q_from_angles, quantize_angles,
};
use csilab::kmeans::{
    build_training_vectors, compress_codebook, decompress_codebook, nearest_codeword,
    train_codebook_detailed, Codebook, KmeansVariant, TrainParams,
};
use csilab::kpi::{reconstruction_nmse, MultCounter, C_GIVENS_DEFAULT};
use csilab::linksim::{not_worse_refuted, per_point, PerPoint, SimConfig};
use csilab::steering::random_orthonormal;
use csilab::store::{
    generate_dataset, read_codebook, read_compressed_codebook, read_dataset, read_models,
    write_codebook, write_compressed_codebook, write_dataset, write_models, StoredModel,
};
use csilab::Error;

fn report(n: u32, what: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("PASS criterion {n}: {what} ({detail})"),
        Err(why) => {
            println!("FAIL criterion {n}: {what} ({why})");
            panic!("criterion {n} failed: {why}");
        }
    }
}

// ---------------------------------------------------------------- criterion 1

struct RefRow {
    token: &'static str,
    feedback: u64,
    /// None marks a configured report-only cell with no analytic derivation.
    model: Option<u64>,
    mults: Option<u64>,
}

/// Published reference cells; K-suffixed cells carry their rounding, so the
/// comparison tolerance is 0.5% relative.
const REFERENCE: [RefRow; 18] = [
    RefRow { token: "legacy:4", feedback: 8320, model: Some(0), mults: Some(225_000) },
    RefRow { token: "kmeans:joint:13", feedback: 832, model: Some(1_065_000), mults: Some(13_857_000) },
    RefRow { token: "kmeans:joint:14", feedback: 896, model: Some(2_130_000), mults: Some(27_488_000) },
    RefRow { token: "kmeans:joint:15", feedback: 960, model: Some(4_260_000), mults: Some(54_751_000) },
    RefRow { token: "kmeans:joint:16", feedback: 1024, model: Some(8_520_000), mults: Some(109_277_000) },
    RefRow { token: "kmeans:split:13", feedback: 1664, model: Some(639_000), mults: Some(13_857_000) },
    RefRow { token: "kmeans:split:14", feedback: 1792, model: Some(1_278_000), mults: Some(27_488_000) },
    RefRow { token: "kmeans:split:15", feedback: 1920, model: Some(2_556_000), mults: Some(54_751_000) },
    RefRow { token: "kmeans:split:16", feedback: 2048, model: Some(5_112_000), mults: Some(109_277_000) },
    RefRow { token: "kmeans:steering:13", feedback: 832, model: Some(1_065_000), mults: Some(15_729_000) },
    RefRow { token: "kmeans:steering:14", feedback: 896, model: Some(2_130_000), mults: Some(31_457_000) },
    RefRow { token: "kmeans:steering:15", feedback: 960, model: Some(4_260_000), mults: Some(62_914_000) },
    RefRow { token: "kmeans:steering:16", feedback: 1024, model: Some(8_520_000), mults: Some(125_829_000) },
    RefRow { token: "ae:angle:32:16:4", feedback: 3328, model: None, mults: None },
    RefRow { token: "ae:qseries:6:16", feedback: 2880, model: Some(91_000), mults: Some(84_000) },
    RefRow { token: "ae:qseries:8:16", feedback: 3840, model: Some(94_000), mults: Some(86_000) },
    RefRow { token: "ae:qseries:12:16", feedback: 5760, model: Some(99_000), mults: Some(91_000) },
    RefRow { token: "ae:qseries:16:16", feedback: 7680, model: Some(104_000), mults: Some(96_000) },
];

fn within_half_percent(analytic: u64, reference: u64) -> bool {
    if reference == 0 {
        return analytic == 0;
    }
    (analytic as f64 - reference as f64).abs() / reference as f64 <= 0.005
}

#[test]
fn criterion_1_overhead_complexity_table() {
    report(1, "analytic overhead/complexity table matches the reference", (|| {
        let t0 = Instant::now();
        let rows = full_sweep(8, 2, 64).map_err(|e| e.to_string())?;
        let elapsed = t0.elapsed();
        if rows.len() != REFERENCE.len() {
            return Err(format!("sweep produced {} rows, expected {}", rows.len(), REFERENCE.len()));
        }
        let mut worst = 0.0f64;
        let mut report_only = String::new();
        for (row, r) in rows.iter().zip(&REFERENCE) {
            if row.feedback_bits != r.feedback {
                return Err(format!(
                    "{}: feedback {} != reference {}",
                    r.token, row.feedback_bits, r.feedback
                ));
            }
            for (cell, analytic) in [(r.model, row.model_bits), (r.mults, row.mults)] {
                match cell {
                    Some(reference) => {
                        if !within_half_percent(analytic, reference) {
                            return Err(format!(
                                "{}: {analytic} vs reference {reference} is off by more than 0.5%",
                                r.token
                            ));
                        }
                        if reference > 0 {
                            let dev = (analytic as f64 - reference as f64).abs() / reference as f64;
                            worst = worst.max(dev);
                        }
                    }
                    None => {
                        report_only =
                            format!("; configured-only cells: model={} mults={}", row.model_bits, row.mults);
                    }
                }
            }
        }
        if elapsed.as_secs_f64() >= 1.0 {
            return Err(format!("analytic sweep took {elapsed:?}, budget is 1 s"));
        }
        Ok(format!(
            "18 rows, worst asserted deviation {:.3}%{report_only}, {elapsed:?}",
            100.0 * worst
        ))
    })());
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_ptq_model_sharing() {
    report(2, "post-training quantization shrinks the shared encoder exactly as specified", (|| {
        let enc = init_fnn(
            ModelRole::Encoder,
            &qseries_encoder_sizes(64, 6),
            &[Activation::Tanh, Activation::Linear],
            1,
        )
        .map_err(|e| e.to_string())?;
        let fp32 = model_sharing_bits(&[&enc], Quantization::None);
        let q8 = model_sharing_bits(&[&enc], Quantization::Ptq(8));
        if fp32 != 91_072 {
            return Err(format!("fp32 sharing bits {fp32}, expected 91072"));
        }
        if q8 != 23_872 {
            return Err(format!("8-bit PTQ sharing bits {q8}, expected 23872"));
        }
        // the stored form matches the accounting: narrow weights, full biases,
        // per-layer scales excluded from the count
        let q = ptq_quantize(&enc, 8).map_err(|e| e.to_string())?;
        let weights: usize = q.weights.iter().map(Vec::len).sum();
        let biases: usize = q.biases.iter().map(Vec::len).sum();
        if weights != 2800 || biases != 46 || q.scales.len() != 2 {
            return Err(format!(
                "quantized layout {weights} weights / {biases} biases / {} scales",
                q.scales.len()
            ));
        }
        let reduction = 100.0 * (1.0 - q8 as f64 / fp32 as f64);
        Ok(format!("91072 -> 23872 bits, {reduction:.1}% reduction"))
    })());
}

// ---------------------------------------------------------------- criterion 3

struct TrainedSchemes {
    specs: Vec<(SchemeSpec, Codec)>,
}

fn train_for_per(n_sc: usize) -> Result<TrainedSchemes, Error> {
    const N_BF: u8 = 10;
    let profile = SimConfig::default().profile;
    let d = generate_dataset(&profile, 2, 300, n_sc, 256, 7)?;

    let params = TrainParams { max_iter: 25, tol: 1e-4, seed: 7 };
    let mut kmeans_codecs = Vec::new();
    for variant in [KmeansVariant::JointAngles, KmeansVariant::SteeringMatrix] {
        let vectors = build_training_vectors(d.all_matrices(), variant)?;
        let (cb, _) = train_codebook_detailed(&vectors, variant, d.n_r(), d.n_c(), N_BF, &params)?;
        // both link ends run on the codebook image that survives sharing
        let shared = decompress_codebook(&compress_codebook(&cb, 4)?)?;
        let spec = SchemeSpec::Kmeans { variant, n_bf: N_BF };
        kmeans_codecs.push((spec, Codec::new(spec, SchemeArtifacts::Codebook(shared))?));
    }

    let qs_cfg = TrainConfig {
        encoder_sizes: qseries_encoder_sizes(n_sc, 16),
        latent_act: Activation::Linear,
        epochs: 40,
        learning_rate: 1e-3,
        batch: 64,
        momentum: 0.9,
        seed: 7,
    };
    let qs_pair: AePair = train_autoencoder(&csilab::autoenc::qseries_samples(&d.q)?, &qs_cfg)?.into();
    let qs_spec = SchemeSpec::AeQSeries { n_l: 16, n_q: 16 };
    let qs_codec = Codec::new(qs_spec, SchemeArtifacts::QseriesAe(qs_pair))?;

    let (phi_samples, psi_samples) = csilab::autoenc::angle_samples(&d.q)?;
    let phi_cfg = TrainConfig {
        encoder_sizes: angle_encoder_sizes(n_sc, 32),
        latent_act: Activation::Tanh,
        epochs: 25,
        learning_rate: 1e-3,
        batch: 64,
        momentum: 0.9,
        seed: 7,
    };
    let psi_cfg = TrainConfig {
        encoder_sizes: angle_encoder_sizes(n_sc, 16),
        seed: 8,
        ..phi_cfg.clone()
    };
    let phi: AePair = train_autoencoder(&phi_samples, &phi_cfg)?.into();
    let psi: AePair = train_autoencoder(&psi_samples, &psi_cfg)?.into();
    let angle_spec = SchemeSpec::AeAngle { n_l_phi: 32, n_l_psi: 16, n_b: 4 };
    let angle_codec = Codec::new(angle_spec, SchemeArtifacts::AngleAe { phi, psi })?;

    let legacy4 = SchemeSpec::Legacy { n_b: 4 };
    let legacy2 = SchemeSpec::Legacy { n_b: 2 };
    let mut specs = vec![
        (legacy4, Codec::new(legacy4, SchemeArtifacts::None)?),
        (legacy2, Codec::new(legacy2, SchemeArtifacts::None)?),
    ];
    specs.extend(kmeans_codecs);
    specs.push((qs_spec, qs_codec));
    specs.push((angle_spec, angle_codec));
    Ok(TrainedSchemes { specs })
}

#[test]
fn criterion_3_per_ordering() {
    report(3, "packet error rate ordering holds at the calibrated operating point", (|| {
        let t0 = Instant::now();
        let trained = train_for_per(64).map_err(|e| e.to_string())?;
        let mut sim = SimConfig {
            trials_per_point: 200,
            // half-dB steps across the coded waterfall
            snr_grid_db: (0..=20).map(|i| 2.0 + 0.5 * i as f64).collect(),
            master_seed: 2024,
            ..SimConfig::default()
        };

        // calibrate: find a grid point where the full-resolution baseline
        // operates between 5% and 20% PER
        let legacy4 = &trained.specs[0].1;
        let mut operating = None;
        for (i, &snr) in sim.snr_grid_db.clone().iter().enumerate() {
            let p = per_point(&sim, legacy4, i, snr).map_err(|e| e.to_string())?;
            if p.per <= 0.2 {
                if p.per >= 0.05 {
                    operating = Some((i, snr));
                }
                break;
            }
        }
        let Some((snr_index, snr_db)) = operating else {
            return Err("no SNR grid point puts the baseline between 5% and 20% PER".into());
        };

        // measure every scheme at the operating point under common random
        // numbers: same master seed, same SNR index, 1000 shared trials
        sim.trials_per_point = 1000;
        let mut points: Vec<(SchemeSpec, PerPoint)> = Vec::new();
        for (spec, codec) in &trained.specs {
            let p = per_point(&sim, codec, snr_index, snr_db).map_err(|e| e.to_string())?;
            points.push((*spec, p));
        }
        let find = |pred: &dyn Fn(&SchemeSpec) -> bool| -> &PerPoint {
            &points.iter().find(|(s, _)| pred(s)).expect("scheme measured").1
        };
        let base = find(&|s| matches!(s, SchemeSpec::Legacy { n_b: 4 }));
        let coarse = find(&|s| matches!(s, SchemeSpec::Legacy { n_b: 2 }));
        let joint = find(&|s| matches!(s, SchemeSpec::Kmeans { variant: KmeansVariant::JointAngles, .. }));
        let steering =
            find(&|s| matches!(s, SchemeSpec::Kmeans { variant: KmeansVariant::SteeringMatrix, .. }));
        let qseries = find(&|s| matches!(s, SchemeSpec::AeQSeries { .. }));
        let angle = find(&|s| matches!(s, SchemeSpec::AeAngle { .. }));

        const Z: f64 = 1.645;
        // each claim says the left scheme performs no better than the right;
        // the test fails only when the data significantly contradicts that
        let claims: [(&str, &PerPoint, &PerPoint); 6] = [
            ("kmeans joint vs legacy nb4", joint, base),
            ("kmeans steering vs legacy nb4", steering, base),
            ("ae qseries vs legacy nb4", qseries, base),
            ("ae angle vs legacy nb4", angle, base),
            ("kmeans joint vs kmeans steering", joint, steering),
            ("legacy nb2 vs legacy nb4", coarse, base),
        ];
        for (name, worse, better) in claims {
            if not_worse_refuted(worse, better, Z) {
                return Err(format!(
                    "claim '{name} is not better' refuted: {:.3} < {:.3} at {snr_db} dB",
                    worse.per, better.per
                ));
            }
        }
        if not_worse_refuted(angle, qseries, Z) {
            return Err(format!(
                "claim 'ae angle is not better than ae qseries' refuted: {:.3} < {:.3}",
                angle.per, qseries.per
            ));
        }
        let elapsed = t0.elapsed();
        if elapsed.as_secs() >= 1800 {
            return Err(format!("run took {elapsed:?}, budget is 30 minutes"));
        }
        Ok(format!(
            "operating point {snr_db} dB; PER legacy4 {:.3}, legacy2 {:.3}, joint {:.3}, steering {:.3}, qseries {:.3}, angle {:.3}; {elapsed:?}",
            base.per, coarse.per, joint.per, steering.per, qseries.per, angle.per
        ))
    })());
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_givens_roundtrip_and_quantization() {
    report(4, "angle decomposition round-trips and finer grids dominate", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut worst = 0.0f64;
        for &(n_r, n_c) in &[(2usize, 1usize), (4, 2), (8, 2), (4, 4)] {
            for _ in 0..250 {
                let q = random_orthonormal(n_r, n_c, &mut rng).map_err(|e| e.to_string())?;
                let a = angles_from_q(&q).map_err(|e| e.to_string())?;
                let back = q_from_angles(&a).map_err(|e| e.to_string())?;
                let err = (q.matrix() - back.matrix()).norm();
                worst = worst.max(err);
                if err >= 1e-6 {
                    return Err(format!("round-trip error {err:.3e} at shape {n_r}x{n_c}"));
                }
            }
        }

        let profile = SimConfig::default().profile;
        let d = generate_dataset(&profile, 2, 16, 64, 256, 21).map_err(|e| e.to_string())?;
        let mut finer_wins = 0usize;
        let mut total = 0usize;
        for q in d.all_matrices().take(1000) {
            let a = angles_from_q(q).map_err(|e| e.to_string())?;
            let mut nmse = [0.0f64; 2];
            for (slot, n_b) in [(0usize, 4u8), (1, 2)] {
                let qa = quantize_angles(&a, n_b).map_err(|e| e.to_string())?;
                let back = q_from_angles(&dequantize_angles(&qa).map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
                nmse[slot] = reconstruction_nmse(std::slice::from_ref(q), &[back])
                    .map_err(|e| e.to_string())?;
            }
            if nmse[0] < nmse[1] {
                finer_wins += 1;
            }
            total += 1;
        }
        let need = total * 95 / 100;
        if finer_wins < need {
            return Err(format!(
                "n_b=4 beat n_b=2 on only {finer_wins}/{total} matrices, needed {need}"
            ));
        }
        Ok(format!(
            "1000 round-trips, worst error {worst:.2e}; n_b=4 beat n_b=2 on {finer_wins}/{total}"
        ))
    })());
}

// ---------------------------------------------------------------- criterion 5

fn random_codebook(variant: KmeansVariant, n_bf: u8, dim: usize, rng: &mut ChaCha8Rng) -> Codebook {
    Codebook {
        variant,
        n_r: 8,
        n_c: 2,
        n_bf,
        centroids: (0..1usize << n_bf)
            .map(|_| (0..dim).map(|_| rng.random::<f32>()).collect())
            .collect(),
    }
}

#[test]
fn criterion_5_oracle_equivalences() {
    report(5, "implementations agree with their independent oracles", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(33);

        // nearest-codeword search equals an explicit scan
        let cb = random_codebook(KmeansVariant::JointAngles, 6, 26, &mut rng);
        for _ in 0..400 {
            let v: Vec<f64> = (0..26).map(|_| rng.random::<f64>() * 2.0).collect();
            let got = nearest_codeword(&v, &cb).map_err(|e| e.to_string())?;
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (k, c) in cb.centroids.iter().enumerate() {
                let d: f64 = v.iter().zip(c).map(|(x, &y)| (x - y as f64).powi(2)).sum();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            if got != best {
                return Err(format!("nearest codeword {got} != scan result {best}"));
            }
        }

        // Lloyd iterations never increase the within-cluster sum of squares
        let vectors: Vec<Vec<f64>> =
            (0..600).map(|_| (0..26).map(|_| rng.random::<f64>()).collect()).collect();
        let (_, hist) = train_codebook_detailed(
            &vectors,
            KmeansVariant::JointAngles,
            8,
            2,
            4,
            &TrainParams { max_iter: 40, tol: 0.0, seed: 5 },
        )
        .map_err(|e| e.to_string())?;
        for w in hist.windows(2) {
            if w[1] > w[0] + 1e-12 {
                return Err(format!("WCSS rose from {} to {}", w[0], w[1]));
            }
        }

        // analytic gradients match central finite differences
        let model = init_fnn(
            ModelRole::Encoder,
            &[10, 7, 4],
            &[Activation::Tanh, Activation::Linear],
            9,
        )
        .map_err(|e| e.to_string())?;
        let inputs: Vec<Vec<f64>> =
            (0..3).map(|_| (0..10).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let targets: Vec<Vec<f64>> =
            (0..3).map(|_| (0..4).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let (_, grads) = mse_and_grads(&model, &inputs, &targets).map_err(|e| e.to_string())?;
        let h = 1e-5f32;
        for l in 0..2 {
            for wi in 0..model.weights[l].len() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.weights[l][wi] += h;
                minus.weights[l][wi] -= h;
                let span = (plus.weights[l][wi] - minus.weights[l][wi]) as f64;
                let (lp, _) = mse_and_grads(&plus, &inputs, &targets).map_err(|e| e.to_string())?;
                let (lm, _) = mse_and_grads(&minus, &inputs, &targets).map_err(|e| e.to_string())?;
                let fd = (lp - lm) / span;
                let an = grads.weights[l][wi];
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
                if rel >= 1e-4 {
                    return Err(format!(
                        "gradient mismatch at layer {l} weight {wi}: analytic {an}, fd {fd}"
                    ));
                }
            }
        }

        // instrumented multiplication counts equal the analytic formulas
        let profile = SimConfig::default().profile;
        let d = generate_dataset(&profile, 2, 1, 64, 256, 55).map_err(|e| e.to_string())?;
        let sounding = &d.q[0];
        let mut g = MultCounter::new();
        for q in sounding {
            angles_from_q_counted(q, &mut g).map_err(|e| e.to_string())?;
        }
        let givens_actual = g.count();

        for (variant, n_bf, dim, searches) in [
            (KmeansVariant::JointAngles, 7u8, 26usize, 1u64),
            (KmeansVariant::SplitAngles, 7, 13, 2),
            (KmeansVariant::SteeringMatrix, 7, 30, 1),
        ] {
            let cb = random_codebook(variant, n_bf, dim, &mut rng);
            let spec = SchemeSpec::Kmeans { variant, n_bf };
            let codec =
                Codec::new(spec, SchemeArtifacts::Codebook(cb)).map_err(|e| e.to_string())?;
            let mut c = MultCounter::new();
            codec.encode_counted(sounding, &mut c).map_err(|e| e.to_string())?;
            let search = 64 * (1u64 << n_bf) * dim as u64 * searches;
            let expect_counted = match variant {
                KmeansVariant::SteeringMatrix => search,
                _ => search + givens_actual,
            };
            if c.count() != expect_counted {
                return Err(format!(
                    "{variant:?} instrumented count {} != expected {expect_counted}",
                    c.count()
                ));
            }
            let analytic = multiplications(&spec, 8, 2, 64).map_err(|e| e.to_string())?;
            let expect_analytic = match variant {
                KmeansVariant::SteeringMatrix => search,
                _ => search + C_GIVENS_DEFAULT,
            };
            if analytic != expect_analytic {
                return Err(format!(
                    "{variant:?} analytic count {analytic} != expected {expect_analytic}"
                ));
            }
        }

        // autoencoder forward passes, counted against the layer products
        let enc = init_fnn(
            ModelRole::Encoder,
            &qseries_encoder_sizes(64, 6),
            &[Activation::Tanh, Activation::Linear],
            2,
        )
        .map_err(|e| e.to_string())?;
        let dec = init_fnn(
            ModelRole::Decoder,
            &[6, 40, 64],
            &[Activation::Tanh, Activation::Linear],
            3,
        )
        .map_err(|e| e.to_string())?;
        let spec = SchemeSpec::AeQSeries { n_l: 6, n_q: 16 };
        let codec = Codec::new(spec, SchemeArtifacts::QseriesAe(AePair { encoder: enc, decoder: dec }))
            .map_err(|e| e.to_string())?;
        let mut c = MultCounter::new();
        codec.encode_counted(sounding, &mut c).map_err(|e| e.to_string())?;
        let analytic = multiplications(&spec, 8, 2, 64).map_err(|e| e.to_string())?;
        if c.count() != 30 * (64 * 40 + 40 * 6) || c.count() != analytic {
            return Err(format!(
                "qseries instrumented count {} != analytic {analytic}",
                c.count()
            ));
        }

        let phi = AePair {
            encoder: init_fnn(ModelRole::Encoder, &angle_encoder_sizes(64, 32),
                &[Activation::Tanh, Activation::Tanh], 4).map_err(|e| e.to_string())?,
            decoder: init_fnn(ModelRole::Decoder, &[32, 150, 64],
                &[Activation::Tanh, Activation::Tanh], 5).map_err(|e| e.to_string())?,
        };
        let psi = AePair {
            encoder: init_fnn(ModelRole::Encoder, &angle_encoder_sizes(64, 16),
                &[Activation::Tanh, Activation::Tanh], 6).map_err(|e| e.to_string())?,
            decoder: init_fnn(ModelRole::Decoder, &[16, 150, 64],
                &[Activation::Tanh, Activation::Tanh], 7).map_err(|e| e.to_string())?,
        };
        let spec = SchemeSpec::AeAngle { n_l_phi: 32, n_l_psi: 16, n_b: 4 };
        let codec = Codec::new(spec, SchemeArtifacts::AngleAe { phi, psi })
            .map_err(|e| e.to_string())?;
        let mut c = MultCounter::new();
        codec.encode_counted(sounding, &mut c).map_err(|e| e.to_string())?;
        let analytic = multiplications(&spec, 8, 2, 64).map_err(|e| e.to_string())?;
        if c.count() != analytic - C_GIVENS_DEFAULT {
            return Err(format!(
                "angle instrumented count {} != analytic encoder share {}",
                c.count(),
                analytic - C_GIVENS_DEFAULT
            ));
        }

        Ok(format!(
            "search/gradient/count oracles agree; instrumented Givens extraction: {givens_actual} \
             mults per report vs configured constant {C_GIVENS_DEFAULT}"
        ))
    })());
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_latent_bit_width() {
    report(6, "latent bit-width reduction meets its precision contract", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(17);

        // 32-bit: identity on the bit pattern
        let mut values: Vec<f32> = (0..10_000)
            .map(|_| f32::from_bits(rng.random::<u32>()))
            .filter(|x| x.is_finite())
            .collect();
        values.extend_from_slice(&[0.0, -0.0, f32::MIN_POSITIVE, 65504.0, -65504.0, 1e-30]);
        let (words, clamped) = reduce_bit_width(&values, 32).map_err(|e| e.to_string())?;
        if clamped != 0 {
            return Err("32-bit path reported clamping".into());
        }
        let back = extend_bit_width(&words, 32).map_err(|e| e.to_string())?;
        for (a, b) in values.iter().zip(&back) {
            if a.to_bits() != b.to_bits() {
                return Err(format!("32-bit round-trip changed {a} to {b}"));
            }
        }

        // 16-bit: bounded relative error across the normal range
        let mut worst_rel = 0.0f64;
        for _ in 0..20_000 {
            let exp = rng.random_range(-14.0f64..15.9);
            let mag = 2.0f64.powf(exp);
            let x = (mag * (1.0 + rng.random::<f64>())).min(65504.0) as f32
                * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let (w, _) = reduce_bit_width(&[x], 16).map_err(|e| e.to_string())?;
            let y = extend_bit_width(&w, 16).map_err(|e| e.to_string())?[0];
            let rel = ((y as f64 - x as f64) / x as f64).abs();
            worst_rel = worst_rel.max(rel);
            if rel > (2.0f64).powi(-11) {
                return Err(format!("relative error {rel:.3e} for {x} exceeds 2^-11"));
            }
        }

        // 16-bit: bounded absolute error across the subnormal range
        for _ in 0..20_000 {
            let x = (rng.random::<f64>() * 6.0e-5) as f32
                * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let (w, _) = reduce_bit_width(&[x], 16).map_err(|e| e.to_string())?;
            let y = extend_bit_width(&w, 16).map_err(|e| e.to_string())?[0];
            let abs = (y as f64 - x as f64).abs();
            if x.abs() < 2.0f32.powi(-14) && abs > (2.0f64).powi(-25) * 1.0000001 {
                return Err(format!("absolute error {abs:.3e} for subnormal {x} exceeds 2^-25"));
            }
        }

        // 16-bit: overflow clamps to the largest finite value and is counted
        let (w, clamped) = reduce_bit_width(&[1e6, -1e6, f32::INFINITY], 16)
            .map_err(|e| e.to_string())?;
        let y = extend_bit_width(&w, 16).map_err(|e| e.to_string())?;
        if clamped != 3 || y[0] != 65504.0 || y[1] != -65504.0 || y[2] != 65504.0 {
            return Err(format!("overflow handling produced {y:?} with {clamped} clamps"));
        }

        Ok(format!("32-bit exact; 16-bit worst normal-range error {worst_rel:.2e}"))
    })());
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_persistence() {
    report(7, "artifacts persist faithfully and detect corruption", (|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let profile = SimConfig::default().profile;

        // dataset: bit-exact round-trip, corrupt magic, missing sidecar
        let d = generate_dataset(&profile, 2, 3, 16, 64, 9).map_err(|e| e.to_string())?;
        let path = dir.path().join("d.csid");
        write_dataset(&d, &path).map_err(|e| e.to_string())?;
        let back = read_dataset(&path).map_err(|e| e.to_string())?;
        if back.meta != d.meta || back.q != d.q {
            return Err("dataset round-trip is not bit-exact".into());
        }
        let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        bytes[0] ^= 0xFF;
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        match read_dataset(&path) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => return Err(format!("corrupt magic gave {other:?}")),
        }
        bytes[0] ^= 0xFF;
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        let mut sidecar = path.as_os_str().to_os_string();
        sidecar.push(".json");
        std::fs::remove_file(&sidecar).map_err(|e| e.to_string())?;
        match read_dataset(&path) {
            Err(Error::MissingArtifact(_)) => {}
            other => return Err(format!("missing sidecar gave {other:?}")),
        }

        // codebook: round-trip and truncation
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cb = random_codebook(KmeansVariant::SplitAngles, 5, 13, &mut rng);
        let path = dir.path().join("c.cscb");
        write_codebook(&cb, &path).map_err(|e| e.to_string())?;
        if read_codebook(&path).map_err(|e| e.to_string())? != cb {
            return Err("codebook round-trip changed the contents".into());
        }
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        std::fs::write(&path, &bytes[..bytes.len() - 3]).map_err(|e| e.to_string())?;
        match read_codebook(&path) {
            Err(Error::Format { .. }) => {}
            other => return Err(format!("truncated codebook gave {other:?}")),
        }

        // model container: fp32 plus quantized round-trip, version gate
        let enc = init_fnn(
            ModelRole::Encoder,
            &[16, 8, 4],
            &[Activation::Tanh, Activation::Linear],
            2,
        )
        .map_err(|e| e.to_string())?;
        let q = ptq_quantize(&enc, 8).map_err(|e| e.to_string())?;
        let models = vec![StoredModel::Fp32(enc), StoredModel::Ptq(q)];
        let path = dir.path().join("m.csnn");
        write_models(&models, &path).map_err(|e| e.to_string())?;
        if read_models(&path).map_err(|e| e.to_string())? != models {
            return Err("model container round-trip changed the contents".into());
        }
        let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        bytes[5] = 9;
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        match read_models(&path) {
            Err(Error::Format { offset: 4, .. }) => {}
            other => return Err(format!("future major version gave {other:?}")),
        }

        // compressed codebook: round-trip and trailing garbage
        let cc = compress_codebook(&cb, 4).map_err(|e| e.to_string())?;
        let path = dir.path().join("s.cscc");
        write_compressed_codebook(&cc, &path).map_err(|e| e.to_string())?;
        if read_compressed_codebook(&path).map_err(|e| e.to_string())? != cc {
            return Err("compressed codebook round-trip changed the contents".into());
        }
        let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        bytes.push(0xAA);
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        match read_compressed_codebook(&path) {
            Err(Error::Format { .. }) => {}
            other => return Err(format!("trailing bytes gave {other:?}")),
        }

        Ok("four formats round-trip bit-exact and reject corruption".into())
    })());
}
