//! K-means codebook codecs over steering-matrix feedback.
//!
//! Three flavors of training vector are supported: the joint angle vector
//! `[phi.., psi..]`, the split scheme that pools phi vectors and psi vectors
//! into one training set (twice the samples, half the dimension, one shared
//! codebook searched twice per subcarrier), and the raw steering-matrix
//! flattening (real parts row-major, then imaginary parts of all rows but
//! the last, whose imaginary part is zero by convention).
//!
//! Codebooks are trained with Lloyd's algorithm under k-means++ seeding and
//! can be compressed for model sharing by scalar-quantizing the codewords on
//! the same offset grids the baseline feedback uses.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitio::{BitReader, BitWriter, Bitstream};
use crate::cbr::{CbrFormat, CompressedCbr};
use crate::error::{Error, Result};
use crate::givens::{
    angles_from_q, num_angles, phi_grid, psi_grid, q_from_angles, quantize_phi, quantize_psi,
    AngleSet,
};
use crate::kpi::MultCounter;
use crate::steering::{reorthonormalize, SteeringMatrix};

/// Which training-vector construction a codebook uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KmeansVariant {
    JointAngles,
    SplitAngles,
    SteeringMatrix,
}

impl KmeansVariant {
    /// Short token used by the CLI and artifact filenames.
    pub fn token(self) -> &'static str {
        match self {
            KmeansVariant::JointAngles => "joint",
            KmeansVariant::SplitAngles => "split",
            KmeansVariant::SteeringMatrix => "steering",
        }
    }

    pub fn from_token(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(KmeansVariant::JointAngles),
            "split" => Ok(KmeansVariant::SplitAngles),
            "steering" => Ok(KmeansVariant::SteeringMatrix),
            _ => Err(Error::config(format!(
                "unknown k-means variant '{s}' (expected joint, split, or steering)"
            ))),
        }
    }

    /// Stable tag for the binary codebook format.
    pub fn tag(self) -> u8 {
        match self {
            KmeansVariant::JointAngles => 1,
            KmeansVariant::SplitAngles => 2,
            KmeansVariant::SteeringMatrix => 3,
        }
    }

    pub fn from_tag(t: u8) -> Result<Self> {
        match t {
            1 => Ok(KmeansVariant::JointAngles),
            2 => Ok(KmeansVariant::SplitAngles),
            3 => Ok(KmeansVariant::SteeringMatrix),
            _ => Err(Error::config(format!("unknown k-means variant tag {t}"))),
        }
    }
}

/// Training-vector dimension for a variant at a given steering shape.
pub fn vector_dim(variant: KmeansVariant, n_r: usize, n_c: usize) -> Result<usize> {
    let n_a = num_angles(n_r, n_c)?;
    Ok(match variant {
        KmeansVariant::JointAngles => 2 * n_a,
        KmeansVariant::SplitAngles => n_a,
        KmeansVariant::SteeringMatrix => 2 * n_r * n_c - n_c,
    })
}

/// Flatten one steering matrix into the raw-matrix training layout.
pub fn steering_vector(q: &SteeringMatrix) -> Vec<f64> {
    let m = q.matrix();
    let (n_r, n_c) = (q.n_r(), q.n_c());
    let mut v = Vec::with_capacity(2 * n_r * n_c - n_c);
    for r in 0..n_r {
        for c in 0..n_c {
            v.push(m[(r, c)].re);
        }
    }
    for r in 0..n_r - 1 {
        for c in 0..n_c {
            v.push(m[(r, c)].im);
        }
    }
    v
}

/// Inverse of [`steering_vector`]; the last row gets zero imaginary parts.
pub(crate) fn unflatten_steering(v: &[f64], n_r: usize, n_c: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_element(n_r, n_c, Complex64::new(0.0, 0.0));
    let mut k = 0;
    for r in 0..n_r {
        for c in 0..n_c {
            m[(r, c)].re = v[k];
            k += 1;
        }
    }
    for r in 0..n_r - 1 {
        for c in 0..n_c {
            m[(r, c)].im = v[k];
            k += 1;
        }
    }
    m
}

/// Build the training set for a variant from a collection of steering
/// matrices. The split variant yields two vectors per matrix (its phi vector
/// and its psi vector, pooled without labels).
pub fn build_training_vectors<'a, I>(qs: I, variant: KmeansVariant) -> Result<Vec<Vec<f64>>>
where
    I: IntoIterator<Item = &'a SteeringMatrix>,
{
    let mut out = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for q in qs {
        match shape {
            None => shape = Some((q.n_r(), q.n_c())),
            Some(s) if s != (q.n_r(), q.n_c()) => {
                return Err(Error::precondition("mixed steering shapes in training set"))
            }
            _ => {}
        }
        match variant {
            KmeansVariant::JointAngles => {
                let a = angles_from_q(q)?;
                let mut v = a.phi;
                v.extend_from_slice(&a.psi);
                out.push(v);
            }
            KmeansVariant::SplitAngles => {
                let a = angles_from_q(q)?;
                out.push(a.phi);
                out.push(a.psi);
            }
            KmeansVariant::SteeringMatrix => out.push(steering_vector(q)),
        }
    }
    if out.is_empty() {
        return Err(Error::precondition("empty training set"));
    }
    Ok(out)
}

/// A trained (or decompressed) codebook of `2^n_bf` centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub variant: KmeansVariant,
    pub n_r: usize,
    pub n_c: usize,
    pub n_bf: u8,
    /// `n_k` rows, each of the variant's vector dimension.
    pub centroids: Vec<Vec<f32>>,
}

pub fn check_n_bf(n_bf: u8) -> Result<()> {
    if !(1..=16).contains(&n_bf) {
        return Err(Error::config(format!("index bit width n_bf={n_bf} out of range 1..=16")));
    }
    Ok(())
}

impl Codebook {
    pub fn n_k(&self) -> usize {
        1usize << self.n_bf
    }

    pub fn dim(&self) -> Result<usize> {
        vector_dim(self.variant, self.n_r, self.n_c)
    }

    pub fn validate(&self) -> Result<()> {
        check_n_bf(self.n_bf)?;
        let m = self.dim()?;
        if self.centroids.len() != self.n_k() {
            return Err(Error::precondition(format!(
                "codebook holds {} centroids, expected {}",
                self.centroids.len(),
                self.n_k()
            )));
        }
        for row in &self.centroids {
            if row.len() != m {
                return Err(Error::precondition(format!(
                    "centroid length {} does not match vector dimension {m}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::training("non-finite centroid value"));
            }
        }
        Ok(())
    }
}

/// Lloyd training knobs.
#[derive(Debug, Clone, Copy)]
pub struct TrainParams {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { max_iter: 100, tol: 1e-6, seed: 0 }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp_seed(vectors: &[Vec<f64>], n_k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..vectors.len());
    let mut centroids = vec![vectors[first].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| dist2(v, &centroids[0])).collect();
    while centroids.len() < n_k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = vectors.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                r -= w;
                if r <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all mass sits on chosen points already (duplicate-heavy input)
            rng.random_range(0..vectors.len())
        };
        centroids.push(vectors[idx].clone());
        for (v, d) in vectors.iter().zip(d2.iter_mut()) {
            *d = d.min(dist2(v, centroids.last().unwrap()));
        }
    }
    centroids
}

/// Train a codebook and return the per-iteration WCSS trace alongside it.
pub fn train_codebook_detailed(
    vectors: &[Vec<f64>],
    variant: KmeansVariant,
    n_r: usize,
    n_c: usize,
    n_bf: u8,
    params: &TrainParams,
) -> Result<(Codebook, Vec<f64>)> {
    check_n_bf(n_bf)?;
    let m = vector_dim(variant, n_r, n_c)?;
    let n_k = 1usize << n_bf;
    if vectors.len() < n_k {
        return Err(Error::training(format!(
            "{} training vectors cannot fill 2^{n_bf} = {n_k} clusters",
            vectors.len()
        )));
    }
    for v in vectors {
        if v.len() != m {
            return Err(Error::precondition(format!(
                "training vector length {} does not match dimension {m}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::training("non-finite training vector"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_pp_seed(vectors, n_k, &mut rng);
    let mut assign = vec![0usize; vectors.len()];
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;

    for _ in 0..params.max_iter {
        let mut wcss = 0.0;
        for (vi, v) in vectors.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (k, c) in centroids.iter().enumerate() {
                let d = dist2(v, c);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            assign[vi] = best;
            wcss += best_d;
        }
        debug_assert!(
            wcss <= prev * (1.0 + 1e-9) + 1e-9,
            "WCSS rose from {prev} to {wcss}"
        );
        history.push(wcss);
        if prev.is_finite() {
            let rel = (prev - wcss).abs() / prev.max(f64::MIN_POSITIVE);
            if rel < params.tol {
                break;
            }
        }
        prev = wcss;

        let mut sums = vec![vec![0.0f64; m]; n_k];
        let mut counts = vec![0usize; n_k];
        for (vi, v) in vectors.iter().enumerate() {
            let k = assign[vi];
            counts[k] += 1;
            for (s, x) in sums[k].iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut claimed = vec![false; vectors.len()];
        for k in 0..n_k {
            if counts[k] > 0 {
                for (c, s) in centroids[k].iter_mut().zip(&sums[k]) {
                    *c = s / counts[k] as f64;
                }
            } else {
                // revive the empty cluster on the point farthest from its
                // own centroid (first such point on ties)
                let mut far = 0usize;
                let mut far_d = -1.0;
                for (vi, v) in vectors.iter().enumerate() {
                    if claimed[vi] {
                        continue;
                    }
                    let d = dist2(v, &centroids[assign[vi]]);
                    if d > far_d {
                        far_d = d;
                        far = vi;
                    }
                }
                claimed[far] = true;
                centroids[k] = vectors[far].clone();
            }
        }
    }

    let cb = Codebook {
        variant,
        n_r,
        n_c,
        n_bf,
        centroids: centroids
            .into_iter()
            .map(|c| c.into_iter().map(|x| x as f32).collect())
            .collect(),
    };
    cb.validate()?;
    Ok((cb, history))
}

pub fn train_codebook(
    vectors: &[Vec<f64>],
    variant: KmeansVariant,
    n_r: usize,
    n_c: usize,
    n_bf: u8,
    params: &TrainParams,
) -> Result<Codebook> {
    train_codebook_detailed(vectors, variant, n_r, n_c, n_bf, params).map(|(cb, _)| cb)
}

/// Index of the closest centroid in Euclidean distance; ties take the lower
/// index.
pub fn nearest_codeword(v: &[f64], cb: &Codebook) -> Result<usize> {
    nearest_codeword_inner(v, cb, None)
}

/// [`nearest_codeword`] counting one multiplication per vector element per
/// centroid (the squared-difference products of the distance scan).
pub fn nearest_codeword_counted(v: &[f64], cb: &Codebook, counter: &mut MultCounter) -> Result<usize> {
    nearest_codeword_inner(v, cb, Some(counter))
}

fn nearest_codeword_inner(v: &[f64], cb: &Codebook, counter: Option<&mut MultCounter>) -> Result<usize> {
    let m = cb.dim()?;
    if v.len() != m {
        return Err(Error::config(format!(
            "query length {} does not match codebook dimension {m}",
            v.len()
        )));
    }
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (k, c) in cb.centroids.iter().enumerate() {
        let mut d = 0.0;
        for (x, y) in v.iter().zip(c) {
            let diff = x - *y as f64;
            d += diff * diff;
        }
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    if let Some(cnt) = counter {
        cnt.add((cb.n_k() * m) as u64);
    }
    Ok(best)
}

/// Feedback payload size for one report: one index per subcarrier, two for
/// the split variant.
pub fn kmeans_cbr_bits(variant: KmeansVariant, n_sc: usize, n_bf: u8) -> usize {
    let per_sc = match variant {
        KmeansVariant::SplitAngles => 2,
        _ => 1,
    };
    n_sc * per_sc * n_bf as usize
}

/// Quantize a sounding onto codebook indices.
pub fn kmeans_encode_cbr(q_list: &[SteeringMatrix], cb: &Codebook) -> Result<CompressedCbr> {
    kmeans_encode_inner(q_list, cb, None)
}

/// [`kmeans_encode_cbr`] with multiplication counting over both the Givens
/// preprocessing (angle variants) and the codeword searches.
pub fn kmeans_encode_cbr_counted(
    q_list: &[SteeringMatrix],
    cb: &Codebook,
    counter: &mut MultCounter,
) -> Result<CompressedCbr> {
    kmeans_encode_inner(q_list, cb, Some(counter))
}

fn kmeans_encode_inner(
    q_list: &[SteeringMatrix],
    cb: &Codebook,
    mut counter: Option<&mut MultCounter>,
) -> Result<CompressedCbr> {
    cb.validate()?;
    if q_list.is_empty() {
        return Err(Error::precondition("empty subcarrier list"));
    }
    let mut w = BitWriter::new();
    let width = cb.n_bf as u32;
    for q in q_list {
        if (q.n_r(), q.n_c()) != (cb.n_r, cb.n_c) {
            return Err(Error::config(format!(
                "steering shape {}x{} does not match codebook shape {}x{}",
                q.n_r(),
                q.n_c(),
                cb.n_r,
                cb.n_c
            )));
        }
        match cb.variant {
            KmeansVariant::JointAngles => {
                let a = match counter.as_deref_mut() {
                    Some(c) => crate::givens::angles_from_q_counted(q, c)?,
                    None => angles_from_q(q)?,
                };
                let mut v = a.phi;
                v.extend_from_slice(&a.psi);
                let idx = nearest_codeword_inner(&v, cb, counter.as_deref_mut())?;
                w.write(idx as u64, width);
            }
            KmeansVariant::SplitAngles => {
                let a = match counter.as_deref_mut() {
                    Some(c) => crate::givens::angles_from_q_counted(q, c)?,
                    None => angles_from_q(q)?,
                };
                let i_phi = nearest_codeword_inner(&a.phi, cb, counter.as_deref_mut())?;
                let i_psi = nearest_codeword_inner(&a.psi, cb, counter.as_deref_mut())?;
                w.write(i_phi as u64, width);
                w.write(i_psi as u64, width);
            }
            KmeansVariant::SteeringMatrix => {
                let v = steering_vector(q);
                let idx = nearest_codeword_inner(&v, cb, counter.as_deref_mut())?;
                w.write(idx as u64, width);
            }
        }
    }
    Ok(CompressedCbr {
        format: CbrFormat::KmeansIndex { variant: cb.variant, n_bf: cb.n_bf },
        n_sc: q_list.len(),
        bits: w.finish(),
    })
}

/// Rebuild one steering matrix from a centroid vector.
fn q_from_centroid(cb: &Codebook, centroid: &[f32]) -> Result<SteeringMatrix> {
    let n_a = num_angles(cb.n_r, cb.n_c)?;
    match cb.variant {
        KmeansVariant::JointAngles => {
            let angles = AngleSet {
                n_r: cb.n_r,
                n_c: cb.n_c,
                phi: centroid[..n_a].iter().map(|&x| x as f64).collect(),
                psi: centroid[n_a..].iter().map(|&x| x as f64).collect(),
            };
            q_from_angles(&angles)
        }
        KmeansVariant::SplitAngles => unreachable!("split decoding pairs two centroids"),
        KmeansVariant::SteeringMatrix => {
            let v: Vec<f64> = centroid.iter().map(|&x| x as f64).collect();
            reorthonormalize(&unflatten_steering(&v, cb.n_r, cb.n_c))
        }
    }
}

/// Look up indices and reconstruct the per-subcarrier steering matrices.
/// Split-variant psi codewords may carry values outside `[0, pi/2]` (the
/// pooled codebook has no labels); they are clamped during reconstruction.
pub fn kmeans_decode_cbr(cbr: &CompressedCbr, cb: &Codebook) -> Result<Vec<SteeringMatrix>> {
    cb.validate()?;
    let want = CbrFormat::KmeansIndex { variant: cb.variant, n_bf: cb.n_bf };
    cbr.expect_format(&want, kmeans_cbr_bits(cb.variant, cbr.n_sc, cb.n_bf))?;
    let mut r = BitReader::new(&cbr.bits);
    let width = cb.n_bf as u32;
    let mut out = Vec::with_capacity(cbr.n_sc);
    for _ in 0..cbr.n_sc {
        match cb.variant {
            KmeansVariant::SplitAngles => {
                let i_phi = r.read(width)? as usize;
                let i_psi = r.read(width)? as usize;
                let angles = AngleSet {
                    n_r: cb.n_r,
                    n_c: cb.n_c,
                    phi: cb.centroids[i_phi].iter().map(|&x| x as f64).collect(),
                    psi: cb.centroids[i_psi].iter().map(|&x| x as f64).collect(),
                };
                out.push(q_from_angles(&angles)?);
            }
            _ => {
                let idx = r.read(width)? as usize;
                out.push(q_from_centroid(cb, &cb.centroids[idx])?);
            }
        }
    }
    Ok(out)
}

/// Codebook compressed for over-the-air model sharing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedCodebook {
    pub variant: KmeansVariant,
    pub n_r: usize,
    pub n_c: usize,
    pub n_bf: u8,
    pub n_b: u8,
    pub bits: Bitstream,
}

/// Size of a compressed codebook in bits.
pub fn compressed_codebook_bits(
    variant: KmeansVariant,
    n_r: usize,
    n_c: usize,
    n_bf: u8,
    n_b: u8,
) -> Result<usize> {
    let n_a = num_angles(n_r, n_c)?;
    let n_k = 1usize << n_bf;
    Ok(match variant {
        KmeansVariant::SplitAngles => n_k * n_a * (n_b as usize + 2),
        _ => n_k * n_a * (2 * n_b as usize + 2),
    })
}

/// Scalar-quantize every codeword. Angle codebooks go straight onto the
/// phi/psi grids; raw-matrix codewords are first re-orthonormalized into
/// valid steering matrices and carried as angles. Split codewords (phi and
/// psi pooled, unlabeled) all use the wide circular grid.
pub fn compress_codebook(cb: &Codebook, n_b: u8) -> Result<CompressedCodebook> {
    cb.validate()?;
    crate::givens::check_n_b(n_b)?;
    let n_a = num_angles(cb.n_r, cb.n_c)?;
    let b_phi = n_b as u32 + 2;
    let b_psi = n_b as u32;
    let mut w = BitWriter::new();
    for centroid in &cb.centroids {
        match cb.variant {
            KmeansVariant::JointAngles => {
                for &x in &centroid[..n_a] {
                    w.write(quantize_phi(x as f64, b_phi) as u64, b_phi);
                }
                for &x in &centroid[n_a..] {
                    w.write(quantize_psi(x as f64, b_psi) as u64, b_psi);
                }
            }
            KmeansVariant::SplitAngles => {
                for &x in centroid {
                    w.write(quantize_phi(x as f64, b_phi) as u64, b_phi);
                }
            }
            KmeansVariant::SteeringMatrix => {
                let v: Vec<f64> = centroid.iter().map(|&x| x as f64).collect();
                let q = reorthonormalize(&unflatten_steering(&v, cb.n_r, cb.n_c))?;
                let a = angles_from_q(&q)?;
                for &x in &a.phi {
                    w.write(quantize_phi(x, b_phi) as u64, b_phi);
                }
                for &x in &a.psi {
                    w.write(quantize_psi(x, b_psi) as u64, b_psi);
                }
            }
        }
    }
    Ok(CompressedCodebook {
        variant: cb.variant,
        n_r: cb.n_r,
        n_c: cb.n_c,
        n_bf: cb.n_bf,
        n_b,
        bits: w.finish(),
    })
}

/// Rebuild a working codebook from its compressed form. Raw-matrix
/// codebooks come back as flattened reconstructed steering matrices.
pub fn decompress_codebook(cc: &CompressedCodebook) -> Result<Codebook> {
    check_n_bf(cc.n_bf)?;
    crate::givens::check_n_b(cc.n_b)?;
    let n_a = num_angles(cc.n_r, cc.n_c)?;
    let want = compressed_codebook_bits(cc.variant, cc.n_r, cc.n_c, cc.n_bf, cc.n_b)?;
    if cc.bits.len_bits() != want {
        return Err(Error::format(0, format!(
            "compressed codebook holds {} bits, expected {want}",
            cc.bits.len_bits()
        )));
    }
    let b_phi = cc.n_b as u32 + 2;
    let b_psi = cc.n_b as u32;
    let n_k = 1usize << cc.n_bf;
    let mut r = BitReader::new(&cc.bits);
    let mut centroids = Vec::with_capacity(n_k);
    for _ in 0..n_k {
        match cc.variant {
            KmeansVariant::JointAngles => {
                let mut row = Vec::with_capacity(2 * n_a);
                for _ in 0..n_a {
                    row.push(phi_grid(r.read(b_phi)? as u16, b_phi) as f32);
                }
                for _ in 0..n_a {
                    row.push(psi_grid(r.read(b_psi)? as u16, b_psi) as f32);
                }
                centroids.push(row);
            }
            KmeansVariant::SplitAngles => {
                let mut row = Vec::with_capacity(n_a);
                for _ in 0..n_a {
                    row.push(phi_grid(r.read(b_phi)? as u16, b_phi) as f32);
                }
                centroids.push(row);
            }
            KmeansVariant::SteeringMatrix => {
                let mut phi = Vec::with_capacity(n_a);
                let mut psi = Vec::with_capacity(n_a);
                for _ in 0..n_a {
                    phi.push(phi_grid(r.read(b_phi)? as u16, b_phi));
                }
                for _ in 0..n_a {
                    psi.push(psi_grid(r.read(b_psi)? as u16, b_psi));
                }
                let q = q_from_angles(&AngleSet { n_r: cc.n_r, n_c: cc.n_c, phi, psi })?;
                centroids.push(steering_vector(&q).into_iter().map(|x| x as f32).collect());
            }
        }
    }
    let cb = Codebook {
        variant: cc.variant,
        n_r: cc.n_r,
        n_c: cc.n_c,
        n_bf: cc.n_bf,
        centroids,
    };
    cb.validate()?;
    Ok(cb)
}
