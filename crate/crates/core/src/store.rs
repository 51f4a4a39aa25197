//! Dataset generation and versioned binary persistence.
//!
//! Four little-endian formats, each with a 4-byte magic and a `major.minor`
//! version word: "CSID" datasets, "CSCB" codebooks, "CSNN" model containers,
//! "CSCC" compressed codebooks. Readers fail with a byte offset on the first
//! violation and never return partially parsed objects. Writers go through a
//! temp file plus rename, so a crash never leaves a half-written artifact at
//! the target path.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autoenc::{Activation, FnnModel, ModelRole, QuantizedModel};
use crate::bitio::Bitstream;
use crate::channel::{default_subcarriers, frequency_response, generate_channel, ChannelProfile};
use crate::error::{Error, Result};
use crate::kmeans::{vector_dim, Codebook, CompressedCodebook, KmeansVariant};
use crate::seedmix::mix2;
use crate::steering::{compute_steering, SteeringMatrix};

/// Format version 1.0 shared by all four containers. The high byte is the
/// major version: a reader refuses any file whose major differs, and (being
/// strict) any file whose minor is newer than what it knows.
pub const FORMAT_VERSION: u16 = 0x0100;

const MAGIC_DATASET: &[u8; 4] = b"CSID";
const MAGIC_CODEBOOK: &[u8; 4] = b"CSCB";
const MAGIC_MODELS: &[u8; 4] = b"CSNN";
const MAGIC_COMPRESSED: &[u8; 4] = b"CSCC";

/// Generation parameters persisted in the dataset's JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub profile: ChannelProfile,
    pub n_c: usize,
    pub n_sc: usize,
    pub n_fft: usize,
    pub n_soundings: usize,
    pub seed: u64,
}

/// Steering matrices indexed `[sounding][subcarrier]`, plus how they were
/// generated. Entries are exactly representable in f32, so persisting and
/// reloading reproduces the dataset bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiDataset {
    pub meta: DatasetMeta,
    pub q: Vec<Vec<SteeringMatrix>>,
}

impl CsiDataset {
    pub fn n_r(&self) -> usize {
        self.q[0][0].n_r()
    }

    pub fn n_c(&self) -> usize {
        self.meta.n_c
    }

    /// Iterator over all matrices, sounding-major.
    pub fn all_matrices(&self) -> impl Iterator<Item = &SteeringMatrix> {
        self.q.iter().flatten()
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.is_empty() || self.q[0].is_empty() {
            return Err(Error::precondition("dataset holds no matrices"));
        }
        if self.q.len() != self.meta.n_soundings {
            return Err(Error::precondition("sounding count disagrees with metadata"));
        }
        let shape = (self.n_r(), self.meta.n_c);
        for row in &self.q {
            if row.len() != self.meta.n_sc {
                return Err(Error::precondition("ragged subcarrier axis"));
            }
            for q in row {
                if (q.n_r(), q.n_c()) != shape {
                    return Err(Error::precondition("mixed steering shapes in dataset"));
                }
                q.validate()?;
            }
        }
        Ok(())
    }
}

/// Round every entry through f32 so the in-memory matrix equals its stored
/// form. The rounding is far below the orthonormality tolerance.
fn snap_f32(q: &SteeringMatrix) -> Result<SteeringMatrix> {
    let m = q
        .matrix()
        .map(|v| Complex64::new(v.re as f32 as f64, v.im as f32 as f64));
    SteeringMatrix::from_matrix(m)
}

/// Sound `n_soundings` independent channel draws at `n_sc` evenly spaced
/// bins of an `n_fft` grid and collect the steering matrices.
pub fn generate_dataset(
    profile: &ChannelProfile,
    n_c: usize,
    n_soundings: usize,
    n_sc: usize,
    n_fft: usize,
    seed: u64,
) -> Result<CsiDataset> {
    profile.validate()?;
    if n_soundings == 0 || n_sc == 0 {
        return Err(Error::config("need at least one sounding and one subcarrier"));
    }
    if n_c == 0 || n_c > profile.n_tx.min(profile.n_rx) {
        return Err(Error::config(format!(
            "{n_c} steering columns do not fit a {}x{} channel",
            profile.n_rx, profile.n_tx
        )));
    }
    let bins = default_subcarriers(n_fft, n_sc)?;
    let mut q = Vec::with_capacity(n_soundings);
    for s in 0..n_soundings {
        let real = generate_channel(profile, mix2(seed, s as u64))?;
        let freq = frequency_response(&real, &bins, n_fft)?;
        let row: Vec<SteeringMatrix> = freq
            .h
            .iter()
            .map(|h| compute_steering(h, n_c).and_then(|sm| snap_f32(&sm)))
            .collect::<Result<_>>()?;
        q.push(row);
    }
    Ok(CsiDataset {
        meta: DatasetMeta {
            profile: profile.clone(),
            n_c,
            n_sc,
            n_fft,
            n_soundings,
            seed,
        },
        q,
    })
}

// ---- low-level byte plumbing ----

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

/// Write through a temp file in the same directory, then rename over the
/// target so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Writer { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn i16(&mut self, v: i16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(
                self.buf.len() as u64,
                format!("file truncated: needed {n} more bytes at offset {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i16(&mut self) -> Result<i16> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn expect_header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::format(
                0,
                format!(
                    "bad magic {:02x?}, expected {:?}",
                    got,
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let version = self.u16()?;
        if version >> 8 != FORMAT_VERSION >> 8 {
            return Err(Error::format(
                4,
                format!("unsupported major version {} (file is {version:#06x})", version >> 8),
            ));
        }
        if version & 0xFF > FORMAT_VERSION & 0xFF {
            return Err(Error::format(
                4,
                format!(
                    "minor version {} is newer than this reader supports ({})",
                    version & 0xFF,
                    FORMAT_VERSION & 0xFF
                ),
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.pos as u64,
                format!("{} unexpected trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

// ---- dataset ----

/// Persist the dataset and its JSON sidecar (`<path>.json`).
pub fn write_dataset(d: &CsiDataset, path: &Path) -> Result<()> {
    d.validate()?;
    let (n_r, n_c) = (d.n_r(), d.meta.n_c);
    if n_r > u8::MAX as usize
        || n_c > u8::MAX as usize
        || d.meta.n_sc > u16::MAX as usize
        || d.meta.n_soundings > u32::MAX as usize
    {
        return Err(Error::config("dataset dimensions exceed the format's field widths"));
    }
    let mut w = Writer::new(MAGIC_DATASET);
    w.u8(n_r as u8);
    w.u8(n_c as u8);
    w.u16(d.meta.n_sc as u16);
    w.u32(d.meta.n_soundings as u32);
    w.u64(d.meta.seed);
    for row in &d.q {
        for q in row {
            let m = q.matrix();
            for r in 0..n_r {
                for c in 0..n_c {
                    w.f32(m[(r, c)].re as f32);
                    w.f32(m[(r, c)].im as f32);
                }
            }
        }
    }
    write_atomic(path, &w.buf)?;
    let json = serde_json::to_string_pretty(&d.meta)
        .map_err(|e| Error::config(format!("cannot serialize dataset metadata: {e}")))?;
    write_atomic(&sidecar_path(path), json.as_bytes())
}

/// Load a dataset; requires both the binary file and its sidecar, and checks
/// every matrix against the steering invariants.
pub fn read_dataset(path: &Path) -> Result<CsiDataset> {
    let bytes = fs::read(path)?;
    let sidecar = sidecar_path(path);
    let meta_text = fs::read_to_string(&sidecar).map_err(|_| {
        Error::MissingArtifact(format!("dataset sidecar {} not readable", sidecar.display()))
    })?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::format(0, format!("dataset sidecar is not valid metadata: {e}")))?;

    let mut r = Reader::new(&bytes);
    r.expect_header(MAGIC_DATASET)?;
    let n_r = r.u8()? as usize;
    let n_c = r.u8()? as usize;
    let n_sc = r.u16()? as usize;
    let n_soundings = r.u32()? as usize;
    let seed = r.u64()?;
    if n_r == 0 || n_c == 0 || n_c > n_r || n_sc == 0 || n_soundings == 0 {
        return Err(Error::format(6, "degenerate dataset dimensions".to_string()));
    }
    if meta.n_sc != n_sc
        || meta.n_soundings != n_soundings
        || meta.seed != seed
        || meta.n_c != n_c
        || meta.profile.n_tx != n_r
    {
        return Err(Error::format(
            6,
            "sidecar metadata disagrees with the binary header".to_string(),
        ));
    }
    let mut q = Vec::with_capacity(n_soundings);
    for s in 0..n_soundings {
        let mut row = Vec::with_capacity(n_sc);
        for k in 0..n_sc {
            let start = r.offset();
            let mut m = DMatrix::from_element(n_r, n_c, Complex64::new(0.0, 0.0));
            for i in 0..n_r {
                for j in 0..n_c {
                    let re = r.f32()? as f64;
                    let im = r.f32()? as f64;
                    m[(i, j)] = Complex64::new(re, im);
                }
            }
            let sm = SteeringMatrix::from_matrix(m).map_err(|e| {
                Error::format(start, format!("sounding {s} subcarrier {k}: {e}"))
            })?;
            row.push(sm);
        }
        q.push(row);
    }
    r.finish()?;
    Ok(CsiDataset { meta, q })
}

// ---- codebook ----

pub fn write_codebook(cb: &Codebook, path: &Path) -> Result<()> {
    cb.validate()?;
    let m = cb.dim()?;
    if cb.n_r > u8::MAX as usize || cb.n_c > u8::MAX as usize {
        return Err(Error::config("codebook dimensions exceed the format's field widths"));
    }
    let mut w = Writer::new(MAGIC_CODEBOOK);
    w.u8(cb.variant.tag());
    w.u8(cb.n_r as u8);
    w.u8(cb.n_c as u8);
    w.u8(cb.n_bf);
    w.u32(m as u32);
    for row in &cb.centroids {
        for &v in row {
            w.f32(v);
        }
    }
    write_atomic(path, &w.buf)
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    r.expect_header(MAGIC_CODEBOOK)?;
    let variant = KmeansVariant::from_tag(r.u8()?).map_err(|e| Error::format(6, e.to_string()))?;
    let n_r = r.u8()? as usize;
    let n_c = r.u8()? as usize;
    let n_bf = r.u8()?;
    let m_stored = r.u32()? as usize;
    let m = vector_dim(variant, n_r, n_c).map_err(|e| Error::format(7, e.to_string()))?;
    if m_stored != m {
        return Err(Error::format(
            10,
            format!("stored vector dimension {m_stored} does not match {m}"),
        ));
    }
    crate::kmeans::check_n_bf(n_bf).map_err(|e| Error::format(9, e.to_string()))?;
    let n_k = 1usize << n_bf;
    let mut centroids = Vec::with_capacity(n_k);
    for _ in 0..n_k {
        let start = r.offset();
        let mut row = Vec::with_capacity(m);
        for _ in 0..m {
            let v = r.f32()?;
            if !v.is_finite() {
                return Err(Error::format(start, "non-finite centroid value".to_string()));
            }
            row.push(v);
        }
        centroids.push(row);
    }
    r.finish()?;
    let cb = Codebook { variant, n_r, n_c, n_bf, centroids };
    cb.validate().map_err(|e| Error::format(6, e.to_string()))?;
    Ok(cb)
}

// ---- model container ----

/// A persisted network: either full precision or post-training quantized.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Fp32(FnnModel),
    Ptq(QuantizedModel),
}

fn write_one_model(w: &mut Writer, m: &StoredModel) -> Result<()> {
    match m {
        StoredModel::Fp32(f) => {
            f.validate()?;
            w.u8(f.role.tag());
            w.u8(0);
            write_arch(w, &f.layer_sizes, &f.acts)?;
            for (wl, bl) in f.weights.iter().zip(&f.biases) {
                for &v in wl {
                    w.f32(v);
                }
                for &v in bl {
                    w.f32(v);
                }
            }
        }
        StoredModel::Ptq(qm) => {
            if !(2..=16).contains(&qm.bits) {
                return Err(Error::config(format!("ptq width {} out of range", qm.bits)));
            }
            w.u8(qm.role.tag());
            w.u8(qm.bits);
            write_arch(w, &qm.layer_sizes, &qm.acts)?;
            for l in 0..qm.weights.len() {
                w.f32(qm.scales[l]);
                for &v in &qm.weights[l] {
                    let qmax = (1i32 << (qm.bits - 1)) - 1;
                    if v.abs() > qmax {
                        return Err(Error::config(format!(
                            "quantized weight {v} exceeds {} bits",
                            qm.bits
                        )));
                    }
                    w.i16(v as i16);
                }
                for &v in &qm.biases[l] {
                    w.f32(v);
                }
            }
        }
    }
    Ok(())
}

fn write_arch(w: &mut Writer, sizes: &[usize], acts: &[Activation]) -> Result<()> {
    if sizes.len() != acts.len() + 1 || acts.is_empty() {
        return Err(Error::config("inconsistent model architecture"));
    }
    if sizes.len() - 1 > u8::MAX as usize || sizes.iter().any(|&s| s > u32::MAX as usize) {
        return Err(Error::config("model architecture exceeds the format's field widths"));
    }
    w.u8((sizes.len() - 1) as u8);
    for &s in sizes {
        w.u32(s as u32);
    }
    for &a in acts {
        w.u8(a.tag());
    }
    Ok(())
}

fn read_one_model(r: &mut Reader) -> Result<StoredModel> {
    let role_off = r.offset();
    let role = ModelRole::from_tag(r.u8()?).map_err(|e| Error::format(role_off, e.to_string()))?;
    let quant = r.u8()?;
    let arch_off = r.offset();
    let n_layers = r.u8()? as usize;
    if n_layers == 0 {
        return Err(Error::format(arch_off, "model needs at least one layer".to_string()));
    }
    let mut sizes = Vec::with_capacity(n_layers + 1);
    for _ in 0..=n_layers {
        let s = r.u32()? as usize;
        if s == 0 {
            return Err(Error::format(arch_off, "zero-width layer".to_string()));
        }
        sizes.push(s);
    }
    let mut acts = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let off = r.offset();
        acts.push(Activation::from_tag(r.u8()?).map_err(|e| Error::format(off, e.to_string()))?);
    }
    if quant == 0 {
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let start = r.offset();
            let mut wl = Vec::with_capacity(sizes[l] * sizes[l + 1]);
            for _ in 0..sizes[l] * sizes[l + 1] {
                let v = r.f32()?;
                if !v.is_finite() {
                    return Err(Error::format(start, "non-finite weight".to_string()));
                }
                wl.push(v);
            }
            let mut bl = Vec::with_capacity(sizes[l + 1]);
            for _ in 0..sizes[l + 1] {
                let v = r.f32()?;
                if !v.is_finite() {
                    return Err(Error::format(start, "non-finite bias".to_string()));
                }
                bl.push(v);
            }
            weights.push(wl);
            biases.push(bl);
        }
        let model = FnnModel { role, layer_sizes: sizes, acts, weights, biases };
        model.validate().map_err(|e| Error::format(arch_off, e.to_string()))?;
        Ok(StoredModel::Fp32(model))
    } else {
        if !(2..=16).contains(&quant) {
            return Err(Error::format(role_off + 1, format!("ptq width {quant} out of range")));
        }
        let qmax = (1i32 << (quant - 1)) - 1;
        let mut scales = Vec::with_capacity(n_layers);
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let start = r.offset();
            let scale = r.f32()?;
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::format(start, "invalid quantization scale".to_string()));
            }
            scales.push(scale);
            let mut wl = Vec::with_capacity(sizes[l] * sizes[l + 1]);
            for _ in 0..sizes[l] * sizes[l + 1] {
                let v = r.i16()? as i32;
                if v.abs() > qmax {
                    return Err(Error::format(
                        start,
                        format!("quantized weight {v} exceeds {quant} bits"),
                    ));
                }
                wl.push(v);
            }
            let mut bl = Vec::with_capacity(sizes[l + 1]);
            for _ in 0..sizes[l + 1] {
                let v = r.f32()?;
                if !v.is_finite() {
                    return Err(Error::format(start, "non-finite bias".to_string()));
                }
                bl.push(v);
            }
            weights.push(wl);
            biases.push(bl);
        }
        Ok(StoredModel::Ptq(QuantizedModel {
            role,
            layer_sizes: sizes,
            acts,
            bits: quant,
            scales,
            weights,
            biases,
        }))
    }
}

/// Persist a group of models (e.g. an encoder/decoder pair) in one file.
pub fn write_models(models: &[StoredModel], path: &Path) -> Result<()> {
    if models.is_empty() || models.len() > u8::MAX as usize {
        return Err(Error::config("model container holds 1 to 255 models"));
    }
    let mut w = Writer::new(MAGIC_MODELS);
    w.u8(models.len() as u8);
    for m in models {
        write_one_model(&mut w, m)?;
    }
    write_atomic(path, &w.buf)
}

pub fn read_models(path: &Path) -> Result<Vec<StoredModel>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    r.expect_header(MAGIC_MODELS)?;
    let count = r.u8()? as usize;
    if count == 0 {
        return Err(Error::format(6, "empty model container".to_string()));
    }
    let models = (0..count).map(|_| read_one_model(&mut r)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(models)
}

// ---- compressed codebook ----

pub fn write_compressed_codebook(cc: &CompressedCodebook, path: &Path) -> Result<()> {
    if cc.n_r > u8::MAX as usize || cc.n_c > u8::MAX as usize {
        return Err(Error::config("dimensions exceed the format's field widths"));
    }
    let mut w = Writer::new(MAGIC_COMPRESSED);
    w.u8(cc.variant.tag());
    w.u8(cc.n_r as u8);
    w.u8(cc.n_c as u8);
    w.u8(cc.n_bf);
    w.u8(cc.n_b);
    w.u64(cc.bits.len_bits() as u64);
    w.buf.extend_from_slice(cc.bits.bytes());
    write_atomic(path, &w.buf)
}

pub fn read_compressed_codebook(path: &Path) -> Result<CompressedCodebook> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    r.expect_header(MAGIC_COMPRESSED)?;
    let variant = KmeansVariant::from_tag(r.u8()?).map_err(|e| Error::format(6, e.to_string()))?;
    let n_r = r.u8()? as usize;
    let n_c = r.u8()? as usize;
    let n_bf = r.u8()?;
    let n_b = r.u8()?;
    let len_off = r.offset();
    let bit_len = r.u64()? as usize;
    let expected = crate::kmeans::compressed_codebook_bits(variant, n_r, n_c, n_bf, n_b)
        .map_err(|e| Error::format(6, e.to_string()))?;
    if bit_len != expected {
        return Err(Error::format(
            len_off,
            format!("payload of {bit_len} bits, format requires {expected}"),
        ));
    }
    let payload = r.take(bit_len.div_ceil(8))?.to_vec();
    r.finish()?;
    let bits = Bitstream::from_parts(payload, bit_len)
        .map_err(|e| Error::format(len_off, e.to_string()))?;
    Ok(CompressedCodebook { variant, n_r, n_c, n_bf, n_b, bits })
}
