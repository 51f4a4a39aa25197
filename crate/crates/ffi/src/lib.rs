//! C ABI surface. Handles are opaque pointers owned by the library; every
//! call returns a status code, and the per-thread failure message behind a
//! non-OK status is available through `csilab_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use csilab::autoenc::{ptq_dequantize, AePair};
use csilab::codec::{Codec, SchemeArtifacts, SchemeSpec};
use csilab::kpi::reconstruction_nmse;
use csilab::linksim::{per_point, SimConfig};
use csilab::store::{read_codebook, read_dataset, read_models, write_dataset, CsiDataset, StoredModel};
use csilab::{Error, Result};

/// Result of every API call. `CSILAB_STATUS_OK` is zero; anything else left
/// a message readable through `csilab_last_error_message`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsilabStatus {
    Ok = 0,
    /// Invalid parameters or configuration.
    Config = 1,
    /// A documented precondition was violated.
    Precondition = 2,
    /// An iterative numeric procedure failed.
    Training = 3,
    /// A persisted artifact is corrupt or has an unsupported layout.
    Format = 4,
    /// A required artifact file does not exist.
    MissingArtifact = 5,
    /// Operating system level I/O failure.
    Io = 6,
    /// A null handle or output pointer was passed.
    NullPointer = 7,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 8,
    /// The library caught an internal panic.
    Internal = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: CsilabStatus, msg: impl Into<String>) -> CsilabStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn fail_with(err: &Error) -> CsilabStatus {
    let status = match err {
        Error::Config(_) => CsilabStatus::Config,
        Error::Precondition(_) => CsilabStatus::Precondition,
        Error::Training(_) => CsilabStatus::Training,
        Error::Format { .. } => CsilabStatus::Format,
        Error::MissingArtifact(_) => CsilabStatus::MissingArtifact,
        Error::Io(_) => CsilabStatus::Io,
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> CsilabStatus) -> CsilabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CsilabStatus::Internal, "internal panic"),
    }
}

/// # Safety
/// `s` must be a valid NUL-terminated string or null.
unsafe fn str_arg<'a>(s: *const c_char) -> std::result::Result<&'a str, CsilabStatus> {
    if s.is_null() {
        return Err(fail(CsilabStatus::NullPointer, "null string argument"));
    }
    match CStr::from_ptr(s).to_str() {
        Ok(t) => Ok(t),
        Err(_) => Err(fail(CsilabStatus::InvalidUtf8, "string argument is not UTF-8")),
    }
}

/// # Safety
/// As in [`str_arg`].
unsafe fn path_arg<'a>(s: *const c_char) -> std::result::Result<&'a Path, CsilabStatus> {
    str_arg(s).map(Path::new)
}

/// Absent input files report as missing artifacts, not bare I/O errors,
/// matching the CLI's exit-code convention.
fn require_file(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(format!("{} not found", path.display())))
    }
}

/// Copy the failure message of the most recent non-OK call on this thread.
///
/// Returns the full message length in bytes (excluding the NUL terminator).
/// When `buf` is non-null, up to `cap - 1` bytes are copied and terminated.
/// Call with a null `buf` to size a buffer first.
///
/// # Safety
/// `buf` must be null or point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn csilab_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// An in-memory dataset of per-subcarrier steering matrices.
pub struct CsilabDataset {
    inner: CsiDataset,
}

/// A compression scheme ready to encode and decode soundings.
pub struct CsilabCodec {
    inner: Codec,
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> CsilabStatus {
    if out.is_null() {
        return fail(CsilabStatus::NullPointer, "null output pointer");
    }
    *out = Box::into_raw(Box::new(value));
    CsilabStatus::Ok
}

/// Generate a synthetic dataset.
///
/// `n_tx`/`n_rx` describe the arrays, `n_c` the spatial streams, and the
/// result holds `n_soundings` independent soundings of `n_sc` subcarriers
/// drawn from an `n_fft`-bin OFDM grid.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn csilab_dataset_generate(
    n_tx: usize,
    n_rx: usize,
    n_c: usize,
    n_soundings: usize,
    n_sc: usize,
    n_fft: usize,
    seed: u64,
    out: *mut *mut CsilabDataset,
) -> CsilabStatus {
    guard(|| {
        let profile = csilab::channel::ChannelProfile {
            n_tx,
            n_rx,
            ..csilab::channel::ChannelProfile::default()
        };
        match csilab::store::generate_dataset(&profile, n_c, n_soundings, n_sc, n_fft, seed) {
            Ok(d) => write_out(out, CsilabDataset { inner: d }),
            Err(e) => fail_with(&e),
        }
    })
}

/// Load a dataset file (the `.json` sidecar written next to it is required).
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` as in
/// [`csilab_dataset_generate`].
#[no_mangle]
pub unsafe extern "C" fn csilab_dataset_read(
    path: *const c_char,
    out: *mut *mut CsilabDataset,
) -> CsilabStatus {
    guard(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match require_file(path).and_then(|()| read_dataset(path)) {
            Ok(d) => write_out(out, CsilabDataset { inner: d }),
            Err(e) => fail_with(&e),
        }
    })
}

/// Persist a dataset (atomically, with its sidecar).
///
/// # Safety
/// `dataset` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn csilab_dataset_write(
    dataset: *const CsilabDataset,
    path: *const c_char,
) -> CsilabStatus {
    guard(|| {
        if dataset.is_null() {
            return fail(CsilabStatus::NullPointer, "null dataset handle");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match write_dataset(&(*dataset).inner, path) {
            Ok(()) => CsilabStatus::Ok,
            Err(e) => fail_with(&e),
        }
    })
}

/// Report the dimensions of a dataset. Null output pointers are skipped.
///
/// # Safety
/// `dataset` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csilab_dataset_shape(
    dataset: *const CsilabDataset,
    n_soundings: *mut usize,
    n_sc: *mut usize,
    n_r: *mut usize,
    n_c: *mut usize,
) -> CsilabStatus {
    guard(|| {
        if dataset.is_null() {
            return fail(CsilabStatus::NullPointer, "null dataset handle");
        }
        let d = &(*dataset).inner;
        if !n_soundings.is_null() {
            *n_soundings = d.meta.n_soundings;
        }
        if !n_sc.is_null() {
            *n_sc = d.meta.n_sc;
        }
        if !n_r.is_null() {
            *n_r = d.n_r();
        }
        if !n_c.is_null() {
            *n_c = d.n_c();
        }
        CsilabStatus::Ok
    })
}

/// Release a dataset handle. Null is ignored.
///
/// # Safety
/// `dataset` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn csilab_dataset_free(dataset: *mut CsilabDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

fn pair_from_models(models: Vec<StoredModel>) -> Result<AePair> {
    if models.len() != 2 {
        return Err(Error::format(
            6,
            format!("expected an encoder/decoder pair, found {} models", models.len()),
        ));
    }
    let mut fp = Vec::with_capacity(2);
    for m in models {
        fp.push(match m {
            StoredModel::Fp32(f) => f,
            StoredModel::Ptq(q) => ptq_dequantize(&q)?,
        });
    }
    let decoder = fp.pop().unwrap();
    let encoder = fp.pop().unwrap();
    let pair = AePair { encoder, decoder };
    pair.validate()?;
    Ok(pair)
}

fn codec_from_token(token: &str) -> Result<Codec> {
    let spec = SchemeSpec::parse_token(token)?;
    match spec {
        SchemeSpec::Legacy { .. } | SchemeSpec::Perfect => Codec::new(spec, SchemeArtifacts::None),
        _ => Err(Error::config(format!(
            "scheme '{token}' needs trained artifacts; use the artifact constructors"
        ))),
    }
}

/// Create a codec for an artifact-free scheme token (`legacy`, `legacy:<n_b>`,
/// or `perfect`).
///
/// # Safety
/// `token` must be a valid NUL-terminated string; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn csilab_codec_new(
    token: *const c_char,
    out: *mut *mut CsilabCodec,
) -> CsilabStatus {
    guard(|| {
        let token = match str_arg(token) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match codec_from_token(token) {
            Ok(c) => write_out(out, CsilabCodec { inner: c }),
            Err(e) => fail_with(&e),
        }
    })
}

/// Create a K-means codec from a trained codebook file (`.cscb`).
///
/// # Safety
/// As in [`csilab_codec_new`].
#[no_mangle]
pub unsafe extern "C" fn csilab_codec_new_kmeans(
    codebook_path: *const c_char,
    out: *mut *mut CsilabCodec,
) -> CsilabStatus {
    guard(|| {
        let path = match path_arg(codebook_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let make = || -> Result<Codec> {
            require_file(path)?;
            let cb = read_codebook(path)?;
            let spec = SchemeSpec::Kmeans { variant: cb.variant, n_bf: cb.n_bf };
            Codec::new(spec, SchemeArtifacts::Codebook(cb))
        };
        match make() {
            Ok(c) => write_out(out, CsilabCodec { inner: c }),
            Err(e) => fail_with(&e),
        }
    })
}

/// Create a Q-series autoencoder codec from a model container holding the
/// encoder and decoder, with latent samples carried at `n_q` bits (16 or 32).
///
/// # Safety
/// As in [`csilab_codec_new`].
#[no_mangle]
pub unsafe extern "C" fn csilab_codec_new_qseries(
    models_path: *const c_char,
    n_q: u8,
    out: *mut *mut CsilabCodec,
) -> CsilabStatus {
    guard(|| {
        let path = match path_arg(models_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let make = || -> Result<Codec> {
            require_file(path)?;
            let pair = pair_from_models(read_models(path)?)?;
            let spec = SchemeSpec::AeQSeries { n_l: pair.latent_dim(), n_q };
            Codec::new(spec, SchemeArtifacts::QseriesAe(pair))
        };
        match make() {
            Ok(c) => write_out(out, CsilabCodec { inner: c }),
            Err(e) => fail_with(&e),
        }
    })
}

/// Create an angle autoencoder codec from a model container holding, in
/// order, the phi encoder/decoder and the psi encoder/decoder, quantizing
/// latents on the `n_b` grids.
///
/// # Safety
/// As in [`csilab_codec_new`].
#[no_mangle]
pub unsafe extern "C" fn csilab_codec_new_angle(
    models_path: *const c_char,
    n_b: u8,
    out: *mut *mut CsilabCodec,
) -> CsilabStatus {
    guard(|| {
        let path = match path_arg(models_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let make = || -> Result<Codec> {
            require_file(path)?;
            let models = read_models(path)?;
            if models.len() != 4 {
                return Err(Error::format(
                    6,
                    format!("expected four models for the angle scheme, found {}", models.len()),
                ));
            }
            let mut it = models.into_iter();
            let phi = pair_from_models(vec![it.next().unwrap(), it.next().unwrap()])?;
            let psi = pair_from_models(vec![it.next().unwrap(), it.next().unwrap()])?;
            let spec = SchemeSpec::AeAngle {
                n_l_phi: phi.latent_dim(),
                n_l_psi: psi.latent_dim(),
                n_b,
            };
            Codec::new(spec, SchemeArtifacts::AngleAe { phi, psi })
        };
        match make() {
            Ok(c) => write_out(out, CsilabCodec { inner: c }),
            Err(e) => fail_with(&e),
        }
    })
}

/// Copy the codec's canonical scheme token. Same contract as
/// [`csilab_last_error_message`].
///
/// # Safety
/// `codec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csilab_codec_token(
    codec: *const CsilabCodec,
    buf: *mut c_char,
    cap: usize,
) -> usize {
    if codec.is_null() {
        return 0;
    }
    let token = (*codec).inner.spec().token();
    let bytes = token.as_bytes();
    if !buf.is_null() && cap > 0 {
        let n = bytes.len().min(cap - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), n);
        *buf.add(n) = 0;
    }
    bytes.len()
}

/// Release a codec handle. Null is ignored.
///
/// # Safety
/// `codec` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn csilab_codec_free(codec: *mut CsilabCodec) {
    if !codec.is_null() {
        drop(Box::from_raw(codec));
    }
}

/// Compress and reconstruct one sounding of a dataset, writing the
/// reconstruction error in dB to `nmse_db`.
///
/// # Safety
/// `codec` and `dataset` must be live handles; `nmse_db` must point to
/// writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn csilab_roundtrip_nmse(
    codec: *const CsilabCodec,
    dataset: *const CsilabDataset,
    sounding: usize,
    nmse_db: *mut f64,
) -> CsilabStatus {
    guard(|| {
        if codec.is_null() || dataset.is_null() || nmse_db.is_null() {
            return fail(CsilabStatus::NullPointer, "null handle or output pointer");
        }
        let d = &(*dataset).inner;
        let Some(q_list) = d.q.get(sounding) else {
            return fail(
                CsilabStatus::Config,
                format!("sounding {sounding} out of range ({} available)", d.q.len()),
            );
        };
        let run = || -> Result<f64> {
            let q_hat = (*codec).inner.roundtrip(q_list)?;
            reconstruction_nmse(q_list, &q_hat)
        };
        match run() {
            Ok(v) => {
                *nmse_db = v;
                CsilabStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Run one Monte-Carlo packet error rate point over `trials` independent
/// channel draws at `snr_db`, writing the measured rate to `per`.
///
/// # Safety
/// `codec` must be a live handle; `per` must point to writable storage for
/// one double.
#[no_mangle]
pub unsafe extern "C" fn csilab_per_point(
    codec: *const CsilabCodec,
    n_sc: usize,
    trials: usize,
    snr_db: f64,
    master_seed: u64,
    per: *mut f64,
) -> CsilabStatus {
    guard(|| {
        if codec.is_null() || per.is_null() {
            return fail(CsilabStatus::NullPointer, "null handle or output pointer");
        }
        let cfg = SimConfig {
            n_sc,
            trials_per_point: trials,
            snr_grid_db: vec![snr_db],
            master_seed,
            ..SimConfig::default()
        };
        match per_point(&cfg, &(*codec).inner, 0, snr_db) {
            Ok(p) => {
                *per = p.per;
                CsilabStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        unsafe { csilab_last_error_message(buf.as_mut_ptr(), buf.len()) };
        let s = unsafe { CStr::from_ptr(buf.as_ptr()) };
        s.to_string_lossy().into_owned()
    }

    #[test]
    fn dataset_and_codec_round_trip_through_the_c_surface() {
        unsafe {
            let mut d: *mut CsilabDataset = std::ptr::null_mut();
            let status = csilab_dataset_generate(8, 2, 2, 3, 16, 64, 5, &mut d);
            assert_eq!(status, CsilabStatus::Ok, "{}", last_error());

            let (mut ns, mut nsc, mut nr, mut nc) = (0usize, 0usize, 0usize, 0usize);
            assert_eq!(
                csilab_dataset_shape(d, &mut ns, &mut nsc, &mut nr, &mut nc),
                CsilabStatus::Ok
            );
            assert_eq!((ns, nsc, nr, nc), (3, 16, 8, 2));

            let token = CString::new("legacy:4").unwrap();
            let mut c: *mut CsilabCodec = std::ptr::null_mut();
            assert_eq!(csilab_codec_new(token.as_ptr(), &mut c), CsilabStatus::Ok);

            let mut buf = vec![0 as c_char; 32];
            let n = csilab_codec_token(c, buf.as_mut_ptr(), buf.len());
            assert_eq!(n, 8);
            assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "legacy:4");

            let mut nmse = 0.0f64;
            assert_eq!(csilab_roundtrip_nmse(c, d, 0, &mut nmse), CsilabStatus::Ok);
            assert!(nmse < -10.0, "baseline reconstruction too poor: {nmse}");

            let mut per = 2.0f64;
            assert_eq!(csilab_per_point(c, 16, 4, 30.0, 1, &mut per), CsilabStatus::Ok);
            assert!((0.0..=1.0).contains(&per));

            csilab_codec_free(c);
            csilab_dataset_free(d);
        }
    }

    #[test]
    fn errors_surface_through_status_and_message() {
        unsafe {
            let mut d: *mut CsilabDataset = std::ptr::null_mut();
            let path = CString::new("/nonexistent/nowhere.csid").unwrap();
            let status = csilab_dataset_read(path.as_ptr(), &mut d);
            assert_eq!(status, CsilabStatus::MissingArtifact);
            assert!(last_error().contains("not found"));
            assert!(d.is_null());

            let mut c2: *mut CsilabCodec = std::ptr::null_mut();
            let cb = CString::new("/nonexistent/kmeans_joint_nbf13.cscb").unwrap();
            assert_eq!(
                csilab_codec_new_kmeans(cb.as_ptr(), &mut c2),
                CsilabStatus::MissingArtifact
            );

            let token = CString::new("kmeans:joint:13").unwrap();
            let mut c: *mut CsilabCodec = std::ptr::null_mut();
            assert_eq!(csilab_codec_new(token.as_ptr(), &mut c), CsilabStatus::Config);
            assert!(last_error().contains("artifact"));

            assert_eq!(
                csilab_dataset_generate(0, 0, 0, 0, 0, 0, 0, std::ptr::null_mut()),
                CsilabStatus::Config
            );

            let mut nmse = 0.0;
            assert_eq!(
                csilab_roundtrip_nmse(std::ptr::null(), std::ptr::null(), 0, &mut nmse),
                CsilabStatus::NullPointer
            );
        }
    }

    #[test]
    fn sized_message_queries_work_without_a_buffer() {
        unsafe {
            let path = CString::new("/nonexistent/nowhere.csid").unwrap();
            let mut d: *mut CsilabDataset = std::ptr::null_mut();
            let _ = csilab_dataset_read(path.as_ptr(), &mut d);
            let need = csilab_last_error_message(std::ptr::null_mut(), 0);
            assert!(need > 0);
            let mut buf = vec![0 as c_char; need + 1];
            let got = csilab_last_error_message(buf.as_mut_ptr(), buf.len());
            assert_eq!(got, need);
        }
    }
}
