//! Givens angle decomposition and the scalar-quantized baseline feedback.
//!
//! A steering matrix in convention form factors into a fixed sequence of
//! per-row phase rotations (angles phi) and real Givens rotations (angles
//! psi):
//!
//! `Q = [ prod_i D_i(phi_.,i) * prod_{l>i} G_{l,i}^T(psi_{l,i}) ] * I~`
//!
//! where `I~` is the first `n_c` columns of the identity. Column `i` (1-based)
//! contributes `n_r - i` phis (rows `i..n_r-1`) and `n_r - i` psis (rows
//! `i+1..n_r`); columns run to `min(n_c, n_r - 1)`. The real non-negative
//! last row is what guarantees every psi lands in `[0, pi/2]` and no phase is
//! needed for the bottom row.
//!
//! The baseline feedback quantizes each psi with `n_b` bits and each phi with
//! `n_b + 2` bits on offset-uniform grids and packs the indices into a bit
//! string, column by column, phis before psis.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bitio::{BitReader, BitWriter};
use crate::cbr::{CbrFormat, CompressedCbr};
use crate::error::{Error, Result};
use crate::kpi::MultCounter;
use crate::steering::SteeringMatrix;

/// Number of (phi, psi) angle pairs for an `n_r x n_c` steering matrix:
/// `sum_{i=1}^{min(n_c, n_r-1)} (n_r - i)`.
pub fn num_angles(n_r: usize, n_c: usize) -> Result<usize> {
    if n_c == 0 || n_r == 0 || n_c > n_r {
        return Err(Error::config(format!(
            "invalid steering shape {n_r}x{n_c} for angle decomposition"
        )));
    }
    let m = n_c.min(n_r - 1);
    Ok((1..=m).map(|i| n_r - i).sum())
}

/// Unquantized decomposition angles for one steering matrix.
///
/// `phi` and `psi` both hold one value per (row, column) slot, ordered
/// column-major and top-down within each column; `phi[a]` and `psi[a]` belong
/// to the same column but different rows (phis cover rows `i..n_r-1`, psis
/// rows `i+1..n_r`, 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    pub n_r: usize,
    pub n_c: usize,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl AngleSet {
    pub fn validate(&self) -> Result<()> {
        let n_a = num_angles(self.n_r, self.n_c)?;
        if self.phi.len() != n_a || self.psi.len() != n_a {
            return Err(Error::precondition(format!(
                "angle counts ({}, {}) do not match shape {}x{} (expected {})",
                self.phi.len(),
                self.psi.len(),
                self.n_r,
                self.n_c,
                n_a
            )));
        }
        if self.phi.iter().chain(self.psi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::precondition("non-finite angle value"));
        }
        Ok(())
    }

    /// Number of processed columns.
    pub fn n_cols(&self) -> usize {
        self.n_c.min(self.n_r - 1)
    }

    /// Angles per column `ci` (0-based); the same count applies to phi and
    /// psi.
    pub fn col_len(&self, ci: usize) -> usize {
        self.n_r - 1 - ci
    }

    /// Start offset of column `ci` in the flat `phi`/`psi` vectors.
    pub fn col_start(&self, ci: usize) -> usize {
        (0..ci).map(|j| self.n_r - 1 - j).sum()
    }
}

/// Decompose a steering matrix into its angle set.
///
/// Works column by column: extract the phase of each entry above the last
/// row, then rotate the remaining sub-column to zero with real Givens
/// rotations. Phases land in `[0, 2*pi)`, rotations in `[0, pi/2]`.
pub fn angles_from_q(q: &SteeringMatrix) -> Result<AngleSet> {
    angles_from_q_inner(q, None)
}

/// Same as [`angles_from_q`] but counts every real multiplication (and
/// division) executed on the working matrix, for complexity reporting.
pub fn angles_from_q_counted(q: &SteeringMatrix, counter: &mut MultCounter) -> Result<AngleSet> {
    angles_from_q_inner(q, Some(counter))
}

fn angles_from_q_inner(q: &SteeringMatrix, mut counter: Option<&mut MultCounter>) -> Result<AngleSet> {
    q.validate()?;
    let n_r = q.n_r();
    let n_c = q.n_c();
    let m = n_c.min(n_r - 1);
    let mut w = q.matrix().clone();
    let mut phi = Vec::with_capacity(num_angles(n_r, n_c)?);
    let mut psi = Vec::with_capacity(phi.capacity());

    for ci in 0..m {
        // phase extraction: rows ci..n_r-2 of column ci
        for l in ci..n_r - 1 {
            let theta = w[(l, ci)].arg();
            let value = if theta < 0.0 { theta + 2.0 * PI } else { theta };
            phi.push(value);
            let rot = Complex64::from_polar(1.0, -theta);
            for j in ci..n_c {
                w[(l, j)] *= rot;
            }
            if let Some(c) = counter.as_deref_mut() {
                c.add(4 * (n_c - ci) as u64);
            }
        }
        // Givens rotations: zero rows ci+1..n_r-1 against the diagonal
        for l in ci + 1..n_r {
            let a = w[(ci, ci)].re;
            let b = w[(l, ci)].re;
            let ang = b.atan2(a).clamp(0.0, PI / 2.0);
            psi.push(ang);
            let (s, c) = ang.sin_cos();
            for j in ci..n_c {
                let vi = w[(ci, j)];
                let vl = w[(l, j)];
                w[(ci, j)] = vi * c + vl * s;
                w[(l, j)] = vl * c - vi * s;
            }
            if let Some(cnt) = counter.as_deref_mut() {
                cnt.add(8 * (n_c - ci) as u64);
            }
        }
    }
    Ok(AngleSet { n_r, n_c, phi, psi })
}

/// Rebuild the steering matrix from an angle set.
///
/// Exact inverse of [`angles_from_q`] up to floating point rounding. Psi
/// values are clamped into `[0, pi/2]` and phis wrapped into `[0, 2*pi)`, so
/// slightly out-of-range inputs (quantized or learned angles) stay legal.
/// The output satisfies the last-row convention by construction.
pub fn q_from_angles(angles: &AngleSet) -> Result<SteeringMatrix> {
    angles.validate()?;
    let n_r = angles.n_r;
    let n_c = angles.n_c;
    let m = angles.n_cols();
    let mut w = DMatrix::from_fn(n_r, n_c, |r, c| {
        if r == c {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });

    for ci in (0..m).rev() {
        let start = angles.col_start(ci);
        // rotations are applied bottom row first (they sit rightmost in the
        // factorization for this column)
        for (off, l) in (ci + 1..n_r).enumerate().rev() {
            let ang = angles.psi[start + off].clamp(0.0, PI / 2.0);
            let (s, c) = ang.sin_cos();
            for j in 0..n_c {
                let vi = w[(ci, j)];
                let vl = w[(l, j)];
                w[(ci, j)] = vi * c - vl * s;
                w[(l, j)] = vi * s + vl * c;
            }
        }
        for (off, l) in (ci..n_r - 1).enumerate() {
            let theta = angles.phi[start + off].rem_euclid(2.0 * PI);
            let rot = Complex64::from_polar(1.0, theta);
            for j in 0..n_c {
                w[(l, j)] *= rot;
            }
        }
    }
    Ok(SteeringMatrix::new_unchecked(w))
}

/// Quantized angle indices: psi at `n_b` bits, phi at `n_b + 2` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedAngles {
    pub n_r: usize,
    pub n_c: usize,
    pub n_b: u8,
    pub phi_idx: Vec<u16>,
    pub psi_idx: Vec<u16>,
}

/// Check that a quantization width is supported (indices must fit u16 and
/// the grids stay meaningful).
pub fn check_n_b(n_b: u8) -> Result<()> {
    if !(1..=8).contains(&n_b) {
        return Err(Error::config(format!("angle bit width n_b={n_b} out of range 1..=8")));
    }
    Ok(())
}

/// Phi grid value for index `k` at `b_phi` bits:
/// `k * pi / 2^(b_phi - 1) + pi / 2^b_phi`.
pub fn phi_grid(k: u16, b_phi: u32) -> f64 {
    k as f64 * PI / (1u64 << (b_phi - 1)) as f64 + PI / (1u64 << b_phi) as f64
}

/// Psi grid value for index `k` at `b_psi` bits:
/// `k * pi / 2^(b_psi + 1) + pi / 2^(b_psi + 2)`.
pub fn psi_grid(k: u16, b_psi: u32) -> f64 {
    k as f64 * PI / (1u64 << (b_psi + 1)) as f64 + PI / (1u64 << (b_psi + 2)) as f64
}

/// Nearest phi grid index under the circular (mod 2*pi) metric. A value
/// exactly between two grid points takes the lower index.
pub fn quantize_phi(phi: f64, b_phi: u32) -> u16 {
    let n = 1i64 << b_phi;
    let step = 2.0 * PI / n as f64;
    let u = (phi.rem_euclid(2.0 * PI) - 0.5 * step) / step;
    let k_lo = u.floor();
    let frac = u - k_lo;
    let k_lo = k_lo as i64;
    let k = if frac < 0.5 {
        k_lo.rem_euclid(n)
    } else if frac > 0.5 {
        (k_lo + 1).rem_euclid(n)
    } else {
        k_lo.rem_euclid(n).min((k_lo + 1).rem_euclid(n))
    };
    k as u16
}

/// Nearest psi grid index; the grid is clamped, not circular. Exact ties
/// take the lower index.
pub fn quantize_psi(psi: f64, b_psi: u32) -> u16 {
    let n = 1i64 << b_psi;
    let step = PI / (1i64 << (b_psi + 1)) as f64;
    let u = (psi - 0.5 * step) / step;
    let k_lo = u.floor();
    let frac = u - k_lo;
    let k = if frac > 0.5 { k_lo as i64 + 1 } else { k_lo as i64 };
    k.clamp(0, n - 1) as u16
}

/// Quantize every angle of a set.
pub fn quantize_angles(angles: &AngleSet, n_b: u8) -> Result<QuantizedAngles> {
    check_n_b(n_b)?;
    angles.validate()?;
    let b_phi = n_b as u32 + 2;
    let b_psi = n_b as u32;
    Ok(QuantizedAngles {
        n_r: angles.n_r,
        n_c: angles.n_c,
        n_b,
        phi_idx: angles.phi.iter().map(|&v| quantize_phi(v, b_phi)).collect(),
        psi_idx: angles.psi.iter().map(|&v| quantize_psi(v, b_psi)).collect(),
    })
}

/// Map quantized indices back to grid midpoints.
pub fn dequantize_angles(qa: &QuantizedAngles) -> Result<AngleSet> {
    check_n_b(qa.n_b)?;
    let n_a = num_angles(qa.n_r, qa.n_c)?;
    if qa.phi_idx.len() != n_a || qa.psi_idx.len() != n_a {
        return Err(Error::precondition(format!(
            "index counts ({}, {}) do not match shape {}x{}",
            qa.phi_idx.len(),
            qa.psi_idx.len(),
            qa.n_r,
            qa.n_c
        )));
    }
    let b_phi = qa.n_b as u32 + 2;
    let b_psi = qa.n_b as u32;
    for &k in &qa.phi_idx {
        if k as u32 >= 1 << b_phi {
            return Err(Error::precondition(format!("phi index {k} out of range")));
        }
    }
    for &k in &qa.psi_idx {
        if k as u32 >= 1 << b_psi {
            return Err(Error::precondition(format!("psi index {k} out of range")));
        }
    }
    Ok(AngleSet {
        n_r: qa.n_r,
        n_c: qa.n_c,
        phi: qa.phi_idx.iter().map(|&k| phi_grid(k, b_phi)).collect(),
        psi: qa.psi_idx.iter().map(|&k| psi_grid(k, b_psi)).collect(),
    })
}

/// Payload size of the baseline feedback for one sounding.
pub fn legacy_cbr_bits(n_sc: usize, n_r: usize, n_c: usize, n_b: u8) -> Result<usize> {
    let n_a = num_angles(n_r, n_c)?;
    Ok(n_sc * n_a * (2 * n_b as usize + 2))
}

/// Quantize and pack all subcarriers of a sounding into the baseline
/// feedback payload. Per subcarrier the layout is: for each column, the phi
/// indices top-down, then the psi indices top-down.
pub fn legacy_encode_cbr(q_list: &[SteeringMatrix], n_b: u8) -> Result<CompressedCbr> {
    legacy_encode_inner(q_list, n_b, None)
}

/// [`legacy_encode_cbr`] with multiplication counting over the angle
/// computation (quantization itself contributes one division per angle).
pub fn legacy_encode_cbr_counted(
    q_list: &[SteeringMatrix],
    n_b: u8,
    counter: &mut MultCounter,
) -> Result<CompressedCbr> {
    legacy_encode_inner(q_list, n_b, Some(counter))
}

fn legacy_encode_inner(
    q_list: &[SteeringMatrix],
    n_b: u8,
    mut counter: Option<&mut MultCounter>,
) -> Result<CompressedCbr> {
    check_n_b(n_b)?;
    let first = q_list
        .first()
        .ok_or_else(|| Error::precondition("empty subcarrier list"))?;
    let (n_r, n_c) = (first.n_r(), first.n_c());
    let b_phi = n_b as u32 + 2;
    let b_psi = n_b as u32;
    let mut w = BitWriter::new();
    for q in q_list {
        if q.n_r() != n_r || q.n_c() != n_c {
            return Err(Error::precondition("mixed steering shapes in one report"));
        }
        let angles = match counter.as_deref_mut() {
            Some(c) => angles_from_q_counted(q, c)?,
            None => angles_from_q(q)?,
        };
        let qa = quantize_angles(&angles, n_b)?;
        if let Some(c) = counter.as_deref_mut() {
            // one division per quantized angle
            c.add(2 * angles.phi.len() as u64);
        }
        for ci in 0..angles.n_cols() {
            let start = angles.col_start(ci);
            let len = angles.col_len(ci);
            for a in start..start + len {
                w.write(qa.phi_idx[a] as u64, b_phi);
            }
            for a in start..start + len {
                w.write(qa.psi_idx[a] as u64, b_psi);
            }
        }
    }
    Ok(CompressedCbr {
        format: CbrFormat::Legacy { n_b },
        n_sc: q_list.len(),
        bits: w.finish(),
    })
}

/// Unpack and dequantize a baseline payload back into steering matrices.
pub fn legacy_decode_cbr(cbr: &CompressedCbr, n_r: usize, n_c: usize) -> Result<Vec<SteeringMatrix>> {
    let n_b = match cbr.format {
        CbrFormat::Legacy { n_b } => n_b,
        _ => {
            return Err(Error::precondition(format!(
                "payload format {:?} is not a baseline report",
                cbr.format
            )))
        }
    };
    check_n_b(n_b)?;
    let want_bits = legacy_cbr_bits(cbr.n_sc, n_r, n_c, n_b)?;
    cbr.expect_format(&CbrFormat::Legacy { n_b }, want_bits)?;
    let n_a = num_angles(n_r, n_c)?;
    let b_phi = n_b as u32 + 2;
    let b_psi = n_b as u32;
    let mut r = BitReader::new(&cbr.bits);
    let mut out = Vec::with_capacity(cbr.n_sc);
    for _ in 0..cbr.n_sc {
        let mut qa = QuantizedAngles {
            n_r,
            n_c,
            n_b,
            phi_idx: vec![0; n_a],
            psi_idx: vec![0; n_a],
        };
        let probe = AngleSet {
            n_r,
            n_c,
            phi: vec![0.0; n_a],
            psi: vec![0.0; n_a],
        };
        for ci in 0..probe.n_cols() {
            let start = probe.col_start(ci);
            let len = probe.col_len(ci);
            for a in start..start + len {
                qa.phi_idx[a] = r.read(b_phi)? as u16;
            }
            for a in start..start + len {
                qa.psi_idx[a] = r.read(b_psi)? as u16;
            }
        }
        out.push(q_from_angles(&dequantize_angles(&qa)?)?);
    }
    Ok(out)
}
