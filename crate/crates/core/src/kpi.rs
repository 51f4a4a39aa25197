//! KPI primitives: multiplication counting and reconstruction precision.
//!
//! The per-scheme bit and complexity formulas live next to the codecs they
//! describe; this module holds the shared instrumentation plus the NMSE
//! metric used to score reconstructed steering matrices.

use crate::error::{Error, Result};
use crate::steering::SteeringMatrix;

/// Calibration constant: real multiplications charged for one full Givens
/// angle extraction over a 64-subcarrier report at (8, 2). Used by the
/// analytic complexity formulas for the baseline and the angle-domain
/// codecs. The instrumented count of this implementation is reported next
/// to it but never asserted against it.
pub const C_GIVENS_DEFAULT: u64 = 225_512;

/// Accumulator for real multiplications executed inside a codec run.
#[derive(Debug, Clone, Default)]
pub struct MultCounter {
    count: u64,
}

impl MultCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, n: u64) {
        self.count += n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn reset(&mut self) {
        self.count = 0;
    }
}

/// Reporting floor for NMSE: a perfect reconstruction reports -100 dB
/// rather than negative infinity.
pub const NMSE_FLOOR_DB: f64 = -100.0;

/// Normalized reconstruction error in dB after per-column phase alignment.
///
/// Beamforming is invariant to a per-column unit phase on Q, so each
/// reconstructed column is rotated by the unit scalar minimizing its
/// distance to the reference before the error is accumulated:
/// `min_theta ||q - e^{j theta} q_hat||^2 = ||q||^2 + ||q_hat||^2 - 2|q_hat^H q|`.
pub fn reconstruction_nmse(q_true: &[SteeringMatrix], q_hat: &[SteeringMatrix]) -> Result<f64> {
    if q_true.len() != q_hat.len() {
        return Err(Error::precondition(format!(
            "reference holds {} matrices, reconstruction {}",
            q_true.len(),
            q_hat.len()
        )));
    }
    if q_true.is_empty() {
        return Err(Error::precondition("empty matrix list"));
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (q, qh) in q_true.iter().zip(q_hat) {
        if (q.n_r(), q.n_c()) != (qh.n_r(), qh.n_c()) {
            return Err(Error::precondition("mismatched steering shapes"));
        }
        let a = q.matrix();
        let b = qh.matrix();
        for j in 0..q.n_c() {
            let mut qq = 0.0;
            let mut hh = 0.0;
            let mut inner_re = 0.0;
            let mut inner_im = 0.0;
            for i in 0..q.n_r() {
                let x = a[(i, j)];
                let y = b[(i, j)];
                qq += x.norm_sqr();
                hh += y.norm_sqr();
                // conj(y) * x accumulated by parts
                inner_re += y.re * x.re + y.im * x.im;
                inner_im += y.re * x.im - y.im * x.re;
            }
            num += (qq + hh - 2.0 * inner_re.hypot(inner_im)).max(0.0);
            den += qq;
        }
    }
    if den <= 0.0 {
        return Err(Error::precondition("zero-norm reference matrices"));
    }
    let db = 10.0 * (num / den).log10();
    Ok(db.max(NMSE_FLOOR_DB))
}

/// One accounting row of the overhead/complexity report.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiReport {
    pub scheme: String,
    pub variant: String,
    pub params: String,
    pub feedback_bits: u64,
    pub model_bits: u64,
    pub mults: u64,
    pub nmse_db: Option<f64>,
}

fn nmse_cell(r: &KpiReport) -> String {
    match r.nmse_db {
        Some(v) => format!("{v:.3}"),
        None => String::new(),
    }
}

/// Machine-readable report, one line per row.
pub fn render_kpi_csv(rows: &[KpiReport]) -> String {
    let mut out = String::from("scheme,variant,params,feedback_bits,model_bits,mults,nmse_db\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.scheme,
            r.variant,
            r.params,
            r.feedback_bits,
            r.model_bits,
            r.mults,
            nmse_cell(r)
        ));
    }
    out
}

/// The same rows as a Markdown table.
pub fn render_kpi_markdown(rows: &[KpiReport]) -> String {
    let mut out = String::from(
        "| scheme | variant | params | feedback bits/CBR | model sharing bits | mults/CBR | NMSE (dB) |\n\
         |---|---|---|---:|---:|---:|---:|\n",
    );
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            r.scheme,
            r.variant,
            r.params,
            r.feedback_bits,
            r.model_bits,
            r.mults,
            nmse_cell(r)
        ));
    }
    out
}
