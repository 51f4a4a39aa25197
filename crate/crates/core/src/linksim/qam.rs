//! Gray-coded 16-QAM at unit average symbol energy, with max-log soft
//! demapping per real axis.

use num_complex::Complex64;

/// Per-axis amplitude levels before the unit-energy normalization, indexed
/// by the Gray pair (b0, b1): 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
const RAW_LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];

/// Mean of level^2 over an axis pair is 5 + 5, so the scale is 1/sqrt(10).
fn norm() -> f64 {
    1.0 / 10f64.sqrt()
}

fn axis_level(b0: u8, b1: u8) -> f64 {
    // Gray order along the axis: 00, 01, 11, 10
    let idx = match (b0, b1) {
        (0, 0) => 0,
        (0, 1) => 1,
        (1, 1) => 2,
        _ => 3,
    };
    RAW_LEVELS[idx] * norm()
}

fn axis_bits(idx: usize) -> (u8, u8) {
    [(0, 0), (0, 1), (1, 1), (1, 0)][idx]
}

/// Map four bits to one constellation point; bits 0..2 drive the in-phase
/// axis, bits 2..4 the quadrature axis.
pub fn qam16_map(bits: &[u8; 4]) -> Complex64 {
    Complex64::new(axis_level(bits[0], bits[1]), axis_level(bits[2], bits[3]))
}

/// Max-log LLRs for the two bits of one axis, given the equalized axis
/// observation `y`, the per-stream amplitude `amp` applied at the mapper,
/// and the effective complex noise variance `nu`. Positive means "one".
pub fn qam16_axis_llrs(y: f64, amp: f64, nu: f64) -> (f64, f64) {
    let nu = nu.max(1e-300);
    let mut best = [[f64::INFINITY; 2]; 2];
    for idx in 0..4 {
        let d = y - amp * RAW_LEVELS[idx] * norm();
        let d2 = d * d;
        let (b0, b1) = axis_bits(idx);
        for (bit_pos, bit) in [(0, b0), (1, b1)] {
            if d2 < best[bit_pos][bit as usize] {
                best[bit_pos][bit as usize] = d2;
            }
        }
    }
    (
        (best[0][0] - best[0][1]) / nu,
        (best[1][0] - best[1][1]) / nu,
    )
}
