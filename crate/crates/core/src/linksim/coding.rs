//! Rate-1/2 convolutional code, constraint length 7, generators 133/171
//! (octal), zero-tailed, with a soft-input Viterbi decoder.

use crate::error::{Error, Result};

const G0: u16 = 0o133;
const G1: u16 = 0o171;
const STATES: usize = 64;
const TAIL: usize = 6;

fn parity(x: u16) -> u8 {
    (x.count_ones() & 1) as u8
}

/// Both output bits for one input bit from a given 6-bit state. The newest
/// input occupies the most significant tap of the 7-bit window.
fn branch_output(state: u8, bit: u8) -> (u8, u8) {
    let window = ((bit as u16) << 6) | state as u16;
    (parity(window & G0), parity(window & G1))
}

fn next_state(state: u8, bit: u8) -> u8 {
    ((bit << 5) | (state >> 1)) & 0x3F
}

/// Encode `bits` (values 0/1) and append six zero tail bits so the trellis
/// terminates in state 0. Output holds `2 * (bits.len() + 6)` coded bits.
pub fn conv_encode(bits: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 * (bits.len() + TAIL));
    let mut state = 0u8;
    for &b in bits.iter().chain(std::iter::repeat(&0).take(TAIL)) {
        debug_assert!(b <= 1);
        let (c0, c1) = branch_output(state, b);
        out.push(c0);
        out.push(c1);
        state = next_state(state, b);
    }
    out
}

/// Maximum-likelihood sequence decode from soft bit metrics. `llrs[i] > 0`
/// means coded bit `i` is more likely a one. Only the first
/// `2 * (n_payload + 6)` entries are consumed; the decoder knows the
/// encoder started and ended in state 0.
pub fn viterbi_decode(llrs: &[f64], n_payload: usize) -> Result<Vec<u8>> {
    let n_steps = n_payload + TAIL;
    if llrs.len() < 2 * n_steps {
        return Err(Error::precondition(format!(
            "{} soft bits cannot cover a {n_payload}-bit payload plus tail",
            llrs.len()
        )));
    }
    let mut pm = [f64::NEG_INFINITY; STATES];
    pm[0] = 0.0;
    // one u64 per step: bit s records the LSB of the winning predecessor of s
    let mut decisions = vec![0u64; n_steps];
    let mut next = [f64::NEG_INFINITY; STATES];
    for t in 0..n_steps {
        let (l0, l1) = (llrs[2 * t], llrs[2 * t + 1]);
        next.fill(f64::NEG_INFINITY);
        let mut dec = 0u64;
        for s in 0..STATES as u8 {
            if pm[s as usize] == f64::NEG_INFINITY {
                continue;
            }
            for bit in 0..2u8 {
                let (c0, c1) = branch_output(s, bit);
                let bm = if c0 == 1 { l0 } else { -l0 } + if c1 == 1 { l1 } else { -l1 };
                let ns = next_state(s, bit) as usize;
                let cand = pm[s as usize] + bm;
                if cand > next[ns] {
                    next[ns] = cand;
                    dec = (dec & !(1u64 << ns)) | (((s & 1) as u64) << ns);
                }
            }
        }
        pm = next;
        decisions[t] = dec;
    }
    // zero tail pins the final state
    let mut state = 0u8;
    let mut bits = vec![0u8; n_steps];
    for t in (0..n_steps).rev() {
        bits[t] = state >> 5;
        state = ((state & 0x1F) << 1) | ((decisions[t] >> state) & 1) as u8;
    }
    bits.truncate(n_payload);
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    fn to_llrs(coded: &[u8]) -> Vec<f64> {
        coded.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }).collect()
    }

    #[test]
    fn impulse_response_matches_generators() {
        let coded = conv_encode(&[1]);
        assert_eq!(coded.len(), 14);
        let first: Vec<u8> = coded.iter().step_by(2).copied().collect();
        let second: Vec<u8> = coded.iter().skip(1).step_by(2).copied().collect();
        // reading tap masks MSB first reproduces 133 and 171 octal
        assert_eq!(first, vec![1, 0, 1, 1, 0, 1, 1]);
        assert_eq!(second, vec![1, 1, 1, 1, 0, 0, 1]);
    }

    #[test]
    fn termination_returns_to_zero_state() {
        let coded = conv_encode(&random_bits(40, 1));
        assert_eq!(coded.len(), 2 * 46);
        // re-run the feed to check the final state directly
        let mut state = 0u8;
        for &b in random_bits(40, 1).iter().chain([0u8; 6].iter()) {
            state = next_state(state, b);
        }
        assert_eq!(state, 0);
    }

    #[test]
    fn clean_channel_roundtrip() {
        for seed in 0..20 {
            let payload = random_bits(200, seed);
            let decoded = viterbi_decode(&to_llrs(&conv_encode(&payload)), 200).unwrap();
            assert_eq!(decoded, payload);
        }
    }

    #[test]
    fn corrects_scattered_hard_errors() {
        // free distance 10: up to four separated flips must be recoverable
        let payload = random_bits(300, 7);
        let mut llrs = to_llrs(&conv_encode(&payload));
        for pos in [11, 100, 250, 480] {
            llrs[pos] = -llrs[pos];
        }
        assert_eq!(viterbi_decode(&llrs, 300).unwrap(), payload);
    }

    #[test]
    fn erased_bits_are_tolerated() {
        let payload = random_bits(120, 9);
        let mut llrs = to_llrs(&conv_encode(&payload));
        for l in llrs.iter_mut().skip(5).step_by(9) {
            *l = 0.0;
        }
        assert_eq!(viterbi_decode(&llrs, 120).unwrap(), payload);
    }

    #[test]
    fn short_input_is_rejected() {
        assert!(viterbi_decode(&[0.0; 20], 20).is_err());
    }

    #[test]
    fn trailing_metrics_are_ignored() {
        let payload = random_bits(50, 3);
        let mut llrs = to_llrs(&conv_encode(&payload));
        llrs.extend([5.0, -5.0, 3.0]);
        assert_eq!(viterbi_decode(&llrs, 50).unwrap(), payload);
    }
}
