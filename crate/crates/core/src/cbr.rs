//! Compressed beamforming report payloads.

use crate::bitio::Bitstream;
use crate::error::{Error, Result};
use crate::kmeans::KmeansVariant;

/// Which scheme produced a payload, with the parameters a decoder needs to
/// parse it. Artifacts themselves (codebooks, models) are not carried here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CbrFormat {
    /// Per-angle scalar quantization.
    Legacy { n_b: u8 },
    /// One (or two, for the split variant) codebook indices per subcarrier.
    KmeansIndex { variant: KmeansVariant, n_bf: u8 },
    /// Autoencoder latents over per-element series, stored at `n_q` bits.
    AeQSeries { n_l: usize, n_q: u8 },
    /// Autoencoder latents over per-angle series, mid-rise quantized.
    AeAngle { n_l_phi: usize, n_l_psi: usize, n_b: u8 },
}

/// A compressed beamforming report for one sounding: the packed payload for
/// all feedback subcarriers plus enough metadata to decode it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedCbr {
    pub format: CbrFormat,
    pub n_sc: usize,
    pub bits: Bitstream,
}

impl CompressedCbr {
    /// Check the payload against the format the decoder expects.
    pub fn expect_format(&self, want: &CbrFormat, want_bits: usize) -> Result<()> {
        if &self.format != want {
            return Err(Error::precondition(format!(
                "payload was produced by {:?}, decoder configured for {:?}",
                self.format, want
            )));
        }
        if self.bits.len_bits() != want_bits {
            return Err(Error::format(
                0,
                format!(
                    "payload length {} bits disagrees with configuration ({} bits expected)",
                    self.bits.len_bits(),
                    want_bits
                ),
            ));
        }
        Ok(())
    }
}
