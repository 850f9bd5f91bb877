//! Hard-decision detection of mapped blocks from 1-bit samples.
//!
//! Each block is compared with the valid codewords for the polarity it was
//! entered with; the closest one in Hamming distance wins, and ties go to
//! the lowest table row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mimosim::ComplexSigns;
use crate::zxmap::{merge_rails, sign_codebook, Codebook, ComplexPilot, Sign, ZxParams};

/// Number of positions where `a` and `b` differ.
pub fn hamming(a: &[Sign], b: &[Sign]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: format!("{} signs", a.len()),
            got: b.len().to_string(),
        });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Received block together with the polarity it was entered with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectionWindow {
    pub rho_prev: Sign,
    pub block_signs: Vec<Sign>,
}

impl DetectionWindow {
    /// `[rho_prev, block...]`, the `q + 1` samples the decision looks at.
    pub fn samples(&self) -> Vec<Sign> {
        std::iter::once(self.rho_prev)
            .chain(self.block_signs.iter().copied())
            .collect()
    }
}

/// Decision for one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockDecision {
    pub row: usize,
    pub label: Vec<u8>,
    pub codeword: Vec<Sign>,
    pub distance: usize,
}

/// Closest codeword of `codebook` to the window.
pub fn detect_block(window: &DetectionWindow, codebook: &Codebook) -> Result<BlockDecision> {
    if window.rho_prev != codebook.entering {
        return Err(Error::Input(format!(
            "window polarity {} does not match codebook polarity {}",
            window.rho_prev, codebook.entering
        )));
    }
    let received = window.samples();
    let mut best: Option<(usize, usize)> = None;
    for (k, entry) in codebook.entries.iter().enumerate() {
        let candidate: Vec<Sign> = std::iter::once(codebook.entering)
            .chain(entry.codeword.iter().copied())
            .collect();
        let d = hamming(&received, &candidate)?;
        // strict comparison keeps the lowest index on ties
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    let (k, distance) = best.ok_or_else(|| Error::Input("empty codebook".into()))?;
    let e = &codebook.entries[k];
    Ok(BlockDecision {
        row: e.row,
        label: e.label.clone(),
        codeword: e.codeword.clone(),
        distance,
    })
}

/// Where the entering polarity of the next block comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarityChaining {
    /// Last received sample of the previous block.
    #[default]
    Raw,
    /// Last sign of the previously detected codeword.
    Detected,
}

/// Detection result of one rail.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RailDetection {
    pub bits: Vec<u8>,
    pub rows: Vec<usize>,
    /// Entering polarity used for each block.
    pub polarities: Vec<Sign>,
}

/// Table-driven block detector for one mapping.
#[derive(Clone, Debug)]
pub struct Detector {
    params: ZxParams,
    chaining: PolarityChaining,
    codebooks: [Codebook; 2],
    /// Best row for every received block, indexed by `[polarity][mask]`
    /// with bit `j` of the mask set when sample `j` is negative.
    lut: [Vec<usize>; 2],
}

fn polarity_index(s: Sign) -> usize {
    match s {
        Sign::Plus => 0,
        Sign::Minus => 1,
    }
}

fn mask_signs(mask: usize, q: usize) -> Vec<Sign> {
    (0..q)
        .map(|j| if mask >> j & 1 == 1 { Sign::Minus } else { Sign::Plus })
        .collect()
}

impl Detector {
    pub fn new(params: ZxParams, chaining: PolarityChaining) -> Self {
        let codebooks = [sign_codebook(params, Sign::Plus), sign_codebook(params, Sign::Minus)];
        let q = params.q();
        let lut = [0, 1].map(|p| {
            (0..1usize << q)
                .map(|mask| {
                    let w = DetectionWindow {
                        rho_prev: codebooks[p].entering,
                        block_signs: mask_signs(mask, q),
                    };
                    detect_block(&w, &codebooks[p]).expect("codebook polarity matches").row
                })
                .collect()
        });
        Self {
            params,
            chaining,
            codebooks,
            lut,
        }
    }

    pub fn params(&self) -> ZxParams {
        self.params
    }

    pub fn chaining(&self) -> PolarityChaining {
        self.chaining
    }

    pub fn codebook(&self, entering: Sign) -> &Codebook {
        &self.codebooks[polarity_index(entering)]
    }

    /// Detects a rail that started after pilot `rho_b`.
    pub fn detect_rail(&self, signs: &[Sign], rho_b: Sign) -> Result<RailDetection> {
        let q = self.params.q();
        if !signs.len().is_multiple_of(q) {
            return Err(Error::Input(format!(
                "rail of {} samples is not a multiple of the block length {q}",
                signs.len()
            )));
        }
        let n_blocks = signs.len() / q;
        let k = self.params.bits_per_block();
        let mut out = RailDetection {
            bits: Vec::with_capacity(n_blocks * k),
            rows: Vec::with_capacity(n_blocks),
            polarities: Vec::with_capacity(n_blocks),
        };
        let mut rho = rho_b;
        for block in signs.chunks_exact(q) {
            let mask = block
                .iter()
                .enumerate()
                .fold(0usize, |m, (j, s)| m | ((*s == Sign::Minus) as usize) << j);
            let p = polarity_index(rho);
            let row = self.lut[p][mask];
            let entry = &self.codebooks[p].entries[row];
            out.bits.extend_from_slice(&entry.label);
            out.rows.push(row);
            out.polarities.push(rho);
            rho = match self.chaining {
                PolarityChaining::Raw => block[q - 1],
                PolarityChaining::Detected => entry.codeword[q - 1],
            };
        }
        Ok(out)
    }

    /// Detects both rails of one user and re-interleaves the bits.
    pub fn detect_complex(&self, signs: &ComplexSigns, pilot: ComplexPilot) -> Result<Vec<u8>> {
        let re = self.detect_rail(&signs.re, pilot.re)?;
        let im = self.detect_rail(&signs.im, pilot.im)?;
        Ok(merge_rails(&re.bits, &im.bits, self.params.bits_per_block()))
    }
}

/// Bits of one rail, with raw polarity chaining.
pub fn detect_frame(signs: &[Sign], rho_b: Sign, params: ZxParams) -> Result<Vec<u8>> {
    Ok(Detector::new(params, PolarityChaining::Raw)
        .detect_rail(signs, rho_b)?
        .bits)
}
