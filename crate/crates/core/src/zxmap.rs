//! Time-instance zero-crossing (TI ZX) forward mapping.
//!
//! Input bits are grouped into blocks; each block selects one of `rows`
//! sign patterns (the zero-crossing position, or no crossing at all). The
//! pattern is emitted relative to the running polarity, i.e. the sign of
//! the last sample already on the line, and weighted entrywise by the
//! positive coefficient row of a [`CoefficientSet`].
//!
//! The same rules are expressed as an equivalent Moore machine whose
//! `2 * rows` states carry the emitted segment as output. That form is what
//! the spectral analysis consumes.

use std::fmt;
use std::ops::{Mul, Neg};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::tables;

/// A binary sign, `+1` or `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Sign {
    /// Sign of a real value; exact zero maps to `Plus`.
    #[inline]
    pub fn of<T: Scalar>(v: T) -> Self {
        if v < T::zero() {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn from_i8(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            _ => Err(Error::Input(format!("sign must be +1 or -1, got {v}"))),
        }
    }

    #[inline]
    pub fn to_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    #[inline]
    pub fn value<T: Scalar>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }
}

impl Neg for Sign {
    type Output = Sign;
    #[inline]
    fn neg(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl Mul for Sign {
    type Output = Sign;
    #[inline]
    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// Geometry of the mapping for one oversampling factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ZxParams {
    m_rx: usize,
    q: usize,
    bits_per_block: usize,
    rows: usize,
}

impl ZxParams {
    /// Only `M_Rx` of 2 and 3 have mapping tables.
    pub fn new(m_rx: usize) -> Result<Self> {
        match m_rx {
            3 => Ok(Self {
                m_rx: 3,
                q: 3,
                bits_per_block: 2,
                rows: 4,
            }),
            2 => Ok(Self {
                m_rx: 2,
                q: 4,
                bits_per_block: 3,
                rows: 8,
            }),
            _ => Err(Error::Config(format!(
                "unsupported oversampling factor M_Rx = {m_rx} (expected 2 or 3)"
            ))),
        }
    }

    /// Oversampling factor (samples per Nyquist interval).
    #[inline]
    pub fn m_rx(&self) -> usize {
        self.m_rx
    }

    /// Samples per mapped block.
    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn bits_per_block(&self) -> usize {
        self.bits_per_block
    }

    /// Number of positive-polarity output patterns.
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        2 * self.rows
    }

    /// Number of free coefficients.
    #[inline]
    pub fn m_coeff(&self) -> usize {
        self.rows * self.q
    }

    /// Nyquist intervals covered by one block.
    #[inline]
    pub fn intervals_per_block(&self) -> usize {
        self.q / self.m_rx
    }

    /// Blocks per rail for a frame of `n_intervals` Nyquist intervals.
    pub fn blocks_for_intervals(&self, n_intervals: usize) -> Result<usize> {
        if n_intervals == 0 || !n_intervals.is_multiple_of(self.intervals_per_block()) {
            return Err(Error::Config(format!(
                "M_Rx = {} needs a positive multiple of {} Nyquist intervals per frame, got {n_intervals}",
                self.m_rx,
                self.intervals_per_block()
            )));
        }
        Ok(n_intervals * self.m_rx / self.q)
    }

    /// Samples per rail for a frame of `n_intervals` Nyquist intervals.
    pub fn samples_for_intervals(&self, n_intervals: usize) -> Result<usize> {
        Ok(self.blocks_for_intervals(n_intervals)? * self.q)
    }
}

/// Sign patterns of the positive-polarity rows and their bit labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignTable {
    params: ZxParams,
    signs: Vec<Vec<Sign>>,
    labels: Vec<Vec<u8>>,
    next_polarity: Vec<Sign>,
}

impl SignTable {
    pub fn params(&self) -> ZxParams {
        self.params
    }

    /// Sign pattern of row `i` for entering polarity `+1`.
    pub fn signs(&self, i: usize) -> &[Sign] {
        &self.signs[i]
    }

    pub fn label(&self, i: usize) -> &[u8] {
        &self.labels[i]
    }

    /// Polarity after emitting row `i` with entering polarity `+1`.
    pub fn next_polarity(&self, i: usize) -> Sign {
        self.next_polarity[i]
    }

    /// Row selected by a bit label, if the label is valid.
    pub fn row_for_label(&self, label: &[u8]) -> Option<usize> {
        self.labels.iter().position(|l| l.as_slice() == label)
    }

    /// Row index selected by the integer value of a label (MSB first).
    fn row_lookup(&self) -> Vec<usize> {
        let mut lut = vec![0; 1 << self.params.bits_per_block];
        for (row, label) in self.labels.iter().enumerate() {
            lut[label_value(label)] = row;
        }
        lut
    }
}

fn label_value(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Compiled-in sign table for `params`.
pub fn build_sign_tables(params: ZxParams) -> SignTable {
    fn collect<const Q: usize, const B: usize>(
        signs: &[[i8; Q]],
        labels: &[[u8; B]],
    ) -> (Vec<Vec<Sign>>, Vec<Vec<u8>>) {
        let s = signs
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&v| Sign::from_i8(v).expect("table signs are +-1"))
                    .collect()
            })
            .collect();
        let l = labels.iter().map(|r| r.to_vec()).collect();
        (s, l)
    }
    let (signs, labels) = match params.m_rx {
        3 => collect(&tables::SIGNS_MRX3, &tables::LABELS_MRX3),
        2 => collect(&tables::SIGNS_MRX2, &tables::LABELS_MRX2),
        _ => unreachable!("ZxParams only admits M_Rx in {{2, 3}}"),
    };
    let next_polarity = signs.iter().map(|r: &Vec<Sign>| r[params.q - 1]).collect();
    SignTable {
        params,
        signs,
        labels,
        next_polarity,
    }
}

/// Positive waveform coefficients, one row `g_i` per output pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet<T> {
    params: ZxParams,
    g: Vec<T>,
}

impl<T: Scalar> CoefficientSet<T> {
    /// Builds a set from its rows; every entry must be finite and strictly positive.
    pub fn new(params: ZxParams, rows: &[Vec<T>]) -> Result<Self> {
        if rows.len() != params.rows || rows.iter().any(|r| r.len() != params.q) {
            return Err(Error::Shape {
                expected: format!("{}x{}", params.rows, params.q),
                got: format!("{}x{}", rows.len(), rows.first().map_or(0, Vec::len)),
            });
        }
        Self::from_flat(params, rows.iter().flatten().copied().collect())
    }

    /// Builds a set from row-major entries.
    pub fn from_flat(params: ZxParams, g: Vec<T>) -> Result<Self> {
        if g.len() != params.m_coeff() {
            return Err(Error::Shape {
                expected: format!("{} coefficients", params.m_coeff()),
                got: g.len().to_string(),
            });
        }
        if let Some((k, v)) = g.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > T::zero())) {
            return Err(Error::Input(format!(
                "coefficient g[{},{}] = {v} is not strictly positive",
                k / params.q + 1,
                k % params.q + 1
            )));
        }
        Ok(Self { params, g })
    }

    /// Like [`CoefficientSet::new`], additionally enforcing `||G||_F^2 <= budget`.
    pub fn with_budget(params: ZxParams, rows: &[Vec<T>], budget: T) -> Result<Self> {
        let set = Self::new(params, rows)?;
        let n = set.norm_sq();
        if n > budget {
            return Err(Error::Infeasible(format!(
                "squared norm {n} exceeds energy budget {budget}"
            )));
        }
        Ok(set)
    }

    /// All entries equal to `value`.
    pub fn uniform(params: ZxParams, value: T) -> Result<Self> {
        Self::from_flat(params, vec![value; params.m_coeff()])
    }

    pub fn params(&self) -> ZxParams {
        self.params
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.g[i * self.params.q..(i + 1) * self.params.q]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.g[i * self.params.q + j]
    }

    pub fn as_flat(&self) -> &[T] {
        &self.g
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.g.chunks(self.params.q)
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> T {
        self.g.iter().map(|&v| v * v).sum()
    }

    /// Smallest entry, the distance of the weakest sample to the sign threshold.
    pub fn min_entry(&self) -> T {
        self.g.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn scaled(&self, alpha: T) -> Result<Self> {
        Self::from_flat(self.params, self.g.iter().map(|&v| v * alpha).collect())
    }

    pub fn cast<U: Scalar>(&self) -> CoefficientSet<U> {
        CoefficientSet {
            params: self.params,
            g: self.g.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Plain-text matrix: one row per line, space-separated decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{}", v.as_f64())).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the plain-text matrix format. Blank lines and `#` comments are
    /// skipped; the shape (4x3 or 8x4) determines `M_Rx`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<T>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map(T::lit).map_err(|e| Error::Parse {
                        line: lineno + 1,
                        msg: format!("{t:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<T>>>()?;
            rows.push(row);
        }
        let shape = (rows.len(), rows.first().map_or(0, Vec::len));
        let params = match shape {
            (4, 3) => ZxParams::new(3)?,
            (8, 4) => ZxParams::new(2)?,
            (r, c) => {
                return Err(Error::Shape {
                    expected: "4x3 (M_Rx = 3) or 8x4 (M_Rx = 2)".into(),
                    got: format!("{r}x{c}"),
                })
            }
        };
        Self::new(params, &rows)
    }
}

/// Published optimum for `M_Rx = 2`.
pub fn table4<T: Scalar>() -> CoefficientSet<T> {
    let rows: Vec<Vec<T>> = tables::TABLE4_MRX2
        .iter()
        .map(|r| r.iter().map(|&v| T::lit(v)).collect())
        .collect();
    CoefficientSet::new(ZxParams::new(2).expect("valid"), &rows).expect("published table is positive")
}

/// Published optimum for `M_Rx = 3`.
pub fn table5<T: Scalar>() -> CoefficientSet<T> {
    let rows: Vec<Vec<T>> = tables::TABLE5_MRX3
        .iter()
        .map(|r| r.iter().map(|&v| T::lit(v)).collect())
        .collect();
    CoefficientSet::new(ZxParams::new(3).expect("valid"), &rows).expect("published table is positive")
}

/// Published optimum for the given oversampling factor.
pub fn published_table<T: Scalar>(m_rx: usize) -> Result<CoefficientSet<T>> {
    match m_rx {
        2 => Ok(table4()),
        3 => Ok(table5()),
        _ => Err(Error::Config(format!(
            "no published coefficient table for M_Rx = {m_rx}"
        ))),
    }
}

/// Equivalent Moore machine of the mapping.
///
/// States `0..rows` are the positive-polarity outputs `1+ .. rows+`, states
/// `rows..2*rows` their negations `1- .. rows-`.
#[derive(Clone, Debug)]
pub struct MooreMachine<T> {
    params: ZxParams,
    transitions: Vec<Vec<usize>>,
    q_matrix: Matrix<T>,
    gamma: Matrix<T>,
    pi: Vec<T>,
    probability: T,
}

impl<T: Scalar> MooreMachine<T> {
    /// Machine for arbitrary (not necessarily positive) row-major outputs.
    /// Transitions depend only on the sign table, never on the values.
    pub(crate) fn from_outputs(table: &SignTable, g: &[T]) -> Self {
        let params = table.params;
        let (rows, q, ns) = (params.rows, params.q, params.n_states());
        let state_polarity = |s: usize| if s < rows { Sign::Plus } else { Sign::Minus };
        let transitions: Vec<Vec<usize>> = (0..ns)
            .map(|s| {
                let after = state_polarity(s) * table.next_polarity(s % rows);
                let offset = if after == Sign::Plus { 0 } else { rows };
                (0..rows).map(|j| j + offset).collect()
            })
            .collect();
        let probability = T::one() / T::from_usize_lossy(rows);
        let mut q_matrix = Matrix::zeros(ns, ns);
        for (s, next) in transitions.iter().enumerate() {
            for &t in next {
                q_matrix[(s, t)] += probability;
            }
        }
        let gamma = Matrix::from_fn(ns, q, |s, j| {
            let i = s % rows;
            (state_polarity(s) * table.signs(i)[j]).value::<T>() * g[i * q + j]
        });
        let pi = vec![T::one() / T::from_usize_lossy(ns); ns];
        Self {
            params,
            transitions,
            q_matrix,
            gamma,
            pi,
            probability,
        }
    }

    pub fn params(&self) -> ZxParams {
        self.params
    }

    pub fn n_states(&self) -> usize {
        self.params.n_states()
    }

    /// Next state from `state` when the block carries the label of row `label_row`.
    pub fn next_state(&self, state: usize, label_row: usize) -> usize {
        self.transitions[state][label_row]
    }

    /// Row-stochastic transition-probability matrix `Q`.
    pub fn q_matrix(&self) -> &Matrix<T> {
        &self.q_matrix
    }

    /// Output matrix `Gamma` (`n_states x q`), signed coefficient rows.
    pub fn gamma(&self) -> &Matrix<T> {
        &self.gamma
    }

    /// Stationary distribution (uniform).
    pub fn pi(&self) -> &[T] {
        &self.pi
    }

    /// Probability of every valid transition.
    pub fn transition_probability(&self) -> T {
        self.probability
    }

    /// Human-readable state name, e.g. `3+` or `1-`.
    pub fn state_name(&self, state: usize) -> String {
        let rows = self.params.rows;
        format!("{}{}", state % rows + 1, if state < rows { '+' } else { '-' })
    }
}

/// Moore machine for a coefficient set.
pub fn build_machine<T: Scalar>(params: ZxParams, coeffs: &CoefficientSet<T>) -> Result<MooreMachine<T>> {
    if coeffs.params() != params {
        return Err(Error::Shape {
            expected: format!("coefficients for M_Rx = {}", params.m_rx),
            got: format!("coefficients for M_Rx = {}", coeffs.params().m_rx),
        });
    }
    Ok(MooreMachine::from_outputs(&build_sign_tables(params), coeffs.as_flat()))
}

/// One mapped rail.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedFrame<T> {
    /// Polarity-signed coefficient per oversampled sample.
    pub coeffs: Vec<T>,
    /// Emitted sign pattern of each block.
    pub sign_codewords: Vec<Vec<Sign>>,
    /// Table row selected by each block.
    pub rows: Vec<usize>,
    /// Pilot polarity preceding the first block (not part of `coeffs`).
    pub rho_b: Sign,
    pub bit_count: usize,
}

impl<T: Scalar> EncodedFrame<T> {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Sign of every emitted sample.
    pub fn signs(&self) -> Vec<Sign> {
        self.sign_codewords.iter().flatten().copied().collect()
    }
}

fn check_bits(bits: &[u8], per_block: usize) -> Result<()> {
    if !bits.len().is_multiple_of(per_block) {
        return Err(Error::Input(format!(
            "bit stream of length {} is not a multiple of the {per_block}-bit block size",
            bits.len()
        )));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::Input(format!("bit values must be 0 or 1, got {b}")));
    }
    Ok(())
}

/// Reusable encoder holding the sign table and label lookup.
#[derive(Clone, Debug)]
pub struct Encoder {
    table: SignTable,
    lut: Vec<usize>,
}

impl Encoder {
    pub fn new(params: ZxParams) -> Self {
        let table = build_sign_tables(params);
        let lut = table.row_lookup();
        Self { table, lut }
    }

    pub fn params(&self) -> ZxParams {
        self.table.params
    }

    pub fn table(&self) -> &SignTable {
        &self.table
    }

    /// Maps a real rail.
    pub fn encode<T: Scalar>(&self, bits: &[u8], rho_b: Sign, coeffs: &CoefficientSet<T>) -> Result<EncodedFrame<T>> {
        let params = self.params();
        if coeffs.params() != params {
            return Err(Error::Shape {
                expected: format!("coefficients for M_Rx = {}", params.m_rx),
                got: format!("coefficients for M_Rx = {}", coeffs.params().m_rx),
            });
        }
        let k = params.bits_per_block;
        check_bits(bits, k)?;
        let n_blocks = bits.len() / k;
        let mut out = Vec::with_capacity(n_blocks * params.q);
        let mut codewords = Vec::with_capacity(n_blocks);
        let mut rows = Vec::with_capacity(n_blocks);
        let mut rho = rho_b;
        for block in bits.chunks_exact(k) {
            let row = self.lut[label_value(block)];
            let pattern: Vec<Sign> = self.table.signs(row).iter().map(|&s| rho * s).collect();
            out.extend(pattern.iter().zip(coeffs.row(row)).map(|(s, &g)| s.value::<T>() * g));
            rho = pattern[params.q - 1];
            codewords.push(pattern);
            rows.push(row);
        }
        Ok(EncodedFrame {
            coeffs: out,
            sign_codewords: codewords,
            rows,
            rho_b,
            bit_count: bits.len(),
        })
    }

    /// Maps a complex frame. Blocks alternate between rails: even-indexed
    /// blocks go to the real rail, odd-indexed ones to the imaginary rail.
    pub fn encode_complex<T: Scalar>(
        &self,
        bits: &[u8],
        rho_b: ComplexPilot,
        coeffs: &CoefficientSet<T>,
    ) -> Result<ComplexFrame<T>> {
        let k = self.params().bits_per_block;
        check_bits(bits, k)?;
        let (re_bits, im_bits) = split_rails(bits, k);
        Ok(ComplexFrame {
            re: self.encode(&re_bits, rho_b.re, coeffs)?,
            im: self.encode(&im_bits, rho_b.im, coeffs)?,
        })
    }
}

/// Splits a bit stream into real/imaginary rail streams, alternating by block.
pub fn split_rails(bits: &[u8], bits_per_block: usize) -> (Vec<u8>, Vec<u8>) {
    let mut re = Vec::with_capacity(bits.len() / 2 + bits_per_block);
    let mut im = Vec::with_capacity(bits.len() / 2 + bits_per_block);
    for (i, block) in bits.chunks(bits_per_block).enumerate() {
        if i % 2 == 0 {
            re.extend_from_slice(block);
        } else {
            im.extend_from_slice(block);
        }
    }
    (re, im)
}

/// Inverse of [`split_rails`].
pub fn merge_rails(re: &[u8], im: &[u8], bits_per_block: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(re.len() + im.len());
    let mut re_blocks = re.chunks(bits_per_block);
    let mut im_blocks = im.chunks(bits_per_block);
    loop {
        match (re_blocks.next(), im_blocks.next()) {
            (None, None) => break,
            (a, b) => {
                if let Some(a) = a {
                    out.extend_from_slice(a);
                }
                if let Some(b) = b {
                    out.extend_from_slice(b);
                }
            }
        }
    }
    out
}

/// Maps a real rail of bits with a one-off [`Encoder`].
pub fn encode<T: Scalar>(bits: &[u8], rho_b: Sign, coeffs: &CoefficientSet<T>) -> Result<EncodedFrame<T>> {
    Encoder::new(coeffs.params()).encode(bits, rho_b, coeffs)
}

/// Pilot polarities of the real and imaginary rails.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexPilot {
    pub re: Sign,
    pub im: Sign,
}

impl Default for ComplexPilot {
    fn default() -> Self {
        Self {
            re: Sign::Plus,
            im: Sign::Plus,
        }
    }
}

/// Real and imaginary rails of one user's frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexFrame<T> {
    pub re: EncodedFrame<T>,
    pub im: EncodedFrame<T>,
}

impl<T: Scalar> ComplexFrame<T> {
    pub fn len(&self) -> usize {
        self.re.len().max(self.im.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One valid codeword for a given entering polarity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodebookEntry {
    pub row: usize,
    pub label: Vec<u8>,
    pub codeword: Vec<Sign>,
}

/// All valid sign codewords for one entering polarity, in table row order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codebook {
    pub entering: Sign,
    pub entries: Vec<CodebookEntry>,
}

/// Valid sign codewords for `entering_polarity`, paired with their labels.
pub fn sign_codebook(params: ZxParams, entering_polarity: Sign) -> Codebook {
    let table = build_sign_tables(params);
    let entries = (0..params.rows)
        .map(|row| CodebookEntry {
            row,
            label: table.label(row).to_vec(),
            codeword: table.signs(row).iter().map(|&s| entering_polarity * s).collect(),
        })
        .collect();
    Codebook {
        entering: entering_polarity,
        entries,
    }
}
