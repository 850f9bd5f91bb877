//! Analytic second-order statistics of a mapped sequence.
//!
//! The Moore machine gives the block correlation `R^k = Gamma^T Pi Q^|k| Gamma`
//! in closed form; the per-sample autocorrelation `c_l` follows by averaging
//! over the sample position inside a block. With a unit-energy rectangular
//! pulse of width `T/M_Rx` the transmit PSD is
//!
//! ```text
//! S(f) = (M_Rx/T) (c_0 + 2 sum_{l>=1} c_l cos(2 pi l f T / M_Rx)) * (T/M_Rx) sinc^2(f T / M_Rx)
//! ```
//!
//! and the power containment factor is the fraction of a reference power
//! that falls inside `[-f_c, f_c]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::zxmap::MooreMachine;

/// Block correlation `Gamma^T Pi Q^|kappa| Gamma` (`q x q`).
pub fn block_correlation<T: Scalar>(machine: &MooreMachine<T>, kappa: i64) -> Matrix<T> {
    let mut y = machine.gamma().clone();
    for _ in 0..kappa.unsigned_abs() {
        y = machine.q_matrix().matmul(&y);
    }
    machine.gamma().transpose().matmul(&y.scale_rows(machine.pi()))
}

/// Iterates `R^0, R^1, ...` without recomputing matrix powers.
struct BlockCorrelations<'a, T> {
    machine: &'a MooreMachine<T>,
    gamma_t: Matrix<T>,
    y: Matrix<T>,
}

impl<'a, T: Scalar> BlockCorrelations<'a, T> {
    fn new(machine: &'a MooreMachine<T>) -> Self {
        Self {
            machine,
            gamma_t: machine.gamma().transpose(),
            y: machine.gamma().clone(),
        }
    }
}

impl<T: Scalar> Iterator for BlockCorrelations<'_, T> {
    type Item = Matrix<T>;
    fn next(&mut self) -> Option<Matrix<T>> {
        let r = self.gamma_t.matmul(&self.y.scale_rows(self.machine.pi()));
        self.y = self.machine.q_matrix().matmul(&self.y);
        Some(r)
    }
}

/// Lag-`kq + l` average autocorrelation from the block correlations
/// `R^k` and `R^{k+1}`.
fn lags_from_blocks<T: Scalar>(rk: &Matrix<T>, rk1: &Matrix<T>, q: usize, out: &mut Vec<T>) {
    let inv_q = T::one() / T::from_usize_lossy(q);
    for l in 0..q {
        let mut acc = T::zero();
        for i in 0..q - l {
            acc += rk[(i, l + i)];
        }
        for i in q - l..q {
            acc += rk1[(i, l + i - q)];
        }
        out.push(acc * inv_q);
    }
}

/// Largest number of blocks examined by [`autocorrelation_adaptive`].
pub const MAX_LAG_BLOCKS: usize = 64;
/// Default truncation threshold, relative to the zero-lag block correlation.
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-10;

/// Even autocorrelation sequence `c_0 .. c_{L}` of the sample stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Autocorrelation<T> {
    m_rx: usize,
    q: usize,
    values: Vec<T>,
    truncation_eps: T,
}

impl<T: Scalar> Autocorrelation<T> {
    /// Builds from explicit lag values (`values[0]` is `c_0`).
    pub fn from_values(m_rx: usize, q: usize, values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("autocorrelation needs at least the zero lag".into()));
        }
        Ok(Self {
            m_rx,
            q,
            values,
            truncation_eps: T::zero(),
        })
    }

    pub fn m_rx(&self) -> usize {
        self.m_rx
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Stored lags `0..=max_lag`.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    pub fn truncation_eps(&self) -> T {
        self.truncation_eps
    }

    /// `c_l` for any integer lag; zero beyond the stored range.
    pub fn at(&self, lag: i64) -> T {
        self.values
            .get(lag.unsigned_abs() as usize)
            .copied()
            .unwrap_or_else(T::zero)
    }

    /// Mean power per sample.
    pub fn c0(&self) -> T {
        self.values[0]
    }

    /// Sequence PSD `S_x(f)` (per unit frequency, `f` in units of `1/T`).
    pub fn sequence_psd(&self, f: T, symbol_period: T) -> T {
        let m = T::from_usize_lossy(self.m_rx);
        let theta = T::TAU() * f * symbol_period / m;
        m / symbol_period * cosine_series(&self.values, theta)
    }
}

/// `c_0 + 2 sum_{l>=1} c_l cos(l theta)` by Clenshaw's recurrence.
pub fn cosine_series<T: Scalar>(c: &[T], theta: T) -> T {
    let two_cos = T::lit(2.0) * theta.cos();
    let (mut b1, mut b2) = (T::zero(), T::zero());
    for &ck in c.iter().skip(1).rev() {
        let b0 = ck + two_cos * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    // sum_{l>=1} c_l cos(l theta) = b1 cos(theta) - b2
    c[0] + T::lit(2.0) * (b1 * theta.cos() - b2)
}

/// Autocorrelation for lags `0..=max_lag` (requires `max_lag >= q`).
pub fn autocorrelation<T: Scalar>(machine: &MooreMachine<T>, max_lag: usize) -> Result<Autocorrelation<T>> {
    let q = machine.params().q();
    if max_lag < q {
        return Err(Error::Input(format!(
            "max_lag {max_lag} must be at least the block length {q}"
        )));
    }
    let blocks = max_lag / q + 1;
    let mut values = Vec::with_capacity((blocks + 1) * q);
    let mut iter = BlockCorrelations::new(machine);
    let mut prev = iter.next().expect("infinite iterator");
    for _ in 0..blocks {
        let next = iter.next().expect("infinite iterator");
        lags_from_blocks(&prev, &next, q, &mut values);
        prev = next;
    }
    values.truncate(max_lag + 1);
    Ok(Autocorrelation {
        m_rx: machine.params().m_rx(),
        q,
        values,
        truncation_eps: T::zero(),
    })
}

/// Autocorrelation truncated at the first block `K` with
/// `max |R^K| < eps * max |R^0|`, capped at [`MAX_LAG_BLOCKS`] blocks.
/// Lags `0 .. K q - 1` are kept.
pub fn autocorrelation_adaptive<T: Scalar>(machine: &MooreMachine<T>, eps: T) -> Autocorrelation<T> {
    let q = machine.params().q();
    let mut iter = BlockCorrelations::new(machine);
    let r0 = iter.next().expect("infinite iterator");
    let threshold = eps * r0.max_abs();
    let mut values = Vec::new();
    let mut prev = r0;
    for _ in 0..MAX_LAG_BLOCKS {
        let next = iter.next().expect("infinite iterator");
        lags_from_blocks(&prev, &next, q, &mut values);
        if next.max_abs() < threshold {
            break;
        }
        prev = next;
    }
    Autocorrelation {
        m_rx: machine.params().m_rx(),
        q,
        values,
        truncation_eps: eps,
    }
}

/// Unit-energy rectangular pulse of width `T / M_Rx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec<T> {
    pub m_rx: usize,
    pub symbol_period: T,
}

impl<T: Scalar> FilterSpec<T> {
    pub fn rectangular(m_rx: usize, symbol_period: T) -> Self {
        Self { m_rx, symbol_period }
    }

    /// Pulse width `T / M_Rx`.
    pub fn width(&self) -> T {
        self.symbol_period / T::from_usize_lossy(self.m_rx)
    }

    /// `|G_Tx(f)|^2 = (T/M_Rx) sinc^2(f T / M_Rx)`.
    pub fn power_response(&self, f: T) -> T {
        let w = self.width();
        let s = (f * w).sinc();
        w * s * s
    }
}

/// Analytic PSD sampled on a symmetric grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdCurve<T> {
    /// Frequencies in units of `1/T`.
    pub freqs: Vec<T>,
    pub values: Vec<T>,
    /// Total power `P = c_0 M_Rx / T`.
    pub total_power: T,
}

impl<T: Scalar> PsdCurve<T> {
    /// `10 log10(S / S_peak)`.
    pub fn normalized_db(&self) -> Vec<T> {
        let peak = self.values.iter().copied().fold(T::zero(), T::max);
        self.values
            .iter()
            .map(|&v| T::lit(10.0) * (v.max(T::min_positive_value()) / peak).log10())
            .collect()
    }
}

/// Evenly spaced grid over `[-f_max, f_max]` with `points` samples.
pub fn symmetric_grid<T: Scalar>(f_max: T, points: usize) -> Vec<T> {
    assert!(points >= 2);
    let step = T::lit(2.0) * f_max / T::from_usize_lossy(points - 1);
    (0..points)
        .map(|i| {
            // mirror the upper half so the grid is exactly symmetric
            let k = i.min(points - 1 - i);
            let v = -f_max + step * T::from_usize_lossy(k);
            if i > (points - 1) / 2 {
                -v
            } else {
                v
            }
        })
        .collect()
}

fn check_symmetric<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Input("empty frequency grid".into()));
    }
    let scale = grid.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::one());
    let tol = scale * T::lit(1e-9);
    for (a, b) in grid.iter().zip(grid.iter().rev()) {
        if (*a + *b).abs() > tol {
            return Err(Error::Input(format!(
                "frequency grid is not symmetric about 0 ({a} vs {b})"
            )));
        }
    }
    Ok(())
}

/// `S(f) = S_x(f) |G_Tx(f)|^2` on `freq_grid`.
pub fn analytic_psd<T: Scalar>(
    autocorr: &Autocorrelation<T>,
    filter: &FilterSpec<T>,
    freq_grid: &[T],
) -> Result<PsdCurve<T>> {
    check_symmetric(freq_grid)?;
    let values = freq_grid.iter().map(|&f| psd_at(autocorr, filter, f)).collect();
    Ok(PsdCurve {
        freqs: freq_grid.to_vec(),
        values,
        total_power: total_power(autocorr, filter),
    })
}

#[inline]
pub fn psd_at<T: Scalar>(autocorr: &Autocorrelation<T>, filter: &FilterSpec<T>, f: T) -> T {
    autocorr.sequence_psd(f, filter.symbol_period) * filter.power_response(f)
}

/// Closed-form total power `c_0 M_Rx / T`; the rectangular pulse's
/// autocorrelation vanishes at every nonzero multiple of `T / M_Rx`.
pub fn total_power<T: Scalar>(autocorr: &Autocorrelation<T>, filter: &FilterSpec<T>) -> T {
    autocorr.c0() * T::from_usize_lossy(filter.m_rx) / filter.symbol_period
}

/// Composite Simpson rule over `[a, b]` with `intervals` (rounded up to even) panels.
pub fn simpson<T: Scalar>(f: impl Fn(T) -> T, a: T, b: T, intervals: usize) -> T {
    let n = (intervals.max(2) + 1) & !1;
    let h = (b - a) / T::from_usize_lossy(n);
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        acc += w * f(a + h * T::from_usize_lossy(i));
    }
    acc * h / T::lit(3.0)
}

/// Power the containment factor is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerReference {
    /// `P = c_0 M_Rx / T`, the power over the whole real line.
    ClosedForm,
    /// Power inside `|f| <= multiple * M_Rx / T`, integrated numerically.
    Band { multiple: f64 },
}

impl Default for PowerReference {
    fn default() -> Self {
        PowerReference::Band { multiple: 2.0 }
    }
}

/// Quadrature settings for [`containment`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentOptions {
    /// Simpson panels over `[-f_c, f_c]`; the reference band uses the same step.
    pub intervals: usize,
    pub reference: PowerReference,
}

impl Default for ContainmentOptions {
    fn default() -> Self {
        Self {
            intervals: 4096,
            reference: PowerReference::default(),
        }
    }
}

impl ContainmentOptions {
    /// Half-width of the reference band in units of `1/T`, if any.
    pub fn band_edge<T: Scalar>(&self, filter: &FilterSpec<T>) -> Option<T> {
        match self.reference {
            PowerReference::ClosedForm => None,
            PowerReference::Band { multiple } => {
                Some(T::lit(multiple) * T::from_usize_lossy(filter.m_rx) / filter.symbol_period)
            }
        }
    }

    fn band_intervals<T: Scalar>(&self, f_c: T, edge: T) -> usize {
        let ratio = (edge / f_c).as_f64();
        (self.intervals as f64 * ratio).ceil() as usize
    }
}

/// In-band power and the containment factor derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Containment<T> {
    pub eta: T,
    pub inband_power: T,
    /// Power the in-band power was divided by.
    pub reference_power: T,
    /// Closed-form total power.
    pub total_power: T,
}

/// `eta = (1/P_ref) * integral_{-f_c}^{f_c} S(f) df`.
///
/// When the reference is a band narrower than `f_c`, the in-band integral
/// is clipped to that band so that `eta <= 1`.
pub fn containment<T: Scalar>(
    autocorr: &Autocorrelation<T>,
    filter: &FilterSpec<T>,
    f_c: T,
    opts: &ContainmentOptions,
) -> Result<Containment<T>> {
    if !(f_c > T::zero()) || !f_c.is_finite() {
        return Err(Error::Input(format!("critical frequency must be positive, got {f_c}")));
    }
    let s = |f: T| psd_at(autocorr, filter, f);
    let total = total_power(autocorr, filter);
    let (inband, reference) = match opts.band_edge(filter) {
        None => (simpson(s, -f_c, f_c, opts.intervals), total),
        Some(edge) => {
            let p = simpson(s, -edge, edge, opts.band_intervals(f_c, edge));
            if f_c >= edge {
                (p, p)
            } else {
                (simpson(s, -f_c, f_c, opts.intervals), p)
            }
        }
    };
    Ok(Containment {
        eta: inband / reference,
        inband_power: inband,
        reference_power: reference,
        total_power: total,
    })
}

/// Precomputed linear functionals for the containment factor of any
/// autocorrelation up to a fixed lag count: `inband = sum_l w_l c_l`,
/// `reference = sum_l r_l c_l`. Uses the same quadrature as [`containment`].
#[derive(Clone, Debug)]
pub struct ContainmentKernel<T> {
    inband: Vec<T>,
    reference: Vec<T>,
}

impl<T: Scalar> ContainmentKernel<T> {
    pub fn new(filter: &FilterSpec<T>, f_c: T, opts: &ContainmentOptions, n_lags: usize) -> Result<Self> {
        if !(f_c > T::zero()) {
            return Err(Error::Input(format!("critical frequency must be positive, got {f_c}")));
        }
        let m = T::from_usize_lossy(filter.m_rx);
        let tp = filter.symbol_period;
        let weights = |a: T, intervals: usize| -> Vec<T> {
            (0..n_lags)
                .map(|l| {
                    let lf = T::from_usize_lossy(l);
                    let factor = if l == 0 { T::one() } else { T::lit(2.0) };
                    factor
                        * simpson(
                            |f: T| m / tp * filter.power_response(f) * (T::TAU() * lf * f * tp / m).cos(),
                            -a,
                            a,
                            intervals,
                        )
                })
                .collect()
        };
        let (upper, reference) = match opts.band_edge(filter) {
            None => {
                let mut r = vec![T::zero(); n_lags];
                r[0] = m / tp;
                (f_c, r)
            }
            Some(edge) => {
                let r = weights(edge, opts.band_intervals(f_c, edge));
                if f_c >= edge {
                    return Ok(Self {
                        inband: r.clone(),
                        reference: r,
                    });
                }
                (f_c, r)
            }
        };
        Ok(Self {
            inband: weights(upper, opts.intervals),
            reference,
        })
    }

    pub fn inband_weights(&self) -> &[T] {
        &self.inband
    }

    pub fn reference_weights(&self) -> &[T] {
        &self.reference
    }

    pub fn eta(&self, c: &[T]) -> T {
        let dot = |w: &[T]| w.iter().zip(c).map(|(&a, &b)| a * b).sum::<T>();
        dot(&self.inband) / dot(&self.reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zxmap::{build_machine, published_table, table5, CoefficientSet, Encoder, Sign, ZxParams};
    use rand::{Rng, SeedableRng};

    fn machine(m_rx: usize) -> MooreMachine<f64> {
        let g = published_table::<f64>(m_rx).unwrap();
        build_machine(g.params(), &g).unwrap()
    }

    #[test]
    fn zero_lag_trace_is_quarter_norm() {
        let g = table5::<f64>();
        let scale = 1.0 / g.norm_sq().sqrt();
        let g = g.scaled(scale).unwrap();
        let m = build_machine(g.params(), &g).unwrap();
        let r0 = block_correlation(&m, 0);
        assert!((r0.trace() - 0.25).abs() < 1e-12);
        let a = autocorrelation(&m, 12).unwrap();
        assert!((a.c0() - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn block_correlation_vanishes_at_large_lag() {
        for m_rx in [2, 3] {
            assert!(block_correlation(&machine(m_rx), 200).max_abs() < 1e-12);
        }
    }

    #[test]
    fn constant_magnitude_gives_c0_squared() {
        let p = ZxParams::new(2).unwrap();
        let g = CoefficientSet::uniform(p, 0.3f64).unwrap();
        let a = autocorrelation(&build_machine(p, &g).unwrap(), 8).unwrap();
        assert!((a.c0() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn adaptive_matches_fixed_truncation() {
        for m_rx in [2, 3] {
            let m = machine(m_rx);
            let a = autocorrelation_adaptive(&m, DEFAULT_TRUNCATION_EPS);
            let b = autocorrelation(&m, a.max_lag()).unwrap();
            assert_eq!(a.values().len(), b.values().len());
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-15);
            }
            assert_eq!(a.values().len() % m.params().q(), 0);
            // the tail below the threshold is negligible
            let c = autocorrelation(&m, a.max_lag() + 5 * m.params().q()).unwrap();
            let tail = c.values()[a.values().len()..]
                .iter()
                .fold(0.0f64, |s, v| s.max(v.abs()));
            assert!(tail < 1e-9 * a.c0(), "{tail}");
        }
    }

    #[test]
    fn cosine_series_matches_direct_sum() {
        let c = [0.5, 0.2, -0.1, 0.05, 0.01];
        for theta in [0.0, 0.3, 1.7, 3.1] {
            let direct: f64 = c[0] + 2.0 * (1..c.len()).map(|l| c[l] * (l as f64 * theta).cos()).sum::<f64>();
            assert!((cosine_series(&c, theta) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn white_sequence_psd_is_sinc_squared() {
        let a = Autocorrelation::from_values(3, 3, vec![0.7f64]).unwrap();
        let filt = FilterSpec::rectangular(3, 1.0);
        let grid = symmetric_grid(3.0, 601);
        let psd = analytic_psd(&a, &filt, &grid).unwrap();
        for (f, s) in psd.freqs.iter().zip(&psd.values) {
            let expect: f64 = 0.7 * (f / 3.0).sinc().powi(2);
            assert!((s - expect).abs() < 1e-14);
        }
        assert!((psd.total_power - 2.1).abs() < 1e-15);
    }

    #[test]
    fn psd_is_even_and_nonnegative() {
        for m_rx in [2, 3] {
            let a = autocorrelation_adaptive(&machine(m_rx), DEFAULT_TRUNCATION_EPS);
            let grid = symmetric_grid(3.0, 8192);
            let psd = analytic_psd(&a, &FilterSpec::rectangular(m_rx, 1.0), &grid).unwrap();
            let n = psd.values.len();
            for i in 0..n {
                assert!(psd.values[i] >= -1e-12);
                assert!((psd.values[i] - psd.values[n - 1 - i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn asymmetric_grid_is_rejected() {
        let a = Autocorrelation::from_values(3, 3, vec![1.0]).unwrap();
        let r = analytic_psd(&a, &FilterSpec::rectangular(3, 1.0), &[-1.0, 0.0, 2.0]);
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn containment_rejects_nonpositive_fc() {
        let a = Autocorrelation::from_values(3, 3, vec![1.0]).unwrap();
        let f = FilterSpec::rectangular(3, 1.0);
        assert!(containment(&a, &f, 0.0, &ContainmentOptions::default()).is_err());
        assert!(containment(&a, &f, -1.0, &ContainmentOptions::default()).is_err());
    }

    #[test]
    fn wide_band_containment_tends_to_one() {
        let a = autocorrelation_adaptive(&machine(3), DEFAULT_TRUNCATION_EPS);
        let f = FilterSpec::rectangular(3, 1.0);
        let closed = ContainmentOptions {
            intervals: 40_000,
            reference: PowerReference::ClosedForm,
        };
        let eta = containment(&a, &f, 40.0, &closed).unwrap().eta;
        assert!((eta - 1.0).abs() < 5e-3, "{eta}");
        let band = containment(&a, &f, 40.0, &ContainmentOptions::default()).unwrap().eta;
        assert!((band - 1.0).abs() < 1e-12, "{band}");
    }

    #[test]
    fn kernel_agrees_with_direct_quadrature() {
        for m_rx in [2, 3] {
            let a = autocorrelation_adaptive(&machine(m_rx), DEFAULT_TRUNCATION_EPS);
            let f = FilterSpec::rectangular(m_rx, 1.0);
            for opts in [
                ContainmentOptions::default(),
                ContainmentOptions {
                    intervals: 2048,
                    reference: PowerReference::ClosedForm,
                },
            ] {
                let direct = containment(&a, &f, 0.65, &opts).unwrap().eta;
                let k = ContainmentKernel::new(&f, 0.65, &opts, a.values().len()).unwrap();
                assert!((k.eta(a.values()) - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn analytic_matches_empirical_autocorrelation_quick() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = table5::<f64>();
        let enc = Encoder::new(g.params());
        let bits: Vec<u8> = (0..200_000).map(|_| rng.random_range(0..2u8)).collect();
        let s = enc.encode(&bits, Sign::Plus, &g).unwrap().coeffs;
        let a = autocorrelation(&build_machine(g.params(), &g).unwrap(), 12).unwrap();
        for lag in 0..=12 {
            let n = s.len() - lag;
            let emp: f64 = (0..n).map(|i| s[i] * s[i + lag]).sum::<f64>() / n as f64;
            assert!(
                (emp - a.values()[lag]).abs() < 3e-3,
                "lag {lag}: {emp} vs {}",
                a.values()[lag]
            );
        }
    }

    fn random_positive_set(params: ZxParams, seed: u64) -> CoefficientSet<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let flat = (0..params.m_coeff()).map(|_| rng.random_range(0.05..1.0)).collect();
        CoefficientSet::from_flat(params, flat).unwrap()
    }

    #[test]
    fn random_sets_match_empirical_autocorrelation() {
        for (seed, m_rx) in [(11, 3), (12, 2), (13, 3), (14, 2)] {
            let p = ZxParams::new(m_rx).unwrap();
            let g = random_positive_set(p, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let blocks = 1_000_000usize.div_ceil(p.q());
            let bits: Vec<u8> = (0..blocks * p.bits_per_block())
                .map(|_| rng.random_range(0..2u8))
                .collect();
            let s = Encoder::new(p).encode(&bits, Sign::Plus, &g).unwrap().coeffs;
            let a = autocorrelation_adaptive(&build_machine(p, &g).unwrap(), DEFAULT_TRUNCATION_EPS);
            // the oracle tolerance is absolute, so compare at unit norm
            let unit = 1.0 / g.norm_sq();
            for lag in 0..=4 * p.q() {
                let n = s.len() - lag;
                let emp: f64 = (0..n).map(|i| s[i] * s[i + lag]).sum::<f64>() / n as f64;
                let err = (emp - a.at(lag as i64)).abs() * unit;
                assert!(err < 1e-3, "m_rx {m_rx} seed {seed} lag {lag}: {err}");
            }
        }
    }

    #[test]
    fn halving_the_grid_step_barely_moves_eta() {
        for m_rx in [2, 3] {
            let a = autocorrelation_adaptive(&machine(m_rx), DEFAULT_TRUNCATION_EPS);
            let filter = FilterSpec::rectangular(m_rx, 1.0);
            let eta = |intervals| {
                let opts = ContainmentOptions {
                    intervals,
                    ..ContainmentOptions::default()
                };
                containment(&a, &filter, 0.65, &opts).unwrap().eta
            };
            assert!((eta(4096) - eta(8192)).abs() < 1e-4);
        }
    }

    #[test]
    fn wide_band_power_matches_closed_form() {
        for m_rx in [2, 3] {
            let a = autocorrelation_adaptive(&machine(m_rx), DEFAULT_TRUNCATION_EPS);
            let filter = FilterSpec::rectangular(m_rx, 1.0);
            let numeric = simpson(|f| psd_at(&a, &filter, f), -400.0, 400.0, 800_000);
            let closed = total_power(&a, &filter);
            assert!((numeric - closed).abs() < 5e-3 * closed, "{numeric} vs {closed}");
        }
    }

    proptest::proptest! {
        #[test]
        fn scaling_g_scales_power_and_keeps_eta(alpha in 0.05f64..20.0, seed in 0u64..1000, m3 in proptest::bool::ANY) {
            let p = ZxParams::new(if m3 { 3 } else { 2 }).unwrap();
            let g = random_positive_set(p, seed);
            let h = g.scaled(alpha).unwrap();
            let a = autocorrelation_adaptive(&build_machine(p, &g).unwrap(), DEFAULT_TRUNCATION_EPS);
            let b = autocorrelation_adaptive(&build_machine(p, &h).unwrap(), DEFAULT_TRUNCATION_EPS);
            let a2 = alpha * alpha;
            proptest::prop_assert_eq!(a.values().len(), b.values().len());
            for (x, y) in a.values().iter().zip(b.values()) {
                proptest::prop_assert!((y - a2 * x).abs() <= 1e-12 * a2.max(1.0) * a.c0());
            }
            let filter = FilterSpec::rectangular(p.m_rx(), 1.0);
            for f in [0.0, 0.3, 0.65, 1.7] {
                let (s, t) = (psd_at(&a, &filter, f), psd_at(&b, &filter, f));
                proptest::prop_assert!((t - a2 * s).abs() <= 1e-12 * a2 * s.abs().max(a.c0()));
            }
            let (pa, pb) = (total_power(&a, &filter), total_power(&b, &filter));
            proptest::prop_assert!((pb - a2 * pa).abs() <= 1e-12 * a2 * pa);
            let opts = ContainmentOptions::default();
            let (ea, eb) = (containment(&a, &filter, 0.65, &opts).unwrap().eta, containment(&b, &filter, 0.65, &opts).unwrap().eta);
            proptest::prop_assert!((ea - eb).abs() < 1e-12, "{} vs {}", ea, eb);
        }
    }
}
