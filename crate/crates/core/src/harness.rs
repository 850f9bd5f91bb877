//! Monte-Carlo link simulation and spectrum estimation.
//!
//! Every frame gets its own RNG derived from `(master seed, stream, frame
//! index)`, and frames are processed in fixed-size batches, so results do
//! not depend on thread count or scheduling.

use std::io::Write;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::detector::{Detector, PolarityChaining};
use crate::error::{Error, Result};
use crate::mimosim::{energy_scale, generate_channel, snr_to_n0, transmit_frame, NoiseModel, NoiseSpec};
use crate::optimizer::{evaluate, DesignProblem};
use crate::scalar::Scalar;
use crate::spectrum::{
    self, autocorrelation_adaptive, Containment, ContainmentOptions, FilterSpec, DEFAULT_TRUNCATION_EPS,
};
use crate::zxmap::{build_machine, CoefficientSet, ComplexFrame, ComplexPilot, Encoder, Sign, ZxParams};

/// Frames simulated per deterministic batch.
pub const BATCH_FRAMES: usize = 512;

/// RNG for work item `index` of `stream`.
pub fn item_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&stream.to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    seed[24..].copy_from_slice(b"tizx-rng");
    ChaCha8Rng::from_seed(seed)
}

fn random_bits<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

/// Frame geometry for `n_intervals` Nyquist intervals per rail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FrameGeometry {
    pub n_intervals: usize,
    pub blocks_per_rail: usize,
    /// Samples per rail, `N_tot`.
    pub samples_per_rail: usize,
    pub bits_per_rail: usize,
    /// Bits carried by both rails of one user.
    pub bits_per_user: usize,
}

impl FrameGeometry {
    pub fn new(params: ZxParams, n_intervals: usize) -> Result<Self> {
        if n_intervals == 0 {
            return Err(Error::Config("frame needs at least one Nyquist interval".into()));
        }
        let blocks = params.blocks_for_intervals(n_intervals)?;
        let bits_per_rail = blocks * params.bits_per_block();
        Ok(Self {
            n_intervals,
            blocks_per_rail: blocks,
            samples_per_rail: params.samples_for_intervals(n_intervals)?,
            bits_per_rail,
            bits_per_user: 2 * bits_per_rail,
        })
    }
}

/// Monte-Carlo BER sweep settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub snr_grid_db: Vec<f64>,
    pub n_t: usize,
    pub n_u: usize,
    /// Nyquist intervals per rail and frame.
    pub n_intervals: usize,
    /// Total transmit energy per frame summed over users; `None` uses the
    /// normalization `m E_0 / (2 N_tot) = 1`.
    pub e0: Option<f64>,
    pub symbol_period: f64,
    pub f_c: f64,
    pub eta_min: f64,
    pub min_bits: u64,
    pub min_errors: u64,
    pub max_bits: u64,
    pub master_seed: u64,
    pub chaining: PolarityChaining,
    pub noise_model: NoiseModel,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_grid_db: vec![0.0, 4.0, 8.0, 10.0, 12.0, 16.0],
            n_t: 8,
            n_u: 2,
            n_intervals: 30,
            e0: None,
            symbol_period: 1.0,
            f_c: 0.65,
            eta_min: 0.95,
            min_bits: 2_000_000,
            min_errors: 200,
            max_bits: 100_000_000,
            master_seed: 1,
            chaining: PolarityChaining::Raw,
            noise_model: NoiseModel::Direct,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 || self.n_t < self.n_u {
            return Err(Error::Config(format!(
                "need 0 < n_u <= n_t, got n_u = {} and n_t = {}",
                self.n_u, self.n_t
            )));
        }
        if self.max_bits < self.min_bits {
            return Err(Error::Config("max_bits must not be below min_bits".into()));
        }
        if !(self.symbol_period > 0.0 && self.f_c > 0.0) {
            return Err(Error::Config(
                "symbol period and critical frequency must be positive".into(),
            ));
        }
        if self.e0.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::Config("e0 must be positive".into()));
        }
        if self.snr_grid_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("SNR grid contains NaN".into()));
        }
        Ok(())
    }

    /// `E_0` in use for a mapping.
    pub fn energy(&self, params: ZxParams) -> Result<f64> {
        let geom = FrameGeometry::new(params, self.n_intervals)?;
        Ok(self
            .e0
            .unwrap_or(2.0 * geom.samples_per_rail as f64 / params.m_coeff() as f64))
    }
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let (nf, p) = (n as f64, k as f64 / n as f64);
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    // the bounds are exactly 0 and 1 at the edges; avoid rounding past the estimate
    let lo = if k == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let hi = if k == n { 1.0 } else { (centre + half).clamp(p, 1.0) };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub frames: u64,
    /// Singular channel draws that were discarded.
    pub channel_resamples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub m_rx: usize,
    pub points: Vec<BerPoint>,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    bits: u64,
    errors: u64,
    resamples: u64,
}

/// Everything a frame simulation needs that does not change between frames.
struct LinkSetup<'a, T> {
    coeffs: &'a CoefficientSet<T>,
    encoder: Encoder,
    detector: Detector,
    geom: FrameGeometry,
    scale: T,
    noise: NoiseSpec<T>,
    cfg: &'a SweepConfig,
}

impl<T: Scalar> LinkSetup<'_, T> {
    fn frame(&self, rng: &mut ChaCha8Rng) -> Result<Tally> {
        let pilot = ComplexPilot::default();
        let bits: Vec<Vec<u8>> = (0..self.cfg.n_u)
            .map(|_| random_bits(rng, self.geom.bits_per_user))
            .collect();
        let frames: Vec<ComplexFrame<T>> = bits
            .iter()
            .map(|b| self.encoder.encode_complex(b, pilot, self.coeffs))
            .collect::<Result<_>>()?;
        let draw = generate_channel::<T, _>(rng, self.cfg.n_u, self.cfg.n_t)?;
        let rx = transmit_frame(
            &frames,
            &draw.channel,
            &self.noise,
            self.cfg.noise_model,
            self.scale,
            rng,
        )?;
        let mut t = Tally {
            resamples: draw.resamples as u64,
            ..Tally::default()
        };
        for (sent, got) in bits.iter().zip(&rx.users) {
            let detected = self.detector.detect_complex(got, pilot)?;
            t.bits += sent.len() as u64;
            t.errors += sent.iter().zip(&detected).filter(|(a, b)| a != b).count() as u64;
        }
        Ok(t)
    }
}

/// Simulates one SNR point until the stopping rule is met.
fn run_point<T: Scalar>(setup: &LinkSetup<'_, T>, stream: u64, snr_db: f64) -> Result<BerPoint> {
    let cfg = setup.cfg;
    let mut total = Tally::default();
    let mut frames = 0u64;
    loop {
        let done = total.bits >= cfg.max_bits || (total.bits >= cfg.min_bits && total.errors >= cfg.min_errors);
        if done {
            break;
        }
        let start = frames;
        let batch: Vec<Tally> = (start..start + BATCH_FRAMES as u64)
            .into_par_iter()
            .map(|i| setup.frame(&mut item_rng(cfg.master_seed, stream, i)))
            .collect::<Result<_>>()?;
        for t in batch {
            total.bits += t.bits;
            total.errors += t.errors;
            total.resamples += t.resamples;
        }
        frames += BATCH_FRAMES as u64;
    }
    let (ci_lo, ci_hi) = wilson_interval(total.errors, total.bits);
    Ok(BerPoint {
        snr_db,
        bits: total.bits,
        errors: total.errors,
        ber: total.errors as f64 / total.bits.max(1) as f64,
        ci_lo,
        ci_hi,
        frames,
        channel_resamples: total.resamples,
    })
}

/// BER over the SNR grid. Refuses coefficient sets that fail the design
/// constraints at the configured `f_c` and containment floor.
pub fn ber_sweep<T: Scalar>(cfg: &SweepConfig, coeffs: &CoefficientSet<T>) -> Result<BerCurve> {
    cfg.validate()?;
    let params = coeffs.params();
    let mut problem = DesignProblem::<T>::new(params);
    problem.f_c = T::lit(cfg.f_c);
    problem.eta_min = T::lit(cfg.eta_min);
    let ev = evaluate(coeffs, &problem)?;
    if !ev.eta_ok {
        return Err(Error::Infeasible(format!(
            "containment {} at f_c = {} is below the floor {}",
            ev.eta, cfg.f_c, cfg.eta_min
        )));
    }
    let geom = FrameGeometry::new(params, cfg.n_intervals)?;
    let e0 = cfg.energy(params)?;
    let c0 = autocorrelation_adaptive(&build_machine(params, coeffs)?, T::lit(DEFAULT_TRUNCATION_EPS)).c0();
    let scale = energy_scale(T::lit(e0), cfg.n_u, geom.samples_per_rail, c0);
    let mut points = Vec::with_capacity(cfg.snr_grid_db.len());
    for (k, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
        let noise = snr_to_n0(
            T::lit(e0),
            T::lit(snr_db),
            cfg.n_intervals,
            T::lit(cfg.symbol_period),
            T::lit(cfg.f_c),
        );
        let setup = LinkSetup {
            coeffs,
            encoder: Encoder::new(params),
            detector: Detector::new(params, cfg.chaining),
            geom,
            scale,
            noise,
            cfg,
        };
        points.push(run_point(&setup, k as u64, snr_db)?);
    }
    Ok(BerCurve {
        m_rx: params.m_rx(),
        points,
    })
}

/// Averaged periodogram next to the analytic PSD on the same bins.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalPsd {
    /// Bin frequencies in units of `1/T`, ascending and symmetric about 0.
    pub freqs: Vec<f64>,
    /// `O_s^-1 E|DFT|^2` of the sample sequence, times the transmit filter
    /// response, in linear units.
    pub empirical: Vec<f64>,
    pub analytic: Vec<f64>,
    /// Both curves in dB relative to the analytic peak.
    pub empirical_db: Vec<f64>,
    pub analytic_db: Vec<f64>,
    pub frames: usize,
}

impl EmpiricalPsd {
    /// Largest `|empirical_db - analytic_db|` over `|f| <= f_max`.
    pub fn max_deviation_db(&self, f_max: f64) -> f64 {
        self.freqs
            .iter()
            .zip(self.empirical_db.iter().zip(&self.analytic_db))
            .filter(|(f, _)| f.abs() <= f_max + 1e-12)
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `O_s^-1 |DFT|^2` averaged over `rails`, in FFT bin order.
pub fn averaged_periodogram<T: Scalar>(rails: &[Vec<T>]) -> Result<Vec<T>> {
    let n = rails
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Input("no frames to average".into()))?;
    if n == 0 || rails.iter().any(|r| r.len() != n) {
        return Err(Error::Input("frames must be nonempty and of equal length".into()));
    }
    let fft = FftPlanner::<T>::new().plan_fft_forward(n);
    let mut acc = vec![T::zero(); n];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for rail in rails {
        for (b, &v) in buf.iter_mut().zip(rail) {
            *b = Complex::new(v, T::zero());
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let norm = T::from_usize_lossy(n) * T::from_usize_lossy(rails.len());
    Ok(acc.into_iter().map(|v| v / norm).collect())
}

/// Empirical PSD of the real rail over `n_frames` random frames of
/// `n_intervals` intervals, with the analytic PSD on the same bins.
pub fn empirical_psd<T: Scalar>(
    coeffs: &CoefficientSet<T>,
    n_frames: usize,
    n_intervals: usize,
    seed: u64,
) -> Result<EmpiricalPsd> {
    if n_frames < 100 {
        return Err(Error::Input(format!("need at least 100 frames, got {n_frames}")));
    }
    let params = coeffs.params();
    let geom = FrameGeometry::new(params, n_intervals)?;
    let encoder = Encoder::new(params);
    let rails: Vec<Vec<T>> = (0..n_frames as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, u64::MAX, i);
            let bits = random_bits(&mut rng, geom.bits_per_rail);
            encoder.encode(&bits, Sign::Plus, coeffs).map(|f| f.coeffs)
        })
        .collect::<Result<_>>()?;
    let per = averaged_periodogram(&rails)?;

    let n = geom.samples_per_rail;
    let m = params.m_rx() as f64;
    let filter = FilterSpec::rectangular(params.m_rx(), T::one());
    let autocorr = autocorrelation_adaptive(&build_machine(params, coeffs)?, T::lit(DEFAULT_TRUNCATION_EPS));
    // symmetric bin set: drop the unpaired Nyquist bin of an even length
    let half = (n - 1) / 2;
    let mut freqs = Vec::with_capacity(2 * half + 1);
    let mut empirical = Vec::with_capacity(2 * half + 1);
    let mut analytic = Vec::with_capacity(2 * half + 1);
    for k in -(half as i64)..=half as i64 {
        let f = k as f64 * m / n as f64;
        let bin = k.rem_euclid(n as i64) as usize;
        let fr = filter.power_response(T::lit(f)) * T::lit(m);
        freqs.push(f);
        empirical.push((per[bin] * fr).as_f64());
        analytic.push(spectrum::psd_at(&autocorr, &filter, T::lit(f)).as_f64());
    }
    let peak = analytic.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    let db = |v: &[f64]| {
        v.iter()
            .map(|x| 10.0 * (x.max(1e-300) / peak).log10())
            .collect::<Vec<_>>()
    };
    Ok(EmpiricalPsd {
        empirical_db: db(&empirical),
        analytic_db: db(&analytic),
        freqs,
        empirical,
        analytic,
        frames: n_frames,
    })
}

/// Containment factor, total and in-band power of a coefficient set.
pub fn containment_report<T: Scalar>(
    coeffs: &CoefficientSet<T>,
    f_c: T,
    opts: &ContainmentOptions,
) -> Result<Containment<T>> {
    let params = coeffs.params();
    let autocorr = autocorrelation_adaptive(&build_machine(params, coeffs)?, T::lit(DEFAULT_TRUNCATION_EPS));
    spectrum::containment(&autocorr, &FilterSpec::rectangular(params.m_rx(), T::one()), f_c, opts)
}

/// `snr_db,bits,errors,ber,ci_lo,ci_hi`.
pub fn write_ber_csv<W: Write>(mut w: W, curve: &BerCurve) -> std::io::Result<()> {
    writeln!(w, "snr_db,bits,errors,ber,ci_lo,ci_hi")?;
    for p in &curve.points {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e}",
            p.snr_db, p.bits, p.errors, p.ber, p.ci_lo, p.ci_hi
        )?;
    }
    Ok(())
}

/// `f_T,analytic_db,empirical_db`.
pub fn write_psd_csv<W: Write>(mut w: W, psd: &EmpiricalPsd) -> std::io::Result<()> {
    writeln!(w, "f_T,analytic_db,empirical_db")?;
    for ((f, a), e) in psd.freqs.iter().zip(&psd.analytic_db).zip(&psd.empirical_db) {
        writeln!(w, "{f},{a},{e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zxmap::{published_table, table4, table5};

    fn quick(snrs: &[f64], seed: u64) -> SweepConfig {
        SweepConfig {
            snr_grid_db: snrs.to_vec(),
            min_bits: 50_000,
            min_errors: 0,
            max_bits: 50_000,
            master_seed: seed,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn geometry_matches_frame_layout() {
        let g3 = FrameGeometry::new(ZxParams::new(3).unwrap(), 30).unwrap();
        assert_eq!((g3.samples_per_rail, g3.bits_per_rail, g3.bits_per_user), (90, 60, 120));
        let g2 = FrameGeometry::new(ZxParams::new(2).unwrap(), 30).unwrap();
        assert_eq!((g2.samples_per_rail, g2.bits_per_rail, g2.bits_per_user), (60, 45, 90));
    }

    #[test]
    fn wilson_contains_estimate() {
        for (k, n) in [(0, 10), (5, 10), (10, 10), (200, 2_000_000), (1, 3)] {
            let (lo, hi) = wilson_interval(k, n);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi && (0.0..=1.0).contains(&lo) && hi <= 1.0);
        }
        // reference value for 10 / 100
        let (lo, hi) = wilson_interval(10, 100);
        assert!((lo - 0.055_229).abs() < 1e-5 && (hi - 0.174_366).abs() < 1e-5);
    }

    #[test]
    fn noiseless_sweep_is_error_free() {
        for m_rx in [2, 3] {
            let c = published_table::<f64>(m_rx).unwrap();
            let curve = ber_sweep(&quick(&[f64::INFINITY], 3), &c).unwrap();
            assert_eq!(curve.points[0].errors, 0);
            assert!(curve.points[0].bits >= 50_000);
        }
    }

    #[test]
    fn sweep_is_reproducible_and_decreasing() {
        let c = table5::<f64>();
        let a = ber_sweep(&quick(&[0.0, 8.0, 16.0], 42), &c).unwrap();
        let b = ber_sweep(&quick(&[0.0, 8.0, 16.0], 42), &c).unwrap();
        assert_eq!(a, b);
        let e: Vec<f64> = a.points.iter().map(|p| p.ber).collect();
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
        let other = ber_sweep(&quick(&[0.0], 43), &c).unwrap();
        assert_ne!(other.points[0].errors, a.points[0].errors);
    }

    #[test]
    fn infeasible_coefficients_are_refused() {
        let g = CoefficientSet::uniform(ZxParams::new(3).unwrap(), (1.0f64 / 12.0).sqrt()).unwrap();
        assert!(matches!(ber_sweep(&quick(&[0.0], 1), &g), Err(Error::Infeasible(_))));
    }

    #[test]
    fn white_signs_give_flat_periodogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rails: Vec<Vec<f64>> = (0..4000)
            .map(|_| (0..64).map(|_| if rng.random::<bool>() { 0.3 } else { -0.3 }).collect())
            .collect();
        let p = averaged_periodogram(&rails).unwrap();
        for v in p {
            assert!((v / 0.09 - 1.0).abs() < 0.1, "{v}");
        }
    }

    #[test]
    fn averaging_more_frames_halves_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut estimate = |frames: usize| -> Vec<f64> {
            let rails: Vec<Vec<f64>> = (0..frames)
                .map(|_| (0..32).map(|_| rng.random::<f64>() - 0.5).collect())
                .collect();
            averaged_periodogram(&rails).unwrap()
        };
        let var = |runs: Vec<Vec<f64>>| -> f64 {
            let n = runs.len() as f64;
            let bins = runs[0].len();
            (1..bins / 2)
                .map(|k| {
                    let mean = runs.iter().map(|r| r[k]).sum::<f64>() / n;
                    runs.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)
                })
                .sum::<f64>()
                / (bins / 2 - 1) as f64
        };
        let v1 = var((0..300).map(|_| estimate(100)).collect());
        let v2 = var((0..300).map(|_| estimate(200)).collect());
        let ratio = v1 / v2;
        assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn empirical_psd_needs_enough_frames() {
        assert!(empirical_psd(&table5::<f64>(), 10, 30, 1).is_err());
    }

    #[test]
    fn empirical_psd_tracks_analytic() {
        let psd = empirical_psd(&table5::<f64>(), 2000, 30, 9).unwrap();
        assert!(psd.max_deviation_db(0.65) < 1.5, "{}", psd.max_deviation_db(0.65));
        let n = psd.freqs.len();
        for i in 0..n {
            assert_eq!(psd.freqs[i], -psd.freqs[n - 1 - i]);
        }
    }

    #[test]
    fn containment_is_scale_invariant() {
        let g = table5::<f64>();
        let opts = ContainmentOptions::default();
        let a = containment_report(&g, 0.65, &opts).unwrap();
        let b = containment_report(&g.scaled(3.7).unwrap(), 0.65, &opts).unwrap();
        assert!((a.eta - b.eta).abs() < 1e-12);
        assert!(a.eta >= 0.95);
        assert!(containment_report(&table4::<f64>(), 0.65, &opts).unwrap().eta >= 0.95);
    }

    #[test]
    fn csv_headers() {
        let curve = BerCurve {
            m_rx: 3,
            points: vec![BerPoint {
                snr_db: 0.0,
                bits: 10,
                errors: 1,
                ber: 0.1,
                ci_lo: 0.01,
                ci_hi: 0.4,
                frames: 1,
                channel_resamples: 0,
            }],
        };
        let mut out = Vec::new();
        write_ber_csv(&mut out, &curve).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with("snr_db,bits,errors,ber,ci_lo,ci_hi\n0,10,1,"));
    }

    #[test]
    fn cost_grows_no_worse_than_cubic_in_antennas() {
        let c = table5::<f64>();
        let time = |n_t: usize| {
            let cfg = SweepConfig {
                n_t,
                ..quick(&[10.0], 5)
            };
            let t = std::time::Instant::now();
            ber_sweep(&cfg, &c).unwrap();
            t.elapsed().as_secs_f64()
        };
        let (a, b) = (time(8), time(16));
        assert!(b / a < 80.0, "{a} {b}");
    }
}
