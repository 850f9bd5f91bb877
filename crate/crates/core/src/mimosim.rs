//! Downlink system model: flat Rayleigh channel, zero-forcing precoding,
//! transmit energy scaling, receiver noise and 1-bit quantization.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Matrix};
use crate::scalar::Scalar;
use crate::zxmap::{ComplexFrame, Sign};

/// Channel matrices whose Gram matrix is worse conditioned than this are redrawn.
pub const MAX_CONDITION: f64 = 1e12;
/// Redraw limit for [`generate_channel`].
const MAX_RESAMPLES: usize = 1000;

/// One channel draw with its zero-forcing precoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization<T> {
    h: CMatrix<T>,
    p_sp: CMatrix<T>,
    c_zf: T,
    effective: CMatrix<T>,
}

impl<T: Scalar> ChannelRealization<T> {
    /// ZF precoder `P = c_zf H^H (H H^H)^-1` with `c_zf = sqrt(N_u / tr((H H^H)^-1))`.
    pub fn from_matrix(h: CMatrix<T>) -> Result<Self> {
        let (n_u, n_t) = (h.rows(), h.cols());
        if n_u == 0 || n_t < n_u {
            return Err(Error::Config(format!(
                "need 0 < users <= antennas, got {n_u} users and {n_t} antennas"
            )));
        }
        let hh = h.conj_transpose();
        let gram = h.matmul(&hh);
        let inv = gram.inverse()?;
        let cond = gram.norm_one() * inv.norm_one();
        if !(cond.as_f64() <= MAX_CONDITION) {
            return Err(Error::Singular(format!(
                "channel Gram matrix condition number {:e}",
                cond.as_f64()
            )));
        }
        let tr = inv.trace().re;
        let c_zf = (T::from_usize_lossy(n_u) / tr).sqrt();
        let p_sp = hh.matmul(&inv).scaled(c_zf);
        let effective = h.matmul(&p_sp);
        Ok(Self {
            h,
            p_sp,
            c_zf,
            effective,
        })
    }

    pub fn h(&self) -> &CMatrix<T> {
        &self.h
    }

    pub fn p_sp(&self) -> &CMatrix<T> {
        &self.p_sp
    }

    pub fn c_zf(&self) -> T {
        self.c_zf
    }

    /// `H P_sp`, equal to `c_zf I` up to rounding.
    pub fn effective(&self) -> &CMatrix<T> {
        &self.effective
    }

    pub fn n_users(&self) -> usize {
        self.h.rows()
    }

    pub fn n_antennas(&self) -> usize {
        self.h.cols()
    }
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
#[inline]
pub fn complex_gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R, var: T) -> Complex<T> {
    let s = (var * T::lit(0.5)).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(re) * s, T::lit(im) * s)
}

/// A channel draw together with the number of singular draws that were discarded.
#[derive(Clone, Debug)]
pub struct ChannelDraw<T> {
    pub channel: ChannelRealization<T>,
    pub resamples: usize,
}

/// I.i.d. `CN(0, 1)` channel with its ZF precoder; numerically singular
/// draws are redrawn and counted.
pub fn generate_channel<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n_u: usize, n_t: usize) -> Result<ChannelDraw<T>> {
    if n_u == 0 || n_t < n_u {
        return Err(Error::Config(format!(
            "need 0 < users <= antennas, got {n_u} users and {n_t} antennas"
        )));
    }
    for resamples in 0..MAX_RESAMPLES {
        let h = CMatrix::from_fn(n_u, n_t, |_, _| complex_gaussian(rng, T::one()));
        match ChannelRealization::from_matrix(h) {
            Ok(channel) => return Ok(ChannelDraw { channel, resamples }),
            Err(Error::Singular(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Singular(format!(
        "{MAX_RESAMPLES} consecutive singular channel draws"
    )))
}

/// Receiver noise level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec<T> {
    /// Noise power spectral density.
    pub n0: T,
    /// Complex variance of one post-filter sample (equal to `n0` for a
    /// unit-energy receive filter); each rail carries half.
    pub per_sample_variance: T,
}

impl<T: Scalar> NoiseSpec<T> {
    pub fn from_n0(n0: T) -> Self {
        Self {
            n0,
            per_sample_variance: n0,
        }
    }

    pub fn noiseless() -> Self {
        Self::from_n0(T::zero())
    }
}

/// `N_0 = E_0 / (N T 2 f_c 10^(snr/10))`.
pub fn snr_to_n0<T: Scalar>(e0: T, snr_db: T, n: usize, t: T, f_c: T) -> NoiseSpec<T> {
    let snr = T::lit(10.0).powf(snr_db / T::lit(10.0));
    NoiseSpec::from_n0(e0 / (T::from_usize_lossy(n) * t * T::lit(2.0) * f_c * snr))
}

/// Per-user sign samples of both rails.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexSigns {
    pub re: Vec<Sign>,
    pub im: Vec<Sign>,
}

impl ComplexSigns {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn to_complex<T: Scalar>(&self) -> Vec<Complex<T>> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(a, b)| Complex::new(a.value(), b.value()))
            .collect()
    }
}

/// Elementwise sign of both parts; exact zeros map to `+1`.
pub fn one_bit_quantize<T: Scalar>(samples: &[Complex<T>]) -> ComplexSigns {
    ComplexSigns {
        re: samples.iter().map(|z| Sign::of(z.re)).collect(),
        im: samples.iter().map(|z| Sign::of(z.im)).collect(),
    }
}

/// Quantized output of one frame for every user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceivedFrame {
    pub users: Vec<ComplexSigns>,
}

/// How receiver noise is produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// I.i.d. samples of the post-filter variance.
    #[default]
    Direct,
    /// White noise on a grid `sub` times finer than the sample spacing,
    /// passed through the rectangular receive filter as a Toeplitz matrix.
    /// Slow; kept as a check on [`NoiseModel::Direct`].
    Filtered { sub: usize },
}

/// Per-rail amplitude factor giving an expected frame energy of `e0` summed
/// over `n_u` users: `sqrt(e0 / (2 n_u n_tot c0))`.
pub fn energy_scale<T: Scalar>(e0: T, n_u: usize, n_tot: usize, c0: T) -> T {
    (e0 / (T::lit(2.0) * T::from_usize_lossy(n_u) * T::from_usize_lossy(n_tot) * c0)).sqrt()
}

/// Discrete rectangular receive filter (`n_tot x sub n_tot`) for unit sample
/// spacing: every output sample integrates `sub` consecutive fine-grid
/// samples with spacing `1/sub`.
pub fn receive_filter_matrix<T: Scalar>(n_tot: usize, sub: usize) -> Matrix<T> {
    let dt = T::one() / T::from_usize_lossy(sub);
    // unit-energy pulse of unit width has height 1
    Matrix::from_fn(n_tot, n_tot * sub, |i, j| if j / sub == i { dt } else { T::zero() })
}

/// Noise samples for one user's frame of length `n`.
pub fn draw_noise<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    noise: &NoiseSpec<T>,
    model: NoiseModel,
) -> Result<Vec<Complex<T>>> {
    if noise.per_sample_variance == T::zero() {
        return Ok(vec![Complex::new(T::zero(), T::zero()); n]);
    }
    match model {
        NoiseModel::Direct => Ok((0..n)
            .map(|_| complex_gaussian(rng, noise.per_sample_variance))
            .collect()),
        NoiseModel::Filtered { sub } => {
            if sub == 0 {
                return Err(Error::Config("noise oversampling factor must be positive".into()));
            }
            // white noise of PSD n0 sampled at spacing dt has variance n0 / dt
            let var = noise.per_sample_variance * T::from_usize_lossy(sub);
            let fine: Vec<Complex<T>> = (0..n * sub).map(|_| complex_gaussian(rng, var)).collect();
            let g = receive_filter_matrix::<T>(n, sub);
            let re: Vec<T> = fine.iter().map(|z| z.re).collect();
            let im: Vec<T> = fine.iter().map(|z| z.im).collect();
            let (gr, gi) = (g.transpose().left_mul_vec(&re), g.transpose().left_mul_vec(&im));
            Ok(gr.into_iter().zip(gi).map(|(a, b)| Complex::new(a, b)).collect())
        }
    }
}

/// Scaled complex baseband samples of one user's frame.
pub fn frame_samples<T: Scalar>(frame: &ComplexFrame<T>, scale: T) -> Result<Vec<Complex<T>>> {
    if frame.re.len() != frame.im.len() {
        return Err(Error::Shape {
            expected: format!("imaginary rail of {} samples", frame.re.len()),
            got: frame.im.len().to_string(),
        });
    }
    Ok(frame
        .re
        .coeffs
        .iter()
        .zip(&frame.im.coeffs)
        .map(|(&a, &b)| Complex::new(a * scale, b * scale))
        .collect())
}

/// Pre-quantization samples `H P_sp s[n] + w[n]` for all users.
pub fn propagate<T: Scalar, R: Rng + ?Sized>(
    frames: &[ComplexFrame<T>],
    channel: &ChannelRealization<T>,
    noise: &NoiseSpec<T>,
    model: NoiseModel,
    scale: T,
    rng: &mut R,
) -> Result<Vec<Vec<Complex<T>>>> {
    let n_u = channel.n_users();
    if frames.len() != n_u {
        return Err(Error::Shape {
            expected: format!("{n_u} user frames"),
            got: frames.len().to_string(),
        });
    }
    let tx: Vec<Vec<Complex<T>>> = frames.iter().map(|f| frame_samples(f, scale)).collect::<Result<_>>()?;
    let n = tx[0].len();
    if let Some(bad) = tx.iter().find(|s| s.len() != n) {
        return Err(Error::Shape {
            expected: format!("{n} samples per user"),
            got: bad.len().to_string(),
        });
    }
    let eff = channel.effective();
    let mut out = vec![Vec::with_capacity(n); n_u];
    for t in 0..n {
        for (k, row) in out.iter_mut().enumerate() {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (j, s) in tx.iter().enumerate() {
                acc = acc + eff[(k, j)] * s[t];
            }
            row.push(acc);
        }
    }
    for row in out.iter_mut() {
        let w = draw_noise(rng, n, noise, model)?;
        for (y, w) in row.iter_mut().zip(w) {
            *y = *y + w;
        }
    }
    Ok(out)
}

/// Transmits one frame per user and quantizes what each user receives.
pub fn transmit_frame<T: Scalar, R: Rng + ?Sized>(
    frames: &[ComplexFrame<T>],
    channel: &ChannelRealization<T>,
    noise: &NoiseSpec<T>,
    model: NoiseModel,
    scale: T,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    let rx = propagate(frames, channel, noise, model, scale, rng)?;
    Ok(ReceivedFrame {
        users: rx.iter().map(|r| one_bit_quantize(r)).collect(),
    })
}
