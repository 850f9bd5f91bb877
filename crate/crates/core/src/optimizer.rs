//! Max-min waveform design.
//!
//! Maximize the smallest coefficient `gamma` subject to `||g||^2 <= budget`
//! and a containment floor. The containment factor of a coefficient vector
//! `x` is a ratio of quadratic forms `x^T A x / x^T B x`; both forms are
//! assembled once per problem from the same quadrature as
//! [`spectrum::containment`], which makes inner-loop evaluations cheap.
//!
//! The search bisects on `gamma`. For a fixed `gamma` the feasibility
//! question "is there an `x >= gamma` on the norm sphere with enough
//! containment?" is answered by multi-start projected coordinate ascent on
//! the containment factor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::spectrum::{
    self, autocorrelation_adaptive, ContainmentKernel, ContainmentOptions, FilterSpec, MAX_LAG_BLOCKS,
};
use crate::zxmap::{build_machine, build_sign_tables, CoefficientSet, MooreMachine, ZxParams};

/// Slack on the containment floor when judging feasibility.
pub const ETA_TOLERANCE: f64 = 1e-6;

/// One design point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignProblem<T> {
    pub params: ZxParams,
    /// `m E_0 / (2 N_tot)`; 1 by default.
    pub energy_budget: T,
    /// Critical frequency in units of `1/T`.
    pub f_c: T,
    pub eta_min: T,
    /// Relative slack on the norm check in [`evaluate`], so that published
    /// tables rounded to four decimals still pass.
    pub norm_tolerance: T,
    pub containment: ContainmentOptions,
}

impl<T: Scalar> DesignProblem<T> {
    pub fn new(params: ZxParams) -> Self {
        Self {
            params,
            energy_budget: T::one(),
            f_c: T::lit(0.65),
            eta_min: T::lit(0.95),
            norm_tolerance: T::lit(1e-3),
            containment: ContainmentOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.energy_budget > T::zero()) || !self.energy_budget.is_finite() {
            return Err(Error::Config(format!(
                "energy budget must be positive, got {}",
                self.energy_budget
            )));
        }
        if !(self.eta_min >= T::zero() && self.eta_min < T::one()) {
            return Err(Error::Config(format!(
                "containment floor must lie in [0, 1), got {}",
                self.eta_min
            )));
        }
        if !(self.f_c > T::zero()) || !self.f_c.is_finite() {
            return Err(Error::Config(format!(
                "critical frequency must be positive, got {}",
                self.f_c
            )));
        }
        if !(self.norm_tolerance >= T::zero()) {
            return Err(Error::Config("norm tolerance must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn filter(&self) -> FilterSpec<T> {
        FilterSpec::rectangular(self.params.m_rx(), T::one())
    }

    /// Largest achievable `gamma`: the uniform vector on the norm sphere.
    pub fn gamma_ceiling(&self) -> T {
        (self.energy_budget / T::from_usize_lossy(self.params.m_coeff())).sqrt()
    }
}

/// Constraint check of a single candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation<T> {
    pub gamma: T,
    pub eta: T,
    pub norm_sq: T,
    pub norm_ok: bool,
    pub eta_ok: bool,
    pub feasible: bool,
}

/// `gamma`, containment and norm of `candidate`, and whether both
/// constraints hold.
pub fn evaluate<T: Scalar>(candidate: &CoefficientSet<T>, problem: &DesignProblem<T>) -> Result<Evaluation<T>> {
    problem.validate()?;
    let machine = build_machine(problem.params, candidate)?;
    let autocorr = autocorrelation_adaptive(&machine, T::lit(spectrum::DEFAULT_TRUNCATION_EPS));
    let eta = spectrum::containment(&autocorr, &problem.filter(), problem.f_c, &problem.containment)?.eta;
    let norm_sq = candidate.norm_sq();
    let norm_ok = norm_sq <= problem.energy_budget * (T::one() + problem.norm_tolerance);
    let eta_ok = eta >= problem.eta_min - T::lit(ETA_TOLERANCE);
    Ok(Evaluation {
        gamma: candidate.min_entry(),
        eta,
        norm_sq,
        norm_ok,
        eta_ok,
        feasible: norm_ok && eta_ok,
    })
}

/// Published coefficients checked against a problem.
pub type TableReport<T> = Evaluation<T>;

/// [`evaluate`] with a shape check against the problem's mapping.
pub fn verify_table<T: Scalar>(problem: &DesignProblem<T>, table: &CoefficientSet<T>) -> Result<TableReport<T>> {
    if table.params() != problem.params {
        return Err(Error::Shape {
            expected: format!("{}x{}", problem.params.rows(), problem.params.q()),
            got: format!("{}x{}", table.params().rows(), table.params().q()),
        });
    }
    evaluate(table, problem)
}

/// Settings of the multi-start search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub restarts: usize,
    pub seed: u64,
    /// Coordinate step schedule: start at `step_coarse`, halve down to `step_fine`.
    pub step_coarse: f64,
    pub step_fine: f64,
    /// Bisection stops once the bracket is narrower than this.
    pub gamma_resolution: f64,
    /// Cap on coordinate sweeps per step size.
    pub max_sweeps: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 64,
            seed: 0x5eed,
            step_coarse: 0.01,
            step_fine: 1e-4,
            gamma_resolution: 1e-5,
            max_sweeps: 200,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("at least one restart is required".into()));
        }
        if !(self.step_fine > 0.0 && self.step_coarse >= self.step_fine) {
            return Err(Error::Config(
                "step schedule must satisfy 0 < step_fine <= step_coarse".into(),
            ));
        }
        if !(self.gamma_resolution > 0.0) {
            return Err(Error::Config("gamma resolution must be positive".into()));
        }
        Ok(())
    }
}

/// One bisection probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub gamma: f64,
    pub best_eta: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchLog {
    /// Quadratic-form evaluations of the containment factor.
    pub evaluations: u64,
    pub probes: Vec<ProbeRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignSolution<T> {
    #[serde(skip)]
    pub coeffs: CoefficientSet<T>,
    pub gamma: T,
    pub eta: T,
    pub norm_sq: T,
    /// Final bisection bracket: `gamma_lo` feasible, `gamma_hi` not (or the ceiling).
    pub bracket: (T, T),
    pub search_log: SearchLog,
}

/// Result of [`solve`].
#[derive(Clone, Debug, PartialEq)]
pub enum SolveOutcome<T> {
    Feasible(DesignSolution<T>),
    /// No candidate met the containment floor; carries the best iterate.
    Infeasible(DesignSolution<T>),
}

impl<T: Scalar> SolveOutcome<T> {
    pub fn solution(&self) -> &DesignSolution<T> {
        match self {
            SolveOutcome::Feasible(s) | SolveOutcome::Infeasible(s) => s,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Feasible(_))
    }

    /// The feasible solution, or [`Error::Infeasible`].
    pub fn into_result(self) -> Result<DesignSolution<T>> {
        match self {
            SolveOutcome::Feasible(s) => Ok(s),
            SolveOutcome::Infeasible(s) => Err(Error::Infeasible(format!(
                "best containment {} is below the floor (gamma {})",
                s.eta, s.gamma
            ))),
        }
    }
}

/// Containment factor as `x^T A x / x^T B x` over row-major coefficients.
#[derive(Clone, Debug)]
pub struct QuadraticContainment<T> {
    inband: Matrix<T>,
    reference: Matrix<T>,
}

impl<T: Scalar> QuadraticContainment<T> {
    pub fn new(problem: &DesignProblem<T>) -> Result<Self> {
        problem.validate()?;
        let params = problem.params;
        let table = build_sign_tables(params);
        let (m, q) = (params.m_coeff(), params.q());
        let basis: Vec<MooreMachine<T>> = (0..m)
            .map(|a| {
                let mut e = vec![T::zero(); m];
                e[a] = T::one();
                MooreMachine::from_outputs(&table, &e)
            })
            .collect();
        let qm = basis[0].q_matrix().clone();
        let pi = basis[0].pi().to_vec();
        let blocks = mixing_blocks(&qm, &pi);
        let kernel = ContainmentKernel::new(&problem.filter(), problem.f_c, &problem.containment, blocks * q)?;

        // y[b][k] = Q^k Gamma(e_b)
        let powers: Vec<Vec<Matrix<T>>> = basis
            .iter()
            .map(|mb| {
                let mut v = Vec::with_capacity(blocks + 1);
                let mut y = mb.gamma().clone();
                for _ in 0..=blocks {
                    let next = qm.matmul(&y);
                    v.push(y);
                    y = next;
                }
                v
            })
            .collect();
        let lhs: Vec<Matrix<T>> = basis.iter().map(|ma| ma.gamma().transpose()).collect();

        let mut inband = Matrix::zeros(m, m);
        let mut reference = Matrix::zeros(m, m);
        let inv_q = T::one() / T::from_usize_lossy(q);
        for a in 0..m {
            for b in 0..m {
                // R^k_{ab} = Gamma(e_a)^T Pi Q^k Gamma(e_b)
                let r: Vec<Matrix<T>> = powers[b].iter().map(|y| lhs[a].matmul(&y.scale_rows(&pi))).collect();
                let (mut wa, mut wr) = (T::zero(), T::zero());
                for k in 0..blocks {
                    for l in 0..q {
                        let mut c = T::zero();
                        for i in 0..q - l {
                            c += r[k][(i, l + i)];
                        }
                        for i in q - l..q {
                            c += r[k + 1][(i, l + i - q)];
                        }
                        let lag = k * q + l;
                        wa += kernel.inband_weights()[lag] * c * inv_q;
                        wr += kernel.reference_weights()[lag] * c * inv_q;
                    }
                }
                inband[(a, b)] = wa;
                reference[(a, b)] = wr;
            }
        }
        let sym = |mat: &Matrix<T>| Matrix::from_fn(m, m, |i, j| (mat[(i, j)] + mat[(j, i)]) * T::lit(0.5));
        Ok(Self {
            inband: sym(&inband),
            reference: sym(&reference),
        })
    }

    pub fn inband(&self) -> &Matrix<T> {
        &self.inband
    }

    pub fn reference(&self) -> &Matrix<T> {
        &self.reference
    }

    pub fn eta(&self, x: &[T]) -> T {
        self.inband.bilinear(x, x) / self.reference.bilinear(x, x)
    }
}

/// Smallest block count after which `Q^k` equals `1 pi^T` to rounding,
/// capped at [`MAX_LAG_BLOCKS`]. The transitions never depend on the
/// coefficient values, so this is fixed per mapping.
fn mixing_blocks<T: Scalar>(qm: &Matrix<T>, pi: &[T]) -> usize {
    let n = qm.rows();
    let limit = Matrix::from_fn(n, n, |_, j| pi[j]);
    let mut p = qm.clone();
    for k in 1..=MAX_LAG_BLOCKS {
        if p.sub(&limit).max_abs() < T::epsilon() * T::lit(16.0) {
            return k + 1;
        }
        p = p.matmul(qm);
    }
    MAX_LAG_BLOCKS
}

/// Maps `y` onto `{x >= gamma, ||x||^2 = budget}` as `x_i = max(gamma, s y_i)`.
///
/// Requires `m gamma^2 <= budget` and `y` with at least one positive entry.
fn project<T: Scalar>(y: &[T], gamma: T, budget: T, out: &mut [T]) {
    let norm = |s: T| y.iter().map(|&v| (s * v).max(gamma).powi(2)).sum::<T>();
    // norm(s) is nondecreasing in s; bracket then bisect
    let (mut lo, mut hi) = (T::zero(), T::one());
    while norm(hi) < budget {
        lo = hi;
        hi *= T::lit(2.0);
        if hi > T::lit(1e30) {
            break;
        }
    }
    for _ in 0..100 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = (lo + hi) * T::lit(0.5);
    for (o, &v) in out.iter_mut().zip(y) {
        *o = (s * v).max(gamma);
    }
}

struct Restart<T> {
    x: Vec<T>,
    eta: T,
    evaluations: u64,
}

/// Projected coordinate ascent on the containment factor from `x0`.
/// Stops early once `stop_at` is reached.
fn ascend<T: Scalar>(
    form: &QuadraticContainment<T>,
    x0: &[T],
    gamma: T,
    budget: T,
    cfg: &SearchConfig,
    stop_at: Option<T>,
) -> Restart<T> {
    let m = x0.len();
    let mut x = vec![T::zero(); m];
    project(x0, gamma, budget, &mut x);
    let mut eta = form.eta(&x);
    let mut evaluations = 1u64;
    let mut trial = vec![T::zero(); m];
    let mut y = x.clone();
    let mut step = cfg.step_coarse;
    let reached = |e: T| stop_at.is_some_and(|s| e >= s);
    while step >= cfg.step_fine * (1.0 - 1e-9) && !reached(eta) {
        let delta = T::lit(step);
        for _ in 0..cfg.max_sweeps {
            let mut improved = false;
            for i in 0..m {
                for dir in [T::one(), -T::one()] {
                    y.copy_from_slice(&x);
                    y[i] = (y[i] + dir * delta).max(gamma);
                    project(&y, gamma, budget, &mut trial);
                    let e = form.eta(&trial);
                    evaluations += 1;
                    if e > eta {
                        eta = e;
                        x.copy_from_slice(&trial);
                        improved = true;
                        break;
                    }
                }
            }
            if !improved || reached(eta) {
                break;
            }
        }
        step *= 0.5;
    }
    Restart { x, eta, evaluations }
}

/// Best containment over the restarts at a fixed `gamma`. Restart 0 starts
/// from `warm` when given; the others are seeded from `(seed, probe)`.
fn probe<T: Scalar>(
    form: &QuadraticContainment<T>,
    problem: &DesignProblem<T>,
    cfg: &SearchConfig,
    gamma: T,
    probe_index: u64,
    warm: Option<&[T]>,
    stop_at: Option<T>,
) -> Restart<T> {
    let m = problem.params.m_coeff();
    let results: Vec<Restart<T>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let x0: Vec<T> = match (r, warm) {
                (0, Some(w)) => w.to_vec(),
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(probe_index * cfg.restarts as u64 + r as u64);
                    (0..m).map(|_| T::lit(rng.random_range(0.05..1.0))).collect()
                }
            };
            ascend(form, &x0, gamma, problem.energy_budget, cfg, stop_at)
        })
        .collect();
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    // lowest index wins ties so the reduction does not depend on scheduling
    let best = results
        .into_iter()
        .reduce(|a, b| if b.eta > a.eta { b } else { a })
        .expect("restarts > 0");
    Restart { evaluations, ..best }
}

/// Solves the design problem. Deterministic for a given [`SearchConfig`].
pub fn solve<T: Scalar>(problem: &DesignProblem<T>, cfg: &SearchConfig) -> Result<SolveOutcome<T>> {
    problem.validate()?;
    cfg.validate()?;
    let params = problem.params;
    let ceiling = problem.gamma_ceiling();
    let uniform = CoefficientSet::uniform(params, ceiling)?;
    let mut log = SearchLog::default();

    let finish = |x: &[T], bracket: (T, T), log: SearchLog| -> Result<(DesignSolution<T>, bool)> {
        let coeffs = CoefficientSet::from_flat(params, x.to_vec())?;
        let ev = evaluate(&coeffs, problem)?;
        let feasible = ev.feasible && ev.norm_sq <= problem.energy_budget * (T::one() + T::lit(1e-9));
        Ok((
            DesignSolution {
                coeffs,
                gamma: ev.gamma,
                eta: ev.eta,
                norm_sq: ev.norm_sq,
                bracket,
                search_log: log,
            },
            feasible,
        ))
    };

    let ev = evaluate(&uniform, problem)?;
    log.evaluations += 1;
    log.probes.push(ProbeRecord {
        gamma: ceiling.as_f64(),
        best_eta: ev.eta.as_f64(),
        feasible: ev.feasible,
    });
    if ev.feasible {
        let (sol, _) = finish(uniform.as_flat(), (ceiling, ceiling), log)?;
        return Ok(SolveOutcome::Feasible(sol));
    }

    let form = QuadraticContainment::new(problem)?;
    // small margin so the quadrature-based check agrees with the quadratic form
    let target = problem.eta_min + T::lit(1e-9);
    let mut probe_index = 0u64;
    let mut run = |gamma: T, warm: Option<&[T]>, stop: Option<T>, log: &mut SearchLog| {
        let r = probe(&form, problem, cfg, gamma, probe_index, warm, stop);
        probe_index += 1;
        log.evaluations += r.evaluations;
        log.probes.push(ProbeRecord {
            gamma: gamma.as_f64(),
            best_eta: r.eta.as_f64(),
            feasible: r.eta >= target,
        });
        r
    };

    let floor = ceiling * T::lit(1e-6);
    let base = run(floor, None, None, &mut log);
    if base.eta < target {
        let (sol, _) = finish(&base.x, (T::zero(), floor), log)?;
        return Ok(SolveOutcome::Infeasible(sol));
    }

    let (mut lo, mut hi) = (floor, ceiling);
    let mut best = base.x;
    while (hi - lo).as_f64() > cfg.gamma_resolution {
        let mid = (lo + hi) * T::lit(0.5);
        let r = run(mid, Some(&best), Some(target), &mut log);
        if r.eta >= target {
            lo = mid;
            best = r.x;
        } else {
            hi = mid;
        }
    }
    // among candidates at the final gamma keep the one with the most margin
    let polish = run(lo, Some(&best), None, &mut log);
    if polish.eta >= target {
        best = polish.x;
    }
    let (sol, feasible) = finish(&best, (lo, hi), log)?;
    Ok(if feasible {
        SolveOutcome::Feasible(sol)
    } else {
        SolveOutcome::Infeasible(sol)
    })
}
