//! Maximum-likelihood fitting of the representation, closed-form estimators
//! and identifiability diagnostics.

mod likelihood;
pub mod optim;

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::kernel::KernelConvention;
use crate::params::{MvParams, SquareMatrix};
use crate::partition::MarkPartition;
use crate::simulate::stream_rng;
use crate::stability::{branching_matrix, Stationarity};
use crate::stats::median;

pub use likelihood::{
    compensator_increments, log_likelihood, log_likelihood_gradient, Gradient, LikelihoodData,
    LOG_ZERO_SENTINEL,
};
pub use optim::{BfgsOptions, Termination};

/// Bounds on every fitted parameter; the optimiser works on their logarithms.
pub const PARAM_LOWER: f64 = 1e-10;
pub const PARAM_UPPER: f64 = 1e8;

/// `λ̂0_i = N_i / (T μ(A_i))` with `α = 0` and unit decay placeholders.
pub fn fit_poisson_closed_form(partition: &MarkPartition, stream: &EventStream) -> Result<MvParams> {
    let counts = partition.counts(stream)?;
    let t = stream.horizon();
    let k = partition.len();
    MvParams::new(
        counts
            .iter()
            .zip(partition.measures())
            .map(|(&n, m)| n as f64 / (t * m))
            .collect(),
        SquareMatrix::zeros(k),
        SquareMatrix::filled(k, 1.0),
        KernelConvention::default(),
    )
}

/// Default starting point: half of the Poisson background split, constant
/// excitation giving branching ratio ½, unit decay. Empty cells get a small
/// positive background so the start is strictly positive.
pub fn poisson_start(
    partition: &MarkPartition,
    stream: &EventStream,
    kernel: KernelConvention,
) -> Result<MvParams> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let closed = fit_poisson_closed_form(partition, stream)?;
    let k = partition.len();
    let total_measure: f64 = partition.measures().iter().sum();
    let alpha = 0.5 / (kernel.mass(1.0) * total_measure);
    MvParams::new(
        closed.background.iter().map(|b| (0.5 * b).max(1e-6)).collect(),
        SquareMatrix::filled(k, alpha),
        SquareMatrix::filled(k, 1.0),
        kernel,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Jittered copies of the initial point tried in addition to it.
    pub restarts: usize,
    /// Restarts multiply each parameter by a log-uniform factor in
    /// `[1/(1+jitter), 1+jitter]`.
    pub jitter: f64,
    pub seed: u64,
    pub tol: f64,
    pub ftol: f64,
    pub max_iter: usize,
    /// Hold excitation weights that are zero in the start at zero.
    pub fix_zero_alpha: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 3,
            jitter: 0.2,
            seed: 0,
            tol: 1e-6,
            ftol: 1e-10,
            max_iter: 2000,
            fix_zero_alpha: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: MvParams,
    pub loglik: f64,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    /// Norm of the projected gradient with respect to log-parameters.
    pub gradient_norm: f64,
    pub runtime_secs: f64,
    /// Index of the winning start (0 = the supplied initial point).
    pub start: usize,
}

/// Multiplies every parameter of `params` by an independent log-uniform factor.
pub fn jitter_params<R: Rng>(params: &MvParams, jitter: f64, rng: &mut R) -> MvParams {
    let w = (1.0 + jitter).ln();
    let v: Vec<f64> = params
        .to_vec()
        .iter()
        .map(|x| x * (w * (2.0 * rng.random::<f64>() - 1.0)).exp())
        .collect();
    MvParams::from_vec(params.dim(), &v, params.kernel).expect("jitter keeps parameters valid")
}

/// Fits from `init` and `opts.restarts` jittered copies of it.
pub fn fit_mle(
    partition: &MarkPartition,
    stream: &EventStream,
    init: &MvParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    let mut starts = vec![init.clone()];
    for r in 0..opts.restarts {
        let mut rng = stream_rng(opts.seed, r as u64 + 1);
        starts.push(jitter_params(init, opts.jitter, &mut rng));
    }
    fit_mle_from_starts(partition, stream, &starts, opts)
}

/// Runs one optimisation per start in parallel and keeps the highest
/// likelihood; ties go to the earliest start.
pub fn fit_mle_from_starts(
    partition: &MarkPartition,
    stream: &EventStream,
    starts: &[MvParams],
    opts: &FitOptions,
) -> Result<FitResult> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    if starts.is_empty() {
        return Err(Error::invalid("at least one starting point is required"));
    }
    let clock = Instant::now();
    let data = LikelihoodData::new(partition, stream)?;
    let results: Vec<FitResult> = starts
        .par_iter()
        .enumerate()
        .map(|(idx, s)| fit_single(&data, s, opts).map(|r| FitResult { start: idx, ..r }))
        .collect::<Result<_>>()?;
    let mut best = results
        .into_iter()
        .reduce(|a, b| if b.loglik > a.loglik { b } else { a })
        .expect("non-empty");
    best.runtime_secs = clock.elapsed().as_secs_f64();
    Ok(best)
}

fn fit_single(data: &LikelihoodData, init: &MvParams, opts: &FitOptions) -> Result<FitResult> {
    init.validate()?;
    init.check_dim(data.dim())?;
    let k = init.dim();
    let kk = k * k;
    let theta0 = init.to_vec();
    let free: Vec<usize> = (0..theta0.len())
        .filter(|&idx| {
            if !opts.fix_zero_alpha || idx < k {
                return true;
            }
            let pair = (idx - k) % kk;
            init.excitation.as_slice()[pair] != 0.0
        })
        .collect();
    if free.iter().any(|&idx| theta0[idx] <= 0.0) {
        return Err(Error::invalid("free starting parameters must be strictly positive"));
    }
    let (lo, hi) = (PARAM_LOWER.ln(), PARAM_UPPER.ln());
    let x0: Vec<f64> = free.iter().map(|&idx| theta0[idx].ln()).collect();
    let kernel = init.kernel;
    let unpack = |x: &[f64]| {
        let mut theta = theta0.clone();
        for (&idx, xi) in free.iter().zip(x) {
            theta[idx] = xi.exp();
        }
        MvParams::from_vec(k, &theta, kernel).expect("positive parameters are valid")
    };
    let objective = |x: &[f64]| {
        let params = unpack(x);
        let g = data.gradient(&params).expect("dimensions checked");
        let grad = g.to_vec();
        let theta = params.to_vec();
        let dx = free.iter().map(|&idx| -grad[idx] * theta[idx]).collect();
        (-g.loglik, dx)
    };
    let bfgs = BfgsOptions {
        gtol: opts.tol,
        ftol: opts.ftol,
        max_iter: opts.max_iter,
        ..Default::default()
    };
    let m = optim::minimize(objective, &x0, &vec![lo; x0.len()], &vec![hi; x0.len()], &bfgs);
    Ok(FitResult {
        params: unpack(&m.x),
        loglik: -m.value,
        converged: m.termination.converged(),
        termination: m.termination,
        iterations: m.iterations,
        gradient_norm: m.gradient_norm,
        runtime_secs: 0.0,
        start: 0,
    })
}

/// Median over realizations of `‖θ̂_s − θ*‖₁`.
pub fn mae(estimates: &[MvParams], truth: &MvParams) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::invalid("mae needs at least one estimate"));
    }
    let d = estimates
        .iter()
        .map(|e| truth.l1_distance(e))
        .collect::<Result<Vec<_>>>()?;
    median(&d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub pass: bool,
    pub detail: String,
}

/// Runtime checks of the identifiability assumptions: A1 stationarity, A2
/// positive backgrounds, A3 linearly independent kernels, A4 every type
/// observed with the first event after time 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub a1: AssumptionCheck,
    pub a2: AssumptionCheck,
    pub a3: AssumptionCheck,
    /// `None` when no stream was supplied.
    pub a4: Option<AssumptionCheck>,
    /// Zero-based cells without any event.
    pub missing_types: Vec<usize>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.a1.pass && self.a2.pass && self.a3.pass && self.a4.as_ref().is_none_or(|a| a.pass)
    }
}

pub fn check_assumptions(
    params: &MvParams,
    partition: &MarkPartition,
    stream: Option<&EventStream>,
) -> Result<AssumptionReport> {
    let b = branching_matrix(params, partition)?;
    let verdict = Stationarity::classify(b.spectral_radius);
    let a1 = AssumptionCheck {
        pass: verdict == Stationarity::Stationary,
        detail: format!("spectral radius {} ({verdict:?})", b.spectral_radius),
    };
    let zero_bg: Vec<usize> = (0..params.dim()).filter(|&i| params.background[i] <= 0.0).collect();
    let a2 = AssumptionCheck {
        pass: zero_bg.is_empty(),
        detail: if zero_bg.is_empty() {
            "all background rates positive".into()
        } else {
            format!("zero background in types {zero_bg:?}")
        },
    };
    let a3 = AssumptionCheck {
        pass: true,
        detail: "exponential kernels are linearly independent by construction".into(),
    };
    let (a4, missing_types) = match stream {
        None => (None, Vec::new()),
        Some(s) => {
            let counts = partition.counts(s)?;
            let missing: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] == 0).collect();
            let first_positive = s.events().first().is_some_and(|e| e.time > 0.0);
            let mut problems = Vec::new();
            if !missing.is_empty() {
                problems.push(format!("no events of types {missing:?}"));
            }
            if !first_positive {
                problems.push("first event is not after time 0".to_string());
            }
            let check = AssumptionCheck {
                pass: problems.is_empty(),
                detail: if problems.is_empty() {
                    "every type observed".into()
                } else {
                    problems.join("; ")
                },
            };
            (Some(check), missing)
        }
    };
    Ok(AssumptionReport {
        a1,
        a2,
        a3,
        a4,
        missing_types,
    })
}
