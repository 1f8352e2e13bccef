//! Ogata thinning for marked targets and for multivariate representations.
//!
//! Both simulators use the current intensity as the dominating rate for the
//! next candidate: with exponential kernels the intensity can only decay
//! between events, so the bound is exact until the next acceptance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::events::{Event, EventStream};
use crate::params::MvParams;
use crate::partition::{Cell, MarkPartition};
use crate::space::MarkSpace;
use crate::target::{MarkFunction, TargetSpec};

pub const DEFAULT_MAX_EVENTS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub seed: u64,
    /// Realization index; selects an independent ChaCha stream for `seed`.
    pub stream: u64,
    pub max_events: usize,
}

impl SimConfig {
    pub fn new(horizon: f64, seed: u64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(SimConfig {
            horizon,
            seed,
            stream: 0,
            max_events: DEFAULT_MAX_EVENTS,
        })
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_max_events(mut self, max_events: usize) -> Result<Self> {
        if max_events == 0 {
            return Err(Error::invalid("max_events must be positive"));
        }
        self.max_events = max_events;
        Ok(self)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        stream_rng(self.seed, self.stream)
    }
}

/// Generator for realization `stream` of base `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sum of exponentially decaying terms, merged by decay rate.
#[derive(Debug, Clone, Default)]
struct DecayBank {
    terms: Vec<(f64, f64)>,
}

impl DecayBank {
    fn add(&mut self, beta: f64, amplitude: f64) {
        if amplitude == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|(b, _)| *b == beta) {
            Some((_, a)) => *a += amplitude,
            None => self.terms.push((beta, amplitude)),
        }
    }

    fn advance(&mut self, dt: f64, floor: f64) {
        for (b, a) in &mut self.terms {
            *a *= (-*b * dt).exp();
        }
        if self.terms.len() > 1 {
            self.terms.retain(|(_, a)| *a > floor);
        }
    }

    fn total(&self) -> f64 {
        self.terms.iter().map(|(_, a)| a).sum()
    }
}

/// Draws marks from a density on the mark space.
#[derive(Debug, Clone)]
enum MarkSampler {
    Categorical { labels: Vec<f64>, cumulative: Vec<f64> },
    Rejection {
        lower: f64,
        upper: f64,
        bound: f64,
        density: MarkFunction,
    },
}

impl MarkSampler {
    fn new(density: &MarkFunction, space: &MarkSpace) -> Result<Self> {
        match space {
            MarkSpace::Discrete { labels } => {
                let mut acc = 0.0;
                let cumulative: Vec<f64> = labels
                    .iter()
                    .map(|&l| {
                        acc += density.eval(l as f64);
                        acc
                    })
                    .collect();
                Ok(MarkSampler::Categorical {
                    labels: labels.iter().map(|&l| l as f64).collect(),
                    cumulative,
                })
            }
            MarkSpace::Continuous { lower, upper } => {
                let bound = density.upper_bound(*lower, *upper);
                if !(bound.is_finite() && bound > 0.0) {
                    return Err(Error::invalid("mark density has no usable upper bound"));
                }
                Ok(MarkSampler::Rejection {
                    lower: *lower,
                    upper: *upper,
                    bound,
                    density: density.clone(),
                })
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            MarkSampler::Categorical { labels, cumulative } => {
                let u = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                let idx = cumulative.partition_point(|&c| c <= u);
                labels[idx.min(labels.len() - 1)]
            }
            MarkSampler::Rejection {
                lower,
                upper,
                bound,
                density,
            } => loop {
                let m = lower + (upper - lower) * rng.random::<f64>();
                if rng.random::<f64>() * bound <= density.eval(m) {
                    return m;
                }
            },
        }
    }
}

fn exp_waiting_time<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    loop {
        let e: f64 = rng.sample(Exp1);
        if e > 0.0 {
            return e / rate;
        }
    }
}

/// Simulates the marked target on `[0, horizon]`.
///
/// Candidates are proposed from the ground intensity
/// `Λ + Σ ξ(M_l) g(t − t_l; β(M_l))`; an accepted point is an immigrant with
/// probability `Λ / λ_g(t)` (mark drawn from `f`) and an offspring otherwise
/// (mark drawn from `f₂`).
pub fn simulate_target(spec: &TargetSpec, cfg: &SimConfig) -> Result<EventStream> {
    let mut rng = cfg.rng();
    let immigrant_marks = MarkSampler::new(&spec.mark_density, &spec.space)?;
    let offspring_marks = if spec.is_separable() {
        None
    } else {
        Some(MarkSampler::new(spec.offspring_mark_density(), &spec.space)?)
    };
    let background = spec.immigrant_rate;
    let floor = 1e-18 * background;
    let mut bank = DecayBank::default();
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        let bound = background + bank.total();
        let w = exp_waiting_time(&mut rng, bound);
        t += w;
        if t > cfg.horizon {
            break;
        }
        bank.advance(w, floor);
        let excitation = bank.total();
        let rate = background + excitation;
        if rng.random::<f64>() * bound > rate {
            continue;
        }
        let immigrant = rng.random::<f64>() * rate < background;
        let mark = match (&offspring_marks, immigrant) {
            (Some(sampler), false) => sampler.sample(&mut rng),
            _ => immigrant_marks.sample(&mut rng),
        };
        events.push(Event::new(t, mark));
        if events.len() > cfg.max_events {
            return Err(explosion(events, cfg, &spec.space));
        }
        let beta = spec.decay.eval(mark);
        bank.add(beta, spec.productivity.eval(mark) * spec.kernel.scale(beta));
    }
    Ok(EventStream::from_parts_unchecked(events, cfg.horizon, spec.space.clone()))
}

fn explosion(mut events: Vec<Event>, cfg: &SimConfig, space: &MarkSpace) -> Error {
    events.truncate(cfg.max_events);
    let horizon = events.last().map_or(cfg.horizon, |e| e.time);
    Error::Explosion {
        limit: cfg.max_events,
        partial: Box::new(EventStream::from_parts_unchecked(
            events,
            horizon,
            space.clone(),
        )),
    }
}

fn sample_in_cell<R: Rng>(cell: &Cell, rng: &mut R) -> f64 {
    match cell {
        Cell::Interval { lower, upper, .. } => {
            let m = lower + (upper - lower) * rng.random::<f64>();
            // guard against rounding up to the open end
            if m >= *upper { *lower } else { m }
        }
        Cell::Labels { labels } => labels[rng.random_range(0..labels.len())] as f64,
    }
}

/// Simulates the K-component representation. Type `i` fires at rate
/// `μ(A_i)(λ0_i + Σ_j α_ij Σ_l g_ij(t − t_{l,j}))`; each event's mark is drawn
/// uniformly from its cell.
pub fn simulate_mv(
    params: &MvParams,
    partition: &MarkPartition,
    cfg: &SimConfig,
) -> Result<EventStream> {
    params.validate()?;
    let k = partition.len();
    params.check_dim(k)?;
    let mut rng = cfg.rng();
    let measures = partition.measures();
    let decay = params.decay.as_slice();
    let excitation = params.excitation.as_slice();
    let scale: Vec<f64> = decay.iter().map(|&b| params.kernel.scale(b)).collect();
    // state[i*k + j] = Σ_{l in j} scale_ij e^{-β_ij (t - t_l)}
    let mut state = vec![0.0; k * k];
    let mut component = vec![0.0; k];
    let rates = |state: &[f64], component: &mut [f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..k {
            let row = i * k;
            let mut r = params.background[i];
            for j in 0..k {
                r += excitation[row + j] * state[row + j];
            }
            component[i] = measures[i] * r;
            total += component[i];
        }
        total
    };
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut bound = rates(&state, &mut component);
    loop {
        if bound <= 0.0 {
            break;
        }
        let w = exp_waiting_time(&mut rng, bound);
        t += w;
        if t > cfg.horizon {
            break;
        }
        for (s, b) in state.iter_mut().zip(decay) {
            *s *= (-b * w).exp();
        }
        let rate = rates(&state, &mut component);
        if rng.random::<f64>() * bound > rate {
            bound = rate;
            continue;
        }
        let mut u = rng.random::<f64>() * rate;
        let mut kind = k - 1;
        for (i, c) in component.iter().enumerate() {
            if u < *c {
                kind = i;
                break;
            }
            u -= c;
        }
        let mark = sample_in_cell(&partition.cells()[kind], &mut rng);
        events.push(Event::new(t, mark));
        if events.len() > cfg.max_events {
            return Err(explosion(events, cfg, partition.space()));
        }
        for i in 0..k {
            state[i * k + kind] += scale[i * k + kind];
        }
        bound = rates(&state, &mut component);
    }
    Ok(EventStream::from_parts_unchecked(
        events,
        cfg.horizon,
        partition.space().clone(),
    ))
}

/// Replaces every mark by a label drawn uniformly from `1..=k`.
pub fn relabel_uniform<R: Rng>(stream: &EventStream, k: usize, rng: &mut R) -> Result<EventStream> {
    let space = MarkSpace::label_range(k)?;
    let marks: Vec<f64> = (0..stream.len())
        .map(|_| rng.random_range(1..=k as i64) as f64)
        .collect();
    stream.with_marks(&marks, space)
}
