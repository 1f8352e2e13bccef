//! From a marked target to its K-component representation: the cell-average
//! ansatz, the induced ground intensity and mark density, the histogram mark
//! density estimate, and the L¹ distance between target and representation
//! intensities on a shared history.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, EventStream};
use crate::params::{MvParams, SquareMatrix};
use crate::partition::{Cell, MarkPartition};
use crate::quadrature::{integrate_adaptive, AdaptiveOptions};
use crate::target::TargetSpec;

/// Ansatz parameters together with the cell averages they were built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzParams {
    pub params: MvParams,
    /// f̃_i, mean of the immigrant mark density over `A_i`.
    pub immigrant_density: Vec<f64>,
    /// Mean of the offspring mark density over `A_i`.
    pub offspring_density: Vec<f64>,
    /// ξ̃_j, mean productivity over `A_j`.
    pub productivity: Vec<f64>,
}

/// Cell-average ansatz: `λ0_i = Λ f̃_i`, `α_ij = f̃₂_i ξ̃_j`, `β_ij = β̄_j`.
pub fn build_ansatz(spec: &TargetSpec, partition: &MarkPartition) -> Result<AnsatzParams> {
    let avg = spec.cell_averages(partition)?;
    let k = partition.len();
    let background = avg
        .immigrant_density
        .iter()
        .map(|f| spec.immigrant_rate * f)
        .collect();
    let excitation = SquareMatrix::from_fn(k, |i, j| avg.offspring_density[i] * avg.productivity[j]);
    let decay = SquareMatrix::from_fn(k, |_, j| avg.decay[j]);
    Ok(AnsatzParams {
        params: MvParams::new(background, excitation, decay, spec.kernel)?,
        immigrant_density: avg.immigrant_density,
        offspring_density: avg.offspring_density,
        productivity: avg.productivity,
    })
}

fn check_time(stream: &EventStream, t: f64) -> Result<()> {
    if !(0.0..=stream.horizon()).contains(&t) {
        return Err(Error::TimeOutOfWindow {
            t,
            horizon: stream.horizon(),
        });
    }
    Ok(())
}

/// Per-cell representation intensities `λ0_i + Σ_j α_ij Σ_{t_l,j < t} g_ij(t − t_l)`.
pub fn component_intensities(
    params: &MvParams,
    partition: &MarkPartition,
    stream: &EventStream,
    t: f64,
) -> Result<Vec<f64>> {
    let k = partition.len();
    params.check_dim(k)?;
    check_time(stream, t)?;
    let mut rates = params.background.clone();
    for e in stream.events().iter().take_while(|e| e.time < t) {
        let j = partition.locate(e.mark)?;
        for (i, r) in rates.iter_mut().enumerate() {
            *r += params.excitation[(i, j)] * params.kernel.value(t - e.time, params.decay[(i, j)]);
        }
    }
    Ok(rates)
}

/// Ground intensity `Σ_i μ(A_i) λ_i(t)` of the representation.
pub fn induced_ground_intensity(
    params: &MvParams,
    partition: &MarkPartition,
    stream: &EventStream,
    t: f64,
) -> Result<f64> {
    let rates = component_intensities(params, partition, stream, t)?;
    Ok(rates.iter().zip(partition.measures()).map(|(r, m)| r * m).sum())
}

/// Mark density `λ_θ(t, M) / λ_g(t)` induced by the representation.
pub fn induced_mark_density(
    params: &MvParams,
    partition: &MarkPartition,
    stream: &EventStream,
    t: f64,
    mark: f64,
) -> Result<f64> {
    let cell = partition.locate(mark)?;
    let rates = component_intensities(params, partition, stream, t)?;
    let ground: f64 = rates.iter().zip(partition.measures()).map(|(r, m)| r * m).sum();
    if ground <= 0.0 {
        return Err(Error::DegenerateDensity);
    }
    Ok(rates[cell] / ground)
}

/// Histogram heights `N_i / (N μ(A_i))`.
pub fn histogram_density(stream: &EventStream, partition: &MarkPartition) -> Result<Vec<f64>> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let n = stream.len() as f64;
    Ok(partition
        .counts(stream)?
        .iter()
        .zip(partition.measures())
        .map(|(&c, m)| c as f64 / (n * m))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub k: usize,
    pub l1: f64,
    pub per_cell: Vec<f64>,
    /// Integrand evaluations of the time quadrature.
    pub quadrature_nodes: usize,
}

/// Options for [`l1_discrepancy`].
#[derive(Debug, Clone, Copy)]
pub struct DiscrepancyOptions {
    pub time: AdaptiveOptions,
    pub mark: AdaptiveOptions,
}

impl Default for DiscrepancyOptions {
    fn default() -> Self {
        DiscrepancyOptions {
            time: AdaptiveOptions::default(),
            mark: AdaptiveOptions {
                nodes: 16,
                ..AdaptiveOptions::default()
            },
        }
    }
}

/// Exponential terms `Σ amp e^{−β (t − origin)}`, grouped by rate.
#[derive(Debug, Clone, Default)]
struct Bank {
    terms: Vec<(f64, f64)>,
}

impl Bank {
    fn add(&mut self, beta: f64, amp: f64) {
        if amp == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|(b, _)| *b == beta) {
            Some((_, a)) => *a += amp,
            None => self.terms.push((beta, amp)),
        }
    }

    fn at(&self, dt: f64) -> f64 {
        self.terms.iter().map(|(b, a)| a * (-b * dt).exp()).sum()
    }

    fn advance(&mut self, dt: f64, floor: f64) {
        for (b, a) in &mut self.terms {
            *a *= (-*b * dt).exp();
        }
        self.terms.retain(|(_, a)| *a > floor);
    }
}

/// `∫₀^T ∫_M |λ_HP(t, M) − λ_θ(t, M)| dμ(M) dt` with both intensities
/// conditioned on `stream`.
///
/// Both intensities are smooth between events, so the time integral runs
/// interval by interval; the absolute value introduces kinks that the
/// adaptive rule resolves by bisection.
pub fn l1_discrepancy(
    spec: &TargetSpec,
    params: &MvParams,
    partition: &MarkPartition,
    stream: &EventStream,
) -> Result<DiscrepancyReport> {
    l1_discrepancy_with(spec, params, partition, stream, &DiscrepancyOptions::default())
}

pub fn l1_discrepancy_with(
    spec: &TargetSpec,
    params: &MvParams,
    partition: &MarkPartition,
    stream: &EventStream,
    opts: &DiscrepancyOptions,
) -> Result<DiscrepancyReport> {
    let k = partition.len();
    params.check_dim(k)?;
    if partition.space() != &spec.space || stream.space() != &spec.space {
        return Err(Error::invalid("target, partition and stream must share a mark space"));
    }
    let types = partition.classify(stream)?;
    let f = &spec.mark_density;
    let f2 = spec.offspring_mark_density();
    let lambda = spec.immigrant_rate;
    let floor = 1e-300;

    // Target excitation H(t) and representation state S_ij at the interval origin.
    let mut target = Bank::default();
    let mut state = vec![0.0; k * k];
    let decay = params.decay.as_slice();
    let excitation = params.excitation.as_slice();

    let mut per_cell = vec![0.0; k];
    let mut nodes = 0usize;
    let mut origin = 0.0;
    let horizon = stream.horizon();
    let mut boundaries: Vec<(f64, Option<(&Event, usize)>)> = stream
        .events()
        .iter()
        .zip(&types)
        .map(|(e, &c)| (e.time, Some((e, c))))
        .collect();
    boundaries.push((horizon, None));

    for (end, event) in boundaries {
        if end > origin {
            for (i, cell) in partition.cells().iter().enumerate() {
                let row = &state[i * k..(i + 1) * k];
                let integrand = |t: f64| {
                    let dt = t - origin;
                    let h = target.at(dt);
                    let mut r = params.background[i];
                    for j in 0..k {
                        r += excitation[i * k + j] * row[j] * (-decay[i * k + j] * dt).exp();
                    }
                    cell_gap(cell, |m| lambda * f.eval(m) + f2.eval(m) * h - r, spec, &opts.mark)
                };
                let mut failure = None;
                let res = integrate_adaptive(
                    |t| match integrand(t) {
                        Ok(v) => v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    },
                    origin,
                    end,
                    &AdaptiveOptions {
                        atol: opts.time.atol * (end - origin),
                        ..opts.time
                    },
                )?;
                if let Some(e) = failure {
                    return Err(e);
                }
                per_cell[i] += res.value;
                nodes += res.evaluations;
            }
        }
        let dt = end - origin;
        target.advance(dt, floor);
        for (s, b) in state.iter_mut().zip(decay) {
            *s *= (-b * dt).exp();
        }
        if let Some((e, j)) = event {
            let beta = spec.decay.eval(e.mark);
            target.add(beta, spec.productivity.eval(e.mark) * spec.kernel.scale(beta));
            for i in 0..k {
                state[i * k + j] += params.kernel.scale(decay[i * k + j]);
            }
        }
        origin = end;
    }
    Ok(DiscrepancyReport {
        k,
        l1: per_cell.iter().sum(),
        per_cell,
        quadrature_nodes: nodes,
    })
}

/// `∫_{cell} |gap(M)| dμ(M)`.
fn cell_gap(
    cell: &Cell,
    gap: impl Fn(f64) -> f64,
    spec: &TargetSpec,
    opts: &AdaptiveOptions,
) -> Result<f64> {
    match cell {
        Cell::Labels { labels } => Ok(labels.iter().map(|&l| gap(l as f64).abs()).sum()),
        Cell::Interval { lower, upper, .. } => {
            let mut edges = vec![*lower];
            for f in [&spec.mark_density, spec.offspring_mark_density()] {
                edges.extend(f.breakpoints().iter().filter(|b| **b > *lower && **b < *upper));
            }
            edges.push(*upper);
            edges.sort_by(f64::total_cmp);
            edges.dedup();
            let mut total = 0.0;
            for w in edges.windows(2) {
                let local = AdaptiveOptions {
                    atol: opts.atol * (w[1] - w[0]),
                    ..*opts
                };
                total += integrate_adaptive(|m| gap(m).abs(), w[0], w[1], &local)?.value;
            }
            Ok(total)
        }
    }
}
