//! Univariate marked Hawkes targets with deterministic mark density `f`,
//! optional offspring mark density, productivity `ξ` and mark-dependent decay
//! `β(M)`:
//!
//! ```text
//! λ_HP(t, M) = Λ f(M) + f₂(M) Σ_{t_l < t} ξ(M_l) g(t − t_l; β(M_l))
//! ```
//!
//! `f₂` defaults to `f`, in which case the intensity factorises into a mark
//! density times a ground intensity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelConvention;
use crate::partition::{Cell, MarkPartition};
use crate::quadrature::{integrate_adaptive, AdaptiveOptions};
use crate::space::MarkSpace;

/// Tolerance on `∫ f dμ = 1`.
pub const DENSITY_NORMALIZATION_TOL: f64 = 1e-8;

/// A real function on the mark space, in a serialisable closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkFunction {
    Constant { value: f64 },
    /// `c₀ + c₁ M + c₂ M² + …`
    Polynomial { coefficients: Vec<f64> },
    /// `values[i]` on `[breaks[i], breaks[i+1])`; clamps outside the breaks.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    /// Value per label of a discrete space; unlisted labels map to zero.
    Table { values: BTreeMap<i64, f64> },
}

impl MarkFunction {
    pub fn constant(value: f64) -> Self {
        MarkFunction::Constant { value }
    }

    pub fn polynomial(coefficients: impl Into<Vec<f64>>) -> Self {
        MarkFunction::Polynomial {
            coefficients: coefficients.into(),
        }
    }

    pub fn piecewise(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::invalid(
                "piecewise function needs one more break than values",
            ));
        }
        if breaks.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::invalid("piecewise breaks must be strictly increasing"));
        }
        Ok(MarkFunction::Piecewise { breaks, values })
    }

    /// The uniform probability density `1/μ(M)`.
    pub fn uniform_density(space: &MarkSpace) -> Self {
        MarkFunction::Constant {
            value: 1.0 / space.measure(),
        }
    }

    pub fn eval(&self, mark: f64) -> f64 {
        match self {
            MarkFunction::Constant { value } => *value,
            MarkFunction::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * mark + c)
            }
            MarkFunction::Piecewise { breaks, values } => {
                let pos = breaks.partition_point(|&b| b <= mark);
                values[pos.saturating_sub(1).min(values.len() - 1)]
            }
            MarkFunction::Table { values } => {
                if mark.fract() != 0.0 {
                    return 0.0;
                }
                values.get(&(mark as i64)).copied().unwrap_or(0.0)
            }
        }
    }

    /// Interior points where the function may be discontinuous.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            MarkFunction::Piecewise { breaks, .. } => breaks,
            _ => &[],
        }
    }

    /// An upper bound of the function on `[lower, upper]`.
    pub fn upper_bound(&self, lower: f64, upper: f64) -> f64 {
        match self {
            MarkFunction::Constant { value } => *value,
            MarkFunction::Polynomial { coefficients } => {
                let r = lower.abs().max(upper.abs());
                coefficients
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c.abs() * r.powi(k as i32))
                    .sum()
            }
            MarkFunction::Piecewise { breaks, values } => {
                let pos_lo = breaks.partition_point(|&b| b <= lower).saturating_sub(1);
                let pos_hi = breaks.partition_point(|&b| b <= upper).saturating_sub(1);
                let hi = pos_hi.min(values.len() - 1);
                let lo = pos_lo.min(hi);
                values[lo..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
            MarkFunction::Table { values } => {
                values.values().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    /// `∫_{cell} self dμ`.
    pub fn integrate_cell(&self, cell: &Cell) -> Result<f64> {
        match cell {
            Cell::Labels { labels } => Ok(labels.iter().map(|&l| self.eval(l as f64)).sum()),
            Cell::Interval { lower, upper, .. } => {
                integrate_interval(|m| self.eval(m), *lower, *upper, self.breakpoints())
            }
        }
    }

    /// `(1/μ(A)) ∫_A self dμ`.
    pub fn cell_mean(&self, cell: &Cell) -> Result<f64> {
        if let MarkFunction::Constant { value } = self {
            return Ok(*value);
        }
        Ok(self.integrate_cell(cell)? / cell.measure())
    }

    /// `∫_M self dμ`.
    pub fn integrate_space(&self, space: &MarkSpace) -> Result<f64> {
        self.integrate_cell(&whole_space_cell(space))
    }

    /// Sample points used to check sign constraints.
    fn probe_points(&self, space: &MarkSpace) -> Vec<f64> {
        match space {
            MarkSpace::Discrete { labels } => labels.iter().map(|&l| l as f64).collect(),
            MarkSpace::Continuous { lower, upper } => {
                let n = 1000;
                let mut pts: Vec<f64> = (0..=n)
                    .map(|i| lower + (upper - lower) * i as f64 / n as f64)
                    .collect();
                pts.extend(
                    self.breakpoints()
                        .iter()
                        .filter(|b| **b >= *lower && **b <= *upper),
                );
                pts
            }
        }
    }
}

pub(crate) fn whole_space_cell(space: &MarkSpace) -> Cell {
    match space {
        MarkSpace::Continuous { lower, upper } => Cell::Interval {
            lower: *lower,
            upper: *upper,
            closed: true,
        },
        MarkSpace::Discrete { labels } => Cell::Labels {
            labels: labels.clone(),
        },
    }
}

/// Adaptive Gauss–Legendre over `[lower, upper]`, split at `breaks`.
pub(crate) fn integrate_interval(
    f: impl Fn(f64) -> f64,
    lower: f64,
    upper: f64,
    breaks: &[f64],
) -> Result<f64> {
    let opts = AdaptiveOptions {
        rtol: 1e-12,
        atol: 1e-15 * (upper - lower),
        ..Default::default()
    };
    let mut edges = vec![lower];
    edges.extend(breaks.iter().copied().filter(|b| *b > lower && *b < upper));
    edges.push(upper);
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += integrate_adaptive(&f, w[0], w[1], &opts)?.value;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TargetRepr")]
pub struct TargetSpec {
    pub space: MarkSpace,
    /// Λ, the immigrant rate.
    pub immigrant_rate: f64,
    /// Mark density of immigrants (and of offspring unless overridden).
    pub mark_density: MarkFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offspring_density: Option<MarkFunction>,
    /// ξ(M), the mark-variable productivity.
    pub productivity: MarkFunction,
    /// β(M), decay of the kernel triggered by an event with mark M.
    pub decay: MarkFunction,
    #[serde(default)]
    pub kernel: KernelConvention,
}

#[derive(Deserialize)]
struct TargetRepr {
    space: MarkSpace,
    immigrant_rate: f64,
    mark_density: MarkFunction,
    #[serde(default)]
    offspring_density: Option<MarkFunction>,
    productivity: MarkFunction,
    decay: MarkFunction,
    #[serde(default)]
    kernel: KernelConvention,
}

impl TryFrom<TargetRepr> for TargetSpec {
    type Error = Error;

    fn try_from(r: TargetRepr) -> Result<Self> {
        let spec = TargetSpec {
            space: r.space,
            immigrant_rate: r.immigrant_rate,
            mark_density: r.mark_density,
            offspring_density: r.offspring_density,
            productivity: r.productivity,
            decay: r.decay,
            kernel: r.kernel,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TargetSpec {
    pub fn new(
        space: MarkSpace,
        immigrant_rate: f64,
        mark_density: MarkFunction,
        productivity: MarkFunction,
        decay: MarkFunction,
        kernel: KernelConvention,
    ) -> Result<Self> {
        let spec = TargetSpec {
            space,
            immigrant_rate,
            mark_density,
            offspring_density: None,
            productivity,
            decay,
            kernel,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_offspring_density(mut self, density: MarkFunction) -> Result<Self> {
        self.offspring_density = Some(density);
        self.validate()?;
        Ok(self)
    }

    /// `λ(t) = background + Σ excitation·e^{−decay(t−t_i)}` with marks uniform
    /// on the labels `1..=k`.
    pub fn exponential_uniform_labels(
        k: usize,
        background: f64,
        excitation: f64,
        decay: f64,
    ) -> Result<Self> {
        let space = MarkSpace::label_range(k)?;
        Self::new(
            space.clone(),
            background,
            MarkFunction::uniform_density(&space),
            MarkFunction::constant(excitation),
            MarkFunction::constant(decay),
            KernelConvention::Unnormalized,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if !(self.immigrant_rate.is_finite() && self.immigrant_rate > 0.0) {
            return Err(Error::invalid("immigrant rate must be positive"));
        }
        let mut densities = vec![("mark density", &self.mark_density)];
        if let Some(f2) = &self.offspring_density {
            densities.push(("offspring density", f2));
        }
        for (name, f) in densities {
            let total = f.integrate_space(&self.space)?;
            if (total - 1.0).abs() > DENSITY_NORMALIZATION_TOL {
                return Err(Error::invalid(format!(
                    "{name} integrates to {total}, not 1"
                )));
            }
            if f.probe_points(&self.space).iter().any(|&m| f.eval(m) < 0.0) {
                return Err(Error::invalid(format!("{name} takes negative values")));
            }
        }
        let probes = self.productivity.probe_points(&self.space);
        if probes
            .iter()
            .any(|&m| !(self.productivity.eval(m) >= 0.0 && self.productivity.eval(m).is_finite()))
        {
            return Err(Error::invalid("productivity must be finite and non-negative"));
        }
        let probes = self.decay.probe_points(&self.space);
        if probes
            .iter()
            .any(|&m| !(self.decay.eval(m) > 0.0 && self.decay.eval(m).is_finite()))
        {
            return Err(Error::invalid("decay must be finite and positive"));
        }
        Ok(())
    }

    /// True when offspring marks follow the immigrant mark density.
    pub fn is_separable(&self) -> bool {
        self.offspring_density
            .as_ref()
            .is_none_or(|f2| *f2 == self.mark_density)
    }

    pub fn offspring_mark_density(&self) -> &MarkFunction {
        self.offspring_density.as_ref().unwrap_or(&self.mark_density)
    }

    /// Kernel value `g(lag; β(source_mark))`.
    pub fn kernel_value(&self, lag: f64, source_mark: f64) -> f64 {
        self.kernel.value(lag, self.decay.eval(source_mark))
    }

    /// Expected number of direct offspring of an event with mark `m`.
    pub fn offspring_mean(&self, mark: f64) -> f64 {
        self.productivity.eval(mark) * self.kernel.mass(self.decay.eval(mark))
    }

    /// `I = ∫ f₂(M) ξ(M) ∫g(·;β(M)) dμ(M)`, the mean offspring count of a
    /// non-immigrant event. The target is stationary iff `I < 1`.
    pub fn branching_ratio(&self) -> Result<f64> {
        let f2 = self.offspring_mark_density();
        let integrand = |m: f64| f2.eval(m) * self.offspring_mean(m);
        match &self.space {
            MarkSpace::Discrete { labels } => Ok(labels.iter().map(|&l| integrand(l as f64)).sum()),
            MarkSpace::Continuous { lower, upper } => {
                let mut breaks = f2.breakpoints().to_vec();
                breaks.extend_from_slice(self.productivity.breakpoints());
                breaks.extend_from_slice(self.decay.breakpoints());
                breaks.sort_by(f64::total_cmp);
                integrate_interval(integrand, *lower, *upper, &breaks)
            }
        }
    }

    /// λ_HP(t, M | H_t) for a history given as `(time, mark)` pairs.
    pub fn intensity(&self, t: f64, mark: f64, history: &[crate::events::Event]) -> f64 {
        let excitation: f64 = history
            .iter()
            .take_while(|e| e.time < t)
            .map(|e| self.productivity.eval(e.mark) * self.kernel_value(t - e.time, e.mark))
            .sum();
        self.immigrant_rate * self.mark_density.eval(mark)
            + self.offspring_mark_density().eval(mark) * excitation
    }

    /// Per-cell averages of `f`, `f₂`, `ξ` and `β` on a partition.
    pub fn cell_averages(&self, partition: &MarkPartition) -> Result<CellAverages> {
        if partition.space() != &self.space {
            return Err(Error::invalid("partition is built on a different mark space"));
        }
        let mean = |f: &MarkFunction| -> Result<Vec<f64>> {
            partition.cells().iter().map(|c| f.cell_mean(c)).collect()
        };
        Ok(CellAverages {
            immigrant_density: mean(&self.mark_density)?,
            offspring_density: mean(self.offspring_mark_density())?,
            productivity: mean(&self.productivity)?,
            decay: mean(&self.decay)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAverages {
    pub immigrant_density: Vec<f64>,
    pub offspring_density: Vec<f64>,
    pub productivity: Vec<f64>,
    pub decay: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn function_evaluation() {
        let p = MarkFunction::polynomial(vec![0.3, 0.4]);
        assert!((p.eval(0.5) - 0.5).abs() < 1e-15);
        let pw = MarkFunction::piecewise(vec![0.0, 0.5, 1.0], vec![1.5, 0.5]).unwrap();
        assert_eq!(pw.eval(0.25), 1.5);
        assert_eq!(pw.eval(0.5), 0.5);
        assert_eq!(pw.eval(1.0), 0.5);
        let t = MarkFunction::Table {
            values: [(1, 0.25), (2, 0.75)].into_iter().collect(),
        };
        assert_eq!(t.eval(2.0), 0.75);
        assert_eq!(t.eval(3.0), 0.0);
        assert!(MarkFunction::piecewise(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn upper_bounds_dominate() {
        let fs = [
            MarkFunction::polynomial(vec![0.3, -0.4, 2.0]),
            MarkFunction::piecewise(vec![0.0, 0.3, 0.7, 1.0], vec![0.5, 2.0, 0.1]).unwrap(),
            MarkFunction::constant(0.7),
        ];
        for f in &fs {
            let b = f.upper_bound(0.0, 1.0);
            for i in 0..=1000 {
                assert!(f.eval(i as f64 / 1000.0) <= b + 1e-15);
            }
        }
    }

    #[test]
    fn cell_integrals_split_at_breaks() {
        let pw = MarkFunction::piecewise(vec![0.0, 0.3, 1.0], vec![2.0, 4.0 / 7.0]).unwrap();
        let cell = Cell::Interval {
            lower: 0.0,
            upper: 1.0,
            closed: true,
        };
        assert!((pw.integrate_cell(&cell).unwrap() - 1.0).abs() < 1e-14);
        let lin = MarkFunction::polynomial(vec![0.0, 2.0]);
        let c = Cell::Interval {
            lower: 0.5,
            upper: 1.0,
            closed: true,
        };
        assert!((lin.cell_mean(&c).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn validation_of_targets() {
        let s = MarkSpace::unit_interval();
        let ok = TargetSpec::new(
            s.clone(),
            1.0,
            MarkFunction::polynomial(vec![0.0, 2.0]),
            MarkFunction::constant(0.5),
            MarkFunction::constant(1.0),
            KernelConvention::Density,
        );
        assert!(ok.is_ok());
        let not_normalized = TargetSpec::new(
            s.clone(),
            1.0,
            MarkFunction::constant(2.0),
            MarkFunction::constant(0.5),
            MarkFunction::constant(1.0),
            KernelConvention::Density,
        );
        assert!(not_normalized.is_err());
        let negative_prod = TargetSpec::new(
            s.clone(),
            1.0,
            MarkFunction::constant(1.0),
            MarkFunction::polynomial(vec![-0.1, 1.0]),
            MarkFunction::constant(1.0),
            KernelConvention::Density,
        );
        assert!(negative_prod.is_err());
        let zero_decay = TargetSpec::new(
            s,
            1.0,
            MarkFunction::constant(1.0),
            MarkFunction::constant(1.0),
            MarkFunction::polynomial(vec![0.0, 1.0]),
            KernelConvention::Density,
        );
        assert!(zero_decay.is_err());
    }

    #[test]
    fn branching_ratio_of_exponential_target() {
        let spec = TargetSpec::exponential_uniform_labels(6, 1.0, 1.0, 2.0).unwrap();
        assert!((spec.branching_ratio().unwrap() - 0.5).abs() < 1e-15);
        let lin = TargetSpec::new(
            MarkSpace::unit_interval(),
            1.0,
            MarkFunction::constant(1.0),
            MarkFunction::polynomial(vec![0.3, 0.4]),
            MarkFunction::constant(2.0),
            KernelConvention::Density,
        )
        .unwrap();
        assert!((lin.branching_ratio().unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn serde_validates() {
        let spec = TargetSpec::exponential_uniform_labels(3, 1.0, 1.0, 2.0).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<TargetSpec>(&json).unwrap(), spec);
        let broken = json.replace("\"immigrant_rate\":1.0", "\"immigrant_rate\":-1.0");
        assert!(serde_json::from_str::<TargetSpec>(&broken).is_err());
    }
}
