//! Box-constrained BFGS with Armijo backtracking.
//!
//! Coordinates sitting on a bound with the gradient pointing outward are
//! frozen for the step; the convergence test uses the gradient with those
//! coordinates removed.

use serde::{Deserialize, Serialize};

/// Consecutive steps below `ftol` needed to stop on objective change. Near an
/// optimum single steps are tiny anyway, so one small change is not evidence
/// of stagnation.
pub const STALL_STEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub gtol: f64,
    /// Relative change of the objective treated as converged.
    pub ftol: f64,
    pub max_iter: usize,
    /// Largest change of any coordinate in one step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            gtol: 1e-6,
            ftol: 1e-10,
            max_iter: 2000,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    ObjectiveChange,
    IterationCap,
    /// No descent step could be found from a fresh identity Hessian.
    LineSearch,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::Gradient | Termination::ObjectiveChange)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| {
            if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                0.0
            } else {
                gi * gi
            }
        })
        .sum::<f64>()
        .sqrt()
}

/// Minimises `f` over the box `[lower, upper]` starting from `x0`.
/// `f` returns the value and gradient; non-finite values are treated as
/// `+∞` by the line search.
pub fn minimize<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for ((xi, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
            *xi = xi.clamp(*lo, *hi);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let (mut fx, mut g) = f(&x);
    let identity = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = scale;
        }
    };
    let mut h = vec![0.0; n * n];
    identity(&mut h, 1.0);
    let mut fresh = true;
    let mut iterations = 0;
    // consecutive steps with negligible objective change
    let mut stalled = 0;
    let mut gnorm = projected_norm(&x, &g, lower, upper);
    let termination = loop {
        if gnorm < opts.gtol {
            break Termination::Gradient;
        }
        if iterations >= opts.max_iter {
            break Termination::IterationCap;
        }
        iterations += 1;
        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0))
            .collect();
        let mut d: Vec<f64> = (0..n)
            .map(|i| {
                if active[i] {
                    0.0
                } else {
                    -(0..n).filter(|&j| !active[j]).map(|j| h[i * n + j] * g[j]).sum::<f64>()
                }
            })
            .collect();
        if dot(&d, &g) >= 0.0 {
            identity(&mut h, 1.0);
            fresh = true;
            d = (0..n).map(|i| if active[i] { 0.0 } else { -g[i] }).collect();
        }
        let biggest = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if biggest > opts.max_step {
            d.iter_mut().for_each(|v| *v *= opts.max_step / biggest);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            clamp(&mut xn);
            let moved: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &moved);
            if decrease >= 0.0 {
                step *= 0.5;
                continue;
            }
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease {
                accepted = Some((xn, fn_, gn, moved));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            if fresh {
                break Termination::LineSearch;
            }
            identity(&mut h, 1.0);
            fresh = true;
            continue;
        };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                identity(&mut h, sy / dot(&y, &y));
                fresh = false;
            }
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        let change = (fx - fn_).abs();
        let scale = fx.abs().max(fn_.abs()).max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        gnorm = projected_norm(&x, &g, lower, upper);
        if change <= opts.ftol * scale {
            stalled += 1;
            if stalled >= STALL_STEPS && gnorm >= opts.gtol {
                break Termination::ObjectiveChange;
            }
        } else {
            stalled = 0;
        }
    };
    Minimum {
        x,
        value: fx,
        gradient_norm: gnorm,
        iterations,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            (
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
                vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
            )
        };
        let m = minimize(f, &[-1.2, 1.0], &[-10.0; 2], &[10.0; 2], &BfgsOptions::default());
        assert!(m.termination.converged());
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| ((x[0] + 3.0).powi(2) + (x[1] - 0.5).powi(2), vec![2.0 * (x[0] + 3.0), 2.0 * (x[1] - 0.5)]);
        let m = minimize(f, &[0.5, 0.0], &[0.0, 0.0], &[1.0, 1.0], &BfgsOptions::default());
        assert_eq!(m.x[0], 0.0);
        assert!((m.x[1] - 0.5).abs() < 1e-7);
        assert_eq!(m.termination, Termination::Gradient);
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            (
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
                vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
            )
        };
        let opts = BfgsOptions {
            max_iter: 3,
            ..Default::default()
        };
        let m = minimize(f, &[-1.2, 1.0], &[-10.0; 2], &[10.0; 2], &opts);
        assert_eq!(m.termination, Termination::IterationCap);
        assert!(!m.termination.converged());
    }
}
