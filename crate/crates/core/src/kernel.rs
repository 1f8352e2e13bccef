//! Exponential excitation kernels under the two normalisation conventions.

use serde::{Deserialize, Serialize};

/// How the exponential kernel is normalised.
///
/// * `Density`: `g(t; β) = β e^{-βt}`, unit mass.
/// * `Unnormalized`: `g(t; β) = e^{-βt}`, mass `1/β`.
///
/// Stationarity is always judged on the kernel mass `α · ∫g`, so both
/// conventions share one code path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelConvention {
    #[default]
    Density,
    Unnormalized,
}

impl KernelConvention {
    /// Multiplier in front of `e^{-βt}`.
    #[inline]
    pub fn scale(self, beta: f64) -> f64 {
        match self {
            KernelConvention::Density => beta,
            KernelConvention::Unnormalized => 1.0,
        }
    }

    /// d(scale)/dβ.
    #[inline]
    pub fn scale_derivative(self) -> f64 {
        match self {
            KernelConvention::Density => 1.0,
            KernelConvention::Unnormalized => 0.0,
        }
    }

    #[inline]
    pub fn value(self, t: f64, beta: f64) -> f64 {
        self.scale(beta) * (-beta * t).exp()
    }

    /// `G(t) = ∫_0^t g(s; β) ds`.
    #[inline]
    pub fn integral(self, t: f64, beta: f64) -> f64 {
        let tail = -(-beta * t).exp_m1();
        match self {
            KernelConvention::Density => tail,
            KernelConvention::Unnormalized => tail / beta,
        }
    }

    /// ∂G(t; β)/∂β.
    #[inline]
    pub fn integral_beta_derivative(self, t: f64, beta: f64) -> f64 {
        let decay = (-beta * t).exp();
        match self {
            KernelConvention::Density => t * decay,
            KernelConvention::Unnormalized => {
                let tail = -(-beta * t).exp_m1();
                t * decay / beta - tail / (beta * beta)
            }
        }
    }

    /// `∫_0^∞ g(s; β) ds`.
    #[inline]
    pub fn mass(self, beta: f64) -> f64 {
        match self {
            KernelConvention::Density => 1.0,
            KernelConvention::Unnormalized => 1.0 / beta,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelConvention::Density => "density",
            KernelConvention::Unnormalized => "unnormalized",
        }
    }
}

impl std::str::FromStr for KernelConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "density" => Ok(KernelConvention::Density),
            "unnormalized" => Ok(KernelConvention::Unnormalized),
            other => Err(format!(
                "unknown kernel convention `{other}` (expected density or unnormalized)"
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        s * h
    }

    #[test]
    fn masses() {
        for conv in [KernelConvention::Density, KernelConvention::Unnormalized] {
            for beta in [0.3, 1.0, 2.0, 7.5] {
                let numeric = trapezoid(|t| conv.value(t, beta), 0.0, 60.0 / beta, 200_000);
                assert!((numeric - conv.mass(beta)).abs() < 1e-6, "{conv:?} {beta}");
                assert!((conv.integral(1e6, beta) - conv.mass(beta)).abs() < 1e-12);
            }
        }
        assert_eq!(KernelConvention::Unnormalized.mass(2.0), 0.5);
    }

    #[test]
    fn integral_matches_quadrature_and_derivative_matches_fd() {
        for conv in [KernelConvention::Density, KernelConvention::Unnormalized] {
            let (t, beta) = (1.7, 1.3);
            let numeric = trapezoid(|s| conv.value(s, beta), 0.0, t, 100_000);
            assert!((numeric - conv.integral(t, beta)).abs() < 1e-9);
            let h = 1e-6;
            let fd = (conv.integral(t, beta + h) - conv.integral(t, beta - h)) / (2.0 * h);
            assert!((fd - conv.integral_beta_derivative(t, beta)).abs() < 1e-8);
        }
    }

    #[test]
    fn parse() {
        assert_eq!("density".parse::<KernelConvention>().unwrap(), KernelConvention::Density);
        assert!("gaussian".parse::<KernelConvention>().is_err());
    }
}
