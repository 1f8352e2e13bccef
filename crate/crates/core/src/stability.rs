//! Branching structure of the representation: expected first-generation
//! offspring counts, their spectral radius, and stationarity verdicts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{MvParams, SquareMatrix};
use crate::partition::MarkPartition;
use crate::target::TargetSpec;

/// Half-width of the band around `ρ = 1` reported as critical.
pub const CRITICAL_BAND: f64 = 1e-9;
/// Largest matrix accepted by [`spectral_radius`].
pub const MAX_SPECTRAL_DIM: usize = 64;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;

/// `B_ij = μ(A_i) α_ij ∫g_ij`, the expected number of type-`i` children of
/// one type-`j` event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingMatrix {
    pub matrix: SquareMatrix,
    pub spectral_radius: f64,
}

impl BranchingMatrix {
    /// Expected first-generation offspring of a type-`j` event, `E_j`.
    pub fn offspring_means(&self) -> Vec<f64> {
        self.matrix.column_sums()
    }
}

pub fn branching_matrix(params: &MvParams, partition: &MarkPartition) -> Result<BranchingMatrix> {
    params.validate()?;
    params.check_dim(partition.len())?;
    let mass = params.kernel_mass();
    let mu = partition.measures();
    let matrix = SquareMatrix::from_fn(params.dim(), |i, j| mu[i] * mass[(i, j)]);
    let spectral_radius = spectral_radius(&matrix)?;
    Ok(BranchingMatrix {
        matrix,
        spectral_radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMethod {
    ClosedForm,
    PowerIteration,
    /// Gelfand's formula by repeated squaring; used when power iteration
    /// stalls (defective or reducible matrices).
    IteratedSquaring,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub method: SpectralMethod,
    /// Bound on `|value − ρ|` when the method provides one; `None` for the
    /// iterated-squaring fallback.
    pub error_bound: Option<f64>,
    pub iterations: usize,
}

/// Spectral radius of a non-negative square matrix.
pub fn spectral_radius(b: &SquareMatrix) -> Result<f64> {
    Ok(spectral_radius_detailed(b)?.value)
}

pub fn spectral_radius_detailed(b: &SquareMatrix) -> Result<SpectralEstimate> {
    let n = b.dim();
    if n == 0 || n > MAX_SPECTRAL_DIM {
        return Err(Error::invalid(format!(
            "spectral radius needs 1..={MAX_SPECTRAL_DIM} rows, got {n}"
        )));
    }
    if b.as_slice().iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::invalid("branching matrix entries must be finite and non-negative"));
    }
    if n <= 2 {
        let value = if n == 1 {
            b[(0, 0)]
        } else {
            let (a, c, d, e) = (b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
            // real eigenvalues since the discriminant (a−e)² + 4cd is non-negative
            0.5 * (a + e + ((a - e).powi(2) + 4.0 * c * d).sqrt())
        };
        return Ok(SpectralEstimate {
            value,
            method: SpectralMethod::ClosedForm,
            error_bound: Some(0.0),
            iterations: 0,
        });
    }
    if let Some(est) = shifted_power_iteration(b) {
        return Ok(est);
    }
    Ok(iterated_squaring(b))
}

/// Power iteration on `B + I` from the all-ones vector. Every iterate stays
/// strictly positive, so the Collatz–Wielandt ratios bracket `ρ(B) + 1`.
fn shifted_power_iteration(b: &SquareMatrix) -> Option<SpectralEstimate> {
    let n = b.dim();
    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    for iter in 1..=POWER_MAX_ITER {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = x[i] + b.row(i).iter().zip(&x).map(|(a, v)| a * v).sum::<f64>();
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (yi, xi) in y.iter().zip(&x) {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if hi - lo <= POWER_TOL * hi {
            return Some(SpectralEstimate {
                value: (0.5 * (lo + hi) - 1.0).max(0.0),
                method: SpectralMethod::PowerIteration,
                error_bound: Some(0.5 * (hi - lo)),
                iterations: iter,
            });
        }
        let norm = y.iter().cloned().fold(0.0, f64::max);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
    }
    None
}

/// `ρ = lim ‖B^{2^m}‖^{1/2^m}`, renormalising at each squaring.
fn iterated_squaring(b: &SquareMatrix) -> SpectralEstimate {
    let norm = |m: &SquareMatrix| m.as_slice().iter().cloned().fold(0.0, f64::max);
    let mut m = b.clone();
    let mut log_scale = 0.0;
    let mut power = 1.0;
    let mut value = norm(b);
    let steps = 48;
    for _ in 0..steps {
        let s = norm(&m);
        if s == 0.0 {
            value = 0.0;
            break;
        }
        m = m.scaled(1.0 / s);
        log_scale += s.ln() / power;
        m = m.matmul(&m);
        power *= 2.0;
        let s2 = norm(&m);
        if s2 == 0.0 {
            value = 0.0;
            break;
        }
        value = (log_scale + s2.ln() / power).exp();
    }
    SpectralEstimate {
        value,
        method: SpectralMethod::IteratedSquaring,
        error_bound: None,
        iterations: steps,
    }
}

/// `J = Σ_i μ(A_i) f̃₂_i ξ̃_i ∫g(·; β̄_i)`: the expected offspring of a
/// non-immigrant event in the ansatz representation.
pub fn j_statistic(spec: &TargetSpec, partition: &MarkPartition) -> Result<f64> {
    let avg = spec.cell_averages(partition)?;
    Ok((0..partition.len())
        .map(|i| {
            partition.measures()[i]
                * avg.offspring_density[i]
                * avg.productivity[i]
                * spec.kernel.mass(avg.decay[i])
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stationarity {
    Stationary,
    Critical,
    Supercritical,
}

impl Stationarity {
    pub fn classify(rho: f64) -> Self {
        if (rho - 1.0).abs() < CRITICAL_BAND {
            Stationarity::Critical
        } else if rho < 1.0 {
            Stationarity::Stationary
        } else {
            Stationarity::Supercritical
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub verdict: Stationarity,
    pub spectral_radius: f64,
    /// `1 − ρ`.
    pub margin: f64,
}

pub fn is_stationary(params: &MvParams, partition: &MarkPartition) -> Result<StationarityReport> {
    let b = branching_matrix(params, partition)?;
    Ok(StationarityReport {
        verdict: Stationarity::classify(b.spectral_radius),
        spectral_radius: b.spectral_radius,
        margin: 1.0 - b.spectral_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelConvention;
    use crate::represent::build_ansatz;
    use crate::space::MarkSpace;
    use crate::target::MarkFunction;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn eig_oracle(b: &SquareMatrix) -> f64 {
        let n = b.dim();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| b[(i, j)]);
        m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn mat(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_row_major(rows.len(), rows.concat()).unwrap()
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&SquareMatrix::identity(3)).unwrap(), 1.0);
        assert_eq!(spectral_radius(&mat(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap(), 0.0);
        let r = spectral_radius(&mat(&[&[0.2, 0.3], &[0.3, 0.2]])).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert_eq!(spectral_radius(&SquareMatrix::zeros(5)).unwrap(), 0.0);
    }

    #[test]
    fn nilpotent_falls_back_to_squaring() {
        let b = mat(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]);
        let est = spectral_radius_detailed(&b).unwrap();
        assert_eq!(est.method, SpectralMethod::IteratedSquaring);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn matches_dense_eigensolver() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for n in [3, 4, 4, 4, 6, 10] {
            let b = SquareMatrix::from_fn(n, |_, _| rng.random::<f64>());
            let r = spectral_radius(&b).unwrap();
            let o = eig_oracle(&b);
            assert!((r - o).abs() < 1e-8, "{r} vs {o}");
        }
    }

    #[test]
    fn rejects_negative_and_oversized() {
        assert!(spectral_radius(&mat(&[&[-1.0]])).is_err());
        assert!(spectral_radius(&SquareMatrix::zeros(65)).is_err());
    }

    #[test]
    fn branching_examples() {
        let space = MarkSpace::unit_interval();
        let p1 = MarkPartition::uniform(&space, 1).unwrap();
        let dens = MvParams::constant(1, 1.0, 0.5, 3.0, KernelConvention::Density).unwrap();
        let b = branching_matrix(&dens, &p1).unwrap();
        assert_eq!(b.matrix[(0, 0)], 0.5);
        assert_eq!(b.spectral_radius, 0.5);

        let p2 = MarkPartition::uniform(&space, 2).unwrap();
        let zero = MvParams::constant(2, 1.0, 0.0, 1.0, KernelConvention::Density).unwrap();
        let b = branching_matrix(&zero, &p2).unwrap();
        assert_eq!(b.spectral_radius, 0.0);
        assert!(b.matrix.as_slice().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn column_sums_are_offspring_means() {
        let space = MarkSpace::unit_interval();
        let p = MarkPartition::from_breaks(&space, vec![0.0, 0.2, 0.7, 1.0]).unwrap();
        let params = MvParams::new(
            vec![1.0; 3],
            mat(&[&[0.1, 0.2, 0.3], &[0.4, 0.5, 0.6], &[0.7, 0.8, 0.9]]),
            SquareMatrix::filled(3, 1.0),
            KernelConvention::Density,
        )
        .unwrap();
        let b = branching_matrix(&params, &p).unwrap();
        let e = b.offspring_means();
        for (j, &ej) in e.iter().enumerate() {
            let want: f64 = (0..3).map(|i| p.measures()[i] * params.excitation[(i, j)]).sum();
            assert!((ej - want).abs() < 1e-15);
        }
    }

    #[test]
    fn eq10_verdicts() {
        let spec = TargetSpec::exponential_uniform_labels(1, 1.0, 1.0, 2.0).unwrap();
        let p = MarkPartition::uniform(&spec.space, 1).unwrap();
        let a = build_ansatz(&spec, &p).unwrap().params;
        let r = is_stationary(&a, &p).unwrap();
        assert_eq!(r.verdict, Stationarity::Stationary);
        assert_eq!(r.margin, 0.5);
        assert_eq!(
            is_stationary(&a.with_scaled_excitation(2.0), &p).unwrap().verdict,
            Stationarity::Critical
        );
        assert_eq!(
            is_stationary(&a.with_scaled_excitation(3.0), &p).unwrap().verdict,
            Stationarity::Supercritical
        );
        assert!((j_statistic(&spec, &p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn j_statistic_examples() {
        let space = MarkSpace::unit_interval();
        let uniform = MarkFunction::uniform_density(&space);
        let flat = TargetSpec::new(
            space.clone(),
            1.0,
            uniform.clone(),
            MarkFunction::constant(0.5),
            MarkFunction::constant(1.0),
            KernelConvention::Density,
        )
        .unwrap();
        for k in [1, 3, 7] {
            let p = MarkPartition::uniform(&space, k).unwrap();
            assert!((j_statistic(&flat, &p).unwrap() - 0.5).abs() < 1e-12);
        }
        let linear = TargetSpec::new(
            space.clone(),
            1.0,
            uniform,
            MarkFunction::polynomial(vec![0.0, 1.0]),
            MarkFunction::constant(1.0),
            KernelConvention::Density,
        )
        .unwrap();
        for k in [4, 16, 64] {
            let p = MarkPartition::uniform(&space, k).unwrap();
            let j = j_statistic(&linear, &p).unwrap();
            assert!((j - 0.5).abs() <= 1.0 / k as f64, "{j}");
        }
    }

    #[test]
    fn ansatz_rank_one_identity() {
        let space = MarkSpace::interval(-1.0, 2.0).unwrap();
        let f = MarkFunction::polynomial(vec![0.25, 1.0 / 6.0]);
        let spec = TargetSpec::new(
            space.clone(),
            1.0,
            f,
            MarkFunction::polynomial(vec![0.2, 0.1, 0.05]),
            MarkFunction::polynomial(vec![2.0, 0.5]),
            KernelConvention::Unnormalized,
        )
        .unwrap();
        for k in [1, 2, 3, 5, 12] {
            let p = MarkPartition::uniform(&space, k).unwrap();
            let a = build_ansatz(&spec, &p).unwrap();
            let rho = branching_matrix(&a.params, &p).unwrap().spectral_radius;
            let j = j_statistic(&spec, &p).unwrap();
            assert!((rho - j).abs() < 1e-10, "K={k}: {rho} vs {j}");
        }
    }

    proptest! {
        #[test]
        fn scale_equivariance(entries in prop::collection::vec(0.0f64..2.0, 16), c in 0.01f64..10.0) {
            let b = SquareMatrix::from_row_major(4, entries).unwrap();
            let r = spectral_radius(&b).unwrap();
            let rc = spectral_radius(&b.scaled(c)).unwrap();
            prop_assert!((rc - c * r).abs() <= 1e-9 * (1.0 + c * r));
        }

        #[test]
        fn monotone_in_entries(entries in prop::collection::vec(0.0f64..2.0, 9), idx in 0usize..9, bump in 0.0f64..1.0) {
            let b = SquareMatrix::from_row_major(3, entries.clone()).unwrap();
            let mut e2 = entries;
            e2[idx] += bump;
            let b2 = SquareMatrix::from_row_major(3, e2).unwrap();
            prop_assert!(spectral_radius(&b2).unwrap() >= spectral_radius(&b).unwrap() - 1e-9);
        }

        #[test]
        fn agrees_with_oracle(entries in prop::collection::vec(0.0f64..1.0, 25)) {
            let b = SquareMatrix::from_row_major(5, entries).unwrap();
            prop_assert!((spectral_radius(&b).unwrap() - eig_oracle(&b)).abs() < 1e-8);
        }
    }
}
