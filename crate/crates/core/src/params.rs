//! Parameters `θ = ({λ0_i}, {α_ij}, {β_ij})` of a K-component representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelConvention;

/// Dense row-major square matrix. Serialised as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn filled(n: usize, value: f64) -> Self {
        SquareMatrix {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::filled(n, 0.0)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        SquareMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)]).sum())
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl TryFrom<Vec<Vec<f64>>> for SquareMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                found: bad.len(),
            });
        }
        Ok(SquareMatrix {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }
}

impl From<SquareMatrix> for Vec<Vec<f64>> {
    fn from(m: SquareMatrix) -> Self {
        m.data.chunks(m.n.max(1)).map(<[f64]>::to_vec).collect()
    }
}

/// Background rates (per unit time per unit mark measure), excitation weights
/// and decay rates of the representation. Row `i` of `excitation`/`decay` is
/// the receiving type, column `j` the source type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvParams {
    pub background: Vec<f64>,
    pub excitation: SquareMatrix,
    pub decay: SquareMatrix,
    #[serde(default)]
    pub kernel: KernelConvention,
}

impl MvParams {
    pub fn new(
        background: Vec<f64>,
        excitation: SquareMatrix,
        decay: SquareMatrix,
        kernel: KernelConvention,
    ) -> Result<Self> {
        let p = MvParams {
            background,
            excitation,
            decay,
            kernel,
        };
        p.validate()?;
        Ok(p)
    }

    /// Every component equal: `λ0_i = background`, `α_ij = excitation`,
    /// `β_ij = decay`.
    pub fn constant(
        k: usize,
        background: f64,
        excitation: f64,
        decay: f64,
        kernel: KernelConvention,
    ) -> Result<Self> {
        Self::new(
            vec![background; k],
            SquareMatrix::filled(k, excitation),
            SquareMatrix::filled(k, decay),
            kernel,
        )
    }

    pub fn dim(&self) -> usize {
        self.background.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.background.len();
        if k == 0 {
            return Err(Error::invalid("parameters need at least one component"));
        }
        for m in [&self.excitation, &self.decay] {
            if m.dim() != k {
                return Err(Error::Dimension {
                    expected: k,
                    found: m.dim(),
                });
            }
        }
        if self.background.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("background rates must be finite and non-negative"));
        }
        if self.excitation.as_slice().iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("excitation weights must be finite and non-negative"));
        }
        if self.decay.as_slice().iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::invalid("decay rates must be finite and positive"));
        }
        Ok(())
    }

    pub(crate) fn check_dim(&self, k: usize) -> Result<()> {
        if self.dim() != k {
            return Err(Error::Dimension {
                expected: k,
                found: self.dim(),
            });
        }
        Ok(())
    }

    /// Number of free parameters, `K + 2K²`.
    pub fn len(&self) -> usize {
        let k = self.dim();
        k + 2 * k * k
    }

    pub fn is_empty(&self) -> bool {
        self.background.is_empty()
    }

    /// Flattened `(λ0, α row-major, β row-major)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.background);
        v.extend_from_slice(self.excitation.as_slice());
        v.extend_from_slice(self.decay.as_slice());
        v
    }

    pub fn from_vec(k: usize, v: &[f64], kernel: KernelConvention) -> Result<Self> {
        if v.len() != k + 2 * k * k {
            return Err(Error::Dimension {
                expected: k + 2 * k * k,
                found: v.len(),
            });
        }
        let kk = k * k;
        Self::new(
            v[..k].to_vec(),
            SquareMatrix::from_row_major(k, v[k..k + kk].to_vec())?,
            SquareMatrix::from_row_major(k, v[k + kk..].to_vec())?,
            kernel,
        )
    }

    /// `m_ij = α_ij ∫_0^∞ g_ij`.
    pub fn kernel_mass(&self) -> SquareMatrix {
        let k = self.dim();
        SquareMatrix::from_fn(k, |i, j| {
            self.excitation[(i, j)] * self.kernel.mass(self.decay[(i, j)])
        })
    }

    /// `‖θ − other‖₁` over the flattened vector.
    pub fn l1_distance(&self, other: &MvParams) -> Result<f64> {
        other.check_dim(self.dim())?;
        Ok(self
            .to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    /// Copy with every excitation weight multiplied by `c`.
    pub fn with_scaled_excitation(&self, c: f64) -> MvParams {
        MvParams {
            excitation: self.excitation.scaled(c),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_roundtrip_and_order() {
        let p = MvParams::new(
            vec![0.1, 0.2],
            SquareMatrix::try_from(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
            SquareMatrix::try_from(vec![vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap(),
            KernelConvention::Unnormalized,
        )
        .unwrap();
        let v = p.to_vec();
        assert_eq!(v, vec![0.1, 0.2, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(MvParams::from_vec(2, &v, p.kernel).unwrap(), p);
        assert_eq!(p.len(), 10);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("[[1.0,2.0],[3.0,4.0]]"));
        assert_eq!(serde_json::from_str::<MvParams>(&json).unwrap(), p);
    }

    #[test]
    fn validation() {
        assert!(MvParams::constant(2, -1.0, 0.1, 1.0, KernelConvention::Density).is_err());
        assert!(MvParams::constant(2, 1.0, -0.1, 1.0, KernelConvention::Density).is_err());
        assert!(MvParams::constant(2, 1.0, 0.1, 0.0, KernelConvention::Density).is_err());
        assert!(MvParams::new(
            vec![1.0],
            SquareMatrix::zeros(2),
            SquareMatrix::filled(2, 1.0),
            KernelConvention::Density
        )
        .is_err());
        assert!(serde_json::from_str::<SquareMatrix>("[[1.0],[2.0,3.0]]").is_err());
    }

    #[test]
    fn kernel_mass_by_convention() {
        let p = MvParams::constant(1, 1.0, 1.0, 2.0, KernelConvention::Unnormalized).unwrap();
        assert_eq!(p.kernel_mass()[(0, 0)], 0.5);
        let p = MvParams::constant(1, 1.0, 0.5, 2.0, KernelConvention::Density).unwrap();
        assert_eq!(p.kernel_mass()[(0, 0)], 0.5);
    }

    #[test]
    fn l1_distance() {
        let a = MvParams::constant(1, 1.0, 1.0, 2.0, KernelConvention::Unnormalized).unwrap();
        let mut b = a.clone();
        b.decay[(0, 0)] += 0.1;
        assert!((a.l1_distance(&b).unwrap() - 0.1).abs() < 1e-15);
    }
}
