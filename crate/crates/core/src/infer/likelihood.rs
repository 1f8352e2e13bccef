//! Log-likelihood of the representation and its gradient, in `O(N K²)`.
//!
//! With `R_ij(t_k) = Σ_{t_l,j < t_k} e^{−β_ij (t_k − t_l)}` the component
//! intensity at event `k` is `λ0_i + Σ_j α_ij c(β_ij) R_ij`, where `c` is the
//! kernel scale. Both `R` and the lag-weighted sum `D_ij = Σ (t_k − t_l) e^{…}`
//! (needed for `∂/∂β`) advance by one multiplication per event.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::params::{MvParams, SquareMatrix};
use crate::partition::MarkPartition;

/// Returned in place of `−∞` when some event has zero intensity.
pub const LOG_ZERO_SENTINEL: f64 = -1e300;

/// Event times, types and cell measures, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct LikelihoodData {
    times: Vec<f64>,
    types: Vec<usize>,
    counts: Vec<usize>,
    measures: Vec<f64>,
    horizon: f64,
}

/// Gradient with the same layout as [`MvParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub loglik: f64,
    pub background: Vec<f64>,
    pub excitation: SquareMatrix,
    pub decay: SquareMatrix,
}

impl Gradient {
    /// Flattened `(λ0, α, β)` in the order of [`MvParams::to_vec`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.background.clone();
        v.extend_from_slice(self.excitation.as_slice());
        v.extend_from_slice(self.decay.as_slice());
        v
    }
}

impl LikelihoodData {
    pub fn new(partition: &MarkPartition, stream: &EventStream) -> Result<Self> {
        if partition.space() != stream.space() {
            return Err(Error::invalid("partition and stream use different mark spaces"));
        }
        let types = partition.classify(stream)?;
        let mut counts = vec![0; partition.len()];
        for &c in &types {
            counts[c] += 1;
        }
        Ok(LikelihoodData {
            times: stream.times().collect(),
            types,
            counts,
            measures: partition.measures().to_vec(),
            horizon: stream.horizon(),
        })
    }

    pub fn dim(&self) -> usize {
        self.measures.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn types(&self) -> &[usize] {
        &self.types
    }

    fn check(&self, params: &MvParams) -> Result<()> {
        params.check_dim(self.dim())
    }

    /// `Σ_i μ_i [λ0_i T + Σ_j α_ij Σ_{l∈j} G(T − t_l; β_ij)]`.
    fn compensator(&self, params: &MvParams) -> f64 {
        let k = self.dim();
        let mut total = 0.0;
        for i in 0..k {
            total += self.measures[i] * params.background[i] * self.horizon;
        }
        for (&t, &j) in self.times.iter().zip(&self.types) {
            let lag = self.horizon - t;
            for i in 0..k {
                let a = params.excitation[(i, j)];
                if a != 0.0 {
                    total += self.measures[i] * a * params.kernel.integral(lag, params.decay[(i, j)]);
                }
            }
        }
        total
    }

    pub fn log_likelihood(&self, params: &MvParams) -> Result<f64> {
        self.check(params)?;
        let k = self.dim();
        let alpha = params.excitation.as_slice();
        let beta = params.decay.as_slice();
        let scale: Vec<f64> = beta.iter().map(|&b| params.kernel.scale(b)).collect();
        let mut r = vec![0.0; k * k];
        let mut sum_log = 0.0;
        let mut prev: Option<(f64, usize)> = None;
        for (&t, &c) in self.times.iter().zip(&self.types) {
            if let Some((tp, jp)) = prev {
                let dt = t - tp;
                for i in 0..k {
                    r[i * k + jp] += 1.0;
                }
                for (rv, b) in r.iter_mut().zip(beta) {
                    *rv *= (-b * dt).exp();
                }
            }
            let row = c * k;
            let mut lam = params.background[c];
            for j in 0..k {
                lam += alpha[row + j] * scale[row + j] * r[row + j];
            }
            if !(lam > 0.0 && lam.is_finite()) {
                return Ok(LOG_ZERO_SENTINEL);
            }
            sum_log += lam.ln();
            prev = Some((t, c));
        }
        Ok(sum_log - self.compensator(params))
    }

    pub fn gradient(&self, params: &MvParams) -> Result<Gradient> {
        self.check(params)?;
        let k = self.dim();
        let kernel = params.kernel;
        let alpha = params.excitation.as_slice();
        let beta = params.decay.as_slice();
        let scale: Vec<f64> = beta.iter().map(|&b| kernel.scale(b)).collect();
        let dscale = kernel.scale_derivative();
        let mut r = vec![0.0; k * k];
        let mut d = vec![0.0; k * k];
        let mut g_bg = vec![0.0; k];
        let mut g_a = vec![0.0; k * k];
        let mut g_b = vec![0.0; k * k];
        let mut sum_log = 0.0;
        let mut prev: Option<(f64, usize)> = None;
        for (&t, &c) in self.times.iter().zip(&self.types) {
            if let Some((tp, jp)) = prev {
                let dt = t - tp;
                for i in 0..k {
                    r[i * k + jp] += 1.0;
                }
                for idx in 0..k * k {
                    let e = (-beta[idx] * dt).exp();
                    d[idx] = e * (d[idx] + dt * r[idx]);
                    r[idx] *= e;
                }
            }
            let row = c * k;
            let mut lam = params.background[c];
            for j in 0..k {
                lam += alpha[row + j] * scale[row + j] * r[row + j];
            }
            if !(lam > 0.0 && lam.is_finite()) {
                return Ok(Gradient {
                    loglik: LOG_ZERO_SENTINEL,
                    background: vec![0.0; k],
                    excitation: SquareMatrix::zeros(k),
                    decay: SquareMatrix::zeros(k),
                });
            }
            sum_log += lam.ln();
            let inv = 1.0 / lam;
            g_bg[c] += inv;
            for j in 0..k {
                let idx = row + j;
                g_a[idx] += inv * scale[idx] * r[idx];
                g_b[idx] += inv * alpha[idx] * (dscale * r[idx] - scale[idx] * d[idx]);
            }
            prev = Some((t, c));
        }
        let mut comp = 0.0;
        for ((g, &mu), &bg) in g_bg.iter_mut().zip(&self.measures).zip(&params.background) {
            comp += mu * bg * self.horizon;
            *g -= mu * self.horizon;
        }
        for (&t, &j) in self.times.iter().zip(&self.types) {
            let lag = self.horizon - t;
            for i in 0..k {
                let idx = i * k + j;
                let mu = self.measures[i];
                let big_g = kernel.integral(lag, beta[idx]);
                comp += mu * alpha[idx] * big_g;
                g_a[idx] -= mu * big_g;
                g_b[idx] -= mu * alpha[idx] * kernel.integral_beta_derivative(lag, beta[idx]);
            }
        }
        Ok(Gradient {
            loglik: sum_log - comp,
            background: g_bg,
            excitation: SquareMatrix::from_row_major(k, g_a)?,
            decay: SquareMatrix::from_row_major(k, g_b)?,
        })
    }

    /// Increments `Λ(t_k) − Λ(t_{k−1})` of the ground compensator, with
    /// `t_0 = 0`. Unit-exponential under the generating parameters.
    pub fn compensator_increments(&self, params: &MvParams) -> Result<Vec<f64>> {
        self.check(params)?;
        let k = self.dim();
        let kernel = params.kernel;
        let alpha = params.excitation.as_slice();
        let beta = params.decay.as_slice();
        let base: f64 = (0..k).map(|i| self.measures[i] * params.background[i]).sum();
        // s[i*k+j] = Σ_{l∈j, t_l ≤ last} e^{−β_ij (last − t_l)}, just after the last event
        let mut s = vec![0.0; k * k];
        let mut last = 0.0;
        let mut out = Vec::with_capacity(self.len());
        for (&t, &c) in self.times.iter().zip(&self.types) {
            let dt = t - last;
            let mut inc = base * dt;
            for idx in 0..k * k {
                if s[idx] != 0.0 {
                    let i = idx / k;
                    inc += self.measures[i] * alpha[idx] * s[idx] * kernel.integral(dt, beta[idx]);
                    s[idx] *= (-beta[idx] * dt).exp();
                }
            }
            for i in 0..k {
                s[i * k + c] += 1.0;
            }
            out.push(inc);
            last = t;
        }
        Ok(out)
    }
}

pub fn log_likelihood(params: &MvParams, partition: &MarkPartition, stream: &EventStream) -> Result<f64> {
    LikelihoodData::new(partition, stream)?.log_likelihood(params)
}

pub fn log_likelihood_gradient(
    params: &MvParams,
    partition: &MarkPartition,
    stream: &EventStream,
) -> Result<Gradient> {
    LikelihoodData::new(partition, stream)?.gradient(params)
}

pub fn compensator_increments(
    params: &MvParams,
    partition: &MarkPartition,
    stream: &EventStream,
) -> Result<Vec<f64>> {
    LikelihoodData::new(partition, stream)?.compensator_increments(params)
}
