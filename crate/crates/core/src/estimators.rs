//! Batch estimators of the energy, its gradient and the O / L factors of the
//! S- and T-matrices.

use alloc::vec::Vec;

// Float math for no_std; unused when a dependency links std.
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::DenseMatrix;
use crate::system::ElectronConfiguration;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub configs: Vec<ElectronConfiguration>,
    pub local_energies: Vec<f64>,
    pub theta_logderivs: Vec<Vec<f64>>,
}

impl SampleBatch {
    pub fn new(
        configs: Vec<ElectronConfiguration>,
        local_energies: Vec<f64>,
        theta_logderivs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if configs.len() != local_energies.len() || configs.len() != theta_logderivs.len() {
            return Err(Error::DimensionMismatch("sample batch lists"));
        }
        if let Some(first) = theta_logderivs.first() {
            if theta_logderivs.iter().any(|d| d.len() != first.len()) {
                return Err(Error::DimensionMismatch("log-derivative length"));
            }
        }
        Ok(Self { configs, local_energies, theta_logderivs })
    }

    pub fn len(&self) -> usize {
        self.local_energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_energies.is_empty()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Clamps values to `mean +/- n_std * std`, both statistics taken from the
/// raw batch (population std). Infinite `n_std` or zero spread is a no-op.
pub fn clip_local_energies(raw: &[f64], n_std: f64) -> Vec<f64> {
    if raw.is_empty() || n_std.is_infinite() {
        return raw.to_vec();
    }
    let m = mean(raw);
    let sd = variance(raw).sqrt();
    if sd == 0.0 {
        return raw.to_vec();
    }
    let (lo, hi) = (m - n_std * sd, m + n_std * sd);
    raw.iter().map(|&e| e.clamp(lo, hi)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorBundle {
    /// Mean clipped local energy.
    pub loss: f64,
    /// Mean raw local energy.
    pub raw_energy: f64,
    /// Population variance of the raw local energies.
    pub energy_variance: f64,
    /// Columns `(d_theta log|psi|(x_n) - mean) / sqrt(N)`.
    pub o: DenseMatrix,
    /// `(E_clip(x_n) - loss) / sqrt(N)`.
    pub l: Vec<f64>,
    /// `2 O L`.
    pub gradient: Vec<f64>,
}

/// Clips with `clip_n_std` (use `f64::INFINITY` for none) and forms the
/// centered, `1/sqrt(N)`-scaled estimators.
pub fn assemble(batch: &SampleBatch, clip_n_std: f64) -> Result<EstimatorBundle> {
    let n = batch.len();
    if n < 2 {
        return Err(Error::DegenerateBatch(n));
    }
    if batch.local_energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("local energy"));
    }
    if batch.theta_logderivs.iter().flatten().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("log-derivative"));
    }
    let m = batch.theta_logderivs[0].len();
    let scale = 1.0 / (n as f64).sqrt();

    let clipped = clip_local_energies(&batch.local_energies, clip_n_std);
    let loss = mean(&clipped);
    let l: Vec<f64> = clipped.iter().map(|e| (e - loss) * scale).collect();

    let mut centre = alloc::vec![0.0; m];
    for d in &batch.theta_logderivs {
        for (c, v) in centre.iter_mut().zip(d) {
            *c += v;
        }
    }
    centre.iter_mut().for_each(|c| *c /= n as f64);
    let mut o = DenseMatrix::zeros(m, n);
    for (j, d) in batch.theta_logderivs.iter().enumerate() {
        for ((dst, v), c) in o.column_mut(j).iter_mut().zip(d).zip(&centre) {
            *dst = (v - c) * scale;
        }
    }
    let mut gradient = o.matvec(&l);
    gradient.iter_mut().for_each(|g| *g *= 2.0);

    Ok(EstimatorBundle {
        loss,
        raw_energy: mean(&batch.local_energies),
        energy_variance: variance(&batch.local_energies),
        o,
        l,
        gradient,
    })
}

impl EstimatorBundle {
    pub fn n_params(&self) -> usize {
        self.o.rows()
    }

    pub fn n_samples(&self) -> usize {
        self.o.cols()
    }

    /// `S = O O^T`.
    pub fn s_matrix(&self) -> DenseMatrix {
        self.o.matmul_t(&self.o)
    }

    /// `T = O^T O`.
    pub fn t_matrix(&self) -> DenseMatrix {
        self.o.gram()
    }
}
