//! Karhunen-Loeve representation of stochastic parameters.
//!
//! Realisations are `mean(x) + sum_i sqrt(lambda_i) pi_i(x) xibar_i` with
//! normalised seeds (zero mean, unit variance). Slot 0 of the expansion is the
//! mean itself (`lambda_0 = 1`, `xibar_0 = 1`) and is not stored in `modes`.

use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{invalid, Error, Result};
use crate::pcbasis::{Family, SQRT3};

/// Law of the normalised seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedFamily {
    Gaussian,
    Uniform,
}

impl SeedFamily {
    pub fn pc_family(self) -> Family {
        match self {
            SeedFamily::Gaussian => Family::HermiteGaussian,
            SeedFamily::Uniform => Family::LegendreUniform,
        }
    }
}

impl From<Family> for SeedFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::HermiteGaussian => SeedFamily::Gaussian,
            Family::LegendreUniform => SeedFamily::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeanField {
    Constant(f64),
    Grid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Eigenfunction {
    Constant(f64),
    Grid(Vec<f64>),
}

impl Eigenfunction {
    pub fn at(&self, node: usize) -> f64 {
        match self {
            Eigenfunction::Constant(c) => *c,
            Eigenfunction::Grid(v) => v[node],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlMode {
    pub lambda: f64,
    pub eigenfunction: Eigenfunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlExpansion {
    pub mean: MeanField,
    /// Stochastic modes 1..=n_kl, eigenvalues non-increasing.
    pub modes: Vec<KlMode>,
    pub seed_family: SeedFamily,
    /// Set when negative eigenvalues of the discretised kernel were clipped.
    pub clipped_negative: bool,
}

impl KlExpansion {
    pub fn n_kl(&self) -> usize {
        self.modes.len()
    }

    /// Mean of a scalar (spatially constant) expansion.
    pub fn mean_value(&self) -> f64 {
        match &self.mean {
            MeanField::Constant(c) => *c,
            MeanField::Grid(v) => v.iter().sum::<f64>() / v.len().max(1) as f64,
        }
    }

    /// Standard deviation of the single mode of a scalar expansion.
    pub fn sigma(&self) -> f64 {
        self.modes.first().map_or(0.0, |m| m.lambda.sqrt())
    }

    /// Value at grid node `node` for the seed vector `xi` (one per mode).
    pub fn realize(&self, node: usize, xi: &[f64]) -> f64 {
        let mean = match &self.mean {
            MeanField::Constant(c) => *c,
            MeanField::Grid(v) => v[node],
        };
        mean + self
            .modes
            .iter()
            .zip(xi)
            .map(|(m, &x)| m.lambda.sqrt() * m.eigenfunction.at(node) * x)
            .sum::<f64>()
    }

    /// Sum of the retained eigenvalues.
    pub fn retained_energy(&self) -> f64 {
        self.modes.iter().map(|m| m.lambda).sum()
    }

    /// Support of a scalar uniform expansion, `mean +- sqrt(3) sigma`.
    pub fn uniform_support(&self) -> (f64, f64) {
        let half = SQRT3 * self.sigma();
        (self.mean_value() - half, self.mean_value() + half)
    }
}

/// `mu = mean + sigma * xibar` with a single constant eigenfunction.
pub fn scalar_kl(mean: f64, sigma: f64, seed_family: SeedFamily) -> Result<KlExpansion> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("must be a non-negative number, got {sigma}")));
    }
    Ok(KlExpansion {
        mean: MeanField::Constant(mean),
        modes: vec![KlMode {
            lambda: sigma * sigma,
            eigenfunction: Eigenfunction::Constant(1.0),
        }],
        seed_family,
        clipped_negative: false,
    })
}

/// Uniform law on `[lo, hi]` as a scalar expansion.
pub fn uniform_kl(lo: f64, hi: f64) -> Result<KlExpansion> {
    if !(hi >= lo) {
        return Err(invalid("support", format!("empty interval [{lo}, {hi}]")));
    }
    scalar_kl(0.5 * (lo + hi), (hi - lo) / (2.0 * SQRT3), SeedFamily::Uniform)
}

/// Gaussian law with the given variance as a scalar expansion.
pub fn gaussian_kl(mean: f64, variance: f64) -> Result<KlExpansion> {
    if !(variance >= 0.0) {
        return Err(invalid("variance", format!("must be non-negative, got {variance}")));
    }
    scalar_kl(mean, variance.sqrt(), SeedFamily::Gaussian)
}

/// Nystrom discretisation of the covariance operator on a weighted grid.
///
/// Solves `sum_j K(x_i, x_j) w_j pi(x_j) = lambda pi(x_i)` through the
/// symmetric form `W^1/2 K W^1/2`, keeps the `n_modes` largest eigenpairs with
/// positive eigenvalue and normalises `sum_i w_i pi(x_i)^2 = 1`.
pub fn nystrom_kl<K>(
    kernel: K,
    grid: &[f64],
    weights: &[f64],
    n_modes: usize,
    mean: MeanField,
    seed_family: SeedFamily,
) -> Result<KlExpansion>
where
    K: Fn(f64, f64) -> f64,
{
    let n = grid.len();
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(invalid("weights", "must be strictly positive"));
    }
    let mut kmat = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            kmat[i * n + j] = kernel(grid[i], grid[j]);
        }
    }
    let mut max_asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            max_asym = max_asym.max((kmat[i * n + j] - kmat[j * n + i]).abs());
        }
    }
    if max_asym > 1e-10 {
        return Err(Error::NonSymmetricKernel { max_asymmetry: max_asym });
    }
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let sym: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            0.5 * (kmat[i * n + j] + kmat[j * n + i]) * sw[i] * sw[j]
        })
        .collect();
    let (values, vectors) = dense::symmetric_eigen(n, &sym)?;
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut clipped = false;
    let mut modes = Vec::new();
    for k in (0..n).rev() {
        if modes.len() == n_modes {
            break;
        }
        let lambda = values[k];
        if lambda < -1e-10 {
            clipped = true;
        }
        if lambda <= 1e-12 * scale {
            continue;
        }
        let mut pi: Vec<f64> = vectors[k].iter().zip(&sw).map(|(y, s)| y / s).collect();
        // fix the sign so the first nonzero entry is positive
        if let Some(first) = pi.iter().find(|v| v.abs() > 1e-14) {
            if *first < 0.0 {
                pi.iter_mut().for_each(|v| *v = -*v);
            }
        }
        modes.push(KlMode {
            lambda,
            eigenfunction: Eigenfunction::Grid(pi),
        });
    }
    if values.iter().any(|&v| v < -1e-10) {
        clipped = true;
    }
    Ok(KlExpansion {
        mean,
        modes,
        seed_family,
        clipped_negative: clipped,
    })
}

/// Eigenvalue tail not captured by the retained modes, relative to the trace
/// `sum_i w_i K(x_i, x_i)`.
pub fn truncation_error<K: Fn(f64, f64) -> f64>(kl: &KlExpansion, kernel: K, grid: &[f64], weights: &[f64]) -> f64 {
    let trace: f64 = grid.iter().zip(weights).map(|(&x, &w)| w * kernel(x, x)).sum();
    trace - kl.retained_energy()
}
