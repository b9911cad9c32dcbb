//! Stochastic Galerkin projection of the pitchfork normal form
//! `u^3 - mu u = 0` with a random parameter `mu = mean + sigma xi`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::diagram::{BifurcationDiagram, DiagramRecord};
use crate::error::{invalid, Result};
use crate::klexp::{uniform_kl, KlExpansion};
use crate::pcbasis::{gauss_quadrature, PcBasis};
use crate::uq_stats::{self, DiagramConfig};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_INIT_AMPLITUDE: f64 = 3.0;

/// Projected system for one basis and one scalar parameter law, with the
/// quadrature tables precomputed.
#[derive(Debug, Clone)]
pub struct PitchforkProblem {
    pub basis: PcBasis,
    pub mu: KlExpansion,
    weights: Vec<f64>,
    /// psi[q][i] = psi_i at node q
    psi: Vec<Vec<f64>>,
    mu_at: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchforkSolution {
    pub coeffs: Vec<f64>,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Newton stopped on a singular Jacobian.
    pub singular: bool,
}

impl PitchforkProblem {
    pub fn new(basis: PcBasis, mu: KlExpansion) -> Result<Self> {
        if basis.n_rv != 1 || mu.n_kl() != 1 {
            return Err(invalid("basis", "the normal form takes a single seed variable"));
        }
        if mu.seed_family.pc_family() != basis.family {
            return Err(invalid("basis", "family does not match the parameter law"));
        }
        // Exact for the degree-4M Jacobian integrands
        let rule = gauss_quadrature(basis.family, 2 * basis.max_degree + 1)?;
        let psi: Vec<Vec<f64>> = rule
            .nodes
            .iter()
            .map(|&x| {
                let mut row = vec![0.0; basis.len()];
                basis.family.eval_all(x, &mut row);
                row
            })
            .collect();
        let mu_at = rule.nodes.iter().map(|&x| mu.realize(0, &[x])).collect();
        Ok(Self {
            basis,
            mu,
            weights: rule.weights,
            psi,
            mu_at,
        })
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    fn u_at(&self, coeffs: &[f64], q: usize) -> f64 {
        coeffs.iter().zip(&self.psi[q]).map(|(c, p)| c * p).sum()
    }

    /// Component k is E[(u^3 - mu u) psi_k].
    pub fn residual(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut r = vec![0.0; n];
        for (q, w) in self.weights.iter().enumerate() {
            let u = self.u_at(coeffs, q);
            let g = w * (u * u * u - self.mu_at[q] * u);
            for (rk, pk) in r.iter_mut().zip(&self.psi[q]) {
                *rk += g * pk;
            }
        }
        r
    }

    /// Row-major Jacobian, entry (k, i) = E[(3u^2 - mu) psi_i psi_k].
    pub fn jacobian(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut jac = vec![0.0; n * n];
        for (q, w) in self.weights.iter().enumerate() {
            let u = self.u_at(coeffs, q);
            let g = w * (3.0 * u * u - self.mu_at[q]);
            let p = &self.psi[q];
            for k in 0..n {
                let gk = g * p[k];
                for i in 0..n {
                    jac[k * n + i] += gk * p[i];
                }
            }
        }
        jac
    }

    /// Plain Newton iteration; stops on convergence, singular Jacobian or
    /// `max_iter`.
    pub fn newton_solve(&self, initial: &[f64], tol: f64, max_iter: usize) -> Result<PitchforkSolution> {
        if !(tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {tol}")));
        }
        if initial.len() != self.len() {
            return Err(crate::error::Error::DimensionMismatch {
                expected: self.len(),
                got: initial.len(),
            });
        }
        let n = self.len();
        let mut u = initial.to_vec();
        let mut r = self.residual(&u);
        let mut norm = inf_norm(&r);
        let mut iterations = 0;
        let mut singular = false;
        while norm >= tol && iterations < max_iter {
            let jac = self.jacobian(&u);
            // pivots are compared with the size of the two terms of the Jacobian
            let u_max = (0..self.weights.len()).map(|q| self.u_at(&u, q).abs()).fold(0.0, f64::max);
            let mu_max = self.mu_at.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let pivot_tol = 1e-12 * (3.0 * u_max * u_max + mu_max).max(1e-300);
            let Some(step) = dense::solve(n, &jac, &r, pivot_tol) else {
                singular = true;
                break;
            };
            for (ui, si) in u.iter_mut().zip(&step) {
                *ui -= si;
            }
            iterations += 1;
            r = self.residual(&u);
            norm = inf_norm(&r);
            if !norm.is_finite() {
                break;
            }
        }
        Ok(PitchforkSolution {
            converged: norm < tol,
            coeffs: u,
            residual_norm: norm,
            iterations,
            singular,
        })
    }

    /// Solves from every initial vector in parallel.
    pub fn solve_ensemble(&self, inits: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<Vec<PitchforkSolution>> {
        inits.par_iter().map(|init| self.newton_solve(init, tol, max_iter)).collect()
    }

    /// Largest pointwise equilibrium defect |u^3 - mu u| over seed samples.
    pub fn pointwise_defect(&self, coeffs: &[f64], n_samples: usize, rng_seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        (0..n_samples)
            .map(|_| {
                let xi = self.basis.family.sample(&mut rng);
                let u = self.basis.eval_expansion_1d(coeffs, xi);
                let mu = self.mu.realize(0, &[xi]);
                (u * u * u - mu * u).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

/// `count` vectors of length `len` with entries uniform in
/// `[-amplitude, amplitude]`.
pub fn random_initializations(count: usize, len: usize, amplitude: f64, rng_seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..count)
        .map(|_| {
            (0..len)
                .map(|_| {
                    if amplitude > 0.0 {
                        rng.gen_range(-amplitude..=amplitude)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Number of solutions that differ pairwise by more than `tol` in the
/// infinity norm (greedy representatives).
pub fn count_distinct(solutions: &[&[f64]], tol: f64) -> usize {
    let mut reps: Vec<&[f64]> = Vec::new();
    for s in solutions {
        if !reps.iter().any(|r| r.iter().zip(s.iter()).all(|(a, b)| (a - b).abs() <= tol)) {
            reps.push(s);
        }
    }
    reps.len()
}

/// Perturbation regimes: a wide exploratory window or a narrow refining one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbationPreset {
    Explore,
    Refine,
}

impl PerturbationPreset {
    pub fn half_width(self) -> f64 {
        match self {
            PerturbationPreset::Explore => 1.0,
            PerturbationPreset::Refine => 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub half_width: f64,
    pub max_degree: usize,
    pub inits_per_mu: usize,
    pub init_amplitude: f64,
    pub rng_seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub diagram: DiagramConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            half_width: 0.01,
            max_degree: 5,
            inits_per_mu: 1,
            init_amplitude: DEFAULT_INIT_AMPLITUDE,
            rng_seed: 0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            diagram: DiagramConfig::default(),
        }
    }
}

/// One solve of a sweep together with the density peaks of its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub mu_mean: f64,
    pub init_id: usize,
    pub solution: PitchforkSolution,
    pub peaks: Vec<(f64, f64)>,
}

/// Solves under `U(mu - half_width, mu + half_width)` for every mean and
/// records the density peaks of the sampled solutions as diagram rows.
/// Unconverged solves are kept with `converged = false` and no peaks.
pub fn sweep_diagram(mu_means: &[f64], config: &SweepConfig) -> Result<(BifurcationDiagram, Vec<SweepEntry>)> {
    if !(config.half_width > 0.0) {
        return Err(invalid("half_width", format!("must be positive, got {}", config.half_width)));
    }
    if config.inits_per_mu == 0 {
        return Err(invalid("inits_per_mu", "must be at least 1"));
    }
    let basis = PcBasis::univariate(crate::pcbasis::Family::LegendreUniform, config.max_degree);
    let entries: Vec<Vec<SweepEntry>> = mu_means
        .par_iter()
        .enumerate()
        .map(|(k, &mu)| -> Result<Vec<SweepEntry>> {
            let problem = PitchforkProblem::new(basis.clone(), uniform_kl(mu - config.half_width, mu + config.half_width)?)?;
            let seed = split_seed(config.rng_seed, k as u64);
            let inits = random_initializations(config.inits_per_mu, basis.len(), config.init_amplitude, seed);
            inits
                .iter()
                .enumerate()
                .map(|(init_id, init)| {
                    let solution = problem.newton_solve(init, config.tol, config.max_iter)?;
                    let peaks = if solution.converged {
                        let samples = uq_stats::sample_expansion(&solution.coeffs, &basis, config.diagram.n_samples, seed ^ init_id as u64);
                        let pdf = uq_stats::kde(&samples, config.diagram.bandwidth)?;
                        uq_stats::peaks(&pdf, config.diagram.prominence_frac)
                    } else {
                        Vec::new()
                    };
                    Ok(SweepEntry {
                        mu_mean: mu,
                        init_id,
                        solution,
                        peaks,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let entries: Vec<SweepEntry> = entries.into_iter().flatten().collect();
    let mut diagram = BifurcationDiagram::new(None);
    for e in &entries {
        if !e.solution.converged {
            diagram.push(DiagramRecord {
                mu: e.mu_mean,
                observable: f64::NAN,
                branch: None,
                weight: 0.0,
                converged: false,
            });
            continue;
        }
        let total: f64 = e.peaks.iter().map(|p| p.1).sum();
        for &(loc, dens) in &e.peaks {
            diagram.push(DiagramRecord {
                mu: e.mu_mean,
                observable: loc,
                branch: None,
                weight: dens / total,
                converged: true,
            });
        }
    }
    Ok((diagram, entries))
}

/// Derives an independent stream seed for task `index` from a master seed.
pub fn split_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::klexp::{scalar_kl, SeedFamily};
    use crate::pcbasis::Family;

    fn det(mu: f64, m: usize) -> PitchforkProblem {
        PitchforkProblem::new(
            PcBasis::univariate(Family::HermiteGaussian, m),
            scalar_kl(mu, 0.0, SeedFamily::Gaussian).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn residual_examples() {
        let p = det(1.0, 3);
        assert!(p.residual(&[0.0; 4]).iter().all(|&r| r == 0.0));
        assert!(inf_norm(&p.residual(&[1.0, 0.0, 0.0, 0.0])) < 1e-15);
        let r = p.residual(&[2.0, 0.0, 0.0, 0.0]);
        assert!((r[0] - 6.0).abs() < 1e-13);
        assert!(r[1..].iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn deterministic_stable_branch() {
        let s = det(1.0, 4).newton_solve(&[0.8, 0.0, 0.0, 0.0, 0.0], 1e-12, 50).unwrap();
        assert!(s.converged);
        assert!((s.coeffs[0] - 1.0).abs() < 1e-10);
        assert!(s.coeffs[1..].iter().all(|c| c.abs() < 1e-10));
        // the undamped first step from 0.5 overshoots to -1
        let s = det(1.0, 4).newton_solve(&[0.5, 0.0, 0.0, 0.0, 0.0], 1e-12, 50).unwrap();
        assert!(s.converged);
        assert!((s.coeffs[0].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn negative_mu_goes_to_zero() {
        let p = det(-1.0, 3);
        for init in random_initializations(10, 4, 3.0, 1) {
            let s = p.newton_solve(&init, 1e-12, 100).unwrap();
            assert!(s.converged);
            assert!(inf_norm(&s.coeffs) < 1e-10);
        }
    }

    #[test]
    fn singular_at_bifurcation() {
        // 3u^2 - mu vanishes identically at u = 1/sqrt(3), mu = 1
        let s = det(1.0, 2).newton_solve(&[1.0 / 3f64.sqrt(), 0.0, 0.0], 1e-12, 10).unwrap();
        assert!(s.singular && !s.converged && s.iterations == 0);
        let s = det(0.0, 2).newton_solve(&[0.0; 3], 1e-12, 10).unwrap();
        assert!(s.converged && s.iterations == 0);
    }

    #[test]
    fn random_inits_reproducible() {
        assert_eq!(random_initializations(1, 3, 0.0, 5), vec![vec![0.0; 3]]);
        let a = random_initializations(100, 6, 3.0, 42);
        assert_eq!(a, random_initializations(100, 6, 3.0, 42));
        assert!(a.iter().flatten().all(|x| x.abs() <= 3.0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(det(1.0, 2).newton_solve(&[0.0], 1e-10, 5).is_err());
        assert!(det(1.0, 2).newton_solve(&[0.0; 3], 0.0, 5).is_err());
    }

    #[test]
    fn family_mismatch_rejected() {
        let r = PitchforkProblem::new(
            PcBasis::univariate(Family::LegendreUniform, 2),
            scalar_kl(1.0, 0.1, SeedFamily::Gaussian).unwrap(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn split_seed_distinct() {
        assert_ne!(split_seed(0, 0), split_seed(0, 1));
        assert_eq!(split_seed(3, 4), split_seed(3, 4));
    }
}
