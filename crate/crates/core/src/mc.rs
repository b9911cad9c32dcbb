//! Non-intrusive Monte Carlo baseline: independent deterministic solves at
//! sampled viscosities, with a choice of initial guess.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagram::{cluster_1d, ObservableSpec};
use crate::error::{invalid, Error, Result};
use crate::fem::TaylorHoodSpace;
use crate::klexp::KlExpansion;
use crate::nssolve::{newton_flow, ContinuationConfig, ContinuationResult, FlowState, FlowSystem, NewtonOptions};
use crate::pitchfork::split_seed;

/// Draws outside this window are rejected and redrawn.
pub const VISCOSITY_WINDOW: (f64, f64) = (0.4, 2.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitPolicy {
    /// Every solve starts from the boundary data alone.
    ZeroGuess,
    /// Starts from a diagram state at the nearest parameter; the pass is
    /// drawn from the sample's own stream.
    ContinuationGuess,
    /// Starts from a diagram state at the nearest parameter, passes taken in
    /// turn.
    BranchCycling,
}

impl InitPolicy {
    pub fn name(self) -> &'static str {
        match self {
            InitPolicy::ZeroGuess => "zero",
            InitPolicy::ContinuationGuess => "continuation",
            InitPolicy::BranchCycling => "cycling",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero" => Some(InitPolicy::ZeroGuess),
            "continuation" => Some(InitPolicy::ContinuationGuess),
            "cycling" => Some(InitPolicy::BranchCycling),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub id: usize,
    pub mu: f64,
    /// Diagram pass used as initial guess.
    pub init_pass: Option<usize>,
    pub state: FlowState,
    pub observable: f64,
}

impl McSample {
    pub fn converged(&self) -> bool {
        self.state.converged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEnsemble {
    pub samples: Vec<McSample>,
    pub policy: InitPolicy,
    pub rng_seed: u64,
}

/// Viscosity of sample `id`, redrawn until it falls inside the window.
pub fn draw_viscosity(law: &KlExpansion, master: u64, id: usize) -> Result<(f64, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(master, id as u64));
    let family = law.seed_family.pc_family();
    for _ in 0..10_000 {
        let xi = family.sample(&mut rng);
        let mu = law.realize(0, &[xi]);
        if (VISCOSITY_WINDOW.0..=VISCOSITY_WINDOW.1).contains(&mu) {
            return Ok((mu, rng));
        }
    }
    Err(invalid("distribution", "almost no mass inside the admissible viscosity window"))
}

fn initial_guess<'a>(
    policy: InitPolicy,
    id: usize,
    mu: f64,
    rng: &mut ChaCha8Rng,
    diagram: Option<&'a ContinuationResult>,
) -> Result<Option<(usize, &'a [f64])>> {
    if policy == InitPolicy::ZeroGuess {
        return Ok(None);
    }
    let d = diagram.ok_or_else(|| invalid("diagram", "required by this initialisation policy"))?;
    if d.mu_values.is_empty() {
        return Err(invalid("diagram", "is empty"));
    }
    let k = d.nearest(mu);
    let passes: Vec<usize> = (0..d.states.len()).filter(|&p| d.states[p][k].converged).collect();
    if passes.is_empty() {
        return Ok(None);
    }
    let pass = match policy {
        InitPolicy::ContinuationGuess => passes[rng.gen_range(0..passes.len())],
        _ => passes[id % passes.len()],
    };
    Ok(Some((pass, &d.states[pass][k].x)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub policy: InitPolicy,
    pub rng_seed: u64,
    pub newton: NewtonOptions,
    pub observable: ObservableSpec,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_samples: 300,
            policy: InitPolicy::ZeroGuess,
            rng_seed: 0,
            newton: NewtonOptions::default(),
            observable: ObservableSpec::default(),
        }
    }
}

/// The viscosities `run_mc` will draw, in sample order.
pub fn draws(law: &KlExpansion, n_samples: usize, rng_seed: u64) -> Result<Vec<f64>> {
    (0..n_samples)
        .map(|id| draw_viscosity(law, rng_seed, id).map(|(mu, _)| mu))
        .collect()
}

/// Continuation from above the bifurcation down past the smallest draw, so
/// every draw has a nearby diagram state.
pub fn covering_sweep(draws: &[f64], config: &McConfig) -> ContinuationConfig {
    let lo = draws.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ContinuationConfig {
        mu_from: (hi + 0.02).max(1.2),
        mu_to: (lo - 0.01).max(VISCOSITY_WINDOW.0),
        observable: config.observable,
        newton: config.newton,
        ..ContinuationConfig::default()
    }
}

/// Runs independent solves at sampled viscosities. Diagram states are
/// required by the continuation and cycling policies.
pub fn run_mc(space: &TaylorHoodSpace, law: &KlExpansion, config: &McConfig, diagram: Option<&ContinuationResult>) -> Result<McEnsemble> {
    let McConfig {
        n_samples,
        policy,
        rng_seed,
        ref newton,
        ref observable,
    } = *config;
    if n_samples == 0 {
        return Err(invalid("n_samples", "must be at least 1"));
    }
    if policy != InitPolicy::ZeroGuess && diagram.is_none() {
        return Err(invalid("diagram", "required by this initialisation policy"));
    }
    let samples = (0..n_samples)
        .into_par_iter()
        .map_init(
            || FlowSystem::new(space.clone()),
            |sys, id| -> Result<McSample> {
                let (mu, mut rng) = draw_viscosity(law, rng_seed, id)?;
                let guess = initial_guess(policy, id, mu, &mut rng, diagram)?;
                let (init_pass, x0) = match guess {
                    Some((p, x)) => (Some(p), x.to_vec()),
                    None => (None, sys.zero_state(newton.inflow_scale)),
                };
                let state = newton_flow(sys, &x0, mu, newton)?;
                let observable = sys.observable(&state.x, observable)?;
                Ok(McSample {
                    id,
                    mu,
                    init_pass,
                    state,
                    observable,
                })
            },
        )
        .collect::<Result<Vec<_>>>()?;
    Ok(McEnsemble { samples, policy, rng_seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub mean: Vec<f64>,
    /// Unbiased sample variance per unknown.
    pub variance: Vec<f64>,
    /// `(mu, observable)` of the converged samples.
    pub scatter: Vec<(f64, f64)>,
}

impl McStats {
    /// Clusters of the scattered observables.
    pub fn clusters(&self, gap: f64) -> Vec<f64> {
        let obs: Vec<f64> = self.scatter.iter().map(|s| s.1).collect();
        cluster_1d(&obs, gap)
    }
}

/// Mean, variance and probe scatter over converged samples.
pub fn ensemble_stats(ensemble: &McEnsemble) -> Result<McStats> {
    let ok: Vec<&McSample> = ensemble.samples.iter().filter(|s| s.converged()).collect();
    if ok.len() < 2 {
        return Err(Error::NotEnoughSamples { needed: 2, have: ok.len() });
    }
    let n = ok[0].state.x.len();
    let count = ok.len() as f64;
    let mut mean = vec![0.0; n];
    for s in &ok {
        for (m, v) in mean.iter_mut().zip(&s.state.x) {
            *m += v / count;
        }
    }
    let mut variance = vec![0.0; n];
    for s in &ok {
        for ((acc, v), m) in variance.iter_mut().zip(&s.state.x).zip(&mean) {
            *acc += (v - m) * (v - m) / (count - 1.0);
        }
    }
    let scatter = ok.iter().map(|s| (s.mu, s.observable)).collect();
    Ok(McStats { mean, variance, scatter })
}
