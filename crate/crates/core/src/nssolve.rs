//! Steady incompressible Navier-Stokes on a Taylor-Hood space: residual,
//! Jacobian, damped Newton and branch-tracking continuation in the viscosity.

use serde::{Deserialize, Serialize};

use crate::diagram::{BifurcationDiagram, DiagramRecord, ObservableSpec};
use crate::error::{invalid, Result};
use crate::fem::{assemble_fem_tensors, FemTensors, TaylorHoodSpace, LOCAL_DOFS};
use crate::sparse::{CsrMatrix, SparseLu};

/// Whether Dirichlet rows replace the weak equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Free,
    Dirichlet { inflow_scale: f64 },
}

pub const UNUSED: usize = usize::MAX;

/// Element residual of `[mu A v + N(v, v) - C p; D v]`.
pub fn element_residual(space: &TaylorHoodSpace, e: usize, local: &[f64; LOCAL_DOFS], mu: f64) -> [f64; LOCAL_DOFS] {
    let mut r = [0.0; LOCAL_DOFS];
    for q in &space.qp[e] {
        let mut v = [0.0; 2];
        let mut gv = [[0.0; 2]; 2];
        for a in 0..9 {
            for c in 0..2 {
                let u = local[c * 9 + a];
                v[c] += q.phi[a] * u;
                gv[c][0] += q.grad[a][0] * u;
                gv[c][1] += q.grad[a][1] * u;
            }
        }
        let p: f64 = (0..4).map(|j| q.psi[j] * local[18 + j]).sum();
        let w = q.wdet;
        for a in 0..9 {
            for c in 0..2 {
                let diff = q.grad[a][0] * gv[c][0] + q.grad[a][1] * gv[c][1];
                let conv = v[0] * gv[c][0] + v[1] * gv[c][1];
                r[c * 9 + a] += w * (mu * diff + conv * q.phi[a] - p * q.grad[a][c]);
            }
        }
        let div = gv[0][0] + gv[1][1];
        for j in 0..4 {
            r[18 + j] += w * q.psi[j] * div;
        }
    }
    r
}

/// Element Jacobian, row-major `22 x 22`; pressure-pressure entries are zero.
pub fn element_jacobian(space: &TaylorHoodSpace, e: usize, local: &[f64; LOCAL_DOFS], mu: f64) -> [[f64; LOCAL_DOFS]; LOCAL_DOFS] {
    let mut k = [[0.0; LOCAL_DOFS]; LOCAL_DOFS];
    for q in &space.qp[e] {
        let mut v = [0.0; 2];
        let mut gv = [[0.0; 2]; 2];
        for a in 0..9 {
            for c in 0..2 {
                let u = local[c * 9 + a];
                v[c] += q.phi[a] * u;
                gv[c][0] += q.grad[a][0] * u;
                gv[c][1] += q.grad[a][1] * u;
            }
        }
        let w = q.wdet;
        let adv: [f64; 9] = std::array::from_fn(|b| v[0] * q.grad[b][0] + v[1] * q.grad[b][1]);
        for a in 0..9 {
            let wa = w * q.phi[a];
            for b in 0..9 {
                let lap = w * mu * (q.grad[a][0] * q.grad[b][0] + q.grad[a][1] * q.grad[b][1]);
                let pb = wa * q.phi[b];
                for c in 0..2 {
                    for d in 0..2 {
                        let mut val = pb * gv[c][d];
                        if c == d {
                            val += lap + wa * adv[b];
                        }
                        k[c * 9 + a][d * 9 + b] += val;
                    }
                }
            }
            for c in 0..2 {
                for j in 0..4 {
                    let g = w * q.psi[j] * q.grad[a][c];
                    k[c * 9 + a][18 + j] -= g;
                    k[18 + j][c * 9 + a] += g;
                }
            }
        }
    }
    k
}

/// Space, operators, Jacobian pattern and a reusable factorisation.
pub struct FlowSystem {
    pub space: TaylorHoodSpace,
    pub tensors: FemTensors,
    pub jacobian: CsrMatrix,
    /// Position in `jacobian.values` of each local pair, `UNUSED` for
    /// pressure-pressure pairs.
    pub(crate) positions: Vec<Vec<usize>>,
    lu: Option<SparseLu>,
}

impl std::fmt::Debug for FlowSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowSystem").field("n_unknowns", &self.space.n_unknowns()).finish()
    }
}

impl FlowSystem {
    pub fn new(space: TaylorHoodSpace) -> Self {
        let tensors = assemble_fem_tensors(&space);
        let n = space.n_unknowns();
        let mut rows = vec![Vec::new(); n];
        for e in 0..space.n_elements() {
            let dofs = space.local_dofs(e);
            for (i, &r) in dofs.iter().enumerate() {
                for (j, &c) in dofs.iter().enumerate() {
                    if i < 18 || j < 18 {
                        rows[r].push(c);
                    }
                }
            }
        }
        let jacobian = CsrMatrix::from_pattern(n, rows);
        let positions = (0..space.n_elements())
            .map(|e| {
                let dofs = space.local_dofs(e);
                let mut pos = vec![UNUSED; LOCAL_DOFS * LOCAL_DOFS];
                for i in 0..LOCAL_DOFS {
                    for j in 0..LOCAL_DOFS {
                        if i < 18 || j < 18 {
                            pos[i * LOCAL_DOFS + j] = jacobian.position(dofs[i], dofs[j]).expect("pattern");
                        }
                    }
                }
                pos
            })
            .collect();
        Self {
            space,
            tensors,
            jacobian,
            positions,
            lu: None,
        }
    }

    pub fn n_unknowns(&self) -> usize {
        self.space.n_unknowns()
    }

    pub(crate) fn gather(&self, e: usize, x: &[f64]) -> [f64; LOCAL_DOFS] {
        let dofs = self.space.local_dofs(e);
        std::array::from_fn(|i| x[dofs[i]])
    }

    pub fn residual(&self, x: &[f64], mu: f64, boundary: Boundary) -> Vec<f64> {
        let mut r = vec![0.0; self.n_unknowns()];
        for e in 0..self.space.n_elements() {
            let re = element_residual(&self.space, e, &self.gather(e, x), mu);
            for (i, d) in self.space.local_dofs(e).into_iter().enumerate() {
                r[d] += re[i];
            }
        }
        if let Boundary::Dirichlet { inflow_scale } = boundary {
            for &(d, g) in &self.space.constraints {
                r[d] = x[d] - inflow_scale * g;
            }
        }
        r
    }

    /// Assembles the Jacobian into `self.jacobian`.
    pub fn assemble_jacobian(&mut self, x: &[f64], mu: f64, boundary: Boundary) {
        self.jacobian.clear();
        for e in 0..self.space.n_elements() {
            let ke = element_jacobian(&self.space, e, &self.gather(e, x), mu);
            let pos = &self.positions[e];
            for i in 0..LOCAL_DOFS {
                for j in 0..LOCAL_DOFS {
                    let k = pos[i * LOCAL_DOFS + j];
                    if k != UNUSED {
                        self.jacobian.values[k] += ke[i][j];
                    }
                }
            }
        }
        if matches!(boundary, Boundary::Dirichlet { .. }) {
            self.jacobian.constrain(&self.space.is_constrained);
        }
    }

    /// Factors the current Jacobian and solves `J dx = rhs` in place.
    pub fn factor_and_solve(&mut self, rhs: &mut [f64]) -> Result<()> {
        if self.lu.is_none() {
            self.lu = Some(SparseLu::analyze(&self.jacobian)?);
        }
        let lu = self.lu.as_mut().expect("analysed");
        lu.factor(&self.jacobian)?;
        lu.solve_in_place(rhs)
    }

    /// Solves again with the last factorisation.
    pub fn resolve(&self, rhs: &mut [f64]) -> Result<()> {
        self.lu
            .as_ref()
            .ok_or_else(|| crate::error::Error::Factorization("no factorisation".into()))?
            .solve_in_place(rhs)
    }

    /// State satisfying the boundary data, zero elsewhere.
    pub fn zero_state(&self, inflow_scale: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.n_unknowns()];
        self.space.apply_constraints(&mut x, inflow_scale);
        x
    }

    pub fn observable(&self, x: &[f64], spec: &ObservableSpec) -> Result<f64> {
        self.space.eval_velocity(x, spec.point, spec.component)
    }

    /// Infinity norm of the discrete divergence over pressure dofs.
    pub fn divergence_norm(&self, x: &[f64]) -> f64 {
        let v = &x[..2 * self.space.n_q2];
        self.tensors.d.mul(v).iter().fold(0.0, |m, d| f64::max(m, d.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub line_search: bool,
    pub max_halvings: usize,
    pub inflow_scale: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 30,
            line_search: true,
            max_halvings: 8,
            inflow_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    /// Unknown vector `[v_x, v_y, p]`.
    pub x: Vec<f64>,
    pub mu: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Infinity norms of the residual, starting with the initial one.
    pub history: Vec<f64>,
    /// 2-norms of the residual at the same iterates (the line-search merit).
    pub merits: Vec<f64>,
    /// The line search could not reduce the residual.
    pub stalled: bool,
}

impl FlowState {
    pub fn velocity<'a>(&'a self, space: &TaylorHoodSpace) -> &'a [f64] {
        &self.x[..2 * space.n_q2]
    }

    pub fn pressure<'a>(&'a self, space: &TaylorHoodSpace) -> &'a [f64] {
        &self.x[2 * space.n_q2..]
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

/// A square nonlinear system with Dirichlet-style constraints.
pub(crate) trait NewtonProblem {
    fn residual(&self, x: &[f64]) -> Vec<f64>;
    /// Overwrites `rhs` with `J(x)^-1 rhs`.
    fn solve_jacobian(&mut self, x: &[f64], rhs: &mut [f64]) -> Result<()>;
    fn apply_constraints(&self, x: &mut [f64]);
}

pub(crate) struct NewtonOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub merits: Vec<f64>,
    pub stalled: bool,
}

pub(crate) fn damped_newton<P: NewtonProblem>(problem: &mut P, initial: &[f64], opts: &NewtonOptions) -> Result<NewtonOutcome> {
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {}", opts.tol)));
    }
    let mut x = initial.to_vec();
    problem.apply_constraints(&mut x);
    let mut r = problem.residual(&x);
    let mut history = vec![norm_inf(&r)];
    let mut merits = vec![norm2(&r)];
    let mut iterations = 0;
    let mut stalled = false;
    while *history.last().unwrap() >= opts.tol && iterations < opts.max_iter {
        let mut dx = r.clone();
        problem.solve_jacobian(&x, &mut dx)?;
        let merit = *merits.last().unwrap();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a - t * b).collect();
            let rt = problem.residual(&trial);
            let m = norm2(&rt);
            if !opts.line_search || m < merit {
                accepted = Some((trial, rt, m));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((xn, rn, m)) => {
                x = xn;
                r = rn;
                history.push(norm_inf(&r));
                merits.push(m);
            }
            None => {
                stalled = true;
                break;
            }
        }
        if !history.last().unwrap().is_finite() {
            break;
        }
    }
    Ok(NewtonOutcome {
        x,
        iterations,
        history,
        merits,
        stalled,
    })
}

struct FlowProblem<'a> {
    sys: &'a mut FlowSystem,
    mu: f64,
    inflow_scale: f64,
}

impl NewtonProblem for FlowProblem<'_> {
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.sys.residual(
            x,
            self.mu,
            Boundary::Dirichlet {
                inflow_scale: self.inflow_scale,
            },
        )
    }

    fn solve_jacobian(&mut self, x: &[f64], rhs: &mut [f64]) -> Result<()> {
        self.sys.assemble_jacobian(
            x,
            self.mu,
            Boundary::Dirichlet {
                inflow_scale: self.inflow_scale,
            },
        );
        self.sys.factor_and_solve(rhs)
    }

    fn apply_constraints(&self, x: &mut [f64]) {
        self.sys.space.apply_constraints(x, self.inflow_scale);
    }
}

/// Newton iteration with backtracking: the step is halved until the 2-norm
/// of the residual decreases. Convergence is the infinity norm below `tol`.
pub fn newton_flow(sys: &mut FlowSystem, initial: &[f64], mu: f64, opts: &NewtonOptions) -> Result<FlowState> {
    let mut problem = FlowProblem {
        sys,
        mu,
        inflow_scale: opts.inflow_scale,
    };
    let out = damped_newton(&mut problem, initial, opts)?;
    let residual_norm = *out.history.last().unwrap();
    Ok(FlowState {
        x: out.x,
        mu,
        residual_norm,
        converged: residual_norm < opts.tol,
        iterations: out.iterations,
        history: out.history,
        merits: out.merits,
        stalled: out.stalled,
    })
}

/// Linear Stokes solve (convection dropped) with the boundary data.
pub fn stokes_solve(sys: &mut FlowSystem, mu: f64, inflow_scale: f64) -> Result<Vec<f64>> {
    let n = sys.n_unknowns();
    let nq = sys.space.n_q2;
    let mut mat = sys.jacobian.clone();
    mat.clear();
    let a = &sys.tensors.a;
    for c in 0..2 {
        for i in 0..nq {
            for (j, v) in a.row(i) {
                let k = mat.position(c * nq + i, c * nq + j).expect("pattern");
                mat.values[k] += mu * v;
            }
        }
    }
    for i in 0..2 * nq {
        for (j, v) in sys.tensors.c.row(i) {
            let k = mat.position(i, 2 * nq + j).expect("pattern");
            mat.values[k] -= v;
            let k = mat.position(2 * nq + j, i).expect("pattern");
            mat.values[k] += v;
        }
    }
    let g = sys.zero_state(inflow_scale);
    // move the prescribed columns to the right-hand side
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        if !sys.space.is_constrained[i] {
            rhs[i] = -mat.row(i).map(|(j, v)| v * g[j]).sum::<f64>();
        }
    }
    mat.constrain(&sys.space.is_constrained);
    for &(d, v) in &sys.space.constraints {
        rhs[d] = inflow_scale * v;
    }
    crate::sparse::solve(&mat, &rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    pub mu_from: f64,
    pub mu_to: f64,
    pub step: f64,
    pub observable: ObservableSpec,
    pub newton: NewtonOptions,
    /// Overshoot of the seeds in observable units. The upper and lower
    /// seeds are pass 0 plus a multiple of the critical direction chosen so
    /// that their observable is `+-(|obs0| + seed_amplitude)`.
    pub seed_amplitude: f64,
    /// Observables closer than this are the same branch.
    pub distinct_tol: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            mu_from: 2.0,
            mu_to: 0.5,
            step: 0.01,
            observable: ObservableSpec::default(),
            newton: NewtonOptions::default(),
            seed_amplitude: 0.5,
            distinct_tol: 1e-4,
        }
    }
}

/// Per-pass results of a continuation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub diagram: BifurcationDiagram,
    pub mu_values: Vec<f64>,
    /// `states[pass][k]` at `mu_values[k]`.
    pub states: Vec<Vec<FlowState>>,
    /// Smallest parameter above which all passes agree, if they ever split.
    pub mu_critical: Option<f64>,
}

impl ContinuationResult {
    pub fn observable(&self, pass: usize, k: usize) -> f64 {
        self.diagram
            .records
            .iter()
            .filter(|r| r.branch == Some(pass))
            .nth(k)
            .map_or(f64::NAN, |r| r.observable)
    }

    /// Index of the parameter value nearest `mu`.
    pub fn nearest(&self, mu: f64) -> usize {
        let mut best = 0;
        for (k, m) in self.mu_values.iter().enumerate() {
            if (m - mu).abs() < (self.mu_values[best] - mu).abs() {
                best = k;
            }
        }
        best
    }
}

/// Dominant asymmetric direction at a state: a few inverse-iteration steps
/// with the Jacobian, started from a uniform vertical velocity, normalised to
/// unit infinity norm and signed so that the observable is positive.
pub fn critical_direction(sys: &mut FlowSystem, x: &[f64], mu: f64, obs: &ObservableSpec, inflow_scale: f64) -> Result<Vec<f64>> {
    let boundary = Boundary::Dirichlet { inflow_scale };
    sys.assemble_jacobian(x, mu, boundary);
    let nq = sys.space.n_q2;
    let mut z = vec![0.0; sys.n_unknowns()];
    for i in 0..nq {
        if !sys.space.is_constrained[nq + i] {
            z[nq + i] = 1.0;
        }
    }
    for it in 0..4 {
        if it == 0 {
            sys.factor_and_solve(&mut z)?;
        } else {
            sys.resolve(&mut z)?;
        }
        for (i, zi) in z.iter_mut().enumerate() {
            if sys.space.is_constrained[i] {
                *zi = 0.0;
            }
        }
        let s = norm_inf(&z[..2 * nq]);
        if s > 0.0 {
            z.iter_mut().for_each(|v| *v /= s);
        }
    }
    if sys.observable(&z, obs)? < 0.0 {
        z.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(z)
}

/// Marches the viscosity from `mu_from` down to `mu_to`. Pass 0 starts from
/// zero and follows the symmetric branch. Passes 1 and 2 are reseeded from
/// pass 0 shifted along the critical direction at every step until they leave
/// pass 0, and are continued on their own afterwards. A continued pass that
/// falls back onto pass 0 is reseeded.
pub fn continuation_sweep(sys: &mut FlowSystem, config: &ContinuationConfig) -> Result<ContinuationResult> {
    if !(config.step > 0.0) {
        return Err(invalid("step", format!("must be positive, got {}", config.step)));
    }
    let down = config.mu_to <= config.mu_from;
    let span = (config.mu_to - config.mu_from).abs();
    let n_steps = (span / config.step + 1e-9).floor() as usize;
    let sign = if down { -1.0 } else { 1.0 };
    let mu_values: Vec<f64> = (0..=n_steps).map(|k| config.mu_from + sign * k as f64 * config.step).collect();
    let scale = config.newton.inflow_scale;
    let obs = config.observable;

    let mut states: Vec<Vec<FlowState>> = vec![Vec::new(); 3];
    let mut diagram = BifurcationDiagram::new(Some(obs));
    let mut prev: [Option<Vec<f64>>; 3] = [None, None, None];
    let mut prev_obs = [0.0f64; 3];
    let mut split = [false; 3];
    for &mu in &mu_values {
        let guess0 = prev[0].clone().unwrap_or_else(|| sys.zero_state(scale));
        let s0 = newton_flow(sys, &guess0, mu, &config.newton)?;
        let obs0 = sys.observable(&s0.x, &obs)?;
        let mut direction: Option<(Vec<f64>, f64)> = None;
        let mut row = vec![(s0, obs0)];
        for pass in 1..3 {
            let side = if pass == 1 { 1.0 } else { -1.0 };
            let mut attempt = None;
            if split[pass] {
                let guess = prev[pass].clone().expect("split pass has a state");
                let st = newton_flow(sys, &guess, mu, &config.newton)?;
                let o = sys.observable(&st.x, &obs)?;
                attempt = Some((st, o));
            }
            let distinct = |a: &Option<(FlowState, f64)>| {
                a.as_ref()
                    .is_some_and(|(st, o)| st.converged && (o - obs0).abs() > config.distinct_tol)
            };
            if !distinct(&attempt) {
                // (re)seed from pass 0; a split pass that fell back onto
                // pass 0 is aimed past its own last observable
                if direction.is_none() {
                    let z = critical_direction(sys, &row[0].0.x, mu, &obs, scale)?;
                    let obs_z = sys.observable(&z, &obs)?;
                    if !(obs_z > 0.0) {
                        return Err(invalid("observable", "critical direction does not move the observable"));
                    }
                    direction = Some((z, obs_z));
                }
                let (z, obs_z) = direction.as_ref().expect("direction computed");
                let reach = if split[pass] { prev_obs[pass].abs() } else { obs0.abs() };
                let alpha = (side * (reach + config.seed_amplitude) - obs0) / obs_z;
                let guess: Vec<f64> = row[0].0.x.iter().zip(z).map(|(a, b)| a + alpha * b).collect();
                let st = newton_flow(sys, &guess, mu, &config.newton)?;
                let o = sys.observable(&st.x, &obs)?;
                let seeded = Some((st, o));
                if attempt.is_none() || distinct(&seeded) {
                    attempt = seeded;
                }
            }
            let (state, o) = attempt.expect("one attempt made");
            if state.converged && (o - obs0).abs() > config.distinct_tol {
                split[pass] = true;
            }
            row.push((state, o));
        }
        for (pass, (state, o)) in row.into_iter().enumerate() {
            diagram.push(DiagramRecord {
                mu,
                observable: o,
                branch: Some(pass),
                weight: 1.0,
                converged: state.converged,
            });
            if state.converged {
                prev[pass] = Some(state.x.clone());
                prev_obs[pass] = o;
            }
            states[pass].push(state);
        }
    }
    let mu_critical = critical_parameter(&diagram, &mu_values, config.distinct_tol);
    Ok(ContinuationResult {
        diagram,
        mu_values,
        states,
        mu_critical,
    })
}

/// Smallest parameter of the run of largest parameters where all converged
/// passes agree; `None` if they agree everywhere.
pub fn critical_parameter(diagram: &BifurcationDiagram, mu_values: &[f64], tol: f64) -> Option<f64> {
    let mut sorted = mu_values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut last_single = None;
    for &mu in &sorted {
        let obs: Vec<f64> = diagram.at_mu(mu, 1e-12).filter(|r| r.converged).map(|r| r.observable).collect();
        let lo = obs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = obs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if obs.is_empty() || hi - lo <= tol {
            last_single = Some(mu);
        } else {
            return last_single;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{ChannelGeometry, ChannelMesh, MeshSpec, SymmetryMode};

    fn tiny_space() -> TaylorHoodSpace {
        let spec = MeshSpec {
            geometry: ChannelGeometry::default(),
            nx_inlet: 1,
            ny_inlet: 1,
            nx_main: 1,
            refinement: 0,
            symmetry: SymmetryMode::Unstructured,
            jitter_seed: 3,
        };
        TaylorHoodSpace::new(crate::mesh::build_channel_mesh(&spec).unwrap()).unwrap()
    }

    fn two_by_two() -> TaylorHoodSpace {
        let mut nodes = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                nodes.push([i as f64 + 0.1 * (j as f64 - 1.0) * (i == 1) as u8 as f64, j as f64]);
            }
        }
        let quads = vec![[0, 1, 4, 3], [1, 2, 5, 4], [3, 4, 7, 6], [4, 5, 8, 7]];
        let mesh = ChannelMesh {
            nodes,
            quads,
            boundary_edges: vec![],
            symmetry: SymmetryMode::Unstructured,
            geometry: ChannelGeometry::default(),
        };
        TaylorHoodSpace::new(mesh).unwrap()
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn homogeneous_zero_residual() {
        let sys = FlowSystem::new(two_by_two());
        let r = sys.residual(&vec![0.0; sys.n_unknowns()], 0.7, Boundary::Free);
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut sys = FlowSystem::new(two_by_two());
        let n = sys.n_unknowns();
        let x = pseudo_random(n, 9);
        let mu = 0.8;
        sys.assemble_jacobian(&x, mu, Boundary::Free);
        let jac = sys.jacobian.to_dense();
        let h = 1e-6;
        let mut max_err: f64 = 0.0;
        let scale = jac.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let rp = sys.residual(&xp, mu, Boundary::Free);
            let rm = sys.residual(&xm, mu, Boundary::Free);
            for i in 0..n {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                max_err = max_err.max((fd - jac[i * n + j]).abs());
            }
        }
        assert!(max_err < 1e-5 * scale, "{max_err} vs {scale}");
    }

    #[test]
    fn residual_matches_assembled_operators() {
        // with the convection switched off by a zero velocity in the
        // nonlinear term, mu A v - C p is linear: compare on a linear field
        let space = tiny_space();
        let sys = FlowSystem::new(space);
        let n = sys.n_unknowns();
        let nq = sys.space.n_q2;
        let mut x = vec![0.0; n];
        for j in 0..sys.space.n_p {
            x[2 * nq + j] = (j as f64).sin();
        }
        let r = sys.residual(&x, 1.3, Boundary::Free);
        let cp = sys.tensors.c.mul(&x[2 * nq..]);
        for i in 0..2 * nq {
            assert!((r[i] + cp[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn critical_parameter_definition() {
        let mut d = BifurcationDiagram::new(None);
        let mus = [1.2, 1.1, 1.0, 0.9];
        for &mu in &mus {
            for pass in 0..3 {
                let o = if mu < 1.05 && pass > 0 {
                    if pass == 1 {
                        0.5
                    } else {
                        -0.5
                    }
                } else {
                    0.0
                };
                d.push(DiagramRecord {
                    mu,
                    observable: o,
                    branch: Some(pass),
                    weight: 1.0,
                    converged: true,
                });
            }
        }
        assert_eq!(critical_parameter(&d, &mus, 1e-4), Some(1.1));
    }
}
