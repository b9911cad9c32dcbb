//! Intrusive stochastic Galerkin projection of the steady Navier-Stokes
//! equations with a random viscosity.
//!
//! The unknown is a coefficient matrix with one row per finite element
//! unknown and one column per chaos mode, stored row-major: entry
//! `dof * n_modes + mode`. Mode `m` of the residual is the projection of the
//! flow residual onto `psi_m`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagram::ObservableSpec;
use crate::error::{invalid, Error, Result};
use crate::fem::{TaylorHoodSpace, LOCAL_DOFS};
use crate::klexp::{Eigenfunction, KlExpansion, MeanField};
use crate::nssolve::{critical_direction, damped_newton, newton_flow, FlowSystem, NewtonOptions, NewtonProblem, UNUSED};
use crate::pcbasis::{build_moment_tensors, MomentTensors, PcBasis};
use crate::sparse::{CsrMatrix, SparseLu};

/// How the Newton iteration is started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SsfemInit {
    /// Deterministic solution at the mean viscosity in mode 0, seeded noise
    /// of the given amplitude in the higher modes.
    MeanWithNoise { amplitude: f64 },
    /// All modes zero apart from the boundary data.
    Zero,
    /// Deterministic solution at the mean viscosity in mode 0 and the
    /// critical direction in mode 1, scaled so that its observable
    /// coefficient equals `amplitude`.
    CriticalMode { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsfemConfig {
    pub newton: NewtonOptions,
    pub init: SsfemInit,
    pub rng_seed: u64,
    /// Probe used by the critical-mode start.
    pub observable: ObservableSpec,
}

impl Default for SsfemConfig {
    fn default() -> Self {
        Self {
            newton: NewtonOptions {
                tol: 1e-8,
                max_iter: 50,
                ..NewtonOptions::default()
            },
            init: SsfemInit::MeanWithNoise { amplitude: 1e-2 },
            rng_seed: 0,
            observable: ObservableSpec::default(),
        }
    }
}

/// Coupled Galerkin system: deterministic operators, moment tensors and the
/// block Jacobian.
pub struct SsfemSystem {
    pub flow: FlowSystem,
    pub basis: PcBasis,
    pub moments: MomentTensors,
    /// `viscosity[j][m] = E[mu psi_j psi_m]`.
    pub viscosity: Vec<Vec<f64>>,
    pub jacobian: CsrMatrix,
    /// Offset of each deterministic Jacobian entry inside its stochastic row.
    entry_offset: Vec<usize>,
    /// Whether a deterministic entry couples all mode pairs.
    entry_full: Vec<bool>,
    constrained: Vec<bool>,
    lu: Option<SparseLu>,
}

impl std::fmt::Debug for SsfemSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SsfemSystem")
            .field("n_unknowns", &self.n_unknowns())
            .field("n_modes", &self.n_modes())
            .finish()
    }
}

fn is_velocity(space: &TaylorHoodSpace, dof: usize) -> bool {
    dof < 2 * space.n_q2
}

impl SsfemSystem {
    /// Only spatially constant viscosity expansions are supported.
    pub fn new(space: TaylorHoodSpace, basis: PcBasis, kl: &KlExpansion) -> Result<Self> {
        let mean = match kl.mean {
            MeanField::Constant(c) => c,
            MeanField::Grid(_) => return Err(invalid("viscosity", "must be spatially constant")),
        };
        let amplitudes = kl
            .modes
            .iter()
            .map(|m| match m.eigenfunction {
                Eigenfunction::Constant(c) => Ok(c),
                Eigenfunction::Grid(_) => Err(invalid("viscosity", "must be spatially constant")),
            })
            .collect::<Result<Vec<f64>>>()?;
        let moments = build_moment_tensors(&basis, kl)?;
        let p = basis.len();
        let viscosity = (0..p)
            .map(|j| {
                (0..p)
                    .map(|m| {
                        mean * moments.e3[0][j][m] + amplitudes.iter().enumerate().map(|(i, a)| a * moments.e3[i + 1][j][m]).sum::<f64>()
                    })
                    .collect()
            })
            .collect();

        let flow = FlowSystem::new(space);
        let det = &flow.jacobian;
        let mut entry_offset = vec![0; det.nnz()];
        let mut entry_full = vec![false; det.nnz()];

        for r in 0..det.nrows {
            let mut off = 0;
            for k in det.row_ptr[r]..det.row_ptr[r + 1] {
                let full = is_velocity(&flow.space, r) && is_velocity(&flow.space, det.col_idx[k]);
                entry_offset[k] = off;
                entry_full[k] = full;
                off += if full { p } else { 1 };
            }
        }
        let n = det.nrows * p;
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in 0..det.nrows {
            for m in 0..p {
                for k in det.row_ptr[r]..det.row_ptr[r + 1] {
                    let c = det.col_idx[k];
                    if entry_full[k] {
                        col_idx.extend((0..p).map(|h| c * p + h));
                    } else {
                        col_idx.push(c * p + m);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        let nnz = col_idx.len();
        let jacobian = CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        };
        let constrained = (0..n).map(|i| flow.space.is_constrained[i / p]).collect();
        Ok(Self {
            flow,
            basis,
            moments,
            viscosity,
            jacobian,
            entry_offset,
            entry_full,
            constrained,
            lu: None,
        })
    }

    pub fn space(&self) -> &TaylorHoodSpace {
        &self.flow.space
    }

    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    pub fn n_unknowns(&self) -> usize {
        self.flow.n_unknowns() * self.n_modes()
    }

    fn gather(&self, e: usize, x: &[f64]) -> Vec<[f64; LOCAL_DOFS]> {
        let p = self.n_modes();
        let dofs = self.flow.space.local_dofs(e);
        (0..p).map(|m| std::array::from_fn(|i| x[dofs[i] * p + m])).collect()
    }

    /// Boundary data in mode 0, zero in the others.
    pub fn apply_constraints(&self, x: &mut [f64], inflow_scale: f64) {
        let p = self.n_modes();
        for &(d, v) in &self.flow.space.constraints {
            x[d * p] = inflow_scale * v;
            for m in 1..p {
                x[d * p + m] = 0.0;
            }
        }
    }

    /// Projected residual. With `inflow_scale` set, constrained rows hold
    /// `x - prescribed`.
    pub fn residual(&self, x: &[f64], inflow_scale: Option<f64>) -> Vec<f64> {
        let p = self.n_modes();
        let f3 = &self.moments.f3;
        let mut res = vec![0.0; self.n_unknowns()];
        let space = &self.flow.space;
        for e in 0..space.n_elements() {
            let local = self.gather(e, x);
            let mut r = vec![[0.0; LOCAL_DOFS]; p];
            for q in &space.qp[e] {
                let mut v = vec![[0.0; 2]; p];
                let mut gv = vec![[[0.0; 2]; 2]; p];
                let mut pr = vec![0.0; p];
                for j in 0..p {
                    for a in 0..9 {
                        for c in 0..2 {
                            let u = local[j][c * 9 + a];
                            v[j][c] += q.phi[a] * u;
                            gv[j][c][0] += q.grad[a][0] * u;
                            gv[j][c][1] += q.grad[a][1] * u;
                        }
                    }
                    pr[j] = (0..4).map(|s| q.psi[s] * local[j][18 + s]).sum();
                }
                // conv[j][h] = (v_j . grad) v_h
                let mut conv = vec![[0.0; 2]; p * p];
                for j in 0..p {
                    for h in 0..p {
                        for c in 0..2 {
                            conv[j * p + h][c] = v[j][0] * gv[h][c][0] + v[j][1] * gv[h][c][1];
                        }
                    }
                }
                let w = q.wdet;
                for m in 0..p {
                    let norm = self.moments.c2[m][m];
                    let mut cm = [0.0; 2];
                    let mut gm = [[0.0; 2]; 2];
                    for j in 0..p {
                        for h in 0..p {
                            let f = f3[m][j][h];
                            if f != 0.0 {
                                cm[0] += f * conv[j * p + h][0];
                                cm[1] += f * conv[j * p + h][1];
                            }
                        }
                        let nu = self.viscosity[j][m];
                        if nu != 0.0 {
                            for c in 0..2 {
                                gm[c][0] += nu * gv[j][c][0];
                                gm[c][1] += nu * gv[j][c][1];
                            }
                        }
                    }
                    for a in 0..9 {
                        for c in 0..2 {
                            let diff = q.grad[a][0] * gm[c][0] + q.grad[a][1] * gm[c][1];
                            r[m][c * 9 + a] += w * (diff + cm[c] * q.phi[a] - norm * pr[m] * q.grad[a][c]);
                        }
                    }
                    let div = gv[m][0][0] + gv[m][1][1];
                    for s in 0..4 {
                        r[m][18 + s] += w * norm * q.psi[s] * div;
                    }
                }
            }
            let dofs = space.local_dofs(e);
            for (m, rm) in r.iter().enumerate() {
                for (i, &d) in dofs.iter().enumerate() {
                    res[d * p + m] += rm[i];
                }
            }
        }
        if let Some(scale) = inflow_scale {
            for &(d, v) in &space.constraints {
                for m in 0..p {
                    res[d * p + m] = x[d * p + m];
                }
                res[d * p] -= scale * v;
            }
        }
        res
    }

    /// Assembles the coupled Jacobian into `self.jacobian`.
    pub fn assemble_jacobian(&mut self, x: &[f64], constrain: bool) {
        let p = self.n_modes();
        self.jacobian.clear();
        let space = &self.flow.space;
        let f3 = &self.moments.f3;
        for e in 0..space.n_elements() {
            let local = self.gather(e, x);
            // blocks[m * p + k] = d r_m / d x_k
            let mut blocks = vec![[[0.0; LOCAL_DOFS]; LOCAL_DOFS]; p * p];
            for q in &space.qp[e] {
                let mut v = vec![[0.0; 2]; p];
                let mut gv = vec![[[0.0; 2]; 2]; p];
                for j in 0..p {
                    for a in 0..9 {
                        for c in 0..2 {
                            let u = local[j][c * 9 + a];
                            v[j][c] += q.phi[a] * u;
                            gv[j][c][0] += q.grad[a][0] * u;
                            gv[j][c][1] += q.grad[a][1] * u;
                        }
                    }
                }
                let w = q.wdet;
                for m in 0..p {
                    for k in 0..p {
                        // linearisation of sum_jh F (v_j . grad) v_h in mode k
                        let mut adv_field = [0.0; 2];
                        let mut grad_field = [[0.0; 2]; 2];
                        for j in 0..p {
                            let f = f3[m][j][k];
                            if f != 0.0 {
                                adv_field[0] += f * v[j][0];
                                adv_field[1] += f * v[j][1];
                                for c in 0..2 {
                                    grad_field[c][0] += f * gv[j][c][0];
                                    grad_field[c][1] += f * gv[j][c][1];
                                }
                            }
                        }
                        let nu = self.viscosity[k][m];
                        let blk = &mut blocks[m * p + k];
                        let adv: [f64; 9] = std::array::from_fn(|b| adv_field[0] * q.grad[b][0] + adv_field[1] * q.grad[b][1]);
                        for a in 0..9 {
                            let wa = w * q.phi[a];
                            for b in 0..9 {
                                let lap = w * nu * (q.grad[a][0] * q.grad[b][0] + q.grad[a][1] * q.grad[b][1]);
                                let pb = wa * q.phi[b];
                                for c in 0..2 {
                                    for d in 0..2 {
                                        let mut val = pb * grad_field[c][d];
                                        if c == d {
                                            val += lap + wa * adv[b];
                                        }
                                        blk[c * 9 + a][d * 9 + b] += val;
                                    }
                                }
                            }
                        }
                    }
                    let norm = self.moments.c2[m][m];
                    let blk = &mut blocks[m * p + m];
                    for a in 0..9 {
                        for c in 0..2 {
                            for s in 0..4 {
                                let g = w * norm * q.psi[s] * q.grad[a][c];
                                blk[c * 9 + a][18 + s] -= g;
                                blk[18 + s][c * 9 + a] += g;
                            }
                        }
                    }
                }
            }
            let dofs = space.local_dofs(e);
            let pos = &self.flow.positions[e];
            for i in 0..LOCAL_DOFS {
                for j in 0..LOCAL_DOFS {
                    let kd = pos[i * LOCAL_DOFS + j];
                    if kd == UNUSED {
                        continue;
                    }
                    let full = self.entry_full[kd];
                    for m in 0..p {
                        let base = self.jacobian.row_ptr[dofs[i] * p + m] + self.entry_offset[kd];
                        if full {
                            for k in 0..p {
                                self.jacobian.values[base + k] += blocks[m * p + k][i][j];
                            }
                        } else {
                            self.jacobian.values[base] += blocks[m * p + m][i][j];
                        }
                    }
                }
            }
        }
        if constrain {
            self.jacobian.constrain(&self.constrained);
        }
    }

    fn factor_and_solve(&mut self, rhs: &mut [f64]) -> Result<()> {
        if self.lu.is_none() {
            self.lu = Some(SparseLu::analyze(&self.jacobian)?);
        }
        let p = self.n_modes();
        let lu = self.lu.as_mut().expect("analysed");
        lu.factor(&self.jacobian).map_err(|e| locate_failure(e, p))?;
        lu.solve_in_place(rhs).map_err(|e| locate_failure(e, p))
    }

    /// Starting coefficients for the configured initialisation.
    pub fn initial_state(&mut self, config: &SsfemConfig) -> Result<Vec<f64>> {
        let p = self.n_modes();
        let n = self.flow.n_unknowns();
        let scale = config.newton.inflow_scale;
        let mut x = vec![0.0; n * p];
        if config.init == SsfemInit::Zero {
            self.apply_constraints(&mut x, scale);
            return Ok(x);
        }
        let mean = self.mean_viscosity();
        let zero = self.flow.zero_state(scale);
        let det_opts = NewtonOptions {
            tol: config.newton.tol.min(1e-9),
            ..config.newton
        };
        let det = newton_flow(&mut self.flow, &zero, mean, &det_opts)?;
        for d in 0..n {
            x[d * p] = det.x[d];
        }
        match config.init {
            SsfemInit::MeanWithNoise { amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
                for d in 0..n {
                    for m in 1..p {
                        let noise: f64 = rng.gen_range(-1.0..=1.0);
                        x[d * p + m] = amplitude * noise;
                    }
                }
            }
            SsfemInit::CriticalMode { amplitude } if p > 1 => {
                let z = critical_direction(&mut self.flow, &det.x, mean, &config.observable, scale)?;
                let oz = self.flow.observable(&z, &config.observable)?;
                if !(oz > 0.0) {
                    return Err(invalid("observable", "critical direction does not move the observable"));
                }
                for d in 0..n {
                    x[d * p + 1] = amplitude / oz * z[d];
                }
            }
            _ => {}
        }
        self.apply_constraints(&mut x, scale);
        Ok(x)
    }

    pub fn mean_viscosity(&self) -> f64 {
        self.viscosity[0][0] / self.moments.c2[0][0]
    }

    /// Runs the coupled Newton iteration from the configured start.
    pub fn solve(&mut self, config: &SsfemConfig) -> Result<SsfemSolution> {
        let x0 = self.initial_state(config)?;
        self.solve_from(&x0, config)
    }

    pub fn solve_from(&mut self, initial: &[f64], config: &SsfemConfig) -> Result<SsfemSolution> {
        if initial.len() != self.n_unknowns() {
            return Err(Error::DimensionMismatch {
                expected: self.n_unknowns(),
                got: initial.len(),
            });
        }
        let mut problem = SsfemProblem {
            sys: self,
            inflow_scale: config.newton.inflow_scale,
        };
        let out = damped_newton(&mut problem, initial, &config.newton)?;
        let residual_norm = *out.history.last().unwrap();
        Ok(SsfemSolution {
            n_dofs: self.flow.n_unknowns(),
            n_modes: self.n_modes(),
            coeffs: out.x,
            residual_norm,
            converged: residual_norm < config.newton.tol,
            iterations: out.iterations,
            history: out.history,
            stalled: out.stalled,
        })
    }
}

/// Names the mode block of a failed factorisation when it can.
fn locate_failure(err: Error, p: usize) -> Error {
    match err {
        Error::Factorization(msg) => {
            let block = msg
                .rsplit("unknown ")
                .next()
                .and_then(|s| s.trim_end_matches(')').parse::<usize>().ok())
                .map(|k| format!(" (dof {}, mode {})", k / p, k % p))
                .unwrap_or_default();
            Error::Factorization(format!("{msg}{block}"))
        }
        other => other,
    }
}

struct SsfemProblem<'a> {
    sys: &'a mut SsfemSystem,
    inflow_scale: f64,
}

impl NewtonProblem for SsfemProblem<'_> {
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.sys.residual(x, Some(self.inflow_scale))
    }

    fn solve_jacobian(&mut self, x: &[f64], rhs: &mut [f64]) -> Result<()> {
        self.sys.assemble_jacobian(x, true);
        self.sys.factor_and_solve(rhs)
    }

    fn apply_constraints(&self, x: &mut [f64]) {
        self.sys.apply_constraints(x, self.inflow_scale);
    }
}

/// Converged (or last) chaos coefficients of all unknowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsfemSolution {
    pub n_dofs: usize,
    pub n_modes: usize,
    /// Row-major `n_dofs x n_modes`.
    pub coeffs: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub stalled: bool,
}

impl SsfemSolution {
    /// Chaos coefficients of one unknown.
    pub fn row(&self, dof: usize) -> &[f64] {
        &self.coeffs[dof * self.n_modes..(dof + 1) * self.n_modes]
    }

    /// One mode as a deterministic unknown vector.
    pub fn mode(&self, m: usize) -> Vec<f64> {
        (0..self.n_dofs).map(|d| self.coeffs[d * self.n_modes + m]).collect()
    }

    pub fn mean_field(&self) -> Vec<f64> {
        self.mode(0)
    }

    pub fn variance_field(&self, basis: &PcBasis) -> Vec<f64> {
        variance_field(&self.coeffs, self.n_modes, basis)
    }

    /// Unknown vector for one seed value.
    pub fn realize(&self, basis: &PcBasis, xi: &[f64]) -> Vec<f64> {
        let mut psi = vec![0.0; self.n_modes];
        basis.eval_all(xi, &mut psi);
        (0..self.n_dofs)
            .map(|d| self.row(d).iter().zip(&psi).map(|(c, p)| c * p).sum())
            .collect()
    }

    /// Chaos coefficients of a velocity component at a point.
    pub fn point_polynomial(&self, space: &TaylorHoodSpace, point: [f64; 2], component: usize) -> Result<Vec<f64>> {
        if component > 1 {
            return Err(invalid("component", format!("must be 0 or 1, got {component}")));
        }
        let weights = space.point_weights(point)?;
        let off = component * space.n_q2;
        let mut out = vec![0.0; self.n_modes];
        for (n, w) in weights {
            for (o, c) in out.iter_mut().zip(self.row(off + n)) {
                *o += w * c;
            }
        }
        Ok(out)
    }

    pub fn probe(&self, space: &TaylorHoodSpace, spec: &ObservableSpec) -> Result<Vec<f64>> {
        self.point_polynomial(space, spec.point, spec.component)
    }
}

/// `sum_{i >= 1} U[n][i]^2 E[psi_i^2]` for every row.
pub fn variance_field(coeffs: &[f64], n_modes: usize, basis: &PcBasis) -> Vec<f64> {
    coeffs
        .chunks(n_modes)
        .map(|row| row.iter().zip(&basis.norms).skip(1).map(|(c, n)| c * c * n).sum())
        .collect()
}
