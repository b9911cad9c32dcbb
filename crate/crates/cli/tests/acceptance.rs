//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! `cargo test -p stochbif-cli --test acceptance -- 4 7` runs a subset.
//! The exit status is zero unless `STOCHBIF_ACCEPTANCE_STRICT` is set, so a
//! failed criterion does not stop the remaining test targets of a workspace
//! run; the failure is still reported on its line and in the summary.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use stochbif::diagram::ObservableSpec;
use stochbif::fem::TaylorHoodSpace;
use stochbif::klexp::{gaussian_kl, uniform_kl, KlExpansion};
use stochbif::mc::{covering_sweep, draws, ensemble_stats, run_mc, InitPolicy, McConfig};
use stochbif::mesh::{build_channel_mesh, ChannelGeometry, MeshPreset, MeshSpec, SymmetryMode};
use stochbif::nssolve::{continuation_sweep, newton_flow, Boundary, ContinuationConfig, ContinuationResult, FlowSystem, NewtonOptions};
use stochbif::pcbasis::{build_moment_tensors, gauss_quadrature, Family, PcBasis};
use stochbif::pitchfork::{
    random_initializations, split_seed, sweep_diagram, PitchforkProblem, SweepConfig, DEFAULT_INIT_AMPLITUDE, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use stochbif::ssfem::{SsfemConfig, SsfemInit, SsfemSolution, SsfemSystem};
use stochbif::uq_stats::{self, local_extrema, ExtremumKind, SamplingZone};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// State shared between criteria: the dense-mesh sweep feeds criterion 6.
#[derive(Default)]
struct Shared {
    dense_sweep: Option<(ContinuationResult, Duration)>,
}

impl Shared {
    fn dense_sweep(&mut self) -> &(ContinuationResult, Duration) {
        self.dense_sweep.get_or_insert_with(|| {
            let t = Instant::now();
            let mut sys = FlowSystem::new(space(MeshPreset::DenseUnstructured));
            let config = ContinuationConfig {
                step: 0.01,
                ..ContinuationConfig::default()
            };
            let r = continuation_sweep(&mut sys, &config).expect("continuation sweep");
            (r, t.elapsed())
        })
    }
}

fn space(preset: MeshPreset) -> TaylorHoodSpace {
    TaylorHoodSpace::new(preset.build().expect("mesh")).expect("space")
}

fn near(peaks: &[(f64, f64)], target: f64, tol: f64) -> bool {
    peaks.iter().any(|p| (p.0 - target).abs() <= tol)
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn pitchfork_diagram() -> Verdict {
    let t = Instant::now();
    let means = uq_stats::linspace(-0.5, 1.5, 500);
    let config = SweepConfig {
        half_width: 0.01,
        max_degree: 5,
        ..SweepConfig::default()
    };
    let (_, entries) = sweep_diagram(&means, &config).expect("sweep");
    let elapsed = t.elapsed();
    let (mut pos, mut pos_ok, mut neg, mut neg_ok) = (0, 0, 0, 0);
    for e in &entries {
        let mu = e.mu_mean;
        if mu > 0.05 {
            pos += 1;
            let r = mu.sqrt();
            if [0.0, r, -r].iter().all(|&t| near(&e.peaks, t, 0.05)) {
                pos_ok += 1;
            }
        } else if mu < -0.05 {
            neg += 1;
            if e.peaks.len() == 1 && e.peaks[0].0.abs() <= 0.02 {
                neg_ok += 1;
            }
        }
    }
    let fast = elapsed < Duration::from_secs(120);
    verdict(
        pos_ok == pos && neg_ok == neg && fast,
        format!(
            "three-branch cover at {pos_ok}/{pos} means > 0.05; single peak at 0 for {neg_ok}/{neg} means < -0.05; {:.1} s (target < 120 s)",
            elapsed.as_secs_f64()
        ),
    )
}

/// Peaks of each converged solution from 100 seeded starts.
fn pitchfork_peaks(family: Family, law: KlExpansion) -> (usize, Vec<Vec<(f64, f64)>>) {
    let basis = PcBasis::univariate(family, 5);
    let problem = PitchforkProblem::new(basis.clone(), law).expect("problem");
    let seed = 42;
    let starts = random_initializations(100, basis.len(), DEFAULT_INIT_AMPLITUDE, seed);
    let solutions = problem.solve_ensemble(&starts, DEFAULT_TOL, DEFAULT_MAX_ITER).expect("solve");
    let peaks = solutions
        .iter()
        .enumerate()
        .filter(|(_, s)| s.converged)
        .map(|(id, s)| {
            let samples = uq_stats::sample_expansion(&s.coeffs, &basis, 20_000, split_seed(seed, id as u64));
            let pdf = uq_stats::kde(&samples, None).expect("kde");
            uq_stats::peaks(&pdf, uq_stats::DEFAULT_PROMINENCE)
        })
        .collect();
    (solutions.len(), peaks)
}

fn pitchfork_trimodality() -> Verdict {
    let (_, uniform) = pitchfork_peaks(Family::LegendreUniform, uniform_kl(0.8, 1.2).unwrap());
    let tri = uniform.iter().filter(|p| [-1.0, 0.0, 1.0].iter().all(|&t| near(p, t, 0.1))).count();
    let frac = tri as f64 / uniform.len().max(1) as f64;
    let (_, gaussian) = pitchfork_peaks(Family::HermiteGaussian, gaussian_kl(1.0, 0.06).unwrap());
    let spread = |sets: &[Vec<(f64, f64)>]| std_dev(&sets.iter().flatten().map(|p| p.0).collect::<Vec<_>>());
    let (su, sg) = (spread(&uniform), spread(&gaussian));
    verdict(
        frac >= 0.8 && sg > su,
        format!(
            "tri-modal {tri}/{} converged ({:.0}%, need >= 80%); peak-location spread gaussian {sg:.4} vs uniform {su:.4}",
            uniform.len(),
            100.0 * frac
        ),
    )
}

fn coanda_critical_point(shared: &mut Shared) -> Verdict {
    let (r, elapsed) = shared.dense_sweep();
    let ok_time = *elapsed < Duration::from_secs(30 * 60);
    match r.mu_critical {
        Some(mu) => verdict(
            (0.91..=1.01).contains(&mu) && ok_time,
            format!(
                "mu* = {mu:.2} on the 1541-node mesh (need 0.91..1.01); sweep {:.0} s (target < 1800 s)",
                elapsed.as_secs_f64()
            ),
        ),
        None => verdict(false, "branches never split"),
    }
}

fn ssfem_reduction() -> Verdict {
    let tight = NewtonOptions {
        tol: 1e-11,
        max_iter: 50,
        ..NewtonOptions::default()
    };
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for preset in MeshPreset::ALL {
        for mu in [0.9, 1.3, 2.0] {
            let basis = PcBasis::univariate(Family::LegendreUniform, 0);
            let mut ss = SsfemSystem::new(space(preset), basis, &uniform_kl(mu - 0.05, mu + 0.05).unwrap()).unwrap();
            let config = SsfemConfig {
                newton: tight,
                init: SsfemInit::Zero,
                ..SsfemConfig::default()
            };
            let sol = ss.solve(&config).expect("ssfem");
            let zero = ss.flow.zero_state(1.0);
            let det = newton_flow(&mut ss.flow, &zero, mu, &tight).expect("newton");
            let diff = sol.coeffs.iter().zip(&det.x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(diff);
            if !(sol.converged && det.converged && diff <= 1e-8) {
                failures.push(format!("{} mu={mu}: diff {diff:.1e}", preset.name()));
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "max |ssfem - deterministic| = {worst:.2e} over 3 meshes x 3 means (need <= 1e-8) {}",
            failures.join("; ")
        ),
    )
}

fn vy_variance(ss: &SsfemSystem, sol: &SsfemSolution) -> Vec<f64> {
    let nq = ss.space().n_q2;
    sol.variance_field(&ss.basis)[nq..2 * nq].to_vec()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn ssfem_run(preset: MeshPreset, family: Family, law: KlExpansion, npc: usize) -> (SsfemSystem, SsfemSolution) {
    let mut ss = SsfemSystem::new(space(preset), PcBasis::univariate(family, npc), &law).expect("system");
    let sol = ss.solve(&SsfemConfig::default()).expect("ssfem");
    (ss, sol)
}

fn variance_ordering() -> Verdict {
    let (ss_a, a) = ssfem_run(
        MeshPreset::DenseUnstructured,
        Family::LegendreUniform,
        uniform_kl(0.845, 0.955).unwrap(),
        3,
    );
    let (ss_b, b) = ssfem_run(
        MeshPreset::DenseUnstructured,
        Family::LegendreUniform,
        uniform_kl(1.245, 1.355).unwrap(),
        3,
    );
    let va = vy_variance(&ss_a, &a);
    let vb = vy_variance(&ss_b, &b);
    let k = argmax(&va);
    let (max_a, max_b) = (va[k], vb[argmax(&vb)]);
    let x = ss_a.space().q2_coords[k][0];
    let ratio = max_a / max_b;
    verdict(
        a.converged && b.converged && ratio >= 100.0 && (10.0..=25.0).contains(&x),
        format!(
            "max var v_y {max_a:.3e} vs {max_b:.3e}, ratio {ratio:.1} (need >= 100); argmax x = {x:.2} (need 10..25); converged {} / {}",
            a.converged, b.converged
        ),
    )
}

fn extrema_in_zone(ss: &SsfemSystem, sol: &SsfemSolution, family: Family) -> Vec<(f64, f64)> {
    let probe = sol.probe(ss.space(), &ObservableSpec::default()).expect("probe");
    local_extrema(&probe, &ss.basis, &SamplingZone::for_family(family))
        .expect("extrema")
        .into_iter()
        .filter(|e| e.kind != ExtremumKind::Inflection)
        .map(|e| (e.xi, e.value))
        .collect()
}

fn probe_extrema(shared: &mut Shared) -> Verdict {
    let (ss, g) = ssfem_run(
        MeshPreset::DenseUnstructured,
        Family::HermiteGaussian,
        gaussian_kl(0.9, 0.001).unwrap(),
        3,
    );
    let ge = extrema_in_zone(&ss, &g, Family::HermiteGaussian);
    let gaussian_ok = g.converged && ge.len() >= 2;
    let (ss, u) = ssfem_run(
        MeshPreset::DenseUnstructured,
        Family::LegendreUniform,
        uniform_kl(0.845, 0.955).unwrap(),
        5,
    );
    let ue = extrema_in_zone(&ss, &u, Family::LegendreUniform);
    let (r, _) = shared.dense_sweep();
    let k = r.nearest(0.9);
    let branches: Vec<f64> = (0..r.states.len())
        .filter(|&p| r.states[p][k].converged)
        .map(|p| r.observable(p, k))
        .collect();
    let matched = ue.iter().filter(|e| branches.iter().any(|b| (e.1 - b).abs() <= 0.5)).count();
    let uniform_ok = u.converged && ue.len() == 3 && matched == 3;
    let fmt = |v: &[(f64, f64)]| v.iter().map(|e| format!("({:.2}, {:.3})", e.0, e.1)).collect::<Vec<_>>().join(" ");
    verdict(
        gaussian_ok && uniform_ok,
        format!(
            "gaussian: {} extrema {} converged {}; uniform N_PC=5: {} extrema {} ({matched} within 0.5 of branches {:?}) converged {} residual {:.1e}",
            ge.len(),
            fmt(&ge),
            g.converged,
            ue.len(),
            fmt(&ue),
            branches.iter().map(|b| (b * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            u.converged,
            u.residual_norm
        ),
    )
}

fn symmetric_null_result() -> Verdict {
    let (ss, sol) = ssfem_run(MeshPreset::Symmetric, Family::LegendreUniform, uniform_kl(0.845, 0.955).unwrap(), 3);
    let space = ss.space();
    let axis = space.mesh.geometry.symmetry_axis();
    let var = vy_variance(&ss, &sol);
    let on_axis = |i: usize| (space.q2_coords[i][1] - axis).abs() < 1e-9;
    let axis_var = (0..var.len()).filter(|&i| on_axis(i)).fold(0.0f64, |m, i| m.max(var[i]));
    // largest off-axis variance on either side of the axis
    let mut worst_rel: f64 = 0.0;
    let mut points = Vec::new();
    for above in [true, false] {
        let side = |i: usize| !on_axis(i) && (space.q2_coords[i][1] > axis) == above;
        let k = (0..var.len()).filter(|&i| side(i)).fold(None, |b: Option<usize>, i| match b {
            Some(j) if var[j] >= var[i] => Some(j),
            _ => Some(i),
        });
        let Some(k) = k else { continue };
        let p = space.q2_coords[k];
        let poly = sol.point_polynomial(space, p, 1).expect("polynomial");
        let scale = poly.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let rel = poly[2..].iter().fold(0.0f64, |m, c| m.max(c.abs())) / scale;
        worst_rel = worst_rel.max(rel);
        points.push(format!("({:.3}, {:.3})", p[0], p[1]));
    }
    verdict(
        sol.converged && axis_var < 1e-10 && worst_rel < 1e-6,
        format!(
            "axis variance {axis_var:.1e} (need < 1e-10); higher-order/max coefficient {worst_rel:.1e} at {} (need < 1e-6)",
            points.join(" ")
        ),
    )
}

fn mc_bias() -> Verdict {
    let space = space(MeshPreset::CoarseUnstructured);
    let law = gaussian_kl(0.9, 0.001).unwrap();
    let base = McConfig::default();
    let mu = draws(&law, base.n_samples, base.rng_seed).expect("draws");
    let mut sys = FlowSystem::new(space.clone());
    let reference = continuation_sweep(&mut sys, &covering_sweep(&mu, &base)).expect("reference sweep");
    let nq = space.n_q2;
    let mut summary = Vec::new();
    for policy in [InitPolicy::ZeroGuess, InitPolicy::ContinuationGuess] {
        let e = run_mc(&space, &law, &McConfig { policy, ..base }, Some(&reference)).expect("mc");
        let st = ensemble_stats(&e).expect("stats");
        let maxvar = st.variance[nq..2 * nq].iter().fold(0.0f64, |m, v| m.max(*v));
        summary.push((maxvar, st.clusters(0.1).len(), e.samples.iter().filter(|s| s.converged()).count()));
    }
    let (zero, cont) = (summary[0], summary[1]);
    verdict(
        zero.0 <= 0.1 * cont.0 && cont.1 >= 3,
        format!(
            "max var v_y zero {:.3e} vs continuation {:.3e} (need ratio <= 0.1); continuation clusters {} (need >= 3); converged {} / {}",
            zero.0, cont.0, cont.1, zero.2, cont.2
        ),
    )
}

fn tiny_space(nx_main: usize) -> TaylorHoodSpace {
    let spec = MeshSpec {
        geometry: ChannelGeometry::default(),
        nx_inlet: 1,
        ny_inlet: 1,
        nx_main,
        refinement: 0,
        symmetry: SymmetryMode::Unstructured,
        jitter_seed: 11,
    };
    TaylorHoodSpace::new(build_channel_mesh(&spec).unwrap()).unwrap()
}

fn wobble(n: usize, seed: u64) -> Vec<f64> {
    (0..n)
        .map(|i| ((split_seed(seed, i as u64) >> 11) as f64 / (1u64 << 53) as f64) - 0.5)
        .collect()
}

/// Max entrywise error of a row-major Jacobian against central differences,
/// relative to its largest entry.
fn fd_error(n: usize, jac: &[f64], x: &[f64], mut f: impl FnMut(&[f64]) -> Vec<f64>) -> f64 {
    let h = 1e-6;
    let scale = jac.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[j] += h;
        xm[j] -= h;
        let (rp, rm) = (f(&xp), f(&xm));
        for i in 0..n {
            worst = worst.max(((rp[i] - rm[i]) / (2.0 * h) - jac[i * n + j]).abs());
        }
    }
    worst / scale
}

fn cli_reproducible(dir: &Path) -> Result<usize, String> {
    let runs: [&[&str]; 5] = [
        &[
            "pitchfork",
            "--mu-mean",
            "1",
            "--half-width",
            "0.2",
            "--inits",
            "8",
            "--samples",
            "4000",
            "--seed",
            "42",
        ],
        &[
            "pitchfork",
            "sweep",
            "--from",
            "-0.3",
            "--to",
            "0.6",
            "--points",
            "4",
            "--inits",
            "2",
            "--samples",
            "2000",
        ],
        &[
            "coanda",
            "det",
            "--mesh",
            "symmetric",
            "--mu-from",
            "1.05",
            "--mu-to",
            "0.95",
            "--step",
            "0.05",
        ],
        &[
            "coanda",
            "ssfem",
            "--mesh",
            "symmetric",
            "--dist",
            "uniform",
            "--mu-mean",
            "1.3",
            "--half",
            "0.05",
            "--npc",
            "2",
            "--samples",
            "2000",
        ],
        &[
            "coanda",
            "mc",
            "--mesh",
            "symmetric",
            "--dist",
            "gaussian",
            "--mu-mean",
            "1.3",
            "--var",
            "0.001",
            "--n",
            "12",
            "--init",
            "cycling",
        ],
    ];
    let mut compared = 0;
    for (k, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for copy in 0..2 {
            let out = dir.join(format!("run{k}-{copy}"));
            let status = Command::new(env!("CARGO_BIN_EXE_stochbif"))
                .args(*args)
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{} exited {:?}", args.join(" "), status.status.code()));
            }
            outputs.push(out);
        }
        let mut names: Vec<String> = std::fs::read_dir(&outputs[0])
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        for name in names {
            let a = std::fs::read(outputs[0].join(&name)).map_err(|e| e.to_string())?;
            let b = std::fs::read(outputs[1].join(&name)).map_err(|e| e.to_string())?;
            if a != b {
                return Err(format!("{name} differs for `{}`", args.join(" ")));
            }
            compared += 1;
        }
    }
    Ok(compared)
}

fn property_suites() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, pass: bool, value: String| {
        ok &= pass;
        notes.push(format!("{name} {value}{}", if pass { "" } else { " FAIL" }));
    };

    // orthogonality and tensor symmetry
    let mut ortho: f64 = 0.0;
    let mut sym: f64 = 0.0;
    for (family, law) in [
        (Family::LegendreUniform, uniform_kl(0.5, 1.5).unwrap()),
        (Family::HermiteGaussian, gaussian_kl(1.0, 0.04).unwrap()),
    ] {
        let basis = PcBasis::univariate(family, 6);
        let rule = gauss_quadrature(family, 12).unwrap();
        let mut psi = vec![0.0; 7];
        let mut gram = [[0.0; 7]; 7];
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            basis.eval_all(&[x], &mut psi);
            for i in 0..7 {
                for j in 0..7 {
                    gram[i][j] += w * psi[i] * psi[j];
                }
            }
        }
        for (i, row) in gram.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                ortho = ortho.max((g - if i == j { family.norm_sq(i) } else { 0.0 }).abs());
            }
        }
        let t = build_moment_tensors(&basis, &law).unwrap();
        let scale = t.f3.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..7 {
            for b in 0..7 {
                for c in 0..7 {
                    let v = t.f3[a][b][c];
                    for w in [t.f3[a][c][b], t.f3[b][a][c], t.f3[b][c][a], t.f3[c][a][b], t.f3[c][b][a]] {
                        sym = sym.max((v - w).abs() / scale);
                    }
                }
            }
        }
    }
    check("orthogonality", ortho <= 1e-12, format!("{ortho:.1e}"));
    check("tensor symmetry", sym <= 1e-12, format!("{sym:.1e}"));

    // Jacobians against central differences
    let problem = PitchforkProblem::new(PcBasis::univariate(Family::LegendreUniform, 4), uniform_kl(0.6, 1.4).unwrap()).unwrap();
    let c = wobble(5, 1);
    let e = fd_error(5, &problem.jacobian(&c), &c, |x| problem.residual(x));
    check("pitchfork jacobian", e <= 1e-5, format!("{e:.1e}"));
    let mut flow = FlowSystem::new(tiny_space(1));
    let n = flow.n_unknowns();
    let x = wobble(n, 2);
    flow.assemble_jacobian(&x, 0.8, Boundary::Free);
    let jac = flow.jacobian.to_dense();
    let e = fd_error(n, &jac, &x, |y| flow.residual(y, 0.8, Boundary::Free));
    check("flow jacobian", e <= 1e-5, format!("{e:.1e}"));
    let mut ss = SsfemSystem::new(
        tiny_space(2),
        PcBasis::univariate(Family::HermiteGaussian, 2),
        &gaussian_kl(1.0, 0.01).unwrap(),
    )
    .unwrap();
    let n = ss.n_unknowns();
    let x = wobble(n, 3);
    ss.assemble_jacobian(&x, false);
    let jac = ss.jacobian.to_dense();
    let e = fd_error(n, &jac, &x, |y| ss.residual(y, None));
    check("ssfem jacobian", e <= 1e-5, format!("{e:.1e}"));

    // divergence and boundary data of converged states
    let mut sys = FlowSystem::new(space(MeshPreset::Symmetric));
    let zero = sys.zero_state(1.0);
    let s = newton_flow(&mut sys, &zero, 1.3, &NewtonOptions::default()).unwrap();
    let div = sys.divergence_norm(&s.x);
    let mut constrained = s.x.clone();
    sys.space.apply_constraints(&mut constrained, 1.0);
    check("divergence", s.converged && div < 1e-8, format!("{div:.1e}"));
    check("dirichlet data", constrained == s.x, "exact".into());
    let (ss, sol) = ssfem_run(MeshPreset::Symmetric, Family::LegendreUniform, uniform_kl(1.25, 1.35).unwrap(), 2);
    let div = (0..sol.n_modes)
        .map(|m| ss.flow.divergence_norm(&sol.mode(m)))
        .fold(0.0f64, f64::max);
    let mut constrained = sol.coeffs.clone();
    ss.apply_constraints(&mut constrained, 1.0);
    check("ssfem divergence", sol.converged && div < 1e-8, format!("{div:.1e}"));
    check("ssfem dirichlet data", constrained == sol.coeffs, "exact".into());

    // density mass
    let mut mass_err: f64 = 0.0;
    for (family, coeffs) in [
        (Family::HermiteGaussian, vec![0.0, 1.0]),
        (Family::LegendreUniform, vec![0.2, 0.5, -0.8, 0.3]),
    ] {
        for n in [200, 20_000] {
            let samples = uq_stats::sample_expansion(&coeffs, &PcBasis::univariate(family, coeffs.len() - 1), n, 5);
            mass_err = mass_err.max((uq_stats::kde(&samples, None).unwrap().mass() - 1.0).abs());
        }
    }
    check("kde mass", mass_err <= 0.01, format!("|1 - mass| {mass_err:.1e}"));

    let dir = tempfile::tempdir().unwrap();
    match cli_reproducible(dir.path()) {
        Ok(n) => check("csv reproduction", true, format!("{n} files identical")),
        Err(e) => check("csv reproduction", false, e),
    }
    verdict(ok, notes.join("; "))
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |k: u32| selected.is_empty() || selected.contains(&k);
    let mut shared = Shared::default();
    let mut failed = Vec::new();
    let criteria: [(u32, &str); 9] = [
        (1, "pitchfork diagram recovery"),
        (2, "pitchfork density tri-modality"),
        (3, "deterministic critical point"),
        (4, "stochastic Galerkin reduction"),
        (5, "variance localisation and ordering"),
        (6, "probe polynomial extrema"),
        (7, "symmetric mesh null result"),
        (8, "Monte Carlo initialisation bias"),
        (9, "property suites"),
    ];
    for (k, name) in criteria {
        if !wanted(k) {
            continue;
        }
        let t = Instant::now();
        let v = match k {
            1 => pitchfork_diagram(),
            2 => pitchfork_trimodality(),
            3 => coanda_critical_point(&mut shared),
            4 => ssfem_reduction(),
            5 => variance_ordering(),
            6 => probe_extrema(&mut shared),
            7 => symmetric_null_result(),
            8 => mc_bias(),
            _ => property_suites(),
        };
        if !v.pass {
            failed.push(k);
        }
        println!(
            "criterion {k} ({name}): {} [{:.0} s] {}",
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {} failed {:?}", failed.len(), failed);
    if !failed.is_empty() && std::env::var_os("STOCHBIF_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
