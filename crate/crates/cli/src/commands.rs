use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde_json::json;
use stochbif::diagram::{BifurcationDiagram, ObservableSpec};
use stochbif::fem::TaylorHoodSpace;
use stochbif::klexp::{gaussian_kl, uniform_kl, KlExpansion};
use stochbif::mc::{self, ensemble_stats, run_mc, InitPolicy, McConfig};
use stochbif::mesh::MeshPreset;
use stochbif::nssolve::{continuation_sweep, ContinuationConfig, FlowSystem, NewtonOptions};
use stochbif::pcbasis::{Family, PcBasis};
use stochbif::pitchfork::{random_initializations, split_seed, sweep_diagram, PitchforkProblem, SweepConfig};
use stochbif::ssfem::{SsfemConfig, SsfemInit, SsfemSystem};
use stochbif::uq_stats::{self, local_extrema, probabilistic_diagram, DiagramConfig, ProbeRun, SamplingZone};

use crate::error::CliError;
use crate::output::{csv, num, OutputDir, OUTPUT_ROOT_ENV};
use crate::settings::{snapshot_text, Resolver};
use crate::{Cli, CoandaCommand, Command, DetArgs, FlowArgs, McArgs, PitchforkArgs, PitchforkSweepCmd, SsfemArgs, SweepArgs};

/// Where a finished run was written and which required solves failed.
pub struct Outcome {
    pub path: PathBuf,
    pub failures: Vec<String>,
}

/// Results of a run, before anything touches the disk.
struct Run {
    out: OutputDir,
    failures: Vec<String>,
    diagnostics: serde_json::Value,
}

/// A fully configured run, waiting for its output directory.
type Job = Box<dyn FnOnce(OutputDir) -> Result<Run, CliError>>;

fn config_err(key: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(key, format!("must be positive, got {v}")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<usize, CliError> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(config_err(key, "must be at least 1"))
    }
}

pub fn dispatch(cli: Cli, file: BTreeMap<String, String>) -> Result<Outcome, CliError> {
    let mut r = Resolver::new(file);
    let command_name = match &cli.command {
        Command::Pitchfork(p) if p.sweep.is_some() => "pitchfork-sweep",
        Command::Pitchfork(_) => "pitchfork",
        Command::Coanda { command } => match command {
            CoandaCommand::Det(_) => "coanda-det",
            CoandaCommand::Ssfem(_) => "coanda-ssfem",
            CoandaCommand::Mc(_) => "coanda-mc",
        },
    };
    let out = r.optional::<String>("out", cli.out.map(|p| p.display().to_string()))?;
    let out = match out {
        Some(p) => PathBuf::from(p),
        None => std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("stochbif-out"))
            .join(command_name),
    };
    let jobs = r.optional::<usize>("jobs", cli.jobs)?;
    if let Some(j) = jobs {
        at_least_one("jobs", j)?;
    }

    // Every setting is resolved and validated before any work starts.
    let job: Job = match cli.command {
        Command::Pitchfork(p) => match p.sweep {
            Some(PitchforkSweepCmd::Sweep(a)) => sweep_job(&mut r, a)?,
            None => pitchfork_job(&mut r, p.ensemble)?,
        },
        Command::Coanda { command } => match command {
            CoandaCommand::Det(a) => det_job(&mut r, a)?,
            CoandaCommand::Ssfem(a) => ssfem_job(&mut r, a)?,
            CoandaCommand::Mc(a) => mc_job(&mut r, a)?,
        },
    };
    let mut resolved = r.finish()?;
    // placement and thread count do not change results, so two runs that
    // differ only in these write identical files
    resolved.remove("out");
    resolved.remove("jobs");

    if let Some(j) = jobs {
        // a second global initialisation (only possible in-process) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let started = Instant::now();
    let mut run = job(OutputDir::new(out))?;
    run.out.add("config.snapshot", snapshot_text(command_name, &resolved));
    let mut diagnostics = run.diagnostics;
    diagnostics["wall_time_s"] = json!(started.elapsed().as_secs_f64());
    diagnostics["failures"] = json!(run.failures);
    run.out.add_json("diagnostics.json", &diagnostics);
    let path = run.out.commit(command_name)?;
    Ok(Outcome {
        path,
        failures: run.failures,
    })
}

fn family_of(key: &str, name: &str) -> Result<Family, CliError> {
    match name {
        "uniform" => Ok(Family::LegendreUniform),
        "gaussian" => Ok(Family::HermiteGaussian),
        other => Err(config_err(key, format!("expected `uniform` or `gaussian`, got `{other}`"))),
    }
}

/// Parameter law from its family, mean and either half width or variance.
fn resolve_law(
    r: &mut Resolver,
    dist: Option<String>,
    dist_default: Option<&str>,
    mean: Option<f64>,
    half_key: &str,
    half: Option<f64>,
    var: Option<f64>,
) -> Result<(Family, KlExpansion), CliError> {
    let dist = match dist_default {
        Some(d) => r.get("dist", dist, d.to_string())?,
        None => r.required("dist", dist)?,
    };
    let family = family_of("dist", &dist)?;
    let mean: f64 = r.required("mu-mean", mean)?;
    let half = r.optional(half_key, half)?;
    let var = r.optional("var", var)?;
    let kl = match family {
        Family::LegendreUniform => {
            if var.is_some() {
                return Err(config_err("var", "only valid with dist = gaussian"));
            }
            let h = half.ok_or_else(|| config_err(half_key, "required with dist = uniform"))?;
            if !(h >= 0.0) {
                return Err(config_err(half_key, format!("must be non-negative, got {h}")));
            }
            uniform_kl(mean - h, mean + h)?
        }
        Family::HermiteGaussian => {
            if half.is_some() {
                return Err(config_err(half_key, "only valid with dist = uniform"));
            }
            let v = var.ok_or_else(|| config_err("var", "required with dist = gaussian"))?;
            if !(v >= 0.0) {
                return Err(config_err("var", format!("must be non-negative, got {v}")));
            }
            gaussian_kl(mean, v)?
        }
    };
    Ok((family, kl))
}

fn pitchfork_job(r: &mut Resolver, a: PitchforkArgs) -> Result<Job, CliError> {
    let (family, kl) = resolve_law(r, a.dist, Some("uniform"), a.mu_mean, "half-width", a.half_width, a.var)?;
    let npc = r.get("npc", a.npc, 5)?;
    let inits = at_least_one("inits", r.get("inits", a.inits, 100)?)?;
    let amplitude = positive(
        "amplitude",
        r.get("amplitude", a.amplitude, stochbif::pitchfork::DEFAULT_INIT_AMPLITUDE)?,
    )?;
    let seed = r.get("seed", a.seed, 0u64)?;
    let tol = positive("tol", r.get("tol", a.tol, stochbif::pitchfork::DEFAULT_TOL)?)?;
    let max_iter = r.get("max-iter", a.max_iter, stochbif::pitchfork::DEFAULT_MAX_ITER)?;
    let n_samples = at_least_one("samples", r.get("samples", a.samples, DiagramConfig::default().n_samples)?)?;
    let prominence = positive(
        "prominence",
        r.get("prominence", a.prominence, DiagramConfig::default().prominence_frac)?,
    )?;
    let basis = PcBasis::univariate(family, npc);
    let problem = PitchforkProblem::new(basis.clone(), kl)?;
    Ok(Box::new(move |mut out| {
        let starts = random_initializations(inits, basis.len(), amplitude, seed);
        let solutions = problem.solve_ensemble(&starts, tol, max_iter)?;
        let mut coeff_rows = Vec::new();
        let mut pdf_rows = Vec::new();
        let mut peak_rows = Vec::new();
        let mut sample_sets = Vec::new();
        for (id, s) in solutions.iter().enumerate() {
            let mut row = vec![
                id.to_string(),
                s.converged.to_string(),
                s.iterations.to_string(),
                num(s.residual_norm),
                s.singular.to_string(),
            ];
            row.extend(s.coeffs.iter().map(|&c| num(c)));
            coeff_rows.push(row);
            if !s.converged {
                continue;
            }
            let samples = uq_stats::sample_expansion(&s.coeffs, &basis, n_samples, split_seed(seed, id as u64));
            let pdf = uq_stats::kde(&samples, None)?;
            for (x, d) in pdf.grid.iter().zip(&pdf.density) {
                pdf_rows.push(vec![id.to_string(), num(*x), num(*d)]);
            }
            for (loc, dens) in uq_stats::peaks(&pdf, prominence) {
                peak_rows.push(vec![id.to_string(), num(loc), num(dens)]);
            }
            sample_sets.push(samples);
        }
        let mut header = vec![
            "init_id".to_string(),
            "converged".into(),
            "iterations".into(),
            "residual_norm".into(),
            "singular".into(),
        ];
        header.extend((0..basis.len()).map(|i| format!("c{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.add("coefficients.csv", csv(&header, coeff_rows));
        out.add("pdf.csv", csv(&["init_id", "x", "density"], pdf_rows));
        out.add("peaks.csv", csv(&["init_id", "location", "density"], peak_rows));
        let mut failures = Vec::new();
        if sample_sets.is_empty() {
            failures.push("no solve converged".to_string());
        } else {
            let lo = sample_sets.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let hi = sample_sets.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            let pad = 0.1 * (hi - lo).max(1e-3);
            let grid = uq_stats::linspace(lo - pad, hi + pad, 512);
            let stats = uq_stats::pdf_ensemble_stats(&sample_sets, &grid)?;
            let rows = (0..grid.len()).map(|i| vec![num(stats.grid[i]), num(stats.mean[i]), num(stats.variance[i])]);
            out.add("pdf_stats.csv", csv(&["x", "mean_density", "variance"], rows));
        }
        let converged = solutions.iter().filter(|s| s.converged).count();
        Ok(Run {
            out,
            failures,
            diagnostics: json!({
                "solves": solutions.len(),
                "converged": converged,
                "iterations": solutions.iter().map(|s| s.iterations).collect::<Vec<_>>(),
                "residual_norms": solutions.iter().map(|s| s.residual_norm).collect::<Vec<_>>(),
            }),
        })
    }))
}

fn diagram_csv(d: &BifurcationDiagram) -> String {
    let rows = d.records.iter().map(|rec| {
        vec![
            num(rec.mu),
            rec.branch.map(|b| b.to_string()).unwrap_or_default(),
            num(rec.observable),
            num(rec.weight),
            rec.converged.to_string(),
        ]
    });
    csv(&["mu", "pass_id", "observable", "weight", "converged"], rows)
}

fn sweep_job(r: &mut Resolver, a: SweepArgs) -> Result<Job, CliError> {
    let from: f64 = r.required("from", a.from)?;
    let to: f64 = r.required("to", a.to)?;
    let points = at_least_one("points", r.required("points", a.points)?)?;
    let defaults = SweepConfig::default();
    let config = SweepConfig {
        half_width: positive("half-width", r.get("half-width", a.half_width, defaults.half_width)?)?,
        max_degree: r.get("npc", a.npc, defaults.max_degree)?,
        inits_per_mu: at_least_one("inits", r.get("inits", a.inits, defaults.inits_per_mu)?)?,
        init_amplitude: positive("amplitude", r.get("amplitude", a.amplitude, defaults.init_amplitude)?)?,
        rng_seed: r.get("seed", a.seed, defaults.rng_seed)?,
        tol: positive("tol", r.get("tol", a.tol, defaults.tol)?)?,
        max_iter: r.get("max-iter", a.max_iter, defaults.max_iter)?,
        diagram: DiagramConfig {
            n_samples: at_least_one("samples", r.get("samples", a.samples, defaults.diagram.n_samples)?)?,
            prominence_frac: positive("prominence", r.get("prominence", a.prominence, defaults.diagram.prominence_frac)?)?,
            ..defaults.diagram
        },
    };
    Ok(Box::new(move |mut out| {
        let means = uq_stats::linspace(from, to, points);
        let (diagram, entries) = sweep_diagram(&means, &config)?;
        out.add("diagram.csv", diagram_csv(&diagram));
        let rows = entries.iter().map(|e| {
            let mut row = vec![num(e.mu_mean), e.init_id.to_string(), e.solution.converged.to_string()];
            row.extend(e.solution.coeffs.iter().map(|&c| num(c)));
            row
        });
        let mut header = vec!["mu".to_string(), "init_id".into(), "converged".into()];
        header.extend((0..=config.max_degree).map(|i| format!("c{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.add("solutions.csv", csv(&header, rows));
        let converged = entries.iter().filter(|e| e.solution.converged).count();
        let failures = if converged == 0 {
            vec!["no solve converged".to_string()]
        } else {
            Vec::new()
        };
        Ok(Run {
            out,
            failures,
            diagnostics: json!({
                "solves": entries.len(),
                "converged": converged,
                "iterations": entries.iter().map(|e| e.solution.iterations).collect::<Vec<_>>(),
            }),
        })
    }))
}

struct FlowSettings {
    preset: MeshPreset,
    observable: ObservableSpec,
    tol: f64,
    max_iter: usize,
}

fn resolve_flow(r: &mut Resolver, a: FlowArgs, tol: f64, max_iter: usize) -> Result<FlowSettings, CliError> {
    let mesh: String = r.get("mesh", a.mesh, MeshPreset::CoarseUnstructured.name().to_string())?;
    let preset = MeshPreset::parse(&mesh).ok_or_else(|| config_err("mesh", format!("unknown preset `{mesh}`")))?;
    let d = ObservableSpec::default();
    let x = r.get("probe-x", a.probe_x, d.point[0])?;
    let y = r.get("probe-y", a.probe_y, d.point[1])?;
    let component = r.get("probe-component", a.probe_component, d.component)?;
    if component > 1 {
        return Err(config_err("probe-component", "must be 0 or 1"));
    }
    let tol = positive("tol", r.get("tol", a.tol, tol)?)?;
    let max_iter = r.get("max-iter", a.max_iter, max_iter)?;
    Ok(FlowSettings {
        preset,
        observable: ObservableSpec { point: [x, y], component },
        tol,
        max_iter,
    })
}

fn build_space(f: &FlowSettings) -> Result<TaylorHoodSpace, CliError> {
    let space = TaylorHoodSpace::new(f.preset.build()?)?;
    // the probe must lie in the channel
    space
        .point_weights(f.observable.point)
        .map_err(|_| config_err("probe-x", "probe point is outside the channel"))?;
    Ok(space)
}

/// Velocity of every Q2 node as `node, x, y, vx, vy` rows.
fn node_csv(space: &TaylorHoodSpace, values: &[f64]) -> String {
    let nq = space.n_q2;
    let rows = (0..nq).map(|i| {
        let p = space.q2_coords[i];
        vec![i.to_string(), num(p[0]), num(p[1]), num(values[i]), num(values[nq + i])]
    });
    csv(&["node", "x", "y", "vx", "vy"], rows)
}

fn det_job(r: &mut Resolver, a: DetArgs) -> Result<Job, CliError> {
    let nd = NewtonOptions::default();
    let flow = resolve_flow(r, a.flow, nd.tol, nd.max_iter)?;
    let d = ContinuationConfig::default();
    let config = ContinuationConfig {
        mu_from: positive("mu-from", r.get("mu-from", a.mu_from, d.mu_from)?)?,
        mu_to: positive("mu-to", r.get("mu-to", a.mu_to, d.mu_to)?)?,
        step: positive("step", r.get("step", a.step, d.step)?)?,
        observable: flow.observable,
        newton: NewtonOptions {
            tol: flow.tol,
            max_iter: flow.max_iter,
            ..nd
        },
        seed_amplitude: positive("seed-amplitude", r.get("seed-amplitude", a.seed_amplitude, d.seed_amplitude)?)?,
        distinct_tol: positive("distinct-tol", r.get("distinct-tol", a.distinct_tol, d.distinct_tol)?)?,
    };
    let space = build_space(&flow)?;
    Ok(Box::new(move |mut out| {
        out.add("mesh.txt", space.mesh.to_text());
        let mut sys = FlowSystem::new(space);
        let result = continuation_sweep(&mut sys, &config)?;
        out.add("diagram.csv", diagram_csv(&result.diagram));
        out.add_json("summary.json", &json!({ "mu_critical": result.mu_critical }));
        let failures: Vec<String> = result.states[0]
            .iter()
            .filter(|s| !s.converged)
            .map(|s| format!("pass 0 did not converge at mu = {}", s.mu))
            .collect();
        let iterations: Vec<Vec<usize>> = result.states.iter().map(|p| p.iter().map(|s| s.iterations).collect()).collect();
        Ok(Run {
            out,
            failures,
            diagnostics: json!({
                "mu_critical": result.mu_critical,
                "mu_values": result.mu_values,
                "iterations": iterations,
            }),
        })
    }))
}

fn ssfem_job(r: &mut Resolver, a: SsfemArgs) -> Result<Job, CliError> {
    let d = SsfemConfig::default();
    let flow = resolve_flow(r, a.flow, d.newton.tol, d.newton.max_iter)?;
    let (family, kl) = resolve_law(r, a.law.dist, None, a.law.mu_mean, "half", a.law.half, a.law.var)?;
    let npc = r.get("npc", a.npc, 3)?;
    let init_name: String = r.get("init", a.init, "noise".to_string())?;
    let init = match init_name.as_str() {
        "noise" => SsfemInit::MeanWithNoise {
            amplitude: r.get("init-amplitude", a.init_amplitude, 1e-2)?,
        },
        "zero" => SsfemInit::Zero,
        "critical" => SsfemInit::CriticalMode {
            amplitude: r.get("init-amplitude", a.init_amplitude, 1.0)?,
        },
        other => return Err(config_err("init", format!("expected `noise`, `zero` or `critical`, got `{other}`"))),
    };
    let seed = r.get("seed", a.seed, 0u64)?;
    let n_samples = at_least_one("samples", r.get("samples", a.samples, DiagramConfig::default().n_samples)?)?;
    let prominence = positive(
        "prominence",
        r.get("prominence", a.prominence, DiagramConfig::default().prominence_frac)?,
    )?;
    let config = SsfemConfig {
        newton: NewtonOptions {
            tol: flow.tol,
            max_iter: flow.max_iter,
            ..d.newton
        },
        init,
        rng_seed: seed,
        observable: flow.observable,
    };
    let space = build_space(&flow)?;
    let basis = PcBasis::univariate(family, npc);
    let mu_mean = kl.mean_value();
    Ok(Box::new(move |mut out| {
        out.add("mesh.txt", space.mesh.to_text());
        let mut sys = SsfemSystem::new(space, basis, &kl)?;
        let sol = sys.solve(&config)?;
        let space = sys.space();
        let p = sol.n_modes;
        let nq = space.n_q2;
        let rows = (0..nq).map(|i| {
            let pt = space.q2_coords[i];
            let mut row = vec![i.to_string(), num(pt[0]), num(pt[1])];
            row.extend(sol.row(i).iter().map(|&c| num(c)));
            row.extend(sol.row(nq + i).iter().map(|&c| num(c)));
            row
        });
        let mut header = vec!["node".to_string(), "x".into(), "y".into()];
        header.extend((0..p).map(|m| format!("vx_{m}")));
        header.extend((0..p).map(|m| format!("vy_{m}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.add("coefficients.csv", csv(&header, rows));
        out.add("mean.csv", node_csv(space, &sol.mean_field()));
        out.add("variance.csv", node_csv(space, &sol.variance_field(&sys.basis)));
        let probe = sol.probe(space, &config.observable)?;
        out.add(
            "probe_polynomial.csv",
            csv(
                &["mode", "coefficient"],
                probe.iter().enumerate().map(|(m, c)| vec![m.to_string(), num(*c)]),
            ),
        );
        let zone = SamplingZone::for_family(family);
        let extrema = local_extrema(&probe, &sys.basis, &zone)?;
        let rows = extrema
            .iter()
            .map(|e| vec![num(e.xi), num(e.value), format!("{:?}", e.kind).to_lowercase()]);
        out.add("probe_extrema.csv", csv(&["xi", "value", "kind"], rows));
        let samples = uq_stats::sample_expansion(&probe, &sys.basis, n_samples, seed);
        let pdf = uq_stats::kde(&samples, None)?;
        out.add(
            "probe_pdf.csv",
            csv(
                &["x", "density"],
                pdf.grid.iter().zip(&pdf.density).map(|(x, y)| vec![num(*x), num(*y)]),
            ),
        );
        let run = ProbeRun {
            mu_mean,
            coeffs: probe.clone(),
            converged: sol.converged,
        };
        let dcfg = DiagramConfig {
            n_samples,
            rng_seed: seed,
            bandwidth: None,
            prominence_frac: prominence,
        };
        let (diagram, log) = probabilistic_diagram(&[run], &sys.basis, &dcfg);
        out.add("diagram.csv", diagram_csv(&diagram));
        out.add_json(
            "tensors.json",
            &json!({ "c2": sys.moments.c2, "e3": sys.moments.e3, "f3": sys.moments.f3, "viscosity": sys.viscosity }),
        );
        let failures = if sol.converged {
            Vec::new()
        } else {
            vec![format!(
                "stochastic Galerkin solve did not converge (residual {:e})",
                sol.residual_norm
            )]
        };
        Ok(Run {
            out,
            failures,
            diagnostics: json!({
                "iterations": sol.iterations,
                "residual_history": sol.history,
                "stalled": sol.stalled,
                "unknowns": sys.n_unknowns(),
                "log": log,
            }),
        })
    }))
}

fn mc_job(r: &mut Resolver, a: McArgs) -> Result<Job, CliError> {
    let nd = NewtonOptions::default();
    let flow = resolve_flow(r, a.flow, nd.tol, nd.max_iter)?;
    let (_, law) = resolve_law(r, a.law.dist, None, a.law.mu_mean, "half", a.law.half, a.law.var)?;
    let d = McConfig::default();
    let n = at_least_one("n", r.get("n", a.n, d.n_samples)?)?;
    let init: String = r.get("init", a.init, d.policy.name().to_string())?;
    let policy = InitPolicy::parse(&init)
        .ok_or_else(|| config_err("init", format!("expected `zero`, `continuation` or `cycling`, got `{init}`")))?;
    let config = McConfig {
        n_samples: n,
        policy,
        rng_seed: r.get("seed", a.seed, d.rng_seed)?,
        newton: NewtonOptions {
            tol: flow.tol,
            max_iter: flow.max_iter,
            ..nd
        },
        observable: flow.observable,
    };
    // fail early on laws with no admissible draws
    mc::draw_viscosity(&law, config.rng_seed, 0).map_err(|_| config_err("mu-mean", "no admissible viscosity draws"))?;
    let space = build_space(&flow)?;
    Ok(Box::new(move |mut out| {
        let reference = if policy == InitPolicy::ZeroGuess {
            None
        } else {
            let draws = mc::draws(&law, n, config.rng_seed)?;
            let sweep = mc::covering_sweep(&draws, &config);
            let mut sys = FlowSystem::new(space.clone());
            let result = continuation_sweep(&mut sys, &sweep)?;
            out.add("reference_diagram.csv", diagram_csv(&result.diagram));
            Some(result)
        };
        let ensemble = run_mc(&space, &law, &config, reference.as_ref())?;
        let rows = ensemble.samples.iter().map(|s| {
            vec![
                s.id.to_string(),
                num(s.mu),
                s.converged().to_string(),
                s.init_pass.map(|p| p.to_string()).unwrap_or_default(),
                num(s.observable),
            ]
        });
        out.add(
            "samples.csv",
            csv(&["sample_id", "mu_draw", "converged", "init_pass", "observable"], rows),
        );
        let mut failures = Vec::new();
        let mut diagnostics = json!({
            "samples": ensemble.samples.len(),
            "converged": ensemble.samples.iter().filter(|s| s.converged()).count(),
            "iterations": ensemble.samples.iter().map(|s| s.state.iterations).collect::<Vec<_>>(),
        });
        match ensemble_stats(&ensemble) {
            Ok(stats) => {
                out.add("mean.csv", node_csv(&space, &stats.mean));
                out.add("variance.csv", node_csv(&space, &stats.variance));
                let obs: Vec<f64> = stats.scatter.iter().map(|s| s.1).collect();
                match uq_stats::kde(&obs, None) {
                    Ok(pdf) => out.add(
                        "probe_pdf.csv",
                        csv(
                            &["x", "density"],
                            pdf.grid.iter().zip(&pdf.density).map(|(x, y)| vec![num(*x), num(*y)]),
                        ),
                    ),
                    // too few converged samples for a density; the scatter is still written
                    Err(e) => diagnostics["probe_pdf_skipped"] = json!(e.to_string()),
                }
                let mut diagram = BifurcationDiagram::new(Some(config.observable));
                let w = 1.0 / obs.len() as f64;
                for s in ensemble.samples.iter().filter(|s| s.converged()) {
                    diagram.push(stochbif::diagram::DiagramRecord {
                        mu: s.mu,
                        observable: s.observable,
                        branch: s.init_pass,
                        weight: w,
                        converged: true,
                    });
                }
                out.add("diagram.csv", diagram_csv(&diagram));
                diagnostics["clusters"] = json!(stats.clusters(0.1));
            }
            Err(e) => failures.push(e.to_string()),
        }
        Ok(Run {
            out,
            failures,
            diagnostics,
        })
    }))
}
