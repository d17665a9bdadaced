//! Scenario execution: each scenario expands into independent jobs run on
//! the worker pool and assembles CSV/SVG artifacts plus a JSON manifest.
//! All artifact bytes are deterministic for a fixed config and seed.

use std::fmt::Write as _;

use serde_json::json;

use photon_extraction::bounds::{bound_trajectories, lower_bound, BoundSide};
use photon_extraction::drive::{reconstruct_drive, verify_drive, SineWavepacket};
use photon_extraction::dynamics::{DriveContext, TimeGrid};
use photon_extraction::model::{
    adiabatic_limit, cooperativity, critical_time, instant_excitation_limit, SystemParams,
};
use photon_extraction::optimizer::{
    OptimizationTarget, Optimizer, OptimizerConfig, WavepacketSolution,
};
use photon_extraction::projection::projection_for;
use photon_extraction::spectral::{build_basis, default_n_pos, FourierBasis, MatrixKind};

use crate::config::{float_tag, parse_target, OptimizerSection, ScenarioConfig, ScenarioKind};
use crate::error::{CliError, Result};
use crate::plot::{heatmap, line_plot, Series};
use crate::pool::{job_seed, run_jobs};

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct ScenarioOutput {
    pub artifacts: Vec<Artifact>,
    /// Deterministic manifest; the writer adds the timestamped metadata
    /// block.
    pub manifest: serde_json::Value,
    /// True when any run finished non-converged or out of tolerance.
    pub flagged: bool,
}

fn csv(x: f64) -> String {
    format!("{x:.11e}")
}

/// One optimization run with the basis bookkeeping the manifest records.
pub struct OptRun {
    pub solution: WavepacketSolution<f64>,
    pub basis: FourierBasis<f64>,
    pub n_pos: usize,
    pub t_b: f64,
}

impl OptRun {
    pub fn trace(&self, kind: MatrixKind) -> &[f64] {
        self.solution
            .probability_traces
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, t)| t.as_slice())
            .expect("kind present in report")
    }
}

/// Maximize a product of emission probabilities, all evaluated at the
/// extraction time.
pub fn optimize_emission(
    params: &SystemParams<f64>,
    t: f64,
    channels: &[usize],
    opt: &OptimizerSection,
    seed: u64,
) -> Result<OptRun> {
    let t_b = opt.t_b_factor * t;
    let n_pos = if opt.n_pos > 0 { opt.n_pos } else { default_n_pos(params.delta_max(), t_b) };
    let basis = build_basis(t, t_b, n_pos)?;
    let proj = projection_for(&basis, params)?;
    let terms = channels.iter().map(|&j| (MatrixKind::Emission(j), t)).collect();
    let target = OptimizationTarget::product(terms, t)?;
    let config = OptimizerConfig {
        normalization_times: opt.normalization_times,
        restarts: opt.restarts,
        max_iterations: opt.max_iterations,
        stall_iterations: opt.stall_iterations,
        low_pass: if opt.low_pass > 0 { Some(opt.low_pass) } else { None },
        seed,
        ..OptimizerConfig::default()
    };
    let optimizer = Optimizer::new(params.clone(), basis.clone(), proj, target, config)?;
    let solution = optimizer.optimize()?;
    Ok(OptRun { solution, basis, n_pos, t_b })
}

fn optimizer_manifest(opt: &OptimizerSection, run: &OptRun, seed: u64) -> serde_json::Value {
    json!({
        "n_pos": run.n_pos,
        "t_b": run.t_b,
        "normalization_times": opt.normalization_times,
        "restarts": opt.restarts,
        "max_iterations": opt.max_iterations,
        "seed": seed,
        "converged": run.solution.converged,
        "iterations": run.solution.iterations,
        "objective": run.solution.objective,
        "restart_objectives": run.solution.restart_objectives,
        "audit_max_total": run.solution.audit_max_total,
    })
}

/// Lambda systems of fixed cooperativity, one per kappa/g ratio; falls back
/// to the configured system when no ratios are given.
fn lambda_family(cfg: &ScenarioConfig) -> Result<Vec<(f64, SystemParams<f64>)>> {
    let base = cfg.system.to_params()?;
    if cfg.scenario.kappa_over_g.is_empty() {
        if base.channel_count() != 1 {
            return Err(CliError::Config(
                "this scenario needs a single-channel system or kappa_over_g ratios".into(),
            ));
        }
        let ratio = base.kappa() / base.channels()[0].g;
        return Ok(vec![(ratio, base)]);
    }
    let c = match cfg.scenario.cooperativity {
        Some(c) => c,
        None => cooperativity(&base, 1)?,
    };
    cfg.scenario
        .kappa_over_g
        .iter()
        .map(|&ratio| {
            if !(ratio > 0.0) {
                return Err(CliError::Config(format!("kappa_over_g ratio {ratio} not positive")));
            }
            let kappa = cfg.system.kappa;
            let g = kappa / ratio;
            let gamma = g * g / (2.0 * kappa * c);
            Ok((ratio, SystemParams::lambda(kappa, gamma, g)?))
        })
        .collect()
}

fn time_multiples(cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    if let Some(grid) = &cfg.scenario.t_grid {
        return grid.values();
    }
    if !cfg.scenario.t_over_t_crit.is_empty() {
        return Ok(cfg.scenario.t_over_t_crit.clone());
    }
    Err(CliError::Config("scenario needs t_grid or t_over_t_crit".into()))
}

pub fn run_scenario(cfg: &ScenarioConfig, workers: usize, strict: bool) -> Result<ScenarioOutput> {
    match cfg.scenario.kind {
        ScenarioKind::BoundsVsT => run_bounds_vs_t(cfg, workers, strict),
        ScenarioKind::RegimeSweep => run_regime_sweep(cfg, workers, strict),
        ScenarioKind::MetricOptimization => run_metric_optimization(cfg, workers),
        ScenarioKind::ZeemanMap => run_zeeman_map(cfg, workers),
        ScenarioKind::DriveRoundtrip => run_drive_roundtrip(cfg, workers, strict),
    }
}

fn manifest_skeleton(cfg: &ScenarioConfig) -> Result<serde_json::Value> {
    Ok(json!({
        "tool": {"name": "photon-extraction", "version": env!("CARGO_PKG_VERSION")},
        "scenario": cfg.scenario.kind.name(),
        "seed": cfg.output.seed,
        "config": serde_json::to_value(cfg)?,
    }))
}

fn run_bounds_vs_t(cfg: &ScenarioConfig, workers: usize, strict: bool) -> Result<ScenarioOutput> {
    let systems = lambda_family(cfg)?;
    let multiples = time_multiples(cfg)?;
    struct Job {
        sys: usize,
        t: f64,
        multiple: f64,
    }
    let mut jobs = Vec::new();
    for (i, (_, params)) in systems.iter().enumerate() {
        let t_crit = critical_time(params)?;
        for &m in &multiples {
            jobs.push(Job { sys: i, t: m * t_crit, multiple: m });
        }
    }
    let results = run_jobs(jobs.len(), workers, |i| -> Result<(f64, f64, f64, bool)> {
        let job = &jobs[i];
        let params = &systems[job.sys].1;
        let bound = lower_bound(params, job.t, 0, strict)?;
        let run = optimize_emission(
            params,
            job.t,
            &[1],
            &cfg.optimizer,
            job_seed(cfg.output.seed, i),
        )?;
        let p_numeric = run.solution.term_probabilities[0][0];
        Ok((bound.p_upper, bound.p_lower.unwrap_or(bound.p_upper), p_numeric, run.solution.converged))
    });

    let mut artifacts = Vec::new();
    let mut entries = Vec::new();
    let mut flagged = false;
    let mut cursor = 0usize;
    for (i, (ratio, params)) in systems.iter().enumerate() {
        let t_crit = critical_time(params)?;
        let p_instant = instant_excitation_limit(params)?;
        let p_adiabatic = adiabatic_limit(params)?;
        let mut out = String::from(
            "t,t_over_t_crit,p_upper,p_lower,p_numeric,p_instant,p_adiabatic,converged\n",
        );
        let mut xs = Vec::new();
        let mut uppers = Vec::new();
        let mut lowers = Vec::new();
        let mut numerics = Vec::new();
        for job in jobs[cursor..].iter().take_while(|j| j.sys == i) {
            let idx = cursor + (xs.len());
            let (p_upper, p_lower, p_numeric, converged) = match &results[idx] {
                Ok(r) => *r,
                Err(e) => {
                    return Err(CliError::Config(format!(
                        "bounds job at T = {:.3} failed: {e}",
                        job.t
                    )))
                }
            };
            flagged |= !converged;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                csv(job.t),
                csv(job.multiple),
                csv(p_upper),
                csv(p_lower),
                csv(p_numeric),
                csv(p_instant),
                csv(p_adiabatic),
                u8::from(converged)
            );
            xs.push((job.t / t_crit).log10());
            uppers.push(p_upper);
            lowers.push(p_lower);
            numerics.push(p_numeric);
        }
        cursor += xs.len();
        let stem = if systems.len() == 1 {
            "bounds".to_string()
        } else {
            format!("bounds_kappa_over_g_{}", float_tag(*ratio))
        };
        let title = format!("extraction probability, kappa/g = {ratio}");
        let svg = line_plot(
            &title,
            "log10(T / t_crit)",
            "probability",
            &[
                Series { label: "upper bound", x: &xs, y: &uppers },
                Series { label: "lower bound", x: &xs, y: &lowers },
                Series { label: "optimized", x: &xs, y: &numerics },
            ],
        )?;
        entries.push(json!({
            "file": format!("{stem}.csv"),
            "kappa_over_g": ratio,
            "t_crit": t_crit,
            "columns": ["t", "t_over_t_crit", "p_upper", "p_lower", "p_numeric",
                         "p_instant", "p_adiabatic", "converged"],
            "optimizer": {
                "n_pos": if cfg.optimizer.n_pos > 0 { cfg.optimizer.n_pos } else { 0 },
                "normalization_times": cfg.optimizer.normalization_times,
                "restarts": cfg.optimizer.restarts,
                "max_iterations": cfg.optimizer.max_iterations,
            },
        }));
        artifacts.push(Artifact { name: format!("{stem}.csv"), bytes: out.into_bytes() });
        artifacts.push(Artifact { name: format!("{stem}.svg"), bytes: svg.into_bytes() });
    }
    let mut manifest = manifest_skeleton(cfg)?;
    manifest["artifacts"] = json!(entries);
    manifest["flagged"] = json!(flagged);
    Ok(ScenarioOutput { artifacts, manifest, flagged })
}

fn run_regime_sweep(cfg: &ScenarioConfig, workers: usize, strict: bool) -> Result<ScenarioOutput> {
    let systems = lambda_family(cfg)?;
    let multiple = match time_multiples(cfg)?.as_slice() {
        [m] => *m,
        _ => return Err(CliError::Config("regime_sweep needs exactly one t_over_t_crit".into())),
    };
    let results = run_jobs(systems.len(), workers, |i| -> Result<(OptRun, Vec<f64>, Vec<f64>)> {
        let params = &systems[i].1;
        let t = multiple * critical_time(params)?;
        let run =
            optimize_emission(params, t, &[1], &cfg.optimizer, job_seed(cfg.output.seed, i))?;
        let bound = lower_bound(params, t, 0, strict)?;
        let times = run.solution.reporting_times.clone();
        let upper = bound_trajectories(params, &bound, &times, BoundSide::Upper)?;
        let lower = bound_trajectories(params, &bound, &times, BoundSide::Lower)?;
        let two_kappa = 2.0 * params.kappa();
        let flux_upper: Vec<f64> = upper.iter().map(|p| two_kappa * p.p_g).collect();
        let flux_lower: Vec<f64> = lower.iter().map(|p| two_kappa * p.p_g).collect();
        Ok((run, flux_upper, flux_lower))
    });

    let mut artifacts = Vec::new();
    let mut entries = Vec::new();
    let mut flagged = false;
    for (i, (ratio, params)) in systems.iter().enumerate() {
        let (run, flux_upper, flux_lower) = match &results[i] {
            Ok(r) => r,
            Err(e) => {
                return Err(CliError::Config(format!("regime job kappa/g = {ratio} failed: {e}")))
            }
        };
        flagged |= !run.solution.converged;
        let times = &run.solution.reporting_times;
        let t = *times.last().unwrap();
        let two_kappa = 2.0 * params.kappa();
        let flux_numeric: Vec<f64> =
            run.trace(MatrixKind::CavityOccupation(1)).iter().map(|&x| two_kappa * x).collect();

        let mut out = String::from("t,flux_numeric,flux_upper,flux_lower\n");
        for k in 0..times.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv(times[k]),
                csv(flux_numeric[k]),
                csv(flux_upper[k]),
                csv(flux_lower[k])
            );
        }
        let shape_distance = l2_shape_distance(&flux_numeric, flux_upper);
        let peak_idx =
            flux_numeric.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let peak_time_fraction = times[peak_idx] / t;
        let stem = format!("regime_kappa_over_g_{}", float_tag(*ratio));
        let svg = line_plot(
            &format!("output flux, kappa/g = {ratio}"),
            "t",
            "2 kappa |alpha_g1|^2",
            &[
                Series { label: "optimized", x: times, y: &flux_numeric },
                Series { label: "upper bound", x: times, y: flux_upper },
                Series { label: "lower bound", x: times, y: flux_lower },
            ],
        )?;
        entries.push(json!({
            "file": format!("{stem}.csv"),
            "kappa_over_g": ratio,
            "t_extraction": t,
            "columns": ["t", "flux_numeric", "flux_upper", "flux_lower"],
            "p_numeric": run.solution.term_probabilities[0][0],
            "shape_distance_to_upper": shape_distance,
            "peak_time_fraction": peak_time_fraction,
            "optimizer": optimizer_manifest(&cfg.optimizer, run, job_seed(cfg.output.seed, i)),
        }));
        artifacts.push(Artifact { name: format!("{stem}.csv"), bytes: out.into_bytes() });
        artifacts.push(Artifact { name: format!("{stem}.svg"), bytes: svg.into_bytes() });
    }
    let mut manifest = manifest_skeleton(cfg)?;
    manifest["artifacts"] = json!(entries);
    manifest["flagged"] = json!(flagged);
    Ok(ScenarioOutput { artifacts, manifest, flagged })
}

/// Relative L2 distance between unit-normalized shapes.
pub fn l2_shape_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x / na - y / nb;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn run_metric_optimization(cfg: &ScenarioConfig, workers: usize) -> Result<ScenarioOutput> {
    let params = cfg.system.to_params()?;
    let t = cfg
        .scenario
        .t_extraction
        .ok_or_else(|| CliError::Config("metric_optimization needs t_extraction".into()))?;
    if cfg.scenario.targets.is_empty() {
        return Err(CliError::Config("metric_optimization needs targets".into()));
    }
    let targets: Vec<Vec<usize>> = cfg
        .scenario
        .targets
        .iter()
        .map(|s| parse_target(s, params.channel_count()))
        .collect::<Result<_>>()?;

    let results = run_jobs(targets.len(), workers, |i| {
        optimize_emission(&params, t, &targets[i], &cfg.optimizer, job_seed(cfg.output.seed, i))
    });
    let mut runs = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => {
                return Err(CliError::Config(format!(
                    "target '{}' failed: {e}",
                    cfg.scenario.targets[i]
                )))
            }
        }
    }

    // Cross-evaluation: each target objective on each solution.
    let mut cross = vec![vec![0.0; runs.len()]; targets.len()];
    for (ti, channels) in targets.iter().enumerate() {
        let basis = runs[0].basis.clone();
        let proj = projection_for(&basis, &params)?;
        let terms = channels.iter().map(|&j| (MatrixKind::Emission(j), t)).collect();
        let target = OptimizationTarget::product(terms, t)?;
        let evaluator =
            Optimizer::new(params.clone(), basis, proj, target, OptimizerConfig::default())?;
        for (si, run) in runs.iter().enumerate() {
            cross[ti][si] = evaluator.evaluate_product(&run.solution.v)?;
        }
    }

    let jm = params.channel_count();
    let two_kappa = 2.0 * params.kappa();
    let mut artifacts = Vec::new();
    let mut entries = Vec::new();
    let mut flagged = false;
    for (i, run) in runs.iter().enumerate() {
        flagged |= !run.solution.converged;
        let times = &run.solution.reporting_times;
        let mut header = String::from("t");
        for j in 1..=jm {
            let _ = write!(header, ",flux_{j}");
        }
        for j in 1..=jm {
            let _ = write!(header, ",p_g{j}");
        }
        for j in 1..=jm {
            let _ = write!(header, ",p_kappa_{j}");
        }
        header.push_str(",p_e,p_gamma,total\n");
        let mut out = header;
        let occupations: Vec<&[f64]> =
            (1..=jm).map(|j| run.trace(MatrixKind::CavityOccupation(j))).collect();
        let emissions: Vec<&[f64]> =
            (1..=jm).map(|j| run.trace(MatrixKind::Emission(j))).collect();
        let excited = run.trace(MatrixKind::Excited);
        let spont = run.trace(MatrixKind::Spontaneous);
        let total = run.trace(MatrixKind::TotalNonInitial);
        for k in 0..times.len() {
            let mut line = csv(times[k]);
            for occ in &occupations {
                let _ = write!(line, ",{}", csv(two_kappa * occ[k]));
            }
            for occ in &occupations {
                let _ = write!(line, ",{}", csv(occ[k]));
            }
            for em in &emissions {
                let _ = write!(line, ",{}", csv(em[k]));
            }
            let _ = write!(line, ",{},{},{}", csv(excited[k]), csv(spont[k]), csv(total[k]));
            out.push_str(&line);
            out.push('\n');
        }
        let flux_1: Vec<f64> = occupations[0].iter().map(|&x| two_kappa * x).collect();
        let tag = cfg.scenario.targets[i].replace('*', "x");
        let stem = format!("metric_{tag}");
        let fluxes: Vec<Vec<f64>> = occupations
            .iter()
            .map(|occ| occ.iter().map(|&x| two_kappa * x).collect())
            .collect();
        let labels: Vec<String> = (1..=jm).map(|j| format!("channel {j}")).collect();
        let series: Vec<Series> = labels
            .iter()
            .zip(&fluxes)
            .map(|(label, y)| Series { label, x: times, y })
            .collect();
        let svg = line_plot(
            &format!("output flux, target {}", cfg.scenario.targets[i]),
            "t",
            "2 kappa |alpha_gj|^2",
            &series,
        )?;
        entries.push(json!({
            "file": format!("{stem}.csv"),
            "target": cfg.scenario.targets[i],
            "t_extraction": t,
            "objective": run.solution.objective,
            "term_probabilities": run.solution.term_probabilities,
            "flux_1_local_maxima": count_local_maxima(&flux_1),
            "optimizer": optimizer_manifest(&cfg.optimizer, run, job_seed(cfg.output.seed, i)),
        }));
        artifacts.push(Artifact { name: format!("{stem}.csv"), bytes: out.into_bytes() });
        artifacts.push(Artifact { name: format!("{stem}.svg"), bytes: svg.into_bytes() });
    }
    let mut manifest = manifest_skeleton(cfg)?;
    manifest["artifacts"] = json!(entries);
    manifest["cross_evaluation"] = json!({
        "rows_target": cfg.scenario.targets,
        "columns_solution": cfg.scenario.targets,
        "values": cross,
    });
    manifest["flagged"] = json!(flagged);
    Ok(ScenarioOutput { artifacts, manifest, flagged })
}

/// Local maxima of a sampled curve, ignoring ripples below 0.1% of the peak.
pub fn count_local_maxima(values: &[f64]) -> usize {
    let peak = values.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return 0;
    }
    let floor = 1e-3 * peak;
    let mut count = 0;
    for i in 1..values.len().saturating_sub(1) {
        if values[i] > floor && values[i] > values[i - 1] && values[i] >= values[i + 1] {
            count += 1;
        }
    }
    count
}

/// Optimized product limits for the two-channel splitting study: degenerate
/// channels behave as one effective channel, and well-separated channels
/// decouple spectrally.
pub fn zeeman_limits(params: &SystemParams<f64>) -> Result<(f64, f64)> {
    if params.channel_count() < 2 {
        return Err(CliError::Config("splitting limits need two channels".into()));
    }
    let g1 = params.channels()[0].g;
    let g2 = params.channels()[1].g;
    let g_eff_sq = g1 * g1 + g2 * g2;
    let merged = (g1 * g1 * g2 * g2) / (g_eff_sq * g_eff_sq)
        * (g_eff_sq / (g_eff_sq + params.kappa() * params.gamma())).powi(2);
    let c1 = cooperativity(params, 1)?;
    let c2 = cooperativity(params, 2)?;
    let split = (2.0 * c1) * (2.0 * c2) / (4.0 * (2.0 * c1 + 1.0) * (2.0 * c2 + 1.0));
    Ok((merged, split))
}

fn run_zeeman_map(cfg: &ScenarioConfig, workers: usize) -> Result<ScenarioOutput> {
    let base = cfg.system.to_params()?;
    if base.channel_count() != 2 {
        return Err(CliError::Config("zeeman_map needs exactly two channels".into()));
    }
    let ts = &cfg.scenario.t_values;
    let dzs = &cfg.scenario.delta_z_values;
    if ts.is_empty() || dzs.is_empty() {
        return Err(CliError::Config("zeeman_map needs t_values and delta_z_values".into()));
    }
    let channels = if cfg.scenario.targets.is_empty() {
        vec![1, 2]
    } else if cfg.scenario.targets.len() == 1 {
        parse_target(&cfg.scenario.targets[0], 2)?
    } else {
        return Err(CliError::Config("zeeman_map takes at most one target".into()));
    };

    let mut jobs = Vec::new();
    for &t in ts {
        for &dz in dzs {
            jobs.push((t, dz));
        }
    }
    let results = run_jobs(jobs.len(), workers, |i| -> Result<(f64, bool, usize)> {
        let (t, dz) = jobs[i];
        let mut split = base.channels().to_vec();
        split[0].delta_g = -dz / 2.0;
        split[1].delta_g = dz / 2.0;
        let params = SystemParams::new(base.kappa(), base.gamma(), split)?;
        let run =
            optimize_emission(&params, t, &channels, &cfg.optimizer, job_seed(cfg.output.seed, i))?;
        Ok((run.solution.objective, run.solution.converged, run.n_pos))
    });

    let mut out = String::from("t_extraction,delta_z,objective,converged,n_pos\n");
    let mut grid = vec![vec![0.0; dzs.len()]; ts.len()];
    let mut flagged = false;
    for (i, &(t, dz)) in jobs.iter().enumerate() {
        let (objective, converged, n_pos) = match &results[i] {
            Ok(r) => *r,
            Err(e) => {
                return Err(CliError::Config(format!(
                    "zeeman job (T = {t}, delta_z = {dz}) failed: {e}"
                )))
            }
        };
        flagged |= !converged;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv(t),
            csv(dz),
            csv(objective),
            u8::from(converged),
            n_pos
        );
        grid[i / dzs.len()][i % dzs.len()] = objective;
    }
    let svg = heatmap(
        "optimized emission product",
        "delta_Z",
        "T",
        dzs,
        ts,
        &grid,
    )?;
    let (limit_merged, limit_split) = zeeman_limits(&base)?;
    let mut manifest = manifest_skeleton(cfg)?;
    manifest["artifacts"] = json!([{
        "file": "zeeman_map.csv",
        "columns": ["t_extraction", "delta_z", "objective", "converged", "n_pos"],
        "target_channels": channels,
        "optimizer": {
            "normalization_times": cfg.optimizer.normalization_times,
            "restarts": cfg.optimizer.restarts,
            "max_iterations": cfg.optimizer.max_iterations,
            "n_pos": cfg.optimizer.n_pos,
        },
    }]);
    manifest["limits"] = json!({
        "degenerate": limit_merged,
        "well_separated": limit_split,
    });
    manifest["flagged"] = json!(flagged);
    Ok(ScenarioOutput {
        artifacts: vec![
            Artifact { name: "zeeman_map.csv".into(), bytes: out.into_bytes() },
            Artifact { name: "zeeman_map.svg".into(), bytes: svg.into_bytes() },
        ],
        manifest,
        flagged,
    })
}

fn run_drive_roundtrip(cfg: &ScenarioConfig, workers: usize, strict: bool) -> Result<ScenarioOutput> {
    let params = cfg.system.to_params()?;
    if params.channel_count() != 1 {
        return Err(CliError::Config("drive_roundtrip needs a single-channel system".into()));
    }
    let t = cfg
        .scenario
        .t_extraction
        .ok_or_else(|| CliError::Config("drive_roundtrip needs t_extraction".into()))?;
    let chis = if cfg.scenario.chi_values.is_empty() {
        vec![0.2, 0.1, 0.05, 0.02]
    } else {
        cfg.scenario.chi_values.clone()
    };
    let bound = lower_bound(&params, t, 0, strict)?;
    let wavepacket = SineWavepacket::from_bound(&bound, true)?;
    let grid = TimeGrid::new(t, cfg.scenario.drive_steps)?;

    struct ChiRow {
        pulse_csv: Vec<u8>,
        max_omega: f64,
        max_im_fraction: f64,
        algebraic: f64,
        dynamic: f64,
        times: Vec<f64>,
        re: Vec<f64>,
    }
    let results = run_jobs(chis.len(), workers, |i| -> Result<ChiRow> {
        let ctx = DriveContext::new(0.0, 0.0, 0.0, chis[i])?;
        let pulse = reconstruct_drive(&wavepacket, &params, &ctx, &grid)?;
        let report = verify_drive(&pulse, &params, &ctx, &wavepacket)?;
        let max_omega = pulse.max_magnitude();
        let max_im = pulse.omega.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let mut pulse_csv = Vec::new();
        pulse.write_csv(&mut pulse_csv)?;
        let stride = (pulse.times.len() / 400).max(1);
        let times: Vec<f64> = pulse.times.iter().step_by(stride).copied().collect();
        let re: Vec<f64> = pulse.omega.iter().step_by(stride).map(|z| z.re).collect();
        Ok(ChiRow {
            pulse_csv,
            max_omega,
            max_im_fraction: if max_omega > 0.0 { max_im / max_omega } else { 0.0 },
            algebraic: report.algebraic_residual,
            dynamic: report.dynamic_l2_error,
            times,
            re,
        })
    });

    let mut artifacts = Vec::new();
    let mut summary =
        String::from("chi,max_omega,max_im_fraction,algebraic_residual,dynamic_l2_error\n");
    let mut entries = Vec::new();
    let mut flagged = false;
    let mut rows = Vec::new();
    for (i, &chi) in chis.iter().enumerate() {
        let row = match &results[i] {
            Ok(r) => r,
            Err(e) => return Err(CliError::Config(format!("chi = {chi} failed: {e}"))),
        };
        flagged |= row.dynamic >= 0.01;
        let _ = writeln!(
            summary,
            "{},{},{},{},{}",
            csv(chi),
            csv(row.max_omega),
            csv(row.max_im_fraction),
            csv(row.algebraic),
            csv(row.dynamic)
        );
        let name = format!("drive_chi_{}.csv", float_tag(chi));
        entries.push(json!({
            "file": name,
            "chi": chi,
            "max_omega": row.max_omega,
            "dynamic_l2_error": row.dynamic,
            "algebraic_residual": row.algebraic,
        }));
        artifacts.push(Artifact { name, bytes: row.pulse_csv.clone() });
        rows.push(row);
    }
    let labels: Vec<String> = chis.iter().map(|chi| format!("chi = {chi}")).collect();
    let series: Vec<Series> = labels
        .iter()
        .zip(&rows)
        .map(|(label, row)| Series { label, x: &row.times, y: &row.re })
        .collect();
    let svg = line_plot("reconstructed drive", "t", "Re Omega", &series)?;
    artifacts.push(Artifact { name: "drive_summary.csv".into(), bytes: summary.into_bytes() });
    artifacts.push(Artifact { name: "drive_pulses.svg".into(), bytes: svg.into_bytes() });
    let mut manifest = manifest_skeleton(cfg)?;
    manifest["artifacts"] = json!(entries);
    manifest["bound"] = json!({
        "omega_m": bound.omega_m,
        "p_lower": bound.p_lower,
        "p_upper": bound.p_upper,
    });
    manifest["flagged"] = json!(flagged);
    Ok(ScenarioOutput { artifacts, manifest, flagged })
}

/// Run every job of a sweep; failures are isolated per job.
pub fn run_sweep(
    jobs: &[ScenarioConfig],
    workers: usize,
    strict: bool,
) -> Vec<Result<ScenarioOutput>> {
    let inner = if jobs.len() == 1 { workers } else { 1 };
    run_jobs(jobs.len(), workers, |i| run_scenario(&jobs[i], inner, strict))
}
