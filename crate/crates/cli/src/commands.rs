//! Implementations of the five subcommands.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use fragkin::asympt::{self, AsymptoticLaws};
use fragkin::fit::linear_fit;
use fragkin::mc::{gillespie_run, McConfig};
use fragkin::pde::{run, SimulationConfig, Trajectory};
use fragkin::{distance_to_limit, fit_alpha, rescale, Kernel};

use crate::io_util::{
    ensure_dir, parse_config, read_snapshot, write_file, write_json, write_snapshot,
};
use crate::manifest::{unix_now, write_manifest, Check, RunManifest};
use crate::CliError;

const TOOL: &str = "fragkin";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
struct SimulateSummary {
    config: SimulationConfig,
    dt: f64,
    steps: usize,
    /// Least-squares slope of M(3,t) over the window with negligible leak.
    m3_slope_fit: Option<f64>,
    /// Kernel prediction for that slope, `V·(p(3)-p(4))`.
    m3_slope_law: f64,
    /// Max over samples of `|M(4,t)+V_lost(t)-V|/V`.
    conservation_residual: f64,
    /// `λ(t)·t` at the final sample, approaching `3/(p(1)-p(4))`.
    lambda_t_final: f64,
    lambda_t_law: f64,
}

pub fn simulate(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let started = unix_now();
    let config: SimulationConfig = parse_config(config_path)?;
    config.validate().map_err(CliError::from)?;
    ensure_dir(out_dir)?;

    let trajectory = run(&config).map_err(CliError::from)?;
    let mut outputs = Vec::new();

    let observables_path = out_dir.join("observables.csv");
    write_file(&observables_path, |w| {
        writeln!(w, "t,N,lambda,S,V,V_lost")?;
        for p in &trajectory.points {
            let o = &p.observables;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                o.time, o.count, o.mean_size, o.surface, o.volume, p.volume_lost
            )?;
        }
        Ok(())
    })?;
    outputs.push("observables.csv".to_string());

    for (idx, snap) in trajectory.snapshots.iter().enumerate() {
        let name = format!("snapshot_{idx:03}.csv");
        write_snapshot(&out_dir.join(&name), snap)?;
        outputs.push(name);
    }

    let summary = summarize(&config, &trajectory)?;
    write_json(&out_dir.join("summary.json"), &summary)?;
    outputs.push("summary.json".to_string());

    let mut checks = vec![Check::upper(
        "volume_conservation_residual",
        summary.conservation_residual,
        1e-4,
    )];
    if let Some(slope) = summary.m3_slope_fit {
        checks.push(Check::upper(
            "surface_slope_relative_error",
            (slope / summary.m3_slope_law - 1.0).abs(),
            0.01,
        ));
    }
    // The mean-size law is asymptotic; only check it once the mean size has
    // decayed well below its initial value.
    let first = &trajectory.points[0].observables;
    let last = &trajectory.final_point().observables;
    if last.mean_size > 0.0 && first.mean_size / last.mean_size >= 20.0 {
        checks.push(Check::upper(
            "mean_size_law_relative_error",
            (summary.lambda_t_final / summary.lambda_t_law - 1.0).abs(),
            0.05,
        ));
    }

    write_manifest(
        out_dir,
        &RunManifest {
            tool: TOOL,
            version: VERSION,
            command: "simulate",
            started_unix: started,
            finished_unix: unix_now(),
            config,
            outputs,
            checks,
        },
    )
}

fn summarize(
    config: &SimulationConfig,
    trajectory: &Trajectory,
) -> Result<SimulateSummary, CliError> {
    let laws =
        AsymptoticLaws::from_kernel(&config.kernel, config.volume, 0.0).map_err(CliError::from)?;
    let v0 = config.volume;

    let mut conservation_residual = 0.0f64;
    for p in &trajectory.points {
        conservation_residual =
            conservation_residual.max((p.observables.volume + p.volume_lost - v0).abs() / v0);
    }

    let window: Vec<_> = trajectory
        .points
        .iter()
        .filter(|p| p.volume_lost <= 1e-3 * v0)
        .collect();
    let m3_slope_fit = linear_fit(
        &window
            .iter()
            .map(|p| p.observables.time)
            .collect::<Vec<_>>(),
        &window
            .iter()
            .map(|p| p.observables.surface)
            .collect::<Vec<_>>(),
    )
    .map(|(slope, _)| slope);

    let last = trajectory.final_point().observables;
    Ok(SimulateSummary {
        config: config.clone(),
        dt: trajectory.dt,
        steps: trajectory.steps,
        m3_slope_fit,
        m3_slope_law: laws.m3_slope(),
        conservation_residual,
        lambda_t_final: last.mean_size * last.time,
        lambda_t_law: 3.0 / (laws.p(1) - laws.p(4)),
    })
}

#[derive(Debug, Serialize)]
struct McSummary {
    config: McConfig,
    total_events: u64,
    extinct_replicas: usize,
    /// Ensemble volume (plus frozen volume) at the final sample vs the
    /// initial volume, in standard errors.
    final_volume_z: Option<f64>,
}

pub fn mc(
    config_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    replicas: Option<usize>,
) -> Result<(), CliError> {
    let started = unix_now();
    let mut config: McConfig = parse_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(replicas) = replicas {
        config.replicas = replicas;
    }
    config.validate().map_err(CliError::from)?;
    ensure_dir(out_dir)?;

    let result = gillespie_run(&config).map_err(CliError::from)?;
    let mut outputs = Vec::new();

    let series_path = out_dir.join("series.csv");
    write_file(&series_path, |w| {
        writeln!(w, "t,N_w,S_w,V_w,frozen_volume")?;
        for a in &result.merged {
            writeln!(
                w,
                "{},{},{},{},{}",
                a.time, a.count, a.surface, a.volume, a.frozen_volume
            )?;
        }
        Ok(())
    })?;
    outputs.push("series.csv".to_string());

    for (idx, hist) in result.merged_histograms.iter().enumerate() {
        let name = format!("hist_{idx:03}.csv");
        write_file(&out_dir.join(&name), |w| {
            writeln!(w, "# t = {}", hist.time)?;
            writeln!(w, "bin_left,bin_right,weighted_count")?;
            for (b, count) in hist.counts.iter().enumerate() {
                writeln!(w, "{},{},{}", hist.edges[b], hist.edges[b + 1], count)?;
            }
            Ok(())
        })?;
        outputs.push(name);
    }

    let v0 = initial_volume(&config);
    let final_volume_z = result.merged.last().and_then(|a| {
        (a.volume_sem > 0.0).then(|| (a.volume + a.frozen_volume - v0).abs() / a.volume_sem)
    });
    let summary = McSummary {
        config: config.clone(),
        total_events: result.replicas.iter().map(|r| r.events).sum(),
        extinct_replicas: result
            .replicas
            .iter()
            .filter(|r| r.extinct_at.is_some())
            .count(),
        final_volume_z,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    outputs.push("summary.json".to_string());

    let mut checks = Vec::new();
    if let Some(z) = final_volume_z {
        checks.push(Check::upper("final_volume_z_score", z, 3.0));
    }
    write_manifest(
        out_dir,
        &RunManifest {
            tool: TOOL,
            version: VERSION,
            command: "mc",
            started_unix: started,
            finished_unix: unix_now(),
            config,
            outputs,
            checks,
        },
    )
}

fn initial_volume(config: &McConfig) -> f64 {
    use fragkin::mc::McInitial;
    match &config.initial {
        McInitial::Monodisperse { count, size } => *count as f64 * size.powi(3),
        McInitial::List { sizes } => sizes.iter().map(|s| s.powi(3)).sum(),
    }
}

#[derive(Debug, Serialize)]
struct AnalyzeEntry {
    file: String,
    t: f64,
    lambda: f64,
    ks: f64,
    l1: f64,
    alpha_hat: f64,
}

#[derive(Debug, Serialize)]
struct AnalyzeReport {
    alpha: f64,
    snapshots: Vec<AnalyzeEntry>,
}

#[derive(Debug, Serialize)]
struct AnalyzeConfig {
    alpha: f64,
    snapshots: Vec<String>,
}

pub fn analyze(
    alpha: f64,
    out_dir: &Path,
    snapshots: &[std::path::PathBuf],
) -> Result<(), CliError> {
    let started = unix_now();
    ensure_dir(out_dir)?;
    let mut entries = Vec::new();
    let mut outputs = Vec::new();

    for path in snapshots {
        let state = read_snapshot(path)?;
        let g = rescale(&state).map_err(CliError::from)?;
        let distance = distance_to_limit(&g, alpha).map_err(CliError::from)?;
        let alpha_hat = fit_alpha(&g).map_err(CliError::from)?;

        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("snapshot");
        let name = format!("rescaled_{stem}.csv");
        let law = fragkin::LimitLaw::new(alpha).map_err(CliError::from)?;
        write_file(&out_dir.join(&name), |w| {
            writeln!(w, "x,g,f_limit")?;
            for (x, gi) in g.support().iter().zip(g.density()) {
                writeln!(w, "{},{},{}", x, gi, law.density(*x).unwrap_or(f64::NAN))?;
            }
            Ok(())
        })?;
        outputs.push(name);

        entries.push(AnalyzeEntry {
            file: path.display().to_string(),
            t: g.time(),
            lambda: g.lambda(),
            ks: distance.ks,
            l1: distance.l1,
            alpha_hat,
        });
    }

    let report = AnalyzeReport {
        alpha,
        snapshots: entries,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    outputs.push("report.json".to_string());

    write_manifest(
        out_dir,
        &RunManifest {
            tool: TOOL,
            version: VERSION,
            command: "analyze",
            started_unix: started,
            finished_unix: unix_now(),
            config: AnalyzeConfig {
                alpha,
                snapshots: snapshots.iter().map(|p| p.display().to_string()).collect(),
            },
            outputs,
            checks: Vec::new(),
        },
    )
}

#[allow(clippy::too_many_arguments)]
pub fn asympt(
    alpha: f64,
    coeff: f64,
    volume: f64,
    m3_initial: f64,
    t_start: f64,
    t_end: f64,
    points: usize,
) -> Result<(), CliError> {
    if points < 2 {
        return Err(CliError::Config("need at least 2 output points".into()));
    }
    if !(t_start > 0.0 && t_end > t_start) {
        return Err(CliError::Config(format!(
            "need 0 < t_start < t_end, got [{t_start}, {t_end}]"
        )));
    }
    let laws =
        AsymptoticLaws::power_law(alpha, coeff, volume, m3_initial).map_err(CliError::from)?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let emit = |w: &mut dyn Write, t: f64| -> std::io::Result<()> {
        writeln!(
            w,
            "{},{},{},{},{}",
            t,
            asympt::surface_asympt(t, alpha, coeff, volume).unwrap(),
            asympt::lambda_powerlaw(t, alpha, coeff).unwrap(),
            asympt::number_asympt(t, alpha, coeff, volume).unwrap(),
            laws.m3_exact(t).unwrap(),
        )
    };
    let io_err = |e: std::io::Error| CliError::Io(format!("cannot write to stdout: {e}"));
    writeln!(w, "t,S,lambda,N,M3").map_err(io_err)?;
    let step = (t_end - t_start) / (points - 1) as f64;
    for i in 0..points {
        let t = if i + 1 == points {
            t_end
        } else {
            t_start + i as f64 * step
        };
        emit(&mut w, t).map_err(io_err)?;
    }
    Ok(())
}

pub fn kernel(config: Option<&Path>, alpha: Option<f64>, coeff: f64) -> Result<(), CliError> {
    let kernel = match (config, alpha) {
        (Some(path), _) => {
            let k: Kernel = parse_config(path)?;
            k.validate().map_err(CliError::from)?;
            k
        }
        (None, Some(alpha)) => Kernel::power_law(alpha, coeff).map_err(CliError::from)?,
        (None, None) => {
            return Err(CliError::Config(
                "give either --config or --alpha (with optional --coeff)".into(),
            ))
        }
    };
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let io_err = |e: std::io::Error| CliError::Io(format!("cannot write to stdout: {e}"));
    writeln!(w, "quantity,value").map_err(io_err)?;
    for s in 1..=4u8 {
        let p = kernel.mellin_p(s as f64).map_err(CliError::from)?;
        writeln!(w, "p({s}),{p}").map_err(io_err)?;
    }
    writeln!(w, "mu,{}", kernel.mu().map_err(CliError::from)?).map_err(io_err)?;
    writeln!(
        w,
        "splinter_mean_count,{}",
        kernel.splinter_mean_count().map_err(CliError::from)?
    )
    .map_err(io_err)?;
    Ok(())
}
