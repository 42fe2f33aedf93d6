//! Subcommand implementations. Each command is a pure function of the
//! config and input files; outputs are written atomically into the output
//! directory together with a manifest.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2};

use netdyn::analysis::{self, ClusterSource};
use netdyn::dynamics::{trajectory_from_csv, trajectory_to_csv};
use netdyn::graph::serialize_edge_list;
use netdyn::pod::basis_to_csv;
use netdyn::predict::{self, Metrics};
use netdyn::scalar::format_sig17;
use netdyn::sindy::model_to_json;
use netdyn::TrajectoryF64;

use crate::config::{self, CliError, CliResult, ExperimentConfig, OutputFormat};
use crate::manifest::ManifestBuilder;
use crate::output::write_atomic;
use crate::RunArgs;

fn load_config(args: &RunArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = config::load(&args.config)?;
    config::apply_overrides(&mut cfg, args.out.as_deref(), args.seed, args.format.as_deref());
    Ok(cfg)
}

fn resolved_json(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// Simulated or loaded trajectory plus the seed record and warnings.
struct TrajectorySetup {
    traj: TrajectoryF64,
    seeds: serde_json::Value,
    warnings: Vec<String>,
}

/// Loads the input trajectory when configured, otherwise simulates from the
/// graph + dynamics sections.
fn obtain_trajectory(cfg: &ExperimentConfig) -> CliResult<TrajectorySetup> {
    if let Some(path) = &cfg.trajectory {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let traj = trajectory_from_csv::<f64>(&text)?;
        return Ok(TrajectorySetup {
            traj,
            seeds: serde_json::Value::Null,
            warnings: Vec::new(),
        });
    }
    let graph_cfg = cfg
        .graph
        .as_ref()
        .ok_or_else(|| CliError::Config("a graph section (or a trajectory input) is required".into()))?;
    let dyn_cfg = cfg
        .dynamics
        .as_ref()
        .ok_or_else(|| CliError::Config("a dynamics section is required to simulate".into()))?;
    let graph = config::build_graph(graph_cfg)?;
    let (dynamics, seed_rec) = config::build_dynamics(dyn_cfg, graph)?;
    let (traj, warnings) = config::simulate(&dynamics, &cfg.simulation)?;
    Ok(TrajectorySetup {
        traj,
        seeds: serde_json::to_value(&seed_rec).expect("seeds serialize"),
        warnings,
    })
}

fn metrics_json(m: &Metrics<f64>) -> serde_json::Value {
    serde_json::json!({
        "relative_l2": if m.relative_l2_finite { serde_json::json!(m.relative_l2) } else { serde_json::json!("inf") },
        "relative_l2_finite": m.relative_l2_finite,
        "per_snapshot_rmse": m.per_snapshot_rmse,
        "per_node_max_abs": m.per_node_max_abs,
    })
}

pub fn simulate(args: &RunArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let mut manifest = ManifestBuilder::new("simulate", resolved_json(&cfg));
    let setup = obtain_trajectory(&cfg)?;
    for w in &setup.warnings {
        eprintln!("warning: {w}");
    }
    manifest.warn_all(&setup.warnings);
    manifest.seeds_value(setup.seeds);
    manifest.stage("simulate");

    let dir = cfg.outputs.dir.clone();
    if cfg.outputs.wants(OutputFormat::Csv) {
        let path = dir.join("trajectory.csv");
        write_atomic(&path, &trajectory_to_csv(&setup.traj))?;
        manifest.output(&path);
    }
    manifest.stage("write");
    manifest.write(&dir)
}

/// Long-format forecast CSV: `t,node,truth,value,phase`.
fn forecast_csv(
    traj: &TrajectoryF64,
    fitted: &Array2<f64>,
    predicted: &Array2<f64>,
) -> String {
    let n = traj.n();
    let k_obs = fitted.ncols();
    let mut out = String::from("t,node,truth,value,phase\n");
    for k in 0..k_obs {
        let t = format_sig17(traj.time(k));
        for node in 0..n {
            out.push_str(&format!(
                "{t},{node},{},{},fit\n",
                format_sig17(traj.states()[[node, k]]),
                format_sig17(fitted[[node, k]]),
            ));
        }
    }
    for col in 0..predicted.ncols() {
        let k = k_obs + col;
        let t = format_sig17(traj.time(k));
        for node in 0..n {
            out.push_str(&format!(
                "{t},{node},{},{},predict\n",
                format_sig17(traj.states()[[node, k]]),
                format_sig17(predicted[[node, col]]),
            ));
        }
    }
    out
}

pub fn predict(args: &RunArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let clamp = cfg.pipeline.clamp_outputs
        || cfg.dynamics.as_ref().map(|d| d.is_sis()).unwrap_or(false);
    let mut pipeline_cfg = cfg.pipeline.clone();
    pipeline_cfg.clamp_outputs = clamp;

    let mut resolved = cfg.clone();
    resolved.pipeline = pipeline_cfg.clone();
    let mut manifest = ManifestBuilder::new("predict", resolved_json(&resolved));

    let setup = obtain_trajectory(&cfg)?;
    for w in &setup.warnings {
        eprintln!("warning: {w}");
    }
    manifest.warn_all(&setup.warnings);
    manifest.seeds_value(setup.seeds);
    manifest.stage("simulate");

    let run = predict::run_pipeline(&setup.traj, &pipeline_cfg)?;
    if run.fit.model.diagnostics.underdetermined {
        let w = format!(
            "library has {} candidate functions but only {} regression samples",
            run.fit.model.d(),
            run.fit.coeffs.len().saturating_sub(2)
        );
        eprintln!("warning: {w}");
        manifest.warn_all(&[w]);
    }
    manifest.stage("fit_forecast");

    let dir = cfg.outputs.dir.clone();
    if cfg.outputs.wants(OutputFormat::Csv) {
        let path = dir.join("forecast.csv");
        write_atomic(&path, &forecast_csv(&setup.traj, &run.fitted, &run.predicted))?;
        manifest.output(&path);

        let path = dir.join("basis.csv");
        write_atomic(&path, &basis_to_csv(&run.fit.basis, run.fit.k_obs, setup.traj.dt()))?;
        manifest.output(&path);
    }
    if cfg.outputs.wants(OutputFormat::Json) {
        let path = dir.join("model.json");
        let text = serde_json::to_string_pretty(&model_to_json(&run.fit.model))
            .expect("model serializes");
        write_atomic(&path, &text)?;
        manifest.output(&path);

        let divergence = run.forecast.divergence.map(|step| {
            serde_json::json!({
                "step": step,
                "last_valid_t": run.forecast.last_valid_time(),
            })
        });
        let metrics = serde_json::json!({
            "m": run.fit.basis.m(),
            "k_obs": run.fit.k_obs,
            "dt": setup.traj.dt(),
            "t_obs": setup.traj.time(run.fit.k_obs - 1),
            "captured_energy": run.fit.basis.captured_energy(),
            "fit": metrics_json(&run.fit_metrics),
            "predicted": metrics_json(&run.predicted_metrics),
            "baseline": metrics_json(&run.baseline_metrics),
            "clamped": run.clamped,
            "divergence": divergence,
            "pipeline": pipeline_cfg,
        });
        let path = dir.join("metrics.json");
        write_atomic(&path, &serde_json::to_string_pretty(&metrics).expect("metrics serialize"))?;
        manifest.output(&path);
    }
    manifest.stage("write");
    manifest.write(&dir)
}

pub fn cluster(args: &RunArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let mut manifest = ManifestBuilder::new("cluster", resolved_json(&cfg));
    let section = cfg.cluster.clone();
    if section.sources.is_empty() {
        return Err(CliError::Config("cluster.sources must name at least one source".into()));
    }

    let needs_snapshot = section.sources.contains(&ClusterSource::Snapshot);
    let needs_adjacency = section.sources.contains(&ClusterSource::Adjacency);

    let traj = if needs_snapshot {
        let setup = obtain_trajectory(&cfg)?;
        for w in &setup.warnings {
            eprintln!("warning: {w}");
        }
        manifest.warn_all(&setup.warnings);
        manifest.seeds_value(setup.seeds);
        Some(setup.traj)
    } else {
        None
    };
    manifest.stage("simulate");

    let graph = if needs_adjacency {
        let gc = cfg.graph.as_ref().ok_or_else(|| {
            CliError::Config("adjacency clustering needs a graph section".into())
        })?;
        Some(config::build_graph(gc)?)
    } else {
        None
    };

    let mut rows = String::from("node,label,source\n");
    let mut json_entries = Vec::new();
    for source in &section.sources {
        let embedding = match source {
            ClusterSource::Adjacency => analysis::adjacency_embedding_with(
                graph.as_ref().expect("adjacency clustering built a graph"),
                section.k,
                section.laplacian,
            )?,
            ClusterSource::Snapshot => analysis::snapshot_embedding(
                traj.as_ref().expect("snapshot clustering obtained a trajectory").states(),
                section.k,
            )?,
        };
        let assignment =
            analysis::spectral_cluster(&embedding, section.k, section.seed, *source)?;
        for (node, label) in assignment.labels.iter().enumerate() {
            rows.push_str(&format!("{node},{label},{}\n", assignment.source.as_str()));
        }
        let coords: Vec<Vec<f64>> =
            (0..embedding.nrows()).map(|i| embedding.row(i).to_vec()).collect();
        json_entries.push(serde_json::json!({
            "source": assignment.source.as_str(),
            "k": assignment.k,
            "inertia": assignment.inertia,
            "labels": assignment.labels,
            "embedding": coords,
        }));
    }
    manifest.stage("cluster");

    let dir = cfg.outputs.dir.clone();
    if cfg.outputs.wants(OutputFormat::Csv) {
        let path = dir.join("clusters.csv");
        write_atomic(&path, &rows)?;
        manifest.output(&path);
    }
    if cfg.outputs.wants(OutputFormat::Json) {
        let path = dir.join("clusters.json");
        let text = serde_json::to_string_pretty(&serde_json::json!({
            "seed": section.seed,
            "results": json_entries,
        }))
        .expect("cluster json serializes");
        write_atomic(&path, &text)?;
        manifest.output(&path);
    }
    manifest.stage("write");
    manifest.write(&dir)
}

pub fn surrogate(args: &RunArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let mut manifest = ManifestBuilder::new("surrogate", resolved_json(&cfg));
    let setup = obtain_trajectory(&cfg)?;
    for w in &setup.warnings {
        eprintln!("warning: {w}");
    }
    manifest.warn_all(&setup.warnings);

    // The curing rates come straight from the dynamics section; no graph is
    // needed when the trajectory is read from a file.
    let dyn_cfg = cfg.dynamics.as_ref().ok_or_else(|| {
        CliError::Config("the surrogate predictor needs a dynamics section with curing rates".into())
    })?;
    let (delta, delta_seed) = config::resolve_sis_delta(dyn_cfg, setup.traj.n())?;
    if setup.seeds.is_null() {
        manifest.seeds_value(serde_json::json!({ "delta": delta_seed }));
    } else {
        manifest.seeds_value(setup.seeds.clone());
    }
    manifest.stage("simulate");

    let section = &cfg.surrogate;
    if !(section.obs_fraction > 0.0 && section.obs_fraction < 1.0) {
        return Err(CliError::Config(format!(
            "surrogate.obs_fraction {} outside (0, 1)",
            section.obs_fraction
        )));
    }
    let traj = &setup.traj;
    let k_obs = (section.obs_fraction * traj.len() as f64).floor() as usize;
    if k_obs < 2 {
        return Err(CliError::Config(format!(
            "surrogate observation window has {k_obs} snapshots; need at least 2"
        )));
    }
    let window = traj.window(k_obs)?;
    let rho = section.rho.unwrap_or(section.rho_scale * k_obs as f64);
    let params = predict::SurrogateParams::with_uniform_rho(delta.clone(), rho)?;
    let a_hat = predict::surrogate_fit(&window, &params)?;
    manifest.stage("fit");

    let fc = predict::surrogate_forecast(
        &a_hat,
        &delta,
        &traj.column(k_obs - 1),
        traj.time(k_obs - 1),
        traj.time(traj.len() - 1),
        traj.dt(),
    )?;
    let avail = (fc.len() - 1).min(traj.len() - k_obs);
    let predicted_raw = fc.states.slice(s![.., 1..=avail]).to_owned();
    let (predicted, clamped) = predict::clamp_unit_interval(&predicted_raw);
    let truth = traj.states().slice(s![.., k_obs..k_obs + avail]).to_owned();
    let predicted_metrics = predict::error_metrics(&predicted, &truth)?;
    let baseline = predict::constant_baseline(&traj.column(k_obs - 1), avail);
    let baseline_metrics = predict::error_metrics(&baseline, &truth)?;
    manifest.stage("forecast");

    let dir = cfg.outputs.dir.clone();
    if cfg.outputs.wants(OutputFormat::Csv) {
        let path = dir.join("surrogate.edges");
        write_atomic(&path, &serialize_edge_list(&a_hat))?;
        manifest.output(&path);

        let fitted = traj.states().slice(s![.., ..k_obs]).to_owned();
        let path = dir.join("forecast.csv");
        write_atomic(&path, &forecast_csv(traj, &fitted, &predicted))?;
        manifest.output(&path);
    }
    if cfg.outputs.wants(OutputFormat::Json) {
        let divergence = fc.divergence.map(|step| {
            serde_json::json!({ "step": step, "last_valid_t": fc.last_valid_time() })
        });
        let metrics = serde_json::json!({
            "k_obs": k_obs,
            "dt": traj.dt(),
            "t_obs": traj.time(k_obs - 1),
            "rho": rho,
            "surrogate_edges": a_hat.edge_count(),
            "predicted": metrics_json(&predicted_metrics),
            "baseline": metrics_json(&baseline_metrics),
            "clamped": clamped,
            "divergence": divergence,
        });
        let path = dir.join("metrics.json");
        write_atomic(&path, &serde_json::to_string_pretty(&metrics).expect("metrics serialize"))?;
        manifest.output(&path);
    }
    manifest.stage("write");
    manifest.write(&dir)
}

/// Collects every metrics.json under `root` into one summary table.
pub fn report(root: &Path) -> CliResult<()> {
    let mut files = Vec::new();
    collect_metrics_files(root, &mut files)?;
    files.sort();
    if files.is_empty() {
        return Err(CliError::Io(format!(
            "no metrics.json files under {}",
            root.display()
        )));
    }
    let mut summary = String::from("run,fit_relative_l2,predicted_relative_l2,baseline_relative_l2,predicted_over_baseline\n");
    println!("{:<40} {:>12} {:>12} {:>12} {:>8}", "run", "fit", "predicted", "baseline", "ratio");
    for file in &files {
        let text = std::fs::read_to_string(file)
            .map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
        let get = |section: &str| -> Option<f64> { value[section]["relative_l2"].as_f64() };
        let fit = get("fit");
        let predicted = get("predicted");
        let baseline = get("baseline");
        let ratio = match (predicted, baseline) {
            (Some(p), Some(b)) if b > 0.0 => Some(p / b),
            _ => None,
        };
        let name = file
            .parent()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| file.display().to_string());
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
        summary.push_str(&format!(
            "{name},{},{},{},{}\n",
            fmt(fit),
            fmt(predicted),
            fmt(baseline),
            fmt(ratio)
        ));
        println!(
            "{:<40} {:>12} {:>12} {:>12} {:>8}",
            name,
            fmt(fit),
            fmt(predicted),
            fmt(baseline),
            fmt(ratio)
        );
    }
    let path = root.join("summary.csv");
    write_atomic(&path, &summary)?;
    Ok(())
}

fn collect_metrics_files(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Io(e.to_string()))?;
        let path = entry.path();
        if path.is_dir() {
            collect_metrics_files(&path, out)?;
        } else if path.file_name().map(|n| n == "metrics.json").unwrap_or(false) {
            out.push(path);
        }
    }
    Ok(())
}
