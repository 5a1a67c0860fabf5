//! The pipeline steps behind each subcommand. Progress lines go to `log`;
//! everything worth keeping goes to files under the configured output
//! directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use trajnet::dataset::{RngSeed, Role};
use trajnet::evaluation::{error_stats, format_table, write_errors_csv, ErrorReport};
use trajnet::integrator::theta;
use trajnet::neuralnet::{gradient, init_weights, ModelMeta, Normalizer};
use trajnet::training::{train, Sets, TrainRecord};
use trajnet::{Grid, Model, Samples};

use crate::config::{Resolved, RunConfig};
use crate::error::{CliError, Result};
use crate::registry::Registry;

/// Progress output is best effort: a closed stdout must not abort a run.
macro_rules! say {
    ($log:expr, $($arg:tt)*) => {
        let _ = writeln!($log, $($arg)*);
    };
}

#[derive(Clone, Debug)]
pub struct GeneratedSet {
    pub role: Role,
    pub path: PathBuf,
    pub samples: usize,
    pub failures: usize,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub model_path: PathBuf,
    pub log_path: PathBuf,
    pub record: TrainRecord,
    /// Largest hidden-layer gradient entry at initialization, recorded for
    /// transfer functions with zero derivative.
    pub hidden_gradient_max: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub columns: Vec<(String, Vec<ErrorReport>)>,
    pub table: String,
    pub report_path: PathBuf,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub forward_time: Duration,
    /// Reference trajectory and its integration time, when the model's system
    /// is known to the registry.
    pub integration: Option<(Vec<f64>, Duration)>,
    pub path: PathBuf,
}

fn create_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(CliError::io(&cfg.out))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(CliError::io(path))
}

pub fn load_set(path: &Path) -> Result<Samples> {
    Samples::load(path).map_err(|source| CliError::Dataset {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).map_err(|source| CliError::Model {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads the three sets and checks them against the resolved configuration.
fn load_sets(cfg: &RunConfig, r: &Resolved) -> Result<[Samples; 3]> {
    let sets = Role::ALL.map(|role| load_set(&cfg.dataset_path(role)));
    let [a, b, c] = sets;
    let sets = [a?, b?, c?];
    for (set, role) in sets.iter().zip(Role::ALL) {
        let path = cfg.dataset_path(role);
        if set.role != role {
            return Err(CliError::Mismatch(format!(
                "{}: holds the {} set",
                path.display(),
                set.role
            )));
        }
        if set.q() != r.domain.dim() {
            return Err(CliError::Mismatch(format!(
                "{}: {} parameters per sample, configuration has {}",
                path.display(),
                set.q(),
                r.domain.dim()
            )));
        }
        if set.grid != r.grid {
            return Err(CliError::Mismatch(format!(
                "{}: time grid ({}, {}, m = {}) differs from the configured ({}, {}, m = {})",
                path.display(),
                set.grid.t0(),
                set.grid.tf(),
                set.m(),
                r.grid.t0(),
                r.grid.tf(),
                r.grid.len()
            )));
        }
    }
    Ok(sets)
}

fn check_model_fits(model: &Model, set: &Samples, path: &Path) -> Result<()> {
    if model.net.input_dim() != set.q() || model.net.output_dim() != set.m() {
        return Err(CliError::Mismatch(format!(
            "{} maps {} -> {} but the {} set is {} -> {}",
            path.display(),
            model.net.input_dim(),
            model.net.output_dim(),
            set.role,
            set.q(),
            set.m()
        )));
    }
    Ok(())
}

/// Samples and integrates the three parameter sets and writes
/// `train.bin`, `validation.bin` and `test.bin`.
pub fn cmd_generate(cfg: &RunConfig, registry: &Registry, log: &mut dyn Write) -> Result<Vec<GeneratedSet>> {
    let r = cfg.resolve(registry)?;
    create_out_dir(cfg)?;
    let mut out = Vec::new();
    for role in Role::ALL {
        let path = cfg.dataset_path(role);
        let k = cfg.samples.count(role);
        let start = Instant::now();
        let (set, failures) = Samples::generate(
            &*r.system,
            &r.domain,
            role,
            k,
            r.grid,
            &r.tolerances,
            cfg.samples.seed,
            cfg.samples.failure_policy,
        )
        .map_err(|source| CliError::Dataset {
            path: path.clone(),
            source,
        })?;
        let elapsed = start.elapsed();
        set.save(&path).map_err(|source| CliError::Dataset {
            path: path.clone(),
            source,
        })?;
        say!(
            log,
            "{:<10} {:>5} samples  {:>8.2} s  {} failures  -> {}",
            role.as_str(),
            set.len(),
            elapsed.as_secs_f64(),
            failures.len(),
            path.display()
        );
        for (i, e) in &failures {
            say!(log, "  skipped {} sample {i}: {e}", role.as_str());
        }
        out.push(GeneratedSet {
            role,
            path,
            samples: set.len(),
            failures: failures.len(),
            elapsed,
        });
    }
    Ok(out)
}

/// Trains one network on the generated sets and writes the model, its JSON
/// export and the per-epoch log.
pub fn cmd_train(cfg: &RunConfig, registry: &Registry, log: &mut dyn Write) -> Result<TrainSummary> {
    let r = cfg.resolve(registry)?;
    let [train_set, valid_set, test_set] = load_sets(cfg, &r)?;
    let arch = cfg.architecture(train_set.q(), train_set.m())?;
    let norm = Normalizer::fit(train_set.params(), train_set.targets());
    let net = init_weights::<f64>(arch.clone(), RngSeed::weights(cfg.network.seed));

    let hidden_gradient_max = if arch.transfer().is_flat() && !train_set.is_empty() {
        let g = gradient(&net, &norm, train_set.params(), train_set.targets())?;
        Some(g[..arch.hidden_len()].iter().fold(0.0f64, |m, v| m.max(v.abs())))
    } else {
        None
    };

    let sets = Sets {
        train: &train_set,
        valid: &valid_set,
        test: Some(&test_set),
    };
    let start = Instant::now();
    let (net, record) = train(net, &norm, &sets, &cfg.training)?;
    let elapsed = start.elapsed();

    let best = *record.best();
    let mut model = Model::new(net, norm)?;
    model.meta = ModelMeta {
        system: Some(cfg.system.name.clone()),
        t0: Some(r.grid.t0()),
        tf: Some(r.grid.tf()),
        transfer: Some(cfg.network.transfer.to_string()),
        method: Some(cfg.training.method.to_string()),
        stop_reason: Some(record.stop_reason.to_string()),
        epochs: record.elapsed_epochs(),
        best_epoch: record.best_epoch,
        weight_seed: Some(cfg.network.seed),
        data_seed: Some(cfg.samples.seed),
        mse_train: Some(best.mse_train),
        mse_valid: Some(best.mse_valid),
        mse_test: best.mse_test,
    };

    let tag = cfg.model_tag();
    let model_path = cfg.model_path();
    model.save(&model_path).map_err(|source| CliError::Model {
        path: model_path.clone(),
        source,
    })?;
    let json_path = model_path.with_extension("json");
    fs::write(&json_path, model.to_json()).map_err(CliError::io(&json_path))?;

    let log_path = cfg.out.join(format!("log-{tag}.csv"));
    let mut w = create(&log_path)?;
    record.write_csv(&mut w).map_err(CliError::io(&log_path))?;
    if let Some(g) = hidden_gradient_max {
        writeln!(w, "# hidden_gradient_max={g}").map_err(CliError::io(&log_path))?;
    }
    finish(w, &log_path)?;

    say!(
        log,
        "{tag}: {} after {} epochs, best epoch {}, {:.1} s",
        record.stop_reason,
        record.elapsed_epochs(),
        record.best_epoch,
        elapsed.as_secs_f64()
    );
    say!(
        log,
        "  mse train {:.6e}  validation {:.6e}  test {}",
        best.mse_train,
        best.mse_valid,
        best.mse_test.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into())
    );
    if let Some(g) = hidden_gradient_max {
        say!(
            log,
            "  note: {} has zero derivative; hidden-layer gradient max |g| = {g:e} at initialization, only the output layer is trained",
            cfg.network.transfer
        );
    }
    say!(log, "  -> {}", model_path.display());

    Ok(TrainSummary {
        model_path,
        log_path,
        record,
        hidden_gradient_max,
    })
}

/// `model-*.bin` files in the output directory, sorted by name.
pub fn find_models(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("model-") && name.ends_with(".bin") {
            found.push(path);
        }
    }
    found.sort();
    Ok(found)
}

fn model_label(model: &Model, path: &Path) -> String {
    match (&model.meta.transfer, &model.meta.method) {
        (Some(t), Some(m)) => format!("{t}-{m}"),
        _ => path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(|s| s.trim_start_matches("model-").to_string())
            .unwrap_or_else(|| "model".into()),
    }
}

/// Relative-error statistics of every model on every non-empty set; writes
/// `report.txt` and one `errors-<model>.csv` per model. With no explicit
/// model paths, all models in the output directory are evaluated.
pub fn cmd_evaluate(cfg: &RunConfig, models: &[PathBuf], log: &mut dyn Write) -> Result<Evaluation> {
    let models = if models.is_empty() {
        find_models(&cfg.out)?
    } else {
        models.to_vec()
    };
    if models.is_empty() {
        return Err(CliError::Usage(format!(
            "no model files found in {}",
            cfg.out.display()
        )));
    }
    let sets = Role::ALL
        .iter()
        .map(|&role| load_set(&cfg.dataset_path(role)))
        .collect::<Result<Vec<_>>>()?;

    let mut columns = Vec::new();
    for path in &models {
        let model = load_model(path)?;
        let label = model_label(&model, path);
        let mut reports = Vec::new();
        for set in sets.iter().filter(|s| !s.is_empty()) {
            check_model_fits(&model, set, path)?;
            let rep = error_stats(&model.net, &model.norm, set).map_err(|source| CliError::Eval {
                context: format!("{label} on the {} set", set.role),
                source,
            })?;
            reports.push(rep);
        }
        let csv_path = cfg.out.join(format!("errors-{label}.csv"));
        let mut w = create(&csv_path)?;
        write_errors_csv(&mut w, &reports).map_err(CliError::io(&csv_path))?;
        finish(w, &csv_path)?;
        columns.push((label, reports));
    }

    let table_cols: Vec<(&str, &[ErrorReport])> = columns.iter().map(|(l, r)| (l.as_str(), r.as_slice())).collect();
    let mut table = format_table(&table_cols);
    table.push_str("\nmse\n");
    for (label, reports) in &columns {
        let parts: Vec<String> = reports.iter().map(|r| format!("{} {:.6e}", r.role, r.mse)).collect();
        table.push_str(&format!("  {label}: {}\n", parts.join(", ")));
    }
    let report_path = cfg.out.join("report.txt");
    fs::write(&report_path, &table).map_err(CliError::io(&report_path))?;
    say!(log, "{table}");
    say!(log, "-> {}", report_path.display());
    Ok(Evaluation {
        columns,
        table,
        report_path,
    })
}

fn model_grid(model: &Model, cfg: &RunConfig, registry: &Registry) -> Result<Grid> {
    let m = model.net.output_dim();
    match (model.meta.t0, model.meta.tf) {
        (Some(t0), Some(tf)) => Ok(Grid::new(t0, tf, m)?),
        _ => {
            let g = cfg.resolve(registry)?.grid;
            Ok(Grid::new(g.t0(), g.tf(), m)?)
        }
    }
}

const FORWARD_REPEATS: u32 = 100;

/// Evaluates the surrogate at one parameter vector and writes `t,y_predicted`.
/// When the system that produced the training data is registered, the same
/// trajectory is also integrated so both timings can be compared.
pub fn cmd_predict(
    cfg: &RunConfig,
    registry: &Registry,
    model_path: &Path,
    p: &[f64],
    output: Option<&Path>,
    log: &mut dyn Write,
) -> Result<Prediction> {
    let model = load_model(model_path)?;
    if p.len() != model.net.input_dim() {
        return Err(CliError::Mismatch(format!(
            "the model takes {} parameters, got {}",
            model.net.input_dim(),
            p.len()
        )));
    }
    let grid = model_grid(&model, cfg, registry)?;

    let start = Instant::now();
    let mut values = model.predict(p)?;
    for _ in 1..FORWARD_REPEATS {
        values = model.predict(p)?;
    }
    let forward_time = start.elapsed() / FORWARD_REPEATS;

    let integration = match model.meta.system.as_deref().map(|n| registry.get(n)) {
        Some(Ok(entry)) => {
            let sys = entry.build();
            let start = Instant::now();
            let traj = theta(&*sys, p, &grid, &cfg.tolerances)?;
            Some((traj.into_vec(), start.elapsed()))
        }
        _ => None,
    };

    let times = grid.points();
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            create_out_dir(cfg)?;
            cfg.out.join("predict.csv")
        }
    };
    let mut w = create(&path)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "t,y_predicted")?;
        for (t, y) in times.iter().zip(&values) {
            writeln!(w, "{t},{y}")?;
        }
        Ok(())
    };
    write(&mut w).map_err(CliError::io(&path))?;
    finish(w, &path)?;

    say!(log, "forward pass   {:>12.3} us", forward_time.as_secs_f64() * 1e6);
    if let Some((truth, t)) = &integration {
        let max_dev = truth.iter().zip(&values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        say!(log, "integration    {:>12.3} us", t.as_secs_f64() * 1e6);
        say!(
            log,
            "speedup        {:>12.1}x, max |integrated - predicted| = {max_dev:.4e}",
            t.as_secs_f64() / forward_time.as_secs_f64().max(1e-12)
        );
    }
    say!(log, "-> {}", path.display());
    Ok(Prediction {
        times,
        values,
        forward_time,
        integration,
        path,
    })
}

/// Writes `plot-<set>-<index>.csv` with columns `t,y_true,y_predicted` for
/// each requested sample.
pub fn cmd_plot_data(
    cfg: &RunConfig,
    model_path: &Path,
    role: Role,
    indices: &[usize],
    log: &mut dyn Write,
) -> Result<Vec<PathBuf>> {
    let model = load_model(model_path)?;
    let set = load_set(&cfg.dataset_path(role))?;
    check_model_fits(&model, &set, model_path)?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= set.len()) {
        return Err(CliError::Usage(format!(
            "sample index {bad} is out of range for the {} set of {} samples",
            role,
            set.len()
        )));
    }
    let times = set.grid.points();
    let mut paths = Vec::with_capacity(indices.len());
    for &i in indices {
        let pred = model.predict(set.params().row(i))?;
        let path = cfg.out.join(format!("plot-{}-{i}.csv", role.as_str()));
        let mut w = create(&path)?;
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(w, "t,y_true,y_predicted")?;
            for ((t, y), yp) in times.iter().zip(set.targets().row(i)).zip(&pred) {
                writeln!(w, "{t},{y},{yp}")?;
            }
            Ok(())
        };
        write(&mut w).map_err(CliError::io(&path))?;
        finish(w, &path)?;
        say!(log, "-> {}", path.display());
        paths.push(path);
    }
    Ok(paths)
}

/// Generate, train and evaluate in one go.
pub fn cmd_run(cfg: &RunConfig, registry: &Registry, log: &mut dyn Write) -> Result<Evaluation> {
    cmd_generate(cfg, registry, log)?;
    let summary = cmd_train(cfg, registry, log)?;
    cmd_evaluate(cfg, &[summary.model_path], log)
}
