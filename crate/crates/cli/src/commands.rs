use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use debias_core::bias::{BiasKind, BiasSpec};
use debias_core::estimators::{estimate_boxes, estimate_class_counts};
use debias_core::generators::{
    gen_class_imbalance, gen_hsv_bins, gen_power_law, gen_two_point, uniform_population,
    ClassImbalanceConfig, HsvBinConfig, PowerLawConfig, SourceSizes, TwoPointConfig,
};
use debias_core::harness::{compare, gaussian_pool, CompareConfig, CompareReport};
use debias_core::io;
use debias_core::model::{DatasetCollection, Observation};
use debias_core::omega::build_omega_matrix;
use debias_core::oracle::{run_two_point_study, StudyConfig};
use debias_core::rng::derive_seed;
use debias_core::solver::{diagnose, solve, SolverConfig, SolverWarning};
use debias_core::weights::{
    compute_pi, debiased_distribution, gini, l2_to_reference, DistributionKey, WeightVector,
};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{describe_components, CliError};
use crate::manifest::{self, Format, RunManifest, RunTiming};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum BiasMode {
    /// Biasing functions written by `generate` (`specs.json`).
    GroundTruth,
    /// Per-source label frequencies.
    ClassCounts,
    /// Bounding boxes of the source embeddings.
    Boxes,
    /// `ω ≡ 1` for every source.
    Unbiased,
}

impl BiasMode {
    fn name(self) -> &'static str {
        match self {
            BiasMode::GroundTruth => "ground_truth",
            BiasMode::ClassCounts => "class_counts",
            BiasMode::Boxes => "boxes",
            BiasMode::Unbiased => "unbiased",
        }
    }

    fn parse(s: &str) -> Result<Self, CliError> {
        <BiasMode as clap::ValueEnum>::from_str(s, false)
            .map_err(|_| CliError::config(format!("unknown bias mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Generate,
    Solve,
    Evaluate,
    StudyTwoPoint,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Generate => "generate",
            CommandKind::Solve => "solve",
            CommandKind::Evaluate => "evaluate",
            CommandKind::StudyTwoPoint => "study-two-point",
        }
    }

    fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "generate" => CommandKind::Generate,
            "solve" => CommandKind::Solve,
            "evaluate" => CommandKind::Evaluate,
            "study-two-point" => CommandKind::StudyTwoPoint,
            other => return Err(CliError::config(format!("manifest names unknown command `{other}`"))),
        })
    }
}

/// A fully resolved command: what `manifest.json` records and `replay` reads.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: CommandKind,
    pub config: Value,
    pub seed: Option<u64>,
    pub format: Format,
    pub params: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
}

impl Invocation {
    pub fn from_manifest(m: &RunManifest) -> Result<Self, CliError> {
        let computed = manifest::digest(&m.config);
        if computed != m.config_digest {
            return Err(CliError::config(format!(
                "config digest mismatch: manifest says {}, config hashes to {computed}",
                m.config_digest
            )));
        }
        Ok(Invocation {
            command: CommandKind::parse(&m.command)?,
            config: m.config.clone(),
            seed: m.seed,
            format: m.format,
            params: m.params.clone(),
            inputs: m.inputs.clone(),
        })
    }
}

/// Output directory plus the names written so far.
struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes `stem.csv` or `stem.json` according to the format.
    fn table<T: Serialize>(
        &mut self,
        format: Format,
        stem: &str,
        csv: impl FnOnce() -> debias_core::Result<String>,
        value: &T,
    ) -> Result<(), CliError> {
        match format {
            Format::Csv => {
                let text = csv()?;
                self.write(&format!("{stem}.csv"), &text)
            }
            Format::Json => self.json(&format!("{stem}.json"), value),
        }
    }
}

pub fn read_config(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn typed<T: DeserializeOwned>(value: &Value, what: &str) -> Result<T, CliError> {
    T::deserialize(value).map_err(|e| CliError::config(format!("{what} config: {e}")))
}

fn object(value: &mut Value) -> Result<&mut serde_json::Map<String, Value>, CliError> {
    value
        .as_object_mut()
        .ok_or_else(|| CliError::config("config must be a JSON object"))
}

/// Applies `--seed` to the top-level `seed` key.
pub fn apply_seed(config: &mut Value, seed: Option<u64>) -> Result<(), CliError> {
    if let Some(s) = seed {
        object(config)?.insert("seed".into(), json!(s));
    }
    Ok(())
}

/// Absolute form of an input path, as recorded in the manifest.
pub fn input(path: &Path) -> Result<String, CliError> {
    std::path::absolute(path)
        .map(|p| p.display().to_string())
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Runs the command and writes `manifest.json` and `run_manifest.json` into `out`.
pub fn run(inv: &Invocation, out: &Path) -> Result<(), CliError> {
    let start = Instant::now();
    let mut outputs = Outputs::new(out)?;
    let summary = match inv.command {
        CommandKind::Generate => generate(inv, &mut outputs)?,
        CommandKind::Solve => solve_cmd(inv, &mut outputs)?,
        CommandKind::Evaluate => evaluate(inv, &mut outputs)?,
        CommandKind::StudyTwoPoint => study(inv, &mut outputs)?,
    };
    let mut names = outputs.names.clone();
    names.sort();
    let m = RunManifest {
        command: inv.command.name().to_string(),
        config_digest: manifest::digest(&inv.config),
        config: inv.config.clone(),
        seed: inv.seed,
        format: inv.format,
        params: inv.params.clone(),
        inputs: inv.inputs.clone(),
        outputs: names,
        versions: manifest::versions(),
        summary,
    };
    outputs.json("manifest.json", &m)?;
    let timing = RunTiming {
        command: inv.command.name().to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    outputs.json("run_manifest.json", &timing)
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
enum Scenario {
    ClassImbalance(ClassImbalanceScenario),
    HsvBins(HsvScenario),
    PowerLaw(PowerLawScenario),
    TwoPoint(TwoPointConfig),
}

#[derive(Debug, Deserialize)]
struct ClassImbalanceScenario {
    num_classes: usize,
    num_sources: usize,
    gamma: f64,
    sizes: SourceSizes,
    seed: u64,
    #[serde(default)]
    class_order: Option<Vec<usize>>,
    /// Defaults to `max(16, num_classes)`.
    #[serde(default)]
    feature_dim: Option<usize>,
    #[serde(default = "default_noise")]
    noise_std: f64,
    #[serde(default = "default_pool")]
    pool_per_class: usize,
}

#[derive(Debug, Deserialize)]
struct HsvScenario {
    gamma_ramp: f64,
    sizes: SourceSizes,
    seed: u64,
    #[serde(default = "default_population")]
    population: usize,
    #[serde(default)]
    num_classes: usize,
}

#[derive(Debug, Deserialize)]
struct PowerLawScenario {
    proportions: Vec<f64>,
    gamma: f64,
    seed: u64,
    #[serde(default)]
    permutation: Option<Vec<usize>>,
    /// Observations available per modality.
    #[serde(default = "default_pool")]
    pool_size: usize,
}

fn default_noise() -> f64 {
    0.35
}
fn default_pool() -> usize {
    2000
}
fn default_population() -> usize {
    10_000
}

fn generate(inv: &Invocation, out: &mut Outputs) -> Result<Value, CliError> {
    let scenario: Scenario = typed(&inv.config, "generate")?;
    let (data, specs, extra): (DatasetCollection, Vec<BiasSpec>, Option<Value>) = match scenario {
        Scenario::ClassImbalance(s) => {
            let dim = s.feature_dim.unwrap_or(s.num_classes.max(16));
            let pool = gaussian_pool(s.num_classes, dim, s.noise_std, s.pool_per_class, derive_seed(s.seed, 1))?;
            let cfg = ClassImbalanceConfig {
                num_classes: s.num_classes,
                num_sources: s.num_sources,
                gamma: s.gamma,
                sizes: s.sizes.resolve(s.num_sources)?,
                seed: derive_seed(s.seed, 2),
                class_order: s.class_order,
            };
            let (data, specs) = gen_class_imbalance(&cfg, &pool)?;
            (data, specs, None)
        }
        Scenario::HsvBins(s) => {
            let pop = uniform_population(s.population, s.num_classes, derive_seed(s.seed, 1));
            let cfg = HsvBinConfig {
                gamma_ramp: s.gamma_ramp,
                sizes: s.sizes,
                seed: derive_seed(s.seed, 2),
            };
            let (data, specs, bins) = gen_hsv_bins(&cfg, &pop)?;
            (data, specs, Some(json!({ "bins": bins })))
        }
        Scenario::PowerLaw(s) => {
            let cfg = PowerLawConfig {
                proportions: s.proportions.clone(),
                gamma: s.gamma,
                seed: s.seed,
                permutation: s.permutation,
            };
            cfg.validate()?;
            let pools: Vec<Vec<Observation>> = (0..s.proportions.len())
                .map(|m| (0..s.pool_size).map(|i| Observation::new(m * s.pool_size + i)).collect())
                .collect();
            let data = gen_power_law(&cfg, &pools)?;
            let target = cfg.target();
            // the single source over-represents modality k by p'_k / p_k
            let spec = BiasSpec::tabular_strata(
                s.proportions
                    .iter()
                    .zip(&target)
                    .enumerate()
                    .map(|(k, (p, t))| (k as i64, t / p)),
            );
            (data, vec![spec], Some(json!({ "target_proportions": target, "sigma": cfg.sigma() })))
        }
        Scenario::TwoPoint(cfg) => {
            let (data, specs) = gen_two_point(&cfg)?;
            (data, specs, None)
        }
    };
    let csv = || io::dataset_to_csv(&data);
    out.table(inv.format, "dataset", csv, &data)?;
    out.json("specs.json", &specs)?;
    let mut summary = json!({
        "num_classes": data.num_classes(),
        "num_sources": data.num_sources(),
        "sizes": data.sizes(),
    });
    if let Some(Value::Object(extra)) = extra {
        summary.as_object_mut().expect("object literal").extend(extra);
    }
    Ok(summary)
}

// ---------------------------------------------------------------- solve

#[derive(Debug, Deserialize)]
struct SolveConfig {
    #[serde(default)]
    solver: Option<SolverConfig>,
    /// Added to every label count before normalizing (`class_counts`).
    #[serde(default)]
    smoothing: f64,
    /// Box enlargement (`boxes`).
    #[serde(default)]
    margin: f64,
    #[serde(default)]
    seed: Option<u64>,
}

/// Reads `dataset.csv` or `dataset.json` from a generate output directory,
/// or a dataset file directly.
fn load_dataset(path: &Path) -> Result<(DatasetCollection, PathBuf), CliError> {
    let (file, dir) = if path.is_dir() {
        let csv = path.join("dataset.csv");
        let file = if csv.exists() { csv } else { path.join("dataset.json") };
        (file, path.to_path_buf())
    } else {
        (path.to_path_buf(), path.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    let text = std::fs::read_to_string(&file).map_err(|e| CliError::data(format!("{}: {e}", file.display())))?;
    let num_classes = manifest::read(&dir.join("manifest.json"))
        .ok()
        .and_then(|m| m.summary.get("num_classes").and_then(Value::as_u64))
        .map(|m| m as usize);
    let data = if file.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", file.display())))?
    } else {
        io::dataset_from_csv(&text, num_classes).map_err(|e| CliError::from(e).context(file.display()))?
    };
    Ok((data, dir))
}

fn solve_cmd(inv: &Invocation, out: &mut Outputs) -> Result<Value, CliError> {
    let cfg: SolveConfig = typed(&inv.config, "solve")?;
    let dataset = inv
        .inputs
        .get("dataset")
        .ok_or_else(|| CliError::config("solve needs --dataset"))?;
    let mode = BiasMode::parse(inv.params.get("bias").map_or("ground_truth", String::as_str))?;
    let (data, dir) = load_dataset(Path::new(dataset))?;
    let specs = match mode {
        BiasMode::GroundTruth => {
            let path = dir.join("specs.json");
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let specs: Vec<BiasSpec> =
                serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            specs
        }
        BiasMode::ClassCounts => estimate_class_counts(&data, cfg.smoothing)?,
        BiasMode::Boxes => estimate_boxes(&data, cfg.margin)?,
        BiasMode::Unbiased => {
            let ones = BiasSpec::new(BiasKind::Table {
                values: data.rows().map(|(_, o)| (o.id, 1.0)).collect(),
            });
            vec![ones; data.num_sources()]
        }
    };
    let mut solver = cfg.solver.unwrap_or_default();
    if let Some(s) = cfg.seed {
        solver.seed = s;
    }
    let omega = build_omega_matrix(&specs, &data)?;
    let lambda = data.lambda();
    let res = solve(&omega, &lambda, &solver)?;
    let diag = diagnose(&omega, &lambda, &res.u_hat);
    out.json("diagnostics.json", &diag)?;
    if let Some(SolverWarning::NotConnected { components }) = res
        .warnings
        .iter()
        .find(|w| matches!(w, SolverWarning::NotConnected { .. }))
    {
        return Err(CliError::numerical(format!(
            "overlap graph is not strongly connected; components: {}",
            describe_components(components)
        )));
    }
    let pi = compute_pi(&omega, &lambda, &res.w_hat)?;
    out.table(inv.format, "omega", || io::omega_to_csv(&omega), &omega)?;
    out.table(inv.format, "weights", || io::weights_to_csv(&omega, &pi), &pi)?;
    out.table(inv.format, "trace", || io::trace_to_csv(&res.trace), &res.trace)?;
    let n = pi.len();
    let summary = json!({
        "bias": mode.name(),
        "w_hat": res.w_hat,
        "u_hat": res.u_hat,
        "objective": res.objective,
        "final_grad_norm": res.final_grad_norm,
        "iterations": res.iterations,
        "converged": res.converged,
        "warnings": res.warnings,
        "gini": gini(&pi),
        "l2_to_uniform": l2_to_reference(&pi, &WeightVector::uniform(n).pi)?,
    });
    out.json("solver.json", &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Serialize)]
struct SweepSummary {
    gamma: f64,
    seeds: usize,
    median_naive_accuracy: f64,
    median_debiased_accuracy: f64,
    mean_l2_to_uniform: f64,
    mean_gini: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pulls `gammas` and `seeds` out of the config and fills `gamma`/`seed`
/// from them when absent.
fn sweep_grid(config: &Value) -> Result<(CompareConfig, Vec<f64>, Vec<u64>), CliError> {
    let mut base = config.clone();
    let obj = object(&mut base)?;
    let gammas: Option<Vec<f64>> = obj.remove("gammas").map(|v| typed(&v, "gammas")).transpose()?;
    let seeds: Option<Vec<u64>> = obj.remove("seeds").map(|v| typed(&v, "seeds")).transpose()?;
    if let Some(g) = gammas.as_ref().and_then(|g| g.first()) {
        obj.entry("gamma").or_insert(json!(g));
    }
    if let Some(s) = seeds.as_ref().and_then(|s| s.first()) {
        obj.entry("seed").or_insert(json!(s));
    }
    let cfg: CompareConfig = typed(&base, "evaluate")?;
    let gammas = gammas.unwrap_or_else(|| vec![cfg.gamma]);
    let seeds = seeds.unwrap_or_else(|| vec![cfg.seed]);
    if gammas.is_empty() || seeds.is_empty() {
        return Err(CliError::config("gammas and seeds must be non-empty"));
    }
    Ok((cfg, gammas, seeds))
}

fn evaluate(inv: &Invocation, out: &mut Outputs) -> Result<Value, CliError> {
    let mut report = serde_json::Map::new();
    if !inv.config.is_null() {
        let (base, gammas, seeds) = sweep_grid(&inv.config)?;
        let grid: Vec<(f64, u64)> = gammas
            .iter()
            .flat_map(|&g| seeds.iter().map(move |&s| (g, s)))
            .collect();
        let reports: Vec<CompareReport> = grid
            .par_iter()
            .map(|&(gamma, seed)| {
                compare(&CompareConfig {
                    gamma,
                    seed,
                    ..base.clone()
                })
            })
            .collect::<debias_core::Result<_>>()?;
        let summary: Vec<SweepSummary> = gammas
            .iter()
            .map(|&g| {
                let rows: Vec<&CompareReport> = reports.iter().filter(|r| r.gamma == g).collect();
                let m = rows.len() as f64;
                SweepSummary {
                    gamma: g,
                    seeds: rows.len(),
                    median_naive_accuracy: median(rows.iter().map(|r| r.naive.accuracy).collect()),
                    median_debiased_accuracy: median(rows.iter().map(|r| r.debiased.accuracy).collect()),
                    mean_l2_to_uniform: rows.iter().map(|r| r.l2_to_uniform).sum::<f64>() / m,
                    mean_gini: rows.iter().map(|r| r.gini).sum::<f64>() / m,
                }
            })
            .collect();
        out.table(inv.format, "results", || io::compare_reports_to_csv(&reports), &reports)?;
        report.insert("runs".into(), json!(reports));
        report.insert("summary".into(), json!(summary));
    }
    match (inv.inputs.get("dataset"), inv.inputs.get("weights")) {
        (Some(dataset), Some(weights)) => {
            let (data, _) = load_dataset(Path::new(dataset))?;
            let text = std::fs::read_to_string(weights).map_err(|e| CliError::data(format!("{weights}: {e}")))?;
            let pi = io::weights_from_csv(&text).map_err(|e| CliError::from(e).context(weights))?;
            let n = data.len();
            let debiased = debiased_distribution(&pi, &data, DistributionKey::Label)
                .map_err(|e| CliError::from(e).context(weights))?;
            let naive = debiased_distribution(&WeightVector::uniform(n), &data, DistributionKey::Label)?;
            let m = data.num_classes();
            let reference = vec![1.0 / m as f64; m];
            let csv = || io::distribution_to_csv(&debiased.support, &debiased.mass, &reference);
            out.table(inv.format, "distribution", csv, &debiased)?;
            report.insert(
                "distribution".into(),
                json!({
                    "debiased": debiased,
                    "naive": naive,
                    "reference": reference,
                    "tv_debiased": debiased.total_variation(&reference),
                    "tv_naive": naive.total_variation(&reference),
                }),
            );
        }
        (None, None) if !report.is_empty() => {}
        (None, None) => return Err(CliError::config("evaluate needs --config, or --dataset with --weights")),
        _ => return Err(CliError::config("--dataset and --weights must be given together")),
    }
    let report = Value::Object(report);
    out.json("report.json", &report)?;
    Ok(Value::Null)
}

// ---------------------------------------------------------------- study

/// Standard study settings overlaid with the user's top-level keys.
pub fn study_config(user: Option<Value>, seed: Option<u64>) -> Result<Value, CliError> {
    let mut base = serde_json::to_value(StudyConfig::standard(seed.unwrap_or(0))).expect("serializable");
    if let Some(mut user) = user {
        let user = object(&mut user)?;
        object(&mut base)?.append(user);
    }
    apply_seed(&mut base, seed)?;
    Ok(base)
}

fn study(inv: &Invocation, out: &mut Outputs) -> Result<Value, CliError> {
    let cfg: StudyConfig = typed(&inv.config, "study-two-point")?;
    let cells = run_two_point_study(&cfg)?;
    out.table(inv.format, "study", || io::study_to_csv(&cells), &cells)?;
    Ok(json!({ "cells": cells.len(), "units": "gini values in the csv are multiplied by 100" }))
}
