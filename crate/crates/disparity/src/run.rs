//! Mode dispatch: config in, report out.

use std::path::{Path, PathBuf};

use disparity_core::data_model::{validate_table, ObservationTable, Proposition, TrialSpec};
use disparity_core::emulation::eligibility_counts;
use disparity_core::estimators::{estimate_disparity, DisparityEstimate};
use disparity_core::oracle_sim::{
    apply_stochastic_intervention, simulate_population, true_tau_with_se, SyntheticPopulation,
};
use disparity_core::pipeline;
use disparity_core::sampling_design::{compute_sampling_fractions, normalize_fractions, two_phase_sample};
use serde_json::{json, Value};

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{self, ExtraColumn};
use crate::report::to_value;
use crate::runner::RayonRunner;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub bootstrap: Option<usize>,
}

impl Overrides {
    pub fn apply(self, mut cfg: RunConfig) -> RunConfig {
        cfg.mode = self.mode.or(cfg.mode);
        cfg.data = self.data.or(cfg.data);
        cfg.out = self.out.or(cfg.out);
        cfg.seed = self.seed.or(cfg.seed);
        if let Some(b) = self.bootstrap {
            let boot = cfg.analysis.bootstrap.get_or_insert_with(|| crate::config::BootstrapConfig {
                replicates: b,
                mode: Default::default(),
                level: 0.95,
                subsample: None,
                replicates_out: None,
            });
            boot.replicates = b;
        }
        cfg
    }
}

/// Runs the configured mode and returns the report.
pub fn run(cfg: &RunConfig, runner: &RayonRunner) -> Result<Value> {
    let mode = cfg.mode.ok_or_else(|| CliError::Config("no mode given".into()))?;
    let body = match mode {
        Mode::Estimate => estimate(cfg, runner)?,
        Mode::Validate => validate(cfg)?,
        Mode::Sample => sample(cfg)?,
        Mode::Simulate => simulate(cfg)?,
        Mode::Oracle => oracle(cfg)?,
    };
    let mut report = json!({
        "version": VERSION,
        "mode": mode,
        "enrollment_groups": cfg.enrollment_groups,
        "time_zero": cfg.time_zero,
    });
    let (Value::Object(r), Value::Object(b)) = (&mut report, body) else { unreachable!() };
    r.extend(b);
    Ok(report)
}

fn data_path(cfg: &RunConfig) -> Result<&Path> {
    let p = cfg.data.as_deref().ok_or_else(|| CliError::Config("this mode needs `data`".into()))?;
    if !p.is_file() {
        return Err(CliError::Config(format!("data file {} does not exist", p.display())));
    }
    Ok(p)
}

fn seed_for(cfg: &RunConfig, needed: bool) -> Result<u64> {
    match cfg.seed {
        Some(s) => Ok(s),
        None if needed => Err(CliError::Config("a `seed` is required when randomness is used".into())),
        None => Ok(0),
    }
}

fn load(cfg: &RunConfig) -> Result<(TrialSpec, ObservationTable)> {
    let spec = cfg.spec()?;
    let raw = io::load_observations(data_path(cfg)?, &cfg.schema())?;
    Ok((spec, raw))
}

fn by_group(counts: [usize; 2]) -> Value {
    json!({ "marginalized": counts[1], "referent": counts[0] })
}

/// Shared head of estimate and validate reports.
fn describe(spec: &TrialSpec, table: &ObservationTable) -> Result<serde_json::Map<String, Value>> {
    let q = eligibility_counts(table)?;
    let validation = validate_table(table, spec)?;
    let mut warnings = validation.warnings.clone();
    if !validation.violations.is_empty() {
        warnings.push(format!("{} overlap or positivity violations flagged", validation.violations.len()));
    }
    let Value::Object(m) = json!({
        "spec": to_value(spec)?,
        "n_by_group": by_group(table.count_by_group()),
        "eligibility_counts": { "q_ddagger": q[0], "q_dagger": q[1], "q_prime": q[2], "q": q[3] },
        "validation": to_value(&validation)?,
        "warnings": warnings,
    }) else {
        unreachable!()
    };
    Ok(m)
}

fn estimate_entry(d: &DisparityEstimate) -> Value {
    json!({
        "estimator": d.estimator,
        "tau_r": d.tau_r.value,
        "tau_rprime": d.tau_rprime.value,
        "difference": d.difference,
        "ci": d.ci.map(|(lo, hi)| vec![lo, hi]),
        "weight_diagnostics": d.weight_diagnostics,
        "replicates_failed": d.replicates_failed,
    })
}

fn estimate(cfg: &RunConfig, runner: &RayonRunner) -> Result<Value> {
    let (spec, raw) = load(cfg)?;
    let selection = cfg.time_zero.selection;
    let boot = cfg.analysis.bootstrap.as_ref().filter(|b| b.replicates > 0);
    let seed = seed_for(cfg, boot.is_some() || selection != Default::default())?;
    let inference = cfg.inference(seed);
    if let Some(i) = &inference {
        i.validate()?;
    }
    let table = pipeline::prepare(&raw, &spec, selection, seed)?;
    let mut head = describe(&spec, &table)?;
    let estimates = pipeline::estimate(&raw, &spec, selection, seed, inference.as_ref(), runner)?;

    if let Some(path) = boot.and_then(|b| b.replicates_out.as_ref()) {
        let cols: Vec<(&str, Vec<Option<f64>>)> =
            estimates.iter().map(|d| (d.estimator.name(), d.replicates.clone().unwrap_or_default())).collect();
        let file = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        io::write_replicates(std::io::BufWriter::new(file), &cols)?;
    }

    if let Some(Value::Array(w)) = head.get_mut("warnings") {
        for d in &estimates {
            for msg in &d.warnings {
                let v = Value::String(msg.clone());
                if !w.contains(&v) {
                    w.push(v);
                }
            }
        }
    }
    head.insert("seeds".into(), json!({ "master": seed, "selection": seed, "bootstrap": inference.map(|i| i.seed) }));
    head.insert("estimates".into(), Value::Array(estimates.iter().map(estimate_entry).collect()));
    Ok(Value::Object(head))
}

fn validate(cfg: &RunConfig) -> Result<Value> {
    let (spec, raw) = load(cfg)?;
    let selection = cfg.time_zero.selection;
    let seed = seed_for(cfg, selection != Default::default())?;
    let table = pipeline::prepare(&raw, &spec, selection, seed)?;
    let mut head = describe(&spec, &table)?;
    head.insert("seeds".into(), json!({ "master": seed, "selection": seed }));
    Ok(Value::Object(head))
}

fn sample(cfg: &RunConfig) -> Result<Value> {
    let (spec, raw) = load(cfg)?;
    let seed = seed_for(cfg, true)?;
    let selection = cfg.time_zero.selection;
    let table = pipeline::prepare(&raw, &spec, selection, seed)?;
    let fractions = normalize_fractions(compute_sampling_fractions(&table, &spec, cfg.sizes()?)?)?;
    let drawn = two_phase_sample(&table, &fractions, seed)?;
    let mut realized = [[0usize; 2]; 2];
    for (r, &s) in drawn.table.records.iter().zip(&drawn.stage) {
        realized[usize::from(s - 1)][usize::from(r.group)] += 1;
    }
    // Survivors of stage 2 also survived stage 1.
    let stage1 = [realized[0][0] + realized[1][0], realized[0][1] + realized[1][1]];
    if let Some(path) = &cfg.data_out {
        let stage: ExtraColumn = ("stage".into(), drawn.stage.iter().map(u8::to_string).collect());
        io::save_observations(path, &drawn.table, &[stage])?;
    }
    let Value::Object(f) = to_value(&fractions)? else { unreachable!() };
    Ok(json!({
        "spec": to_value(&spec)?,
        "seeds": { "master": seed, "selection": seed, "sampling": seed },
        "n_by_group": by_group(table.count_by_group()),
        "sizes": f.get("sizes"),
        "exact": fractions.exact,
        "strata": f.get("strata"),
        "realized": { "stage1": by_group(stage1), "stage2": by_group(realized[1]) },
        "warnings": if fractions.exact { vec![] } else { vec!["fractions use fitted-model plug-ins".to_string()] },
    }))
}

fn population(cfg: &RunConfig) -> Result<(SyntheticPopulation, u64)> {
    let mut dag = cfg.dag()?;
    if let Some(s) = cfg.seed {
        dag.seed = s;
    }
    let seed = dag.seed;
    Ok((simulate_population(&dag)?, seed))
}

fn with_intervention(pop: SyntheticPopulation, spec: &TrialSpec, seed: u64) -> Result<SyntheticPopulation> {
    if pop.intervened.is_some() && !spec.partition.w_dagger.is_empty() {
        Ok(apply_stochastic_intervention(pop, spec, seed)?)
    } else {
        Ok(pop)
    }
}

fn truth_entry(pop: &SyntheticPopulation, spec: &TrialSpec, prefix: &str) -> Result<serde_json::Map<String, Value>> {
    let (t1, s1) = true_tau_with_se(pop, spec, 1)?;
    let (t0, s0) = true_tau_with_se(pop, spec, 0)?;
    let mut m = serde_json::Map::new();
    m.insert("proposition".into(), to_value(&spec.proposition)?);
    m.insert(format!("{prefix}tau_r"), json!(t1));
    m.insert(format!("{prefix}tau_rprime"), json!(t0));
    m.insert(format!("{prefix}difference"), json!(t1 - t0));
    m.insert("mc_se".into(), json!((s1 * s1 + s0 * s0).sqrt()));
    Ok(m)
}

fn simulate(cfg: &RunConfig) -> Result<Value> {
    let spec = cfg.spec()?;
    let (pop, seed) = population(cfg)?;
    let pop = with_intervention(pop, &spec, seed)?;
    if let Some(path) = &cfg.data_out {
        io::save_observations(path, &pop.table, &truth_columns(&pop))?;
    }
    let truth = if spec.proposition == Proposition::I || pop.counterfactual.is_some() {
        Value::Object(truth_entry(&pop, &spec, "")?)
    } else {
        Value::Null
    };
    Ok(json!({
        "spec": to_value(&spec)?,
        "dag": to_value(&pop.dag)?,
        "seeds": { "master": seed, "simulation": seed, "intervention": seed },
        "n_by_group": by_group(pop.table.count_by_group()),
        "truth": truth,
        "warnings": Vec::<String>::new(),
    }))
}

/// Hidden potential values appended to the simulated CSV.
fn truth_columns(pop: &SyntheticPopulation) -> Vec<ExtraColumn> {
    let fmt = |v: &[f64]| v.iter().map(|&x| io::fmt_num(x)).collect::<Vec<_>>();
    let mut out = Vec::new();
    if let Some(py) = &pop.potential_y {
        out.push(("truth_y_w0".to_string(), fmt(&py[0])));
        out.push(("truth_y_w1".to_string(), fmt(&py[1])));
    }
    for (col, pv) in &pop.potential_post {
        let name = &pop.table.columns[*col].name;
        out.push((format!("truth_{name}_w0"), fmt(&pv[0])));
        out.push((format!("truth_{name}_w1"), fmt(&pv[1])));
    }
    if let (Some(cf), Some(w)) = (&pop.counterfactual, pop.intervened) {
        let name = &pop.table.columns[w].name;
        out.push((format!("truth_{name}_g"), cf.records.iter().map(|r| io::fmt_num(r.values[w])).collect()));
        out.push(("truth_y_g".to_string(), cf.records.iter().map(|r| io::fmt_num(r.outcome)).collect()));
    }
    out
}

/// Ground truth next to the estimators for every proposition the
/// configured eligibility supports.
fn oracle(cfg: &RunConfig) -> Result<Value> {
    let base = cfg.spec()?;
    let (pop, seed) = population(cfg)?;
    let pop = with_intervention(pop, &base, seed)?;
    let selection = cfg.time_zero.selection;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for p in [Proposition::I, Proposition::II, Proposition::III, Proposition::IV] {
        let spec = TrialSpec { proposition: p, ..base.clone() };
        if let Err(e) = spec.validate() {
            skipped.push(json!({ "proposition": p, "reason": e.to_string() }));
            continue;
        }
        let mut entry = truth_entry(&pop, &spec, "true_")?;
        let table = pipeline::prepare(&pop.table, &spec, selection, seed)?;
        let est = estimate_disparity(&table, &spec)?.iter().map(estimate_entry).collect();
        entry.insert("estimates".into(), Value::Array(est));
        rows.push(Value::Object(entry));
    }
    Ok(json!({
        "spec": to_value(&base)?,
        "dag": to_value(&pop.dag)?,
        "seeds": { "master": seed, "simulation": seed, "intervention": seed, "selection": seed },
        "n_by_group": by_group(pop.table.count_by_group()),
        "propositions": rows,
        "skipped": skipped,
        "warnings": Vec::<String>::new(),
    }))
}
