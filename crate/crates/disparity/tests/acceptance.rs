//! Acceptance criteria 1 to 9, one PASS/FAIL line each.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use disparity::io::save_observations;
use disparity_core::data_model::{
    Criterion, EstimatorKind, ObservationTable, Prop3Weights, Proposition, StandardPopulation, TrialSpec,
};
use disparity_core::emulation::SelectionMode;
use disparity_core::estimators::{compute_weights, estimate_tau_ice, estimate_tau_weighting, WeightDiagnostics};
use disparity_core::inference::{InferenceConfig, Sequential};
use disparity_core::numerics::{fit_glm, log_likelihood, predict, score, Family, IrlsOptions};
use disparity_core::oracle_sim::presets::{INTERVENED, NON_ALLOWABLE, POST};
use disparity_core::oracle_sim::{
    apply_stochastic_intervention, brute_force_identify, fig2b, fig2c, fixture_dag, fixture_spec, null_dag,
    preset_spec, simulate_population, true_tau_with_se, DagConfig, SyntheticPopulation,
};
use disparity_core::pipeline;
use disparity_core::sampling_design::{compute_sampling_fractions, normalize_fractions, two_phase_sample, DesignSizes};
use nalgebra::DMatrix;
use rayon::prelude::*;

type Check = Result<String, String>;

/// Name, check and runtime budget.
type Entry = (&'static str, fn() -> Check, Duration);

const PROPS: [Proposition; 4] = [Proposition::I, Proposition::II, Proposition::III, Proposition::IV];

fn prepared(table: &ObservationTable, spec: &TrialSpec) -> ObservationTable {
    pipeline::prepare(table, spec, SelectionMode::PerTimeUnit, 0).expect("prepare")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture() -> SyntheticPopulation {
    simulate_population(&fixture_dag(500, 11)).expect("fixture")
}

/// Weighting and ICE differences.
fn both(t: &ObservationTable, spec: &TrialSpec) -> Result<[f64; 2], String> {
    let d = |f: fn(
        &ObservationTable,
        &TrialSpec,
        u8,
    ) -> disparity_core::Result<disparity_core::estimators::TauEstimate>| {
        Ok::<f64, String>(
            f(t, spec, 1).map_err(|e| e.to_string())?.value - f(t, spec, 0).map_err(|e| e.to_string())?.value,
        )
    };
    Ok([d(estimate_tau_weighting)?, d(estimate_tau_ice)?])
}

fn c1_oracle_equivalence() -> Check {
    let pop = fixture();
    let mut worst: f64 = 0.0;
    for prop in PROPS {
        let spec = fixture_spec(prop);
        let t = prepared(&pop.table, &spec);
        for g in [0u8, 1] {
            let bf = brute_force_identify(&t, &spec, prop, g).map_err(|e| e.to_string())?;
            let w = estimate_tau_weighting(&t, &spec, g).map_err(|e| e.to_string())?.value;
            let ice = estimate_tau_ice(&t, &spec, g).map_err(|e| e.to_string())?.value;
            for (label, v) in [("weighting", w), ("ice", ice)] {
                ensure((v - bf).abs() < 1e-10, || format!("{prop:?} R={g} {label} {v} vs counting {bf}"))?;
            }
            ensure((w - ice).abs() < 1e-10, || format!("{prop:?} R={g} weighting {w} vs ice {ice}"))?;
            worst = worst.max((w - bf).abs()).max((ice - bf).abs());
        }
    }
    Ok(format!("{} records, 4 propositions, max deviation {worst:.1e}", pop.table.len()))
}

fn c2_reductions() -> Check {
    let pop = fixture();
    let close = |a: [f64; 2], b: [f64; 2], what: &str| {
        ensure((a[0] - b[0]).abs() < 1e-10 && (a[1] - b[1]).abs() < 1e-10, || format!("{what}: {a:?} vs {b:?}"))
    };
    let run = |s: &TrialSpec| both(&prepared(&pop.table, s), s);

    let mut no_n = fixture_spec(Proposition::II);
    no_n.non_allowables.clear();
    let prop1 = TrialSpec { proposition: Proposition::I, ..no_n.clone() };
    close(run(&no_n)?, run(&prop1)?, "Prop II with empty N vs Prop I")?;

    let prop2 = run(&fixture_spec(Proposition::II))?;
    for prop in [Proposition::III, Proposition::IV] {
        let mut s = fixture_spec(prop);
        s.partition.w_prime = vec![Criterion::values(POST, &[0.0, 1.0])];
        close(run(&s)?, prop2, &format!("{prop:?} with trivial W′ vs Prop II"))?;
    }

    let std3 = fixture_spec(Proposition::III);
    let alt3 = TrialSpec { prop3_weights: Prop3Weights::Alternate, ..std3.clone() };
    let t = prepared(&pop.table, &std3);
    for g in [0u8, 1] {
        let a = estimate_tau_weighting(&t, &std3, g).map_err(|e| e.to_string())?.value;
        let b = estimate_tau_weighting(&t, &alt3, g).map_err(|e| e.to_string())?.value;
        ensure((a - b).abs() < 1e-10, || format!("Prop III weights R={g}: {a} vs alternate {b}"))?;
    }
    Ok("II(N empty)=I, III/IV(trivial W′)=II, standard=alternate Prop III weights".into())
}

/// Linearized standard error of a Hájek mean.
fn hajek_se(t: &ObservationTable, spec: &TrialSpec, g: u8, tau: f64) -> f64 {
    let w = compute_weights(t, spec, g).expect("weights");
    let total: f64 = w.weights.iter().sum();
    let ss: f64 = w.rows.iter().zip(&w.weights).map(|(&i, wi)| (wi * (t.records[i].outcome - tau)).powi(2)).sum();
    ss.sqrt() / total
}

/// True difference and its Monte Carlo standard error.
fn truth(pop: &SyntheticPopulation, spec: &TrialSpec) -> (f64, f64) {
    let (t1, s1) = true_tau_with_se(pop, spec, 1).expect("truth");
    let (t0, s0) = true_tau_with_se(pop, spec, 0).expect("truth");
    (t1 - t0, (s1 * s1 + s0 * s0).sqrt())
}

fn c3_simulation() -> Check {
    let n = 100_000;
    let cases = [
        (fig2b(n, 3), Proposition::I, "fig2b"),
        (fig2b(n, 3), Proposition::II, "fig2b"),
        (fig2c(n, 3, false), Proposition::III, "fig2c without W†→W′"),
        (fig2c(n, 3, true), Proposition::IV, "fig2c with W†→W′"),
    ];
    let mut zs = Vec::new();
    for (dag, prop, label) in cases {
        let spec = preset_spec(prop);
        let pop =
            apply_stochastic_intervention(simulate_population(&dag).expect("simulate"), &spec, 99).expect("intervene");
        let t = prepared(&pop.table, &spec);
        let (true_diff, se_truth) = truth(&pop, &spec);
        let est = both(&t, &spec)?;
        let se_est: f64 = [0u8, 1]
            .iter()
            .map(|&g| hajek_se(&t, &spec, g, estimate_tau_weighting(&t, &spec, g).expect("tau").value).powi(2))
            .sum::<f64>()
            .sqrt();
        let se = (se_est * se_est + se_truth * se_truth).sqrt();
        for (name, e) in ["weighting", "ice"].iter().zip(est) {
            let z = (e - true_diff) / se;
            ensure(z.abs() < 3.0, || {
                format!("{prop:?} on {label}: {name} {e:.4} vs truth {true_diff:.4}, z = {z:.2}")
            })?;
            zs.push(format!("{prop:?}/{name} z={z:+.2}"));
        }
    }
    Ok(zs.join(", "))
}

fn set(dag: &mut DagConfig, child: &str, intercept: f64, coefs: &[(&str, f64)]) {
    let node = dag.node_mut(child).expect("node");
    node.intercept = intercept;
    for &(parent, coef) in coefs {
        node.parents.iter_mut().find(|t| t.parent == parent).expect("edge").coef = coef;
    }
}

/// L rare in the referent group and common in the marginalized one, and
/// W† strongly selective on L, so selection shifts L unequally by group.
fn strong_selection(mut dag: DagConfig) -> DagConfig {
    set(&mut dag, NON_ALLOWABLE, -3.0, &[("r", 3.0)]);
    set(&mut dag, INTERVENED, -2.0, &[(NON_ALLOWABLE, 3.0)]);
    set(&mut dag, "y", -1.0, &[(NON_ALLOWABLE, 2.5)]);
    dag
}

fn c4_selection_contrast() -> Check {
    let n = 100_000;
    let mut spec2 = preset_spec(Proposition::II);
    spec2.estimator = EstimatorKind::Weighting;
    let spec1 = TrialSpec { proposition: Proposition::I, non_allowables: Vec::new(), ..spec2.clone() };
    let contrast = |dag| {
        let pop =
            apply_stochastic_intervention(simulate_population(&dag).expect("simulate"), &spec2, 7).expect("intervene");
        let (d1, s1) = truth(&pop, &spec1);
        let (d2, s2) = truth(&pop, &spec2);
        (d1, d2, (d1 - d2) / (s1 * s1 + s2 * s2).sqrt())
    };
    let dag = strong_selection(fig2b(n, 5));
    let (d1, d2, z) = contrast(dag.clone());
    ensure(z.abs() > 3.0, || format!("with L→W†: Prop I {d1:.4} vs Prop II {d2:.4}, z = {z:.2}"))?;
    let mut cut = dag;
    cut.removed_edges.push((NON_ALLOWABLE.into(), INTERVENED.into()));
    let (e1, e2, z0) = contrast(cut);
    ensure(z0.abs() < 3.0, || format!("without L→W†: Prop I {e1:.4} vs Prop II {e2:.4}, z = {z0:.2}"))?;
    Ok(format!("with L→W† I={d1:.4} II={d2:.4} z={z:.1}; without I={e1:.4} II={e2:.4} z={z0:.2}"))
}

fn c5_weight_diagnostics() -> Check {
    let spec = preset_spec(Proposition::I);
    ensure(spec.standard == StandardPopulation::MarginalizedGroup, || "preset standard changed".into())?;
    let pop = simulate_population(&fig2b(100_000, 8)).expect("simulate");
    let t = prepared(&pop.table, &spec);
    let w1 = compute_weights(&t, &spec, 1).map_err(|e| e.to_string())?;
    ensure(w1.weights.iter().all(|&w| w == 1.0), || "a marginalized-group weight differs from 1".into())?;
    let w0 = compute_weights(&t, &spec, 0).map_err(|e| e.to_string())?;
    let all: Vec<f64> = w1.weights.iter().chain(&w0.weights).copied().collect();
    let d = WeightDiagnostics::of(&all);
    ensure((d.mean - 1.0).abs() < 0.005, || format!("weight mean {}", d.mean))?;
    Ok(format!("{} weights, mean {:.4}, range [{:.2}, {:.2}]", d.count, d.mean, d.min, d.max))
}

/// Distribution of the allowables over a set of rows.
fn a_dist(t: &ObservationTable, spec: &TrialSpec, rows: impl Iterator<Item = usize>) -> Vec<(Vec<u64>, f64)> {
    let cols: Vec<usize> = spec.allowables.iter().map(|c| t.column_index(&c.name).expect("allowable")).collect();
    let mut m = std::collections::BTreeMap::<Vec<u64>, f64>::new();
    let mut total = 0.0;
    for i in rows {
        *m.entry(cols.iter().map(|&c| t.records[i].values[c].to_bits()).collect()).or_default() += 1.0;
        total += 1.0;
    }
    m.into_iter().map(|(k, v)| (k, v / total)).collect()
}

fn tv(p: &[(Vec<u64>, f64)], q: &[(Vec<u64>, f64)]) -> f64 {
    let mut keys: Vec<&Vec<u64>> = p.iter().chain(q).map(|(k, _)| k).collect();
    keys.sort();
    keys.dedup();
    let get = |d: &[(Vec<u64>, f64)], k: &Vec<u64>| d.iter().find(|(x, _)| x == k).map_or(0.0, |(_, v)| *v);
    keys.iter().map(|k| (get(p, k) - get(q, k)).abs()).sum::<f64>() / 2.0
}

fn c6_two_phase() -> Check {
    let big = simulate_population(&fixture_dag(200_000, 21)).expect("simulate");
    let mut tvs = Vec::new();
    for prop in [Proposition::I, Proposition::II] {
        let spec = fixture_spec(prop);
        let t = prepared(&big.table, &spec);
        let n0 = t.len() as f64;
        let f = normalize_fractions(
            compute_sampling_fractions(&t, &spec, DesignSizes::uniform(n0, n0 / 2.0, n0 / 4.0))
                .map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let s = two_phase_sample(&t, &f, 4).map_err(|e| e.to_string())?;
        let standard = a_dist(&t, &spec, (0..t.len()).filter(|&i| t.records[i].standard == Some(true)));
        let rows = (0..s.table.len()).filter(|&k| s.stage[k] == 2 && s.table.records[k].group == 0);
        let sampled = a_dist(&s.table, &spec, rows);
        let d = tv(&sampled, &standard);
        ensure(d < 0.02, || format!("{prop:?}: TV {d:.4}"))?;
        tvs.push(format!("{prop:?} TV={d:.4}"));
    }

    let pop = fixture();
    let mut worst: f64 = 0.0;
    for prop in PROPS {
        let spec = fixture_spec(prop);
        let t = prepared(&pop.table, &spec);
        let f = compute_sampling_fractions(&t, &spec, DesignSizes::uniform(1000.0, 500.0, 200.0))
            .map_err(|e| e.to_string())?;
        for g in [0u8, 1] {
            let w = compute_weights(&t, &spec, g).map_err(|e| e.to_string())?;
            let mut ratio = None;
            for (k, &row) in w.rows.iter().enumerate() {
                let st = &f.strata[f.record_stratum[row].ok_or("eligible row outside the frame")?];
                let design = st.stage1 * st.stage2;
                if w.weights[k] == 0.0 {
                    ensure(design.abs() < 1e-12, || format!("{prop:?} R={g}: zero weight, design {design}"))?;
                    continue;
                }
                let r = design / w.weights[k];
                let r0 = *ratio.get_or_insert(r);
                let rel = (r - r0).abs() / r0.abs();
                worst = worst.max(rel);
                ensure(rel < 1e-10, || format!("{prop:?} R={g}: design/weight ratio {r} vs {r0}"))?;
            }
        }
    }
    Ok(format!("{}; design ∝ weight, max relative spread {worst:.1e}", tvs.join(", ")))
}

fn c7_coverage() -> Check {
    let reps = 200;
    let spec = TrialSpec { estimator: EstimatorKind::Weighting, ..preset_spec(Proposition::II) };
    let results: Vec<Result<(f64, f64), String>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let pop = simulate_population(&null_dag(600, 1000 + rep, 30)).map_err(|e| e.to_string())?;
            let cfg = InferenceConfig { replicates: 500, seed: rep, ..Default::default() };
            let est = pipeline::estimate(&pop.table, &spec, SelectionMode::PerTimeUnit, rep, Some(&cfg), &Sequential)
                .map_err(|e| e.to_string())?;
            est[0].ci.ok_or_else(|| "no interval".to_string())
        })
        .collect();
    let mut covered = 0;
    for r in &results {
        let (lo, hi) = r.clone()?;
        covered += usize::from(lo <= 0.0 && 0.0 <= hi);
    }
    let rate = covered as f64 / reps as f64;
    ensure((0.90..=1.0).contains(&rate), || format!("coverage {rate:.3}"))?;
    Ok(format!("{covered}/{reps} intervals cover 0 ({rate:.3})"))
}

fn c8_numerics() -> Check {
    let (n, p) = (300, 4);
    let x =
        DMatrix::from_fn(
            n,
            p,
            |i, j| if j == 0 { 1.0 } else { ((i * (j + 2)) as f64 * 0.37 + j as f64).sin() * j as f64 },
        );
    let y: Vec<f64> =
        (0..n).map(|i| f64::from(u8::from(((i * 31) as f64 * 0.11).cos() + x[(i, 1)] * 0.5 > 0.0))).collect();
    let beta = [0.2, -0.4, 0.3, 0.1];
    let g = score(&x, &y, None, &beta, Family::Binomial);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..p {
        let (mut up, mut dn) = (beta, beta);
        up[j] += h;
        dn[j] -= h;
        let fd = (log_likelihood(&x, &y, None, &up) - log_likelihood(&x, &y, None, &dn)) / (2.0 * h);
        let rel = (fd - g[j]).abs() / g[j].abs().max(1e-8);
        worst = worst.max(rel);
        ensure(rel < 1e-5, || format!("score[{j}] {} vs finite difference {fd}", g[j]))?;
    }

    // Six cells with indicator columns: fitted values are the cell means.
    let cells = 6;
    let cell = |i: usize| (i * 5 + i / 7) % cells;
    let d = DMatrix::from_fn(n, cells, |i, j| f64::from(u8::from(cell(i) == j)));
    let fit = fit_glm(&d, &y, None, Family::Binomial, IrlsOptions::default()).map_err(|e| e.to_string())?;
    let fitted = predict(&fit, &d).map_err(|e| e.to_string())?;
    for c in 0..cells {
        let rows: Vec<usize> = (0..n).filter(|&i| cell(i) == c).collect();
        let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
        ensure((fitted[rows[0]] - mean).abs() < 1e-8, || {
            format!("cell {c}: fitted {} vs mean {mean}", fitted[rows[0]])
        })?;
    }

    let w: Vec<f64> = (0..n).map(|i| (1 + i % 3) as f64).collect();
    let weighted = fit_glm(&x, &y, Some(&w), Family::Binomial, IrlsOptions::default()).map_err(|e| e.to_string())?;
    let reps: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat(i).take(w[i] as usize)).collect();
    let xr = DMatrix::from_fn(reps.len(), p, |k, j| x[(reps[k], j)]);
    let yr: Vec<f64> = reps.iter().map(|&i| y[i]).collect();
    let replicated = fit_glm(&xr, &yr, None, Family::Binomial, IrlsOptions::default()).map_err(|e| e.to_string())?;
    for (a, b) in weighted.coefficients.iter().zip(&replicated.coefficients) {
        ensure((a - b).abs() < 1e-8, || format!("weighted {a} vs replicated {b}"))?;
    }
    Ok(format!("score max relative error {worst:.1e}; cell means and replication identities hold"))
}

fn c9_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pop = simulate_population(&null_dag(1500, 77, 40)).map_err(|e| e.to_string())?;
    save_observations(&dir.path().join("data.csv"), &pop.table, &[]).map_err(|e| e.to_string())?;
    let config = serde_json::json!({
        "mode": "estimate",
        "data": "data.csv",
        "seed": 2024,
        "covariates": [
            {"name": "x", "kind": "binary"}, {"name": "l", "kind": "binary"},
            {"name": "w_pre", "kind": "binary"}, {"name": "w_int", "kind": "binary"}
        ],
        "eligibility": {"pre": [{"variable": "w_pre", "values": [1]}], "intervened": [{"variable": "w_int", "values": [1]}]},
        "allowables": ["x"],
        "non_allowables": ["l"],
        "standard": "marginalized_group",
        "analysis": {"proposition": "II", "estimator": "both", "model": "main_effects", "bootstrap": {"replicates": 200}}
    });
    std::fs::write(dir.path().join("run.json"), config.to_string()).map_err(|e| e.to_string())?;
    let run = |workers: usize, out: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_disparity"))
            .arg("--config")
            .arg(dir.path().join("run.json"))
            .arg("--out")
            .arg(&out)
            .args(["--workers", &workers.to_string()])
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("exit status {status}"))?;
        std::fs::read(&out).map_err(|e| e.to_string())
    };
    let a = run(1, "a.json")?;
    let b = run(1, "b.json")?;
    let c = run(4, "c.json")?;
    ensure(a == b, || "two runs with the same seed differ".into())?;
    ensure(a == c, || "1 and 4 workers differ".into())?;
    let report: serde_json::Value = serde_json::from_slice(&a).map_err(|e| e.to_string())?;
    ensure(report["estimates"][0]["ci"].is_array(), || "report lacks a CI".into())?;
    ensure(disparity::report::render(&report).map_err(|e| e.to_string())?.as_bytes() == a, || {
        "re-render differs".into()
    })?;
    Ok(format!("{} bytes identical across 2 runs and 1/4 workers", a.len()))
}

fn main() {
    let checks: [Entry; 9] = [
        ("discrete-table oracle equivalence", c1_oracle_equivalence, Duration::from_secs(1)),
        ("reduction identities", c2_reductions, Duration::from_secs(1)),
        ("simulation consistency", c3_simulation, Duration::from_secs(120)),
        ("selection-mechanism contrast", c4_selection_contrast, Duration::from_secs(120)),
        ("weight diagnostics", c5_weight_diagnostics, Duration::from_secs(60)),
        ("two-phase design", c6_two_phase, Duration::from_secs(60)),
        ("bootstrap coverage", c7_coverage, Duration::from_secs(900)),
        ("numerics", c8_numerics, Duration::from_secs(60)),
        ("determinism", c9_determinism, Duration::from_secs(300)),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (k, (name, check, limit)) in checks.into_iter().enumerate() {
        let id = k + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let took = start.elapsed();
        let result = result.and_then(|d| if took <= limit { Ok(d) } else { Err(format!("{d}; exceeded {limit:?}")) });
        match result {
            Ok(detail) => println!("PASS {id}. {name}: {detail} [{:.2}s]", took.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id}. {name}: {detail} [{:.2}s]", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
