use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::dag::{DagConfig, Link, NodeSpec, Role};
use crate::data_model::{ColumnKind, ColumnMeta, ObservationTable, OutcomeKind, Record};
use crate::numerics::expit;
use crate::rng;
use crate::{Error, Result};

/// Simulated table plus the hidden truth needed for ground-truth τ.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation {
    pub dag: DagConfig,
    pub table: ObservationTable,
    /// Column of the W† node, if the DAG has one.
    pub intervened: Option<usize>,
    /// Y(w†) for w† = 0, 1.
    pub potential_y: Option<[Vec<f64>; 2]>,
    /// W′(w†) for every post-eligibility column, w† = 0, 1.
    pub potential_post: Vec<(usize, [Vec<f64>; 2])>,
    /// Table under the stochastic intervention: W† redrawn, W′ and Y taken
    /// from the stored potential values, no flags yet.
    pub counterfactual: Option<ObservationTable>,
}

struct Compiled {
    link: Link,
    intercept: f64,
    terms: Vec<(usize, f64)>,
    interactions: Vec<(usize, usize, f64)>,
    noise_sd: f64,
    cluster_effects: Vec<f64>,
}

fn compile(dag: &DagConfig) -> Vec<Compiled> {
    let idx = |name: &str| dag.nodes.iter().position(|n| n.name == name).unwrap_or(usize::MAX);
    dag.nodes
        .iter()
        .enumerate()
        .map(|(k, node): (usize, &NodeSpec)| {
            let terms = node
                .parents
                .iter()
                .filter(|t| !dag.is_removed(&t.parent, &node.name))
                .map(|t| (idx(&t.parent), t.coef))
                .collect();
            let interactions = node
                .interactions
                .iter()
                .filter(|t| !dag.is_removed(&t.a, &node.name) && !dag.is_removed(&t.b, &node.name))
                .map(|t| (idx(&t.a), idx(&t.b), t.coef))
                .collect();
            let mut g = rng::stream(rng::derive_seed(dag.seed, u64::MAX), k as u64);
            let cluster_effects = (0..dag.clusters)
                .map(|_| if node.cluster_sd > 0.0 { node.cluster_sd * g.sample::<f64, _>(StandardNormal) } else { 0.0 })
                .collect();
            Compiled {
                link: node.link,
                intercept: node.intercept,
                terms,
                interactions,
                noise_sd: node.noise_sd,
                cluster_effects,
            }
        })
        .collect()
}

fn evaluate(c: &Compiled, values: &[f64], noise: f64, cluster: usize) -> f64 {
    let mut lin = c.intercept + c.cluster_effects[cluster];
    for &(p, b) in &c.terms {
        lin += b * values[p];
    }
    for &(p, q, b) in &c.interactions {
        lin += b * values[p] * values[q];
    }
    match c.link {
        Link::Logistic => f64::from(u8::from(noise < expit(lin))),
        Link::Linear => lin + c.noise_sd * noise,
        Link::Identity => lin,
    }
}

/// Ancestral sampling with one exogenous draw per node per record. The
/// draws are reused when W† is forced, so Y(w†) and W′(w†) share noise with
/// the observed world and equal the observed values when W† = w†.
pub fn simulate_population(dag: &DagConfig) -> Result<SyntheticPopulation> {
    dag.validate()?;
    let compiled = compile(dag);
    let k = dag.nodes.len();
    let role = |r: Role| dag.nodes.iter().position(|n| n.role == r);
    let group_node = role(Role::Group).ok_or_else(|| Error::BadDag("no group node".into()))?;
    let outcome_node = role(Role::Outcome).ok_or_else(|| Error::BadDag("no outcome node".into()))?;
    let int_node = role(Role::Intervened);

    let exported: Vec<usize> =
        (0..k).filter(|&j| !matches!(dag.nodes[j].role, Role::History | Role::Group | Role::Outcome)).collect();
    let columns: Vec<ColumnMeta> = exported
        .iter()
        .map(|&j| {
            let kind = if dag.nodes[j].link == Link::Logistic { ColumnKind::Binary } else { ColumnKind::Continuous };
            ColumnMeta::new(dag.nodes[j].name.clone(), kind)
        })
        .collect();
    let col_of = |node: usize| exported.iter().position(|&j| j == node);
    let post_cols: Vec<(usize, usize)> =
        (0..k).filter(|&j| dag.nodes[j].role == Role::Post).filter_map(|j| col_of(j).map(|c| (j, c))).collect();
    let outcome_kind =
        if dag.nodes[outcome_node].link == Link::Logistic { OutcomeKind::Binary } else { OutcomeKind::Continuous };

    let mut records = Vec::with_capacity(dag.n);
    let mut py = [Vec::new(), Vec::new()];
    let mut ppost: Vec<[Vec<f64>; 2]> = post_cols.iter().map(|_| [Vec::new(), Vec::new()]).collect();
    let mut values = vec![0.0; k];
    let mut noise = vec![0.0; k];
    for i in 0..dag.n {
        let cluster = i % dag.clusters;
        let mut g = rng::stream(dag.seed, i as u64);
        for (j, c) in compiled.iter().enumerate() {
            noise[j] = match c.link {
                Link::Logistic => g.gen::<f64>(),
                Link::Linear => g.sample(StandardNormal),
                Link::Identity => 0.0,
            };
        }
        for j in 0..k {
            values[j] = evaluate(&compiled[j], &values, noise[j], cluster);
        }
        if let Some(w) = int_node {
            for forced in 0..2 {
                let mut cf = values.clone();
                cf[w] = forced as f64;
                for j in w + 1..k {
                    cf[j] = evaluate(&compiled[j], &cf, noise[j], cluster);
                }
                py[forced].push(cf[outcome_node]);
                for (slot, &(node, _)) in ppost.iter_mut().zip(&post_cols) {
                    slot[forced].push(cf[node]);
                }
            }
        }
        records.push(Record {
            person_id: format!("{i}"),
            visit_id: String::from("1"),
            cluster_id: format!("c{cluster}"),
            time_unit: 0,
            group: values[group_node] as u8,
            outcome: values[outcome_node],
            values: exported.iter().map(|&j| values[j]).collect(),
            flags: None,
            standard: None,
        });
    }
    let table = ObservationTable::new(columns, outcome_kind, records)?;
    Ok(SyntheticPopulation {
        dag: dag.clone(),
        table,
        intervened: int_node.and_then(col_of),
        potential_y: int_node.map(|_| py),
        potential_post: post_cols.iter().map(|&(_, c)| c).zip(ppost).collect(),
        counterfactual: None,
    })
}
