//! Ready-made graphs. Coefficients are a modelling choice: the figures fix
//! the topology only.

use alloc::vec;
use alloc::vec::Vec;

use super::dag::{DagConfig, NodeSpec, Role};
use crate::data_model::{
    Covariate, Criterion, EligibilityPartition, EstimatorKind, ModelForm, Prop3Weights, Proposition, Scale,
    StandardPopulation, TrialSpec,
};

/// Column names used by every preset.
pub const ALLOWABLE: &str = "x";
pub const NON_ALLOWABLE: &str = "l";
pub const PRE: &str = "w_pre";
pub const INTERVENED: &str = "w_int";
pub const POST: &str = "w_post";

fn base(with_r: f64) -> Vec<NodeSpec> {
    vec![
        NodeSpec::logistic("h", Role::History, 0.0, &[]),
        NodeSpec::logistic("r", Role::Group, -0.2, &[("h", 0.8 * with_r)]),
        NodeSpec::logistic(ALLOWABLE, Role::Allowable, -0.2, &[("h", 0.8)]),
        NodeSpec::logistic(NON_ALLOWABLE, Role::NonAllowable, -0.3, &[("r", 0.7 * with_r), ("h", 0.6)]),
        NodeSpec::logistic(PRE, Role::Pre, 2.0, &[(ALLOWABLE, 0.3), ("r", -0.3 * with_r)]),
    ]
}

/// H → (R, X, L), W‡ ← (X, R), W† ← (X, R, L), Y ← (X, R, L, W†).
/// The L → W† edge carries the selective mechanism.
pub fn fig2b(n: usize, seed: u64) -> DagConfig {
    let mut nodes = base(1.0);
    nodes.push(NodeSpec::logistic(
        INTERVENED,
        Role::Intervened,
        -0.2,
        &[(ALLOWABLE, 0.4), ("r", -0.4), (NON_ALLOWABLE, 1.5)],
    ));
    nodes.push(NodeSpec::logistic(
        "y",
        Role::Outcome,
        -1.0,
        &[(ALLOWABLE, 0.5), ("r", 0.4), (NON_ALLOWABLE, 1.2), (INTERVENED, 0.5)],
    ));
    DagConfig { nodes, removed_edges: Vec::new(), n, seed, clusters: 1 }
}

/// [`fig2b`] plus W′ ← (X, L, R), and W† → W′ when `prime_affected`.
pub fn fig2c(n: usize, seed: u64, prime_affected: bool) -> DagConfig {
    let mut dag = fig2b(n, seed);
    let w_int = if prime_affected { 1.0 } else { 0.0 };
    let post = NodeSpec::logistic(
        POST,
        Role::Post,
        0.3,
        &[(ALLOWABLE, 0.3), (NON_ALLOWABLE, 0.8), ("r", -0.3), (INTERVENED, w_int)],
    );
    let y = dag.nodes.len() - 1;
    dag.nodes.insert(y, post);
    dag
}

/// Every coefficient on R is zero, so the true disparity is zero under any
/// proposition. Y carries a cluster random intercept.
pub fn null_dag(n: usize, seed: u64, clusters: usize) -> DagConfig {
    let mut nodes = base(0.0);
    nodes[1] = NodeSpec::logistic("r", Role::Group, 0.0, &[]);
    nodes.push(NodeSpec::logistic(INTERVENED, Role::Intervened, 0.5, &[(ALLOWABLE, 0.4), (NON_ALLOWABLE, 1.0)]));
    let mut y = NodeSpec::logistic("y", Role::Outcome, -0.5, &[(ALLOWABLE, 0.5), (NON_ALLOWABLE, 1.0)]);
    y.cluster_sd = 0.5;
    nodes.push(y);
    DagConfig { nodes, removed_edges: Vec::new(), n, seed, clusters }
}

/// The trial matching the presets: A = {x}, N = {l}, standard = the
/// marginalized group, saturated models.
pub fn preset_spec(proposition: Proposition) -> TrialSpec {
    let mut partition = EligibilityPartition { w_ddagger: vec![Criterion::values(PRE, &[1.0])], ..Default::default() };
    if proposition != Proposition::I {
        partition.w_dagger = vec![Criterion::values(INTERVENED, &[1.0])];
    }
    if matches!(proposition, Proposition::III | Proposition::IV) {
        partition.w_prime = vec![Criterion::values(POST, &[1.0])];
        partition.prime_affected_by_dagger = proposition == Proposition::IV;
    }
    TrialSpec {
        partition,
        allowables: vec![Covariate::new(ALLOWABLE)],
        non_allowables: vec![Covariate::new(NON_ALLOWABLE)],
        standard: StandardPopulation::MarginalizedGroup,
        proposition,
        estimator: EstimatorKind::Both,
        model: ModelForm::Saturated,
        prop3_weights: Prop3Weights::Standard,
        truncation: None,
        scale: Scale::Difference,
    }
}

pub const ALLOWABLE_2: &str = "x2";

/// A small all-binary population: A = {x, x2}, N = {l}, with W‡, W†, W′ and
/// a W† → W′ edge. Used for exact identities, not for truth.
pub fn fixture_dag(n: usize, seed: u64) -> DagConfig {
    let mut dag = fig2c(n, seed, true);
    dag.nodes.insert(3, NodeSpec::logistic(ALLOWABLE_2, Role::Allowable, 0.1, &[("h", -0.5)]));
    for node in dag.nodes.iter_mut().filter(|n| matches!(n.role, Role::Intervened | Role::Outcome)) {
        node.parents.push(super::dag::Term { parent: ALLOWABLE_2.into(), coef: 0.4 });
    }
    dag
}

/// [`preset_spec`] with both allowables of [`fixture_dag`].
pub fn fixture_spec(proposition: Proposition) -> TrialSpec {
    let mut spec = preset_spec(proposition);
    spec.allowables.push(Covariate::new(ALLOWABLE_2));
    spec
}
