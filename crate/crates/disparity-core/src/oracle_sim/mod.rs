//! Structural-equation simulator with potential outcomes, the stochastic
//! eligibility intervention, ground-truth τ(r) and a counting evaluator of
//! the identifying formulas.

mod dag;
mod identify;
mod intervention;
pub mod presets;
mod simulate;
mod truth;

use alloc::vec::Vec;

pub use dag::{DagConfig, Interaction, Link, NodeSpec, Role, Term};
pub use identify::{brute_force_identify, densities, Stratum};
pub use intervention::apply_stochastic_intervention;
pub use presets::{fig2b, fig2c, fixture_dag, fixture_spec, null_dag, preset_spec};
pub use simulate::{simulate_population, SyntheticPopulation};
pub use truth::{true_tau, true_tau_with_se};

use crate::data_model::{ObservationTable, VarRef};
use crate::Result;

/// Exact-value key; -0.0 and 0.0 share a cell.
pub(crate) fn bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

pub(crate) fn resolve_all<'a>(table: &ObservationTable, names: impl Iterator<Item = &'a str>) -> Result<Vec<VarRef>> {
    names.map(|n| table.resolve(n)).collect()
}

pub(crate) fn cell_key(table: &ObservationTable, row: usize, vars: &[VarRef]) -> Vec<u64> {
    vars.iter().map(|&v| bits(table.value(row, v))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::Proposition;
    use crate::Error;

    #[test]
    fn potential_values_agree_with_observed_world() {
        let pop = simulate_population(&fig2c(3000, 5, true)).unwrap();
        let w = pop.intervened.unwrap();
        let py = pop.potential_y.as_ref().unwrap();
        assert_eq!(pop.potential_post.len(), 1);
        let (post, pw) = &pop.potential_post[0];
        for (i, r) in pop.table.records.iter().enumerate() {
            let k = r.values[w] as usize;
            assert_eq!(py[k][i], r.outcome);
            assert_eq!(pw[k][i], r.values[*post]);
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let a = simulate_population(&fig2b(500, 9)).unwrap();
        let b = simulate_population(&fig2b(500, 9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.table, simulate_population(&fig2b(500, 10)).unwrap().table);
    }

    #[test]
    fn ordering_violations_rejected() {
        let mut dag = fig2b(10, 1);
        dag.nodes[2].parents.push(Term { parent: "y".into(), coef: 1.0 });
        assert!(matches!(simulate_population(&dag), Err(Error::BadDag(_))));
        let mut dag = fig2b(10, 1);
        dag.nodes.swap(5, 6);
        assert!(matches!(dag.validate(), Err(Error::BadDag(_))));
        let mut dag = fig2b(10, 1);
        dag.nodes[5].link = Link::Linear;
        assert!(matches!(dag.validate(), Err(Error::BadDag(_))));
    }

    #[test]
    fn selection_depends_on_non_allowable() {
        let pop = simulate_population(&fig2b(20_000, 2)).unwrap();
        let t = &pop.table;
        let (pre, int, l) =
            (t.column_index("w_pre").unwrap(), t.column_index("w_int").unwrap(), t.column_index("l").unwrap());
        let mut c = [[0.0; 2]; 2];
        for r in t.records.iter().filter(|r| r.values[pre] == 1.0) {
            c[r.values[l] as usize][r.values[int] as usize] += 1.0;
        }
        let p = |k: usize| c[k][1] / (c[k][0] + c[k][1]);
        assert!(p(1) - p(0) > 0.2, "{} {}", p(1), p(0));
    }

    #[test]
    fn edge_removal_drops_the_term() {
        let mut dag = fig2b(10, 1);
        assert!(dag.has_edge("l", "w_int"));
        dag.removed_edges.push(("l".into(), "w_int".into()));
        assert!(!dag.has_edge("l", "w_int"));
        assert!(!fig2c(10, 1, false).intervened_affects_post());
        assert!(fig2c(10, 1, true).intervened_affects_post());
    }

    #[test]
    fn intervention_replays_with_seed() {
        let spec = preset_spec(Proposition::II);
        let pop = simulate_population(&fig2b(2000, 4)).unwrap();
        let a = apply_stochastic_intervention(pop.clone(), &spec, 8).unwrap();
        let b = apply_stochastic_intervention(pop.clone(), &spec, 8).unwrap();
        assert_eq!(a.counterfactual, b.counterfactual);
        let c = apply_stochastic_intervention(pop, &spec, 9).unwrap();
        assert_ne!(a.counterfactual, c.counterfactual);
    }

    #[test]
    fn intervention_needs_an_intervened_node() {
        let mut dag = fig2b(50, 1);
        dag.nodes.retain(|n| n.role != Role::Intervened);
        for n in &mut dag.nodes {
            n.parents.retain(|t| t.parent != "w_int");
        }
        let pop = simulate_population(&dag).unwrap();
        assert!(pop.potential_y.is_none());
        assert!(apply_stochastic_intervention(pop, &preset_spec(Proposition::II), 1).is_err());
    }

    #[test]
    fn prop1_truth_is_the_counting_sum() {
        let spec = preset_spec(Proposition::I);
        let pop = simulate_population(&fig2b(5000, 6)).unwrap();
        for g in [0, 1] {
            let truth = true_tau(&pop, &spec, g).unwrap();
            let bf = brute_force_identify(&pop.table, &spec, Proposition::I, g).unwrap();
            assert!((truth - bf).abs() < 1e-12, "{truth} vs {bf}");
        }
    }

    #[test]
    fn truth_needs_the_intervention_beyond_prop1() {
        let pop = simulate_population(&fig2b(100, 6)).unwrap();
        assert!(matches!(true_tau(&pop, &preset_spec(Proposition::II), 1), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn counting_reductions() {
        let pop = simulate_population(&fixture_dag(800, 21)).unwrap();
        let mut t = pop.table.clone();
        let post = t.column_index(presets::POST).unwrap();
        let n = t.column_index(presets::NON_ALLOWABLE).unwrap();
        let p1 = fixture_spec(Proposition::I);
        let p2 = fixture_spec(Proposition::II);
        // Prop II with constant N equals Prop I on the W†-eligible frame.
        let mut flat = t.clone();
        for r in &mut flat.records {
            r.values[n] = 0.0;
        }
        let mut p1_frame = p1.clone();
        p1_frame.partition.w_dagger = p2.partition.w_dagger.clone();
        for g in [0, 1] {
            let a = brute_force_identify(&flat, &p2, Proposition::II, g).unwrap();
            let b = brute_force_identify(&flat, &p1_frame, Proposition::I, g).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        // Prop III and IV with W′ always satisfied equal Prop II.
        for r in &mut t.records {
            r.values[post] = 1.0;
        }
        for prop in [Proposition::III, Proposition::IV] {
            let s = fixture_spec(prop);
            for g in [0, 1] {
                let a = brute_force_identify(&t, &s, prop, g).unwrap();
                let b = brute_force_identify(&t, &p2, Proposition::II, g).unwrap();
                assert!((a - b).abs() < 1e-12, "{prop:?} {a} vs {b}");
            }
        }
    }
}
