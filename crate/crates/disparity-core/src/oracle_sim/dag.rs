use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Position of a node in the trial's causal ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Role {
    /// H: historical processes; not exported.
    History,
    /// X: allowable covariates.
    Allowable,
    /// L: non-allowable covariates.
    NonAllowable,
    /// R: social group.
    Group,
    /// W‡
    Pre,
    /// W†
    Intervened,
    /// W′
    Post,
    /// Y
    Outcome,
}

impl Role {
    fn rank(self) -> u8 {
        match self {
            Role::History => 0,
            Role::Allowable | Role::NonAllowable | Role::Group => 1,
            Role::Pre => 2,
            Role::Intervened => 3,
            Role::Post => 4,
            Role::Outcome => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Link {
    /// Bernoulli(expit(lin)) via a uniform threshold.
    Logistic,
    /// lin + sd · ε with ε standard normal.
    Linear,
    /// lin, no noise.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Term {
    pub parent: String,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Interaction {
    pub a: String,
    pub b: String,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NodeSpec {
    pub name: String,
    pub role: Role,
    pub link: Link,
    #[cfg_attr(feature = "serde", serde(default))]
    pub intercept: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub parents: Vec<Term>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub interactions: Vec<Interaction>,
    /// Residual standard deviation for linear nodes.
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub noise_sd: f64,
    /// Standard deviation of a cluster-level random intercept.
    #[cfg_attr(feature = "serde", serde(default))]
    pub cluster_sd: f64,
}

#[cfg(feature = "serde")]
fn one() -> f64 {
    1.0
}

#[cfg(feature = "serde")]
fn default_clusters() -> usize {
    1
}

impl NodeSpec {
    pub fn logistic(name: &str, role: Role, intercept: f64, parents: &[(&str, f64)]) -> Self {
        Self {
            name: name.into(),
            role,
            link: Link::Logistic,
            intercept,
            parents: parents.iter().map(|&(p, c)| Term { parent: p.into(), coef: c }).collect(),
            interactions: Vec::new(),
            noise_sd: 1.0,
            cluster_sd: 0.0,
        }
    }
}

/// A structural-equation model over the trial's variables.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DagConfig {
    /// Nodes in topological order.
    pub nodes: Vec<NodeSpec>,
    /// Edges (parent, child) whose terms are dropped.
    #[cfg_attr(feature = "serde", serde(default))]
    pub removed_edges: Vec<(String, String)>,
    pub n: usize,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default = "default_clusters"))]
    pub clusters: usize,
}

impl DagConfig {
    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn node_mut(&mut self, name: &str) -> Option<&mut NodeSpec> {
        self.nodes.iter_mut().find(|n| n.name == name)
    }

    pub fn is_removed(&self, parent: &str, child: &str) -> bool {
        self.removed_edges.iter().any(|(p, c)| p == parent && c == child)
    }

    /// Whether `parent` enters `child`'s equation with a nonzero coefficient.
    pub fn has_edge(&self, parent: &str, child: &str) -> bool {
        if self.is_removed(parent, child) {
            return false;
        }
        self.node(child).is_some_and(|c| {
            c.parents.iter().any(|t| t.parent == parent && t.coef != 0.0)
                || c.interactions.iter().any(|t| (t.a == parent || t.b == parent) && t.coef != 0.0)
        })
    }

    pub fn by_role(&self, role: Role) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(move |n| n.role == role)
    }

    /// Whether some W† node enters some W′ equation.
    pub fn intervened_affects_post(&self) -> bool {
        self.by_role(Role::Intervened).any(|w| self.by_role(Role::Post).any(|p| self.has_edge(&w.name, &p.name)))
    }

    /// Ordering and shape checks.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadDag(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.clusters == 0 {
            return bad("clusters must be positive".into());
        }
        let mut pos: BTreeMap<&str, usize> = BTreeMap::new();
        for (k, node) in self.nodes.iter().enumerate() {
            if pos.insert(node.name.as_str(), k).is_some() {
                return bad(format!("node `{}` declared twice", node.name));
            }
            if !(node.noise_sd.is_finite()
                && node.noise_sd >= 0.0
                && node.cluster_sd.is_finite()
                && node.cluster_sd >= 0.0)
            {
                return bad(format!("node `{}` has an invalid noise scale", node.name));
            }
            let parents = node
                .parents
                .iter()
                .map(|t| t.parent.as_str())
                .chain(node.interactions.iter().flat_map(|t| [t.a.as_str(), t.b.as_str()]));
            for p in parents {
                let Some(&pk) = pos.get(p) else {
                    return bad(format!("parent `{p}` of `{}` is not declared earlier", node.name));
                };
                if p == node.name {
                    return bad(format!("node `{}` is its own parent", node.name));
                }
                let prole = self.nodes[pk].role;
                let ok =
                    prole.rank() <= node.role.rank() && !(prole == Role::Intervened && node.role == Role::Intervened);
                if !ok {
                    return bad(format!(
                        "edge {p} → {} violates the ordering H < (X, L, R) < W‡ < W† < W′ < Y",
                        node.name
                    ));
                }
            }
        }
        let count = |r: Role| self.by_role(r).count();
        if count(Role::Group) != 1 || count(Role::Outcome) != 1 {
            return bad("exactly one group node and one outcome node required".into());
        }
        if count(Role::Intervened) > 1 {
            return bad("at most one W† node supported".into());
        }
        for n in &self.nodes {
            if matches!(n.role, Role::Group | Role::Intervened) && n.link != Link::Logistic {
                return bad(format!("node `{}` must be binary (logistic link)", n.name));
            }
        }
        Ok(())
    }
}
