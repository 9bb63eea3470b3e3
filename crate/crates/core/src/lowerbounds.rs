//! Spanning-tree and facility-location lower bounds on the optimal cost.

use serde::Serialize;

use crate::cfl::{self, CflBudget, CflMode, CflSolution};
use crate::error::{Error, Result};
use crate::model::{Instance, Site, COST_TOL};

/// Vertex of the augmented graph `V ∪ {r}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AugNode {
    Root,
    Facility(usize),
    Client(usize),
}

impl AugNode {
    pub fn site(self) -> Option<Site> {
        match self {
            AugNode::Root => None,
            AugNode::Facility(w) => Some(Site::Facility(w)),
            AugNode::Client(v) => Some(Site::Client(v)),
        }
    }
}

/// The complete graph over root–facility, client–facility and client–client
/// edges, weighted by `c'`. Weights are evaluated lazily.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedGraph<'a> {
    inst: &'a Instance,
}

pub fn build_augmented_graph(inst: &Instance) -> AugmentedGraph<'_> {
    AugmentedGraph { inst }
}

impl AugmentedGraph<'_> {
    pub fn num_nodes(&self) -> usize {
        1 + self.inst.num_sites()
    }

    /// `c'(a, b)`, or `None` when the edge is not part of the graph
    /// (facility–facility, root–client, loops).
    pub fn weight(&self, a: AugNode, b: AugNode) -> Option<f64> {
        use AugNode::*;
        match (a, b) {
            (Root, Facility(_)) | (Facility(_), Root) => Some(0.0),
            (Client(v), Facility(w)) | (Facility(w), Client(v)) => {
                Some(self.inst.fc(v, w) + 0.5 * self.inst.facilities[w].opening_cost)
            }
            (Client(v), Client(u)) if v != u => Some(self.inst.cc(v, u)),
            _ => None,
        }
    }
}

/// A minimum spanning tree of the augmented graph, rooted at `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    /// Parent of each client; every facility hangs off the root.
    pub client_parent: Vec<AugNode>,
    /// `c'(T')`.
    pub weight: f64,
}

impl SpanningTree {
    /// Edges `(parent, child)`, root edges first.
    pub fn edges(&self, num_facilities: usize) -> Vec<(AugNode, AugNode)> {
        (0..num_facilities)
            .map(|w| (AugNode::Root, AugNode::Facility(w)))
            .chain(
                self.client_parent
                    .iter()
                    .enumerate()
                    .map(|(v, &p)| (p, AugNode::Client(v))),
            )
            .collect()
    }
}

/// Prim's algorithm seeded with all zero-weight root–facility edges.
///
/// Ties go to the lowest client index, and a key is only replaced on strict
/// improvement, so the tree is deterministic for a given instance.
pub fn mst_lower_bound(inst: &Instance) -> SpanningTree {
    let g = build_augmented_graph(inst);
    let nc = inst.num_clients();
    let nf = inst.num_facilities();
    let mut key = vec![f64::INFINITY; nc];
    let mut parent = vec![AugNode::Root; nc];
    for v in 0..nc {
        for w in 0..nf {
            let c = g.weight(AugNode::Client(v), AugNode::Facility(w)).unwrap();
            if c < key[v] {
                key[v] = c;
                parent[v] = AugNode::Facility(w);
            }
        }
    }
    let mut in_tree = vec![false; nc];
    let mut weight = 0.0;
    for _ in 0..nc {
        let mut next = None;
        for v in 0..nc {
            if !in_tree[v] && next.map_or(true, |u: usize| key[v] < key[u]) {
                next = Some(v);
            }
        }
        let v = next.unwrap();
        in_tree[v] = true;
        weight += key[v];
        for u in 0..nc {
            if !in_tree[u] {
                let c = inst.cc(v, u);
                if c < key[u] {
                    key[u] = c;
                    parent[u] = AugNode::Client(v);
                }
            }
        }
    }
    SpanningTree { client_parent: parent, weight }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    Mst,
    Cfl,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub mst_bound: f64,
    pub cfl_bound: f64,
    pub best_bound: f64,
    pub which: BoundKind,
    /// True only when the CFL value is a certified optimum.
    pub cfl_exact: bool,
}

impl BoundReport {
    pub fn new(mst_bound: f64, cfl_bound: f64, cfl_exact: bool) -> Self {
        let which = if cfl_bound > mst_bound { BoundKind::Cfl } else { BoundKind::Mst };
        BoundReport {
            mst_bound,
            cfl_bound,
            best_bound: mst_bound.max(cfl_bound),
            which,
            cfl_exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    Exact,
    Heuristic,
}

/// Default variable cap `|C|·|F|` for the exact CFL bound.
pub const EXACT_CFL_CAP: usize = 50_000;

/// Value of the CFL instance with distances `2c/ū`.
///
/// In exact mode the solve falls back to local search (and the result is
/// flagged non-exact) when the instance exceeds `cap` or the budget runs out.
pub fn cfl_lower_bound(
    inst: &Instance,
    mode: BoundMode,
    cap: usize,
    budget: &CflBudget,
) -> Result<CflSolution> {
    if inst.total_demand() > inst.total_capacity() {
        return Err(Error::Infeasible(
            "total demand exceeds total facility capacity".into(),
        ));
    }
    let p = cfl::build_cfl(inst, CflMode::Raw, None, &[])?;
    match mode {
        BoundMode::Exact => match cfl::exact_cfl(&p, cap, budget) {
            Err(Error::SizeCap { .. }) => cfl::local_search_cfl(&p, budget),
            other => other,
        },
        BoundMode::Heuristic => cfl::local_search_cfl(&p, budget),
    }
}

/// Both bounds for `inst`.
pub fn bounds(inst: &Instance, mode: BoundMode, cap: usize, budget: &CflBudget) -> Result<BoundReport> {
    let mst = mst_lower_bound(inst);
    let cfl = cfl_lower_bound(inst, mode, cap, budget)?;
    Ok(BoundReport::new(mst.weight, cfl.cost(), cfl.exact))
}

/// `(ALG − LB) / LB` against the larger of the two bounds.
pub fn gap_to_lower_bound(alg_cost: f64, bounds: &BoundReport) -> Result<f64> {
    if bounds.best_bound <= COST_TOL {
        return Err(Error::UndefinedGap);
    }
    Ok((alg_cost - bounds.best_bound) / bounds.best_bound)
}
