//! Tree preprocessing and the spanning-tree clustering of the clients.

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::lowerbounds::{AugNode, SpanningTree};
use crate::model::{Instance, Site, COST_TOL};
use crate::rational::{self, Rational};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Root,
    Facility(usize),
    /// Demand-carrying leaf derived from client `v`.
    Client(usize),
    /// Zero-demand placeholder at client `v`'s position.
    Dummy(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkNode {
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub demand: Rational,
    pub subtree_demand: Rational,
    pub depth: usize,
}

/// The preprocessed spanning tree, rooted at the artificial root (node 0).
#[derive(Debug, Clone, PartialEq)]
pub struct WorkTree {
    pub nodes: Vec<WorkNode>,
    /// `ū̄ = ε·ū`.
    pub cap: Rational,
    pub epsilon: Rational,
}

impl WorkTree {
    pub fn site(&self, id: NodeId) -> Option<Site> {
        match self.nodes[id].kind {
            NodeKind::Root => None,
            NodeKind::Facility(w) => Some(Site::Facility(w)),
            NodeKind::Client(v) | NodeKind::Dummy(v) => Some(Site::Client(v)),
        }
    }

    /// Length of the edge between two nodes; edges at the root are free.
    pub fn edge_cost(&self, inst: &Instance, a: NodeId, b: NodeId) -> f64 {
        match (self.site(a), self.site(b)) {
            (Some(x), Some(y)) => inst.dist(x, y),
            _ => 0.0,
        }
    }

    /// `c(T′)`: total length of the tree without its root edges.
    pub fn cost(&self, inst: &Instance) -> f64 {
        (1..self.nodes.len())
            .filter_map(|id| self.nodes[id].parent.map(|p| self.edge_cost(inst, p, id)))
            .sum()
    }

    fn add(&mut self, kind: NodeKind, parent: NodeId, demand: Rational) -> NodeId {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(WorkNode {
            kind,
            parent: Some(parent),
            children: Vec::new(),
            demand,
            subtree_demand: Rational::zero(),
            depth,
        });
        self.nodes[parent].children.push(id);
        id
    }

    fn recompute_subtree_demands(&mut self) {
        // children always have larger ids than their parent
        for id in (0..self.nodes.len()).rev() {
            let s = self.nodes[id]
                .children
                .iter()
                .fold(self.nodes[id].demand, |acc, &c| acc + self.nodes[c].subtree_demand);
            self.nodes[id].subtree_demand = s;
        }
    }

    /// Structural checks of a freshly preprocessed tree.
    pub fn check_invariants(&self, inst: &Instance) -> std::result::Result<(), String> {
        let mut per_client = vec![Rational::zero(); inst.num_clients()];
        for (id, n) in self.nodes.iter().enumerate() {
            match n.kind {
                NodeKind::Client(v) => {
                    if !n.children.is_empty() {
                        return Err(format!("client node {id} is not a leaf"));
                    }
                    if !n.demand.is_positive() || n.demand > self.cap {
                        return Err(format!("leaf {id} has demand {}", rational::format(&n.demand)));
                    }
                    per_client[v] += n.demand;
                }
                _ if !n.demand.is_zero() => return Err(format!("node {id} carries demand")),
                _ => {}
            }
            let s = n
                .children
                .iter()
                .fold(n.demand, |acc, &c| acc + self.nodes[c].subtree_demand);
            if s != n.subtree_demand {
                return Err(format!("stale subtree demand at {id}"));
            }
        }
        for (v, c) in inst.clients.iter().enumerate() {
            if per_client[v] != c.demand {
                return Err(format!("client {} demand not preserved", c.id));
            }
        }
        Ok(())
    }
}

/// Replaces heavy and internal clients by a dummy with zero-length leaves.
pub fn preprocess(inst: &Instance, tree: &SpanningTree, epsilon: &Rational) -> Result<WorkTree> {
    if !epsilon.is_positive() || *epsilon > rational::rat(1) {
        return Err(Error::Parameter(format!(
            "epsilon must lie in (0, 1], got {}",
            rational::format(epsilon)
        )));
    }
    let cap = inst.cluster_cap(epsilon);
    let nc = inst.num_clients();
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); nc];
    let mut facility_kids: Vec<Vec<usize>> = vec![Vec::new(); inst.num_facilities()];
    for (v, p) in tree.client_parent.iter().enumerate() {
        match *p {
            AugNode::Facility(w) => facility_kids[w].push(v),
            AugNode::Client(u) => kids[u].push(v),
            AugNode::Root => {
                return Err(Error::Contract(format!("client {v} attached to the root")));
            }
        }
    }

    let mut work = WorkTree {
        nodes: vec![WorkNode {
            kind: NodeKind::Root,
            parent: None,
            children: Vec::new(),
            demand: Rational::zero(),
            subtree_demand: Rational::zero(),
            depth: 0,
        }],
        cap,
        epsilon: *epsilon,
    };
    let mut stack: Vec<(usize, NodeId)> = Vec::new();
    for w in 0..inst.num_facilities() {
        let id = work.add(NodeKind::Facility(w), 0, Rational::zero());
        for &v in facility_kids[w].iter().rev() {
            stack.push((v, id));
        }
        // depth-first so that ids grow along every root path
        while let Some((v, parent)) = stack.pop() {
            let d = inst.clients[v].demand;
            let internal = !kids[v].is_empty();
            let attach = if internal || d > cap {
                let dummy = work.add(NodeKind::Dummy(v), parent, Rational::zero());
                let l: i128 = if d > cap { (d / cap).ceil().to_integer() } else { 1 };
                let share = d / rational::rat(l);
                for _ in 0..l {
                    work.add(NodeKind::Client(v), dummy, share);
                }
                dummy
            } else {
                work.add(NodeKind::Client(v), parent, d)
            };
            for &u in kids[v].iter().rev() {
                stack.push((u, attach));
            }
        }
    }
    work.recompute_subtree_demands();
    Ok(work)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMember {
    pub node: NodeId,
    pub client: usize,
    pub demand: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<ClusterMember>,
    /// `V(T_S)`, sorted.
    pub nodes: Vec<NodeId>,
    /// `(parent, child)` pairs of `T_S`.
    pub edges: Vec<(NodeId, NodeId)>,
    pub root: NodeId,
    pub demand: Rational,
    /// Set for the residual cluster `V(T′[w]) ∩ C`.
    pub residual_of: Option<usize>,
}

impl Cluster {
    pub fn tree_cost(&self, work: &WorkTree, inst: &Instance) -> f64 {
        self.edges.iter().map(|&(a, b)| work.edge_cost(inst, a, b)).sum()
    }

    /// `c(S, w)` and the tree node attaining it (lowest id on ties).
    pub fn connection(&self, work: &WorkTree, inst: &Instance, w: usize) -> (f64, NodeId) {
        let mut best = (f64::INFINITY, usize::MAX);
        for &n in &self.nodes {
            if let Some(s) = work.site(n) {
                let c = inst.dist(s, Site::Facility(w));
                if c < best.0 {
                    best = (c, n);
                }
            }
        }
        best
    }

    pub fn facilities(&self, work: &WorkTree) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|&n| match work.nodes[n].kind {
                NodeKind::Facility(w) => Some(w),
                _ => None,
            })
            .collect()
    }

    /// Demand share of each original client, merged over split leaves.
    pub fn client_shares(&self) -> Vec<(usize, Rational)> {
        let mut out: Vec<(usize, Rational)> = Vec::new();
        for m in &self.members {
            match out.iter_mut().find(|(v, _)| *v == m.client) {
                Some((_, d)) => *d += m.demand,
                None => out.push((m.client, m.demand)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// The preprocessed tree as it was before extraction.
    pub work: WorkTree,
    pub clusters: Vec<Cluster>,
    /// Facilities whose residual subtree still holds clients.
    pub f1: Vec<usize>,
    pub extractions: usize,
}

impl Clustering {
    pub fn cap(&self) -> Rational {
        self.work.cap
    }

    /// Clusters with `d(S) < ū̄/2` paired with their facility `w_S`.
    pub fn small_clusters(&self) -> Vec<(usize, usize)> {
        let half = self.work.cap / rational::rat(2);
        self.clusters
            .iter()
            .enumerate()
            .filter(|(_, s)| s.demand < half)
            .filter_map(|(k, s)| s.facilities(&self.work).first().map(|&w| (k, w)))
            .collect()
    }

    pub fn total_tree_cost(&self, inst: &Instance) -> f64 {
        self.clusters.iter().map(|s| s.tree_cost(&self.work, inst)).sum()
    }

    /// Every property the clustering guarantees, checked exactly.
    pub fn check_invariants(&self, inst: &Instance) -> std::result::Result<(), String> {
        let cap = self.work.cap;
        let half = cap / rational::rat(2);
        let mut per_client = vec![Rational::zero(); inst.num_clients()];
        let mut edge_used = vec![false; self.work.nodes.len()];
        let mut small_facilities = Vec::new();
        for (k, s) in self.clusters.iter().enumerate() {
            let d = rational::sum(s.members.iter().map(|m| &m.demand));
            if d != s.demand {
                return Err(format!("cluster {k} demand mismatch"));
            }
            if d > cap {
                return Err(format!("cluster {k} demand {} exceeds cap", rational::format(&d)));
            }
            if s.residual_of.is_none() && d < half {
                return Err(format!("extracted cluster {k} below half the cap"));
            }
            for m in &s.members {
                per_client[m.client] += m.demand;
                if s.nodes.binary_search(&m.node).is_err() {
                    return Err(format!("cluster {k} member outside its tree"));
                }
            }
            for &(p, c) in &s.edges {
                if self.work.nodes[c].parent != Some(p) {
                    return Err(format!("cluster {k} edge ({p},{c}) not in the spanning tree"));
                }
                if std::mem::replace(&mut edge_used[c], true) {
                    return Err(format!("edge ({p},{c}) used by two clusters"));
                }
            }
            if d < half {
                let fs = s.facilities(&self.work);
                if fs.len() != 1 {
                    return Err(format!("small cluster {k} has {} facilities", fs.len()));
                }
                small_facilities.push(fs[0]);
            }
        }
        for (v, c) in inst.clients.iter().enumerate() {
            if per_client[v] != c.demand {
                return Err(format!("client {} not fully clustered", c.id));
            }
        }
        small_facilities.sort_unstable();
        if small_facilities.windows(2).any(|p| p[0] == p[1]) {
            return Err("two small clusters share a facility".into());
        }
        let tree = self.work.cost(inst);
        if self.total_tree_cost(inst) > tree + COST_TOL * tree.max(1.0) {
            return Err("cluster trees longer than the spanning tree".into());
        }
        let total = inst.total_demand();
        let bound: i128 = if cap.is_zero() {
            0
        } else {
            (total * rational::rat(2) / cap).ceil().to_integer()
        };
        if self.extractions as i128 > bound {
            return Err(format!("{} extractions exceed {bound}", self.extractions));
        }
        Ok(())
    }
}

/// Cuts the work tree into clusters of demand at most `ū̄`.
pub fn cluster(mut work: WorkTree) -> Clustering {
    let original = work.clone();
    let cap = work.cap;
    let half = cap / rational::rat(2);
    let mut clusters = Vec::new();
    let mut extractions = 0;
    loop {
        let mut pick: Option<NodeId> = None;
        for id in 1..work.nodes.len() {
            let n = &work.nodes[id];
            if n.parent.is_some()
                && n.subtree_demand > cap
                && pick.map_or(true, |p| n.depth > work.nodes[p].depth)
            {
                pick = Some(id);
            }
        }
        let Some(top) = pick else { break };

        let mut kids: Vec<NodeId> = work.nodes[top]
            .children
            .iter()
            .copied()
            .filter(|&c| work.nodes[c].subtree_demand.is_positive())
            .collect();
        kids.sort_by(|&a, &b| {
            work.nodes[b]
                .subtree_demand
                .cmp(&work.nodes[a].subtree_demand)
                .then(a.cmp(&b))
        });
        let mut chosen = Vec::new();
        let mut sum = Rational::zero();
        for c in kids {
            let d = work.nodes[c].subtree_demand;
            if sum + d <= cap {
                chosen.push(c);
                sum += d;
                if sum >= half {
                    break;
                }
            }
        }
        debug_assert!(sum >= half && sum <= cap);

        let mut s = Cluster {
            members: Vec::new(),
            nodes: vec![top],
            edges: Vec::new(),
            root: top,
            demand: sum,
            residual_of: None,
        };
        for &c in &chosen {
            s.edges.push((top, c));
            collect_subtree(&work, c, &mut s);
        }
        s.nodes.sort_unstable();
        work.nodes[top].children.retain(|c| !chosen.contains(c));
        for &c in &chosen {
            work.nodes[c].parent = None;
        }
        let mut a = Some(top);
        while let Some(id) = a {
            work.nodes[id].subtree_demand -= sum;
            a = work.nodes[id].parent;
        }
        clusters.push(s);
        extractions += 1;
    }

    let mut f1 = Vec::new();
    for &fid in &work.nodes[0].children.clone() {
        let NodeKind::Facility(w) = work.nodes[fid].kind else { continue };
        if !work.nodes[fid].subtree_demand.is_positive() {
            continue;
        }
        let mut s = Cluster {
            members: Vec::new(),
            nodes: vec![fid],
            edges: Vec::new(),
            root: fid,
            demand: work.nodes[fid].subtree_demand,
            residual_of: Some(w),
        };
        for &c in &work.nodes[fid].children {
            s.edges.push((fid, c));
            collect_subtree(&work, c, &mut s);
        }
        s.nodes.sort_unstable();
        clusters.push(s);
        f1.push(w);
    }

    Clustering { work: original, clusters, f1, extractions }
}

fn collect_subtree(work: &WorkTree, from: NodeId, s: &mut Cluster) {
    let mut stack = vec![from];
    while let Some(id) = stack.pop() {
        s.nodes.push(id);
        let n = &work.nodes[id];
        if let NodeKind::Client(v) = n.kind {
            s.members.push(ClusterMember { node: id, client: v, demand: n.demand });
        }
        for &c in n.children.iter().rev() {
            s.edges.push((id, c));
            stack.push(c);
        }
    }
}

/// MST, preprocessing and clustering in one call.
pub fn cluster_instance(inst: &Instance, epsilon: &Rational) -> Result<(SpanningTree, Clustering)> {
    let tree = crate::lowerbounds::mst_lower_bound(inst);
    let work = preprocess(inst, &tree, epsilon)?;
    Ok((tree, cluster(work)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::lemma3_family;
    use crate::lowerbounds::mst_lower_bound;
    use crate::model::fixtures::{e2, euclid};
    use crate::rational::{rat, ratio};

    fn kinds(work: &WorkTree) -> Vec<NodeKind> {
        work.nodes.iter().map(|n| n.kind).collect()
    }

    #[test]
    fn heavy_internal_client_is_split() {
        // w -- v1 (d=10) -- v2, so v1 is internal
        let inst = euclid(
            &[(0.0, 0.0, 30, 0.0)],
            &[(1.0, 0.0, rat(10)), (2.0, 0.0, rat(1))],
            rat(4),
        );
        let tree = mst_lower_bound(&inst);
        let work = preprocess(&inst, &tree, &rat(1)).unwrap();
        use NodeKind::*;
        assert_eq!(
            kinds(&work),
            vec![Root, Facility(0), Dummy(0), Client(0), Client(0), Client(0), Client(1)]
        );
        for id in 3..6 {
            assert_eq!(work.nodes[id].demand, ratio(10, 3));
            assert_eq!(work.nodes[id].parent, Some(2));
        }
        assert_eq!(work.nodes[6].parent, Some(2));
        assert!((work.cost(&inst) - 2.0).abs() < 1e-12);
        work.check_invariants(&inst).unwrap();
    }

    #[test]
    fn light_leaf_client_unchanged() {
        let inst = euclid(&[(0.0, 0.0, 30, 0.0)], &[(1.0, 0.0, rat(3))], rat(4));
        let work = preprocess(&inst, &mst_lower_bound(&inst), &rat(1)).unwrap();
        use NodeKind::*;
        assert_eq!(kinds(&work), vec![Root, Facility(0), Client(0)]);
        assert_eq!(work.nodes[2].demand, rat(3));
    }

    #[test]
    fn facility_children_processed_independently() {
        let inst = euclid(
            &[(0.0, 0.0, 30, 0.0), (50.0, 0.0, 30, 0.0)],
            &[(1.0, 0.0, rat(2)), (0.0, 1.0, rat(9))],
            rat(4),
        );
        let work = preprocess(&inst, &mst_lower_bound(&inst), &rat(1)).unwrap();
        use NodeKind::*;
        assert_eq!(
            kinds(&work),
            vec![Root, Facility(0), Client(0), Dummy(1), Client(1), Client(1), Client(1), Facility(1)]
        );
        assert_eq!(work.nodes[4].demand, rat(3));
        work.check_invariants(&inst).unwrap();
    }

    #[test]
    fn epsilon_out_of_range() {
        let inst = e2();
        let tree = mst_lower_bound(&inst);
        assert!(matches!(preprocess(&inst, &tree, &rat(0)), Err(Error::Parameter(_))));
        assert!(matches!(preprocess(&inst, &tree, &ratio(3, 2)), Err(Error::Parameter(_))));
    }

    #[test]
    fn e2_single_residual_cluster() {
        let inst = e2();
        let (_, c) = cluster_instance(&inst, &rat(1)).unwrap();
        assert_eq!(c.extractions, 0);
        assert_eq!(c.f1, vec![0]);
        assert_eq!(c.clusters.len(), 1);
        let s = &c.clusters[0];
        assert_eq!(s.demand, rat(7));
        assert_eq!(s.client_shares(), vec![(0, rat(3)), (1, rat(4))]);
        assert!((s.tree_cost(&c.work, &inst) - 2.0).abs() < 1e-12);
        c.check_invariants(&inst).unwrap();
    }

    #[test]
    fn lemma3_extracts_one_cluster() {
        let inst = lemma3_family(5);
        let (_, c) = cluster_instance(&inst, &rat(1)).unwrap();
        c.check_invariants(&inst).unwrap();
        assert_eq!(c.f1, vec![0]);
        assert_eq!(c.extractions, 1);
        let extracted = &c.clusters[0];
        assert!(extracted.residual_of.is_none());
        assert!(extracted.demand >= rat(2) && extracted.demand <= rat(4));
        assert_eq!(c.clusters[1].residual_of, Some(0));
        assert_eq!(extracted.demand + c.clusters[1].demand, rat(5));
    }

    #[test]
    fn boundary_demand_not_extracted() {
        let inst = euclid(&[(0.0, 0.0, 10, 1.0)], &[(3.0, 4.0, rat(4))], rat(4));
        let (_, c) = cluster_instance(&inst, &rat(1)).unwrap();
        assert_eq!(c.extractions, 0);
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].demand, rat(4));
    }

    #[test]
    fn empty_facilities_not_in_f1() {
        let inst = euclid(
            &[(0.0, 0.0, 10, 0.0), (100.0, 0.0, 10, 0.0)],
            &[(1.0, 0.0, rat(1))],
            rat(4),
        );
        let (_, c) = cluster_instance(&inst, &rat(1)).unwrap();
        assert_eq!(c.f1, vec![0]);
        assert_eq!(c.small_clusters(), vec![(0, 0)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(120))]
            #[test]
            fn clustering_invariants_hold(
                facs in prop::collection::vec((0..40i32, 0..40i32, 0..30i32), 1..4),
                cls in prop::collection::vec((0..40i32, 0..40i32, 1..12i128), 1..25),
                vcap in 2i128..10,
                eps_num in 1i128..5,
            ) {
                let f: Vec<_> = facs.iter().map(|&(x, y, c)| (x as f64, y as f64, 1000i128, c as f64)).collect();
                let c: Vec<_> = cls.iter().map(|&(x, y, d)| (x as f64, y as f64, rat(d))).collect();
                let inst = euclid(&f, &c, rat(vcap));
                let eps = ratio(eps_num, 4);
                let tree = mst_lower_bound(&inst);
                let work = preprocess(&inst, &tree, &eps).unwrap();
                work.check_invariants(&inst).map_err(TestCaseError::fail)?;
                prop_assert!((work.cost(&inst) + 1e-9) >= 0.0);
                let clust = cluster(work);
                clust.check_invariants(&inst).map_err(TestCaseError::fail)?;
                let tree_cost = clust.work.cost(&inst);
                let f1: f64 = clust.f1.iter().map(|&w| inst.facilities[w].opening_cost).sum();
                prop_assert!(tree_cost + 0.5 * f1 <= tree.weight + 1e-9 * tree.weight.max(1.0));
            }
        }
    }
}
