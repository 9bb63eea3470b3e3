//! Turning cluster trees into vehicle tours.

use crate::clustering::{Cluster, Clustering, NodeKind};
use crate::model::{Instance, Site, Tour};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq)]
pub struct TourDraft {
    pub facility: usize,
    /// Tree node joined to the facility.
    pub connector: usize,
    /// Preorder of the doubled tree, starting below the facility.
    pub euler: Vec<usize>,
    pub tour: Tour,
    /// `c(T_S)`.
    pub tree_cost: f64,
    /// `c(S, w_S)`.
    pub connection_cost: f64,
}

impl TourDraft {
    /// `2 (c(T_S) + c(S, w_S))`.
    pub fn bound(&self) -> f64 {
        2.0 * (self.tree_cost + self.connection_cost)
    }
}

/// Double-tree tour for cluster `k` served from `facility`.
pub fn build_tour(clust: &Clustering, k: usize, facility: usize, inst: &Instance) -> TourDraft {
    let s: &Cluster = &clust.clusters[k];
    let work = &clust.work;
    let (connection_cost, connector) = s.connection(work, inst, facility);

    let mut children: std::collections::HashMap<usize, Vec<usize>> = Default::default();
    let mut parent_of: std::collections::HashMap<usize, usize> = Default::default();
    for &(p, c) in &s.edges {
        children.entry(p).or_default().push(c);
        parent_of.insert(c, p);
    }
    // re-root the cluster tree at the connector, keeping edge order
    let mut euler = Vec::with_capacity(s.nodes.len());
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![connector];
    while let Some(n) = stack.pop() {
        if !seen.insert(n) {
            continue;
        }
        euler.push(n);
        let mut next: Vec<usize> = children.get(&n).cloned().unwrap_or_default();
        if let Some(&p) = parent_of.get(&n) {
            next.push(p);
        }
        for &c in next.iter().rev() {
            if !seen.contains(&c) {
                stack.push(c);
            }
        }
    }

    let mut clients: Vec<usize> = Vec::new();
    let mut service: Vec<Rational> = Vec::new();
    for &n in &euler {
        if let NodeKind::Client(v) = work.nodes[n].kind {
            let Some(m) = s.members.iter().find(|m| m.node == n) else { continue };
            match clients.iter().position(|&u| u == v) {
                Some(i) => service[i] += m.demand,
                None => {
                    clients.push(v);
                    service.push(m.demand);
                }
            }
        }
    }
    TourDraft {
        facility,
        connector,
        euler,
        tour: Tour { facility, clients, service },
        tree_cost: s.tree_cost(work, inst),
        connection_cost,
    }
}

fn gain_tol(cost: f64) -> f64 {
    1e-10 * cost.max(1.0)
}

/// 2-opt and Or-opt (segments of one to three clients, either direction) to
/// a local optimum. Facility, client set and service are kept.
pub fn improve_tour(t: &Tour, inst: &Instance) -> Tour {
    if t.clients.len() < 3 {
        return t.clone();
    }
    let depot = Site::Facility(t.facility);
    let site = |i: usize, route: &[usize]| -> Site {
        if i == 0 || i == route.len() + 1 {
            depot
        } else {
            Site::Client(route[i - 1])
        }
    };
    let d = |a: Site, b: Site| inst.dist(a, b);
    let mut route = t.clients.clone();
    let original = t.cost(inst);
    let tol = gain_tol(original);
    let k = route.len();

    loop {
        let mut improved = false;
        // 2-opt: reverse positions i+1..=j in the padded sequence
        'two: for i in 0..k {
            for j in (i + 2)..=k {
                let (a, b) = (site(i, &route), site(i + 1, &route));
                let (c, e) = (site(j, &route), site(j + 1, &route));
                let delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
                if delta < -tol {
                    route[i..j].reverse();
                    improved = true;
                    break 'two;
                }
            }
        }
        if improved {
            continue;
        }
        'or: for len in 1..=3usize.min(k - 1) {
            for start in 0..=(k - len) {
                // segment occupies route[start..start+len]
                let prev = if start == 0 { depot } else { Site::Client(route[start - 1]) };
                let next = if start + len == k { depot } else { Site::Client(route[start + len]) };
                let first = Site::Client(route[start]);
                let last = Site::Client(route[start + len - 1]);
                let removal = d(prev, first) + d(last, next) - d(prev, next);
                let mut rest: Vec<usize> = route[..start].to_vec();
                rest.extend_from_slice(&route[start + len..]);
                for pos in 0..=rest.len() {
                    if pos == start {
                        continue;
                    }
                    let p = if pos == 0 { depot } else { Site::Client(rest[pos - 1]) };
                    let q = if pos == rest.len() { depot } else { Site::Client(rest[pos]) };
                    for reversed in [false, true] {
                        let (x, y) = if reversed { (last, first) } else { (first, last) };
                        let insertion = d(p, x) + d(y, q) - d(p, q);
                        if insertion - removal < -tol {
                            let mut seg = route[start..start + len].to_vec();
                            if reversed {
                                seg.reverse();
                            }
                            let mut nr = rest[..pos].to_vec();
                            nr.extend(seg);
                            nr.extend_from_slice(&rest[pos..]);
                            route = nr;
                            improved = true;
                            break 'or;
                        }
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }

    let service = route
        .iter()
        .map(|v| t.service[t.clients.iter().position(|u| u == v).unwrap()])
        .collect();
    let out = Tour { facility: t.facility, clients: route, service };
    if out.cost(inst) <= original {
        out
    } else {
        t.clone()
    }
}
