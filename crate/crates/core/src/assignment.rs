//! Assigning whole clusters to facilities: the transportation LP with its
//! rounding procedure, and the integer program with capacity escalation.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::model::{Instance, COST_TOL};
use crate::rational::{self, Rational};
use crate::transport::{is_forest, solve_transport, TransportProblem, TransportSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    LpRounded,
    Ip,
    /// Integer program solved with capacities scaled by `gamma > 1`.
    IpEscalated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// `w_S` for every cluster.
    pub facility_of: Vec<usize>,
    /// Indexed by facility of the instance.
    pub loads: Vec<Rational>,
    pub provenance: Provenance,
    pub gamma: Rational,
    pub iterations: usize,
}

impl ClusterAssignment {
    fn from_choice(
        facility_of: Vec<usize>,
        clust: &Clustering,
        num_facilities: usize,
        provenance: Provenance,
        gamma: Rational,
        iterations: usize,
    ) -> Self {
        let mut loads = vec![Rational::zero(); num_facilities];
        for (s, &w) in facility_of.iter().enumerate() {
            loads[w] += clust.clusters[s].demand;
        }
        ClusterAssignment { facility_of, loads, provenance, gamma, iterations }
    }

    /// Facilities serving at least one cluster, sorted.
    pub fn used_facilities(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.facility_of.iter().copied().collect();
        set.into_iter().collect()
    }
}

/// `c(S, w)` for every cluster and every facility, clusters × facilities.
pub fn connection_costs(clust: &Clustering, inst: &Instance) -> Vec<f64> {
    let nf = inst.num_facilities();
    let mut out = Vec::with_capacity(clust.clusters.len() * nf);
    for s in &clust.clusters {
        for w in 0..nf {
            out.push(s.connection(&clust.work, inst, w).0);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentLp {
    pub problem: TransportProblem,
    /// Source index to facility.
    pub facilities: Vec<usize>,
    /// `c(S, w)` over clusters × sources.
    pub connection: Vec<f64>,
}

/// The transportation LP over clusters and the open facilities.
pub fn build_lp(clust: &Clustering, open: &[usize], inst: &Instance) -> Result<AssignmentLp> {
    let mut facilities = open.to_vec();
    facilities.sort_unstable();
    facilities.dedup();
    if let Some(&w) = facilities.iter().find(|&&w| w >= inst.num_facilities()) {
        return Err(Error::UnknownFacility(w));
    }
    let demands: Vec<Rational> = clust.clusters.iter().map(|s| s.demand).collect();
    let capacities: Vec<Rational> = facilities.iter().map(|&w| inst.facilities[w].capacity).collect();
    let need = rational::sum(&demands);
    let have = rational::sum(&capacities);
    if need > have {
        return Err(Error::Infeasible(format!(
            "cluster demand {} exceeds open capacity {}",
            rational::format(&need),
            rational::format(&have)
        )));
    }
    let mut connection = Vec::with_capacity(demands.len() * facilities.len());
    let mut costs = Vec::with_capacity(demands.len() * facilities.len());
    for s in &clust.clusters {
        let d = rational::to_f64(&s.demand);
        for &w in &facilities {
            let c = s.connection(&clust.work, inst, w).0;
            connection.push(c);
            costs.push(c / d);
        }
    }
    Ok(AssignmentLp {
        problem: TransportProblem::new(demands, capacities, costs),
        facilities,
        connection,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rounding {
    /// Final `x′`, sinks × sources, each entry `0` or `d(sink)`.
    pub flows: Vec<Rational>,
    /// Source index chosen for every sink.
    pub choice: Vec<usize>,
    pub iterations: usize,
}

/// Rounds an extreme point of a transportation problem to an integral
/// assignment by repeatedly shifting flow along leaf-to-leaf paths of the
/// fractional support.
pub fn round_vertex(sol: &TransportSolution, unit_costs: &[f64]) -> Result<Rounding> {
    let ns = sol.num_sinks();
    let nw = sol.num_sources();
    let d = &sol.demands;
    let mut x = sol.flows.clone();
    let support = sol.support_forest();
    if !is_forest(ns, nw, &support) {
        return Err(Error::Contract("fractional support contains a cycle".into()));
    }
    // node ids: sinks 0..ns, sources ns..ns+nw
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ns + nw];
    for &(s, w) in &support {
        adj[s].insert(ns + w);
        adj[ns + w].insert(s);
    }
    let limit = ns + nw;
    let mut iterations = 0;
    loop {
        let Some(start) = (0..nw).find(|&w| adj[ns + w].len() == 1) else {
            if adj.iter().any(|a| !a.is_empty()) {
                return Err(Error::Contract("fractional support without a leaf facility".into()));
            }
            break;
        };
        let start = ns + start;
        let mut prev = vec![usize::MAX; ns + nw];
        prev[start] = start;
        let mut frontier = vec![start];
        let mut target = None;
        while target.is_none() && !frontier.is_empty() {
            let mut next = Vec::new();
            for &a in &frontier {
                for &b in &adj[a] {
                    if prev[b] == usize::MAX {
                        prev[b] = a;
                        next.push(b);
                    }
                }
            }
            target = next.iter().copied().filter(|&b| b >= ns && adj[b].len() == 1).min();
            frontier = next;
        }
        let Some(end) = target else {
            return Err(Error::Contract("leaf facility without a partner leaf".into()));
        };
        let mut path = vec![end];
        while *path.last().unwrap() != start {
            path.push(prev[*path.last().unwrap()]);
        }
        path.reverse();

        // path = w0, S1, w1, ..., Sk, wk
        let cell = |s: usize, w: usize| s * nw + (w - ns);
        let mut inc = Vec::new();
        let mut dec = Vec::new();
        for i in (1..path.len()).step_by(2) {
            inc.push((path[i], path[i - 1]));
            dec.push((path[i], path[i + 1]));
        }
        let sum = |cells: &[(usize, usize)]| -> f64 { cells.iter().map(|&(s, w)| unit_costs[cell(s, w)]).sum() };
        if sum(&inc) > sum(&dec) {
            std::mem::swap(&mut inc, &mut dec);
        }
        let mut delta: Option<Rational> = None;
        for &(s, w) in &inc {
            let r = d[s] - x[cell(s, w)];
            delta = Some(delta.map_or(r, |m| m.min(r)));
        }
        for &(s, w) in &dec {
            let r = x[cell(s, w)];
            delta = Some(delta.map_or(r, |m| m.min(r)));
        }
        let delta = delta.unwrap();
        for &(s, w) in &inc {
            x[cell(s, w)] += delta;
        }
        for &(s, w) in &dec {
            x[cell(s, w)] -= delta;
        }
        for &(s, w) in inc.iter().chain(&dec) {
            let v = &x[cell(s, w)];
            if v.is_zero() || *v == d[s] {
                adj[s].remove(&w);
                adj[w].remove(&s);
            }
        }
        iterations += 1;
        if iterations > limit {
            return Err(Error::Contract("rounding did not terminate".into()));
        }
    }

    let mut choice = vec![usize::MAX; ns];
    for s in 0..ns {
        if d[s].is_zero() {
            choice[s] = (0..nw).next().unwrap_or(usize::MAX);
            continue;
        }
        for w in 0..nw {
            if x[s * nw + w] == d[s] {
                choice[s] = w;
            }
        }
        if choice[s] == usize::MAX {
            return Err(Error::Contract(format!("sink {s} left fractional")));
        }
    }
    Ok(Rounding { flows: x, choice, iterations })
}

/// Rounds an LP solution of [`build_lp`].
pub fn round_assignment(
    sol: &TransportSolution,
    lp: &AssignmentLp,
    clust: &Clustering,
    inst: &Instance,
) -> Result<ClusterAssignment> {
    let r = round_vertex(sol, &lp.problem.costs)?;
    let facility_of = r.choice.iter().map(|&j| lp.facilities[j]).collect();
    Ok(ClusterAssignment::from_choice(
        facility_of,
        clust,
        inst.num_facilities(),
        Provenance::LpRounded,
        Rational::one(),
        r.iterations,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpBudget {
    pub total: Option<Duration>,
    pub no_improvement: Option<Duration>,
    pub max_nodes: Option<usize>,
    /// Node limit of each feasibility probe during escalation.
    pub probe_nodes: usize,
}

impl Default for IpBudget {
    fn default() -> Self {
        IpBudget { total: None, no_improvement: None, max_nodes: None, probe_nodes: 2_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpOutcome {
    pub assignment: ClusterAssignment,
    pub open: Vec<usize>,
    /// `Σ f(w) z(w) + Σ 2 c(S,w) y(S,w)`.
    pub objective: f64,
    pub interrupted: bool,
    pub nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Free,
    Open,
    Closed,
}

#[derive(Debug, Clone)]
struct Node {
    status: Vec<Status>,
    forced: Vec<Option<usize>>,
    forbidden: Vec<bool>,
}

#[derive(Debug, Clone)]
struct Incumbent {
    facility_of: Vec<usize>,
    objective: f64,
}

struct Search {
    complete: bool,
    best: Option<Incumbent>,
    nodes: usize,
}

struct IpModel<'a> {
    demand: Vec<Rational>,
    /// `c(S,w)`, clusters × facilities.
    conn: Vec<f64>,
    opening: Vec<f64>,
    capacity: Vec<Rational>,
    clust: &'a Clustering,
}

fn better(a: f64, b: f64) -> bool {
    if b.is_infinite() {
        return a < b;
    }
    a < b - COST_TOL * b.abs().max(1.0)
}

impl IpModel<'_> {
    fn ns(&self) -> usize {
        self.demand.len()
    }

    fn nf(&self) -> usize {
        self.capacity.len()
    }

    fn conn(&self, s: usize, w: usize) -> f64 {
        self.conn[s * self.nf() + w]
    }

    fn objective(&self, facility_of: &[usize]) -> f64 {
        let mut used = vec![false; self.nf()];
        let mut cost = 0.0;
        for (s, &w) in facility_of.iter().enumerate() {
            used[w] = true;
            cost += 2.0 * self.conn(s, w);
        }
        cost + (0..self.nf()).filter(|&w| used[w]).map(|w| self.opening[w]).sum::<f64>()
    }

    fn max_ratio(&self, facility_of: &[usize]) -> Rational {
        let mut load = vec![Rational::zero(); self.nf()];
        for (s, &w) in facility_of.iter().enumerate() {
            load[w] += self.demand[s];
        }
        (0..self.nf())
            .filter(|&w| load[w].is_positive())
            .map(|w| load[w] / self.capacity[w])
            .max()
            .unwrap_or_else(Rational::zero)
    }

    fn search(
        &self,
        gamma: &Rational,
        deadline: Option<Instant>,
        no_improvement: Option<Duration>,
        max_nodes: Option<usize>,
        stop_at_first: bool,
        seed: Option<Incumbent>,
    ) -> Result<Search> {
        let ns = self.ns();
        let nf = self.nf();
        let caps: Vec<Rational> = self.capacity.iter().map(|u| u * gamma).collect();
        let mut best = seed;
        let mut last_improvement = Instant::now();
        let mut nodes = 0;
        let mut stack = vec![Node {
            status: vec![Status::Free; nf],
            forced: vec![None; ns],
            forbidden: vec![false; ns * nf],
        }];
        while let Some(node) = stack.pop() {
            nodes += 1;
            let out_of_time = deadline.is_some_and(|d| Instant::now() >= d)
                || no_improvement.is_some_and(|t| best.is_some() && last_improvement.elapsed() >= t);
            if out_of_time || max_nodes.is_some_and(|m| nodes > m) {
                return Ok(Search { complete: false, best, nodes });
            }
            let bound = best.as_ref().map_or(f64::INFINITY, |b| b.objective);

            let mut residual = caps.clone();
            let mut fixed = 0.0;
            for s in 0..ns {
                if let Some(w) = node.forced[s] {
                    residual[w] -= self.demand[s];
                    fixed += 2.0 * self.conn(s, w);
                }
            }
            fixed += (0..nf).filter(|&w| node.status[w] == Status::Open).map(|w| self.opening[w]).sum::<f64>();
            let sinks: Vec<usize> = (0..ns).filter(|&s| node.forced[s].is_none()).collect();
            let sources: Vec<usize> = (0..nf)
                .filter(|&w| node.status[w] != Status::Closed && residual[w].is_positive())
                .collect();
            let mut costs = Vec::with_capacity(sinks.len() * sources.len());
            for &s in &sinks {
                let d = rational::to_f64(&self.demand[s]);
                for &w in &sources {
                    costs.push(if node.forbidden[s * nf + w] {
                        f64::INFINITY
                    } else if node.status[w] == Status::Free {
                        2.0 * self.conn(s, w) / d + self.opening[w] / rational::to_f64(&caps[w])
                    } else {
                        2.0 * self.conn(s, w) / d
                    });
                }
            }
            let tp = TransportProblem::new(
                sinks.iter().map(|&s| self.demand[s]).collect(),
                sources.iter().map(|&w| residual[w]).collect(),
                costs,
            );
            let sol = match solve_transport(&tp) {
                Ok(sol) => sol,
                Err(Error::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            };
            let lb = fixed + sol.objective;
            if !better(lb, bound) {
                continue;
            }

            // rounding heuristic for an incumbent
            let mut choice: Vec<Option<usize>> = node.forced.clone();
            let mut used = node.status.iter().map(|s| *s == Status::Open).collect::<Vec<_>>();
            let mut left = residual.clone();
            let mut split = Vec::new();
            for (i, &s) in sinks.iter().enumerate() {
                let pos: Vec<usize> = (0..sources.len()).filter(|&j| sol.flow(i, j).is_positive()).collect();
                for &j in &pos {
                    used[sources[j]] = true;
                }
                if pos.len() == 1 {
                    let w = sources[pos[0]];
                    choice[s] = Some(w);
                    left[w] -= self.demand[s];
                } else {
                    split.push((i, s));
                }
            }
            split.sort_by(|a, b| self.demand[b.1].cmp(&self.demand[a.1]).then(a.1.cmp(&b.1)));
            let mut ok = true;
            for &(_, s) in &split {
                let pick = |only_used: bool| {
                    (0..nf)
                        .filter(|&w| node.status[w] != Status::Closed && !node.forbidden[s * nf + w])
                        .filter(|&w| !only_used || used[w])
                        .filter(|&w| left[w] >= self.demand[s])
                        .min_by(|&a, &b| self.conn(s, a).total_cmp(&self.conn(s, b)).then(a.cmp(&b)))
                };
                match pick(true).or_else(|| pick(false)) {
                    Some(w) => {
                        choice[s] = Some(w);
                        left[w] -= self.demand[s];
                        used[w] = true;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let facility_of: Vec<usize> = choice.iter().map(|c| c.unwrap()).collect();
                let obj = self.objective(&facility_of);
                if best.as_ref().map_or(true, |b| better(obj, b.objective)) {
                    best = Some(Incumbent { facility_of, objective: obj });
                    last_improvement = Instant::now();
                    if stop_at_first {
                        return Ok(Search { complete: false, best, nodes });
                    }
                }
            }

            // branching
            let mut frac: Option<(usize, f64)> = None;
            for (j, &w) in sources.iter().enumerate() {
                if node.status[w] != Status::Free {
                    continue;
                }
                let load = sol.source_load(j);
                if load.is_positive() && load < caps[w] {
                    let z = rational::to_f64(&(load / caps[w]));
                    if frac.map_or(true, |(_, best_z)| (z - 0.5).abs() < (best_z - 0.5).abs()) {
                        frac = Some((w, z));
                    }
                }
            }
            if let Some((w, z)) = frac {
                let mut open = node.clone();
                open.status[w] = Status::Open;
                let mut closed = node;
                closed.status[w] = Status::Closed;
                if z >= 0.5 {
                    stack.push(closed);
                    stack.push(open);
                } else {
                    stack.push(open);
                    stack.push(closed);
                }
                continue;
            }
            let Some(&(i, s)) = split.first() else {
                continue;
            };
            let j = (0..sources.len())
                .max_by(|&a, &b| sol.flow(i, a).cmp(sol.flow(i, b)).then(b.cmp(&a)))
                .unwrap();
            let w = sources[j];
            let mut forbid = node.clone();
            forbid.forbidden[s * nf + w] = true;
            stack.push(forbid);
            if residual[w] >= self.demand[s] {
                let mut force = node;
                force.forced[s] = Some(w);
                if force.status[w] == Status::Free {
                    force.status[w] = Status::Open;
                }
                stack.push(force);
            }
        }
        Ok(Search { complete: true, best, nodes })
    }
}

/// Solves the cluster assignment integer program by branch-and-bound. When
/// it is infeasible the capacities are scaled by the smallest `gamma` found
/// by bisection that admits a solution.
pub fn solve_ip(clust: &Clustering, inst: &Instance, budget: &IpBudget) -> Result<IpOutcome> {
    let model = IpModel {
        demand: clust.clusters.iter().map(|s| s.demand).collect(),
        conn: connection_costs(clust, inst),
        opening: inst.facilities.iter().map(|f| f.opening_cost).collect(),
        capacity: inst.facilities.iter().map(|f| f.capacity).collect(),
        clust,
    };
    if rational::sum(&model.demand) > inst.total_capacity() {
        return Err(Error::Infeasible("total demand exceeds total facility capacity".into()));
    }
    let start = Instant::now();
    let deadline = budget.total.map(|t| start + t);
    let finish = |inc: Incumbent, gamma: Rational, interrupted: bool, nodes: usize| {
        let provenance = if gamma > Rational::one() { Provenance::IpEscalated } else { Provenance::Ip };
        let assignment = ClusterAssignment::from_choice(
            inc.facility_of,
            model.clust,
            model.nf(),
            provenance,
            gamma,
            0,
        );
        IpOutcome {
            open: assignment.used_facilities(),
            objective: inc.objective,
            assignment,
            interrupted,
            nodes,
        }
    };

    let one = Rational::one();
    let first = model.search(&one, deadline, budget.no_improvement, budget.max_nodes, false, None)?;
    let mut nodes = first.nodes;
    if let Some(inc) = first.best {
        return Ok(finish(inc, one, !first.complete, nodes));
    }

    // escalation: start from a rounded LP over all facilities
    let all: Vec<usize> = (0..model.nf()).collect();
    let mut costs = Vec::new();
    for s in 0..model.ns() {
        let d = rational::to_f64(&model.demand[s]);
        for &w in &all {
            costs.push(2.0 * model.conn(s, w) / d
                + model.opening[w] / rational::to_f64(&model.capacity[w]));
        }
    }
    let tp = TransportProblem::new(model.demand.clone(), model.capacity.clone(), costs);
    let lp = solve_transport(&tp)?;
    let rounded = round_vertex(&lp, &tp.costs)?;
    let mut hi_choice = rounded.choice.clone();
    let mut hi = model.max_ratio(&hi_choice).max(one);
    let mut lo = one;
    let tol = rational::ratio(1, 1_000_000);
    while hi - lo > tol {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let mid = (lo + hi) / rational::rat(2);
        let probe = model.search(&mid, deadline, None, Some(budget.probe_nodes), true, None)?;
        nodes += probe.nodes;
        match probe.best {
            Some(inc) => {
                hi = model.max_ratio(&inc.facility_of).max(one);
                hi_choice = inc.facility_of;
            }
            None => lo = mid,
        }
    }
    let seed = Incumbent { objective: model.objective(&hi_choice), facility_of: hi_choice };
    let last = model.search(&hi, deadline, budget.no_improvement, budget.max_nodes, false, Some(seed))?;
    nodes += last.nodes;
    let inc = last.best.expect("seeded search keeps its incumbent");
    let gamma = model.max_ratio(&inc.facility_of).max(one);
    Ok(finish(inc, gamma, !last.complete, nodes))
}
