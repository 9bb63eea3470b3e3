//! Capacitated facility location subproblems: construction, local search and
//! an exact branch-and-bound over the open set.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use num_traits::{Signed, Zero};

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::model::{Instance, COST_TOL};
use crate::rational::{self, Rational};
use crate::transport::{solve_transport, TransportProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CflMode {
    /// One demand point per client, distances `2c/ū`.
    Raw,
    /// One demand point per cluster, distance `min` over its tree.
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Client(usize),
    Cluster(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CflInstance {
    pub demands: Vec<Rational>,
    pub origins: Vec<Origin>,
    pub capacities: Vec<Rational>,
    pub opening: Vec<f64>,
    /// Connection cost per unit of demand, points × facilities.
    pub unit_costs: Vec<f64>,
}

impl CflInstance {
    pub fn num_points(&self) -> usize {
        self.demands.len()
    }

    pub fn num_facilities(&self) -> usize {
        self.capacities.len()
    }

    pub fn unit_cost(&self, p: usize, w: usize) -> f64 {
        self.unit_costs[p * self.num_facilities() + w]
    }

    pub fn total_demand(&self) -> Rational {
        rational::sum(&self.demands)
    }
}

pub fn build_cfl(
    inst: &Instance,
    mode: CflMode,
    clustering: Option<&Clustering>,
    free_facilities: &[usize],
) -> Result<CflInstance> {
    let nf = inst.num_facilities();
    let scale = 2.0 / rational::to_f64(&inst.vehicle_capacity);
    let (demands, origins, unit_costs) = match mode {
        CflMode::Raw => {
            let mut costs = Vec::with_capacity(inst.num_clients() * nf);
            for v in 0..inst.num_clients() {
                for w in 0..nf {
                    costs.push(scale * inst.fc(v, w));
                }
            }
            (
                inst.clients.iter().map(|c| c.demand).collect(),
                (0..inst.num_clients()).map(Origin::Client).collect(),
                costs,
            )
        }
        CflMode::Clustered => {
            let clust = clustering.ok_or_else(|| {
                Error::Parameter("clustered CFL needs a clustering".into())
            })?;
            let mut costs = Vec::with_capacity(clust.clusters.len() * nf);
            for s in &clust.clusters {
                for w in 0..nf {
                    costs.push(scale * s.connection(&clust.work, inst, w).0);
                }
            }
            (
                clust.clusters.iter().map(|s| s.demand).collect(),
                (0..clust.clusters.len()).map(Origin::Cluster).collect(),
                costs,
            )
        }
    };
    let mut opening: Vec<f64> = inst.facilities.iter().map(|f| f.opening_cost).collect();
    for &w in free_facilities {
        if w >= nf {
            return Err(Error::UnknownFacility(w));
        }
        opening[w] = 0.0;
    }
    Ok(CflInstance {
        demands,
        origins,
        capacities: inst.facilities.iter().map(|f| f.capacity).collect(),
        opening,
        unit_costs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CflSolution {
    /// `F2`, sorted.
    pub open: Vec<usize>,
    /// `x̃`, points × facilities.
    pub assignment: Vec<Rational>,
    pub opening_cost: f64,
    pub connection_cost: f64,
    pub exact: bool,
    pub interrupted: bool,
}

impl CflSolution {
    pub fn cost(&self) -> f64 {
        self.opening_cost + self.connection_cost
    }

    /// Checks demand equality, capacities and closed-facility emptiness.
    pub fn check(&self, p: &CflInstance) -> std::result::Result<(), String> {
        let nf = p.num_facilities();
        let mut open = vec![false; nf];
        for &w in &self.open {
            open[w] = true;
        }
        let mut load = vec![Rational::zero(); nf];
        for (i, d) in p.demands.iter().enumerate() {
            let row = &self.assignment[i * nf..(i + 1) * nf];
            if rational::sum(row) != *d {
                return Err(format!("point {i} not fully assigned"));
            }
            for (w, x) in row.iter().enumerate() {
                if x.is_negative() {
                    return Err(format!("negative assignment at ({i},{w})"));
                }
                if x.is_positive() && !open[w] {
                    return Err(format!("point {i} assigned to closed facility {w}"));
                }
                load[w] += x;
            }
        }
        for w in 0..nf {
            if load[w] > p.capacities[w] {
                return Err(format!("facility {w} over capacity"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CflBudget {
    pub total: Option<Duration>,
    pub no_improvement: Option<Duration>,
    pub max_nodes: Option<usize>,
}

impl CflBudget {
    pub fn with_total(total: Duration) -> Self {
        CflBudget { total: Some(total), ..Default::default() }
    }
}

struct Clock {
    start: Instant,
    last_improvement: Instant,
    budget: CflBudget,
}

impl Clock {
    fn new(budget: &CflBudget) -> Self {
        let now = Instant::now();
        Clock { start: now, last_improvement: now, budget: *budget }
    }

    fn improved(&mut self) {
        self.last_improvement = Instant::now();
    }

    fn expired(&self) -> bool {
        self.budget.total.is_some_and(|t| self.start.elapsed() >= t)
            || self
                .budget
                .no_improvement
                .is_some_and(|t| self.last_improvement.elapsed() >= t)
    }
}

struct Evaluator<'a> {
    p: &'a CflInstance,
    cache: HashMap<Vec<bool>, Option<f64>>,
}

impl<'a> Evaluator<'a> {
    fn new(p: &'a CflInstance) -> Self {
        Evaluator { p, cache: HashMap::new() }
    }

    fn problem(&self, open: &[bool], surcharge: Option<&[bool]>) -> (TransportProblem, Vec<usize>) {
        let p = self.p;
        let nf = p.num_facilities();
        let sources: Vec<usize> = (0..nf)
            .filter(|&w| open[w] && p.capacities[w].is_positive())
            .collect();
        let mut costs = Vec::with_capacity(p.num_points() * sources.len());
        for i in 0..p.num_points() {
            for &w in &sources {
                let extra = match surcharge {
                    Some(free) if free[w] => p.opening[w] / rational::to_f64(&p.capacities[w]),
                    _ => 0.0,
                };
                costs.push(p.unit_cost(i, w) + extra);
            }
        }
        let caps = sources.iter().map(|&w| p.capacities[w]).collect();
        (TransportProblem::new(p.demands.clone(), caps, costs), sources)
    }

    fn opening(&self, open: &[bool]) -> f64 {
        (0..open.len()).filter(|&w| open[w]).map(|w| self.p.opening[w]).sum()
    }

    fn cost(&mut self, open: &[bool]) -> Result<Option<f64>> {
        if let Some(c) = self.cache.get(open) {
            return Ok(*c);
        }
        let (tp, _) = self.problem(open, None);
        let r = match solve_transport(&tp) {
            Ok(sol) => Some(self.opening(open) + sol.objective),
            Err(Error::Infeasible(_)) => None,
            Err(e) => return Err(e),
        };
        self.cache.insert(open.to_vec(), r);
        Ok(r)
    }

    fn solution(&self, open: &[bool], exact: bool, interrupted: bool) -> Result<CflSolution> {
        let p = self.p;
        let nf = p.num_facilities();
        let (tp, sources) = self.problem(open, None);
        let sol = solve_transport(&tp)?;
        let mut assignment = vec![Rational::zero(); p.num_points() * nf];
        let mut used = vec![false; nf];
        for i in 0..p.num_points() {
            for (j, &w) in sources.iter().enumerate() {
                let x = sol.flow(i, j);
                if x.is_positive() {
                    used[w] = true;
                }
                assignment[i * nf + w] = *x;
            }
        }
        // facilities opened without load only add cost
        let open: Vec<usize> = (0..nf).filter(|&w| open[w] && used[w]).collect();
        let opening_cost = open.iter().map(|&w| p.opening[w]).sum();
        Ok(CflSolution {
            open,
            assignment,
            opening_cost,
            connection_cost: sol.objective,
            exact,
            interrupted,
        })
    }
}

fn feasible_totals(p: &CflInstance) -> Result<()> {
    if p.total_demand() > rational::sum(&p.capacities) {
        return Err(Error::Infeasible("total demand exceeds total capacity".into()));
    }
    Ok(())
}

fn better(a: f64, b: f64) -> bool {
    if b.is_infinite() {
        return a < b;
    }
    a < b - COST_TOL * b.abs().max(1.0)
}

/// Initial open set: ascending `f/u` until the capacity covers the demand.
pub fn greedy_open_set(p: &CflInstance) -> Vec<bool> {
    let nf = p.num_facilities();
    let mut order: Vec<usize> = (0..nf).filter(|&w| p.capacities[w].is_positive()).collect();
    order.sort_by(|&a, &b| {
        let ra = p.opening[a] / rational::to_f64(&p.capacities[a]);
        let rb = p.opening[b] / rational::to_f64(&p.capacities[b]);
        ra.total_cmp(&rb).then(a.cmp(&b))
    });
    let need = p.total_demand();
    let mut open = vec![false; nf];
    let mut have = Rational::zero();
    for w in order {
        if have >= need {
            break;
        }
        open[w] = true;
        have += p.capacities[w];
    }
    open
}

/// First-improvement local search over open, close and swap moves.
pub fn local_search_cfl(p: &CflInstance, budget: &CflBudget) -> Result<CflSolution> {
    feasible_totals(p)?;
    let nf = p.num_facilities();
    let mut eval = Evaluator::new(p);
    let mut clock = Clock::new(budget);
    let mut open = greedy_open_set(p);
    let mut cur = eval
        .cost(&open)?
        .ok_or_else(|| Error::Infeasible("no feasible assignment for the initial open set".into()))?;
    let mut interrupted = false;

    'search: loop {
        let opened: Vec<usize> = (0..nf).filter(|&w| open[w]).collect();
        let closed: Vec<usize> = (0..nf).filter(|&w| !open[w]).collect();
        let mut moves: Vec<(Option<usize>, Option<usize>)> = Vec::new();
        moves.extend(opened.iter().map(|&w| (Some(w), None)));
        moves.extend(closed.iter().map(|&w| (None, Some(w))));
        for &a in &opened {
            moves.extend(closed.iter().map(|&b| (Some(a), Some(b))));
        }
        for (close, add) in moves {
            if clock.expired() {
                interrupted = true;
                break 'search;
            }
            let mut cand = open.clone();
            if let Some(w) = close {
                cand[w] = false;
            }
            if let Some(w) = add {
                cand[w] = true;
            }
            if let Some(c) = eval.cost(&cand)? {
                if better(c, cur) {
                    open = cand;
                    cur = c;
                    clock.improved();
                    continue 'search;
                }
            }
        }
        break;
    }
    eval.solution(&open, false, interrupted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Free,
    Open,
    Closed,
}

/// Lagrangian relaxation of the demand constraints. Each facility becomes a
/// continuous knapsack over reduced costs `c − λ`; opening decisions are
/// relaxed to `[0, 1]` under the cover constraint `Σ u·y ≥ D`.
struct Lagrangian<'a> {
    p: &'a CflInstance,
    demand: Vec<f64>,
    capacity: Vec<f64>,
    total: f64,
}

struct LagrangianStep {
    bound: f64,
    y: Vec<f64>,
    subgradient: Vec<f64>,
}

impl<'a> Lagrangian<'a> {
    fn new(p: &'a CflInstance) -> Self {
        let demand: Vec<f64> = p.demands.iter().map(rational::to_f64).collect();
        let total = demand.iter().sum();
        Lagrangian { p, demand, capacity: p.capacities.iter().map(rational::to_f64).collect(), total }
    }

    fn initial_multipliers(&self, state: &[Status]) -> Vec<f64> {
        let nf = self.p.num_facilities();
        (0..self.p.num_points())
            .map(|i| {
                (0..nf)
                    .filter(|&w| state[w] != Status::Closed && self.capacity[w] > 0.0)
                    .map(|w| self.p.unit_cost(i, w) + self.p.opening[w] / self.capacity[w])
                    .fold(f64::INFINITY, f64::min)
            })
            .map(|x| if x.is_finite() { x } else { 0.0 })
            .collect()
    }

    fn evaluate(&self, state: &[Status], lambda: &[f64]) -> Option<LagrangianStep> {
        let p = self.p;
        let (np, nf) = (p.num_points(), p.num_facilities());
        let mut value = vec![0.0; nf];
        let mut fills: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nf];
        let mut reduced: Vec<(f64, usize)> = Vec::with_capacity(np);
        for w in 0..nf {
            if state[w] == Status::Closed || self.capacity[w] <= 0.0 {
                continue;
            }
            reduced.clear();
            reduced.extend((0..np).map(|i| (p.unit_cost(i, w) - lambda[i], i)).filter(|&(r, _)| r < 0.0));
            reduced.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = self.capacity[w];
            let mut v = p.opening[w];
            for &(r, i) in &reduced {
                if left <= 0.0 {
                    break;
                }
                let x = self.demand[i].min(left);
                left -= x;
                v += r * x;
                fills[w].push((i, x));
            }
            value[w] = v;
        }

        let mut y = vec![0.0; nf];
        let mut have = 0.0;
        let mut bound: f64 = lambda.iter().zip(&self.demand).map(|(l, d)| l * d).sum();
        for w in 0..nf {
            let take = match state[w] {
                Status::Open => true,
                Status::Free => value[w] < 0.0 && self.capacity[w] > 0.0,
                Status::Closed => false,
            };
            if take {
                y[w] = 1.0;
                have += self.capacity[w];
                bound += value[w];
            }
        }
        if have < self.total {
            let mut rest: Vec<usize> = (0..nf)
                .filter(|&w| state[w] == Status::Free && y[w] == 0.0 && self.capacity[w] > 0.0)
                .collect();
            rest.sort_by(|&a, &b| {
                (value[a] / self.capacity[a]).total_cmp(&(value[b] / self.capacity[b])).then(a.cmp(&b))
            });
            for w in rest {
                if have >= self.total {
                    break;
                }
                let frac = ((self.total - have) / self.capacity[w]).min(1.0);
                y[w] = frac;
                have += frac * self.capacity[w];
                bound += frac * value[w];
            }
            if have < self.total * (1.0 - 1e-12) {
                return None;
            }
        }

        let mut subgradient = self.demand.clone();
        for w in 0..nf {
            if y[w] > 0.0 {
                for &(i, x) in &fills[w] {
                    subgradient[i] -= y[w] * x;
                }
            }
        }
        Some(LagrangianStep { bound, y, subgradient })
    }

    /// Subgradient ascent from `lambda`, which is left at the best
    /// multipliers found. `None` when the node is infeasible.
    fn ascend(&self, state: &[Status], lambda: &mut Vec<f64>, iterations: usize, upper: f64) -> Option<LagrangianStep> {
        let mut best = self.evaluate(state, lambda)?;
        let mut best_lambda = lambda.clone();
        let mut cur = LagrangianStep { bound: best.bound, y: best.y.clone(), subgradient: best.subgradient.clone() };
        let mut theta = 2.0;
        let mut stall = 0;
        for _ in 0..iterations {
            if !better(best.bound, upper) || theta < 1e-4 {
                break;
            }
            let norm: f64 = cur.subgradient.iter().map(|g| g * g).sum();
            if norm <= 1e-18 {
                break;
            }
            let gap = if upper.is_finite() { upper - cur.bound } else { cur.bound.abs().max(1.0) * 0.1 };
            let step = theta * gap.max(1e-12) / norm;
            for (l, g) in lambda.iter_mut().zip(&cur.subgradient) {
                *l += step * g;
            }
            cur = self.evaluate(state, lambda)?;
            if cur.bound > best.bound + 1e-12 * best.bound.abs().max(1.0) {
                best = LagrangianStep { bound: cur.bound, y: cur.y.clone(), subgradient: cur.subgradient.clone() };
                best_lambda.clone_from(lambda);
                stall = 0;
            } else {
                stall += 1;
                if stall >= 8 {
                    theta /= 2.0;
                    stall = 0;
                }
            }
        }
        *lambda = best_lambda;
        Some(best)
    }
}

const ROOT_ASCENT: usize = 300;
const NODE_ASCENT: usize = 40;

/// Branch-and-bound over the open set with a transportation relaxation in
/// which undecided facilities pay `f/u` per unit.
pub fn exact_cfl(p: &CflInstance, size_cap: usize, budget: &CflBudget) -> Result<CflSolution> {
    let size = p.num_points() * p.num_facilities();
    if size > size_cap {
        return Err(Error::SizeCap { what: "exact CFL", size, cap: size_cap });
    }
    feasible_totals(p)?;
    let nf = p.num_facilities();
    let mut eval = Evaluator::new(p);
    let mut clock = Clock::new(budget);

    let mut best_open = greedy_open_set(p);
    let mut best = eval.cost(&best_open)?.unwrap_or(f64::INFINITY);
    if !best.is_finite() {
        best_open = p.capacities.iter().map(|c| c.is_positive()).collect();
        best = eval
            .cost(&best_open)?
            .ok_or_else(|| Error::Infeasible("no feasible assignment".into()))?;
    }

    let lagrangian = Lagrangian::new(p);
    let root = vec![Status::Free; nf];
    let root_lambda = lagrangian.initial_multipliers(&root);
    let mut stack = vec![(root, root_lambda, ROOT_ASCENT)];
    let mut nodes = 0usize;
    let mut interrupted = false;
    while let Some((state, mut lambda, ascent)) = stack.pop() {
        nodes += 1;
        if clock.expired() || budget.max_nodes.is_some_and(|m| nodes > m) {
            interrupted = true;
            break;
        }
        let Some(lag) = lagrangian.ascend(&state, &mut lambda, ascent, best) else {
            continue;
        };
        if !better(lag.bound, best) {
            continue;
        }
        let lag_open: Vec<bool> = lag.y.iter().map(|&y| y > 0.0).collect();
        if let Some(c) = eval.cost(&lag_open)? {
            if better(c, best) {
                best = c;
                best_open = lag_open;
                clock.improved();
            }
        }
        let candidate: Vec<bool> = state.iter().map(|s| *s != Status::Closed).collect();
        let free: Vec<bool> = state.iter().map(|s| *s == Status::Free).collect();
        let (tp, sources) = eval.problem(&candidate, Some(&free));
        let sol = match solve_transport(&tp) {
            Ok(s) => s,
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        };
        let fixed: f64 = (0..nf).filter(|&w| state[w] == Status::Open).map(|w| p.opening[w]).sum();
        let lb = fixed + sol.objective;
        if !better(lb, best) {
            continue;
        }

        let mut inc: Vec<bool> = state.iter().map(|s| *s == Status::Open).collect();
        let mut branch: Option<(usize, f64)> = None;
        for (j, &w) in sources.iter().enumerate() {
            if state[w] != Status::Free {
                continue;
            }
            let load = sol.source_load(j);
            if load.is_positive() {
                inc[w] = true;
                if load < p.capacities[w] {
                    let z = rational::to_f64(&(load / p.capacities[w]));
                    let score = (z - 0.5).abs();
                    if branch.map_or(true, |(_, s)| score < s) {
                        branch = Some((w, z));
                    }
                }
            }
        }
        if let Some(c) = eval.cost(&inc)? {
            if better(c, best) {
                best = c;
                best_open = inc;
                clock.improved();
            }
        }
        let Some((w, z)) = branch else { continue };
        let mut open_child = state.clone();
        open_child[w] = Status::Open;
        let mut closed_child = state;
        closed_child[w] = Status::Closed;
        let (first, second) = if z >= 0.5 { (closed_child, open_child) } else { (open_child, closed_child) };
        stack.push((first, lambda.clone(), NODE_ASCENT));
        stack.push((second, lambda, NODE_ASCENT));
    }
    eval.solution(&best_open, !interrupted, interrupted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::cluster_instance;
    use crate::generator::lemma3_family;
    use crate::model::fixtures::{e2, euclid};
    use crate::rational::rat;

    fn unlimited() -> CflBudget {
        CflBudget::default()
    }

    #[test]
    fn raw_lemma3_costs() {
        let inst = lemma3_family(5);
        let p = build_cfl(&inst, CflMode::Raw, None, &[]).unwrap();
        assert_eq!(p.num_points(), 5);
        assert_eq!(p.num_facilities(), 2);
        for v in 0..5 {
            assert_eq!(p.unit_cost(v, 0), 0.0);
            assert_eq!(p.unit_cost(v, 1), 0.5);
        }
    }

    #[test]
    fn clustered_e2_with_free_f1_is_zero() {
        let inst = e2();
        let (_, clust) = cluster_instance(&inst, &rat(1)).unwrap();
        let p = build_cfl(&inst, CflMode::Clustered, Some(&clust), &clust.f1).unwrap();
        assert_eq!(p.demands, vec![rat(7)]);
        assert_eq!(p.unit_cost(0, 0), 0.0);
        assert_eq!(p.opening, vec![0.0]);
        let s = exact_cfl(&p, 100, &unlimited()).unwrap();
        assert_eq!(s.cost(), 0.0);
        assert!(build_cfl(&inst, CflMode::Clustered, None, &[]).is_err());
    }

    #[test]
    fn single_facility_forced() {
        let inst = e2();
        let p = build_cfl(&inst, CflMode::Raw, None, &[]).unwrap();
        for s in [local_search_cfl(&p, &unlimited()).unwrap(), exact_cfl(&p, 100, &unlimited()).unwrap()] {
            assert_eq!(s.open, vec![0]);
            assert!((s.cost() - 7.2).abs() < 1e-12);
            s.check(&p).unwrap();
        }
    }

    #[test]
    fn close_move_fires() {
        // greedy opens w1 first by f/u, then w2, after which w1 is redundant
        let inst = euclid(
            &[(0.0, 0.0, 2, 1.0), (0.0, 0.0, 6, 6.0)],
            &[(1.0, 0.0, rat(3)), (0.0, 1.0, rat(3))],
            rat(4),
        );
        let p = build_cfl(&inst, CflMode::Raw, None, &[]).unwrap();
        assert_eq!(greedy_open_set(&p), vec![true, true]);
        let s = local_search_cfl(&p, &unlimited()).unwrap();
        assert_eq!(s.open, vec![1]);
        assert!((s.opening_cost - 6.0).abs() < 1e-12);
    }

    #[test]
    fn lemma3_both_open() {
        let inst = lemma3_family(5);
        let p = build_cfl(&inst, CflMode::Raw, None, &[]).unwrap();
        let ls = local_search_cfl(&p, &unlimited()).unwrap();
        let ex = exact_cfl(&p, 100, &unlimited()).unwrap();
        assert_eq!(ls.open, vec![0, 1]);
        assert!((ls.cost() - 0.5).abs() < 1e-12);
        assert!((ex.cost() - 0.5).abs() < 1e-12);
        assert!(ex.exact && !ls.exact);
        assert_eq!(ex.assignment.iter().skip(0).step_by(2).fold(rat(0), |a, x| a + x), rat(4));
    }

    #[test]
    fn exact_lemma3_family() {
        for n in 3..9i128 {
            let p = build_cfl(&lemma3_family(n as usize), CflMode::Raw, None, &[]).unwrap();
            let s = exact_cfl(&p, 100, &unlimited()).unwrap();
            assert!((s.cost() - 2.0 / (n - 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn size_cap_and_infeasibility() {
        let p = build_cfl(&lemma3_family(5), CflMode::Raw, None, &[]).unwrap();
        assert!(matches!(exact_cfl(&p, 9, &unlimited()), Err(Error::SizeCap { .. })));
        let inst = euclid(&[(0.0, 0.0, 1, 0.0)], &[(0.0, 0.0, rat(2))], rat(2));
        let p = build_cfl(&inst, CflMode::Raw, None, &[]).unwrap();
        assert!(matches!(local_search_cfl(&p, &unlimited()), Err(Error::Infeasible(_))));
        assert!(matches!(exact_cfl(&p, 10, &unlimited()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn colocated_zero_cost() {
        let inst = euclid(
            &[(0.0, 0.0, 5, 0.0), (7.0, 7.0, 5, 0.0)],
            &[(0.0, 0.0, rat(3)), (7.0, 7.0, rat(5))],
            rat(3),
        );
        let p = build_cfl(&inst, CflMode::Raw, None, &[]).unwrap();
        assert_eq!(exact_cfl(&p, 100, &unlimited()).unwrap().cost(), 0.0);
    }

    /// Minimum over all open sets of opening cost plus optimal transport.
    fn enumerate(p: &CflInstance) -> Option<f64> {
        let nf = p.num_facilities();
        let mut eval = Evaluator::new(p);
        (0u32..1 << nf)
            .filter_map(|mask| {
                let open: Vec<bool> = (0..nf).map(|w| mask >> w & 1 == 1).collect();
                eval.cost(&open).unwrap()
            })
            .min_by(f64::total_cmp)
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(150))]
            #[test]
            fn exact_matches_enumeration_and_beats_local_search(
                facs in prop::collection::vec((0..20i32, 0..20i32, 1..9i128, 0..30i32), 1..5),
                cls in prop::collection::vec((0..20i32, 0..20i32, 1..5i128), 1..7),
                vcap in 1i128..6,
                free_first in any::<bool>(),
            ) {
                let f: Vec<_> = facs.iter().map(|&(x, y, u, c)| (x as f64, y as f64, u, c as f64)).collect();
                let c: Vec<_> = cls.iter().map(|&(x, y, d)| (x as f64, y as f64, rat(d))).collect();
                let inst = euclid(&f, &c, rat(vcap));
                prop_assume!(inst.total_demand() <= inst.total_capacity());
                let free: Vec<usize> = if free_first { vec![0] } else { vec![] };
                let p = build_cfl(&inst, CflMode::Raw, None, &free).unwrap();
                let ex = exact_cfl(&p, 1000, &unlimited()).unwrap();
                let ls = local_search_cfl(&p, &unlimited()).unwrap();
                ex.check(&p).map_err(TestCaseError::fail)?;
                ls.check(&p).map_err(TestCaseError::fail)?;
                let oracle = enumerate(&p).unwrap();
                prop_assert!((ex.cost() - oracle).abs() <= 1e-9 * oracle.max(1.0));
                prop_assert!(ex.cost() <= ls.cost() + 1e-9 * ls.cost().max(1.0));
                if free_first {
                    let full = build_cfl(&inst, CflMode::Raw, None, &[]).unwrap();
                    let open: Vec<bool> = (0..p.num_facilities()).map(|w| ex.open.contains(&w)).collect();
                    let with = Evaluator::new(&p).cost(&open).unwrap().unwrap();
                    let without = Evaluator::new(&full).cost(&open).unwrap().unwrap();
                    prop_assert!(with <= without + 1e-12);
                }
            }

            #[test]
            fn lagrangian_never_exceeds_optimum(
                facs in prop::collection::vec((0..20i32, 0..20i32, 1..9i128, 0..30i32), 1..5),
                cls in prop::collection::vec((0..20i32, 0..20i32, 1..5i128), 1..7),
                fix in prop::collection::vec(0..3u8, 4),
            ) {
                let f: Vec<_> = facs.iter().map(|&(x, y, u, c)| (x as f64, y as f64, u, c as f64)).collect();
                let c: Vec<_> = cls.iter().map(|&(x, y, d)| (x as f64, y as f64, rat(d))).collect();
                let inst = euclid(&f, &c, rat(3));
                prop_assume!(inst.total_demand() <= inst.total_capacity());
                let p = build_cfl(&inst, CflMode::Raw, None, &[]).unwrap();
                let nf = p.num_facilities();
                let state: Vec<Status> = (0..nf)
                    .map(|w| [Status::Free, Status::Open, Status::Closed][fix[w] as usize])
                    .collect();
                let mut eval = Evaluator::new(&p);
                let oracle = (0u32..1 << nf)
                    .filter_map(|mask| {
                        let open: Vec<bool> = (0..nf).map(|w| mask >> w & 1 == 1).collect();
                        let fits = (0..nf).all(|w| match state[w] {
                            Status::Open => open[w],
                            Status::Closed => !open[w],
                            Status::Free => true,
                        });
                        if fits { eval.cost(&open).unwrap() } else { None }
                    })
                    .min_by(f64::total_cmp);
                let lag = Lagrangian::new(&p);
                let mut lambda = lag.initial_multipliers(&state);
                let step = lag.ascend(&state, &mut lambda, 200, f64::INFINITY);
                match (oracle, step) {
                    (Some(opt), Some(step)) => prop_assert!(step.bound <= opt + 1e-9 * opt.max(1.0)),
                    (Some(_), None) => prop_assert!(false, "feasible node declared infeasible"),
                    _ => {}
                }
            }
        }
    }
}
