//! Instances, solutions and the feasibility checker.

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// Comparison tolerance for distances and costs. Never used for demands.
pub const COST_TOL: f64 = 1e-9;

/// Above this many sites the triangle inequality is only sampled.
pub const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// A vertex of `V = F ∪ C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Facility(usize),
    Client(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub id: String,
    #[serde(with = "rational::serde_str")]
    pub capacity: Rational,
    pub opening_cost: f64,
    pub position: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Client {
    pub id: String,
    #[serde(with = "rational::serde_str")]
    pub demand: Rational,
    pub position: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    /// Distances are recomputed from positions on every query.
    Euclidean,
    /// Row-major `(|F|+|C|)²` matrix, facilities first, then clients.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub facilities: Vec<Facility>,
    pub clients: Vec<Client>,
    #[serde(with = "rational::serde_str")]
    pub vehicle_capacity: Rational,
    pub metric: Metric,
}

impl Instance {
    pub fn num_facilities(&self) -> usize {
        self.facilities.len()
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn num_sites(&self) -> usize {
        self.facilities.len() + self.clients.len()
    }

    pub fn site_index(&self, s: Site) -> usize {
        match s {
            Site::Facility(w) => w,
            Site::Client(v) => self.facilities.len() + v,
        }
    }

    pub fn site_at(&self, idx: usize) -> Site {
        if idx < self.facilities.len() {
            Site::Facility(idx)
        } else {
            Site::Client(idx - self.facilities.len())
        }
    }

    fn position(&self, s: Site) -> Option<Point> {
        match s {
            Site::Facility(w) => self.facilities[w].position,
            Site::Client(v) => self.clients[v].position,
        }
    }

    pub fn dist(&self, a: Site, b: Site) -> f64 {
        match &self.metric {
            Metric::Euclidean => {
                let pa = self.position(a).expect("euclidean site without position");
                let pb = self.position(b).expect("euclidean site without position");
                pa.dist(&pb)
            }
            Metric::Explicit(m) => {
                let n = self.num_sites();
                m[self.site_index(a) * n + self.site_index(b)]
            }
        }
    }

    pub fn fc(&self, v: usize, w: usize) -> f64 {
        self.dist(Site::Client(v), Site::Facility(w))
    }

    pub fn cc(&self, a: usize, b: usize) -> f64 {
        self.dist(Site::Client(a), Site::Client(b))
    }

    pub fn total_demand(&self) -> Rational {
        rational::sum(self.clients.iter().map(|c| &c.demand))
    }

    pub fn total_capacity(&self) -> Rational {
        rational::sum(self.facilities.iter().map(|f| &f.capacity))
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.metric, Metric::Euclidean)
    }

    /// Cost of a closed walk `w, v1, ..., vk, w`.
    pub fn tour_cost(&self, facility: usize, clients: &[usize]) -> f64 {
        let Some((&first, _)) = clients.split_first() else {
            return 0.0;
        };
        let w = Site::Facility(facility);
        let mut cost = self.dist(w, Site::Client(first));
        for pair in clients.windows(2) {
            cost += self.cc(pair[0], pair[1]);
        }
        cost + self.dist(Site::Client(*clients.last().unwrap()), w)
    }

    /// `ū̄ = ε·ū`, the cluster demand cap.
    pub fn cluster_cap(&self, epsilon: &Rational) -> Rational {
        epsilon * self.vehicle_capacity
    }

    pub fn facility_by_id(&self, id: &str) -> Option<usize> {
        self.facilities.iter().position(|f| f.id == id)
    }

    pub fn client_by_id(&self, id: &str) -> Option<usize> {
        self.clients.iter().position(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    NonPositiveDemand { client: usize },
    NonPositiveCapacity { facility: usize },
    NegativeOpeningCost { facility: usize },
    NonPositiveVehicleCapacity,
    MissingPosition { site: Site },
    MatrixShape { expected: usize, found: usize },
    NegativeDistance { a: Site, b: Site },
    NonzeroSelfDistance { site: Site },
    Asymmetric { a: Site, b: Site },
    Triangle { a: Site, b: Site, via: Site },
    DuplicateId { id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

fn site_label(inst: &Instance, s: Site) -> String {
    match s {
        Site::Facility(w) => inst.facilities[w].id.clone(),
        Site::Client(v) => inst.clients[v].id.clone(),
    }
}

/// Checks every instance invariant. Violations are returned as data.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind: ViolationKind, detail: String| out.push(Violation { kind, detail });

    for (v, c) in inst.clients.iter().enumerate() {
        if !c.demand.is_positive() {
            push(
                ViolationKind::NonPositiveDemand { client: v },
                format!("client {} has demand {}", c.id, rational::format(&c.demand)),
            );
        }
    }
    for (w, f) in inst.facilities.iter().enumerate() {
        if !f.capacity.is_positive() {
            push(
                ViolationKind::NonPositiveCapacity { facility: w },
                format!("facility {} has capacity {}", f.id, rational::format(&f.capacity)),
            );
        }
        if !(f.opening_cost >= 0.0) {
            push(
                ViolationKind::NegativeOpeningCost { facility: w },
                format!("facility {} has opening cost {}", f.id, f.opening_cost),
            );
        }
    }
    if !inst.vehicle_capacity.is_positive() {
        push(
            ViolationKind::NonPositiveVehicleCapacity,
            format!("vehicle capacity {}", rational::format(&inst.vehicle_capacity)),
        );
    }
    let mut ids: Vec<&str> = inst
        .facilities
        .iter()
        .map(|f| f.id.as_str())
        .chain(inst.clients.iter().map(|c| c.id.as_str()))
        .collect();
    ids.sort_unstable();
    for pair in ids.windows(2) {
        if pair[0] == pair[1] {
            push(
                ViolationKind::DuplicateId { id: pair[0].to_string() },
                format!("id {} used twice", pair[0]),
            );
        }
    }

    let n = inst.num_sites();
    match &inst.metric {
        Metric::Euclidean => {
            let missing: Vec<Site> = (0..n)
                .map(|i| inst.site_at(i))
                .filter(|&s| inst.position(s).is_none())
                .collect();
            if !missing.is_empty() {
                for s in missing {
                    push(
                        ViolationKind::MissingPosition { site: s },
                        format!("{} has no coordinates", site_label(inst, s)),
                    );
                }
                return out;
            }
        }
        Metric::Explicit(m) => {
            if m.len() != n * n {
                push(
                    ViolationKind::MatrixShape { expected: n * n, found: m.len() },
                    format!("distance matrix has {} entries, expected {}", m.len(), n * n),
                );
                return out;
            }
        }
    }

    for i in 0..n {
        let a = inst.site_at(i);
        if inst.dist(a, a) != 0.0 {
            push(
                ViolationKind::NonzeroSelfDistance { site: a },
                format!("c({0},{0}) = {1}", site_label(inst, a), inst.dist(a, a)),
            );
        }
        for j in (i + 1)..n {
            let b = inst.site_at(j);
            let ab = inst.dist(a, b);
            let ba = inst.dist(b, a);
            if !(ab >= 0.0) || !(ba >= 0.0) {
                push(
                    ViolationKind::NegativeDistance { a, b },
                    format!("c({},{}) = {}", site_label(inst, a), site_label(inst, b), ab.min(ba)),
                );
            }
            if (ab - ba).abs() > COST_TOL * ab.abs().max(1.0) {
                push(
                    ViolationKind::Asymmetric { a, b },
                    format!(
                        "c({0},{1}) = {2} but c({1},{0}) = {3}",
                        site_label(inst, a),
                        site_label(inst, b),
                        ab,
                        ba
                    ),
                );
            }
        }
    }

    let check = |a: usize, b: usize, via: usize, out: &mut Vec<Violation>| {
        let (sa, sb, sv) = (inst.site_at(a), inst.site_at(b), inst.site_at(via));
        let direct = inst.dist(sa, sb);
        let detour = inst.dist(sa, sv) + inst.dist(sv, sb);
        if direct > detour + COST_TOL * direct.abs().max(1.0) {
            out.push(Violation {
                kind: ViolationKind::Triangle { a: sa, b: sb, via: sv },
                detail: format!(
                    "c({},{}) = {} > {} via {}",
                    site_label(inst, sa),
                    site_label(inst, sb),
                    direct,
                    detour,
                    site_label(inst, sv)
                ),
            });
        }
    };
    if n <= EXHAUSTIVE_TRIANGLE_LIMIT {
        for a in 0..n {
            for b in (a + 1)..n {
                for via in 0..n {
                    if via != a && via != b {
                        check(a, b, via, &mut out);
                    }
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7269_616e_676c_65);
        for _ in 0..10 * n {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let via = rng.gen_range(0..n);
            if a != b && via != a && via != b {
                check(a, b, via, &mut out);
            }
        }
    }
    out
}

/// A vehicle route: leaves `facility`, visits `clients` in order, returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub facility: usize,
    pub clients: Vec<usize>,
    /// Amount delivered to `clients[i]`.
    #[serde(with = "rational::serde_str_vec")]
    pub service: Vec<Rational>,
}

impl Tour {
    pub fn load(&self) -> Rational {
        rational::sum(&self.service)
    }

    pub fn cost(&self, inst: &Instance) -> f64 {
        inst.tour_cost(self.facility, &self.clients)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub open: Vec<usize>,
    pub tours: Vec<Tour>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub total_cost: f64,
    pub routing_cost: f64,
    pub opening_cost: f64,
    /// Indexed by facility; zero for facilities without tours.
    #[serde(with = "rational::serde_str_vec")]
    pub loads: Vec<Rational>,
    pub max_relative_excess: f64,
    /// Constraints (open facility, full service, vehicle capacity).
    pub routing_feasible: bool,
    pub feasible_strict: bool,
    #[serde(with = "rational::serde_str")]
    pub slack_epsilon: Rational,
    pub feasible_relaxed: bool,
    pub single_tour_clients: usize,
    pub violations: Vec<String>,
}

impl Evaluation {
    /// Re-checks facility loads against `u(w) + eps·ū`.
    pub fn within_slack(&self, inst: &Instance, eps: &Rational) -> bool {
        let slack = eps * inst.vehicle_capacity;
        self.routing_feasible
            && self
                .loads
                .iter()
                .zip(&inst.facilities)
                .all(|(l, f)| *l <= f.capacity + slack)
    }
}

/// Exact cost accounting and constraint check of `sol`.
pub fn evaluate(inst: &Instance, sol: &Solution, slack_epsilon: &Rational) -> Result<Evaluation> {
    let nf = inst.num_facilities();
    let nc = inst.num_clients();
    let mut open = vec![false; nf];
    for &w in &sol.open {
        if w >= nf {
            return Err(Error::UnknownFacility(w));
        }
        open[w] = true;
    }
    for t in &sol.tours {
        if t.facility >= nf {
            return Err(Error::UnknownFacility(t.facility));
        }
        if let Some(&v) = t.clients.iter().find(|&&v| v >= nc) {
            return Err(Error::UnknownClient(v));
        }
        if t.service.len() != t.clients.len() {
            return Err(Error::Contract(format!(
                "tour from {} has {} clients but {} service values",
                inst.facilities[t.facility].id,
                t.clients.len(),
                t.service.len()
            )));
        }
    }

    let mut violations = Vec::new();
    let mut served = vec![Rational::zero(); nc];
    let mut visits = vec![0usize; nc];
    let mut loads = vec![Rational::zero(); nf];
    let mut routing_cost = 0.0;
    for (k, t) in sol.tours.iter().enumerate() {
        routing_cost += t.cost(inst);
        if !open[t.facility] {
            violations.push(format!(
                "tour {k} starts at closed facility {}",
                inst.facilities[t.facility].id
            ));
        }
        let mut seen = t.clients.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|p| p[0] == p[1]) {
            violations.push(format!("tour {k} visits a client twice"));
        }
        for (&v, x) in t.clients.iter().zip(&t.service) {
            if x.is_negative() {
                violations.push(format!("tour {k} has negative service at {}", inst.clients[v].id));
            }
            served[v] += x;
            if x.is_positive() {
                visits[v] += 1;
            }
        }
        let load = t.load();
        if load > inst.vehicle_capacity {
            violations.push(format!(
                "tour {k} load {} exceeds vehicle capacity {}",
                rational::format(&load),
                rational::format(&inst.vehicle_capacity)
            ));
        }
        loads[t.facility] += load;
    }
    for (v, c) in inst.clients.iter().enumerate() {
        if served[v] != c.demand {
            violations.push(format!(
                "client {} served {} of demand {}",
                c.id,
                rational::format(&served[v]),
                rational::format(&c.demand)
            ));
        }
    }
    let routing_feasible = violations.is_empty();

    let slack = slack_epsilon * inst.vehicle_capacity;
    let mut strict = true;
    let mut relaxed = true;
    let mut max_rel = 0.0f64;
    for (w, f) in inst.facilities.iter().enumerate() {
        let load = &loads[w];
        if *load > f.capacity {
            strict = false;
            let rel = rational::to_f64(&((load - f.capacity) / f.capacity));
            max_rel = max_rel.max(rel);
            if *load > f.capacity + slack {
                relaxed = false;
                violations.push(format!(
                    "facility {} load {} exceeds capacity {} plus slack {}",
                    f.id,
                    rational::format(load),
                    rational::format(&f.capacity),
                    rational::format(&slack)
                ));
            }
        }
    }

    let opening_cost: f64 = sol.open.iter().map(|&w| inst.facilities[w].opening_cost).sum();
    let single_tour_clients = inst
        .clients
        .iter()
        .enumerate()
        .filter(|(v, c)| visits[*v] == 1 && served[*v] == c.demand)
        .count();
    Ok(Evaluation {
        total_cost: opening_cost + routing_cost,
        routing_cost,
        opening_cost,
        loads,
        max_relative_excess: max_rel,
        routing_feasible,
        feasible_strict: routing_feasible && strict,
        slack_epsilon: *slack_epsilon,
        feasible_relaxed: routing_feasible && relaxed,
        single_tour_clients,
        violations,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::rational::rat;

    pub fn euclid(
        facilities: &[(f64, f64, i128, f64)],
        clients: &[(f64, f64, Rational)],
        vehicle: Rational,
    ) -> Instance {
        Instance {
            name: "test".into(),
            facilities: facilities
                .iter()
                .enumerate()
                .map(|(i, &(x, y, u, f))| Facility {
                    id: format!("w{}", i + 1),
                    capacity: rat(u),
                    opening_cost: f,
                    position: Some(Point::new(x, y)),
                })
                .collect(),
            clients: clients
                .iter()
                .enumerate()
                .map(|(i, &(x, y, d))| Client {
                    id: format!("v{}", i + 1),
                    demand: d,
                    position: Some(Point::new(x, y)),
                })
                .collect(),
            vehicle_capacity: vehicle,
            metric: Metric::Euclidean,
        }
    }

    /// One facility at the origin (f = 5, u = 10), clients a = (1,0) with
    /// demand 3 and b = (2,0) with demand 4, vehicle capacity 10.
    pub fn e2() -> Instance {
        euclid(
            &[(0.0, 0.0, 10, 5.0)],
            &[(1.0, 0.0, rat(3)), (2.0, 0.0, rat(4))],
            rat(10),
        )
    }
}
