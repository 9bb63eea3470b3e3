//! End-to-end runs of the four algorithm variants.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::assignment::{self, ClusterAssignment, IpBudget, Provenance};
use crate::cfl::{self, CflBudget, CflMode, CflSolution};
use crate::clustering::{self, Clustering};
use crate::error::{Error, Result};
use crate::lowerbounds::{self, BoundMode, BoundReport, SpanningTree};
use crate::model::{evaluate, Evaluation, Instance, Solution, COST_TOL};
use crate::rational::{self, Rational};
use crate::routing;
use crate::transport::solve_transport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Backend {
    /// Facility location solve, transportation LP and rounding.
    Ls,
    /// Integer program over cluster assignments.
    Ip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RoutingPost {
    DoubleTree,
    Improved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CflBackend {
    LocalSearch,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundPolicy {
    Exact,
    Heuristic,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Variant {
    LsDts,
    IpDts,
    LsLkh,
    IpLkh,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::LsDts, Variant::IpDts, Variant::LsLkh, Variant::IpLkh];

    pub fn backend(self) -> Backend {
        match self {
            Variant::LsDts | Variant::LsLkh => Backend::Ls,
            Variant::IpDts | Variant::IpLkh => Backend::Ip,
        }
    }

    pub fn routing(self) -> RoutingPost {
        match self {
            Variant::LsDts | Variant::IpDts => RoutingPost::DoubleTree,
            Variant::LsLkh | Variant::IpLkh => RoutingPost::Improved,
        }
    }

    pub fn config(self) -> VariantConfig {
        VariantConfig { backend: self.backend(), routing: self.routing(), ..VariantConfig::default() }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::LsDts => "ls-dts",
            Variant::IpDts => "ip-dts",
            Variant::LsLkh => "ls-lkh",
            Variant::IpLkh => "ip-lkh",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantConfig {
    pub backend: Backend,
    pub routing: RoutingPost,
    pub epsilon: Rational,
    pub cfl_mode: CflMode,
    /// Open the residual-cluster facilities at no cost in the CFL subproblem.
    pub free_f1: bool,
    pub cfl_backend: CflBackend,
    pub cfl_budget: CflBudget,
    pub ip_budget: IpBudget,
    pub bounds: BoundPolicy,
    pub bound_budget: CflBudget,
    pub exact_cfl_cap: usize,
    /// Approximation factor of the CFL backend, only used for reporting.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for VariantConfig {
    fn default() -> Self {
        VariantConfig {
            backend: Backend::Ls,
            routing: RoutingPost::DoubleTree,
            epsilon: Rational::one(),
            cfl_mode: CflMode::Clustered,
            free_f1: true,
            cfl_backend: CflBackend::LocalSearch,
            cfl_budget: CflBudget::default(),
            ip_budget: IpBudget::default(),
            bounds: BoundPolicy::Exact,
            bound_budget: CflBudget::default(),
            exact_cfl_cap: lowerbounds::EXACT_CFL_CAP,
            alpha: 1.0,
            seed: 0,
        }
    }
}

impl VariantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= Rational::zero() || self.epsilon > Rational::one() {
            return Err(Error::Parameter(format!(
                "epsilon must lie in (0, 1], got {}",
                rational::format(&self.epsilon)
            )));
        }
        let zero = Some(Duration::ZERO);
        if self.cfl_budget.total == zero
            || self.cfl_budget.no_improvement == zero
            || self.ip_budget.total == zero
            || self.ip_budget.no_improvement == zero
        {
            return Err(Error::Parameter("time budgets must be positive".into()));
        }
        if !(self.alpha >= 1.0) {
            return Err(Error::Parameter(format!("alpha must be at least 1, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Sets total and no-improvement limits on both assignment backends.
    pub fn with_time_limits(mut self, total: Option<Duration>, no_improvement: Option<Duration>) -> Self {
        self.cfl_budget.total = total;
        self.cfl_budget.no_improvement = no_improvement;
        self.ip_budget.total = total;
        self.ip_budget.no_improvement = no_improvement;
        self
    }
}

/// Total and no-improvement limits used for runs on instances with `n`
/// clients when nothing else is configured.
pub fn default_time_limits(n: usize) -> (Duration, Duration) {
    let min = |m: u64| Duration::from_secs(60 * m);
    if n <= 2000 {
        (min(180), min(60))
    } else if n <= 5000 {
        (min(270), min(90))
    } else {
        (min(360), min(120))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    /// `4 L′ + (2α/ε) L̃`.
    pub theorem_bound: f64,
    pub holds: bool,
}

/// Checks `cost ≤ 4 L′ + (2α/ε) L̃`.
pub fn certify(cost: f64, bounds: &BoundReport, epsilon: &Rational, alpha: f64) -> Certificate {
    let eps = rational::to_f64(epsilon);
    let theorem_bound = 4.0 * bounds.mst_bound + 2.0 * alpha / eps * bounds.cfl_bound;
    Certificate { theorem_bound, holds: cost <= theorem_bound + COST_TOL * theorem_bound.max(1.0) }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub clustering: f64,
    pub bounds: f64,
    pub assignment: f64,
    pub routing: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub solution: Solution,
    pub evaluation: Evaluation,
    pub bounds: Option<BoundReport>,
    pub certificate: Option<Certificate>,
    pub timings: Timings,
    /// A time budget cut the assignment step short.
    pub interrupted: bool,
    /// The bound computation was cut short.
    pub bounds_interrupted: bool,
    /// Facilities had to be added because the CFL open set lacked capacity.
    pub extra_opened: bool,
    pub provenance: Provenance,
    #[serde(with = "rational::serde_str")]
    pub gamma: Rational,
    pub num_clusters: usize,
    /// Objective of the CFL subproblem solved on the LS path.
    pub cfl_cost: Option<f64>,
    /// Objective of the transportation LP before rounding.
    pub lp_objective: Option<f64>,
    /// LP value against the feasibility witness built from an exact CFL
    /// solution of the raw instance.
    pub lp_witness_holds: Option<bool>,
    /// Every double-tree tour stayed within twice its tree plus connection.
    pub tour_bounds_hold: bool,
    /// `Σ tours ≤ 4 c(T′) + 2 Σ c(S, w_S)` before improvement.
    pub routing_bound_holds: bool,
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn solve_cfl(p: &cfl::CflInstance, cfg: &VariantConfig) -> Result<CflSolution> {
    match cfg.cfl_backend {
        CflBackend::LocalSearch => cfl::local_search_cfl(p, &cfg.cfl_budget),
        CflBackend::Exact => match cfl::exact_cfl(p, cfg.exact_cfl_cap, &cfg.cfl_budget) {
            Err(Error::SizeCap { .. }) => cfl::local_search_cfl(p, &cfg.cfl_budget),
            other => other,
        },
    }
}

struct LsOutcome {
    assignment: ClusterAssignment,
    cfl: CflSolution,
    lp_objective: f64,
    extra_opened: bool,
}

fn ls_assignment(inst: &Instance, clust: &Clustering, cfl_sol: CflSolution) -> Result<LsOutcome> {
    let mut open: Vec<usize> = clust.f1.iter().chain(&cfl_sol.open).copied().collect();
    open.sort_unstable();
    open.dedup();
    let need = inst.total_demand();
    let capacity = |open: &[usize]| rational::sum(open.iter().map(|&w| &inst.facilities[w].capacity));
    let mut extra_opened = false;
    if capacity(&open) < need {
        let mut rest: Vec<usize> = (0..inst.num_facilities()).filter(|w| !open.contains(w)).collect();
        rest.sort_by(|&a, &b| {
            let r = |w: usize| inst.facilities[w].opening_cost / rational::to_f64(&inst.facilities[w].capacity);
            r(a).total_cmp(&r(b)).then(a.cmp(&b))
        });
        for w in rest {
            if capacity(&open) >= need {
                break;
            }
            open.push(w);
            extra_opened = true;
        }
        open.sort_unstable();
    }
    let lp = assignment::build_lp(clust, &open, inst)?;
    let sol = solve_transport(&lp.problem)?;
    let assignment = assignment::round_assignment(&sol, &lp, clust, inst)?;
    Ok(LsOutcome { assignment, cfl: cfl_sol, lp_objective: sol.objective, extra_opened })
}

/// Steps one to three for `cfg`.
pub fn run(inst: &Instance, cfg: &VariantConfig) -> Result<RunResult> {
    cfg.validate()?;
    if inst.total_demand() > inst.total_capacity() {
        return Err(Error::Infeasible("total demand exceeds total facility capacity".into()));
    }
    let start = Instant::now();

    let t = Instant::now();
    let tree: SpanningTree = lowerbounds::mst_lower_bound(inst);
    let work = clustering::preprocess(inst, &tree, &cfg.epsilon)?;
    let clust = clustering::cluster(work);
    let clustering_time = secs(t);

    // the raw CFL doubles as the lower bound when it is solved exactly
    let raw_exact = cfg.backend == Backend::Ls
        && cfg.cfl_mode == CflMode::Raw
        && !cfg.free_f1
        && cfg.cfl_backend == CflBackend::Exact;

    let t = Instant::now();
    let mut cfl_for_bound: Option<CflSolution> = None;
    let mut interrupted = false;
    let mut extra_opened = false;
    let mut cfl_cost = None;
    let mut lp_objective = None;
    let mut lp_witness_holds = None;
    let assignment = match cfg.backend {
        Backend::Ls => {
            let free: Vec<usize> = if cfg.free_f1 { clust.f1.clone() } else { Vec::new() };
            let p = cfl::build_cfl(inst, cfg.cfl_mode, Some(&clust), &free)?;
            let sol = solve_cfl(&p, cfg)?;
            interrupted |= sol.interrupted;
            cfl_cost = Some(sol.cost());
            let out = ls_assignment(inst, &clust, sol)?;
            extra_opened = out.extra_opened;
            lp_objective = Some(out.lp_objective);
            if raw_exact && out.cfl.exact {
                let small: f64 = clust
                    .small_clusters()
                    .iter()
                    .map(|&(k, _)| clust.clusters[k].tree_cost(&clust.work, inst))
                    .sum();
                let witness = out.cfl.connection_cost / rational::to_f64(&cfg.epsilon) + small;
                lp_witness_holds = Some(out.lp_objective <= witness + COST_TOL * witness.max(1.0));
                cfl_for_bound = Some(out.cfl.clone());
            }
            out.assignment
        }
        Backend::Ip => {
            let out = assignment::solve_ip(&clust, inst, &cfg.ip_budget)?;
            interrupted |= out.interrupted;
            out.assignment
        }
    };
    let assignment_time = secs(t);

    let t = Instant::now();
    let mut tours = Vec::with_capacity(clust.clusters.len());
    let mut tour_bounds_hold = true;
    let mut dts_total = 0.0;
    let mut connection_total = 0.0;
    for (k, &w) in assignment.facility_of.iter().enumerate() {
        let draft = routing::build_tour(&clust, k, w, inst);
        let c = draft.tour.cost(inst);
        tour_bounds_hold &= c <= draft.bound() + 1e-6;
        dts_total += c;
        connection_total += draft.connection_cost;
        tours.push(match cfg.routing {
            RoutingPost::DoubleTree => draft.tour,
            RoutingPost::Improved => routing::improve_tour(&draft.tour, inst),
        });
    }
    let routing_limit = 4.0 * clust.work.cost(inst) + 2.0 * connection_total;
    let routing_bound_holds = dts_total <= routing_limit + 1e-6 * routing_limit.max(1.0);
    let routing_time = secs(t);

    let t = Instant::now();
    let mut bounds_interrupted = false;
    let bounds = match cfg.bounds {
        BoundPolicy::Skip => None,
        policy => {
            let cfl = match cfl_for_bound {
                Some(s) => s,
                None => {
                    let mode = if policy == BoundPolicy::Exact { BoundMode::Exact } else { BoundMode::Heuristic };
                    lowerbounds::cfl_lower_bound(inst, mode, cfg.exact_cfl_cap, &cfg.bound_budget)?
                }
            };
            bounds_interrupted = cfl.interrupted;
            Some(BoundReport::new(tree.weight, cfl.cost(), cfl.exact))
        }
    };
    let bounds_time = secs(t);

    let mut open = assignment.used_facilities();
    open.sort_unstable();
    let solution = Solution { open, tours };
    let evaluation = evaluate(inst, &solution, &cfg.epsilon)?;
    let certificate = bounds
        .as_ref()
        .map(|b| certify(evaluation.total_cost, b, &cfg.epsilon, cfg.alpha));

    Ok(RunResult {
        solution,
        evaluation,
        bounds,
        certificate,
        timings: Timings {
            clustering: clustering_time,
            bounds: bounds_time,
            assignment: assignment_time,
            routing: routing_time,
            total: secs(start),
        },
        interrupted,
        bounds_interrupted,
        extra_opened,
        provenance: assignment.provenance,
        gamma: assignment.gamma,
        num_clusters: clust.clusters.len(),
        cfl_cost,
        lp_objective,
        lp_witness_holds,
        tour_bounds_hold,
        routing_bound_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, lemma3_family, GenParams, Level};
    use crate::model::fixtures::e2;
    use crate::rational::{rat, ratio};

    fn theorem_config() -> VariantConfig {
        VariantConfig {
            cfl_mode: CflMode::Raw,
            free_f1: false,
            cfl_backend: CflBackend::Exact,
            ..Variant::LsDts.config()
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("ls-foo".parse::<Variant>().is_err());
    }

    #[test]
    fn lemma3_ls_path_overloads_w1() {
        let inst = lemma3_family(5);
        let r = run(&inst, &theorem_config()).unwrap();
        assert_eq!(r.evaluation.total_cost, 0.0);
        assert_eq!(r.evaluation.loads[0], rat(5));
        assert!(r.evaluation.feasible_relaxed);
        assert!(!r.evaluation.feasible_strict);
        let c = r.certificate.unwrap();
        assert!((c.theorem_bound - 1.0).abs() < 1e-12);
        assert!(c.holds);
        assert_eq!(r.lp_witness_holds, Some(true));
    }

    #[test]
    fn lemma3_ip_path_is_optimal() {
        let inst = lemma3_family(5);
        for v in [Variant::IpDts, Variant::IpLkh] {
            let r = run(&inst, &v.config()).unwrap();
            assert!((r.evaluation.total_cost - 2.0).abs() < 1e-12);
            assert!(r.evaluation.feasible_strict);
            assert_eq!(r.gamma, rat(1));
        }
    }

    #[test]
    fn e2_every_variant_finds_nine() {
        let inst = e2();
        for v in Variant::ALL {
            let r = run(&inst, &v.config()).unwrap();
            assert!((r.evaluation.total_cost - 9.0).abs() < 1e-12, "{v}");
            assert_eq!(r.solution.open, vec![0]);
            assert_eq!(r.solution.tours.len(), 1);
        }
        let r = run(&inst, &theorem_config()).unwrap();
        let c = r.certificate.unwrap();
        assert!((c.theorem_bound - 32.4).abs() < 1e-9);
        assert!(c.holds);
    }

    #[test]
    fn certificate_negative_control() {
        let b = BoundReport::new(4.5, 7.2, true);
        assert!(certify(9.0, &b, &rat(1), 1.0).holds);
        assert!(!certify(40.0, &b, &rat(1), 1.0).holds);
        assert!(certify(40.0, &b, &ratio(1, 2), 1.0).holds);
    }

    #[test]
    fn config_validation() {
        let mut cfg = VariantConfig::default();
        cfg.epsilon = rat(2);
        assert!(matches!(run(&e2(), &cfg), Err(Error::Parameter(_))));
        let cfg = VariantConfig::default().with_time_limits(Some(Duration::ZERO), None);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn infeasible_instance_reported() {
        let mut inst = e2();
        inst.facilities[0].capacity = rat(6);
        assert!(matches!(run(&inst, &VariantConfig::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn deterministic_on_generated_instance() {
        let g = generate(&GenParams {
            n: 50,
            conglomerates: 3,
            vehicle_capacity: Level::S,
            facility_cost: Level::M,
            facility_capacity: Level::S,
            seed: 3,
        })
        .unwrap();
        for v in Variant::ALL {
            let mut cfg = v.config();
            cfg.ip_budget.max_nodes = Some(5_000);
            let a = run(&g.instance, &cfg).unwrap();
            let b = run(&g.instance, &cfg).unwrap();
            assert_eq!(a.solution, b.solution);
            assert!(a.evaluation.routing_feasible);
            assert!(a.tour_bounds_hold && a.routing_bound_holds);
            if v.backend() == Backend::Ls {
                assert!(a.evaluation.within_slack(&g.instance, &rat(1)));
            }
        }
    }
}
