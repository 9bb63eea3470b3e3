//! Transportation problems solved by a primal network simplex.
//!
//! Flows are exact rationals, costs are `f64`. The returned solution is a
//! basic one: its positive support is contained in a spanning tree of the
//! (slack-balanced) bipartite graph, so the support is a forest. Forbidden
//! cells are modelled with a lexicographic big-M cost and reported as
//! infeasibility when they end up carrying flow.

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    /// Sink demands (clusters or clients), met with equality.
    pub demands: Vec<Rational>,
    /// Source capacities (facilities), upper bounds.
    pub capacities: Vec<Rational>,
    /// Per-unit cost, row-major `sinks × sources`. `f64::INFINITY` forbids a cell.
    pub costs: Vec<f64>,
}

impl TransportProblem {
    pub fn new(demands: Vec<Rational>, capacities: Vec<Rational>, costs: Vec<f64>) -> Self {
        assert_eq!(costs.len(), demands.len() * capacities.len(), "cost matrix shape");
        TransportProblem { demands, capacities, costs }
    }

    pub fn num_sinks(&self) -> usize {
        self.demands.len()
    }

    pub fn num_sources(&self) -> usize {
        self.capacities.len()
    }

    pub fn cost(&self, sink: usize, source: usize) -> f64 {
        self.costs[sink * self.capacities.len() + source]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    num_sinks: usize,
    num_sources: usize,
    /// Row-major `sinks × sources`.
    pub flows: Vec<Rational>,
    pub demands: Vec<Rational>,
    pub objective: f64,
    /// Basic cells `(sink, source)` among the real cells.
    pub basis: Vec<(usize, usize)>,
    pub pivots: usize,
}

impl TransportSolution {
    pub fn num_sinks(&self) -> usize {
        self.num_sinks
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn flow(&self, sink: usize, source: usize) -> &Rational {
        &self.flows[sink * self.num_sources + source]
    }

    pub fn source_load(&self, source: usize) -> Rational {
        (0..self.num_sinks).fold(Rational::zero(), |acc, s| acc + self.flow(s, source))
    }

    /// Cells with `0 < x < d(sink)`.
    pub fn support_forest(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for s in 0..self.num_sinks {
            for w in 0..self.num_sources {
                let x = self.flow(s, w);
                if x.is_positive() && *x < self.demands[s] {
                    out.push((s, w));
                }
            }
        }
        out
    }

    pub fn positive_support(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for s in 0..self.num_sinks {
            for w in 0..self.num_sources {
                if self.flow(s, w).is_positive() {
                    out.push((s, w));
                }
            }
        }
        out
    }
}

/// Lexicographic cost: artificial units first, then the real cost.
#[derive(Debug, Clone, Copy, Default)]
struct Lex {
    art: f64,
    val: f64,
}

impl Lex {
    fn sub(self, o: Lex) -> Lex {
        Lex { art: self.art - o.art, val: self.val - o.val }
    }
}

const DEGENERATE_STREAK_LIMIT: usize = 64;

struct Simplex {
    m: usize,
    n: usize,
    art: Vec<u8>,
    val: Vec<f64>,
    flow: Vec<Rational>,
    basic: Vec<bool>,
    adj: Vec<Vec<usize>>,
    tol: f64,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

impl Simplex {
    fn cell(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    fn cost(&self, c: usize) -> Lex {
        Lex { art: self.art[c] as f64, val: self.val[c] }
    }

    fn is_negative(&self, r: Lex) -> bool {
        r.art < -0.5 || (r.art.abs() <= 0.5 && r.val < -self.tol)
    }

    fn more_negative(a: Lex, b: Lex) -> bool {
        if (a.art - b.art).abs() > 0.5 {
            a.art < b.art
        } else {
            a.val < b.val
        }
    }

    fn initial_basis(&mut self, supply: &[Rational], demand: &[Rational]) {
        let (m, n) = (self.m, self.n);
        let mut order: Vec<usize> = (0..m * n).collect();
        order.sort_by(|&a, &b| {
            self.art[a]
                .cmp(&self.art[b])
                .then(self.val[a].total_cmp(&self.val[b]))
                .then(a.cmp(&b))
        });
        let mut ra = supply.to_vec();
        let mut rb = demand.to_vec();
        let mut uf = UnionFind::new(m + n);
        for &c in &order {
            let (i, j) = (c / n, c % n);
            if ra[i].is_positive() && rb[j].is_positive() {
                let q = ra[i].min(rb[j]);
                ra[i] -= q;
                rb[j] -= q;
                self.flow[c] = q;
                self.add_basic(c);
                uf.union(i, m + j);
            }
        }
        for &c in &order {
            let (i, j) = (c / n, c % n);
            if !self.basic[c] && uf.union(i, m + j) {
                self.add_basic(c);
            }
        }
    }

    fn add_basic(&mut self, c: usize) {
        let (i, j) = (c / self.n, c % self.n);
        self.basic[c] = true;
        self.adj[i].push(self.m + j);
        self.adj[self.m + j].push(i);
    }

    fn remove_basic(&mut self, c: usize) {
        let (i, j) = (c / self.n, c % self.n);
        let col = self.m + j;
        self.basic[c] = false;
        self.adj[i].retain(|&x| x != col);
        self.adj[col].retain(|&x| x != i);
    }

    fn cell_between(&self, a: usize, b: usize) -> usize {
        if a < self.m {
            self.cell(a, b - self.m)
        } else {
            self.cell(b, a - self.m)
        }
    }

    /// Tree parent pointers, depths and node potentials from root 0.
    fn tree(&self, parent: &mut [usize], depth: &mut [usize], pot: &mut [Lex]) {
        let total = self.m + self.n;
        let mut seen = vec![false; total];
        let mut queue = std::collections::VecDeque::with_capacity(total);
        seen[0] = true;
        parent[0] = usize::MAX;
        depth[0] = 0;
        pot[0] = Lex::default();
        queue.push_back(0);
        while let Some(x) = queue.pop_front() {
            for &y in &self.adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    parent[y] = x;
                    depth[y] = depth[x] + 1;
                    let c = self.cost(self.cell_between(x, y));
                    // u_i + v_j = c_ij
                    pot[y] = c.sub(pot[x]);
                    queue.push_back(y);
                }
            }
        }
        debug_assert!(seen.iter().all(|&s| s), "basis is not spanning");
    }

    fn run(&mut self) -> Result<usize> {
        let (m, n) = (self.m, self.n);
        let total = m + n;
        let mut parent = vec![0usize; total];
        let mut depth = vec![0usize; total];
        let mut pot = vec![Lex::default(); total];
        let mut bland = false;
        let mut streak = 0usize;
        let mut pivots = 0usize;
        let limit = 200 * (m * n + total) + 10_000;
        loop {
            self.tree(&mut parent, &mut depth, &mut pot);
            let mut entering: Option<(usize, Lex)> = None;
            'price: for i in 0..m {
                for j in 0..n {
                    let c = self.cell(i, j);
                    if self.basic[c] {
                        continue;
                    }
                    let r = self.cost(c).sub(pot[i]).sub(pot[m + j]);
                    if !self.is_negative(r) {
                        continue;
                    }
                    if bland {
                        entering = Some((c, r));
                        break 'price;
                    }
                    match entering {
                        Some((_, best)) if !Self::more_negative(r, best) => {}
                        _ => entering = Some((c, r)),
                    }
                }
            }
            let Some((enter, _)) = entering else {
                return Ok(pivots);
            };
            pivots += 1;
            if pivots > limit {
                return Err(Error::Contract("transport simplex pivot limit exceeded".into()));
            }

            // cycle: row i -> col j (entering, +), then tree path col j -> row i
            let (ei, ej) = (enter / n, enter % n);
            let mut a = m + ej;
            let mut b = ei;
            let mut from_col = vec![a];
            let mut from_row = vec![b];
            while depth[a] > depth[b] {
                a = parent[a];
                from_col.push(a);
            }
            while depth[b] > depth[a] {
                b = parent[b];
                from_row.push(b);
            }
            while a != b {
                a = parent[a];
                from_col.push(a);
                b = parent[b];
                from_row.push(b);
            }
            from_row.pop();
            from_row.reverse();
            from_col.extend(from_row);
            let path = from_col;

            let mut minus = Vec::with_capacity(path.len() / 2 + 1);
            let mut plus = Vec::with_capacity(path.len() / 2 + 1);
            for (k, pair) in path.windows(2).enumerate() {
                let c = self.cell_between(pair[0], pair[1]);
                if k % 2 == 0 {
                    minus.push(c);
                } else {
                    plus.push(c);
                }
            }
            let mut leave = minus[0];
            for &c in &minus[1..] {
                if self.flow[c] < self.flow[leave] || (self.flow[c] == self.flow[leave] && c < leave) {
                    leave = c;
                }
            }
            let theta = self.flow[leave];
            if theta.is_zero() {
                streak += 1;
                if streak > DEGENERATE_STREAK_LIMIT {
                    bland = true;
                }
            } else {
                streak = 0;
                for &c in &minus {
                    self.flow[c] -= theta;
                }
                for &c in &plus {
                    self.flow[c] += theta;
                }
                self.flow[enter] += theta;
            }
            self.remove_basic(leave);
            self.add_basic(enter);
        }
    }
}

/// Solves `min Σ c x` s.t. sink demands met exactly, source capacities respected.
pub fn solve_transport(p: &TransportProblem) -> Result<TransportSolution> {
    let ns = p.num_sinks();
    let nw = p.num_sources();
    let total_d = rational::sum(&p.demands);
    let total_u = rational::sum(&p.capacities);
    if p.demands.iter().any(|d| d.is_negative()) || p.capacities.iter().any(|u| u.is_negative()) {
        return Err(Error::Parameter("negative demand or capacity in transport problem".into()));
    }
    if total_d > total_u {
        return Err(Error::Infeasible(format!(
            "transport demand {} exceeds capacity {}",
            rational::format(&total_d),
            rational::format(&total_u)
        )));
    }
    if ns == 0 || nw == 0 || total_d.is_zero() {
        return Ok(TransportSolution {
            num_sinks: ns,
            num_sources: nw,
            flows: vec![Rational::zero(); ns * nw],
            demands: p.demands.clone(),
            objective: 0.0,
            basis: Vec::new(),
            pivots: 0,
        });
    }

    // rows = sources, columns = sinks plus a zero-cost slack sink
    let slack = total_u - total_d;
    let has_dummy = slack.is_positive();
    let m = nw;
    let n = ns + usize::from(has_dummy);
    let mut art = vec![0u8; m * n];
    let mut val = vec![0.0f64; m * n];
    let mut scale = 1.0f64;
    for i in 0..m {
        for j in 0..ns {
            let c = p.cost(j, i);
            if c.is_finite() {
                val[i * n + j] = c;
                scale = scale.max(c.abs());
            } else {
                art[i * n + j] = 1;
            }
        }
    }
    let mut demand = p.demands.clone();
    if has_dummy {
        demand.push(slack);
    }
    let mut sx = Simplex {
        m,
        n,
        art,
        val,
        flow: vec![Rational::zero(); m * n],
        basic: vec![false; m * n],
        adj: vec![Vec::new(); m + n],
        tol: 1e-10 * scale,
    };
    sx.initial_basis(&p.capacities, &demand);
    let pivots = sx.run()?;

    let mut flows = vec![Rational::zero(); ns * nw];
    let mut objective = 0.0;
    let mut basis = Vec::new();
    for i in 0..m {
        for j in 0..ns {
            let c = i * n + j;
            let x = sx.flow[c];
            if sx.art[c] == 1 && x.is_positive() {
                return Err(Error::Infeasible("transport demand needs a forbidden cell".into()));
            }
            if sx.basic[c] {
                basis.push((j, i));
            }
            if x.is_positive() {
                objective += sx.val[c] * rational::to_f64(&x);
            }
            flows[j * nw + i] = x;
        }
    }
    basis.sort_unstable();
    Ok(TransportSolution {
        num_sinks: ns,
        num_sources: nw,
        flows,
        demands: p.demands.clone(),
        objective,
        basis,
        pivots,
    })
}

/// True if the undirected bipartite graph on `edges` (sink, source) has no cycle.
pub fn is_forest(num_sinks: usize, num_sources: usize, edges: &[(usize, usize)]) -> bool {
    let mut uf = UnionFind::new(num_sinks + num_sources);
    edges.iter().all(|&(s, w)| uf.union(s, num_sinks + w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    fn ints(v: &[i128]) -> Vec<Rational> {
        v.iter().map(|&x| rat(x)).collect()
    }

    fn check_feasible(p: &TransportProblem, s: &TransportSolution) {
        for j in 0..p.num_sinks() {
            let got = (0..p.num_sources()).fold(rat(0), |a, i| a + s.flow(j, i));
            assert_eq!(got, p.demands[j]);
        }
        for i in 0..p.num_sources() {
            assert!(s.source_load(i) <= p.capacities[i]);
        }
        assert!(s.flows.iter().all(|x| !x.is_negative()));
        assert!(is_forest(p.num_sinks(), p.num_sources(), &s.positive_support()));
    }

    #[test]
    fn two_by_two_example() {
        let p = TransportProblem::new(ints(&[4, 4]), ints(&[6, 2]), vec![0.0, 1.0, 1.0, 0.0]);
        let s = solve_transport(&p).unwrap();
        check_feasible(&p, &s);
        assert_eq!(*s.flow(0, 0), rat(4));
        assert_eq!(*s.flow(1, 0), rat(2));
        assert_eq!(*s.flow(1, 1), rat(2));
        assert_eq!(s.objective, 2.0);
        assert_eq!(s.support_forest(), vec![(1, 0), (1, 1)]);
    }

    #[test]
    fn single_cell() {
        let p = TransportProblem::new(ints(&[3]), ints(&[5]), vec![2.5]);
        let s = solve_transport(&p).unwrap();
        assert_eq!(*s.flow(0, 0), rat(3));
        assert_eq!(s.objective, 7.5);
        assert!(s.support_forest().is_empty());
    }

    #[test]
    fn diagonal_zero_cost() {
        let p = TransportProblem::new(ints(&[4, 4]), ints(&[4, 4]), vec![0.0, 1.0, 1.0, 0.0]);
        let s = solve_transport(&p).unwrap();
        assert_eq!(s.objective, 0.0);
        assert_eq!(*s.flow(0, 0), rat(4));
        assert_eq!(*s.flow(1, 1), rat(4));
    }

    #[test]
    fn split_sink_gives_two_edge_path() {
        let p = TransportProblem::new(vec![ratio(7, 2)], ints(&[2, 2]), vec![1.0, 3.0]);
        let s = solve_transport(&p).unwrap();
        assert_eq!(*s.flow(0, 0), rat(2));
        assert_eq!(*s.flow(0, 1), ratio(3, 2));
        assert_eq!(s.support_forest(), vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn infeasible_by_totals() {
        let p = TransportProblem::new(ints(&[5]), ints(&[2, 2]), vec![1.0, 1.0]);
        assert!(matches!(solve_transport(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn infeasible_by_forbidden_cells() {
        let inf = f64::INFINITY;
        let p = TransportProblem::new(ints(&[3, 1]), ints(&[2, 2]), vec![0.0, inf, 0.0, inf]);
        assert!(matches!(solve_transport(&p), Err(Error::Infeasible(_))));
        let p = TransportProblem::new(ints(&[2, 1]), ints(&[2, 2]), vec![5.0, inf, inf, 1.0]);
        let s = solve_transport(&p).unwrap();
        assert_eq!(s.objective, 11.0);
    }

    #[test]
    fn empty_problems() {
        let p = TransportProblem::new(vec![], ints(&[1]), vec![]);
        assert_eq!(solve_transport(&p).unwrap().objective, 0.0);
        let p = TransportProblem::new(ints(&[1]), vec![], vec![]);
        assert!(solve_transport(&p).is_err());
    }

    /// Minimum over all spanning-tree bases of the slack-balanced problem.
    fn vertex_enumeration_optimum(p: &TransportProblem) -> f64 {
        let ns = p.num_sinks();
        let m = p.num_sources();
        let slack = rational::sum(&p.capacities) - rational::sum(&p.demands);
        let n = ns + 1;
        let mut demand = p.demands.clone();
        demand.push(slack);
        let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let k = m + n - 1;
        let mut best = f64::INFINITY;
        let total = cells.len();
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let chosen: Vec<(usize, usize)> = idx.iter().map(|&c| cells[c]).collect();
            let mut uf = UnionFind::new(m + n);
            if chosen.iter().all(|&(i, j)| uf.union(i, m + j)) {
                // peel leaves
                let mut supply = p.capacities.clone();
                let mut dem = demand.clone();
                let mut remaining = chosen.clone();
                let mut flow = Vec::new();
                let mut ok = true;
                while !remaining.is_empty() {
                    let mut deg = vec![0usize; m + n];
                    for &(i, j) in &remaining {
                        deg[i] += 1;
                        deg[m + j] += 1;
                    }
                    let pos = remaining
                        .iter()
                        .position(|&(i, j)| deg[i] == 1 || deg[m + j] == 1)
                        .unwrap();
                    let (i, j) = remaining.remove(pos);
                    let x = if deg[m + j] == 1 { dem[j] } else { supply[i] };
                    if x.is_negative() {
                        ok = false;
                        break;
                    }
                    supply[i] -= x;
                    dem[j] -= x;
                    flow.push(((i, j), x));
                }
                if ok && supply.iter().all(|s| s.is_zero()) && dem.iter().all(|d| d.is_zero()) {
                    let cost: f64 = flow
                        .iter()
                        .filter(|((_, j), _)| *j < ns)
                        .map(|((i, j), x)| p.cost(*j, *i) * rational::to_f64(x))
                        .sum();
                    best = best.min(cost);
                }
            }
            // next combination
            let mut t = k;
            while t > 0 && idx[t - 1] == t - 1 + total - k {
                t -= 1;
            }
            if t == 0 {
                return best;
            }
            let t = t - 1;
            idx[t] += 1;
            for u in t + 1..k {
                idx[u] = idx[u - 1] + 1;
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn problem() -> impl Strategy<Value = TransportProblem> {
            (1usize..=4, 1usize..=3).prop_flat_map(|(ns, nw)| {
                (
                    prop::collection::vec(1i128..=5, ns),
                    prop::collection::vec(1i128..=5, nw),
                    prop::collection::vec(0u32..10, ns * nw),
                )
                    .prop_filter("feasible", |(d, u, _)| d.iter().sum::<i128>() <= u.iter().sum::<i128>())
                    .prop_map(|(d, u, c)| {
                        TransportProblem::new(ints(&d), ints(&u), c.into_iter().map(f64::from).collect())
                    })
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(300))]
            #[test]
            fn matches_vertex_enumeration(p in problem()) {
                let s = solve_transport(&p).unwrap();
                check_feasible(&p, &s);
                let oracle = vertex_enumeration_optimum(&p);
                prop_assert!((s.objective - oracle).abs() < 1e-9, "simplex {} oracle {}", s.objective, oracle);
            }
        }
    }

    #[test]
    fn degenerate_larger_problem_terminates() {
        // many equal costs and demands, lots of degenerate pivots
        let ns = 40;
        let nw = 12;
        let demands = vec![rat(3); ns];
        let caps = vec![rat(10); nw];
        let costs: Vec<f64> = (0..ns * nw).map(|k| ((k * 7919) % 5) as f64).collect();
        let p = TransportProblem::new(demands, caps, costs);
        let s = solve_transport(&p).unwrap();
        check_feasible(&p, &s);
    }
}
