//! Exact optimum of tiny instances by exhaustive dynamic programming.
//!
//! Integer demands are expanded into unit items, so every way of splitting a
//! client's demand over several tours is considered. Each facility gets a
//! subset DP that packs items into tours (ordered optimally by Held–Karp),
//! and a final DP distributes the items over facilities.

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::model::{Instance, Solution, Tour};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleCaps {
    pub max_clients: usize,
    pub max_facilities: usize,
    pub max_items: usize,
}

impl Default for OracleCaps {
    fn default() -> Self {
        OracleCaps { max_clients: 8, max_facilities: 3, max_items: 12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub opt: f64,
    pub solution: Solution,
    /// False when fractional demands forced single-tour service, in which
    /// case `opt` only bounds the optimum from above.
    pub exact: bool,
    /// Subset states evaluated.
    pub states: usize,
}

struct Item {
    client: usize,
    weight: Rational,
}

/// Held–Karp over client subsets from one facility.
fn tsp_table(inst: &Instance, w: usize) -> (Vec<f64>, Vec<Vec<usize>>) {
    let n = inst.num_clients();
    let full = 1usize << n;
    let mut dp = vec![f64::INFINITY; full * n.max(1)];
    let mut parent = vec![usize::MAX; full * n.max(1)];
    for v in 0..n {
        dp[(1 << v) * n + v] = inst.fc(v, w);
    }
    for set in 1..full {
        for last in 0..n {
            let cur = dp[set * n + last];
            if set >> last & 1 == 0 || !cur.is_finite() {
                continue;
            }
            for nxt in 0..n {
                if set >> nxt & 1 == 1 {
                    continue;
                }
                let ns = set | 1 << nxt;
                let c = cur + inst.cc(last, nxt);
                if c < dp[ns * n + nxt] {
                    dp[ns * n + nxt] = c;
                    parent[ns * n + nxt] = last;
                }
            }
        }
    }
    let mut cost = vec![0.0; full];
    let mut order = vec![Vec::new(); full];
    for set in 1..full {
        let mut best = (f64::INFINITY, usize::MAX);
        for last in 0..n {
            if set >> last & 1 == 1 {
                let c = dp[set * n + last] + inst.fc(last, w);
                if c < best.0 {
                    best = (c, last);
                }
            }
        }
        cost[set] = best.0;
        let mut seq = Vec::new();
        let (mut s, mut v) = (set, best.1);
        while v != usize::MAX {
            seq.push(v);
            let p = parent[s * n + v];
            s &= !(1 << v);
            v = p;
        }
        seq.reverse();
        order[set] = seq;
    }
    (cost, order)
}

fn submasks(mask: usize) -> impl Iterator<Item = usize> {
    let mut sub = mask;
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let cur = sub;
        if sub == 0 {
            done = true;
        } else {
            sub = (sub - 1) & mask;
        }
        Some(cur)
    })
}

pub fn brute_force_opt(inst: &Instance, caps: &OracleCaps) -> Result<ExactResult> {
    let nc = inst.num_clients();
    let nf = inst.num_facilities();
    if nc > caps.max_clients {
        return Err(Error::SizeCap { what: "oracle clients", size: nc, cap: caps.max_clients });
    }
    if nf > caps.max_facilities {
        return Err(Error::SizeCap { what: "oracle facilities", size: nf, cap: caps.max_facilities });
    }
    let integral = inst.clients.iter().all(|c| c.demand.is_integer());
    let mut items = Vec::new();
    for (v, c) in inst.clients.iter().enumerate() {
        if integral {
            let units = c.demand.to_integer();
            if units as usize > caps.max_items {
                return Err(Error::SizeCap { what: "oracle items", size: units as usize, cap: caps.max_items });
            }
            for _ in 0..units {
                items.push(Item { client: v, weight: Rational::one() });
            }
        } else {
            items.push(Item { client: v, weight: c.demand });
        }
        if items.len() > caps.max_items {
            return Err(Error::SizeCap { what: "oracle items", size: items.len(), cap: caps.max_items });
        }
    }
    let m = items.len();
    let full = 1usize << m;
    let weight: Vec<Rational> = (0..full)
        .map(|mask| {
            (0..m)
                .filter(|&i| mask >> i & 1 == 1)
                .fold(Rational::zero(), |acc, i| acc + items[i].weight)
        })
        .collect();
    let clients_of: Vec<usize> = (0..full)
        .map(|mask| {
            (0..m)
                .filter(|&i| mask >> i & 1 == 1)
                .fold(0usize, |acc, i| acc | 1 << items[i].client)
        })
        .collect();
    let mut states = 0usize;

    // per facility: cheapest packing of each item set into tours
    let mut pack: Vec<Vec<f64>> = Vec::with_capacity(nf);
    let mut pack_choice: Vec<Vec<usize>> = Vec::with_capacity(nf);
    let mut orders = Vec::with_capacity(nf);
    for w in 0..nf {
        let (tsp, order) = tsp_table(inst, w);
        let mut best = vec![f64::INFINITY; full];
        let mut choice = vec![0usize; full];
        best[0] = 0.0;
        for mask in 1..full {
            let low = mask & mask.wrapping_neg();
            let rest = mask ^ low;
            for sub in submasks(rest) {
                states += 1;
                let tour = sub | low;
                if weight[tour] > inst.vehicle_capacity {
                    continue;
                }
                let c = tsp[clients_of[tour]] + best[mask ^ tour];
                if c < best[mask] {
                    best[mask] = c;
                    choice[mask] = tour;
                }
            }
        }
        pack.push(best);
        pack_choice.push(choice);
        orders.push(order);
    }

    // across facilities
    let mut g = vec![vec![f64::INFINITY; full]; nf + 1];
    let mut g_choice = vec![vec![0usize; full]; nf + 1];
    g[0][0] = 0.0;
    for w in 0..nf {
        let u = inst.facilities[w].capacity;
        let f = inst.facilities[w].opening_cost;
        for mask in 0..full {
            for sub in submasks(mask) {
                states += 1;
                let prev = g[w][mask ^ sub];
                if !prev.is_finite() {
                    continue;
                }
                let c = if sub == 0 {
                    prev
                } else {
                    if weight[sub] > u || !pack[w][sub].is_finite() {
                        continue;
                    }
                    prev + f + pack[w][sub]
                };
                if c < g[w + 1][mask] {
                    g[w + 1][mask] = c;
                    g_choice[w + 1][mask] = sub;
                }
            }
        }
    }
    let opt = g[nf][full - 1];
    if !opt.is_finite() {
        return Err(Error::Infeasible("no feasible solution".into()));
    }

    let mut solution = Solution::default();
    let mut mask = full - 1;
    for w in (0..nf).rev() {
        let sub = g_choice[w + 1][mask];
        mask ^= sub;
        if sub == 0 {
            continue;
        }
        solution.open.push(w);
        let mut rest = sub;
        while rest != 0 {
            let tour = pack_choice[w][rest];
            rest ^= tour;
            let seq = orders[w][clients_of[tour]].clone();
            let service = seq
                .iter()
                .map(|&v| {
                    rational::sum(
                        (0..m)
                            .filter(|&i| tour >> i & 1 == 1 && items[i].client == v)
                            .map(|i| &items[i].weight),
                    )
                })
                .collect();
            solution.tours.push(Tour { facility: w, clients: seq, service });
        }
    }
    solution.open.sort_unstable();
    Ok(ExactResult { opt, solution, exact: integral, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::lemma3_family;
    use crate::model::evaluate;
    use crate::model::fixtures::{e2, euclid};
    use crate::rational::{rat, ratio};

    #[test]
    fn lemma3_opt_is_two() {
        for n in 3..=8 {
            let inst = lemma3_family(n);
            let r = brute_force_opt(&inst, &OracleCaps::default()).unwrap();
            assert!(r.exact);
            assert!((r.opt - 2.0).abs() < 1e-12, "n={n}: {}", r.opt);
            let e = evaluate(&inst, &r.solution, &rat(0)).unwrap();
            assert!(e.feasible_strict);
            assert!((e.total_cost - r.opt).abs() < 1e-12);
        }
    }

    #[test]
    fn e2_opt_is_nine() {
        let inst = e2();
        let r = brute_force_opt(&inst, &OracleCaps::default()).unwrap();
        assert!((r.opt - 9.0).abs() < 1e-12);
        assert_eq!(r.solution.tours.len(), 1);
        assert_eq!(r.solution.tours[0].load(), rat(7));
    }

    #[test]
    fn colocated_client_pays_opening_only() {
        let inst = euclid(&[(1.0, 1.0, 5, 7.0)], &[(1.0, 1.0, rat(1))], rat(2));
        let r = brute_force_opt(&inst, &OracleCaps::default()).unwrap();
        assert_eq!(r.opt, 7.0);
    }

    #[test]
    fn split_delivery_can_be_optimal() {
        // two clients of demand 3, vehicle capacity 4: splitting is needed
        // for two tours to cover everything with one facility of capacity 6
        let inst = euclid(&[(0.0, 0.0, 6, 0.0)], &[(3.0, 0.0, rat(3)), (3.0, 0.0, rat(3))], rat(4));
        let r = brute_force_opt(&inst, &OracleCaps::default()).unwrap();
        assert!((r.opt - 12.0).abs() < 1e-12);
        let e = evaluate(&inst, &r.solution, &rat(0)).unwrap();
        assert!(e.feasible_strict, "{:?}", e.violations);
    }

    #[test]
    fn fractional_demands_flagged() {
        let inst = euclid(&[(0.0, 0.0, 6, 0.0)], &[(1.0, 0.0, ratio(1, 2))], rat(4));
        let r = brute_force_opt(&inst, &OracleCaps::default()).unwrap();
        assert!(!r.exact);
        assert!((r.opt - 2.0).abs() < 1e-12);
    }

    #[test]
    fn caps_enforced() {
        let inst = lemma3_family(9);
        assert!(matches!(brute_force_opt(&inst, &OracleCaps::default()), Err(Error::SizeCap { .. })));
        let inst = euclid(&[(0.0, 0.0, 60, 0.0)], &[(1.0, 0.0, rat(13))], rat(20));
        assert!(matches!(brute_force_opt(&inst, &OracleCaps::default()), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn infeasible_capacity() {
        let inst = euclid(&[(0.0, 0.0, 1, 0.0)], &[(1.0, 0.0, rat(2))], rat(4));
        assert!(matches!(brute_force_opt(&inst, &OracleCaps::default()), Err(Error::Infeasible(_))));
    }
}
