//! Random instances on the `[0, 1000]²` square and the hard family for the
//! lower bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Client, Facility, Instance, Metric, Point};
use crate::rational::rat;

pub const SIZES: [usize; 15] = [50, 100, 150, 200, 300, 400, 500, 600, 700, 800, 900, 1000, 2500, 5000, 10000];
pub const XL_SIZES: [usize; 3] = [2500, 5000, 10000];

const SIDE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    S,
    M,
    L,
}

impl Level {
    pub fn letter(self) -> char {
        match self {
            Level::S => 's',
            Level::M => 'm',
            Level::L => 'l',
        }
    }

    pub fn from_letter(c: char) -> Option<Level> {
        match c {
            's' => Some(Level::S),
            'm' => Some(Level::M),
            'l' => Some(Level::L),
            _ => None,
        }
    }

    pub fn vehicle_capacity(self) -> i128 {
        match self {
            Level::S => 70,
            Level::M => 150,
            Level::L => 300,
        }
    }

    pub fn facility_capacity(self) -> i128 {
        match self {
            Level::S => 400,
            Level::M => 600,
            Level::L => 1200,
        }
    }

    pub fn cost_range(self) -> (f64, f64) {
        match self {
            Level::S => (2.0, 4.0),
            Level::M => (200.0, 400.0),
            Level::L => (20000.0, 40000.0),
        }
    }

    pub const ALL: [Level; 3] = [Level::S, Level::M, Level::L];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenParams {
    pub n: usize,
    pub conglomerates: usize,
    pub vehicle_capacity: Level,
    pub facility_cost: Level,
    pub facility_capacity: Level,
    pub seed: u64,
}

impl GenParams {
    /// `n-k-abc`: vehicle capacity, facility cost, facility capacity.
    pub fn name(&self) -> String {
        format!(
            "{}-{}-{}{}{}",
            self.n,
            self.conglomerates,
            self.vehicle_capacity.letter(),
            self.facility_cost.letter(),
            self.facility_capacity.letter()
        )
    }

    pub fn num_facilities(&self) -> usize {
        match self.n {
            50 => 5,
            150 => 10,
            n => n / 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SIZES.contains(&self.n) {
            return Err(Error::Parameter(format!("unsupported instance size {}", self.n)));
        }
        if ![0, 3, 5].contains(&self.conglomerates) {
            return Err(Error::Parameter(format!(
                "conglomerate count must be 0, 3 or 5, got {}",
                self.conglomerates
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub instance: Instance,
    /// Number of times the draw was repeated because demand exceeded capacity.
    pub reseeds: u32,
    /// Cells of the 3×3 grid holding the conglomerates, row-major.
    pub conglomerate_cells: Vec<usize>,
    /// Clients placed inside conglomerate cells.
    pub clients_in_conglomerates: usize,
}

const STREAM_CELLS: u64 = 1;
const STREAM_CLIENTS: u64 = 2;
const STREAM_FACILITIES: u64 = 3;
const STREAM_DEMANDS: u64 = 4;
const STREAM_COSTS: u64 = 5;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

fn cell_point(rng: &mut ChaCha8Rng, cell: usize) -> Point {
    let w = SIDE / 3.0;
    let (cx, cy) = ((cell % 3) as f64 * w, (cell / 3) as f64 * w);
    Point::new(cx + rng.gen::<f64>() * w, cy + rng.gen::<f64>() * w)
}

/// Positions for `count` points: 80% spread over the conglomerate cells, the
/// rest round-robin over the other cells. Returns the number placed inside
/// conglomerates.
fn place(rng: &mut ChaCha8Rng, count: usize, cells: &[usize]) -> (Vec<Point>, usize) {
    if cells.is_empty() {
        let pts = (0..count)
            .map(|_| Point::new(rng.gen::<f64>() * SIDE, rng.gen::<f64>() * SIDE))
            .collect();
        return (pts, 0);
    }
    let inside = (count * 4 + 2) / 5;
    let others: Vec<usize> = (0..9).filter(|c| !cells.contains(c)).collect();
    let mut pts = Vec::with_capacity(count);
    for _ in 0..inside {
        let c = cells[rng.gen_range(0..cells.len())];
        pts.push(cell_point(rng, c));
    }
    for i in 0..count - inside {
        pts.push(cell_point(rng, others[i % others.len()]));
    }
    (pts, inside)
}

fn draw(p: &GenParams, seed: u64) -> Generated {
    let mut cells_rng = stream(seed, STREAM_CELLS);
    let mut cells: Vec<usize> = Vec::new();
    while cells.len() < p.conglomerates {
        let c = cells_rng.gen_range(0..9);
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    cells.sort_unstable();
    let nf = p.num_facilities();
    let (cpos, inside) = place(&mut stream(seed, STREAM_CLIENTS), p.n, &cells);
    let (fpos, _) = place(&mut stream(seed, STREAM_FACILITIES), nf, &cells);
    let mut drng = stream(seed, STREAM_DEMANDS);
    let mut crng = stream(seed, STREAM_COSTS);
    let (lo, hi) = p.facility_cost.cost_range();
    let facilities = fpos
        .into_iter()
        .enumerate()
        .map(|(i, pos)| Facility {
            id: format!("w{}", i + 1),
            capacity: rat(p.facility_capacity.facility_capacity()),
            opening_cost: crng.gen_range(lo..=hi),
            position: Some(pos),
        })
        .collect();
    let clients = cpos
        .into_iter()
        .enumerate()
        .map(|(i, pos)| Client {
            id: format!("v{}", i + 1),
            demand: rat(drng.gen_range(10..=20)),
            position: Some(pos),
        })
        .collect();
    Generated {
        instance: Instance {
            name: p.name(),
            facilities,
            clients,
            vehicle_capacity: rat(p.vehicle_capacity.vehicle_capacity()),
            metric: Metric::Euclidean,
        },
        reseeds: 0,
        conglomerate_cells: cells,
        clients_in_conglomerates: inside,
    }
}

/// Maximum number of redraws when the demand exceeds the capacity.
pub const MAX_RESEEDS: u32 = 64;

pub fn generate(p: &GenParams) -> Result<Generated> {
    p.validate()?;
    let mut seed = p.seed;
    for reseeds in 0..=MAX_RESEEDS {
        let mut g = draw(p, seed);
        if g.instance.total_demand() <= g.instance.total_capacity() {
            g.reseeds = reseeds;
            return Ok(g);
        }
        seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    }
    Err(Error::Infeasible(format!(
        "{}: demand exceeds capacity after {MAX_RESEEDS} redraws",
        p.name()
    )))
}

/// Rows of the orthogonal array as (conglomerates, facility cost, vehicle
/// capacity, facility capacity).
pub const XL_ROWS: [(usize, Level, Level, Level); 9] = {
    use Level::*;
    [
        (0, S, S, S),
        (0, M, M, M),
        (0, L, L, L),
        (3, S, M, L),
        (3, M, L, S),
        (3, L, S, M),
        (5, S, L, M),
        (5, M, S, L),
        (5, L, M, S),
    ]
};

/// The 27 parameter sets of the XL experiment (9 rows for each XL size).
pub fn xl_design(seed: u64) -> Vec<GenParams> {
    XL_SIZES
        .iter()
        .flat_map(|&n| {
            XL_ROWS.iter().map(move |&(k, fcost, vcap, fcap)| GenParams {
                n,
                conglomerates: k,
                vehicle_capacity: vcap,
                facility_cost: fcost,
                facility_capacity: fcap,
                seed,
            })
        })
        .collect()
}

/// `n` unit-demand clients on top of `w1`, `w2` at distance one, no opening
/// costs, every capacity equal to `n − 1`.
pub fn lemma3_family(n: usize) -> Instance {
    assert!(n >= 2, "the family starts at n = 2");
    let u = rat(n as i128 - 1);
    let facility = |i: usize, x: f64| Facility {
        id: format!("w{i}"),
        capacity: u,
        opening_cost: 0.0,
        position: Some(Point::new(x, 0.0)),
    };
    Instance {
        name: format!("lemma3-{n}"),
        facilities: vec![facility(1, 0.0), facility(2, 1.0)],
        clients: (0..n)
            .map(|i| Client {
                id: format!("v{}", i + 1),
                demand: rat(1),
                position: Some(Point::new(0.0, 0.0)),
            })
            .collect(),
        vehicle_capacity: u,
        metric: Metric::Euclidean,
    }
}
