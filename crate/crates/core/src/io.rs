//! File formats: instances, solutions and experiment reports.
//!
//! The canonical instance format is line oriented, `#` starts a comment:
//!
//! ```text
//! NAME lemma3-5
//! VEHICLE_CAPACITY 4
//! METRIC EUCLIDEAN
//! FACILITIES 2
//! w1 0 0 4 0
//! w2 1 0 4 0
//! CLIENTS 5
//! v1 0 0 1
//! ...
//! END
//! ```
//!
//! Facility records are `id x y capacity opening_cost`, client records are
//! `id x y demand`. With `METRIC EXPLICIT` coordinates may be `-` and a
//! `DISTANCES` block of `|F|+|C|` rows (facilities first) follows the
//! clients. Euclidean distances are never stored.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lowerbounds::gap_to_lower_bound;
use crate::model::{Client, Facility, Instance, Metric, Point, Solution, Tour};
use crate::pipeline::RunResult;
use crate::rational::{self, Rational};

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| perr(line, format!("expected a number, found {tok:?}")))
}

fn parse_rational(tok: &str, line: usize) -> Result<Rational> {
    rational::parse(tok).map_err(|_| perr(line, format!("expected a rational, found {tok:?}")))
}

fn parse_point(x: &str, y: &str, line: usize) -> Result<Option<Point>> {
    match (x, y) {
        ("-", "-") => Ok(None),
        _ => Ok(Some(Point::new(parse_f64(x, line)?, parse_f64(y, line)?))),
    }
}

fn write_point(out: &mut String, p: &Option<Point>) {
    match p {
        Some(p) => {
            let _ = write!(out, "{} {}", fmt_f64(p.x), fmt_f64(p.y));
        }
        None => out.push_str("- -"),
    }
}

pub fn write_instance(inst: &Instance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME {}", inst.name);
    let _ = writeln!(out, "VEHICLE_CAPACITY {}", rational::format(&inst.vehicle_capacity));
    let explicit = matches!(inst.metric, Metric::Explicit(_));
    let _ = writeln!(out, "METRIC {}", if explicit { "EXPLICIT" } else { "EUCLIDEAN" });
    let _ = writeln!(out, "FACILITIES {}", inst.facilities.len());
    for f in &inst.facilities {
        let _ = write!(out, "{} ", f.id);
        write_point(&mut out, &f.position);
        let _ = writeln!(out, " {} {}", rational::format(&f.capacity), fmt_f64(f.opening_cost));
    }
    let _ = writeln!(out, "CLIENTS {}", inst.clients.len());
    for c in &inst.clients {
        let _ = write!(out, "{} ", c.id);
        write_point(&mut out, &c.position);
        let _ = writeln!(out, " {}", rational::format(&c.demand));
    }
    if let Metric::Explicit(m) = &inst.metric {
        let n = inst.num_sites();
        out.push_str("DISTANCES\n");
        for row in m.chunks(n.max(1)) {
            let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
    }
    out.push_str("END\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { inner: text.lines().enumerate(), last: 0 }
    }

    /// Next non-empty line with comments removed, split on whitespace.
    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let body = raw.split('#').next().unwrap_or("");
            let toks: Vec<&str> = body.split_whitespace().collect();
            if !toks.is_empty() {
                return Some((i + 1, toks));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        self.next().ok_or_else(|| perr(self.last, format!("unexpected end of file, expected {what}")))
    }
}

fn keyword<'a>(toks: &[&'a str], key: &str, line: usize) -> Result<&'a str> {
    if toks.len() != 2 || toks[0] != key {
        return Err(perr(line, format!("expected `{key} <value>`")));
    }
    Ok(toks[1])
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let mut lines = Lines::new(text);
    let (l, t) = lines.expect("NAME")?;
    let name = keyword(&t, "NAME", l)?.to_string();
    let (l, t) = lines.expect("VEHICLE_CAPACITY")?;
    let vehicle_capacity = parse_rational(keyword(&t, "VEHICLE_CAPACITY", l)?, l)?;
    let (l, t) = lines.expect("METRIC")?;
    let explicit = match keyword(&t, "METRIC", l)? {
        "EUCLIDEAN" => false,
        "EXPLICIT" => true,
        other => return Err(perr(l, format!("unknown metric {other:?}"))),
    };
    let count = |t: &[&str], key: &str, l: usize| -> Result<usize> {
        keyword(t, key, l)?.parse().map_err(|_| perr(l, format!("bad {key} count")))
    };
    let (l, t) = lines.expect("FACILITIES")?;
    let nf = count(&t, "FACILITIES", l)?;
    let mut facilities = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, t) = lines.expect("facility record")?;
        if t.len() != 5 {
            return Err(perr(l, "facility record needs `id x y capacity opening_cost`"));
        }
        facilities.push(Facility {
            id: t[0].to_string(),
            position: parse_point(t[1], t[2], l)?,
            capacity: parse_rational(t[3], l)?,
            opening_cost: parse_f64(t[4], l)?,
        });
    }
    let (l, t) = lines.expect("CLIENTS")?;
    let nc = count(&t, "CLIENTS", l)?;
    let mut clients = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (l, t) = lines.expect("client record")?;
        if t.len() != 4 {
            return Err(perr(l, "client record needs `id x y demand`"));
        }
        clients.push(Client {
            id: t[0].to_string(),
            position: parse_point(t[1], t[2], l)?,
            demand: parse_rational(t[3], l)?,
        });
    }
    let metric = if explicit {
        let (l, t) = lines.expect("DISTANCES")?;
        if t != ["DISTANCES"] {
            return Err(perr(l, "expected DISTANCES"));
        }
        let n = nf + nc;
        let mut m = Vec::with_capacity(n * n);
        for _ in 0..n {
            let (l, t) = lines.expect("distance row")?;
            if t.len() != n {
                return Err(perr(l, format!("distance row needs {n} entries")));
            }
            for tok in t {
                m.push(parse_f64(tok, l)?);
            }
        }
        Metric::Explicit(m)
    } else {
        if let Some((l, _)) = facilities
            .iter()
            .map(|f| f.position)
            .chain(clients.iter().map(|c| c.position))
            .zip(1..)
            .find(|(p, _)| p.is_none())
            .map(|(_, i)| (i, ()))
        {
            return Err(perr(l, "euclidean instance with a record lacking coordinates"));
        }
        Metric::Euclidean
    };
    let (l, t) = lines.expect("END")?;
    if t != ["END"] {
        return Err(perr(l, "expected END"));
    }
    if let Some((l, _)) = lines.next() {
        return Err(perr(l, "content after END"));
    }
    Ok(Instance { name, facilities, clients, vehicle_capacity, metric })
}

pub fn instance_to_json(inst: &Instance) -> Result<String> {
    serde_json::to_string_pretty(inst).map_err(|e| Error::Io(e.to_string()))
}

pub fn instance_from_json(text: &str) -> Result<Instance> {
    serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Reads either format, chosen by the `.json` extension.
pub fn read_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if is_json(path) {
        instance_from_json(&text)
    } else {
        parse_instance(&text)
    }
}

pub fn write_instance_file(path: &Path, inst: &Instance) -> Result<()> {
    let text = if is_json(path) { instance_to_json(inst)? } else { write_instance(inst) };
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Solution text: `OPEN` lists facility ids, each `TOUR` line names its
/// facility followed by `client:amount` stops in visiting order.
pub fn write_solution(inst: &Instance, sol: &Solution) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "INSTANCE {}", inst.name);
    out.push_str("OPEN");
    for &w in &sol.open {
        let _ = write!(out, " {}", inst.facilities[w].id);
    }
    out.push('\n');
    for t in &sol.tours {
        let _ = write!(out, "TOUR {}", inst.facilities[t.facility].id);
        for (&v, x) in t.clients.iter().zip(&t.service) {
            let _ = write!(out, " {}:{}", inst.clients[v].id, rational::format(x));
        }
        out.push('\n');
    }
    out.push_str("END\n");
    out
}

pub fn parse_solution(text: &str, inst: &Instance) -> Result<Solution> {
    let mut lines = Lines::new(text);
    let (l, t) = lines.expect("INSTANCE")?;
    if t.first() != Some(&"INSTANCE") {
        return Err(perr(l, "expected INSTANCE"));
    }
    let facility = |id: &str, l: usize| {
        inst.facility_by_id(id).ok_or_else(|| perr(l, format!("unknown facility {id:?}")))
    };
    let mut sol = Solution::default();
    let (l, t) = lines.expect("OPEN")?;
    if t[0] != "OPEN" {
        return Err(perr(l, "expected OPEN"));
    }
    for id in &t[1..] {
        sol.open.push(facility(id, l)?);
    }
    loop {
        let (l, t) = lines.expect("TOUR or END")?;
        match t[0] {
            "END" => break,
            "TOUR" if t.len() >= 2 => {
                let w = facility(t[1], l)?;
                let mut tour = Tour { facility: w, clients: Vec::new(), service: Vec::new() };
                for stop in &t[2..] {
                    let (id, amount) = stop
                        .rsplit_once(':')
                        .ok_or_else(|| perr(l, format!("stop {stop:?} lacks `:amount`")))?;
                    let v = inst
                        .client_by_id(id)
                        .ok_or_else(|| perr(l, format!("unknown client {id:?}")))?;
                    tour.clients.push(v);
                    tour.service.push(parse_rational(amount, l)?);
                }
                sol.tours.push(tour);
            }
            _ => return Err(perr(l, "expected TOUR or END")),
        }
    }
    Ok(sol)
}

/// `%.9g`-style formatting.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.8e}");
        let (mant, e) = s.split_once('e').unwrap();
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{e}")
    }
}

fn ser_sig9<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&sig9(*x))
}

fn ser_opt_sig9<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(x) => s.serialize_str(&sig9(*x)),
        None => s.serialize_str(""),
    }
}

/// One line of an experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub instance: String,
    pub variant: String,
    pub epsilon: String,
    #[serde(serialize_with = "ser_sig9")]
    pub cost: f64,
    #[serde(serialize_with = "ser_opt_sig9")]
    pub mst_bound: Option<f64>,
    #[serde(serialize_with = "ser_opt_sig9")]
    pub cfl_bound: Option<f64>,
    pub cfl_exact: Option<bool>,
    /// `(cost − LB) / LB`; empty when the bound is zero or missing.
    #[serde(serialize_with = "ser_opt_sig9")]
    pub gap_lb: Option<f64>,
    pub feasible_strict: bool,
    pub feasible_relaxed: bool,
    #[serde(serialize_with = "ser_sig9")]
    pub max_relative_excess: f64,
    pub gamma: String,
    #[serde(serialize_with = "ser_sig9")]
    pub time_clustering: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub time_assignment: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub time_routing: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub time_bounds: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub time_total: f64,
    pub interrupted: bool,
    pub bounds_interrupted: bool,
}

impl ReportRow {
    pub fn new(instance: &str, variant: &str, epsilon: &Rational, r: &RunResult) -> Self {
        let gap = r.bounds.as_ref().and_then(|b| gap_to_lower_bound(r.evaluation.total_cost, b).ok());
        ReportRow {
            instance: instance.to_string(),
            variant: variant.to_string(),
            epsilon: rational::format(epsilon),
            cost: r.evaluation.total_cost,
            mst_bound: r.bounds.as_ref().map(|b| b.mst_bound),
            cfl_bound: r.bounds.as_ref().map(|b| b.cfl_bound),
            cfl_exact: r.bounds.as_ref().map(|b| b.cfl_exact),
            gap_lb: gap,
            feasible_strict: r.evaluation.feasible_strict,
            feasible_relaxed: r.evaluation.feasible_relaxed,
            max_relative_excess: r.evaluation.max_relative_excess,
            gamma: rational::format(&r.gamma),
            time_clustering: r.timings.clustering,
            time_assignment: r.timings.assignment,
            time_routing: r.timings.routing,
            time_bounds: r.timings.bounds,
            time_total: r.timings.total,
            interrupted: r.interrupted,
            bounds_interrupted: r.bounds_interrupted,
        }
    }

    /// Same row with all timings zeroed, for reproducible reports.
    pub fn without_timings(mut self) -> Self {
        self.time_clustering = 0.0;
        self.time_assignment = 0.0;
        self.time_routing = 0.0;
        self.time_bounds = 0.0;
        self.time_total = 0.0;
        self
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_report_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    if rows.is_empty() {
        return Ok(String::new());
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Scatter series of maximum relative excess load against the gap to the
/// lower bound, one row per run with a defined gap.
pub fn plot_data(rows: &[ReportRow]) -> String {
    let mut out = String::from("variant,instance,gap_lb,max_excess_load\n");
    let mut rows: Vec<&ReportRow> = rows.iter().filter(|r| r.gap_lb.is_some()).collect();
    rows.sort_by(|a, b| a.variant.cmp(&b.variant).then(a.instance.cmp(&b.instance)));
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.variant,
            r.instance,
            sig9(r.gap_lb.unwrap()),
            sig9(r.max_relative_excess)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, lemma3_family, GenParams, Level};
    use crate::model::fixtures::e2;
    use crate::rational::{rat, ratio};

    #[test]
    fn round_trip_text() {
        for inst in [lemma3_family(5), e2()] {
            let text = write_instance(&inst);
            let back = parse_instance(&text).unwrap();
            assert_eq!(back, inst);
            assert_eq!(write_instance(&back), text);
        }
    }

    #[test]
    fn round_trip_generated_is_bit_stable() {
        let g = generate(&GenParams {
            n: 50,
            conglomerates: 5,
            vehicle_capacity: Level::L,
            facility_cost: Level::S,
            facility_capacity: Level::M,
            seed: 11,
        })
        .unwrap();
        let back = parse_instance(&write_instance(&g.instance)).unwrap();
        assert_eq!(back, g.instance);
        let json = instance_to_json(&g.instance).unwrap();
        assert_eq!(instance_from_json(&json).unwrap(), g.instance);
    }

    #[test]
    fn explicit_metric_round_trip() {
        let mut inst = e2();
        inst.clients[0].demand = ratio(7, 2);
        inst.facilities[0].position = None;
        inst.metric = Metric::Explicit(vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        let text = write_instance(&inst);
        assert!(text.contains("DISTANCES"));
        assert_eq!(parse_instance(&text).unwrap(), inst);
    }

    #[test]
    fn comments_and_errors() {
        let text = "# header\nNAME x # trailing\nVEHICLE_CAPACITY 3\nMETRIC EUCLIDEAN\nFACILITIES 1\nw 0 0 5 1.5\nCLIENTS 1\nv 1 0 2\nEND\n";
        let inst = parse_instance(text).unwrap();
        assert_eq!(inst.facilities[0].opening_cost, 1.5);
        let bad = text.replace("v 1 0 2", "v 1 0");
        assert!(matches!(parse_instance(&bad), Err(Error::Parse { line: 8, .. })));
        let bad = text.replace("METRIC EUCLIDEAN", "METRIC MANHATTAN");
        assert!(matches!(parse_instance(&bad), Err(Error::Parse { line: 4, .. })));
        let bad = text.replace("w 0 0", "w - -");
        assert!(parse_instance(&bad).is_err());
        assert!(parse_instance(&text.replace("END\n", "")).is_err());
    }

    #[test]
    fn solution_round_trip() {
        let inst = lemma3_family(3);
        let sol = Solution {
            open: vec![0, 1],
            tours: vec![
                Tour { facility: 0, clients: vec![0, 1], service: vec![rat(1), ratio(1, 2)] },
                Tour { facility: 1, clients: vec![1, 2], service: vec![ratio(1, 2), rat(1)] },
            ],
        };
        let text = write_solution(&inst, &sol);
        assert_eq!(parse_solution(&text, &inst).unwrap(), sol);
        assert!(parse_solution(&text.replace("v2:1/2", "v9:1"), &inst).is_err());
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(2.0 / 3.0), "0.666666667");
        assert_eq!(sig9(123456789.4), "123456789");
        assert_eq!(sig9(1234567890.0), "1.23456789e9");
        assert_eq!(sig9(-0.25), "-0.25");
        assert_eq!(sig9(1.5e-7), "1.5e-7");
    }

    #[test]
    fn report_round_trip_and_plot() {
        let row = ReportRow {
            instance: "a".into(),
            variant: "ls-dts".into(),
            epsilon: "1".into(),
            cost: 2.0,
            mst_bound: Some(0.0),
            cfl_bound: Some(0.5),
            cfl_exact: Some(true),
            gap_lb: Some(3.0),
            feasible_strict: true,
            feasible_relaxed: true,
            max_relative_excess: 0.0,
            gamma: "1".into(),
            time_clustering: 0.0,
            time_assignment: 0.0,
            time_routing: 0.0,
            time_bounds: 0.0,
            time_total: 0.0,
            interrupted: false,
            bounds_interrupted: false,
        };
        let mut other = row.clone();
        other.instance = "b".into();
        other.gap_lb = None;
        let csv = write_report_csv(&[row.clone(), other.clone()]).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(read_report_csv(&csv).unwrap(), vec![row.clone(), other.clone()]);
        let plot = plot_data(&[row, other]);
        assert_eq!(plot, "variant,instance,gap_lb,max_excess_load\nls-dts,a,3,0\n");
    }
}
