//! Report documents and their JSON / table renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use ergode::family::Analytic;
use ergode::limits::Atom;
use ergode::montecarlo::{Cluster, ExperimentSummary};
use ergode::Classification;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(flatten)]
    pub body: Body,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum Body {
    Classify(ClassifyPayload),
    Limits(LimitsPayload),
    Cesaro(CesaroPayload),
    Simulate(SimulatePayload),
    Family(FamilyPayload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub parameters: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl Metadata {
    pub fn new(parameters: BTreeMap<String, String>) -> Self {
        Metadata {
            tool: "ergode".to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: None,
            parameters,
            rng: None,
            wall_time_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: usize,
    pub members: Vec<String>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateClass {
    pub state: String,
    pub class_id: usize,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyPayload {
    pub states: Vec<String>,
    pub classes: Vec<ClassEntry>,
    pub classification: Vec<StateClass>,
}

/// Column `f_{., target}` in state order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitColumn {
    pub target: String,
    pub classification: Classification,
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateValue {
    pub state: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitsPayload {
    pub states: Vec<String>,
    pub classes: Vec<ClassEntry>,
    pub classification: Vec<StateClass>,
    pub hitting: Vec<HitColumn>,
    pub stationary: Vec<StateValue>,
    pub mean_return_times: Vec<StateValue>,
    pub cesaro: Vec<Vec<f64>>,
    pub occupation: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_mean: Option<f64>,
    pub pathwise: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CesaroPayload {
    pub states: Vec<String>,
    pub n: u64,
    pub matrix: Vec<Vec<f64>>,
    pub occupation: Vec<f64>,
    /// `max |finite - limit|` over the matrix, when the limit could be solved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupation_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Source {
    File { path: String },
    Family { name: String, params: BTreeMap<String, f64> },
}

/// One predicted-vs-empirical line of a simulation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomCheck {
    pub value: f64,
    pub probability: f64,
    pub empirical_mass: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicPayload {
    pub band: f64,
    pub mean: f64,
    pub mean_stderr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_mean: Option<f64>,
    pub clusters: Vec<Cluster>,
    pub atoms: Vec<AtomCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatePayload {
    pub source: Source,
    pub target: String,
    pub summary: ExperimentSummary,
    pub comparison: Vec<Comparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodic: Option<ErgodicPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyPayload {
    pub family: String,
    pub params: BTreeMap<String, f64>,
    pub start: i64,
    pub target: i64,
    pub declared_class_of_target: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<Analytic>,
}

/// Writes floats with 17 significant digits.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json(report: &Report) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    report.serialize(&mut ser).expect("report serializes");
    String::from_utf8(out).expect("utf-8 json")
}

pub fn from_json(text: &str) -> serde_json::Result<Report> {
    serde_json::from_str(text)
}

/// Human-readable rendering. Numbers use the shortest representation that
/// parses back to the same value as the JSON output.
pub fn to_table(report: &Report) -> String {
    let mut s = String::new();
    match &report.body {
        Body::Classify(p) => {
            classes_table(&mut s, &p.classes, &p.classification);
        }
        Body::Limits(p) => {
            classes_table(&mut s, &p.classes, &p.classification);
            let _ = writeln!(s, "\nhitting probabilities f[i][j] (rows i, columns j)");
            let cols: Vec<&str> = p.hitting.iter().map(|c| c.target.as_str()).collect();
            let rows: Vec<Vec<f64>> = (0..p.states.len())
                .map(|i| p.hitting.iter().map(|c| c.f[i]).collect())
                .collect();
            matrix_table(&mut s, &p.states, &cols, &rows);
            let _ = writeln!(s, "\nstationary law and mean return times");
            for (pi, m) in p.stationary.iter().zip(&p.mean_return_times) {
                let _ = writeln!(s, "  {:<12} pi {:<24} m {}", pi.state, pi.value, m.value);
            }
            let _ = writeln!(s, "\nCesaro limit A");
            let labels: Vec<&str> = p.states.iter().map(String::as_str).collect();
            matrix_table(&mut s, &p.states, &labels, &p.cesaro);
            let _ = writeln!(s, "\naveraged occupation limit");
            for (state, o) in p.states.iter().zip(&p.occupation) {
                let _ = writeln!(s, "  {state:<12} {o}");
            }
            if let Some(g) = p.g_mean {
                let _ = writeln!(s, "\ng mean limit {g}");
            }
            let _ = writeln!(s, "\npathwise limit law (value, probability)");
            for a in &p.pathwise {
                let _ = writeln!(s, "  {:<24} {}", a.value, a.probability);
            }
        }
        Body::Cesaro(p) => {
            let _ = writeln!(s, "Cesaro average over n = {}", p.n);
            let labels: Vec<&str> = p.states.iter().map(String::as_str).collect();
            matrix_table(&mut s, &p.states, &labels, &p.matrix);
            let _ = writeln!(s, "\naveraged occupation");
            for (state, o) in p.states.iter().zip(&p.occupation) {
                let _ = writeln!(s, "  {state:<12} {o}");
            }
            if let Some(d) = p.limit_deviation {
                let _ = writeln!(s, "\nmax deviation from limit matrix {d}");
            }
            if let Some(d) = p.occupation_deviation {
                let _ = writeln!(s, "max deviation from occupation limit {d}");
            }
        }
        Body::Simulate(p) => {
            let m = &p.summary;
            let _ = writeln!(
                s,
                "target {} ({:?}), {} paths x {} steps, seed {}, band {}",
                p.target, m.reference.classification, m.paths, m.horizon, m.seed, m.band
            );
            let _ = writeln!(s, "\n  {:<22} {:<24} {:<24} stderr", "quantity", "predicted", "empirical");
            for c in &p.comparison {
                let _ = writeln!(
                    s,
                    "  {:<22} {:<24} {:<24} {}",
                    c.quantity,
                    opt(c.predicted),
                    opt(c.empirical),
                    opt(c.stderr)
                );
            }
            if let Some(e) = &p.ergodic {
                let _ = writeln!(s, "\ng-average: mean {} (stderr {}), predicted {}", e.mean, e.mean_stderr, opt(e.predicted_mean));
                let _ = writeln!(s, "  {:<24} {:<24} {:<24} stderr", "atom", "probability", "empirical");
                for a in &e.atoms {
                    let _ = writeln!(s, "  {:<24} {:<24} {:<24} {}", a.value, a.probability, a.empirical_mass, a.stderr);
                }
            }
        }
        Body::Family(p) => {
            let _ = writeln!(s, "family {} {:?}", p.family, p.params);
            let _ = writeln!(s, "start {}, target {}, target class {:?}", p.start, p.target, p.declared_class_of_target);
            if let Some(a) = &p.analytic {
                let _ = writeln!(s, "f(start, target) {}", opt(a.f_start_target));
                let _ = writeln!(s, "m(target) {}", opt(a.m_target));
            }
        }
    }
    s
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_owned(), |v| v.to_string())
}

fn classes_table(s: &mut String, classes: &[ClassEntry], states: &[StateClass]) {
    let _ = writeln!(s, "communicating classes");
    for c in classes {
        let _ = writeln!(
            s,
            "  #{:<3} {:<6} {{{}}}",
            c.id,
            if c.closed { "closed" } else { "open" },
            c.members.join(", ")
        );
    }
    let _ = writeln!(s, "\nstate classification");
    for st in states {
        let _ = writeln!(s, "  {:<12} class {:<3} {:?}", st.state, st.class_id, st.classification);
    }
}

fn matrix_table(s: &mut String, rows: &[String], cols: &[&str], values: &[Vec<f64>]) {
    let _ = write!(s, "  {:<12}", "");
    for c in cols {
        let _ = write!(s, " {c:<24}");
    }
    let _ = writeln!(s);
    for (label, row) in rows.iter().zip(values) {
        let _ = write!(s, "  {label:<12}");
        for v in row {
            let _ = write!(s, " {v:<24}");
        }
        let _ = writeln!(s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            body: Body::Cesaro(CesaroPayload {
                states: vec!["a".into(), "b".into()],
                n: 3,
                matrix: vec![vec![1.0 / 3.0, 2.0 / 3.0], vec![0.1, 0.9]],
                occupation: vec![0.30000000000000004, -0.0],
                limit_deviation: Some(1e-300),
                occupation_deviation: None,
            }),
            metadata: Metadata {
                seed: Some(u64::MAX),
                ..Metadata::new(BTreeMap::from([("n".to_owned(), "3".to_owned())]))
            },
        }
    }

    #[test]
    fn json_round_trips_exactly() {
        let r = sample();
        let text = to_json(&r);
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
        assert!(text.contains("\"kind\":\"cesaro\""));
        assert_eq!(from_json(&text).unwrap(), r);
    }

    #[test]
    fn table_shows_the_same_numbers() {
        let r = sample();
        let table = to_table(&r);
        let json: serde_json::Value = serde_json::from_str(&to_json(&r)).unwrap();
        for row in json["payload"]["matrix"].as_array().unwrap() {
            for v in row.as_array().unwrap() {
                assert!(table.contains(&v.as_f64().unwrap().to_string()));
            }
        }
    }
}
