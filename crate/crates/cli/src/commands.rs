use std::collections::BTreeMap;
use std::path::Path;

use ergode::limits::{analyze, finite_cesaro, max_abs_diff, LimitReport, LimitsError};
use ergode::montecarlo::{
    ergodic_average_experiment, family_convergence_experiment, finite_convergence_experiment, FiniteKernel, Observable,
    RNG_NAME,
};
use ergode::structure::communicating_classes;
use ergode::{builtin_family, ChainSpec, ClassStructure, Classification, ExperimentConfig, ExperimentError, SolveConfig};

use crate::input::load_chain;
use crate::report::*;

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    pub fn invalid(message: impl ToString) -> Self {
        Failure { code: 2, message: message.to_string() }
    }

    fn solver(e: ergode::SolveError) -> Self {
        Failure { code: 3, message: e.to_string() }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match e {
            ExperimentError::MissingMeanReturnTime(_) => 5,
            ExperimentError::UnknownTarget(_) => 2,
            ExperimentError::Zero(_) => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

pub struct Common {
    pub row_tol: f64,
    pub solve: SolveConfig,
}

fn load(path: &Path, common: &Common) -> Result<ChainSpec, Failure> {
    load_chain(path, common.row_tol).map_err(Failure::invalid)
}

fn class_entries(spec: &ChainSpec, s: &ClassStructure) -> (Vec<ClassEntry>, Vec<StateClass>) {
    let label = |i: usize| spec.space.label(i).to_owned();
    let classes = s
        .classes
        .iter()
        .map(|c| ClassEntry {
            id: c.id,
            members: c.members.iter().map(|&i| label(i)).collect(),
            closed: c.closed,
        })
        .collect();
    let states = (0..spec.n_states())
        .map(|i| StateClass {
            state: label(i),
            class_id: s.class_of[i],
            classification: s.classification[i],
        })
        .collect();
    (classes, states)
}

fn params(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub fn classify(path: &Path, common: &Common) -> Result<Report, Failure> {
    let spec = load(path, common)?;
    let s = communicating_classes(&spec.p);
    let (classes, classification) = class_entries(&spec, &s);
    Ok(Report {
        body: Body::Classify(ClassifyPayload {
            states: spec.space.labels().to_vec(),
            classes,
            classification,
        }),
        metadata: Metadata::new(params(&[("file", path.display().to_string())])),
    })
}

fn limits_payload(spec: &ChainSpec, r: &LimitReport) -> LimitsPayload {
    let n = spec.n_states();
    let label = |i: usize| spec.space.label(i).to_owned();
    let (classes, classification) = class_entries(spec, &r.structure);
    let hitting = r
        .hitting
        .computed_columns()
        .map(|j| HitColumn {
            target: label(j),
            classification: r.structure.classification[j],
            f: (0..n).map(|i| r.hitting.get(i, j).expect("computed column")).collect(),
        })
        .collect();
    let mut stationary = Vec::new();
    let mut mean_return_times = Vec::new();
    for j in 0..n {
        if let Some(m) = r.mean_return[j] {
            let cs = r.stationary.iter().find(|c| c.members.contains(&j)).expect("class law");
            let k = cs.members.binary_search(&j).expect("member");
            stationary.push(StateValue { state: label(j), value: cs.pi[k] });
            mean_return_times.push(StateValue { state: label(j), value: m });
        }
    }
    LimitsPayload {
        states: spec.space.labels().to_vec(),
        classes,
        classification,
        hitting,
        stationary,
        mean_return_times,
        cesaro: (0..n).map(|i| r.cesaro.row(i).to_vec()).collect(),
        occupation: r.occupation.clone(),
        g_mean: spec.g.as_ref().map(|_| r.g_mean),
        pathwise: r.pathwise.clone(),
    }
}

pub fn limits(path: &Path, transient_targets: bool, common: &Common) -> Result<Report, Failure> {
    let spec = load(path, common)?;
    let r = analyze(&spec, &common.solve, transient_targets).map_err(Failure::solver)?;
    Ok(Report {
        body: Body::Limits(limits_payload(&spec, &r)),
        metadata: Metadata::new(params(&[
            ("file", path.display().to_string()),
            ("with_transient_targets", transient_targets.to_string()),
            ("tol", common.row_tol.to_string()),
        ])),
    })
}

pub fn cesaro(path: &Path, n: u64, common: &Common) -> Result<Report, Failure> {
    let spec = load(path, common)?;
    let fc = finite_cesaro(&spec.p, &spec.mu0, n).map_err(|e| match e {
        LimitsError::DimensionGuard { .. } => Failure { code: 4, message: e.to_string() },
        LimitsError::ZeroHorizon => Failure::usage(e.to_string()),
    })?;
    let size = spec.n_states();
    // The limit is optional here: a solver failure only drops the deviation.
    let exact = analyze(&spec, &common.solve, false).ok();
    let occupation_deviation = exact.as_ref().map(|r| {
        fc.occupation
            .iter()
            .zip(&r.occupation)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    });
    Ok(Report {
        body: Body::Cesaro(CesaroPayload {
            states: spec.space.labels().to_vec(),
            n,
            matrix: (0..size).map(|i| fc.matrix.row(i).to_vec()).collect(),
            occupation: fc.occupation.clone(),
            limit_deviation: exact.as_ref().map(|r| max_abs_diff(&fc.matrix, &r.cesaro)),
            occupation_deviation,
        }),
        metadata: Metadata::new(params(&[("file", path.display().to_string()), ("n", n.to_string())])),
    })
}

pub struct SimulateArgs<'a> {
    pub file: Option<&'a Path>,
    pub family: Option<&'a str>,
    pub params: &'a [(String, f64)],
    pub target: Option<&'a str>,
    pub cfg: ExperimentConfig,
}

pub fn simulate(args: &SimulateArgs<'_>, common: &Common) -> Result<Report, Failure> {
    let cfg = args.cfg;
    let mut meta = params(&[
        ("n", cfg.n.to_string()),
        ("paths", cfg.paths.to_string()),
        ("band", cfg.band.map_or("auto".to_owned(), |b| b.to_string())),
    ]);
    let (source, target, summary, ergodic) = match (args.file, args.family) {
        (Some(path), None) => {
            let spec = load(path, common)?;
            let label = args.target.ok_or_else(|| Failure::usage("--target is required with a chain file"))?;
            let j = spec
                .space
                .index_of(label)
                .ok_or_else(|| Failure::invalid(format!("unknown target state `{label}`")))?;
            let transient = communicating_classes(&spec.p).classification[j] == Classification::Transient;
            let r = analyze(&spec, &common.solve, transient).map_err(Failure::solver)?;
            let summary = finite_convergence_experiment(&spec, &r, j, &cfg)?;
            let ergodic = match &spec.g {
                None => None,
                Some(_) => {
                    let kernel = FiniteKernel::from_spec(&spec);
                    let e = ergodic_average_experiment(&kernel, &Observable::Dense(spec.g_dense()), summary.band, &cfg)?;
                    let atoms = r
                        .pathwise
                        .iter()
                        .map(|a| {
                            let (empirical_mass, stderr) = e.mass_near(a.value);
                            AtomCheck { value: a.value, probability: a.probability, empirical_mass, stderr }
                        })
                        .collect();
                    Some(ErgodicPayload {
                        band: e.band,
                        mean: e.mean,
                        mean_stderr: e.mean_stderr,
                        predicted_mean: Some(r.g_mean),
                        clusters: e.clusters,
                        atoms,
                    })
                }
            };
            meta.insert("file".into(), path.display().to_string());
            (Source::File { path: path.display().to_string() }, label.to_owned(), summary, ergodic)
        }
        (None, Some(name)) => {
            let params: BTreeMap<String, f64> = args.params.iter().cloned().collect();
            let chain = builtin_family(name, &params).map_err(Failure::invalid)?;
            let target = match args.target {
                None => chain.target,
                Some(t) => t
                    .parse::<i64>()
                    .map_err(|_| Failure::invalid(format!("family targets are integers, got `{t}`")))?,
            };
            let summary = family_convergence_experiment(&chain, target, &cfg)?;
            meta.insert("family".into(), name.to_owned());
            for (k, v) in &chain.params {
                meta.insert(format!("param.{k}"), v.to_string());
            }
            (
                Source::Family { name: name.to_owned(), params: chain.params.clone() },
                target.to_string(),
                summary,
                None,
            )
        }
        _ => return Err(Failure::usage("give exactly one of a chain file or --family")),
    };

    let s = &summary;
    let mut comparison = vec![Comparison {
        quantity: "hit_mass".into(),
        predicted: s.predicted_hit_mass,
        empirical: Some(s.frac_hit),
        stderr: Some(s.frac_hit_stderr),
    }];
    if s.frac_near_inverse_m.is_some() {
        comparison.push(Comparison {
            quantity: "near_inverse_m".into(),
            predicted: s.predicted_hit_mass,
            empirical: s.frac_near_inverse_m,
            stderr: s.frac_near_inverse_m_stderr,
        });
    }
    comparison.extend([
        Comparison {
            quantity: "near_zero".into(),
            predicted: s.predicted_zero_mass,
            empirical: Some(s.frac_near_zero),
            stderr: Some(s.frac_near_zero_stderr),
        },
        Comparison {
            quantity: "mean_occupation".into(),
            predicted: s.reference.occupation_limit,
            empirical: Some(s.mean_occupation),
            stderr: Some(s.mean_occupation_stderr),
        },
        Comparison {
            quantity: "mean_gap".into(),
            predicted: s.reference.mean_return_time,
            empirical: s.mean_gap,
            stderr: s.mean_gap_stderr,
        },
    ]);

    let mut metadata = Metadata::new(meta);
    metadata.seed = Some(cfg.seed);
    metadata.rng = Some(RNG_NAME.to_owned());
    Ok(Report {
        body: Body::Simulate(SimulatePayload { source, target, summary, comparison, ergodic }),
        metadata,
    })
}

pub fn family(name: &str, params: &[(String, f64)]) -> Result<Report, Failure> {
    let p: BTreeMap<String, f64> = params.iter().cloned().collect();
    let chain = builtin_family(name, &p).map_err(Failure::invalid)?;
    let mut meta = BTreeMap::from([("family".to_owned(), name.to_owned())]);
    for (k, v) in &chain.params {
        meta.insert(format!("param.{k}"), v.to_string());
    }
    Ok(Report {
        body: Body::Family(FamilyPayload {
            family: chain.family_name().to_owned(),
            params: chain.params.clone(),
            start: chain.start,
            target: chain.target,
            declared_class_of_target: chain.declared_class_of_target,
            analytic: chain.analytic,
        }),
        metadata: Metadata::new(meta),
    })
}
