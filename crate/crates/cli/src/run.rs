use serde::Serialize;
use serde_json::{json, Value};
use volterra_split::criteria::{
    hardy_criterion, riemann_liouville_criterion, simple_rl_criterion, splitting_criteria, CriterionVerdict,
    DegenerateKernel, EvidencePoint, RiemannLiouvilleKernel, SupEntry, Supremum,
};
use volterra_split::multipliers::{check_multiplier, MultiplierProblem, MultiplierVerdict};
use volterra_split::numerics::{parse_weight, WeightExpr, Wide};
use volterra_split::operators::{discretize, operator_norm, splitting_experiment, ExperimentOptions, ExperimentVerdict};
use volterra_split::orthopoly::{build_split_witness, build_system, gram_ratio, lemma35_minimum, root_spacing_check};
use volterra_split::weights::{doubling_constant, weak_doubling_check, Verdict};

use crate::config::{Command, Format, RunConfig, SCHEMA_VERSION};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Clean,
    Inconclusive,
}

#[derive(Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: Command,
    pub status: Status,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Value>,
    pub result: Value,
}

/// A finished run: the JSON report and, where the command has one, its CSV table.
pub struct Outcome {
    pub report: Report,
    pub csv: Option<String>,
}

impl Outcome {
    /// The text to write in the configured format.
    pub fn render(&self) -> Result<String, CliError> {
        match self.report.config.output.format {
            Format::Json => serde_json::to_string_pretty(&self.report).map(|s| s + "\n").map_err(|e| CliError::Io(e.to_string())),
            Format::Csv => {
                let table = self.csv.as_ref().ok_or_else(|| csv_unavailable(self.report.command))?;
                let config = serde_json::to_string(&self.report.config).map_err(|e| CliError::Io(e.to_string()))?;
                Ok(format!("# schema_version {SCHEMA_VERSION}\n# config {config}\n{table}"))
            }
        }
    }
}

fn csv_unavailable(c: Command) -> CliError {
    CliError::Config(format!(
        "csv output covers evidence curves and norm ladders; `{}` reports JSON only",
        c.name()
    ))
}

pub fn has_csv(c: Command) -> bool {
    matches!(
        c,
        Command::Hardy | Command::SplitCriteria | Command::RlCriteria | Command::SplitExperiment | Command::Counterexample
    )
}

fn expr(field: &str, src: &Option<String>) -> Result<WeightExpr, CliError> {
    let src = src.as_deref().unwrap_or_default();
    parse_weight(src).map_err(|err| CliError::Parse { field: field.to_string(), text: src.to_string(), err })
}

fn kernel(cs: &Option<Vec<String>>) -> Result<DegenerateKernel, CliError> {
    let cs = cs.as_deref().unwrap_or_default();
    let coeffs = cs
        .iter()
        .enumerate()
        .map(|(k, c)| expr(&format!("kernel[{k}]"), &Some(c.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    DegenerateKernel::new(coeffs).map_err(numeric)
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn to_json(v: impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing input `{name}`")))
}

fn opt_wide(w: Option<Wide>) -> String {
    w.map(|w| w.to_string()).unwrap_or_else(|| "inf".into())
}

fn evidence_csv(curves: &[(String, &SupEntry)]) -> String {
    let mut s = String::from("curve,r,tail,head,product\n");
    for (name, e) in curves {
        for EvidencePoint { r, tail, head, product } in &e.evidence {
            s.push_str(&format!("{name},{r},{},{},{}\n", opt_wide(*tail), opt_wide(*head), opt_wide(*product)));
        }
    }
    s
}

fn criterion_status(v: &CriterionVerdict) -> Status {
    match v {
        CriterionVerdict::Inconclusive { .. } => Status::Inconclusive,
        _ => Status::Clean,
    }
}

fn sup_json(s: &Supremum) -> Value {
    match s {
        Supremum::Finite { value } => to_json(value).unwrap_or(Value::Null),
        Supremum::Infinite { .. } => Value::from("inf"),
        Supremum::Inconclusive { value, .. } => json!({ "inconclusive": value }),
    }
}

struct Run {
    status: Status,
    summary: Option<Value>,
    result: Value,
    csv: Option<String>,
}

pub fn execute(config: RunConfig) -> Result<Outcome, CliError> {
    let config = config.resolve();
    if config.output.format == Format::Csv && !has_csv(config.command) {
        return Err(csv_unavailable(config.command));
    }
    let run = dispatch(&config)?;
    Ok(Outcome {
        report: Report {
            schema_version: SCHEMA_VERSION,
            command: config.command,
            status: run.status,
            config,
            summary: run.summary,
            result: run.result,
        },
        csv: run.csv,
    })
}

fn dispatch(cfg: &RunConfig) -> Result<Run, CliError> {
    let i = &cfg.inputs;
    let nu = &cfg.numerics;
    let mut copts = nu.criteria.clone();
    copts.delta = need(i.delta, "delta")?;
    let delta = copts.delta;
    let ladder = || nu.ladder.as_ref().map(|l| l.points()).unwrap_or_default();
    let points = || need(nu.points, "numerics.points");
    let experiment_opts = || ExperimentOptions {
        grid: nu.grid.clone(),
        norm: nu.norm.clone(),
        criteria: copts.clone(),
        stable_tol: nu.stable_tol,
    };

    Ok(match cfg.command {
        Command::CheckDoubling => {
            let w = expr("w", &i.w)?;
            let full = doubling_constant(&w, delta, &nu.sampling).map_err(numeric)?;
            let weak = weak_doubling_check(&w, delta, &nu.sampling).map_err(numeric)?;
            let doubt = |v: &Verdict| matches!(v, Verdict::Inconclusive { .. });
            let status = if doubt(&full.verdict) || doubt(&weak.verdict) { Status::Inconclusive } else { Status::Clean };
            Run {
                status,
                summary: Some(json!({ "D": full.d, "verdict": full.verdict, "weak_D": weak.d, "weak_verdict": weak.verdict })),
                result: json!({ "doubling": full, "weak_doubling": weak }),
                csv: None,
            }
        }
        Command::Hardy => {
            let rep = hardy_criterion(&expr("u", &i.u)?, &expr("v", &i.v)?, &copts).map_err(numeric)?;
            Run {
                status: criterion_status(&rep.verdict),
                summary: Some(json!({ "S_0": sup_json(rep.s(0)), "verdict": rep.verdict })),
                csv: Some(evidence_csv(&[("S_0".into(), &rep.per_k[0].entry)])),
                result: to_json(&rep)?,
            }
        }
        Command::SplitCriteria => {
            let k = kernel(&i.kernel)?;
            let rep = splitting_criteria(&k, &expr("u", &i.u)?, &expr("v", &i.v)?, &copts).map_err(numeric)?;
            let s: Vec<Value> = rep.per_k.iter().map(|e| sup_json(&e.entry.supremum)).collect();
            let curves: Vec<(String, &SupEntry)> = rep.per_k.iter().map(|e| (format!("S_{}", e.k), &e.entry)).collect();
            Run {
                status: criterion_status(&rep.verdict),
                summary: Some(json!({ "S": s, "sum_S": rep.total, "verdict": rep.verdict, "characterizes_operator": rep.characterizes_operator })),
                csv: Some(evidence_csv(&curves)),
                result: to_json(&rep)?,
            }
        }
        Command::RlCriteria => {
            let kern = RiemannLiouvilleKernel::new(need(i.alpha, "alpha")?).map_err(numeric)?;
            let (u, v) = (expr("u", &i.u)?, expr("v", &i.v)?);
            let two = riemann_liouville_criterion(&kern, &u, &v, &copts).map_err(numeric)?;
            let simple = simple_rl_criterion(&kern, &u, &v, &copts).map_err(numeric)?;
            let doubt = criterion_status(&two.verdict) == Status::Inconclusive;
            let mut curves: Vec<(String, &SupEntry)> =
                two.conditions.iter().enumerate().map(|(j, e)| (format!("condition_{}", j + 1), e)).collect();
            curves.push(("simple".into(), &simple.per_k[0].entry));
            Run {
                status: if doubt { Status::Inconclusive } else { Status::Clean },
                summary: Some(json!({
                    "conditions": two.conditions.iter().map(|c| sup_json(&c.supremum)).collect::<Vec<_>>(),
                    "verdict": two.verdict,
                    "simple": sup_json(simple.s(0)),
                    "simple_verdict": simple.verdict,
                })),
                csv: Some(evidence_csv(&curves)),
                result: json!({ "two_condition": two, "simple": simple }),
            }
        }
        Command::OpNorm => {
            let k = kernel(&i.kernel)?;
            let op = discretize(&k, &expr("u", &i.u)?, &expr("v", &i.v)?, need(i.r, "r")?, points()?, &nu.grid)
                .map_err(numeric)?;
            let full = operator_norm(&op, None, &nu.norm).map_err(numeric)?;
            let components = op
                .terms()
                .into_iter()
                .map(|t| operator_norm(&op, Some(t), &nu.norm).map(|e| json!({ "k": t, "estimate": e })))
                .collect::<Result<Vec<_>, _>>()
                .map_err(numeric)?;
            Run {
                status: Status::Clean,
                summary: Some(json!({ "norm": full.value, "size": op.size() })),
                result: json!({ "R": op.truncation_r, "size": op.size(), "norm": full, "components": components }),
                csv: None,
            }
        }
        Command::SplitExperiment => {
            let k = kernel(&i.kernel)?;
            let (u, v) = (expr("u", &i.u)?, expr("v", &i.v)?);
            let exp = splitting_experiment(&k, &u, &v, &ladder(), points()?, &experiment_opts()).map_err(numeric)?;
            let mismatch = matches!(exp.verdict, ExperimentVerdict::Mismatch { .. });
            let status = if mismatch || criterion_status(&exp.criteria.verdict) == Status::Inconclusive {
                Status::Inconclusive
            } else {
                Status::Clean
            };
            Run {
                status,
                summary: Some(json!({
                    "verdict": exp.verdict,
                    "criteria_verdict": exp.criteria.verdict,
                    "full_stable": exp.full_stable,
                    "component_stable": exp.component_stable,
                    "sum_S": exp.sum_s,
                    "empirical_c1": exp.empirical_c1,
                    "empirical_c2": exp.empirical_c2,
                })),
                csv: Some(exp.to_csv()),
                result: to_json(&exp)?,
            }
        }
        Command::Orthopoly => {
            let w = expr("w", &i.w)?;
            let n = need(i.n, "n")?;
            let sys = build_system(&w, need(i.r, "r")?, n).map_err(numeric)?;
            let spacing = root_spacing_check(&w, n, &ladder(), nu.floor_fraction).map_err(numeric)?;
            Run {
                status: Status::Clean,
                summary: Some(json!({
                    "roots": sys.roots,
                    "min_gap_ratio": sys.min_gap_ratio(),
                    "epsilon_measured": spacing.epsilon_measured,
                    "variation": spacing.variation,
                })),
                result: json!({ "system": sys, "spacing": spacing }),
                csv: None,
            }
        }
        Command::Gram => {
            let u = expr("u", &i.u)?;
            let n = need(i.n, "n")?;
            let at_r = gram_ratio(&u, need(i.r, "r")?, n).map_err(numeric)?;
            let rows = ladder()
                .into_iter()
                .map(|r| gram_ratio(&u, r, n).map(|g| json!({ "r": r, "gram_ratio": g })))
                .collect::<Result<Vec<_>, _>>()
                .map_err(numeric)?;
            Run {
                status: Status::Clean,
                summary: Some(json!({ "gram_ratio": at_r })),
                result: json!({ "gram_ratio": at_r, "ladder": rows }),
                csv: None,
            }
        }
        Command::Witness => {
            let u = expr("u", &i.u)?;
            let n = need(i.n, "n")?;
            let wt = build_split_witness(&u, need(i.r, "r")?, n).map_err(numeric)?;
            let rows = ladder()
                .into_iter()
                .map(|r| {
                    build_split_witness(&u, r, n).map(|w| json!({ "r": r, "epsilon_achieved": w.epsilon_achieved, "c_achieved": w.c_achieved }))
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(numeric)?;
            Run {
                status: Status::Clean,
                summary: Some(json!({ "epsilon_achieved": wt.epsilon_achieved, "c_achieved": wt.c_achieved })),
                result: json!({ "witness": wt, "ladder": rows }),
                csv: None,
            }
        }
        Command::Lemma35 => {
            let res = lemma35_minimum(need(i.beta, "beta")?, need(i.gamma, "gamma")?, need(i.a, "a")?).map_err(numeric)?;
            Run { status: Status::Clean, summary: None, result: to_json(&res)?, csv: None }
        }
        Command::Multiplier => {
            let p = MultiplierProblem::new(
                expr("phi", &i.phi)?,
                expr("u", &i.u)?,
                expr("v", &i.v)?,
                need(i.l, "l")?,
                need(i.m, "m")?,
            )
            .map_err(numeric)?;
            let rep = check_multiplier(&p, &copts).map_err(numeric)?;
            let decisive = |v: &Option<MultiplierVerdict>| {
                v.as_ref().is_some_and(|v| v.is_multiplier() || v.is_not_multiplier())
            };
            let status = if decisive(&rep.first_theorem) || decisive(&rep.second_theorem) {
                Status::Clean
            } else {
                Status::Inconclusive
            };
            Run {
                status,
                summary: Some(json!({ "first_theorem": rep.first_theorem, "second_theorem": rep.second_theorem })),
                result: to_json(&rep)?,
                csv: None,
            }
        }
        Command::Counterexample => counterexample(cfg, &copts, &experiment_opts(), &ladder(), points()?)?,
    })
}

fn counterexample(
    cfg: &RunConfig,
    copts: &volterra_split::criteria::CriteriaOptions,
    eopts: &ExperimentOptions,
    ladder: &[f64],
    points: usize,
) -> Result<Run, CliError> {
    let i = &cfg.inputs;
    let (u, v) = (expr("u", &i.u)?, expr("v", &i.v)?);
    let kern = RiemannLiouvilleKernel::new(need(i.alpha, "alpha")?).map_err(numeric)?;
    let expanded = kern
        .to_degenerate()
        .ok_or_else(|| CliError::Config(format!("alpha = {} has no finite expansion; use an integer", kern.alpha)))?;
    let rl = riemann_liouville_criterion(&kern, &u, &v, copts).map_err(numeric)?;
    let split = splitting_criteria(&expanded, &u, &v, copts).map_err(numeric)?;
    let exp = splitting_experiment(&expanded, &u, &v, ladder, points, eopts).map_err(numeric)?;

    let bounded = rl.verdict.is_bounded() && rl.conditions.iter().all(|c| c.supremum.is_finite());
    let unbounded = split.verdict.is_unbounded();
    let rows = &exp.rows;
    let growth: Vec<Vec<f64>> = rows
        .windows(2)
        .map(|p| p[1].components.iter().zip(&p[0].components).map(|(b, a)| b / a).collect())
        .collect();
    let min_growth = growth.iter().flat_map(|g| g.iter().take(2)).copied().fold(f64::INFINITY, f64::min);
    let m = rows.len();
    let full_change =
        if m >= 2 { (rows[m - 1].norm - rows[m - 2].norm).abs() / rows[m - 1].norm.max(rows[m - 2].norm) } else { 0.0 };
    let status = if matches!(rl.verdict, CriterionVerdict::Inconclusive { .. })
        || matches!(split.verdict, CriterionVerdict::Inconclusive { .. })
    {
        Status::Inconclusive
    } else {
        Status::Clean
    };
    Ok(Run {
        status,
        summary: Some(json!({
            "bounded_verdict": bounded,
            "components_unbounded_verdict": unbounded,
            "component_growth_per_doubling": growth,
            "min_component_growth": min_growth,
            "full_norm_change_top_rungs": full_change,
            "splitting_fails": bounded && unbounded && min_growth >= 1.5 && full_change < 0.02,
        })),
        csv: Some(exp.to_csv()),
        result: json!({ "riemann_liouville": rl, "splitting": split, "experiment": exp }),
    })
}
