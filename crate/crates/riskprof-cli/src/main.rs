//! `riskprof` — evaluate and optimize distribution-free portfolio risk
//! profiles from the command line.
//!
//! Every run prints a self-contained JSON report on stdout:
//! `{command, digest, seed, results, timing_ms}`. Validation failures
//! print a machine-readable error JSON on stderr and exit with code 2;
//! internal failures exit with code 1.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use riskprof::contingency_sampler::{average_objective, EstimateConfig};
use riskprof::greedy_flow::worst_case_two_stock;
use riskprof::io::{ingest, instance_to_json, load_prices_csv, parse_instance, Instance};
use riskprof::k_stock::{
    cents_worst_case_exact, lp_worst_case_exact, optimal_portfolio_fixed_k, striping_worst_case,
    SearchMode,
};
use riskprof::oracle::{exhaustive_two_stock_optimum, maxflow_two_stock};
use riskprof::portfolio_sweep::{sweep_optimal_portfolio_detailed, OptimalWindow, SweepOutcome};
use riskprof::return_model::{
    reduce_objective, validate_marginal, CaseKind, Objective, Portfolio, ReturnGrid,
};

#[derive(Parser)]
#[command(
    name = "riskprof",
    version,
    about = "Portfolio risk profiles over unknown joint return distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a problem instance file.
    Validate {
        #[arg(long)]
        stocks: PathBuf,
        /// Optional positivity floor for nonzero probabilities.
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Evaluate a two-stock objective for a fixed portfolio.
    Eval {
        #[arg(long)]
        stocks: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        /// Comma-separated weights, e.g. "0.4,0.6".
        #[arg(long)]
        x: String,
        #[arg(long, default_value = "ra_w")]
        objective: String,
        /// Use the strict-inequality variant of the objective.
        #[arg(long)]
        strict: bool,
        /// Evaluate through the brute-force reference instead.
        #[arg(long, hide = true)]
        oracle: bool,
    },
    /// Find the optimal two-stock portfolio for an objective.
    Optimize {
        #[arg(long)]
        stocks: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, default_value = "ra_w")]
        objective: String,
        #[arg(long)]
        strict: bool,
        /// Write a gnuplot-compatible "x1 value" data file of the
        /// objective across candidate portfolios.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long, hide = true)]
        oracle: bool,
    },
    /// Evaluate a k-stock objective: exact LP, striping, or cent lattice.
    EvalK {
        #[arg(long)]
        stocks: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long)]
        x: String,
        #[arg(long, default_value = "ra_w")]
        objective: String,
        #[arg(long)]
        strict: bool,
        /// Exact LP over all table entries (the default).
        #[arg(long)]
        exact: bool,
        /// Striping approximation with this additive tolerance.
        #[arg(long, value_name = "EPS")]
        striping: Option<f64>,
        /// Exact evaluation for weights on the 1/C lattice.
        #[arg(long, value_name = "C")]
        cents: Option<u64>,
    },
    /// Search for the optimal k-stock portfolio.
    OptimizeK {
        #[arg(long)]
        stocks: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, default_value = "ra_w")]
        objective: String,
        #[arg(long)]
        strict: bool,
        /// "cents" (requires --c) or "hyperplanes".
        #[arg(long, default_value = "hyperplanes")]
        mode: String,
        #[arg(long)]
        c: Option<u64>,
    },
    /// Estimate an average-case objective by polytope sampling.
    Avg {
        #[arg(long)]
        stocks: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long)]
        x: String,
        #[arg(long, default_value = "ra_a")]
        objective: String,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Walk steps per sample (default 64 x polytope dimension).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 1)]
        chains: usize,
    },
    /// Build an instance from a historical prices CSV.
    Ingest {
        #[arg(long)]
        prices: PathBuf,
        #[arg(long)]
        mu: f64,
        #[arg(long, allow_negative_numbers = true)]
        m1: i64,
        #[arg(long, allow_negative_numbers = true)]
        m2: i64,
        /// Observations per return window.
        #[arg(long, default_value_t = 1)]
        period: usize,
        /// Also write the instance JSON to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum AppError {
    Lib(riskprof::Error),
    Usage(String),
}

impl From<riskprof::Error> for AppError {
    fn from(e: riskprof::Error) -> Self {
        AppError::Lib(e)
    }
}

type AppResult<T> = Result<T, AppError>;

fn main() {
    let cli = Cli::parse();
    let command_echo: String = std::env::args().collect::<Vec<_>>().join(" ");
    let started = Instant::now();
    match run(&cli.command) {
        Ok(run_output) => {
            let report = json!({
                "command": command_echo,
                "digest": run_output.digest,
                "seed": run_output.seed,
                "results": run_output.results,
                "timing_ms": started.elapsed().as_millis() as u64,
            });
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
        }
        Err(err) => {
            let (payload, code) = error_payload(&err);
            eprintln!("{}", serde_json::to_string(&payload).unwrap());
            std::process::exit(code);
        }
    }
}

struct RunOutput {
    digest: Option<String>,
    seed: Option<u64>,
    results: Value,
}

fn error_payload(err: &AppError) -> (Value, i32) {
    match err {
        AppError::Usage(message) => (json!({"error": "Usage", "message": message}), 2),
        AppError::Lib(e) => {
            let mut obj = Map::new();
            obj.insert("error".into(), Value::String(e.code().to_owned()));
            obj.insert("message".into(), Value::String(e.to_string()));
            attach_details(e, &mut obj);
            let code = if e.is_validation() { 2 } else { 1 };
            (Value::Object(obj), code)
        }
    }
}

fn attach_details(e: &riskprof::Error, obj: &mut Map<String, Value>) {
    use riskprof::Error as E;
    match e {
        E::SumNotOne {
            stock,
            sum,
            deviation,
        } => {
            if let Some(s) = stock {
                obj.insert("stock".into(), Value::String(s.clone()));
            }
            obj.insert("sum".into(), json!(sum));
            obj.insert("deviation".into(), json!(deviation));
        }
        E::NegativeProbability {
            stock,
            level,
            value,
        } => {
            if let Some(s) = stock {
                obj.insert("stock".into(), Value::String(s.clone()));
            }
            obj.insert("level".into(), json!(level));
            obj.insert("value".into(), json!(value));
        }
        E::FloorViolation {
            stock,
            level,
            value,
            floor,
        } => {
            if let Some(s) = stock {
                obj.insert("stock".into(), Value::String(s.clone()));
            }
            obj.insert("level".into(), json!(level));
            obj.insert("value".into(), json!(value));
            obj.insert("floor".into(), json!(floor));
        }
        E::NotOnCentLattice {
            index,
            weight,
            cents,
        } => {
            obj.insert("index".into(), json!(index));
            obj.insert("weight".into(), json!(weight));
            obj.insert("cents".into(), json!(cents));
        }
        E::InsufficientData {
            ticker,
            needed,
            got,
        } => {
            obj.insert("ticker".into(), Value::String(ticker.clone()));
            obj.insert("needed".into(), json!(needed));
            obj.insert("got".into(), json!(got));
        }
        _ => {}
    }
}

fn file_digest(path: &Path) -> AppResult<(Vec<u8>, String)> {
    let bytes = std::fs::read(path).map_err(riskprof::Error::from)?;
    let digest = format!("{:x}", Sha256::digest(&bytes));
    Ok((bytes, digest))
}

fn load_instance_with_digest(path: &Path) -> AppResult<(Instance, String)> {
    let (bytes, digest) = file_digest(path)?;
    Ok((parse_instance(&bytes)?, digest))
}

fn parse_objective(name: &str, strict: bool) -> AppResult<Objective> {
    let mut obj = Objective::parse(name).ok_or_else(|| {
        AppError::Usage(format!(
            "unknown objective {name:?}; expected one of ra_b, ra_w, ra_a, ag_b, ag_w, ag_a"
        ))
    })?;
    obj.strict = obj.strict || strict;
    Ok(obj)
}

fn parse_weights(text: &str) -> AppResult<Portfolio> {
    let weights = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| riskprof::Error::InvalidNumber { text: t.to_owned() })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(Portfolio::new(weights)?)
}

fn two_stock_pair(
    instance: &Instance,
) -> AppResult<(
    riskprof::return_model::MarginalDistribution,
    riskprof::return_model::MarginalDistribution,
)> {
    if instance.stocks.len() != 2 {
        return Err(AppError::Usage(format!(
            "this command needs exactly 2 stocks, the instance has {}",
            instance.stocks.len()
        )));
    }
    Ok((
        instance.stocks[0].dist.clone(),
        instance.stocks[1].dist.clone(),
    ))
}

fn resolve_seed(flag_seed: u64) -> u64 {
    std::env::var("RISKPROF_SEED")
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .unwrap_or(flag_seed)
}

fn portfolio_json(p: &Portfolio) -> Value {
    json!(p.weights())
}

fn slope_of(x1: f64) -> Value {
    if (1.0 - x1).abs() < 1e-15 {
        Value::Null // vertical line
    } else {
        json!(-x1 / (1.0 - x1))
    }
}

fn window_json(window: &OptimalWindow) -> Value {
    match window {
        OptimalWindow::Endpoint => json!({"kind": "endpoint"}),
        OptimalWindow::AtCrossing(t) => json!({
            "kind": "crossing",
            "x1": t,
            "slope": slope_of(*t),
        }),
        OptimalWindow::Interval(lo, hi) => json!({
            "kind": "interval",
            "x1_lo": lo,
            "x1_hi": hi,
            "slope_lo": slope_of(*hi),
            "slope_hi": slope_of(*lo),
        }),
    }
}

fn run(command: &Command) -> AppResult<RunOutput> {
    match command {
        Command::Validate { stocks, floor } => {
            let (instance, digest) = load_instance_with_digest(stocks)?;
            for entry in &instance.stocks {
                validate_marginal(entry.dist.clone(), *floor).map_err(|e| {
                    // re-attach the stock name lost by the re-validation
                    match e {
                        riskprof::Error::SumNotOne { sum, deviation, .. } => {
                            riskprof::Error::SumNotOne {
                                stock: Some(entry.name.clone()),
                                sum,
                                deviation,
                            }
                        }
                        riskprof::Error::NegativeProbability { level, value, .. } => {
                            riskprof::Error::NegativeProbability {
                                stock: Some(entry.name.clone()),
                                level,
                                value,
                            }
                        }
                        riskprof::Error::FloorViolation {
                            level,
                            value,
                            floor,
                            ..
                        } => riskprof::Error::FloorViolation {
                            stock: Some(entry.name.clone()),
                            level,
                            value,
                            floor,
                        },
                        other => other,
                    }
                })?;
            }
            Ok(RunOutput {
                digest: Some(digest),
                seed: None,
                results: json!({
                    "valid": true,
                    "stocks": instance.stocks.len(),
                    "grid_points": instance.grid.len(),
                }),
            })
        }

        Command::Eval {
            stocks,
            alpha,
            x,
            objective,
            strict,
            oracle,
        } => {
            let (instance, digest) = load_instance_with_digest(stocks)?;
            let (s1, s2) = two_stock_pair(&instance)?;
            let portfolio = parse_weights(x)?;
            let obj = parse_objective(objective, *strict)?;
            if obj.case == CaseKind::Average {
                return Err(AppError::Usage(
                    "average-case objectives are estimated by the avg command".into(),
                ));
            }
            let value = if *oracle {
                let task = reduce_objective(obj);
                let form = task.flow_form().expect("non-average objective");
                let region = form.region(*alpha, portfolio.clone());
                task.finish(form.finish(maxflow_two_stock(&s1, &s2, &region)?))
            } else {
                worst_case_two_stock(&s1, &s2, &portfolio, *alpha, obj)?
            };
            Ok(RunOutput {
                digest: Some(digest),
                seed: None,
                results: json!({
                    "objective": obj.name(),
                    "alpha": alpha,
                    "x": portfolio_json(&portfolio),
                    "value": value,
                    "method": if *oracle { "oracle" } else { "greedy" },
                }),
            })
        }

        Command::Optimize {
            stocks,
            alpha,
            objective,
            strict,
            plot,
            oracle,
        } => {
            let (instance, digest) = load_instance_with_digest(stocks)?;
            let (s1, s2) = two_stock_pair(&instance)?;
            let obj = parse_objective(objective, *strict)?;
            if obj.case == CaseKind::Average {
                return Err(AppError::Usage(
                    "average-case objectives are estimated by the avg command".into(),
                ));
            }
            let outcome: SweepOutcome = if *oracle {
                let (portfolio, value) = exhaustive_two_stock_optimum(&s1, &s2, *alpha, obj)?;
                SweepOutcome {
                    portfolio,
                    value,
                    window: OptimalWindow::Endpoint,
                }
            } else {
                sweep_optimal_portfolio_detailed(&s1, &s2, *alpha, obj)?
            };
            if let Some(path) = plot {
                let mut data = String::from("# x1 objective_value\n");
                let mut candidates = riskprof::oracle::two_stock_candidates(s1.grid(), *alpha);
                candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for x1 in candidates {
                    let p = Portfolio::two_stock(x1)?;
                    let v = worst_case_two_stock(&s1, &s2, &p, *alpha, obj)?;
                    data.push_str(&format!("{x1:.9} {v:.9}\n"));
                }
                std::fs::write(path, data).map_err(riskprof::Error::from)?;
            }
            Ok(RunOutput {
                digest: Some(digest),
                seed: None,
                results: json!({
                    "objective": obj.name(),
                    "alpha": alpha,
                    "portfolio": portfolio_json(&outcome.portfolio),
                    "value": outcome.value,
                    "window": window_json(&outcome.window),
                    "method": if *oracle { "oracle" } else { "sweep" },
                }),
            })
        }

        Command::EvalK {
            stocks,
            alpha,
            x,
            objective,
            strict,
            exact,
            striping,
            cents,
        } => {
            let (instance, digest) = load_instance_with_digest(stocks)?;
            let dists = instance.marginals();
            let portfolio = parse_weights(x)?;
            if portfolio.len() != dists.len() {
                return Err(AppError::Usage(format!(
                    "portfolio has {} weights but the instance has {} stocks",
                    portfolio.len(),
                    dists.len()
                )));
            }
            let obj = parse_objective(objective, *strict)?;
            let mode_flags = [*exact, striping.is_some(), cents.is_some()]
                .iter()
                .filter(|&&b| b)
                .count();
            if mode_flags > 1 {
                return Err(AppError::Usage(
                    "choose one of --exact, --striping, --cents".into(),
                ));
            }
            let (value, method) = if let Some(eps) = striping {
                if obj != Objective::parse("ra_w").unwrap() {
                    return Err(AppError::Usage(
                        "--striping evaluates the ra_w objective only".into(),
                    ));
                }
                (
                    striping_worst_case(&dists, &portfolio, *alpha, *eps)?,
                    json!({"name": "striping", "eps": eps}),
                )
            } else if let Some(c) = cents {
                if obj != Objective::parse("ra_w").unwrap() {
                    return Err(AppError::Usage(
                        "--cents evaluates the ra_w objective only".into(),
                    ));
                }
                (
                    cents_worst_case_exact(&dists, &portfolio, *alpha, *c)?,
                    json!({"name": "cents", "c": c}),
                )
            } else {
                (
                    lp_worst_case_exact(&dists, &portfolio, *alpha, obj)?,
                    json!({"name": "exact"}),
                )
            };
            Ok(RunOutput {
                digest: Some(digest),
                seed: None,
                results: json!({
                    "objective": obj.name(),
                    "alpha": alpha,
                    "x": portfolio_json(&portfolio),
                    "value": value,
                    "method": method,
                }),
            })
        }

        Command::OptimizeK {
            stocks,
            alpha,
            objective,
            strict,
            mode,
            c,
        } => {
            let (instance, digest) = load_instance_with_digest(stocks)?;
            let dists = instance.marginals();
            let obj = parse_objective(objective, *strict)?;
            let search_mode = match mode.as_str() {
                "cents" => {
                    let cents =
                        c.ok_or_else(|| AppError::Usage("--mode cents requires --c".into()))?;
                    SearchMode::CentGrid { cents }
                }
                "hyperplanes" => SearchMode::CandidateHyperplanes,
                other => {
                    return Err(AppError::Usage(format!(
                        "unknown mode {other:?}; expected cents or hyperplanes"
                    )))
                }
            };
            let (portfolio, value) = optimal_portfolio_fixed_k(&dists, *alpha, obj, search_mode)?;
            Ok(RunOutput {
                digest: Some(digest),
                seed: None,
                results: json!({
                    "objective": obj.name(),
                    "alpha": alpha,
                    "portfolio": portfolio_json(&portfolio),
                    "value": value,
                    "mode": mode,
                }),
            })
        }

        Command::Avg {
            stocks,
            alpha,
            x,
            objective,
            strict,
            eps,
            delta,
            seed,
            steps,
            chains,
        } => {
            let (instance, digest) = load_instance_with_digest(stocks)?;
            let (s1, s2) = two_stock_pair(&instance)?;
            let portfolio = parse_weights(x)?;
            let obj = parse_objective(objective, *strict)?;
            if obj.case != CaseKind::Average {
                return Err(AppError::Usage(
                    "the avg command estimates average-case objectives (ra_a, ag_a)".into(),
                ));
            }
            let seed = resolve_seed(*seed);
            let mut config = EstimateConfig::seeded(seed);
            config.walk.steps_per_sample = *steps;
            config.chains = (*chains).max(1);
            let report =
                average_objective(&s1, &s2, *alpha, &portfolio, obj, *eps, *delta, &config)?;
            Ok(RunOutput {
                digest: Some(digest),
                seed: Some(seed),
                results: json!({
                    "objective": obj.name(),
                    "alpha": alpha,
                    "x": portfolio_json(&portfolio),
                    "estimate": report.estimate,
                    "N": report.samples,
                    "chains": report.chains,
                    "steps_per_sample": report.steps_per_sample,
                }),
            })
        }

        Command::Ingest {
            prices,
            mu,
            m1,
            m2,
            period,
            out,
        } => {
            let (_, digest) = file_digest(prices)?;
            let series = load_prices_csv(prices)?;
            let grid = ReturnGrid::new(*mu, *m1, *m2)?;
            let outcome = ingest(&series, *period, grid)?;
            let instance_json = instance_to_json(&outcome.instance);
            if let Some(path) = out {
                std::fs::write(path, &instance_json).map_err(riskprof::Error::from)?;
            }
            let instance_value: Value =
                serde_json::from_str(&instance_json).map_err(riskprof::Error::from)?;
            Ok(RunOutput {
                digest: Some(digest),
                seed: None,
                results: json!({
                    "instance": instance_value,
                    "warnings": outcome.warnings,
                }),
            })
        }
    }
}
