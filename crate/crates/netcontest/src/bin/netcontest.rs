//! Command-line front end: solve | derivative | sweep | check3 | construct |
//! optimize. JSON/CSV outputs are written atomically; exit code 2 flags
//! validation problems, 3 convergence or search failures.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use netcontest::builder::{construct_for_graph, Topology};
use netcontest::donation::{optimize_donations, OptimizerTrace};
use netcontest::equilibrium::solve_equilibrium;
use netcontest::error::Error;
use netcontest::instance::ContestInstance;
use netcontest::transfer::{
    cross_validate_three_node, sweep_transfer, three_node_closed_form, three_node_feasible,
    transfer_derivative, ThreeNodeParams, TransferCurve,
};

#[derive(Parser)]
#[command(name = "netcontest", about = "networked contest equilibria, transfers, donations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct OutputOpts {
    /// Output path; stdout when omitted
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Nash equilibrium of an instance file
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Payoff derivatives for a transfer at tau = 0
    Derivative {
        instance: PathBuf,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Sweep payoffs over tau and report mutually beneficial intervals
    Sweep {
        instance: PathBuf,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        tau_max: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Three-node feasibility inequalities and closed forms
    Check3 {
        #[arg(long)]
        b1: f64,
        #[arg(long)]
        b2: f64,
        #[arg(long)]
        b3: f64,
        #[arg(long)]
        v1: f64,
        #[arg(long)]
        v2: f64,
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Build a certified instance for a topology and a transfer pair
    Construct {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Replicator-dynamics donation optimization
    Optimize {
        instance: PathBuf,
        /// Donor players, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        donors: Vec<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long)]
        flat_tol: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        out: OutputOpts,
    },
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path)?;
    Ok(())
}

fn emit(out: &OutputOpts, bytes: &[u8]) -> Result<(), Error> {
    match &out.output {
        Some(path) => write_atomic(path, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn load(path: &Path) -> Result<ContestInstance, Error> {
    ContestInstance::load(std::fs::File::open(path)?)
}

fn curve_csv(c: &TransferCurve) -> String {
    let mut s = String::from("tau,U_a,U_b,beneficial\n");
    for (k, &tau) in c.grid.iter().enumerate() {
        let inside = c.intervals.iter().any(|&(lo, hi)| tau >= lo && tau <= hi) && tau > 0.0;
        s.push_str(&format!("{},{},{},{}\n", tau, c.u_a[k], c.u_b[k], inside as u8));
    }
    s
}

fn trace_csv(t: &OptimizerTrace) -> String {
    let mut s = String::from("iter,i,j,b_ij,f_ij,U_i\n");
    for rec in &t.records {
        for (i, row) in &rec.rows {
            let grads: std::collections::BTreeMap<usize, f64> =
                rec.gradients.get(i).map(|g| g.iter().copied().collect()).unwrap_or_default();
            for &(j, bij) in row {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    rec.iter,
                    i,
                    j,
                    bij,
                    grads.get(&j).copied().unwrap_or(f64::NAN),
                    rec.payoffs[*i]
                ));
            }
        }
    }
    s
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve { instance, out } => {
            let inst = load(&instance)?;
            let sol = solve_equilibrium(&inst)?;
            let mut alloc = serde_json::Map::new();
            for (i, row) in sol.allocations.iter().enumerate() {
                let inner: serde_json::Map<String, serde_json::Value> = row
                    .iter()
                    .map(|(j, x)| (j.to_string(), json!(x)))
                    .collect();
                alloc.insert(i.to_string(), serde_json::Value::Object(inner));
            }
            let doc = json!({
                "lambda": sol.lambda,
                "payoffs": sol.payoffs,
                "allocations": alloc,
                "residual": sol.residual,
            });
            emit(&out, format!("{:#}\n", doc).as_bytes())
        }
        Command::Derivative { instance, from, to, out } => {
            let inst = load(&instance)?;
            let s = transfer_derivative(&inst, from, to, netcontest::equilibrium::DEFAULT_TOL)?;
            emit(&out, format!("{:#}\n", serde_json::to_value(&s).unwrap()).as_bytes())
        }
        Command::Sweep { instance, from, to, steps, tau_max, format, out } => {
            let inst = load(&instance)?;
            let curve = sweep_transfer(&inst, from, to, steps, tau_max)?;
            match format {
                Format::Csv => emit(&out, curve_csv(&curve).as_bytes()),
                Format::Json => {
                    emit(&out, format!("{:#}\n", serde_json::to_value(&curve).unwrap()).as_bytes())
                }
            }
        }
        Command::Check3 { b1, b2, b3, v1, v2, tau, out } => {
            let p = ThreeNodeParams { b1, b2, b3, v1, v2 };
            let (feasible, margins) = three_node_feasible(&p)?;
            let mut doc = json!({
                "feasible": feasible,
                "margins": {
                    "upper_ratio": margins[0],
                    "lower_ratio": margins[1],
                    "budget_gap": margins[2],
                },
            });
            if let Some(tau) = tau {
                let eval = three_node_closed_form(&p, tau)?;
                cross_validate_three_node(&p, tau, 1e-8)?;
                doc["closed_form"] = serde_json::to_value(eval).unwrap();
            }
            emit(&out, format!("{:#}\n", doc).as_bytes())
        }
        Command::Construct { graph, from, to, seed, out } => {
            let topo = Topology::from_json(&std::fs::read_to_string(&graph)?)?;
            let inst = construct_for_graph(&topo, from, to, seed)?;
            emit(&out, format!("{}\n", inst.to_json()).as_bytes())
        }
        Command::Optimize { instance, donors, beta, max_iters, flat_tol, format, out } => {
            let inst = load(&instance)?;
            let trace = optimize_donations(&inst, &donors, beta, max_iters, flat_tol)?;
            match format {
                Format::Csv => emit(&out, trace_csv(&trace).as_bytes()),
                Format::Json => {
                    let doc = json!({
                        "termination": trace.termination,
                        "iterations": trace.records.len(),
                        "profile": trace.profile,
                        "final_payoffs": trace.records.last().map(|r| r.payoffs.clone()),
                    });
                    emit(&out, format!("{:#}\n", doc).as_bytes())
                }
            }
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Convergence { .. } | Error::SearchExhausted(_) | Error::SingularSystem(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
