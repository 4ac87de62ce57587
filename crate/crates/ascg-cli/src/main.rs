//! `ascg`: solve composite objectives over polytopes from the command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 when solving or checking
//! fails.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ascg_core::{
    check_rate_bound, mapped_oracle_counterexample, predicted_iterations, rate_certificate,
    solve, verify_oracle, CertificateOptions, Polytope, Problem, ProblemSpec, ReductionRule,
    SolverConfig, StepsizeRule, ThetaVariant,
};
use ascg_cli::{compare, generate_l1ls, render_table};

#[derive(Parser)]
#[command(
    name = "ascg",
    version,
    about = "Away-steps conditional gradient over compact polyhedra"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and report the run
    Solve(SolveArgs),
    /// Run solver variants side by side on one instance
    Compare(CompareArgs),
    /// Print geometric constants and the rate certificate of an instance
    Constants(ConstantsArgs),
    /// Check the structured vertex oracles against enumeration
    VerifyOracle(VerifyOracleArgs),
    /// Show why mapping oracle answers through E is not a vertex oracle
    DemoOracle,
    /// Write generated instance files
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum StepsizeArg {
    #[default]
    Exact,
    Adaptive,
}

impl From<StepsizeArg> for StepsizeRule {
    fn from(v: StepsizeArg) -> Self {
        match v {
            StepsizeArg::Exact => StepsizeRule::ExactLineSearch,
            StepsizeArg::Adaptive => StepsizeRule::Adaptive,
        }
    }
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum ReductionArg {
    #[default]
    Trivial,
    Caratheodory,
}

impl From<ReductionArg> for ReductionRule {
    fn from(v: ReductionArg) -> Self {
        match v {
            ReductionArg::Trivial => ReductionRule::Trivial,
            ReductionArg::Caratheodory => ReductionRule::Caratheodory,
        }
    }
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum ThetaArg {
    /// theta = max 1 / lambda_min(B Bt)
    #[default]
    InverseLambdaMin,
    /// theta = max 1 / sqrt(lambda_min(B Bt))
    InverseSqrtLambdaMin,
}

impl From<ThetaArg> for ThetaVariant {
    fn from(v: ThetaArg) -> Self {
        match v {
            ThetaArg::InverseLambdaMin => ThetaVariant::InverseLambdaMin,
            ThetaArg::InverseSqrtLambdaMin => ThetaVariant::InverseSqrtLambdaMin,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Problem description (JSON)
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    stepsize: StepsizeArg,
    #[arg(long, value_enum, default_value_t)]
    reduction: ReductionArg,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    gap_tol: f64,
    /// Start from this vertex id instead of the oracle default
    #[arg(long)]
    start_vertex: Option<u64>,
    /// Write the per-iteration CSV trace to this file
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Compute the rate certificate and check the recorded run against it
    #[arg(long)]
    certify: bool,
    /// Print the summary as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    gap_tol: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ConstantsArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    theta_variant: ThetaArg,
    #[arg(long, value_enum, default_value_t)]
    reduction: ReductionArg,
    /// Also print the iteration count the certificate predicts for this
    /// suboptimality
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyOracleArgs {
    /// Polytope description (JSON, the "polytope" object of a problem file)
    #[arg(long)]
    polytope: PathBuf,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(subcommand)]
    family: GenerateFamily,
}

#[derive(Subcommand)]
enum GenerateFamily {
    /// l1-regularized least squares over the lifted polytope
    L1ls {
        /// Measurement count (rows of the design matrix)
        #[arg(long)]
        k: usize,
        /// Feature count (columns of the design matrix)
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit an explicit H-form instead of the structured kind (small n)
        #[arg(long)]
        generic: bool,
        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Constants(args) => cmd_constants(args),
        Command::VerifyOracle(args) => cmd_verify_oracle(args),
        Command::DemoOracle => cmd_demo_oracle(),
        Command::Generate(args) => cmd_generate(args),
    }
}

fn load_problem(path: &PathBuf) -> Result<Problem> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading problem file {}", path.display()))?;
    let spec = ProblemSpec::from_json(&text).context("parsing problem JSON")?;
    spec.build().context("constructing the instance")
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let problem = load_problem(&args.problem)?;
    let config = SolverConfig {
        stepsize: args.stepsize.into(),
        reduction: args.reduction.into(),
        max_iters: args.max_iters,
        gap_tol: args.gap_tol,
        start_vertex_id: args.start_vertex,
    };
    let trace = solve(&problem.polytope, &problem.objective, config.clone())?;

    let mut certificate = None;
    let mut rate_bound_holds = None;
    if args.certify {
        let options = CertificateOptions {
            reduction: config.reduction,
            ..CertificateOptions::default()
        };
        let cert = rate_certificate(&problem.polytope, &problem.objective, &options)?;
        if !trace.converged {
            bail!("cannot check the rate bound: the run did not converge to a tight optimum");
        }
        // final_f overestimates f*, so the check is conservative.
        check_rate_bound(&trace, &cert, trace.final_f)?;
        rate_bound_holds = Some(true);
        certificate = Some(cert);
    }

    if let Some(path) = &args.trace {
        fs::write(path, trace.to_csv())
            .with_context(|| format!("writing trace to {}", path.display()))?;
    }

    let away_steps =
        trace.records.len() as u64 - trace.forward_steps - trace.drop_steps;
    if args.json {
        let summary = serde_json::json!({
            "algorithm": trace.algorithm,
            "stepsize": trace.stepsize,
            "reduction": trace.reduction,
            "iterations": trace.records.len(),
            "converged": trace.converged,
            "final_f": trace.final_f,
            "final_gap": trace.final_gap,
            "forward_steps": trace.forward_steps,
            "away_steps": away_steps,
            "drop_steps": trace.drop_steps,
            "final_repr_size": trace.final_repr_size,
            "reduction_events": trace.reduction_events,
            "certificate": certificate,
            "rate_bound_holds": rate_bound_holds,
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!(
            "instance: {:?} polytope, dimension {}",
            problem.polytope.kind(),
            problem.polytope.dim()
        );
        println!(
            "run: {} iterations, {}",
            trace.records.len(),
            if trace.converged {
                "converged"
            } else {
                "iteration budget exhausted"
            }
        );
        println!("final objective: {:.12e}", trace.final_f);
        println!("final gap:       {:.3e}", trace.final_gap);
        println!(
            "steps: {} forward, {} away, {} drop; final list size {} ({} reduction events)",
            trace.forward_steps,
            away_steps,
            trace.drop_steps,
            trace.final_repr_size,
            trace.reduction_events,
        );
        if let Some(cert) = &certificate {
            println!(
                "certificate: theta = {:.6e}, kappa = {:.6e}, omega = {:.6e}, contraction = {:.6e}",
                cert.theta, cert.kappa, cert.omega, cert.alpha_dagger
            );
            println!("rate bound: holds on every recorded iterate");
        }
        if let Some(path) = &args.trace {
            println!("trace written to {}", path.display());
        }
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let problem = load_problem(&args.problem)?;
    let rows = compare(&problem, args.max_iters, args.gap_tol)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print!("{}", render_table(&rows));
    }
    Ok(())
}

fn cmd_constants(args: ConstantsArgs) -> Result<()> {
    let problem = load_problem(&args.problem)?;
    let geometry = problem.polytope.geometric_constants()?;
    let options = CertificateOptions {
        theta_variant: args.theta_variant.into(),
        reduction: args.reduction.into(),
        ..CertificateOptions::default()
    };
    let certificate = rate_certificate(&problem.polytope, &problem.objective, &options);

    if args.json {
        let cert_json = match &certificate {
            Ok(c) => serde_json::to_value(c)?,
            Err(e) => serde_json::json!({ "unavailable": e.to_string() }),
        };
        let predicted = certificate
            .as_ref()
            .ok()
            .and_then(|c| predicted_iterations(c, args.eps).ok());
        let out = serde_json::json!({
            "zeta": geometry.zeta,
            "phi": geometry.phi,
            "omega": geometry.omega,
            "diameter": geometry.diameter,
            "certificate": cert_json,
            "predicted_iterations": predicted,
            "eps": args.eps,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }

    println!(
        "geometry: zeta = {:.6e}, phi = {:.6e}, omega = {:.6e}, diameter = {:.6e}",
        geometry.zeta, geometry.phi, geometry.omega, geometry.diameter
    );
    match certificate {
        Ok(cert) => {
            println!(
                "certificate ({:?}, vertex budget {}):",
                cert.theta_variant, cert.vertex_budget
            );
            println!("  theta  = {:.9e}", cert.theta);
            println!("  kappa  = {:.9e}", cert.kappa);
            println!("  C      = {:.9e}", cert.upper_bound_c);
            println!("  rho    = {:.9e}", cert.rho);
            println!("  alpha+ = {:.9e}", cert.alpha_dagger);
            match predicted_iterations(&cert, args.eps) {
                Ok(k) => println!("  suboptimality <= {:.1e} after {k} iterations", args.eps),
                Err(e) => println!("  prediction unavailable: {e}"),
            }
        }
        Err(e) => println!("certificate unavailable: {e}"),
    }
    Ok(())
}

fn cmd_verify_oracle(args: VerifyOracleArgs) -> Result<()> {
    let text = fs::read_to_string(&args.polytope)
        .with_context(|| format!("reading polytope file {}", args.polytope.display()))?;
    let spec: ascg_core::PolytopeSpec =
        serde_json::from_str(&text).context("parsing polytope JSON")?;
    let polytope = Polytope::from_spec(&spec)?;
    let report = verify_oracle(&polytope, args.trials, args.seed)?;
    println!(
        "{} trials, {} failures",
        report.trials, report.failures
    );
    if let Some(first) = &report.first_failure {
        bail!("oracle disagreed with enumeration: {first}");
    }
    Ok(())
}

fn cmd_demo_oracle() -> Result<()> {
    let demo = mapped_oracle_counterexample()?;
    println!(
        "inner polytope: {:?}, dimension {}",
        demo.polytope.kind(),
        demo.polytope.dim()
    );
    println!("map E (rows):");
    for i in 0..demo.e.nrows() {
        let row: Vec<String> = demo.e.row(i).iter().map(|v| format!("{v:>4}")).collect();
        println!("  [{}]", row.join(" "));
    }
    println!("direction c = {}", fmt_vec(&demo.direction));
    println!("pulled back Et c = {}", fmt_vec(&demo.pulled_back));
    println!("tied vertex ids at the oracle optimum: {:?}", demo.tied_vertex_ids);
    println!(
        "default tie-break: vertex {} = {} maps to {}  [extreme: {}]",
        demo.default_answer.inner.vertex_id,
        fmt_vec(&demo.default_answer.inner.vertex),
        fmt_vec(&demo.default_answer.image),
        demo.default_is_extreme
    );
    println!(
        "adversarial tie: vertex {} = {} maps to {}  [extreme: false]",
        demo.adversarial_vertex_id,
        fmt_vec(&demo.adversarial_vertex),
        fmt_vec(&demo.adversarial_image)
    );
    let images: Vec<String> = demo.extreme_images.iter().map(|p| fmt_vec(p)).collect();
    println!("extreme points of E X: {}", images.join(", "));
    println!(
        "both images reach the optimal value over E X, but only one is a vertex of E X:"
    );
    println!(
        "pushing inner-oracle answers through E is not a vertex oracle for E X."
    );
    Ok(())
}

fn fmt_vec(v: &nalgebra::DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    match args.family {
        GenerateFamily::L1ls {
            k,
            n,
            lambda,
            seed,
            generic,
            out,
        } => {
            let instance = generate_l1ls(k, n, lambda, seed, generic)?;
            let json = instance.problem.to_spec()?.to_json()?;
            match out {
                Some(path) => {
                    fs::write(&path, json)
                        .with_context(|| format!("writing {}", path.display()))?;
                    eprintln!(
                        "wrote l1ls instance (k = {k}, n = {n}, lambda = {lambda}, seed = {seed}) to {}",
                        path.display()
                    );
                }
                None => println!("{json}"),
            }
            Ok(())
        }
    }
}
