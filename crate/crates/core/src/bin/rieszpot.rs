use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use rieszpot::config::RunConfig;
use rieszpot::lebesgue::{luxemburg_norm, modular, ExponentSpec};
use rieszpot::measure::{check_upper_doubling, DiscreteMeasure};
use rieszpot::operators::{potential_in, GridFunction, KernelSpec, LambdaSpec, Quadrature, Setting};
use rieszpot::space::{build_space, geometric_doubling_number, QuasiMetricSpace, SpaceFile, SpaceSpec};
use rieszpot::two_component::{build_glued, glued_measure, verify_ball_estimates, GlueSpec, GluedMeasure, TwoComponentSpace};
use rieszpot::verify::{self, ExperimentReport, Verdict};
use rieszpot::Error;

#[derive(Parser)]
#[command(name = "rieszpot", version, about = "Riesz-type potentials on discretized quasi-metric measure spaces")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the seed of a verify config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the resolved plan and exit without computing.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    #[command(subcommand)]
    Space(SpaceCmd),
    #[command(subcommand)]
    Measure(MeasureCmd),
    #[command(subcommand)]
    Glue(GlueCmd),
    #[command(subcommand)]
    Op(OpCmd),
    /// Modular and Luxemburg norm of a grid function.
    Norm {
        #[command(flatten)]
        on: Domain,
        /// Exponent: a number, a JSON array, or `hls:p=..,alpha=..`.
        #[arg(long)]
        p: String,
        #[arg(long)]
        f: PathBuf,
    },
    #[command(subcommand)]
    Verify(VerifyCmd),
}

#[derive(Subcommand)]
enum SpaceCmd {
    Build {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Info {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum MeasureCmd {
    /// Upper doubling check `mu(B(x, r)) <= lambda(x, r)`.
    Check {
        #[command(flatten)]
        on: Domain,
        #[arg(long)]
        lambda: LambdaSpec,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GlueCmd {
    Build {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    VerifyBalls {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OpCmd {
    Apply {
        #[command(flatten)]
        on: Domain,
        /// e.g. `general:alpha=0.5,lambda=power(n=1)` or `jalpha:alpha=0.5`.
        #[arg(long)]
        kernel: KernelSpec,
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = QuadratureArg::Plain)]
        quadrature: QuadratureArg,
    },
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Boundedness `L^p -> L^{q(.)}` of the potential.
    Hls(VerifyArgs),
    Hedberg(VerifyArgs),
    Necessity(VerifyArgs),
    Maximal(VerifyArgs),
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// A plain space with a measure, or a glued space with its measure.
#[derive(Args)]
struct Domain {
    /// Space spec or `space build` output.
    #[arg(long, conflicts_with = "glue", required_unless_present = "glue")]
    space: Option<PathBuf>,
    /// JSON weight array; the natural quadrature weights when absent.
    #[arg(long, conflicts_with = "glue")]
    measure: Option<PathBuf>,
    /// Glue spec; the glued measure is used.
    #[arg(long)]
    glue: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuadratureArg {
    Plain,
    SelfCell,
}

impl From<QuadratureArg> for Quadrature {
    fn from(q: QuadratureArg) -> Self {
        match q {
            QuadratureArg::Plain => Quadrature::Plain,
            QuadratureArg::SelfCell => Quadrature::SelfCell,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpaceInput {
    File(SpaceFile),
    Spec(SpaceSpec),
}

/// Exit 2: the input or a hypothesis is at fault. Exit 1: a violation or an internal failure.
enum Failure {
    Input(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Internal(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn load_space(path: &Path) -> Result<QuasiMetricSpace, Failure> {
    let spec = match read_json::<SpaceInput>(path)? {
        SpaceInput::File(f) => f.spec,
        SpaceInput::Spec(s) => s,
    };
    Ok(build_space(&spec)?)
}

enum Loaded {
    Plain(QuasiMetricSpace, DiscreteMeasure),
    Glued(TwoComponentSpace, GluedMeasure),
}

impl Loaded {
    fn setting(&self) -> Setting<'_> {
        match self {
            Loaded::Plain(s, mu) => Setting::new(s, mu),
            Loaded::Glued(tc, gm) => Setting::glued(tc, gm),
        }
    }
}

fn load_domain(on: &Domain) -> Result<Loaded, Failure> {
    if let Some(g) = &on.glue {
        let tc = build_glued(&read_json::<GlueSpec>(g)?)?;
        let gm = glued_measure(&tc);
        return Ok(Loaded::Glued(tc, gm));
    }
    let space = load_space(on.space.as_deref().expect("clap requires --space or --glue"))?;
    let mu = match &on.measure {
        Some(m) => DiscreteMeasure::for_space(&space, read_json(m)?)?,
        None => DiscreteMeasure::natural(&space),
    };
    Ok(Loaded::Plain(space, mu))
}

fn load_function(path: &Path, n: usize) -> Result<GridFunction, Failure> {
    let f = GridFunction::new(read_json(path)?)?;
    f.check_len(n)?;
    Ok(f)
}

fn run(cli: &Cli) -> Outcome {
    let dry = cli.dry_run;
    match &cli.cmd {
        Command::Space(SpaceCmd::Build { spec, out }) => {
            let spec: SpaceSpec = read_json(spec)?;
            if dry {
                print_json(&json!({"build": spec, "out": out}));
                return Ok(ExitCode::SUCCESS);
            }
            let space = build_space(&spec)?;
            let file = SpaceFile::describe(&space).ok_or_else(|| Failure::Internal("built space has no spec".into()))?;
            write_json(out, &file)?;
        }
        Command::Space(SpaceCmd::Info { input }) => {
            let space = load_space(input)?;
            if dry {
                print_json(&json!({"info": input, "n": space.len()}));
                return Ok(ExitCode::SUCCESS);
            }
            print_json(&json!({
                "n": space.len(),
                "k1": space.k1(),
                "k1_source": space.k1_source(),
                "r0": space.r0(),
                "doubling_number": geometric_doubling_number(&space),
            }));
        }
        Command::Measure(MeasureCmd::Check { on, lambda, report }) => {
            let d = load_domain(on)?;
            if dry {
                print_json(&json!({"check": "upper-doubling", "lambda": lambda.to_string(), "n": d.setting().space.len(), "report": report}));
                return Ok(ExitCode::SUCCESS);
            }
            let s = d.setting();
            let lam = s.lambda(lambda)?;
            let rep = check_upper_doubling(s.space, s.mu, &lam);
            match report {
                Some(p) => write_json(p, &rep)?,
                None => print_json(&rep),
            }
            if !rep.holds {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Glue(GlueCmd::Build { spec, out }) => {
            let spec: GlueSpec = read_json(spec)?;
            if dry {
                print_json(&json!({"glue": spec, "out": out}));
                return Ok(ExitCode::SUCCESS);
            }
            let tc = build_glued(&spec)?;
            let gm = glued_measure(&tc);
            write_json(
                out,
                &json!({
                    "spec": spec,
                    "n": tc.len(),
                    "n1": tc.n1,
                    "n2": tc.n2,
                    "gamma1": tc.gamma1,
                    "gamma2": tc.gamma2,
                    "xi": tc.xi,
                    "contact_c": tc.contact_c,
                    "s_const": tc.s_const,
                    "fitted_dimensions": tc.fitted_dimensions,
                    "k3": gm.k3,
                    "k4": gm.k4,
                    "weights": gm.underlying.weights(),
                    "warnings": gm.warnings,
                }),
            )?;
        }
        Command::Glue(GlueCmd::VerifyBalls { spec, report }) => {
            let spec: GlueSpec = read_json(spec)?;
            if dry {
                print_json(&json!({"verify-balls": spec, "report": report}));
                return Ok(ExitCode::SUCCESS);
            }
            let tc = build_glued(&spec)?;
            let gm = glued_measure(&tc);
            let rep = verify_ball_estimates(&tc, &gm)?;
            match report {
                Some(p) => write_json(p, &rep)?,
                None => print_json(&rep),
            }
            if !rep.holds {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Op(OpCmd::Apply { on, kernel, f, out, quadrature }) => {
            let d = load_domain(on)?;
            let s = d.setting();
            let f = load_function(f, s.space.len())?;
            if dry {
                print_json(&json!({"kernel": kernel.to_string(), "n": s.space.len(), "out": out}));
                return Ok(ExitCode::SUCCESS);
            }
            let g = potential_in(&s, kernel, &f, (*quadrature).into())?;
            write_json(out, &g)?;
        }
        Command::Norm { on, p, f } => {
            let d = load_domain(on)?;
            let s = d.setting();
            let f = load_function(f, s.space.len())?;
            let spec: ExponentSpec = p.parse()?;
            let pexp = spec.resolve(s.space.len(), s.n_field().as_deref())?;
            if dry {
                print_json(&json!({"n": s.space.len(), "p_minus": pexp.p_minus(), "p_plus": pexp.p_plus()}));
                return Ok(ExitCode::SUCCESS);
            }
            print_json(&json!({"modular": modular(s.mu, &pexp, &f)?, "norm": luxemburg_norm(s.mu, &pexp, &f)?}));
        }
        Command::Verify(v) => return run_verify(v, cli),
    }
    Ok(ExitCode::SUCCESS)
}

fn run_verify(v: &VerifyCmd, cli: &Cli) -> Outcome {
    let (kind, args): (&str, &VerifyArgs) = match v {
        VerifyCmd::Hls(a) => ("hls", a),
        VerifyCmd::Hedberg(a) => ("hedberg", a),
        VerifyCmd::Necessity(a) => ("necessity", a),
        VerifyCmd::Maximal(a) => ("maximal", a),
    };
    let text = fs::read_to_string(&args.config).map_err(|e| Failure::Input(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.dry_run {
        print_json(&json!({
            "experiment": kind,
            "config": cfg,
            "planned_sizes": cfg.family.planned_sizes(),
            "report": args.report,
            "csv": args.csv,
        }));
        return Ok(ExitCode::SUCCESS);
    }
    let rep: ExperimentReport = match kind {
        "hls" => verify::verify_sufficiency(&cfg)?,
        "hedberg" => verify::verify_hedberg(&cfg)?,
        "necessity" => verify::verify_necessity(&cfg)?,
        _ => verify::verify_maximal_bounds(&cfg)?,
    };
    match &args.report {
        Some(p) => write_json(p, &rep)?,
        None => print_json(&rep),
    }
    if let Some(p) = &args.csv {
        fs::write(p, rep.to_csv()).map_err(|e| Failure::Internal(format!("{}: {e}", p.display())))?;
    }
    let code = match rep.verdict {
        Verdict::Stable => 0,
        Verdict::HypothesesNotMet => 2,
        Verdict::Growing | Verdict::Violated => 1,
    };
    if code != 0 {
        eprintln!("{}", json!({"verdict": rep.verdict, "reason": rep.reason}));
    }
    Ok(ExitCode::from(code))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("{}", json!({"error": "internal", "reason": e.to_string()}));
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(Failure::Input(msg)) => {
            eprintln!("{}", json!({"error": "input", "reason": msg}));
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("{}", json!({"error": "internal", "reason": msg}));
            ExitCode::from(1)
        }
    }
}
