mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Cone-field certificates, inertial manifolds and reduced dynamics.
#[derive(Parser, Debug)]
#[command(name = "imtk", version)]
struct Cli {
    /// Output directory. The IMTK_OUT environment variable takes precedence.
    #[arg(long, global = true, default_value = "imtk-out")]
    out: PathBuf,
    /// Worker threads for the data-parallel batteries (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Run every battery on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct SystemArgs {
    /// Fixture name (e.g. SYS-ODE3) or path to a system JSON file.
    #[arg(long)]
    pub system: String,
    /// Dichotomy exponent; defaults to the fixture's hint.
    #[arg(long, allow_hyphen_values = true)]
    pub nu0: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum, default_value = "cubic")]
    pub interpolation: Interp,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy)]
pub enum Interp {
    Linear,
    Cubic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frequency-domain inequality on the line Re p = -ν0.
    CheckFreq {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long)]
        lambda_lip: Option<f64>,
    },
    /// Spectral gap condition for a self-adjoint spectrum.
    Gap {
        /// `squares` or a comma-separated list of eigenvalues.
        #[arg(long, default_value = "squares")]
        lambdas: String,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        j: usize,
        #[arg(long, default_value_t = 0.0)]
        alpha_beta: f64,
        #[arg(long)]
        lambda_lip: f64,
    },
    /// Small-delay bound and the τ threshold at D0 = 0.
    SmallDelay {
        /// Delay fixture supplying τ, ‖D0‖ and r.
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        d0: f64,
        #[arg(long, default_value_t = 1)]
        r: usize,
        #[arg(long)]
        nu0: Option<f64>,
        #[arg(long)]
        lambda_lip: f64,
    },
    /// Synthesize the quadratic form P and re-check its invariants.
    SynthP {
        #[command(flatten)]
        sys: SystemArgs,
    },
    /// Discrete squeezing inequalities on random pairs.
    VerifyH3 {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 1.0)]
        delta_scale: f64,
    },
    /// Pullback construction of the manifold graph.
    BuildManifold {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Tangent spaces by subspace iteration, checked against finite differences.
    Tangents {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Central projection of a point and its exponential tracking.
    Track {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Comma-separated initial state.
        #[arg(long, allow_hyphen_values = true)]
        v0: String,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Vertical leaf through the central projection of a point.
    Leaf {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, allow_hyphen_values = true)]
        v0: String,
        /// Half-width of the ζ⁺ sampling grid.
        #[arg(long, default_value_t = 1.0)]
        extent: f64,
        /// Points per ζ⁺ axis.
        #[arg(long, default_value_t = 5)]
        points: usize,
    },
    /// Inertial form, reduced trajectory and semiconjugacy check.
    Reduce {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, allow_hyphen_values = true)]
        zeta0: String,
        #[arg(long, default_value_t = 5.0)]
        t: f64,
        #[arg(long, default_value_t = 0.01)]
        h: f64,
    },
    /// ω-limit classification on an inertial form or a synthetic one.
    Analyze {
        #[arg(long, required_unless_present = "synthetic")]
        system: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        nu0: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        /// hopf, spiral or heteroclinic.
        #[arg(long)]
        synthetic: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        zeta0: String,
        #[arg(long, default_value_t = 20.0)]
        transient: f64,
        #[arg(long, default_value_t = 10.0)]
        observe: f64,
        #[arg(long, default_value_t = 0.01)]
        h: f64,
    },
    /// Manifold distance under a scaled nonlinearity.
    Robustness {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = "0.1,0.01,0.001")]
        eps: String,
    },
    /// Every applicable stage on one fixture.
    VerifyAll {
        system: String,
        #[arg(long, allow_hyphen_values = true)]
        nu0: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
    },
}

/// What a command produced.
pub struct Outcome {
    pub pass: bool,
    pub outputs: Vec<PathBuf>,
    pub configs: Vec<String>,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_paths: Vec<String>,
    seed: u64,
    tool_version: &'static str,
    started_unix: f64,
    finished_unix: f64,
    outputs: Vec<String>,
    pass: bool,
}

pub struct Ctx {
    pub out: PathBuf,
    pub seed: u64,
    pub exec: imtk::Exec,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = std::env::var_os("IMTK_OUT")
        .map(PathBuf::from)
        .unwrap_or(cli.out.clone());
    #[cfg(feature = "parallel")]
    if cli.threads > 0 {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let exec = if cli.sequential {
        imtk::Exec::Sequential
    } else {
        imtk::Exec::Parallel
    };
    let ctx = Ctx {
        out: out.clone(),
        seed: cli.seed,
        exec,
    };
    let name = command_name(&cli.command);
    let started = now();
    let result = dispatch(&ctx, cli.command);
    match result {
        Ok(outcome) => {
            let manifest = RunManifest {
                command: name.into(),
                config_paths: outcome.configs,
                seed: cli.seed,
                tool_version: env!("CARGO_PKG_VERSION"),
                started_unix: started,
                finished_unix: now(),
                outputs: outcome
                    .outputs
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect(),
                pass: outcome.pass,
            };
            if let Err(e) = imtk::report::write_json(&out.join("manifest.json"), &manifest) {
                eprintln!("error: writing manifest: {e}");
                return ExitCode::from(1);
            }
            println!("{name}: {}", if outcome.pass { "pass" } else { "FAIL" });
            for p in &outcome.outputs {
                println!("  wrote {}", p.display());
            }
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::CheckFreq { .. } => "check-freq",
        Command::Gap { .. } => "gap",
        Command::SmallDelay { .. } => "small-delay",
        Command::SynthP { .. } => "synth-p",
        Command::VerifyH3 { .. } => "verify-h3",
        Command::BuildManifold { .. } => "build-manifold",
        Command::Tangents { .. } => "tangents",
        Command::Track { .. } => "track",
        Command::Leaf { .. } => "leaf",
        Command::Reduce { .. } => "reduce",
        Command::Analyze { .. } => "analyze",
        Command::Robustness { .. } => "robustness",
        Command::VerifyAll { .. } => "verify-all",
    }
}

fn dispatch(ctx: &Ctx, c: Command) -> anyhow::Result<Outcome> {
    use commands as c_;
    match c {
        Command::CheckFreq { sys, lambda_lip } => c_::check_freq(ctx, &sys, lambda_lip),
        Command::Gap {
            lambdas,
            n,
            j,
            alpha_beta,
            lambda_lip,
        } => c_::gap(ctx, &lambdas, n, j, alpha_beta, lambda_lip),
        Command::SmallDelay {
            system,
            tau,
            d0,
            r,
            nu0,
            lambda_lip,
        } => c_::small_delay(ctx, system.as_deref(), tau, d0, r, nu0, lambda_lip),
        Command::SynthP { sys } => c_::synth_p(ctx, &sys),
        Command::VerifyH3 {
            sys,
            pairs,
            delta_scale,
        } => c_::verify_h3(ctx, &sys, pairs, delta_scale),
        Command::BuildManifold { sys, grid } => c_::build(ctx, &sys, &grid),
        Command::Tangents { sys, grid } => c_::tangents(ctx, &sys, &grid),
        Command::Track {
            sys,
            grid,
            v0,
            horizon,
        } => c_::track(ctx, &sys, &grid, &v0, horizon),
        Command::Leaf {
            sys,
            grid,
            v0,
            extent,
            points,
        } => c_::leaf(ctx, &sys, &grid, &v0, extent, points),
        Command::Reduce {
            sys,
            grid,
            zeta0,
            t,
            h,
        } => c_::reduce(ctx, &sys, &grid, &zeta0, t, h),
        Command::Analyze {
            system,
            nu0,
            grid,
            synthetic,
            zeta0,
            transient,
            observe,
            h,
        } => c_::analyze(
            ctx,
            system.map(|system| SystemArgs { system, nu0 }),
            &grid,
            synthetic.as_deref(),
            &zeta0,
            (transient, observe, h),
        ),
        Command::Robustness { sys, grid, eps } => c_::robustness(ctx, &sys, &grid, &eps),
        Command::VerifyAll { system, nu0, grid } => {
            c_::verify_all(ctx, &SystemArgs { system, nu0 }, &grid)
        }
    }
}
