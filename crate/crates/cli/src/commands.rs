use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::Serialize;

use imtk::conditions::{
    check_frequency, small_delay_bound, small_delay_check, small_delay_tau_threshold, spectral_gap,
};
use imtk::cone::{verify_h3_discrete, H3Options};
use imtk::dynamics::{
    classify_omega_limit, heteroclinic_form, hopf_form, robustness_experiment, spiral_form,
};
use imtk::interp::Interpolation;
use imtk::manifold::{build_manifold, build_tangents, BuildOptions, ManifoldGraph};
use imtk::pipeline::{verify_all as run_verify_all, VerifyOptions};
use imtk::report::{columns, write_csv, write_json};
use imtk::synthesis::{
    certification_lambda, check_field, synthesize_p, ConeField, SynthesisOptions,
};
use imtk::system::{resolve_system, Eigenvalues, GalerkinSpec, SystemSpec};
use imtk::tracking::{
    central_project, extract_inertial_form, integrate_reduced, sample_vertical_leaf, semiconjugacy,
    verify_tracking, FormEvaluation, InertialForm, TrackingOptions,
};

use crate::{Ctx, GridArgs, Interp, Outcome, SystemArgs};

fn parse_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number `{x}`"))
        })
        .collect()
}

fn config_of(name: &str) -> Vec<String> {
    if std::path::Path::new(name).exists() {
        vec![name.to_string()]
    } else {
        Vec::new()
    }
}

struct Writer<'a> {
    ctx: &'a Ctx,
    outputs: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(ctx: &'a Ctx) -> Self {
        Writer {
            ctx,
            outputs: Vec::new(),
        }
    }

    fn json<T: Serialize + ?Sized>(&mut self, file: &str, v: &T) -> anyhow::Result<()> {
        let p = self.ctx.out.join(file);
        write_json(&p, v)?;
        self.outputs.push(p);
        Ok(())
    }

    fn csv(&mut self, file: &str, header: &[String], rows: &[Vec<f64>]) -> anyhow::Result<()> {
        let p = self.ctx.out.join(file);
        write_csv(&p, header, rows)?;
        self.outputs.push(p);
        Ok(())
    }

    fn done(self, pass: bool, configs: Vec<String>) -> Outcome {
        Outcome {
            pass,
            outputs: self.outputs,
            configs,
        }
    }
}

fn load(args: &SystemArgs) -> anyhow::Result<(SystemSpec, f64)> {
    let sys = resolve_system(&args.system)?;
    let nu0 = args
        .nu0
        .or(sys.hints.nu0)
        .with_context(|| format!("{} has no ν0 hint; pass --nu0", sys.name))?;
    Ok((sys, nu0))
}

fn field(args: &SystemArgs) -> anyhow::Result<(SystemSpec, ConeField)> {
    let (sys, nu0) = load(args)?;
    let cf = synthesize_p(&sys, nu0, &SynthesisOptions::default())?;
    Ok((sys, cf))
}

fn build_opts(ctx: &Ctx, grid: &GridArgs) -> BuildOptions {
    BuildOptions {
        nodes: grid.nodes,
        radius: grid.radius,
        tol: grid.tol,
        interpolation: match grid.interpolation {
            Interp::Linear => Interpolation::Linear,
            Interp::Cubic => Interpolation::Cubic,
        },
        exec: ctx.exec,
        ..BuildOptions::default()
    }
}

fn manifold(
    ctx: &Ctx,
    sys: &SystemSpec,
    cf: &ConeField,
    grid: &GridArgs,
) -> anyhow::Result<ManifoldGraph> {
    let q = vec![0.0; sys.forcing.driving_dim()];
    Ok(build_manifold(sys, cf, &q, &build_opts(ctx, grid))?)
}

pub fn check_freq(ctx: &Ctx, args: &SystemArgs, lambda: Option<f64>) -> anyhow::Result<Outcome> {
    let (sys, nu0) = load(args)?;
    let lambda = lambda.unwrap_or_else(|| certification_lambda(&sys, &SynthesisOptions::default()));
    let rep = check_frequency(&sys, nu0, lambda, ctx.exec)?;
    let mut w = Writer::new(ctx);
    w.json("check-freq.json", &rep)?;
    println!("margin {:.6e}, j = {}", rep.margin, rep.j);
    Ok(w.done(rep.pass, config_of(&args.system)))
}

pub fn gap(
    ctx: &Ctx,
    lambdas: &str,
    n: usize,
    j: usize,
    alpha_beta: f64,
    lambda: f64,
) -> anyhow::Result<Outcome> {
    let eig = if lambdas == "squares" {
        Eigenvalues::Named("squares".into())
    } else {
        Eigenvalues::Explicit(parse_list(lambdas)?)
    };
    let spec = GalerkinSpec {
        lambdas: eig,
        alpha: alpha_beta,
        beta: 0.0,
        n,
    };
    let rep = spectral_gap(&spec, j, lambda)?;
    let mut w = Writer::new(ctx);
    w.json("gap.json", &rep)?;
    println!("margin {:.6e}, nu0 {:.6e}", rep.margin, rep.nu0);
    Ok(w.done(rep.pass, Vec::new()))
}

pub fn small_delay(
    ctx: &Ctx,
    system: Option<&str>,
    tau: Option<f64>,
    d0: f64,
    r: usize,
    nu0: Option<f64>,
    lambda: f64,
) -> anyhow::Result<Outcome> {
    #[derive(Serialize)]
    struct SmallDelayReport {
        #[serde(flatten)]
        check: Option<imtk::conditions::ConditionReport>,
        tau_threshold: Option<f64>,
    }
    let (check, r) = match system {
        Some(name) => {
            let sys = resolve_system(name)?;
            let spec = sys.delay.clone().context("the system has no delay block")?;
            let r = spec.outputs();
            let nu0 = nu0.or(sys.hints.nu0).context("pass --nu0")?;
            (Some(small_delay_check(&spec, r, lambda, nu0)?), r)
        }
        None => match (tau, nu0) {
            (Some(tau), Some(nu0)) => (Some(small_delay_bound(tau, d0, r, lambda, nu0)?), r),
            (Some(tau), None) => (Some(small_delay_bound(tau, d0, r, lambda, 1.0 / tau)?), r),
            (None, _) => (None, r),
        },
    };
    let tau_threshold = (d0 == 0.0)
        .then(|| small_delay_tau_threshold(r, lambda))
        .transpose()?;
    let pass = check.as_ref().is_none_or(|c| c.pass);
    let rep = SmallDelayReport {
        check,
        tau_threshold,
    };
    let mut w = Writer::new(ctx);
    w.json("small-delay.json", &rep)?;
    if let Some(t) = tau_threshold {
        println!("tau threshold {t:.12e}");
    }
    Ok(w.done(pass, system.map(config_of).unwrap_or_default()))
}

pub fn synth_p(ctx: &Ctx, args: &SystemArgs) -> anyhow::Result<Outcome> {
    let (sys, cf) = field(args)?;
    let checks = check_field(&sys, &cf, ctx.seed)?;
    let mut w = Writer::new(ctx);
    w.json("cone-field.json", &cf)?;
    w.json("synth-p.json", &checks)?;
    println!("j = {}, delta = {:.6e}", cf.j, cf.delta);
    Ok(w.done(checks.ok, config_of(&args.system)))
}

pub fn verify_h3(
    ctx: &Ctx,
    args: &SystemArgs,
    pairs: usize,
    delta_scale: f64,
) -> anyhow::Result<Outcome> {
    let (sys, cf) = field(args)?;
    let mut opts = H3Options::default();
    opts.battery.pairs = pairs;
    opts.battery.seed = ctx.seed;
    opts.delta_scale = delta_scale;
    let rep = verify_h3_discrete(&sys, &cf, &opts, ctx.exec)?;
    let mut w = Writer::new(ctx);
    w.json("verify-h3.json", &rep)?;
    println!("{} of {} pairs violate", rep.violations, rep.checked);
    Ok(w.done(rep.clean, config_of(&args.system)))
}

pub fn build(ctx: &Ctx, args: &SystemArgs, grid: &GridArgs) -> anyhow::Result<Outcome> {
    let (sys, cf) = field(args)?;
    let m = manifold(ctx, &sys, &cf, grid)?;
    let mut w = Writer::new(ctx);
    w.json("manifold.json", &m.sidecar())?;
    w.csv("manifold.csv", &m.csv_header(), &m.csv_rows())?;
    println!(
        "converged {} after T = {}, Lipschitz {:.4}",
        m.converged, m.t_used, m.lipschitz_est
    );
    Ok(w.done(m.converged, config_of(&args.system)))
}

pub fn tangents(ctx: &Ctx, args: &SystemArgs, grid: &GridArgs) -> anyhow::Result<Outcome> {
    let (sys, cf) = field(args)?;
    let m = manifold(ctx, &sys, &cf, grid)?;
    let tf = build_tangents(&sys, &cf, &m, 1e-9, ctx.exec)?;
    let mut w = Writer::new(ctx);
    w.json("tangents.json", &tf)?;
    let header: Vec<String> = columns("zeta", m.j())
        .into_iter()
        .chain((1..=m.j()).flat_map(|c| (1..=m.n()).map(move |r| format!("t{c}_{r}"))))
        .collect();
    let rows: Vec<Vec<f64>> = m
        .nodes()
        .into_iter()
        .zip(&tf.bases)
        .map(|(mut z, b)| {
            z.extend(b.iter().copied());
            z
        })
        .collect();
    w.csv("tangents.csv", &header, &rows)?;
    println!(
        "max FD angle {:.3e} (tolerance {:.3e})",
        tf.max_fd_angle, tf.fd_tolerance
    );
    Ok(w.done(tf.pass, config_of(&args.system)))
}

fn lifted_form(
    ctx: &Ctx,
    sys: &SystemSpec,
    cf: &ConeField,
    m: &ManifoldGraph,
) -> anyhow::Result<InertialForm> {
    let how = if sys.forcing.is_autonomous() {
        FormEvaluation::Lifted
    } else {
        FormEvaluation::Nodes
    };
    Ok(extract_inertial_form(sys, cf, m, how, ctx.exec)?)
}

pub fn track(
    ctx: &Ctx,
    args: &SystemArgs,
    grid: &GridArgs,
    v0: &str,
    horizon: Option<f64>,
) -> anyhow::Result<Outcome> {
    let (sys, cf) = field(args)?;
    let v0 = parse_list(v0)?;
    if v0.len() != sys.n() {
        bail!("--v0 needs {} entries", sys.n());
    }
    let m = manifold(ctx, &sys, &cf, grid)?;
    let form = lifted_form(ctx, &sys, &cf, &m)?;
    let opts = TrackingOptions::default();
    let res = central_project(&sys, &form, &v0, &opts.schedule(cf.nu0), &opts)?;
    let t = horizon.unwrap_or(6.0 / cf.nu0.abs().max(0.5));
    let rep = verify_tracking(&sys, &cf, &m, &res, t, m.h)?;
    #[derive(Serialize)]
    struct Tracking<'a> {
        projection: &'a imtk::tracking::TrackingResult,
        decay: &'a imtk::tracking::TrackingReport,
    }
    let mut w = Writer::new(ctx);
    w.json(
        "track.json",
        &Tracking {
            projection: &res,
            decay: &rep,
        },
    )?;
    println!("slope {:?} (threshold {:.4})", rep.slope, rep.threshold);
    Ok(w.done(res.converged && rep.pass, config_of(&args.system)))
}

pub fn leaf(
    ctx: &Ctx,
    args: &SystemArgs,
    grid: &GridArgs,
    v0: &str,
    extent: f64,
    points: usize,
) -> anyhow::Result<Outcome> {
    let (sys, cf) = field(args)?;
    let v0 = parse_list(v0)?;
    let m = manifold(ctx, &sys, &cf, grid)?;
    let form = lifted_form(ctx, &sys, &cf, &m)?;
    let opts = TrackingOptions::default();
    let res = central_project(&sys, &form, &v0, &opts.schedule(cf.nu0), &opts)?;
    let k = sys.n() - cf.j;
    let axis: Vec<f64> = (0..points.max(1))
        .map(|i| {
            if points <= 1 {
                0.0
            } else {
                -extent + 2.0 * extent * i as f64 / (points - 1) as f64
            }
        })
        .collect();
    let mut grid_pts: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..k {
        grid_pts = grid_pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    let horizon = 6.0 / cf.nu0.abs().max(0.5);
    let pts = sample_vertical_leaf(&sys, &cf, &res.v0_star, &grid_pts, horizon, m.h, ctx.exec)?;
    let header: Vec<String> = columns("zeta_plus", k)
        .into_iter()
        .chain(columns("v", sys.n()))
        .chain(["min_v".to_string()])
        .collect();
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| {
            let mut r = p.zeta_plus.clone();
            r.extend(&p.point);
            r.push(p.min_v);
            r
        })
        .collect();
    let mut w = Writer::new(ctx);
    w.json("leaf.json", &pts)?;
    w.csv("leaf.csv", &header, &rows)?;
    Ok(w.done(pts.iter().all(|p| p.positive), config_of(&args.system)))
}

pub fn reduce(
    ctx: &Ctx,
    args: &SystemArgs,
    grid: &GridArgs,
    zeta0: &str,
    t: f64,
    h: f64,
) -> anyhow::Result<Outcome> {
    let (sys, cf) = field(args)?;
    let zeta0 = parse_list(zeta0)?;
    let m = manifold(ctx, &sys, &cf, grid)?;
    let form = lifted_form(ctx, &sys, &cf, &m)?;
    let mut w = Writer::new(ctx);
    let traj = integrate_reduced(&form, &zeta0, t, h)?;
    let rows: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, z)| std::iter::once(*t).chain(z.iter().copied()).collect())
        .collect();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(columns("zeta", m.j()))
        .collect();
    w.csv("reduced.csv", &header, &rows)?;
    let pass = if sys.forcing.is_autonomous() {
        let s = semiconjugacy(&sys, &form, &zeta0, t, h, 20)?;
        w.json("reduce.json", &s)?;
        println!("semiconjugacy residual {:.3e}", s.max_residual);
        s.max_residual <= 10.0 * m.tol && s.backward_forward <= 1e-6
    } else {
        true
    };
    Ok(w.done(pass, config_of(&args.system)))
}

pub fn analyze(
    ctx: &Ctx,
    args: Option<SystemArgs>,
    grid: &GridArgs,
    synthetic: Option<&str>,
    zeta0: &str,
    (transient, observe, h): (f64, f64, f64),
) -> anyhow::Result<Outcome> {
    let zeta0 = parse_list(zeta0)?;
    let (form, configs) = match (synthetic, &args) {
        (Some("hopf"), _) => (hopf_form(1.0, 2.0, 3.0)?, Vec::new()),
        (Some("spiral"), _) => (spiral_form(-0.5, 2.0, 3.0)?, Vec::new()),
        (Some("heteroclinic"), _) => (heteroclinic_form(0.2)?, Vec::new()),
        (Some(other), _) => bail!("unknown synthetic form `{other}`"),
        (None, Some(a)) => {
            let (sys, cf) = field(a)?;
            let m = manifold(ctx, &sys, &cf, grid)?;
            (lifted_form(ctx, &sys, &cf, &m)?, config_of(&a.system))
        }
        (None, None) => bail!("pass --system or --synthetic"),
    };
    let c = classify_omega_limit(&form, &zeta0, transient, observe, h)?;
    let mut w = Writer::new(ctx);
    w.json("analyze.json", &c)?;
    let rows: Vec<Vec<f64>> = c.samples.clone();
    w.csv("orbit.csv", &columns("zeta", form.j()), &rows)?;
    println!("{:?}", c.verdict);
    Ok(w.done(true, configs))
}

pub fn robustness(
    ctx: &Ctx,
    args: &SystemArgs,
    grid: &GridArgs,
    eps: &str,
) -> anyhow::Result<Outcome> {
    let (sys, cf) = field(args)?;
    let eps = parse_list(eps)?;
    let rep = robustness_experiment(&sys, &cf, &eps, &build_opts(ctx, grid))?;
    let mut w = Writer::new(ctx);
    w.json("robustness.json", &rep)?;
    let rows: Vec<Vec<f64>> = rep
        .entries
        .iter()
        .map(|e| vec![e.epsilon, e.distance, e.ratio.unwrap_or(f64::NAN)])
        .collect();
    w.csv(
        "robustness.csv",
        &["epsilon".into(), "distance".into(), "ratio".into()],
        &rows,
    )?;
    println!("ratio spread {:.3}", rep.ratio_spread);
    Ok(w.done(rep.pass, config_of(&args.system)))
}

pub fn verify_all(ctx: &Ctx, args: &SystemArgs, grid: &GridArgs) -> anyhow::Result<Outcome> {
    let sys = resolve_system(&args.system)?;
    let opts = VerifyOptions {
        nu0: args.nu0,
        seed: ctx.seed,
        exec: ctx.exec,
        build: build_opts(ctx, grid),
    };
    let rep = run_verify_all(&sys, &opts)?;
    let mut w = Writer::new(ctx);
    w.json("verify-all.json", &rep)?;
    if let Some(cf) = &rep.cone_field {
        w.json("cone-field.json", cf)?;
    }
    if let Some(m) = &rep.manifold {
        w.csv("manifold.csv", &m.csv_header(), &m.csv_rows())?;
    }
    for s in &rep.stages {
        println!("  {:<22} {:?}", s.name, s.status);
    }
    Ok(w.done(rep.pass, config_of(&args.system)))
}
