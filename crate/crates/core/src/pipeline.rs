//! The end-to-end verification run behind `imtk verify-all`.
//!
//! Each stage records a typed report as JSON. A failed precondition or error
//! in one stage is recorded and the stages that depend on it are skipped.

use serde::Serialize;
use serde_json::Value;

use crate::conditions::{check_frequency, scp_sampled_check, ScpOptions};
use crate::cone::{
    check_cone_invariance, check_squeezing, romanov_check, verify_h3_discrete, H3Options,
};
use crate::dynamics::{check_ap_stability, check_convergence_periodic, classify_omega_limit};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::manifold::{
    build_manifold, build_tangents, invariance_residual, BuildOptions, ManifoldGraph,
};
use crate::synthesis::{
    certification_lambda, check_field, clip_constant, synthesize_p, ulip, BatteryOptions,
    ConeField, SynthesisOptions,
};
use crate::system::{ForcingConfig, SystemSpec};
use crate::tracking::{
    central_project, extract_inertial_form, semiconjugacy, verify_tracking, FormEvaluation,
    TrackingOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// Informational stage without a pass criterion.
    Info,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub status: Status,
    pub report: Value,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub nu0: Option<f64>,
    pub seed: u64,
    pub exec: Exec,
    pub build: BuildOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            nu0: None,
            seed: 42,
            exec: Exec::default(),
            build: BuildOptions::default(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyAllReport {
    pub system: String,
    pub seed: u64,
    pub nu0: f64,
    pub lambda: f64,
    pub j: Option<usize>,
    pub stages: Vec<Stage>,
    pub pass: bool,
    #[serde(skip)]
    pub cone_field: Option<ConeField>,
    #[serde(skip)]
    pub manifold: Option<ManifoldGraph>,
}

impl VerifyAllReport {
    fn record<T: Serialize>(
        &mut self,
        name: &str,
        outcome: Result<(Option<bool>, T)>,
    ) -> Option<bool> {
        let (status, report, ok) = match outcome {
            Ok((verdict, rep)) => {
                let status = match verdict {
                    Some(true) => Status::Pass,
                    Some(false) => Status::Fail,
                    None => Status::Info,
                };
                let report = serde_json::to_value(rep).unwrap_or(Value::Null);
                (status, report, verdict.or(Some(true)))
            }
            Err(e) => (Status::Error, Value::String(e.to_string()), None),
        };
        self.stages.push(Stage {
            name: name.into(),
            status,
            report,
        });
        ok
    }
}

fn driving_origin(sys: &SystemSpec) -> Vec<f64> {
    vec![0.0; sys.forcing.driving_dim()]
}

/// Runs the certificate, cone batteries, manifold, reduction and dynamics
/// stages that apply to `sys`.
pub fn verify_all(sys: &SystemSpec, opts: &VerifyOptions) -> Result<VerifyAllReport> {
    let nu0 = opts
        .nu0
        .or(sys.hints.nu0)
        .ok_or_else(|| Error::pre(format!("{} has no ν0 hint; pass one explicitly", sys.name)))?;
    let lambda = certification_lambda(sys, &SynthesisOptions::default());
    let exec = opts.exec;
    let seed = opts.seed;
    let mut rep = VerifyAllReport {
        system: sys.name.clone(),
        seed,
        nu0,
        lambda,
        j: None,
        stages: Vec::new(),
        pass: false,
        cone_field: None,
        manifold: None,
    };

    rep.record(
        "frequency",
        check_frequency(sys, nu0, lambda, exec).map(|r| (Some(r.pass), r)),
    );
    let cf = match synthesize_p(sys, nu0, &SynthesisOptions::default()) {
        Ok(cf) => cf,
        Err(e) => {
            rep.record::<()>("synthesis", Err(e));
            return Ok(finish(rep));
        }
    };
    rep.j = Some(cf.j);
    rep.record(
        "synthesis",
        check_field(sys, &cf, seed).map(|c| (Some(c.ok), c)),
    );

    let battery = BatteryOptions {
        seed,
        ..BatteryOptions::default()
    };
    let h3 = H3Options {
        battery: BatteryOptions {
            seed,
            ..H3Options::default().battery
        },
        ..H3Options::default()
    };
    rep.record(
        "h3",
        verify_h3_discrete(sys, &cf, &h3, exec).map(|r| (Some(r.clean), r)),
    );
    rep.record(
        "scp",
        scp_sampled_check(
            sys,
            &cf,
            &ScpOptions {
                seed,
                ..ScpOptions::for_field(&cf)
            },
            exec,
        )
        .map(|r| (Some(r.pass), r)),
    );
    rep.record(
        "cone-invariance",
        check_cone_invariance(sys, &cf, &battery, cf.tau_p, exec).map(|r| (Some(r.clean), r)),
    );
    if cf.delta > 0.0 {
        rep.record(
            "squeezing",
            check_squeezing(sys, &cf, &battery, 0.0, 0.05, exec)
                .map(|r| (Some(r.integral.clean && r.exponential.clean), r)),
        );
    }
    if cf.j > 0 {
        let kappa = cf.kappa0.unwrap_or(0.5);
        rep.record(
            "romanov",
            romanov_check(&cf, kappa, 10_000, seed, exec).map(|r| (Some(r.clean), r)),
        );
    }

    match cf.j {
        0 => zero_dimensional(sys, &cf, &mut rep),
        1 | 2 => manifold_stages(sys, &cf, opts, &mut rep),
        j => {
            rep.record::<()>(
                "manifold",
                Err(Error::pre(format!(
                    "lattices cover j <= 2, certificate has j = {j}"
                ))),
            );
        }
    }
    rep.cone_field = Some(cf);
    Ok(finish(rep))
}

fn finish(mut rep: VerifyAllReport) -> VerifyAllReport {
    rep.pass = rep
        .stages
        .iter()
        .all(|s| matches!(s.status, Status::Pass | Status::Info));
    rep
}

fn zero_dimensional(sys: &SystemSpec, cf: &ConeField, rep: &mut VerifyAllReport) {
    match &sys.forcing.config {
        ForcingConfig::Quasiperiodic { .. } => {
            rep.record(
                "ap-stability",
                check_ap_stability(
                    sys,
                    cf,
                    4,
                    5,
                    20.0,
                    sys.default_step().max(1e-3),
                    rep.seed,
                    Exec::default(),
                )
                .map(|r| (Some(r.pass), r)),
            );
        }
        ForcingConfig::Periodic { .. } => periodic_convergence(sys, cf, rep),
        ForcingConfig::None => {}
    }
}

fn periodic_convergence(sys: &SystemSpec, cf: &ConeField, rep: &mut VerifyAllReport) {
    let Some(sigma) = sys.forcing.period() else {
        return;
    };
    let v0 = vec![1.0; sys.n()];
    rep.record(
        "periodic-convergence",
        check_convergence_periodic(sys, cf, &v0, sigma, 40.0 * sigma, 1e-2)
            .map(|r| (Some(r.converged), r)),
    );
}

fn manifold_stages(
    sys: &SystemSpec,
    cf: &ConeField,
    opts: &VerifyOptions,
    rep: &mut VerifyAllReport,
) {
    let exec = opts.exec;
    let q = driving_origin(sys);
    let m = match build_manifold(sys, cf, &q, &BuildOptions { exec, ..opts.build }) {
        Ok(m) => m,
        Err(e) => {
            rep.record::<()>("manifold", Err(e));
            return;
        }
    };
    #[derive(Serialize)]
    struct ManifoldStage {
        #[serde(flatten)]
        sidecar: crate::manifold::ManifoldSidecar,
        clip_constant: f64,
    }
    let clip =
        clip_constant(cf, ulip(sys, 1.0), (cf.nu0, cf.nu0), cf.tau_p).unwrap_or(f64::INFINITY);
    let ok = m.converged && m.chart_residual() < 1e-6 && m.lipschitz_est <= 1.1 * clip;
    rep.record(
        "manifold",
        Ok((
            Some(ok),
            ManifoldStage {
                sidecar: m.sidecar(),
                clip_constant: clip,
            },
        )),
    );
    rep.record(
        "tangents",
        build_tangents(sys, cf, &m, 1e-9, exec).map(|t| (Some(t.pass), t)),
    );

    if sys.forcing.is_autonomous() {
        #[derive(Serialize)]
        struct Invariance {
            t: f64,
            residual: f64,
            bound: f64,
        }
        rep.record(
            "invariance",
            invariance_residual(sys, cf, &m, 1.0, exec).map(|r| {
                let bound = 5.0 * m.tol;
                (
                    Some(r <= bound),
                    Invariance {
                        t: 1.0,
                        residual: r,
                        bound,
                    },
                )
            }),
        );
        reduction_stages(sys, cf, &m, rep, exec);
    } else if m.j() == 1 && sys.forcing.period().is_some() {
        let sigma = sys.forcing.period().expect("checked");
        rep.record(
            "poincare",
            crate::dynamics::poincare_map(sys, &m, sigma, m.lattice.center[0], 10)
                .map(|r| (Some(r.monotone), r)),
        );
        periodic_convergence(sys, cf, rep);
    }
    rep.manifold = Some(m);
}

fn reduction_stages(
    sys: &SystemSpec,
    cf: &ConeField,
    m: &ManifoldGraph,
    rep: &mut VerifyAllReport,
    exec: Exec,
) {
    let form = match extract_inertial_form(sys, cf, m, FormEvaluation::Lifted, exec) {
        Ok(f) => f,
        Err(e) => {
            rep.record::<()>("inertial-form", Err(e));
            return;
        }
    };
    let j = m.j();
    let centre = m.lattice.center.clone();
    // close enough to the centre that short reduced paths stay inside the box
    let zeta0: Vec<f64> = centre.iter().map(|c| c + 0.1 * m.lattice.radius).collect();
    let horizon = 2.0;
    rep.record(
        "semiconjugacy",
        semiconjugacy(sys, &form, &zeta0, horizon, 0.01, 20).map(|s| {
            let ok = s.max_residual <= 10.0 * m.tol && s.backward_forward <= 1e-6;
            (Some(ok), s)
        }),
    );

    let topts = TrackingOptions::default();
    let mut v0 = m.eval(&centre);
    for (i, x) in v0.iter_mut().enumerate() {
        *x += cf.e_plus.column(0).get(i).copied().unwrap_or(0.0) * 0.5;
    }
    if cf.e_plus.ncols() > 0 {
        #[derive(Serialize)]
        struct TrackingStage {
            projection: crate::tracking::TrackingResult,
            decay: crate::tracking::TrackingReport,
        }
        let outcome =
            central_project(sys, &form, &v0, &topts.schedule(cf.nu0), &topts).and_then(|r| {
                let t = 6.0 / cf.nu0.abs().max(0.5);
                let decay = verify_tracking(sys, cf, m, &r, t, m.h)?;
                Ok((
                    Some(r.converged && decay.pass),
                    TrackingStage {
                        projection: r,
                        decay,
                    },
                ))
            });
        rep.record("tracking", outcome);
    }

    let verdict = classify_omega_limit(&form, &zeta0, 10.0, 10.0, 0.01);
    match verdict {
        Err(Error::LeftGrid { time }) => {
            #[derive(Serialize)]
            struct Escaped {
                verdict: &'static str,
                time: f64,
                j: usize,
            }
            rep.record(
                "omega-limit",
                Ok((
                    None,
                    Escaped {
                        verdict: "left-grid",
                        time,
                        j,
                    },
                )),
            );
        }
        other => {
            rep.record("omega-limit", other.map(|c| (None, c)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::to_canonical_json;
    use crate::system::fixture;

    #[test]
    fn lin2_passes_every_stage_and_reports_are_reproducible() {
        let sys = fixture("SYS-LIN2").unwrap();
        let a = verify_all(&sys, &VerifyOptions::default()).unwrap();
        let failed: Vec<&Stage> = a
            .stages
            .iter()
            .filter(|s| !matches!(s.status, Status::Pass | Status::Info))
            .collect();
        assert!(a.pass, "{failed:#?}");
        let b = verify_all(&sys, &VerifyOptions::default()).unwrap();
        assert_eq!(
            to_canonical_json(&a).unwrap(),
            to_canonical_json(&b).unwrap()
        );
    }
}
