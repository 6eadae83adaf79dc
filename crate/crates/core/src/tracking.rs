//! Reduced dynamics on a built manifold: the inertial form, the central
//! projection of off-manifold points, tracking verification and vertical leaves.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flow::{flow, integrate_pair};
use crate::interp::{Interpolation, Lattice};
use crate::manifold::{mat_vec, newton, Lifter, ManifoldGraph};
use crate::sample::{norm, sub};
use crate::synthesis::ConeField;
use crate::system::SystemSpec;

pub type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Source {
    /// Node values of `f` interpolated between nodes.
    Nodes(Vec<Vec<f64>>, Interpolation),
    /// Graph value recomputed off the lattice by a graph-transform solve.
    Lifted(Box<Lifter>),
    Synthetic(VectorField),
}

/// `ζ' = f(ζ)` with `f(ζ) = chart[A Φ(ζ) + B F(C Φ(ζ)) + W(q)]`.
#[derive(Clone)]
pub struct InertialForm {
    pub name: String,
    pub lattice: Lattice,
    source: Source,
    /// Graph used to lift reduced points back to the full state.
    manifold: Option<Box<ManifoldGraph>>,
}

impl std::fmt::Debug for InertialForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.source {
            Source::Nodes(_, mode) => format!("nodes/{mode:?}"),
            Source::Lifted(l) => format!("lifted/{}", l.t_lift),
            Source::Synthetic(_) => "synthetic".into(),
        };
        f.debug_struct("InertialForm")
            .field("name", &self.name)
            .field("lattice", &self.lattice)
            .field("kind", &kind)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormEvaluation {
    /// Interpolate node values of `f` (linear or cubic per the manifold).
    Nodes,
    /// Recompute the graph off the lattice (autonomous systems only).
    #[default]
    Lifted,
}

impl InertialForm {
    /// An analytic reduced field on the box `center ± radius`.
    pub fn synthetic(name: &str, center: Vec<f64>, radius: f64, f: VectorField) -> Result<Self> {
        Ok(InertialForm {
            name: name.into(),
            lattice: Lattice::new(center, radius, 3)?,
            source: Source::Synthetic(f),
            manifold: None,
        })
    }

    pub fn j(&self) -> usize {
        self.lattice.dim()
    }

    pub fn manifold(&self) -> Option<&ManifoldGraph> {
        self.manifold.as_deref()
    }

    pub fn eval(&self, zeta: &[f64]) -> Result<Vec<f64>> {
        match &self.source {
            Source::Nodes(values, mode) => Ok(self.lattice.interpolate(values, zeta, *mode)),
            Source::Lifted(l) => {
                let v = l.value(zeta)?;
                let m = l.graph();
                Ok(m.coords(&l.system().rhs_vec(&m.q, &v)))
            }
            Source::Synthetic(f) => Ok(f(zeta)),
        }
    }

    /// Full state over a reduced point.
    pub fn lift(&self, zeta: &[f64]) -> Result<Vec<f64>> {
        match (&self.source, &self.manifold) {
            (Source::Lifted(l), _) => l.value(zeta),
            (_, Some(m)) => Ok(m.eval(zeta)),
            (_, None) => Err(Error::pre("a synthetic form has no manifold to lift to")),
        }
    }
}

/// Node-wise `f`; `how` picks interpolation of node values or lifted evaluation.
pub fn extract_inertial_form(
    sys: &SystemSpec,
    cf: &ConeField,
    m: &ManifoldGraph,
    how: FormEvaluation,
    exec: Exec,
) -> Result<InertialForm> {
    if m.n() != sys.n() {
        return Err(Error::dim("manifold and system dimensions differ"));
    }
    let source = match how {
        FormEvaluation::Nodes => Source::Nodes(
            m.values
                .iter()
                .map(|v| m.coords(&sys.rhs_vec(&m.q, v)))
                .collect(),
            m.interpolation,
        ),
        FormEvaluation::Lifted => Source::Lifted(Box::new(Lifter::new(sys, cf, m, exec)?)),
    };
    Ok(InertialForm {
        name: sys.name.clone(),
        lattice: m.lattice.clone(),
        source,
        manifold: Some(Box::new(m.clone())),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl ReducedTrajectory {
    pub fn last(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has its initial point")
    }
}

/// RK4 on `f` over signed duration `t`; leaving the box is an error.
pub fn integrate_reduced(
    form: &InertialForm,
    zeta0: &[f64],
    t: f64,
    h: f64,
) -> Result<ReducedTrajectory> {
    if zeta0.len() != form.j() {
        return Err(Error::dim(format!(
            "reduced state has {} entries, form has j = {}",
            zeta0.len(),
            form.j()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::pre(format!("step must be positive, got {h}")));
    }
    if !form.lattice.contains(zeta0, 0.0) {
        return Err(Error::LeftGrid { time: 0.0 });
    }
    let (steps, dt) = crate::flow::step_plan(t, h);
    let j = zeta0.len();
    let axpy =
        |x: &[f64], a: f64, k: &[f64]| -> Vec<f64> { (0..j).map(|i| x[i] + a * k[i]).collect() };
    let mut x = zeta0.to_vec();
    let mut out = ReducedTrajectory {
        times: vec![0.0],
        states: vec![x.clone()],
    };
    for s in 0..steps {
        let time = (s + 1) as f64 * dt;
        let k1 = form.eval(&x)?;
        let k2 = form.eval(&axpy(&x, 0.5 * dt, &k1))?;
        let k3 = form.eval(&axpy(&x, 0.5 * dt, &k2))?;
        let k4 = form.eval(&axpy(&x, dt, &k3))?;
        for i in 0..j {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { time });
        }
        if !form.lattice.contains(&x, 0.0) {
            return Err(Error::LeftGrid { time });
        }
        out.times.push(time);
        out.states.push(x.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Semiconjugacy {
    pub zeta0: Vec<f64>,
    pub horizon: f64,
    pub h_reduced: f64,
    /// `max_k |chart ψ^{t_k}(Φ(ζ0)) - ζ(t_k)|` over the sample times.
    pub max_residual: f64,
    /// `|φ^{1}(φ^{-1}(ζ0)) - ζ0|`.
    pub backward_forward: f64,
    /// `(t, reduced ζ, projected full ζ)` rows.
    #[serde(skip)]
    pub samples: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

/// Compares the reduced flow with the chart of the full flow from the lifted
/// point at `samples` evenly spaced times, and checks the backward-forward
/// identity over unit time.
pub fn semiconjugacy(
    sys: &SystemSpec,
    form: &InertialForm,
    zeta0: &[f64],
    t: f64,
    h_reduced: f64,
    samples: usize,
) -> Result<Semiconjugacy> {
    let m = form
        .manifold()
        .ok_or_else(|| Error::pre("semiconjugacy needs a manifold-backed form"))?;
    let steps = (t / h_reduced).round().max(1.0) as usize;
    let h_reduced = t / steps as f64;
    let red = integrate_reduced(form, zeta0, t, h_reduced)?;
    let stride = (steps / samples.max(1)).max(1);
    let idx: Vec<usize> = (stride..=steps).step_by(stride).collect();
    let times: Vec<f64> = idx.iter().map(|&k| red.times[k]).collect();
    let q0 = vec![0.0; sys.forcing.driving_dim()];
    let full = crate::flow::flow_samples(sys, &q0, &form.lift(zeta0)?, &times, m.h)?;
    let rows: Vec<(f64, Vec<f64>, Vec<f64>)> = idx
        .iter()
        .zip(&full)
        .map(|(&k, v)| (red.times[k], red.states[k].clone(), m.coords(v)))
        .collect();
    let max_residual = rows
        .iter()
        .map(|(_, a, b)| norm(&sub(a, b)))
        .fold(0.0, f64::max);
    let back = integrate_reduced(form, zeta0, -1.0, h_reduced)?;
    let fwd = integrate_reduced(form, back.last(), 1.0, h_reduced)?;
    Ok(Semiconjugacy {
        zeta0: zeta0.to_vec(),
        horizon: t,
        h_reduced,
        max_residual,
        backward_forward: norm(&sub(fwd.last(), zeta0)),
        samples: rows,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct TrackingOptions {
    /// θ values in units of `1/ν0`; default `2, 4, …, 40`.
    pub schedule_step: f64,
    pub schedule_len: usize,
    pub tol: f64,
    /// Step of the reduced integration.
    pub h_reduced: f64,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        TrackingOptions {
            schedule_step: 2.0,
            schedule_len: 20,
            tol: 1e-8,
            h_reduced: 0.01,
        }
    }
}

impl TrackingOptions {
    pub fn schedule(&self, nu0: f64) -> Vec<f64> {
        (1..=self.schedule_len)
            .map(|k| k as f64 * self.schedule_step / nu0.abs().max(1e-12))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackingResult {
    pub v0: Vec<f64>,
    pub v0_star: Vec<f64>,
    pub zeta_star: Vec<f64>,
    /// `(θ, |v*_θ - v*_{θ_prev}|)`; the first entry has no predecessor.
    pub residuals: Vec<(f64, Option<f64>)>,
    pub converged: bool,
}

/// `v0 ↦ v0*`: flow forward for θ, chart the end point, run the inertial form
/// back for θ and lift; repeated along the schedule until successive lifts agree.
pub fn central_project(
    sys: &SystemSpec,
    form: &InertialForm,
    v0: &[f64],
    schedule: &[f64],
    opts: &TrackingOptions,
) -> Result<TrackingResult> {
    let m = form
        .manifold()
        .ok_or_else(|| Error::pre("central projection needs a form extracted from a manifold"))?;
    if !sys.forcing.is_autonomous() {
        return Err(Error::pre(
            "central projection is implemented for autonomous systems",
        ));
    }
    let mut residuals = Vec::new();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for &theta in schedule {
        let end = flow(sys, &m.q, v0, theta, m.h)?;
        let zeta = m.coords(&end);
        if !m.lattice.contains(&zeta, 0.0) {
            return Err(Error::LeftGrid { time: theta });
        }
        let back = integrate_reduced(form, &zeta, -theta, opts.h_reduced)?;
        let zeta_star = back.last().to_vec();
        let v_star = form.lift(&zeta_star)?;
        let change = prev.as_ref().map(|(v, _)| norm(&sub(v, &v_star)));
        residuals.push((theta, change));
        // v*_θ lies on the graph, so agreeing with v0 means v0 is its own projection
        let fixed = norm(&sub(v0, &v_star)) < opts.tol;
        if fixed || change.is_some_and(|c| c < opts.tol) {
            return Ok(TrackingResult {
                v0: v0.to_vec(),
                v0_star: v_star,
                zeta_star,
                residuals,
                converged: true,
            });
        }
        prev = Some((v_star, zeta_star));
    }
    let last = residuals.last().and_then(|r| r.1).unwrap_or(f64::NAN);
    Err(Error::NotConverged(format!(
        "central projection: successive lifts still differ by {last:.3e} at the end of the schedule"
    )))
}

/// Least-squares slope of `log y` against `t`.
pub fn log_slope(t: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&a, &b)| (a, b.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackingReport {
    pub degenerate: bool,
    pub slope: Option<f64>,
    pub threshold: f64,
    pub initial_distance: f64,
    /// Distance of `v0` from the graph along the chart fibre.
    pub manifold_distance: f64,
    /// `sup_t |Δ(t)| e^{ν0 t} / dist(v0, 𝔄)`.
    pub empirical_prefactor: f64,
    /// `(1 + L(𝔄)) max(1, ‖Π‖) / (1 - κ0)`, a reference value.
    pub formula_prefactor: f64,
    pub pass: bool,
}

/// Integrates `v0` and `v0*` for `t`, fits the decay rate of their difference on
/// `[t/4, 3t/4]` and compares it with `-0.85 ν0`.
pub fn verify_tracking(
    sys: &SystemSpec,
    cf: &ConeField,
    m: &ManifoldGraph,
    result: &TrackingResult,
    t: f64,
    h: f64,
) -> Result<TrackingReport> {
    let q0 = vec![0.0; sys.forcing.driving_dim()];
    let (times, deltas) = integrate_pair(sys, &q0, &result.v0, &result.v0_star, t, h)?;
    let norms: Vec<f64> = deltas.iter().map(|d| norm(d)).collect();
    let initial = norms[0];
    let threshold = -0.85 * cf.nu0;
    let manifold_distance = m.fibre_distance(&result.v0);
    let kappa = cf.kappa0.unwrap_or(0.0).min(0.99);
    let formula_prefactor = (1.0 + m.lipschitz_est) * cf.m_pi.max(1.0) / (1.0 - kappa);
    let scale = 1.0 + norm(&result.v0);
    if initial <= 1e-8 * scale {
        return Ok(TrackingReport {
            degenerate: true,
            slope: None,
            threshold,
            initial_distance: initial,
            manifold_distance,
            empirical_prefactor: 0.0,
            formula_prefactor,
            pass: true,
        });
    }
    let floor = 1e-13 * scale;
    let (wt, wy): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&norms)
        .filter(|(&tt, &y)| tt >= 0.25 * t && tt <= 0.75 * t && y > floor)
        .map(|(&a, &b)| (a, b))
        .unzip();
    let slope = log_slope(&wt, &wy);
    let empirical_prefactor = times
        .iter()
        .zip(&norms)
        .map(|(tt, y)| y * (cf.nu0 * tt).exp())
        .fold(0.0, f64::max)
        / manifold_distance.max(f64::MIN_POSITIVE);
    Ok(TrackingReport {
        degenerate: false,
        slope,
        threshold,
        initial_distance: initial,
        manifold_distance,
        empirical_prefactor,
        formula_prefactor,
        pass: slope.is_some_and(|s| s <= threshold),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LeafPoint {
    pub zeta_plus: Vec<f64>,
    pub point: Vec<f64>,
    /// `min_t V(ψᵗ(point) - ψᵗ(v0*))`, non-negative up to quadrature noise.
    pub min_v: f64,
    pub positive: bool,
}

/// Points of the vertical leaf through `v0_star`: for each `ζ⁺`, the 𝔼⁻
/// offset is found by Newton so that the chart coordinates of the forward
/// orbits agree at time `horizon`, which pins the point to the leaf.
pub fn sample_vertical_leaf(
    sys: &SystemSpec,
    cf: &ConeField,
    v0_star: &[f64],
    zeta_plus: &[Vec<f64>],
    horizon: f64,
    h: f64,
    exec: Exec,
) -> Result<Vec<LeafPoint>> {
    let n = sys.n();
    let j = cf.j;
    if j > 2 || n - j > 3 {
        return Err(Error::pre(format!(
            "leaf sampling needs j <= 2 and n - j <= 3, got j = {j}, n = {n}"
        )));
    }
    let q0 = vec![0.0; sys.forcing.driving_dim()];
    let end_star = flow(sys, &q0, v0_star, horizon, h)?;
    exec.try_map(zeta_plus.len(), |node| -> Result<LeafPoint> {
        let zp = &zeta_plus[node];
        if zp.len() != n - j {
            return Err(Error::dim(format!("𝔼⁺ coordinates need {} entries", n - j)));
        }
        let base: Vec<f64> = mat_vec(&cf.e_plus, zp)
            .iter()
            .zip(v0_star)
            .map(|(a, b)| a + b)
            .collect();
        let candidate =
            |zm: &[f64]| -> Vec<f64> { base.iter().zip(cf.lift(zm)).map(|(a, b)| a + b).collect() };
        let point = if j == 0 {
            base.clone()
        } else {
            let tol = 1e-11 * (1.0 + norm(&end_star));
            newton(
                |zm| {
                    let end = flow(sys, &q0, &candidate(zm), horizon, h)?;
                    Ok((cf.chart(&sub(&end, &end_star)), Vec::new()))
                },
                vec![0.0; j],
                tol,
                node,
            )
            .map(|(zm, _)| candidate(&zm))?
        };
        let (_, deltas) = integrate_pair(sys, &q0, &point, v0_star, horizon, h)?;
        let eps = 1e-9 * cf.m_p * norm(&deltas[0]).powi(2);
        let min_v = deltas.iter().map(|d| cf.v(d)).fold(f64::INFINITY, f64::min);
        Ok(LeafPoint {
            zeta_plus: zp.clone(),
            point,
            min_v,
            positive: min_v >= -eps,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_manifold, BuildOptions};
    use crate::synthesis::{synthesize_p, SynthesisOptions};
    use crate::system::fixture;

    fn lin2() -> (SystemSpec, ConeField, ManifoldGraph) {
        let sys = fixture("SYS-LIN2").unwrap();
        let cf = synthesize_p(&sys, 1.0, &SynthesisOptions::default()).unwrap();
        let m = build_manifold(&sys, &cf, &[], &BuildOptions::default()).unwrap();
        (sys, cf, m)
    }

    #[test]
    fn lin2_reduced_field_is_the_unstable_eigenvalue() {
        let (sys, cf, m) = lin2();
        let form =
            extract_inertial_form(&sys, &cf, &m, FormEvaluation::Nodes, Exec::Sequential).unwrap();
        for z in [-3.3, 0.0, 1.7] {
            assert!((form.eval(&[z]).unwrap()[0] - z).abs() < 1e-9);
        }
        let traj = integrate_reduced(&form, &[1.0], 1.0, 1e-3).unwrap();
        assert!((traj.last()[0] - std::f64::consts::E).abs() < 1e-9);
        let back = integrate_reduced(&form, traj.last(), -1.0, 1e-3).unwrap();
        assert!((back.last()[0] - 1.0).abs() < 1e-6);
        assert!(matches!(
            integrate_reduced(&form, &[4.0], 1.0, 1e-3),
            Err(Error::LeftGrid { .. })
        ));
    }

    #[test]
    fn lin2_central_projection_and_tracking() {
        let (sys, cf, m) = lin2();
        let form =
            extract_inertial_form(&sys, &cf, &m, FormEvaluation::Lifted, Exec::Sequential).unwrap();
        let opts = TrackingOptions::default();
        let res = central_project(&sys, &form, &[0.0, 1.0], &opts.schedule(1.0), &opts).unwrap();
        assert!(norm(&res.v0_star) < 1e-8, "{:?}", res.v0_star);
        let rep = verify_tracking(&sys, &cf, &m, &res, 4.0, 1e-3).unwrap();
        assert!((rep.slope.unwrap() + 3.0).abs() < 1e-3, "{rep:?}");
        assert!(rep.pass);

        let on = m.values[11].clone();
        let res = central_project(&sys, &form, &on, &opts.schedule(1.0), &opts).unwrap();
        assert!(norm(&sub(&res.v0_star, &on)) < 1e-8);
        assert_eq!(res.residuals.len(), 1);
        assert!(
            verify_tracking(&sys, &cf, &m, &res, 4.0, 1e-3)
                .unwrap()
                .degenerate
        );

        assert!(matches!(
            central_project(&sys, &form, &[100.0, 0.0], &opts.schedule(1.0), &opts),
            Err(Error::LeftGrid { .. })
        ));
    }

    #[test]
    fn lin2_vertical_leaf_is_the_stable_axis() {
        let (sys, cf, _) = lin2();
        let grid: Vec<Vec<f64>> = [-1.0, 0.0, 0.5, 2.0].iter().map(|&z| vec![z]).collect();
        let leaf = sample_vertical_leaf(&sys, &cf, &[0.0, 0.0], &grid, 4.0, 1e-3, Exec::Sequential)
            .unwrap();
        for p in &leaf {
            assert!(p.point[0].abs() < 1e-9 && p.positive);
            assert!((p.point[1].abs() - p.zeta_plus[0].abs()).abs() < 1e-12);
        }
        assert_eq!(leaf[1].point, vec![0.0, 0.0]);
    }

    #[test]
    fn slope_fit_recovers_exponent() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|s| 3.0 * (-1.7 * s).exp()).collect();
        assert!((log_slope(&t, &y).unwrap() + 1.7).abs() < 1e-12);
        assert!(log_slope(&t[..2], &y[..2]).is_none());
    }
}
