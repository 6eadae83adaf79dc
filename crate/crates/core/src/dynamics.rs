//! Low-dimensional dynamics: ω-limit classification on the reduced system,
//! Poincaré maps of periodically forced systems, convergence and contraction
//! checks, stability transfer and the robustness sweep.

use rand::Rng;
use serde::Serialize;

use crate::conditions::check_frequency;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flow::{drive, flow, integrate, integrate_pair};
use crate::linalg::{solve_real, RealMatrix};
use crate::manifold::{build_manifold, sup_distance, BuildOptions, ManifoldGraph};
use crate::sample::{ball_point, item_rng, norm, sub};
use crate::synthesis::ConeField;
use crate::system::{ForcingConfig, NonlinKind, SystemSpec};
use crate::tracking::{integrate_reduced, log_slope, InertialForm};

/// Near-return threshold in reduced coordinates.
pub const RETURN_TOL: f64 = 1e-3;
const STATIONARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Stationary {
        point: Vec<f64>,
    },
    Periodic {
        period: f64,
        point: Vec<f64>,
        /// `|φ^period(point) - point|` after refinement.
        return_residual: f64,
    },
    Other,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitClassification {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub transient: f64,
    pub observed: f64,
    pub h: f64,
    /// `max |f|` over the observation window.
    pub max_speed: f64,
    /// Closest transversal return found during observation, if any.
    pub near_return: Option<f64>,
    /// Observation-window samples, for plotting.
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Integrates past the transient, then reports a stationary point (small speed
/// over the whole window), a periodic orbit (near return refined by single
/// shooting) or "other". One-dimensional forms are never periodic.
pub fn classify_omega_limit(
    form: &InertialForm,
    zeta0: &[f64],
    t_transient: f64,
    t_obs: f64,
    h: f64,
) -> Result<OrbitClassification> {
    let start = integrate_reduced(form, zeta0, t_transient, h)?
        .last()
        .to_vec();
    let obs = integrate_reduced(form, &start, t_obs, h)?;
    let speeds: Vec<Vec<f64>> = obs
        .states
        .iter()
        .map(|z| form.eval(z))
        .collect::<Result<_>>()?;
    let max_speed = speeds.iter().map(|f| norm(f)).fold(0.0, f64::max);
    let mut out = OrbitClassification {
        verdict: Verdict::Other,
        transient: t_transient,
        observed: t_obs,
        h,
        max_speed,
        near_return: None,
        samples: obs.states.clone(),
    };
    if max_speed <= STATIONARY_TOL {
        let point = polish_equilibrium(form, obs.last())?;
        out.verdict = Verdict::Stationary { point };
        return Ok(out);
    }
    if form.j() < 2 {
        return Ok(out);
    }
    let x_r = &obs.states[0];
    let f_r = &speeds[0];
    // leave the neighbourhood first, then look for the closest transversal return
    let min_gap = 10.0 * h;
    let mut left = false;
    let mut best: Option<(usize, f64)> = None;
    for k in 1..obs.states.len() {
        let d = sub(&obs.states[k], x_r);
        if !left {
            left = norm(&d) > 10.0 * RETURN_TOL && obs.times[k] > min_gap;
            continue;
        }
        let fk = &speeds[k];
        let s = -dot(&d, fk) / dot(fk, fk).max(f64::MIN_POSITIVE);
        if s.abs() > h {
            continue;
        }
        let transversal: Vec<f64> = d.iter().zip(fk).map(|(a, b)| a + s * b).collect();
        let dist = norm(&transversal);
        if best.is_none_or(|b| dist < b.1) {
            best = Some((k, dist));
        }
        if dist < RETURN_TOL {
            break;
        }
    }
    out.near_return = best.map(|b| b.1);
    let Some((k, dist)) = best else {
        return Ok(out);
    };
    if dist >= RETURN_TOL {
        return Ok(out);
    }
    let d = sub(&obs.states[k], x_r);
    let period0 = obs.times[k] - dot(&d, &speeds[k]) / dot(&speeds[k], &speeds[k]);
    if let Some((period, point, residual)) = shoot_periodic(form, x_r, f_r, period0, h)? {
        if residual <= 1e-5 && period > 10.0 * h {
            out.verdict = Verdict::Periodic {
                period,
                point,
                return_residual: residual,
            };
        }
    }
    Ok(out)
}

fn polish_equilibrium(form: &InertialForm, guess: &[f64]) -> Result<Vec<f64>> {
    let j = guess.len();
    let mut x = guess.to_vec();
    for _ in 0..20 {
        let f = form.eval(&x)?;
        if norm(&f) <= 1e-13 {
            break;
        }
        let mut jac = RealMatrix::zeros(j, j);
        for c in 0..j {
            let step = 1e-7 * (1.0 + x[c].abs());
            let mut xp = x.clone();
            xp[c] += step;
            let fp = form.eval(&xp)?;
            for r in 0..j {
                jac[(r, c)] = (fp[r] - f[r]) / step;
            }
        }
        let Ok(dx) = solve_real(&jac, &RealMatrix::from_column_slice(j, 1, &f)) else {
            break;
        };
        let next: Vec<f64> = (0..j).map(|i| x[i] - dx[(i, 0)]).collect();
        if norm(&form.eval(&next)?) >= norm(&f) {
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Newton on `(ζ, T)` for `φ^T(ζ) = ζ` with the phase condition
/// `⟨ζ - x_r, f(x_r)⟩ = 0`. `None` when the iteration does not settle.
fn shoot_periodic(
    form: &InertialForm,
    x_r: &[f64],
    f_r: &[f64],
    period0: f64,
    h: f64,
) -> Result<Option<(f64, Vec<f64>, f64)>> {
    let j = x_r.len();
    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        let (z, t) = (&u[..j], u[j]);
        // a fixed step count keeps the map smooth in T
        let steps = (period0 / h).round().max(1.0);
        let end = integrate_reduced(form, z, t, t / steps)?.last().to_vec();
        let mut r = sub(&end, z);
        r.push(dot(&sub(z, x_r), f_r));
        Ok(r)
    };
    let mut u = x_r.to_vec();
    u.push(period0);
    let Ok(mut r) = residual(&u) else {
        return Ok(None);
    };
    for _ in 0..30 {
        if norm(&r[..j]) <= 1e-11 {
            break;
        }
        let mut jac = RealMatrix::zeros(j + 1, j + 1);
        for c in 0..=j {
            let step = 1e-7 * (1.0 + u[c].abs());
            let mut up = u.clone();
            up[c] += step;
            let Ok(rp) = residual(&up) else {
                return Ok(None);
            };
            for row in 0..=j {
                jac[(row, c)] = (rp[row] - r[row]) / step;
            }
        }
        let Ok(du) = solve_real(&jac, &RealMatrix::from_column_slice(j + 1, 1, &r)) else {
            return Ok(None);
        };
        let next: Vec<f64> = (0..=j).map(|i| u[i] - du[(i, 0)]).collect();
        if !(next[j] > 0.0) {
            return Ok(None);
        }
        let Ok(rn) = residual(&next) else {
            return Ok(None);
        };
        if norm(&rn) >= norm(&r) && norm(&r[..j]) > 1e-9 {
            return Ok(None);
        }
        u = next;
        r = rn;
    }
    let res = norm(&r[..j]);
    Ok((res <= 1e-8).then(|| (u[j], u[..j].to_vec(), res)))
}

#[derive(Debug, Clone, Serialize)]
pub struct PoincareReport {
    pub period: f64,
    pub iterates: Vec<f64>,
    /// Consecutive differences keep one sign after the first quarter.
    pub monotone: bool,
    /// `|P(ζ_k) - ζ_k|` for the last iterate.
    pub last_step: f64,
    /// Derivative estimate of the map at the last iterate (a Floquet-style multiplier).
    pub multiplier: f64,
}

fn time_sigma_map(sys: &SystemSpec, m: &ManifoldGraph, sigma: f64, zeta: f64) -> Result<f64> {
    if !m.lattice.contains(&[zeta], 0.0) {
        return Err(Error::LeftGrid { time: 0.0 });
    }
    let end = flow(sys, &m.q, &m.eval(&[zeta]), sigma, m.h)?;
    Ok(m.coords(&end)[0])
}

/// Iterates `ζ ↦ chart ψ^σ(q, Φ(ζ))` on a one-dimensional graph over a
/// σ-periodic driving state.
pub fn poincare_map(
    sys: &SystemSpec,
    m: &ManifoldGraph,
    sigma: f64,
    zeta0: f64,
    k: usize,
) -> Result<PoincareReport> {
    if m.j() != 1 {
        return Err(Error::pre(format!(
            "the Poincaré map is implemented for j = 1, got {}",
            m.j()
        )));
    }
    match (&sys.forcing.config, sys.forcing.period()) {
        (ForcingConfig::None, _) => {}
        (_, Some(p))
            if ((sigma / p).round() * p - sigma).abs() <= 1e-12 * sigma.max(1.0) && sigma > 0.0 => {
        }
        _ => {
            return Err(Error::pre(format!(
                "σ = {sigma} is not a multiple of the forcing period"
            )))
        }
    }
    let mut iterates = vec![zeta0];
    for step in 0..k {
        let next = time_sigma_map(sys, m, sigma, iterates[step]).map_err(|e| match e {
            Error::LeftGrid { .. } => Error::LeftGrid {
                time: step as f64 * sigma,
            },
            other => other,
        })?;
        iterates.push(next);
    }
    let diffs: Vec<f64> = iterates.windows(2).map(|w| w[1] - w[0]).collect();
    let floor = 1e-12 * (1.0 + zeta0.abs());
    let tail: Vec<f64> = diffs[diffs.len() / 4..]
        .iter()
        .copied()
        .filter(|d| d.abs() > floor)
        .collect();
    let monotone = tail
        .iter()
        .all(|d| d.signum() == tail.first().map_or(1.0, |f| f.signum()));
    let last = *iterates.last().expect("nonempty");
    let step = 1e-6 * (1.0 + last.abs());
    let multiplier = if m.lattice.contains(&[last + step], 0.0) {
        (time_sigma_map(sys, m, sigma, last + step)? - time_sigma_map(sys, m, sigma, last)?) / step
    } else {
        f64::NAN
    };
    Ok(PoincareReport {
        period: sigma,
        last_step: diffs.last().map_or(0.0, |d| d.abs()),
        iterates,
        monotone,
        multiplier,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicConvergence {
    pub period: f64,
    pub initial_gap: f64,
    /// `max |v(t + σ) - v(t)|` over the last ten periods.
    pub tail_gap: f64,
    pub converged: bool,
}

/// `|v(t + σ) - v(t)| → 0`: the gap over the last ten periods must fall below
/// `1e-4` of the initial one.
pub fn check_convergence_periodic(
    sys: &SystemSpec,
    cf: &ConeField,
    v0: &[f64],
    sigma: f64,
    t: f64,
    h: f64,
) -> Result<PeriodicConvergence> {
    if cf.j > 1 {
        return Err(Error::pre(format!(
            "periodic convergence needs j <= 1, got {}",
            cf.j
        )));
    }
    if sys.forcing.period().is_none() {
        return Err(Error::pre("periodic convergence needs periodic forcing"));
    }
    if t < 11.0 * sigma {
        return Err(Error::pre("the horizon must cover at least eleven periods"));
    }
    let q0 = vec![0.0; sys.forcing.driving_dim()];
    // a whole number of steps per period keeps the lag exact
    let h = sigma / (sigma / h).ceil();
    let traj = integrate(sys, &q0, v0, t, h).map_err(|e| match e {
        Error::NonFinite { time } => Error::Unbounded {
            norm: f64::INFINITY,
            time,
        },
        other => other,
    })?;
    if let Some((k, s)) = traj.states.iter().enumerate().find(|(_, s)| norm(s) > 1e6) {
        return Err(Error::Unbounded {
            norm: norm(s),
            time: traj.times[k],
        });
    }
    let lag = (sigma / traj.h).round() as usize;
    let gaps: Vec<f64> = (0..traj.states.len() - lag)
        .map(|k| norm(&sub(&traj.states[k + lag], &traj.states[k])))
        .collect();
    let initial_gap = gaps[0];
    let tail_from = gaps.len().saturating_sub(10 * lag);
    let tail_gap = gaps[tail_from..].iter().copied().fold(0.0, f64::max);
    let scale = 1.0 + norm(v0);
    let converged = initial_gap <= 1e-12 * scale || tail_gap <= 1e-4 * initial_gap;
    Ok(PeriodicConvergence {
        period: sigma,
        initial_gap,
        tail_gap,
        converged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ApStabilityReport {
    pub samples: usize,
    pub skipped: usize,
    pub worst_exponent: f64,
    pub threshold: f64,
    /// Largest `|Δ(T)| / |Δ(0)|` over all pairs.
    pub worst_final_ratio: f64,
    pub pass: bool,
}

/// Contraction for a `j = 0` certificate over a quasiperiodic driving torus:
/// random driving phases and pairs, fitted exponents `<= -0.85 ν0`.
pub fn check_ap_stability(
    sys: &SystemSpec,
    cf: &ConeField,
    q_samples: usize,
    pairs: usize,
    t: f64,
    h: f64,
    seed: u64,
    exec: Exec,
) -> Result<ApStabilityReport> {
    if cf.j != 0 {
        return Err(Error::pre(format!(
            "almost periodic stability needs j = 0, got {}",
            cf.j
        )));
    }
    let d = sys.forcing.driving_dim();
    let radius = sys.hints.ball_radius.unwrap_or(5.0);
    let n = sys.n();
    let fits = exec.try_map(q_samples * pairs, |i| -> Result<Option<(f64, f64)>> {
        let mut rng = item_rng(seed, i);
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let v1 = ball_point(&mut rng, n, radius);
        let v2 = if i % pairs == 0 {
            v1.clone()
        } else {
            ball_point(&mut rng, n, radius)
        };
        let (times, deltas) = integrate_pair(sys, &q, &v1, &v2, t, h)?;
        let norms: Vec<f64> = deltas.iter().map(|x| norm(x)).collect();
        if norms[0] == 0.0 {
            return Ok(None);
        }
        let floor = 1e-13 * (1.0 + norm(&v1));
        let (wt, wy): (Vec<f64>, Vec<f64>) = times
            .iter()
            .zip(&norms)
            .filter(|(&tt, &y)| tt >= 0.25 * t && tt <= 0.75 * t && y > floor)
            .map(|(&a, &b)| (a, b))
            .unzip();
        let slope = log_slope(&wt, &wy).unwrap_or(f64::NEG_INFINITY);
        Ok(Some((
            slope,
            norms.last().copied().unwrap_or(0.0) / norms[0],
        )))
    })?;
    let threshold = -0.85 * cf.nu0;
    let done: Vec<(f64, f64)> = fits.iter().flatten().copied().collect();
    let worst_exponent = done.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max);
    let worst_final_ratio = done.iter().map(|f| f.1).fold(0.0, f64::max);
    Ok(ApStabilityReport {
        samples: fits.len(),
        skipped: fits.len() - done.len(),
        worst_exponent,
        threshold,
        worst_final_ratio,
        pass: !done.is_empty() && worst_exponent <= threshold && worst_final_ratio < 1.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferReport {
    pub probes: usize,
    pub delta: f64,
    pub horizon: f64,
    /// Largest final distance to the orbit set from probes on the manifold.
    pub on_manifold: f64,
    /// Same from probes in the full δ-ball.
    pub off_manifold: f64,
    /// Largest excess of an off-manifold probe over its tracked partner,
    /// relative to the tracking bound for that pair.
    pub worst_pair_excess: f64,
    pub on_diverged: bool,
    pub off_diverged: bool,
    pub transfers: bool,
    pub consistent: bool,
}

/// Compares how probes near a stationary point or periodic orbit behave on
/// the manifold and in the full phase space. Every off-manifold probe is
/// paired with its central projection; it must end no farther from the orbit
/// set than that partner plus the tracking bound.
#[allow(clippy::too_many_arguments)]
pub fn stability_transfer_check(
    sys: &SystemSpec,
    cf: &ConeField,
    form: &InertialForm,
    orbit: &OrbitClassification,
    delta: f64,
    probes: usize,
    t: f64,
    seed: u64,
    exec: Exec,
) -> Result<TransferReport> {
    let m = form
        .manifold()
        .ok_or_else(|| Error::pre("stability transfer needs a manifold-backed form"))?;
    if !sys.forcing.is_autonomous() {
        return Err(Error::pre("stability transfer pairs probes by central projection, which needs an autonomous system"));
    }
    let reduced_set: Vec<Vec<f64>> = match &orbit.verdict {
        Verdict::Stationary { point } => vec![point.clone()],
        Verdict::Periodic { point, period, .. } => {
            let tr = integrate_reduced(form, point, *period, orbit.h)?;
            tr.states.into_iter().step_by(5).collect()
        }
        Verdict::Other => {
            return Err(Error::pre(
                "stability transfer needs a stationary or periodic verdict",
            ))
        }
    };
    let set: Vec<Vec<f64>> = reduced_set
        .iter()
        .map(|z| form.lift(z))
        .collect::<Result<_>>()?;
    let centre = set[0].clone();
    let dist_to_set = |v: &[f64]| {
        set.iter()
            .map(|s| norm(&sub(v, s)))
            .fold(f64::INFINITY, f64::min)
    };
    let settle = |start: &[f64]| -> Result<Option<Vec<f64>>> {
        match flow(sys, &[], start, t, m.h) {
            Ok(end) if end.iter().all(|x| x.is_finite()) && norm(&end) < 1e12 => Ok(Some(end)),
            Ok(_) | Err(Error::NonFinite { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let n = sys.n();
    let j = m.j();
    let kappa = cf.kappa0.unwrap_or(0.0).min(0.99);
    let constant = (1.0 + m.lipschitz_est) * cf.m_pi.max(1.0) / (1.0 - kappa);
    let decay = (-0.85 * cf.nu0 * t).exp();
    let topts = crate::tracking::TrackingOptions::default();
    let schedule = topts.schedule(cf.nu0);
    // (on-manifold final distance, off-manifold final distance, pair excess)
    let rows = exec.try_map(probes, |i| -> Result<(f64, f64, f64)> {
        let mut rng = item_rng(seed, i);
        let dz = ball_point(&mut rng, j, delta);
        let z: Vec<f64> = reduced_set[0].iter().zip(&dz).map(|(a, b)| a + b).collect();
        let on = settle(&form.lift(&z)?)?.map_or(f64::INFINITY, |e| dist_to_set(&e));
        let dv = ball_point(&mut rng, n, delta);
        let v: Vec<f64> = centre.iter().zip(&dv).map(|(a, b)| a + b).collect();
        let off_end = settle(&v)?;
        let off = off_end.as_ref().map_or(f64::INFINITY, |e| dist_to_set(e));
        let partner = match crate::tracking::central_project(sys, form, &v, &schedule, &topts) {
            Ok(r) => r.v0_star,
            // outside the basin of the grid: nothing to pair against
            Err(Error::LeftGrid { .. }) | Err(Error::NotConverged(_)) => return Ok((on, off, 0.0)),
            Err(e) => return Err(e),
        };
        let excess = match (off_end, settle(&partner)?) {
            (Some(_), Some(b)) => {
                // the partner is only known to the projection tolerance
                let bound = constant * norm(&sub(&v, &partner)) * decay + 10.0 * topts.tol;
                (off - dist_to_set(&b) - bound).max(0.0) / bound.max(1e-12)
            }
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        Ok((on, off, excess))
    })?;
    let on_manifold = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let off_manifold = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let worst_pair_excess = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let on_diverged = on_manifold > delta;
    let off_diverged = off_manifold > delta;
    Ok(TransferReport {
        probes,
        delta,
        horizon: t,
        on_manifold,
        off_manifold,
        worst_pair_excess,
        on_diverged,
        off_diverged,
        transfers: worst_pair_excess <= 1e-6,
        consistent: on_diverged == off_diverged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessEntry {
    pub epsilon: f64,
    pub lambda: f64,
    pub frequency_margin: f64,
    pub distance: f64,
    pub ratio: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessReport {
    pub entries: Vec<RobustnessEntry>,
    pub decreasing: bool,
    /// `max ratio / min ratio` over positive ε.
    pub ratio_spread: f64,
    pub pass: bool,
}

/// Rebuilds the manifold for `F_ε = ε F / a` (`a` the fixture amplitude) and
/// measures the sup-node distance to the `ε = 0` manifold.
pub fn robustness_experiment(
    sys: &SystemSpec,
    cf: &ConeField,
    eps: &[f64],
    opts: &BuildOptions,
) -> Result<RobustnessReport> {
    if sys.nonlinearity.kind == NonlinKind::Zero || sys.nonlinearity.amplitude == 0.0 {
        return Err(Error::pre(
            "the ε knob scales the nonlinearity, which is zero here",
        ));
    }
    let amp = sys.nonlinearity.amplitude.abs();
    let q = vec![0.0; sys.forcing.driving_dim()];
    let base = build_manifold(&sys.with_scaled_nonlinearity(0.0), cf, &q, opts)?;
    let mut entries = Vec::with_capacity(eps.len());
    for &e in eps {
        let sys_e = sys.with_scaled_nonlinearity(e / amp);
        let lambda = sys_e.lambda();
        let freq = check_frequency(&sys_e, cf.nu0, lambda, opts.exec)?;
        if lambda > cf.lambda * (1.0 + 1e-12) || !freq.pass {
            return Err(Error::CertificateLostAtEpsilon {
                epsilon: e,
                reason: format!(
                    "Λ(ε) = {lambda} against certified {}; frequency margin {:.6}",
                    cf.lambda, freq.margin
                ),
            });
        }
        let (distance, converged) = if e == 0.0 {
            (0.0, base.converged)
        } else {
            let m = build_manifold(&sys_e, cf, &q, opts)?;
            (sup_distance(&m, &base)?, m.converged)
        };
        entries.push(RobustnessEntry {
            epsilon: e,
            lambda,
            frequency_margin: freq.margin,
            distance,
            ratio: (e != 0.0).then(|| distance / e.abs()),
            converged,
        });
    }
    let mut by_eps: Vec<&RobustnessEntry> = entries.iter().collect();
    by_eps.sort_by(|a, b| a.epsilon.abs().total_cmp(&b.epsilon.abs()));
    let decreasing = by_eps.windows(2).all(|w| w[0].distance <= w[1].distance);
    let ratios: Vec<f64> = entries.iter().filter_map(|e| e.ratio).collect();
    let ratio_spread = if ratios.is_empty() {
        1.0
    } else {
        ratios.iter().copied().fold(0.0, f64::max)
            / ratios.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(RobustnessReport {
        pass: decreasing && ratio_spread <= 3.0 && entries.iter().all(|e| e.converged),
        entries,
        decreasing,
        ratio_spread,
    })
}

/// Driving state after `t` from `q0`, exposed for reports.
pub fn driving_after(sys: &SystemSpec, q0: &[f64], t: f64) -> Vec<f64> {
    drive(&sys.forcing, q0, t)
}

/// `ζ' = (μ - |ζ|²) ζ + ω J ζ`, with the radial factor clamped for `|ζ| > 3`.
pub fn hopf_form(mu: f64, omega: f64, radius: f64) -> Result<InertialForm> {
    InertialForm::synthetic(
        "hopf",
        vec![0.0, 0.0],
        radius,
        std::sync::Arc::new(move |z: &[f64]| {
            let r2 = (z[0] * z[0] + z[1] * z[1]).min(9.0);
            let g = mu - r2;
            vec![g * z[0] - omega * z[1], g * z[1] + omega * z[0]]
        }),
    )
}

/// Linear spiral `ζ' = [[a, -b], [b, a]] ζ`.
pub fn spiral_form(a: f64, b: f64, radius: f64) -> Result<InertialForm> {
    InertialForm::synthetic(
        "spiral",
        vec![0.0, 0.0],
        radius,
        std::sync::Arc::new(move |z: &[f64]| vec![a * z[0] - b * z[1], b * z[0] + a * z[1]]),
    )
}

/// Hamiltonian cell flow of `H = sin x sin y` plus descent on `H²/2`: orbits
/// spiral out of the centre onto the heteroclinic cycle of the four corner
/// saddles of `[0, π]²`.
pub fn heteroclinic_form(mu: f64) -> Result<InertialForm> {
    use std::f64::consts::FRAC_PI_2;
    InertialForm::synthetic(
        "heteroclinic",
        vec![FRAC_PI_2, FRAC_PI_2],
        FRAC_PI_2 + 0.1,
        std::sync::Arc::new(move |z: &[f64]| {
            let (sx, cx, sy, cy) = (z[0].sin(), z[0].cos(), z[1].sin(), z[1].cos());
            let hh = sx * sy;
            vec![sx * cy - mu * hh * cx * sy, -cx * sy - mu * hh * sx * cy]
        }),
    )
}
