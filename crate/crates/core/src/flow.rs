//! Fixed-step RK4 integration of the cocycle, the driving flow and the
//! variational equation.

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::system::{Forcing, ForcingConfig, SystemSpec};

/// States beyond this norm are reported as a blow-up.
const BLOWUP: f64 = 1e150;

/// Driving state after time `t`.
pub fn drive(forcing: &Forcing, q0: &[f64], t: f64) -> Vec<f64> {
    match &forcing.config {
        ForcingConfig::None => q0.to_vec(),
        ForcingConfig::Periodic { period, .. } => {
            let q = q0.first().copied().unwrap_or(0.0);
            vec![(q + t).rem_euclid(*period)]
        }
        ForcingConfig::Quasiperiodic { frequencies, .. } => frequencies
            .iter()
            .enumerate()
            .map(|(k, w)| (q0.get(k).copied().unwrap_or(0.0) + w * t).rem_euclid(1.0))
            .collect(),
    }
}

/// Number of steps and effective step so that `steps * h_eff = |t|` exactly.
pub fn step_plan(t: f64, h: f64) -> (usize, f64) {
    if t == 0.0 {
        return (0, 0.0);
    }
    let steps = ((t.abs() / h) - 1e-9).ceil().max(1.0) as usize;
    (steps, t / steps as f64)
}

/// Classical RK4 from `t0` over signed duration `t`; `record` sees every grid point.
pub fn rk4<F, R>(mut f: F, x0: &[f64], t0: f64, t: f64, h: f64, mut record: R) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    R: FnMut(f64, &[f64]),
{
    let n = x0.len();
    let (steps, dt) = step_plan(t, h);
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    record(t0, &x);
    for s in 0..steps {
        let ts = t0 + s as f64 * dt;
        f(ts, &x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        f(ts + 0.5 * dt, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        f(ts + 0.5 * dt, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        f(ts + dt, &tmp, &mut k4);
        let mut norm2 = 0.0;
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            norm2 += x[i] * x[i];
        }
        let tn = t0 + (s + 1) as f64 * dt;
        if !norm2.is_finite() || norm2.sqrt() > BLOWUP {
            return Err(Error::NonFinite { time: tn });
        }
        record(tn, &x);
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub h: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub driving: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least its initial point")
    }

    pub fn csv_header(&self) -> Vec<String> {
        let n = self.states.first().map_or(0, Vec::len);
        let d = self.driving.first().map_or(0, Vec::len);
        let mut h = vec!["t".to_string()];
        h.extend((1..=n).map(|i| format!("v_{i}")));
        h.extend((1..=d).map(|i| format!("q_{i}")));
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.times
            .iter()
            .zip(&self.states)
            .zip(&self.driving)
            .map(|((t, v), q)| {
                let mut row = vec![*t];
                row.extend_from_slice(v);
                row.extend_from_slice(q);
                row
            })
            .collect()
    }
}

pub(crate) fn system_field<'a>(
    sys: &'a SystemSpec,
    q0: &'a [f64],
) -> impl FnMut(f64, &[f64], &mut [f64]) + 'a {
    let mut y = vec![0.0; sys.r()];
    move |t, v, out| {
        let q = drive(&sys.forcing, q0, t);
        sys.rhs(&q, v, out, &mut y);
    }
}

fn check_inputs(sys: &SystemSpec, v0: &[f64], t: f64, h: f64) -> Result<()> {
    if v0.len() != sys.n() {
        return Err(Error::dim(format!(
            "initial state has {} entries, system has n = {}",
            v0.len(),
            sys.n()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::pre(format!("step must be positive, got {h}")));
    }
    if !(t >= 0.0) {
        return Err(Error::pre(format!(
            "the full system is integrated forward only, got T = {t}"
        )));
    }
    Ok(())
}

/// `ψ^T(q0, v0)` recorded on the uniform grid.
pub fn integrate(sys: &SystemSpec, q0: &[f64], v0: &[f64], t: f64, h: f64) -> Result<Trajectory> {
    check_inputs(sys, v0, t, h)?;
    let (_, dt) = step_plan(t, h);
    let mut traj = Trajectory {
        h: dt,
        times: Vec::new(),
        states: Vec::new(),
        driving: Vec::new(),
    };
    rk4(system_field(sys, q0), v0, 0.0, t, h, |tt, x| {
        traj.times.push(tt);
        traj.states.push(x.to_vec());
        traj.driving.push(drive(&sys.forcing, q0, tt));
    })?;
    Ok(traj)
}

/// End point of `ψ^T(q0, v0)` without storing the path.
pub fn flow(sys: &SystemSpec, q0: &[f64], v0: &[f64], t: f64, h: f64) -> Result<Vec<f64>> {
    check_inputs(sys, v0, t, h)?;
    rk4(system_field(sys, q0), v0, 0.0, t, h, |_, _| {})
}

/// Flow recorded only at the given increasing sample times.
pub fn flow_samples(
    sys: &SystemSpec,
    q0: &[f64],
    v0: &[f64],
    times: &[f64],
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(times.len());
    let mut v = v0.to_vec();
    let mut t_prev = 0.0;
    for &t in times {
        let q = drive(&sys.forcing, q0, t_prev);
        v = flow(sys, &q, &v, t - t_prev, h)?;
        out.push(v.clone());
        t_prev = t;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct VariationalTrajectory {
    pub base: Trajectory,
    /// Fundamental matrices `L(t)` on the same grid.
    pub fundamental: Vec<RealMatrix>,
}

fn variational_field<'a>(
    sys: &'a SystemSpec,
    q0: &'a [f64],
) -> impl FnMut(f64, &[f64], &mut [f64]) + 'a {
    let n = sys.n();
    let mut y = vec![0.0; sys.r()];
    move |t, x, out| {
        let q = drive(&sys.forcing, q0, t);
        sys.rhs(&q, &x[..n], &mut out[..n], &mut y);
        let j = sys
            .jacobian(&x[..n])
            .expect("derivative availability checked up front");
        let l = RealMatrix::from_column_slice(n, n, &x[n..]);
        let dl = j * l;
        out[n..].copy_from_slice(dl.as_slice());
    }
}

fn augmented(v0: &[f64]) -> Vec<f64> {
    let n = v0.len();
    let mut x = v0.to_vec();
    x.extend_from_slice(RealMatrix::identity(n, n).as_slice());
    x
}

/// Base trajectory plus `L(t)` solving `L' = (A + B F'(C v(t)) C) L`, `L(0) = I`.
pub fn integrate_variational(
    sys: &SystemSpec,
    q0: &[f64],
    v0: &[f64],
    t: f64,
    h: f64,
) -> Result<VariationalTrajectory> {
    check_inputs(sys, v0, t, h)?;
    if !sys.nonlinearity.has_derivative {
        return Err(Error::DerivativeUnavailable);
    }
    let n = sys.n();
    let (_, dt) = step_plan(t, h);
    let mut base = Trajectory {
        h: dt,
        times: Vec::new(),
        states: Vec::new(),
        driving: Vec::new(),
    };
    let mut fundamental = Vec::new();
    rk4(
        variational_field(sys, q0),
        &augmented(v0),
        0.0,
        t,
        h,
        |tt, x| {
            base.times.push(tt);
            base.states.push(x[..n].to_vec());
            base.driving.push(drive(&sys.forcing, q0, tt));
            fundamental.push(RealMatrix::from_column_slice(n, n, &x[n..]));
        },
    )?;
    Ok(VariationalTrajectory { base, fundamental })
}

/// End point and `L(T)` only.
pub fn flow_variational(
    sys: &SystemSpec,
    q0: &[f64],
    v0: &[f64],
    t: f64,
    h: f64,
) -> Result<(Vec<f64>, RealMatrix)> {
    check_inputs(sys, v0, t, h)?;
    if !sys.nonlinearity.has_derivative {
        return Err(Error::DerivativeUnavailable);
    }
    let n = sys.n();
    let x = rk4(
        variational_field(sys, q0),
        &augmented(v0),
        0.0,
        t,
        h,
        |_, _| {},
    )?;
    Ok((
        x[..n].to_vec(),
        RealMatrix::from_column_slice(n, n, &x[n..]),
    ))
}

/// Differences `ψ^t(q0, v1) - ψ^t(q0, v2)` on the uniform grid, both
/// trajectories advanced in lockstep. Returns the grid times and differences.
pub fn integrate_pair(
    sys: &SystemSpec,
    q0: &[f64],
    v1: &[f64],
    v2: &[f64],
    t: f64,
    h: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_inputs(sys, v1, t, h)?;
    check_inputs(sys, v2, t, h)?;
    let n = sys.n();
    let mut y = vec![0.0; sys.r()];
    let field = |tt: f64, x: &[f64], out: &mut [f64]| {
        let q = drive(&sys.forcing, q0, tt);
        sys.rhs(&q, &x[..n], &mut out[..n], &mut y);
        sys.rhs(&q, &x[n..], &mut out[n..], &mut y);
    };
    let mut x0 = v1.to_vec();
    x0.extend_from_slice(v2);
    let mut times = Vec::new();
    let mut deltas = Vec::new();
    rk4(field, &x0, 0.0, t, h, |tt, x| {
        times.push(tt);
        deltas.push((0..n).map(|i| x[i] - x[n + i]).collect());
    })?;
    Ok((times, deltas))
}

/// Running trapezoid integral of samples `g` on a uniform grid of step `h`.
pub fn cumulative_trapezoid(g: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    for (i, v) in g.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * h * (g[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Composite trapezoid error bound `len h² max|g''| / 12` over the first `upto`
/// intervals, with `g''` estimated by second differences.
pub fn trapezoid_error_bound(g: &[f64], h: f64, upto: usize) -> f64 {
    let end = upto.min(g.len().saturating_sub(1));
    if end < 2 {
        return 0.0;
    }
    let mut curv = 0.0f64;
    for i in 1..end {
        curv = curv.max((g[i + 1] - 2.0 * g[i] + g[i - 1]).abs() / (h * h));
    }
    end as f64 * h * h * h * curv / 12.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{fixture, Nonlinearity};
    use approx::assert_relative_eq;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn trapezoid_integrates_exponential_within_bound() {
        let h = 1e-2;
        let g: Vec<f64> = (0..=100).map(|i| (i as f64 * h).exp()).collect();
        let cum = cumulative_trapezoid(&g, h);
        let err = (cum[100] - (1f64.exp() - 1.0)).abs();
        let bound = trapezoid_error_bound(&g, h, 100);
        assert!(
            err <= bound * 1.05 && err >= bound * 0.3,
            "{err} vs {bound}"
        );
    }

    #[test]
    fn linear_flow_is_exponential() {
        let s = fixture("SYS-LIN2").unwrap();
        let v = flow(&s, &[], &[1.0, 1.0], 1.0, 1e-3).unwrap();
        assert!((v[0] - 1f64.exp()).abs() < 1e-9);
        assert!((v[1] - (-3f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_time_returns_initial_state() {
        let s = fixture("SYS-ODE3").unwrap();
        let tr = integrate(&s, &[], &[0.1, 0.2, 0.3], 0.0, 1e-3).unwrap();
        assert_eq!(tr.states.len(), 1);
        assert_eq!(tr.last(), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn unclamped_cubic_blows_up() {
        let f = Nonlinearity::polynomial(1.0, vec![0.0, 0.0, 0.0, 1.0], None, 0.0);
        let one = RealMatrix::identity(1, 1);
        let s = SystemSpec::from_parts(
            "blowup",
            RealMatrix::zeros(1, 1),
            one.clone(),
            one,
            f,
            Forcing::none(1),
        )
        .unwrap();
        // x' = x^3 from x = 2 blows up at t = 1/8
        assert!(matches!(
            flow(&s, &[], &[2.0], 1.0, 1e-3),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn drive_examples() {
        let s = fixture("SYS-FORCED2").unwrap();
        let mut f = s.forcing.clone();
        f.config = ForcingConfig::Periodic {
            period: 2.0,
            constant: vec![],
            cos: vec![],
            sin: vec![],
        };
        assert_relative_eq!(drive(&f, &[0.5], 3.5)[0], 0.0);
        let qp = fixture("SYS-SCALAR-QP").unwrap();
        let q = drive(&qp.forcing, &[0.0, 0.0], 1.0);
        assert_relative_eq!(q[0], 0.0);
        assert_relative_eq!(q[1], 2f64.sqrt().fract(), epsilon = 1e-15);
        let none = fixture("SYS-SCALAR").unwrap();
        assert_eq!(drive(&none.forcing, &[0.25], 7.0), vec![0.25]);
    }

    #[test]
    fn semigroup_property_on_fixtures() {
        let h = 1e-3;
        for (name, v0, q0) in [
            ("SYS-LIN2", vec![0.5, -1.0], vec![]),
            ("SYS-ODE3", vec![1.0, -0.5, 0.7], vec![]),
            ("SYS-FORCED2", vec![0.3, 0.1], vec![0.4]),
            ("SYS-SCALAR-QP", vec![1.5], vec![0.1, 0.7]),
        ] {
            let s = fixture(name).unwrap();
            for ti in 1..=5 {
                for si in 1..=5 {
                    let (t, sdur) = (0.2 * ti as f64, 0.2 * si as f64);
                    let direct = flow(&s, &q0, &v0, t + sdur, h).unwrap();
                    let mid = flow(&s, &q0, &v0, sdur, h).unwrap();
                    let composed = flow(&s, &drive(&s.forcing, &q0, sdur), &mid, t, h).unwrap();
                    assert!(dist(&direct, &composed) <= 1e-8, "{name} t={t} s={sdur}");
                }
            }
        }
    }

    #[test]
    fn rk4_order_on_linear_fixture() {
        let s = fixture("SYS-LIN2").unwrap();
        let exact = [2f64.exp(), (-6f64).exp()];
        let e1 = dist(&flow(&s, &[], &[1.0, 1.0], 2.0, 0.1).unwrap(), &exact);
        let e2 = dist(&flow(&s, &[], &[1.0, 1.0], 2.0, 0.05).unwrap(), &exact);
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn variational_of_linear_system_is_matrix_exponential() {
        let s = fixture("SYS-LIN2").unwrap();
        let vt = integrate_variational(&s, &[], &[0.3, 0.4], 1.0, 1e-3).unwrap();
        assert_eq!(vt.fundamental[0], RealMatrix::identity(2, 2));
        let l = vt.fundamental.last().unwrap();
        assert!((l[(0, 0)] - 1f64.exp()).abs() < 1e-9);
        assert!((l[(1, 1)] - (-3f64).exp()).abs() < 1e-9);
        assert!(l[(0, 1)].abs() < 1e-15 && l[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn variational_matches_finite_differences_on_ode3() {
        let s = fixture("SYS-ODE3").unwrap();
        let v0 = [0.8, -0.4, 0.5];
        let t = 2.0;
        let (vt, l) = flow_variational(&s, &[], &v0, t, 1e-3).unwrap();
        let eps = 1e-5;
        for i in 0..3 {
            let mut vp = v0;
            vp[i] += eps;
            let fp = flow(&s, &[], &vp, t, 1e-3).unwrap();
            let fd: Vec<f64> = fp.iter().zip(&vt).map(|(a, b)| (a - b) / eps).collect();
            let col: Vec<f64> = l.column(i).iter().copied().collect();
            assert!(dist(&fd, &col) <= 10.0 * eps, "column {i}");
        }
    }

    #[test]
    fn variational_requires_derivative() {
        let mut s = fixture("SYS-SCALAR").unwrap();
        s.nonlinearity.has_derivative = false;
        assert!(matches!(
            integrate_variational(&s, &[], &[1.0], 1.0, 1e-3),
            Err(Error::DerivativeUnavailable)
        ));
    }
}
