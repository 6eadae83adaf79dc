//! Checks of the quadratic cone field against trajectories: pseudo-ordering,
//! cone invariance, squeezing, Romanov's inequality and the discrete
//! squeezing inequality itself.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flow::{cumulative_trapezoid, integrate_pair, trapezoid_error_bound};
use crate::sample::{ball_point, item_rng, norm, sub, unit_vector};
use crate::synthesis::{ulip, BatteryOptions, ConeField};
use crate::system::SystemSpec;

/// `vᵀPv`.
pub fn v_value(cf: &ConeField, v: &[f64]) -> Result<f64> {
    if v.len() != cf.n() {
        return Err(Error::dim(format!(
            "vector has {} entries, cone field n = {}",
            v.len(),
            cf.n()
        )));
    }
    Ok(cf.v(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PseudoOrder {
    StrictNegative,
    Zero,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoOrderWitness {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub value: f64,
    pub class: PseudoOrder,
}

/// Classifies `V(v1 - v2)` with tolerance `1e-12 ‖P‖ |v1 - v2|²`.
pub fn classify(cf: &ConeField, v1: &[f64], v2: &[f64]) -> Result<PseudoOrderWitness> {
    let d = sub(v1, v2);
    let value = v_value(cf, &d)?;
    let tol = 1e-12 * cf.m_p * norm(&d).powi(2);
    let class = if value < -tol {
        PseudoOrder::StrictNegative
    } else if value <= tol {
        PseudoOrder::Zero
    } else {
        PseudoOrder::Positive
    };
    Ok(PseudoOrderWitness {
        v1: v1.to_vec(),
        v2: v2.to_vec(),
        value,
        class,
    })
}

/// Outcome of a per-pair battery. Residuals are `<= 0` when satisfied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryReport {
    pub check: &'static str,
    pub pairs: usize,
    pub checked: usize,
    pub skipped: usize,
    pub violations: usize,
    pub worst_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_pair: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_time: Option<f64>,
    /// Worst residual of each pair, `None` for skipped pairs.
    pub per_pair: Vec<Option<f64>>,
    pub clean: bool,
}

/// Per-pair outcome: `None` when skipped, else (worst residual, its time, violation count).
type PairOutcome = Option<(f64, f64, usize)>;

fn merge(check: &'static str, outcomes: Vec<PairOutcome>) -> BatteryReport {
    let mut rep = BatteryReport {
        check,
        pairs: outcomes.len(),
        checked: 0,
        skipped: 0,
        violations: 0,
        worst_residual: f64::NEG_INFINITY,
        worst_pair: None,
        worst_time: None,
        per_pair: Vec::with_capacity(outcomes.len()),
        clean: true,
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            None => {
                rep.skipped += 1;
                rep.per_pair.push(None);
            }
            Some((res, t, bad)) => {
                rep.checked += 1;
                rep.violations += bad;
                rep.per_pair.push(Some(res));
                if res > rep.worst_residual {
                    rep.worst_residual = res;
                    rep.worst_pair = Some(i);
                    rep.worst_time = Some(t);
                }
            }
        }
    }
    rep.clean = rep.violations == 0;
    rep
}

/// Difference vector `m + p` with `m ∈ range Π`, `p ∈ ker Π` and
/// `V(m + p) = V(m) + V(p)` of the requested sign. `ratio ∈ [0, 1)` sets how
/// deep inside the cone (negative side) or its complement (positive side) it lies.
fn constructed_difference(
    cf: &ConeField,
    rng: &mut impl Rng,
    negative: bool,
    ratio: f64,
    size: f64,
) -> Vec<f64> {
    let n = cf.n();
    let (m, p) = cf.split(&unit_vector(rng, n));
    let (vm, vp) = (cf.v(&m), cf.v(&p));
    let scaled = |x: &[f64], s: f64| x.iter().map(|v| v * s).collect::<Vec<_>>();
    // vm < 0 < vp for a genuine field; the roles swap for an adversarial one
    let d = match (negative, vm < 0.0, vp > 0.0) {
        (true, true, _) if vp.abs() > 0.0 => {
            let s = (ratio * -vm / vp.abs()).sqrt();
            m.iter().zip(scaled(&p, s)).map(|(a, b)| a + b).collect()
        }
        (true, true, _) => m,
        (true, false, _) if vp < 0.0 && vm.abs() > 0.0 => {
            let s = (ratio * -vp / vm.abs()).sqrt();
            scaled(&m, s).iter().zip(&p).map(|(a, b)| a + b).collect()
        }
        (true, false, _) => p,
        (false, _, true) if vm.abs() > 0.0 => {
            let s = (ratio * vp / vm.abs()).sqrt();
            scaled(&m, s).iter().zip(&p).map(|(a, b)| a + b).collect()
        }
        (false, _, true) => p,
        (false, _, false) if vm > 0.0 && vp.abs() > 0.0 => {
            let s = (ratio * vm / vp.abs()).sqrt();
            m.iter().zip(scaled(&p, s)).map(|(a, b)| a + b).collect()
        }
        (false, _, false) => m,
    };
    let len = norm(&d).max(1e-300);
    scaled(&d, size / len)
}

fn battery_setup(sys: &SystemSpec, opts: &BatteryOptions) -> (f64, f64, Vec<f64>) {
    let h = opts.h.unwrap_or_else(|| sys.default_step());
    let radius = opts.radius.or(sys.hints.ball_radius).unwrap_or(5.0);
    (h, radius, vec![0.0; sys.forcing.driving_dim()])
}

/// Pairs with `V(Δ(0)) < 0` must stay strictly pseudo-ordered for `t >= tau_v`.
pub fn check_cone_invariance(
    sys: &SystemSpec,
    cf: &ConeField,
    opts: &BatteryOptions,
    tau_v: f64,
    exec: Exec,
) -> Result<BatteryReport> {
    let (h, radius, q0) = battery_setup(sys, opts);
    let n = sys.n();
    let outcomes = exec.try_map(opts.pairs, |i| -> Result<PairOutcome> {
        let mut rng = item_rng(opts.seed, i);
        let v1 = ball_point(&mut rng, n, radius);
        let ratio = rng.random_range(0.0..0.9);
        let size = rng.random_range(0.1..1.0) * radius;
        let d = constructed_difference(cf, &mut rng, true, ratio, size);
        if norm(&d) == 0.0 || cf.v(&d) > 0.0 {
            return Ok(None);
        }
        let v2 = sub(&v1, &d);
        let (times, deltas) = integrate_pair(sys, &q0, &v1, &v2, opts.horizon, h)?;
        let mut worst = (f64::NEG_INFINITY, 0.0);
        let mut bad = 0;
        for (t, d) in times.iter().zip(&deltas) {
            if *t < tau_v {
                continue;
            }
            // normalized so the residual is scale free
            let res = cf.v(d) / (cf.m_p * norm(d).powi(2)).max(1e-300);
            if res >= 0.0 {
                bad += 1;
            }
            if res > worst.0 {
                worst = (res, *t);
            }
        }
        Ok(Some((worst.0, worst.1, bad)))
    })?;
    Ok(merge("cone-invariance", outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqueezingReport {
    pub integral: BatteryReport,
    pub exponential: BatteryReport,
    /// `L_{τ_S+1}` used in the exponential constant.
    pub lipschitz: f64,
}

/// Pairs with `V(Δ(T)) >= 0` obey `∫_0^t e^{2νs}|Δ|² <= V(Δ(0))/δ` and
/// `|Δ(t)|² <= δ⁻¹ L² e^{2ν(τ_S+1)} V(Δ(0)) e^{-2νt}` for `t >= τ_S + 1`.
/// `slack` is a relative allowance on both right-hand sides.
pub fn check_squeezing(
    sys: &SystemSpec,
    cf: &ConeField,
    opts: &BatteryOptions,
    tau_s: f64,
    slack: f64,
    exec: Exec,
) -> Result<SqueezingReport> {
    if !(cf.delta > 0.0) {
        return Err(Error::pre("squeezing needs a positive margin"));
    }
    let (h, radius, q0) = battery_setup(sys, opts);
    let n = sys.n();
    let nu = cf.nu0;
    let lip = ulip(sys, tau_s + 1.0);
    let both = exec.try_map(opts.pairs, |i| -> Result<(PairOutcome, PairOutcome)> {
        let mut rng = item_rng(opts.seed, i);
        let v1 = ball_point(&mut rng, n, radius);
        let size = rng.random_range(0.1..1.0) * radius;
        let d0 = constructed_difference(cf, &mut rng, false, 0.0, size);
        // the unstable part of Δ grows, so the partner is shot onto the vertical leaf of v1
        let Some(v2) = vertical_partner(sys, cf, &q0, &v1, &d0, opts.horizon, h)? else {
            return Ok((None, None));
        };
        let (times, deltas) = integrate_pair(sys, &q0, &v1, &v2, opts.horizon, h)?;
        let last = deltas.last().expect("grid has the initial point");
        let floor = 1e-9 * cf.m_p * norm(last).powi(2);
        if norm(&deltas[0]) == 0.0 || cf.v(last) < -floor {
            return Ok((None, None));
        }
        let dt = if times.len() > 1 {
            times[1] - times[0]
        } else {
            h
        };
        let v0 = cf.v(&deltas[0]);
        let g: Vec<f64> = times
            .iter()
            .zip(&deltas)
            .map(|(t, d)| (2.0 * nu * t).exp() * norm(d).powi(2))
            .collect();
        let integral = cumulative_trapezoid(&g, dt);
        let bound = v0 / cf.delta * (1.0 + slack);
        let mut int_worst = (f64::NEG_INFINITY, 0.0, 0);
        let mut exp_worst = (f64::NEG_INFINITY, 0.0, 0);
        let constant = lip * lip * (2.0 * nu * (tau_s + 1.0)).exp() / cf.delta * v0 * (1.0 + slack);
        for k in 0..times.len() {
            let eps = trapezoid_error_bound(&g, dt, k) + 1e-12 * (1.0 + integral[k]);
            let res = (integral[k] - bound - eps) / bound.max(1e-300);
            if res > 0.0 {
                int_worst.2 += 1;
            }
            if res > int_worst.0 {
                int_worst = (res, times[k], int_worst.2);
            }
            if times[k] >= tau_s + 1.0 {
                let rhs = constant * (-2.0 * nu * times[k]).exp();
                let res = (norm(&deltas[k]).powi(2) - rhs) / rhs.max(1e-300);
                if res > 1e-12 {
                    exp_worst.2 += 1;
                }
                if res > exp_worst.0 {
                    exp_worst = (res, times[k], exp_worst.2);
                }
            }
        }
        let exp_out = (exp_worst.0 > f64::NEG_INFINITY).then_some(exp_worst);
        Ok((Some(int_worst), exp_out))
    })?;
    let (int_o, exp_o): (Vec<_>, Vec<_>) = both.into_iter().unzip();
    Ok(SqueezingReport {
        integral: merge("squeezing-integral", int_o),
        exponential: merge("squeezing-exponential", exp_o),
        lipschitz: lip,
    })
}

/// `v1 - d - E⁻m` with `m` chosen by Newton so that the two trajectories have
/// the same `Π`-image at time `t`. `None` when Newton fails.
fn vertical_partner(
    sys: &SystemSpec,
    cf: &ConeField,
    q0: &[f64],
    v1: &[f64],
    d: &[f64],
    t: f64,
    h: f64,
) -> Result<Option<Vec<f64>>> {
    let j = cf.j;
    let end1 = crate::flow::flow(sys, q0, v1, t, h)?;
    let candidate = |m: &[f64]| -> Vec<f64> {
        let lift = cf.lift(m);
        (0..v1.len()).map(|k| v1[k] - d[k] - lift[k]).collect()
    };
    let residual = |m: &[f64]| -> Result<Vec<f64>> {
        let end2 = crate::flow::flow(sys, q0, &candidate(m), t, h)?;
        Ok(cf.chart(&sub(&end1, &end2)))
    };
    let mut m = vec![0.0; j];
    let mut r = residual(&m)?;
    let scale = 1.0 + norm(d);
    for _ in 0..30 {
        if norm(&r) <= 1e-11 * scale {
            return Ok(Some(candidate(&m)));
        }
        let mut jac = crate::linalg::RealMatrix::zeros(j, j);
        for c in 0..j {
            let step = 1e-6 * (1.0 + m[c].abs());
            let mut mp = m.clone();
            mp[c] += step;
            let rp = residual(&mp)?;
            for row in 0..j {
                jac[(row, c)] = (rp[row] - r[row]) / step;
            }
        }
        let rhs = crate::linalg::RealMatrix::from_column_slice(j, 1, &r);
        let Ok(dm) = crate::linalg::solve_real(&jac, &rhs) else {
            return Ok(None);
        };
        for c in 0..j {
            m[c] -= dm[(c, 0)];
        }
        r = residual(&m)?;
    }
    Ok(None)
}

/// `(V(w1⁺ - w3⁺), C_κ V(w1⁺ - w2⁺))` for a triple.
pub fn romanov_sides(cf: &ConeField, w1: &[f64], w2: &[f64], w3: &[f64], kappa: f64) -> (f64, f64) {
    let (_, p1) = cf.split(w1);
    let (_, p2) = cf.split(w2);
    let (_, p3) = cf.split(w3);
    let c = 1.0 / (1.0 - kappa).powi(2);
    (cf.v(&sub(&p1, &p3)), c * cf.v(&sub(&p1, &p2)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RomanovReport {
    pub kappa: f64,
    pub triples: usize,
    pub violations: usize,
    /// Largest `(lhs - rhs) / scale`.
    pub worst: f64,
    pub clean: bool,
}

/// Constructed triples with `V(w1 - w3) >= 0`, `V^κ(w2 - w3) <= 0`, `Πw1 = Πw2`.
pub fn romanov_check(
    cf: &ConeField,
    kappa: f64,
    triples: usize,
    seed: u64,
    exec: Exec,
) -> Result<RomanovReport> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::pre(format!("kappa must lie in [0, 1), got {kappa}")));
    }
    let n = cf.n();
    let worst = exec.map(triples, |i| {
        let mut rng = item_rng(seed, i);
        let w3 = ball_point(&mut rng, n, 5.0);
        let (ratio, size) = (rng.random_range(0.0..1.0), rng.random_range(0.0..5.0));
        let d13 = constructed_difference(cf, &mut rng, false, ratio, size);
        let (m, _) = cf.split(&d13);
        let (_, dir) = cf.split(&unit_vector(&mut rng, n));
        let (vm, vd) = (cf.v(&m), cf.v(&dir));
        let s = if vd > 0.0 && vm < 0.0 {
            (rng.random_range(0.0..1.0) * kappa * kappa * -vm / vd).sqrt()
        } else {
            0.0
        };
        let w1: Vec<f64> = w3.iter().zip(&d13).map(|(a, b)| a + b).collect();
        let w2: Vec<f64> = (0..n).map(|k| w3[k] + m[k] + s * dir[k]).collect();
        let (lhs, rhs) = romanov_sides(cf, &w1, &w2, &w3, kappa);
        let scale = cf.m_p * (1.0 + norm(&w1).powi(2) + norm(&w2).powi(2) + norm(&w3).powi(2));
        (lhs - rhs) / scale
    });
    let violations = worst.iter().filter(|&&r| r > 1e-10).count();
    let max = worst.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RomanovReport {
        kappa,
        triples,
        violations,
        worst: max,
        clean: violations == 0,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct H3Options {
    pub battery: BatteryOptions,
    /// Check every `stride`-th grid point as an endpoint.
    pub stride: usize,
    /// Multiplies δ_P in the checked inequality (adversarial runs use 10).
    pub delta_scale: f64,
}

impl Default for H3Options {
    fn default() -> Self {
        H3Options {
            battery: BatteryOptions {
                pairs: 100,
                horizon: 2.0,
                ..BatteryOptions::default()
            },
            stride: 50,
            delta_scale: 1.0,
        }
    }
}

/// For every pair and grid endpoints `l < r` with `r - l >= τ_P`:
/// `e^{2νr}V(Δ(r)) - e^{2νl}V(Δ(l)) + δ ∫_l^r e^{2νs}|Δ|² ds <= ε_quad`.
pub fn verify_h3_discrete(
    sys: &SystemSpec,
    cf: &ConeField,
    opts: &H3Options,
    exec: Exec,
) -> Result<BatteryReport> {
    let b = &opts.battery;
    let (h, radius, q0) = battery_setup(sys, b);
    let n = sys.n();
    let nu = cf.nu0;
    let delta = cf.delta * opts.delta_scale;
    let stride = opts.stride.max(1);
    let outcomes = exec.try_map(b.pairs, |i| -> Result<PairOutcome> {
        let mut rng = item_rng(b.seed, i);
        let v1 = ball_point(&mut rng, n, radius);
        let v2 = ball_point(&mut rng, n, radius);
        let (times, deltas) = integrate_pair(sys, &q0, &v1, &v2, b.horizon, h)?;
        let dt = if times.len() > 1 {
            times[1] - times[0]
        } else {
            h
        };
        let weight: Vec<f64> = times.iter().map(|t| (2.0 * nu * t).exp()).collect();
        let g: Vec<f64> = weight
            .iter()
            .zip(&deltas)
            .map(|(w, d)| w * norm(d).powi(2))
            .collect();
        let integral = cumulative_trapezoid(&g, dt);
        let wv: Vec<f64> = weight
            .iter()
            .zip(&deltas)
            .map(|(w, d)| w * cf.v(d))
            .collect();
        // second-difference curvature of g between consecutive checkpoints
        let idx: Vec<usize> = (0..times.len()).step_by(stride).collect();
        let mut worst = (f64::NEG_INFINITY, 0.0, 0);
        for (a, &l) in idx.iter().enumerate() {
            for &r in &idx[a + 1..] {
                if times[r] - times[l] < cf.tau_p {
                    continue;
                }
                let quad = integral[r] - integral[l];
                let eps = delta * (trapezoid_error_bound(&g[l..=r], dt, r - l))
                    + 1e-10 * (1.0 + wv[r].abs() + wv[l].abs() + delta * quad);
                let res = wv[r] - wv[l] + delta * quad - eps;
                if res > 0.0 {
                    worst.2 += 1;
                }
                if res > worst.0 {
                    worst.0 = res;
                    worst.1 = times[r];
                }
            }
        }
        Ok((worst.0 > f64::NEG_INFINITY).then_some(worst))
    })?;
    Ok(merge("h3-discrete", outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RealMatrix;
    use crate::synthesis::{synthesize_p, SynthesisOptions};
    use crate::system::fixture;
    use proptest::prelude::*;

    fn lin2_field() -> (SystemSpec, ConeField) {
        let sys = fixture("SYS-LIN2").unwrap();
        let cf = synthesize_p(&sys, 1.0, &SynthesisOptions::default()).unwrap();
        (sys, cf)
    }

    fn quick() -> BatteryOptions {
        BatteryOptions {
            pairs: 20,
            horizon: 2.0,
            h: Some(1e-3),
            ..BatteryOptions::default()
        }
    }

    #[test]
    fn v_value_examples() {
        let s3 = 3f64.sqrt();
        let p =
            RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-(2.0 + s3), 2.0 - s3]));
        let a = RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -3.0]));
        let cf = ConeField::from_p("t", p, &a, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(v_value(&cf, &[0.0, 0.0]).unwrap(), 0.0);
        assert!((v_value(&cf, &[1.0, 1.0]).unwrap() + 2.0 * s3).abs() < 1e-12);
        assert!(v_value(&cf, &[1.0]).is_err());
        let w = classify(&cf, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(w.class, PseudoOrder::StrictNegative);
    }

    fn romanov_field() -> ConeField {
        let p = RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let a = RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0]));
        ConeField::from_p("romanov", p, &a, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn romanov_worked_example() {
        let cf = romanov_field();
        let (lhs, rhs) = romanov_sides(&cf, &[1.0, 0.5], &[0.2, 0.5], &[0.0, 0.0], 0.4);
        assert!((lhs - 1.0).abs() < 1e-14);
        assert!((rhs - 0.64 / 0.36).abs() < 1e-12);
        // degenerate triple w1 = w2
        let (lhs, rhs) = romanov_sides(&cf, &[1.0, 0.5], &[1.0, 0.5], &[1.0, 0.0], 0.4);
        assert!(lhs <= rhs + 1e-15);
    }

    #[test]
    fn romanov_battery_including_small_kappa() {
        let (_, cf) = lin2_field();
        for kappa in [0.0, 0.3, 0.9] {
            let rep = romanov_check(&cf, kappa, 2000, 5, Exec::Parallel).unwrap();
            assert!(rep.clean, "{rep:?}");
        }
        assert!(romanov_check(&cf, 1.0, 1, 0, Exec::Sequential).is_err());
    }

    #[test]
    fn cone_invariance_on_lin2_and_adversarial() {
        let (sys, cf) = lin2_field();
        let rep = check_cone_invariance(&sys, &cf, &quick(), 0.0, Exec::Parallel).unwrap();
        assert!(rep.clean && rep.checked == 20, "{rep:?}");
        let bad =
            check_cone_invariance(&sys, &cf.flipped(), &quick(), 0.0, Exec::Parallel).unwrap();
        assert!(!bad.clean);
    }

    #[test]
    fn squeezing_on_lin2() {
        let (sys, cf) = lin2_field();
        let rep = check_squeezing(&sys, &cf, &quick(), 0.0, 0.0, Exec::Parallel).unwrap();
        assert!(rep.integral.clean && rep.exponential.clean, "{rep:?}");
        assert!(rep.integral.checked > 0);
    }

    #[test]
    fn h3_on_lin2_and_inflated_margin() {
        let (sys, cf) = lin2_field();
        let mut opts = H3Options::default();
        opts.battery = quick();
        let rep = verify_h3_discrete(&sys, &cf, &opts, Exec::Parallel).unwrap();
        assert!(rep.clean, "{rep:?}");
        opts.delta_scale = 10.0;
        assert!(
            !verify_h3_discrete(&sys, &cf, &opts, Exec::Parallel)
                .unwrap()
                .clean
        );
    }

    #[test]
    fn identical_pair_has_zero_residual() {
        let (sys, cf) = lin2_field();
        let (times, deltas) =
            integrate_pair(&sys, &[], &[1.0, 2.0], &[1.0, 2.0], 1.0, 1e-2).unwrap();
        assert!(deltas.iter().all(|d| norm(d) == 0.0));
        assert_eq!(times.len(), 101);
        assert_eq!(cf.v(&deltas[50]), 0.0);
    }

    proptest! {
        #[test]
        fn projector_is_injective_on_the_cone(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let (_, cf) = lin2_field();
            let d = [x, y];
            let v = cf.v(&d);
            prop_assume!(v <= 0.0 && norm(&d) > 0.0);
            let (m, _) = cf.split(&d);
            prop_assert!(norm(&m).powi(2) >= -v / cf.m_p - 1e-12);
        }

        #[test]
        fn v_is_quadratic(a in -10.0f64..10.0, x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let (_, cf) = lin2_field();
            let lhs = cf.v(&[a * x, a * y]);
            let rhs = a * a * cf.v(&[x, y]);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }
}
