//! Existence certificates: frequency inequality, spectral gap, small delays and
//! the sampled differential inequality along variational trajectories.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flow::{drive, rk4};
use crate::linalg::{
    eig_general, operator_norm2, operator_norm2_real, solve_linear, ComplexMatrix, RealMatrix,
};
use crate::sample::{ball_point, item_rng, unit_vector};
use crate::synthesis::ConeField;
use crate::system::{DelaySpec, GalerkinSpec, SystemSpec};

/// Strict inequalities are decided with this absolute slack.
pub const PASS_SLACK: f64 = 1e-9;

/// Eigenvalues closer than this to the dichotomy line are rejected.
pub const LINE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionKind {
    Frequency,
    SpectralGap,
    SmallDelay,
    ScpSampled,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_sample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub kind: ConditionKind,
    pub pass: bool,
    /// Positive means strict satisfaction. `+inf` when Λ = 0.
    pub margin: f64,
    pub nu0: f64,
    pub j: usize,
    #[serde(flatten)]
    pub diagnostics: Diagnostics,
}

impl ConditionReport {
    fn new(kind: ConditionKind, margin: f64, nu0: f64, j: usize, diagnostics: Diagnostics) -> Self {
        ConditionReport {
            kind,
            pass: margin > PASS_SLACK,
            margin,
            nu0,
            j,
            diagnostics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCertificate {
    pub j: usize,
    /// Distance of the nearest eigenvalue to the line Re p = -nu0.
    pub distance: f64,
}

/// Number of eigenvalues with Re λ > -nu0.
pub fn count_unstable(a: &RealMatrix, nu0: f64) -> Result<GapCertificate> {
    let eigs = eig_general(a)?;
    let mut j = 0;
    let mut distance = f64::INFINITY;
    for l in eigs {
        let d = (l.re + nu0).abs();
        if d <= LINE_TOL {
            return Err(Error::OnDichotomyLine {
                re: l.re,
                im: l.im,
                distance: d,
            });
        }
        distance = distance.min(d);
        if l.re > -nu0 {
            j += 1;
        }
    }
    Ok(GapCertificate { j, distance })
}

/// A matrix atom `M e^{-p lag}`.
#[derive(Debug, Clone)]
pub struct Atom {
    pub lag: f64,
    pub matrix: RealMatrix,
}

#[derive(Debug, Clone)]
pub enum TransferFunction {
    /// `C (A - pI)^{-1} B`.
    Rational {
        a: RealMatrix,
        b: RealMatrix,
        c: RealMatrix,
    },
    /// `γ(p) (α(p) - pI - p δ(p))^{-1} B` with all three operators given by atoms.
    Delay {
        alpha: Vec<Atom>,
        delta: Vec<Atom>,
        gamma: Vec<Atom>,
        b: RealMatrix,
    },
}

fn atoms_at(atoms: &[Atom], p: Complex64, rows: usize, cols: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(rows, cols);
    for atom in atoms {
        let w = (-p * atom.lag).exp();
        out += atom.matrix.map(|x| Complex64::new(x, 0.0) * w);
    }
    out
}

/// `Σ ‖M_k‖ e^{nu0 lag_k}`, the bound of an atom sum on the line Re p = -nu0.
fn atoms_bound(atoms: &[Atom], nu0: f64) -> f64 {
    atoms
        .iter()
        .map(|a| operator_norm2_real(&a.matrix) * (nu0 * a.lag).exp())
        .sum()
}

fn rows_matrix(rows: &[Vec<f64>]) -> RealMatrix {
    let c = rows.first().map_or(0, Vec::len);
    RealMatrix::from_fn(rows.len(), c, |i, j| rows[i][j])
}

impl TransferFunction {
    pub fn rational(sys: &SystemSpec) -> Self {
        TransferFunction::Rational {
            a: sys.a.clone(),
            b: sys.b.clone(),
            c: sys.c.clone(),
        }
    }

    /// Transfer function of the undiscretized delay system `x' = A0 x + Σ A_k x(t-l_k) + B F(C~ x_t)`.
    pub fn delay(spec: &DelaySpec, a0: &RealMatrix, b: &RealMatrix) -> Self {
        let n = a0.nrows();
        let mut alpha = vec![Atom {
            lag: 0.0,
            matrix: a0.clone(),
        }];
        alpha.extend(spec.a_taps.iter().map(|t| Atom {
            lag: t.lag,
            matrix: rows_matrix(&t.matrix),
        }));
        let delta = spec
            .d0_taps
            .iter()
            .map(|t| Atom {
                lag: t.lag,
                matrix: rows_matrix(&t.matrix),
            })
            .collect();
        let r = spec.outputs();
        let gamma = spec
            .taps
            .iter()
            .map(|t| {
                let mut m = RealMatrix::zeros(r, n);
                m[(t.output, t.component)] = t.weight;
                Atom {
                    lag: t.lag,
                    matrix: m,
                }
            })
            .collect();
        TransferFunction::Delay {
            alpha,
            delta,
            gamma,
            b: b.clone(),
        }
    }

    /// Delay kind for discretized delay systems, rational kind otherwise.
    pub fn for_system(sys: &SystemSpec) -> Self {
        match (&sys.delay, &sys.delay_base) {
            (Some(spec), Some((a0, b))) => Self::delay(spec, a0, b),
            _ => Self::rational(sys),
        }
    }

    pub fn is_rational(&self) -> bool {
        matches!(self, TransferFunction::Rational { .. })
    }

    pub fn eval(&self, p: Complex64) -> Result<ComplexMatrix> {
        match self {
            TransferFunction::Rational { a, b, c } => {
                let n = a.nrows();
                let mut m = a.map(|x| Complex64::new(x, 0.0));
                for i in 0..n {
                    m[(i, i)] -= p;
                }
                let x = solve_linear(&m, &b.map(|x| Complex64::new(x, 0.0)))?;
                Ok(c.map(|x| Complex64::new(x, 0.0)) * x)
            }
            TransferFunction::Delay {
                alpha,
                delta,
                gamma,
                b,
            } => {
                let n = b.nrows();
                let r = gamma.first().map_or(0, |g| g.matrix.nrows());
                let mut m = atoms_at(alpha, p, n, n) - atoms_at(delta, p, n, n) * p;
                for i in 0..n {
                    m[(i, i)] -= p;
                }
                let x = solve_linear(&m, &b.map(|x| Complex64::new(x, 0.0)))?;
                Ok(atoms_at(gamma, p, r, n) * x)
            }
        }
    }

    /// `|W(-nu0 + iω)|`.
    pub fn norm_on_line(&self, nu0: f64, omega: f64) -> Result<f64> {
        Ok(operator_norm2(&self.eval(Complex64::new(-nu0, omega))?))
    }

    /// Default sweep radius, enlarged until the tail bound is meaningful.
    pub fn default_omega_max(&self, nu0: f64) -> Result<f64> {
        Ok(match self {
            TransferFunction::Rational { a, .. } => {
                let rho = eig_general(a)?.iter().map(|l| l.norm()).fold(0.0, f64::max);
                let base = 1e3 * (rho + nu0.abs() + 1.0);
                base.max(2.0 * (operator_norm2_real(a) + nu0.abs()) + 1.0)
            }
            TransferFunction::Delay { alpha, delta, .. } => {
                let a = atoms_bound(alpha, nu0);
                let kappa = atoms_bound(delta, nu0);
                let base = 1e3 * (a + nu0.abs() + 1.0);
                if kappa < 1.0 {
                    base.max(2.0 * a / (1.0 - kappa) + 1.0)
                } else {
                    base
                }
            }
        })
    }

    /// Upper bound for `|W(-nu0 + iω)|` over all `|ω| >= omega`.
    pub fn tail_bound(&self, nu0: f64, omega: f64) -> Result<f64> {
        match self {
            TransferFunction::Rational { a, b, c } => {
                let denom = omega - operator_norm2_real(a) - nu0.abs();
                if denom <= 0.0 {
                    return Err(Error::TailUnbounded(format!(
                        "omega_max = {omega} does not exceed |A| + |nu0|"
                    )));
                }
                Ok(operator_norm2_real(c) * operator_norm2_real(b) / denom)
            }
            TransferFunction::Delay {
                alpha,
                delta,
                gamma,
                b,
            } => {
                let kappa = atoms_bound(delta, nu0);
                if kappa >= 1.0 {
                    return Err(Error::TailUnbounded(format!(
                        "neutral part has weighted norm {kappa} >= 1 on the line"
                    )));
                }
                let a = atoms_bound(alpha, nu0);
                let denom = omega * (1.0 - kappa) - a;
                if denom <= 0.0 {
                    return Err(Error::TailUnbounded(format!(
                        "omega_max = {omega} too small for the delay growth bound {a}"
                    )));
                }
                Ok(atoms_bound(gamma, nu0) * operator_norm2_real(b) / denom)
            }
        }
    }

    fn longest_lag(&self) -> f64 {
        match self {
            TransferFunction::Rational { .. } => 0.0,
            TransferFunction::Delay {
                alpha,
                delta,
                gamma,
                ..
            } => alpha
                .iter()
                .chain(delta)
                .chain(gamma)
                .map(|a| a.lag)
                .fold(0.0, f64::max),
        }
    }

    fn sample_frequencies(&self, nu0: f64, omega_max: f64) -> Result<Vec<f64>> {
        let mut w = vec![0.0, omega_max, -omega_max];
        let lo = -4.0f64;
        let hi = omega_max.log10();
        if hi > lo {
            let count = 400;
            for k in 0..count {
                let x = 10f64.powf(lo + (hi - lo) * k as f64 / (count - 1) as f64);
                w.push(x);
                w.push(-x);
            }
        }
        let scale = match self {
            TransferFunction::Rational { a, .. } => {
                let eigs = eig_general(a)?;
                for l in &eigs {
                    if l.im.abs() <= omega_max {
                        w.push(l.im);
                        w.push(-l.im);
                    }
                }
                eigs.iter().map(|l| l.norm()).fold(0.0, f64::max)
            }
            TransferFunction::Delay { alpha, .. } => atoms_bound(alpha, nu0),
        };
        let lin = omega_max.min(20.0 * (scale + nu0.abs() + 1.0));
        let count = 4001;
        for k in 0..count {
            w.push(-lin + 2.0 * lin * k as f64 / (count - 1) as f64);
        }
        let tau = self.longest_lag();
        if tau > 0.0 {
            // delays oscillate in ω with period 2π/τ; sample well below that
            let dw = std::f64::consts::PI / (8.0 * tau);
            let count = ((2.0 * omega_max / dw).ceil() as usize).clamp(2, 200_000);
            for k in 0..=count {
                w.push(-omega_max + 2.0 * omega_max * k as f64 / count as f64);
            }
        }
        w.sort_by(f64::total_cmp);
        w.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        Ok(w)
    }
}

const REFINE_PEAKS: usize = 32;

/// Golden-section search for the maximum of `f` on `[a, b]`.
fn golden_max<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Estimates `sup_ω |W(-nu0 + iω)|` and compares it with `1/Λ`.
///
/// The grid covers `[-omega_max, omega_max]`; the largest local maxima are
/// refined by golden section and the rest of the line is covered by the tail
/// bound. `j` is reported for the rational kind only.
pub fn frequency_sweep(
    tf: &TransferFunction,
    nu0: f64,
    lambda: f64,
    omega_max: Option<f64>,
    exec: Exec,
) -> Result<ConditionReport> {
    let (j, gap) = match tf {
        TransferFunction::Rational { a, .. } => {
            let g = count_unstable(a, nu0)?;
            (g.j, Some(g.distance))
        }
        TransferFunction::Delay { .. } => (0, None),
    };
    let omega_max = match omega_max {
        Some(w) => w,
        None => tf.default_omega_max(nu0)?,
    };
    let tail = tf.tail_bound(nu0, omega_max)?;
    let grid = tf.sample_frequencies(nu0, omega_max)?;
    let values = exec.try_map(grid.len(), |i| tf.norm_on_line(nu0, grid[i]))?;

    let mut peaks: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let left = i == 0 || values[i] >= values[i - 1];
            let right = i + 1 == grid.len() || values[i] >= values[i + 1];
            left && right
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks.truncate(REFINE_PEAKS);
    let refined = exec.try_map(peaks.len(), |k| {
        let i = peaks[k];
        let a = grid[i.saturating_sub(1)];
        let b = grid[(i + 1).min(grid.len() - 1)];
        let (w, v) = golden_max(|w| tf.norm_on_line(nu0, w), a, b)?;
        Ok(if v >= values[i] {
            (w, v)
        } else {
            (grid[i], values[i])
        })
    })?;

    let (mut worst_omega, mut sup) = (0.0f64, f64::NEG_INFINITY);
    for (w, v) in grid
        .iter()
        .copied()
        .zip(values.iter().copied())
        .chain(refined)
    {
        if v > sup || (v == sup && w.abs() < worst_omega.abs()) {
            sup = v;
            worst_omega = w;
        }
    }
    let bound = sup.max(tail);
    let margin = if lambda == 0.0 {
        f64::INFINITY
    } else {
        1.0 / lambda - bound
    };
    Ok(ConditionReport::new(
        ConditionKind::Frequency,
        margin,
        nu0,
        j,
        Diagnostics {
            worst_omega: Some(worst_omega),
            sup_norm: Some(sup),
            tail_bound: Some(tail),
            omega_max: Some(omega_max),
            grid_points: Some(grid.len()),
            gap_distance: gap,
            ..Diagnostics::default()
        },
    ))
}

/// Frequency check of a system: the transfer function matching its family
/// and the unstable count of its (possibly discretized) state matrix.
pub fn check_frequency(
    sys: &SystemSpec,
    nu0: f64,
    lambda: f64,
    exec: Exec,
) -> Result<ConditionReport> {
    let gap = count_unstable(&sys.a, nu0)?;
    let tf = TransferFunction::for_system(sys);
    let mut report = frequency_sweep(&tf, nu0, lambda, None, exec)?;
    report.j = gap.j;
    report.diagnostics.gap_distance = Some(gap.distance);
    Ok(report)
}

/// Spectral gap condition for a Galerkin spectrum with the optimal exponent.
/// `j` counts eigenvalues from one: the gap lies between `λ_j` and `λ_{j+1}`.
pub fn spectral_gap(spec: &GalerkinSpec, j: usize, lambda: f64) -> Result<ConditionReport> {
    let l = spec.eigenvalues()?;
    if j < 1 || j >= l.len() {
        return Err(Error::dim(format!(
            "gap index must satisfy 1 <= j < N = {}, got {j}",
            l.len()
        )));
    }
    let (lo, hi) = (l[j - 1], l[j]);
    if hi <= lo {
        return Err(Error::DegenerateGap { j });
    }
    let e = spec.alpha - spec.beta;
    let (wl, wh) = (lo.powf(e), hi.powf(e));
    let lhs = (hi - lo) / (wl + wh);
    let nu0 = (wh * lo + wl * hi) / (wl + wh);
    debug_assert!(lo < nu0 && nu0 < hi);
    Ok(ConditionReport::new(
        ConditionKind::SpectralGap,
        lhs - lambda,
        nu0,
        j,
        Diagnostics {
            lhs: Some(lhs),
            ..Diagnostics::default()
        },
    ))
}

/// Small-delay bound `√r e^{τν0} / (ν0 (1 - ϰ)) < 1/Λ`, `ϰ = e^{τν0}‖D0‖`.
pub fn small_delay_check(
    spec: &DelaySpec,
    r: usize,
    lambda: f64,
    nu0: f64,
) -> Result<ConditionReport> {
    small_delay_bound(spec.tau, spec.d0_norm, r, lambda, nu0)
}

/// The same bound from explicit `τ` and `‖D0‖`.
pub fn small_delay_bound(
    tau: f64,
    d0: f64,
    r: usize,
    lambda: f64,
    nu0: f64,
) -> Result<ConditionReport> {
    if !(nu0 > 0.0) {
        return Err(Error::pre(format!(
            "small-delay check needs nu0 > 0, got {nu0}"
        )));
    }
    let growth = (tau * nu0).exp();
    let kappa = growth * d0;
    if kappa >= 1.0 {
        return Err(Error::KappaExceedsOne { kappa });
    }
    let lhs = (r as f64).sqrt() * growth / nu0 / (1.0 - kappa);
    let margin = if lambda == 0.0 {
        f64::INFINITY
    } else {
        1.0 / lambda - lhs
    };
    Ok(ConditionReport::new(
        ConditionKind::SmallDelay,
        margin,
        nu0,
        0,
        Diagnostics {
            lhs: Some(lhs),
            kappa: Some(kappa),
            ..Diagnostics::default()
        },
    ))
}

/// Largest τ for which the check with `D0 = 0` and `ν0 = 1/τ` holds, by bisection.
pub fn small_delay_tau_threshold(r: usize, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || r == 0 {
        return Err(Error::pre("threshold needs Λ > 0 and r >= 1"));
    }
    let holds = |tau: f64| -> Result<bool> {
        Ok(small_delay_bound(tau, 0.0, r, lambda, 1.0 / tau)?.margin > 0.0)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while holds(hi)? {
        lo = hi;
        hi *= 2.0;
    }
    if lo == 0.0 {
        lo = hi;
        while !holds(lo)? {
            hi = lo;
            lo /= 2.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy)]
pub struct ScpOptions {
    /// Admissible range `[α⁻, α⁺]` of the time-dependent exponent.
    pub band: (f64, f64),
    pub samples: usize,
    pub horizon: f64,
    pub seed: u64,
    pub h: Option<f64>,
}

impl ScpOptions {
    pub fn for_field(cf: &ConeField) -> Self {
        ScpOptions {
            band: (cf.nu0, cf.nu0),
            samples: 32,
            horizon: 2.0,
            seed: 42,
            h: None,
        }
    }
}

/// Sampled version of `d/dt V(ξ) + 2α(t) V(ξ) <= -δ|ξ|²` along variational trajectories.
///
/// At each grid time the best exponent in the band gives the effective
/// `δ_eff(t) = max_α (-V' - 2αV)/|ξ|²`; the margin is `min δ_eff - δ_P/2`.
pub fn scp_sampled_check(
    sys: &SystemSpec,
    cf: &ConeField,
    opts: &ScpOptions,
    exec: Exec,
) -> Result<ConditionReport> {
    let n = sys.n();
    if cf.p.nrows() != n {
        return Err(Error::dim(format!(
            "cone field has dimension {}, system {n}",
            cf.p.nrows()
        )));
    }
    if !sys.nonlinearity.has_derivative {
        return Err(Error::DerivativeUnavailable);
    }
    let (lo, hi) = opts.band;
    if lo > hi {
        return Err(Error::pre(format!("empty exponent band [{lo}, {hi}]")));
    }
    let h = opts.h.unwrap_or_else(|| sys.default_step());
    let radius = sys.hints.ball_radius.unwrap_or(5.0);
    let per_sample = exec.try_map(opts.samples, |i| -> Result<(f64, f64)> {
        let mut rng = item_rng(opts.seed, i);
        let v0 = ball_point(&mut rng, n, radius);
        let xi0 = unit_vector(&mut rng, n);
        let q0 = vec![0.0; sys.forcing.driving_dim()];
        let mut x0 = v0;
        x0.extend_from_slice(&xi0);
        let mut y = vec![0.0; sys.r()];
        let field = |t: f64, x: &[f64], out: &mut [f64]| {
            let q = drive(&sys.forcing, &q0, t);
            sys.rhs(&q, &x[..n], &mut out[..n], &mut y);
            let jac = sys.jacobian(&x[..n]).expect("derivative checked");
            for r in 0..n {
                out[n + r] = (0..n).map(|c| jac[(r, c)] * x[n + c]).sum();
            }
        };
        let mut worst = (f64::INFINITY, 0.0);
        rk4(field, &x0, 0.0, opts.horizon, h, |t, x| {
            let xi = &x[n..];
            let size2 = xi.iter().map(|v| v * v).sum::<f64>();
            if size2 == 0.0 {
                return;
            }
            let jac = sys.jacobian(&x[..n]).expect("derivative checked");
            let xv = nalgebra::DVector::from_column_slice(xi);
            let pxi = &cf.p * &xv;
            let v = xv.dot(&pxi);
            let dv = 2.0 * pxi.dot(&(jac * &xv));
            let eff = (-dv - 2.0 * lo * v).max(-dv - 2.0 * hi * v) / size2;
            if eff < worst.0 {
                worst = (eff, t);
            }
        })?;
        Ok(worst)
    })?;
    let mut margin = f64::INFINITY;
    let mut diag = Diagnostics::default();
    for (i, (eff, t)) in per_sample.iter().enumerate() {
        let m = eff - cf.delta / 2.0;
        if m < margin {
            margin = m;
            diag.worst_sample = Some(i);
            diag.worst_time = Some(*t);
        }
    }
    Ok(ConditionReport::new(
        ConditionKind::ScpSampled,
        margin,
        cf.nu0,
        cf.j,
        diag,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{fixture, DelayTap};

    fn diag(d: &[f64]) -> RealMatrix {
        RealMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
    }

    #[test]
    fn unstable_counts() {
        let g = count_unstable(&diag(&[1.0, -3.0]), 1.0).unwrap();
        assert_eq!(g.j, 1);
        assert!((g.distance - 2.0).abs() < 1e-12);
        assert_eq!(count_unstable(&diag(&[-2.0]), 1.0).unwrap().j, 0);
        assert!(matches!(
            count_unstable(&diag(&[-1.0]), 1.0),
            Err(Error::OnDichotomyLine { .. })
        ));
    }

    #[test]
    fn rational_tf_matches_resolvent() {
        let sys = fixture("SYS-ODE3").unwrap();
        let tf = TransferFunction::rational(&sys);
        let p = Complex64::new(-0.7, 1.3);
        let w = tf.eval(p).unwrap();
        let m = sys.a.map(|x| Complex64::new(x, 0.0)) - ComplexMatrix::identity(3, 3) * p;
        let direct = sys.c.map(|x| Complex64::new(x, 0.0))
            * m.try_inverse().unwrap()
            * sys.b.map(|x| Complex64::new(x, 0.0));
        assert!((w - direct).norm() < 1e-13);
    }

    #[test]
    fn scalar_sweep_matches_closed_form() {
        let sys = fixture("SYS-SCALAR").unwrap();
        let tf = TransferFunction::rational(&sys);
        let r = frequency_sweep(&tf, 0.0, 1.0, None, Exec::Parallel).unwrap();
        assert!((r.diagnostics.sup_norm.unwrap() - 0.5).abs() < 1e-6);
        assert!((r.margin - 0.5).abs() < 1e-6 && r.pass);
        assert!(r.diagnostics.worst_omega.unwrap().abs() < 1e-6);
        let r = frequency_sweep(&tf, 1.0, 1.0, None, Exec::Parallel).unwrap();
        assert!((r.diagnostics.sup_norm.unwrap() - 1.0).abs() < 1e-6);
        assert!(!r.pass);
    }

    #[test]
    fn zero_lambda_has_infinite_margin() {
        let sys = fixture("SYS-LIN2").unwrap();
        let r = check_frequency(&sys, 1.0, 0.0, Exec::Sequential).unwrap();
        assert!(r.pass && r.margin.is_infinite());
        assert_eq!(r.j, 1);
    }

    #[test]
    fn pure_delay_sweep() {
        let spec = DelaySpec {
            tau: 0.1,
            d0_norm: 0.0,
            d0_taps: vec![],
            a_taps: vec![],
            taps: vec![DelayTap {
                output: 0,
                component: 0,
                lag: 0.1,
                weight: 1.0,
            }],
            n_chain: 8,
        };
        let tf = TransferFunction::delay(
            &spec,
            &RealMatrix::zeros(1, 1),
            &RealMatrix::from_element(1, 1, 1.0),
        );
        let w = tf.eval(Complex64::new(-5.0, 2.0)).unwrap()[(0, 0)];
        let p = Complex64::new(-5.0, 2.0);
        assert!((w - (-(-p * 0.1).exp() / p)).norm() < 1e-14);
        let r = frequency_sweep(&tf, 5.0, 1.0, None, Exec::Parallel).unwrap();
        let expected = 0.5f64.exp() / 5.0;
        assert!(
            (r.diagnostics.sup_norm.unwrap() - expected).abs() < 1e-6,
            "{r:?}"
        );
        assert!(r.pass);
    }

    #[test]
    fn sweep_is_monotone_in_lambda() {
        let sys = fixture("SYS-ODE3").unwrap();
        let tf = TransferFunction::rational(&sys);
        let mut was_fail = false;
        for k in 1..12 {
            let r = frequency_sweep(&tf, 2.5, 0.25 * k as f64, None, Exec::Parallel).unwrap();
            assert!(!(was_fail && r.pass));
            was_fail |= !r.pass;
        }
        assert!(was_fail);
    }

    #[test]
    fn diagonal_sup_closed_form() {
        // W = diag(1/(1-p), 1/(-3-p)) on Re p = -1 peaks at 1/2
        let sys = fixture("SYS-LIN2").unwrap();
        let r = frequency_sweep(
            &TransferFunction::rational(&sys),
            1.0,
            1.0,
            None,
            Exec::Parallel,
        )
        .unwrap();
        assert!((r.diagnostics.sup_norm.unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn spectral_gap_examples() {
        let r = spectral_gap(&GalerkinSpec::squares(8, 0.0, 0.0), 3, 3.0).unwrap();
        assert!((r.margin - 0.5).abs() < 1e-12 && (r.nu0 - 12.5).abs() < 1e-12 && r.pass);
        let r = spectral_gap(&GalerkinSpec::squares(8, 0.5, 0.0), 3, 0.9).unwrap();
        assert!((r.diagnostics.lhs.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.nu0 - 12.0).abs() < 1e-12 && r.pass);
        let spec = GalerkinSpec {
            lambdas: crate::system::Eigenvalues::Explicit(vec![1.0, 4.0, 4.0, 9.0]),
            alpha: 0.0,
            beta: 0.0,
            n: 4,
        };
        assert!(matches!(
            spectral_gap(&spec, 2, 1.0),
            Err(Error::DegenerateGap { j: 2 })
        ));
        assert!(matches!(
            spectral_gap(&spec, 4, 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn optimal_nu0_balances_terms() {
        for (a, j) in [(0.3, 2), (0.5, 3), (0.9, 5)] {
            let spec = GalerkinSpec::squares(8, a, 0.0);
            let l = spec.eigenvalues().unwrap();
            let r = spectral_gap(&spec, j, 0.1).unwrap();
            let (lo, hi) = (l[j - 1], l[j]);
            let diff = lo.powf(a) / (r.nu0 - lo) - hi.powf(a) / (hi - r.nu0);
            assert!(diff.abs() <= 1e-12 * hi, "{diff}");
        }
    }

    #[test]
    fn small_delay_examples() {
        let r = small_delay_bound(0.1, 0.2, 1, 2.0, 5.0).unwrap();
        assert!((r.diagnostics.kappa.unwrap() - 0.2 * 0.5f64.exp()).abs() < 1e-15);
        assert!((r.diagnostics.kappa.unwrap() - 0.3297).abs() < 1e-4);
        assert!((r.diagnostics.lhs.unwrap() - 0.4919).abs() < 1e-4);
        assert!(r.pass);
        let tau = small_delay_tau_threshold(1, 1.0).unwrap();
        assert!((tau - (-1f64).exp()).abs() < 1e-12, "{tau}");
        assert!(matches!(
            small_delay_bound(0.1, 1.0, 1, 1.0, 3.0),
            Err(Error::KappaExceedsOne { .. })
        ));
        assert!(matches!(
            small_delay_bound(0.1, 0.0, 1, 1.0, 0.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn scp_on_linear_fixture_reaches_half_margin() {
        use crate::synthesis::{synthesize_p, SynthesisOptions};
        let sys = fixture("SYS-LIN2").unwrap();
        let cf = synthesize_p(&sys, 1.0, &SynthesisOptions::default()).unwrap();
        let opts = ScpOptions {
            samples: 8,
            h: Some(1e-3),
            ..ScpOptions::for_field(&cf)
        };
        let r = scp_sampled_check(&sys, &cf, &opts, Exec::Parallel).unwrap();
        assert!(r.pass && r.margin >= cf.delta / 2.0 - 1e-9, "{r:?}");
    }

    #[test]
    fn scp_fails_past_the_certificate() {
        use crate::synthesis::{synthesize_p, SynthesisOptions};
        let sys = fixture("SYS-ODE3").unwrap();
        let cf = synthesize_p(&sys, 2.5, &SynthesisOptions::default()).unwrap();
        let opts = ScpOptions {
            samples: 16,
            h: Some(1e-3),
            ..ScpOptions::for_field(&cf)
        };
        assert!(
            scp_sampled_check(&sys, &cf, &opts, Exec::Parallel)
                .unwrap()
                .pass
        );
        let loud = sys.with_scaled_nonlinearity(4.0);
        assert!(
            !scp_sampled_check(&loud, &cf, &opts, Exec::Parallel)
                .unwrap()
                .pass
        );
        // no samples: the inequality holds vacuously
        let none = ScpOptions { samples: 0, ..opts };
        assert!(
            scp_sampled_check(&sys, &cf, &none, Exec::Parallel)
                .unwrap()
                .pass
        );
    }
}
