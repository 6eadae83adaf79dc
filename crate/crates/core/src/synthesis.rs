//! Synthesis of the indefinite quadratic form `V(v) = vᵀPv` from the
//! Riccati equation `A_νᵀP + PA_ν + PBBᵀP + Λ²CᵀC + δI = 0`, `A_ν = A + ν0 I`,
//! and the constants derived from it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::conditions::count_unstable;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flow::{cumulative_trapezoid, integrate_pair, trapezoid_error_bound};
use crate::linalg::{
    canonical_signs, eig_general, invariant_subspace, inverse, min_singular_value,
    operator_norm2_real, orthogonal_complement, orthonormal_basis, symmetric_eigen, symmetrize,
    RealMatrix,
};
use crate::sample::{ball_point, item_rng};
use crate::system::SystemSpec;

/// Relative distance to the imaginary axis below which the Hamiltonian has no dichotomy.
const AXIS_TOL: f64 = 1e-8;
const X_COND_MIN: f64 = 1e-12;

/// A constant cone field with its splitting and constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ConeFieldJson", try_from = "ConeFieldJson")]
pub struct ConeField {
    pub system: String,
    pub p: RealMatrix,
    pub nu0: f64,
    /// Squeezing margin δ_P.
    pub delta: f64,
    /// Delay of validity; zero for the systems synthesized here.
    pub tau_p: f64,
    /// Lipschitz constant the form was certified for.
    pub lambda: f64,
    pub j: usize,
    /// Orthonormal basis of 𝔼⁻ (n × j).
    pub e_minus: RealMatrix,
    /// Orthonormal basis of 𝔼⁺ (n × (n - j)).
    pub e_plus: RealMatrix,
    /// V-orthogonal projector onto 𝔼⁻ along 𝔼⁺.
    pub pi: RealMatrix,
    pub c_q: f64,
    pub m_p: f64,
    pub m_pi: f64,
    pub kappa0: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConeFieldJson {
    system: String,
    n: usize,
    j: usize,
    nu0: f64,
    delta: f64,
    tau_p: f64,
    lambda: f64,
    #[serde(rename = "P")]
    p: Vec<f64>,
    e_minus: Vec<f64>,
    e_plus: Vec<f64>,
    pi: Vec<f64>,
    /// Absent when 𝔼⁻ is trivial.
    c_q: Option<f64>,
    m_p: f64,
    m_pi: f64,
    #[serde(default)]
    kappa0: Option<f64>,
}

fn row_major(m: &RealMatrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<RealMatrix> {
    if data.len() != rows * cols {
        return Err(Error::Schema {
            path: what.into(),
            message: format!("expected {} entries, got {}", rows * cols, data.len()),
        });
    }
    Ok(RealMatrix::from_row_slice(rows, cols, data))
}

impl From<ConeField> for ConeFieldJson {
    fn from(cf: ConeField) -> Self {
        ConeFieldJson {
            system: cf.system,
            n: cf.p.nrows(),
            j: cf.j,
            nu0: cf.nu0,
            delta: cf.delta,
            tau_p: cf.tau_p,
            lambda: cf.lambda,
            p: row_major(&cf.p),
            e_minus: row_major(&cf.e_minus),
            e_plus: row_major(&cf.e_plus),
            pi: row_major(&cf.pi),
            c_q: cf.c_q.is_finite().then_some(cf.c_q),
            m_p: cf.m_p,
            m_pi: cf.m_pi,
            kappa0: cf.kappa0,
        }
    }
}

impl TryFrom<ConeFieldJson> for ConeField {
    type Error = Error;

    fn try_from(raw: ConeFieldJson) -> Result<Self> {
        let (n, j) = (raw.n, raw.j);
        if j > n {
            return Err(Error::Schema {
                path: "j".into(),
                message: format!("j = {j} exceeds n = {n}"),
            });
        }
        Ok(ConeField {
            system: raw.system,
            p: from_row_major(n, n, &raw.p, "P")?,
            nu0: raw.nu0,
            delta: raw.delta,
            tau_p: raw.tau_p,
            lambda: raw.lambda,
            j,
            e_minus: from_row_major(n, j, &raw.e_minus, "e_minus")?,
            e_plus: from_row_major(n, n - j, &raw.e_plus, "e_plus")?,
            pi: from_row_major(n, n, &raw.pi, "pi")?,
            c_q: raw.c_q.unwrap_or(f64::INFINITY),
            m_p: raw.m_p,
            m_pi: raw.m_pi,
            kappa0: raw.kappa0,
        })
    }
}

impl ConeField {
    /// Completes a symmetric `p` with the splitting taken from the spectral
    /// subspace of `a` for Re λ > -nu0.
    pub fn from_p(
        system: &str,
        p: RealMatrix,
        a: &RealMatrix,
        nu0: f64,
        delta: f64,
        lambda: f64,
    ) -> Result<Self> {
        if p.nrows() != a.nrows() || !p.is_square() {
            return Err(Error::dim("P and A must have the same square shape"));
        }
        let j = count_unstable(a, nu0)?.j;
        let e_minus = invariant_subspace(a, |l| l.re > -nu0)?;
        debug_assert_eq!(e_minus.ncols(), j);
        Self::with_splitting(system, p, e_minus, nu0, delta, lambda)
    }

    /// Completes a symmetric `p` given an orthonormal basis of 𝔼⁻; checks the
    /// inertia of `p` against its dimension.
    pub fn with_splitting(
        system: &str,
        p: RealMatrix,
        e_minus: RealMatrix,
        nu0: f64,
        delta: f64,
        lambda: f64,
    ) -> Result<Self> {
        let n = p.nrows();
        if !p.is_square() || e_minus.nrows() != n {
            return Err(Error::dim("P must be square and match the 𝔼⁻ basis"));
        }
        let p = symmetrize(&p);
        let j = e_minus.ncols();
        let scale = operator_norm2_real(&p).max(f64::MIN_POSITIVE);
        let eig = symmetric_eigen(&p)?;
        let tol = 1e-12 * scale;
        let found = eig.count_negative(tol);
        if found != j || eig.count_positive(tol) != n - j {
            return Err(Error::InertiaMismatch { expected: j, found });
        }
        let (pi, e_plus, c_q) = if j == 0 {
            (
                RealMatrix::zeros(n, n),
                RealMatrix::identity(n, n),
                f64::INFINITY,
            )
        } else {
            let restricted = e_minus.transpose() * &p * &e_minus;
            let r_eig = symmetric_eigen(&restricted)?;
            if r_eig.max() >= 0.0 {
                return Err(Error::NotAdmissibleProjector {
                    side: "range",
                    expected: "negative",
                });
            }
            let pi = &e_minus * inverse(&restricted)? * e_minus.transpose() * &p;
            let pe = orthonormal_basis(&(&p * &e_minus), 1e-12);
            let e_plus = if j == n {
                RealMatrix::zeros(n, 0)
            } else {
                canonical_signs(orthogonal_complement(&pe)?)
            };
            (pi, e_plus, (-r_eig.max()).sqrt())
        };
        if e_plus.ncols() > 0 && symmetric_eigen(&(e_plus.transpose() * &p * &e_plus))?.min() <= 0.0
        {
            return Err(Error::NotAdmissibleProjector {
                side: "kernel",
                expected: "positive",
            });
        }
        let m_pi = operator_norm2_real(&pi);
        Ok(ConeField {
            system: system.into(),
            m_p: scale,
            p,
            nu0,
            delta,
            tau_p: 0.0,
            lambda,
            j,
            e_minus,
            e_plus,
            pi,
            c_q,
            m_pi,
            kappa0: None,
        })
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn v(&self, v: &[f64]) -> f64 {
        let x = DVector::from_column_slice(v);
        x.dot(&(&self.p * &x))
    }

    /// `V(Π⁺v) + κ² V(Πv)`.
    pub fn v_kappa(&self, v: &[f64], kappa: f64) -> f64 {
        let (minus, plus) = self.split(v);
        self.v(&plus) + kappa * kappa * self.v(&minus)
    }

    /// `(Πv, v - Πv)`.
    pub fn split(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let x = DVector::from_column_slice(v);
        let minus = &self.pi * &x;
        let plus = &x - &minus;
        (minus.as_slice().to_vec(), plus.as_slice().to_vec())
    }

    /// Coordinates of `Πv` in the 𝔼⁻ basis.
    pub fn chart(&self, v: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(v);
        (self.e_minus.transpose() * (&self.pi * x))
            .as_slice()
            .to_vec()
    }

    /// Point of 𝔼⁻ with the given coordinates.
    pub fn lift(&self, zeta: &[f64]) -> Vec<f64> {
        (&self.e_minus * DVector::from_column_slice(zeta))
            .as_slice()
            .to_vec()
    }

    /// Same field with `P` negated; an adversarial certificate for negative tests.
    pub fn flipped(&self) -> Self {
        let mut cf = self.clone();
        cf.p = -&self.p;
        cf
    }
}

/// Stabilizing solution of `A_νᵀP + PA_ν + PBBᵀP + Q = 0`, `Q = Λ²CᵀC + δI`,
/// from the stable invariant subspace of the Hamiltonian.
pub fn riccati(
    a_nu: &RealMatrix,
    b: &RealMatrix,
    c: &RealMatrix,
    lambda: f64,
    delta: f64,
) -> Result<RealMatrix> {
    let n = a_nu.nrows();
    let q = c.transpose() * c * (lambda * lambda) + RealMatrix::identity(n, n) * delta;
    let mut h = RealMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a_nu);
    h.view_mut((0, n), (n, n)).copy_from(&(b * b.transpose()));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a_nu.transpose()));
    let scale = operator_norm2_real(&h).max(1.0);
    let min_abs_re = eig_general(&h)?
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    if min_abs_re <= AXIS_TOL * scale {
        return Err(Error::HamiltonianEigsOnAxis { min_abs_re });
    }
    let basis = invariant_subspace(&h, |l| l.re < 0.0)?;
    if basis.ncols() != n {
        return Err(Error::HamiltonianEigsOnAxis { min_abs_re });
    }
    let x = basis.rows(0, n).into_owned();
    let y = basis.rows(n, n).into_owned();
    let cond = min_singular_value(&x) / operator_norm2_real(&x).max(f64::MIN_POSITIVE);
    if cond < X_COND_MIN {
        return Err(Error::XSingular { cond });
    }
    Ok(symmetrize(&(y * inverse(&x)?)))
}

/// `A_νᵀP + PA_ν + PBBᵀP + Λ²CᵀC`, the Schur complement of the dissipation
/// block `[[A_νᵀP + PA_ν + Λ²CᵀC, PB], [BᵀP, -I]]`. Its top eigenvalue is the
/// worst-case rate `max_{|x| = 1} max_u` of the block's quadratic form.
pub fn schur_complement(
    a_nu: &RealMatrix,
    b: &RealMatrix,
    c: &RealMatrix,
    p: &RealMatrix,
    lambda: f64,
) -> RealMatrix {
    let pb = p * b;
    symmetrize(
        &(a_nu.transpose() * p
            + p * a_nu
            + &pb * pb.transpose()
            + c.transpose() * c * (lambda * lambda)),
    )
}

/// The full dissipation block, for the semidefiniteness check.
pub fn lmi_block(
    a_nu: &RealMatrix,
    b: &RealMatrix,
    c: &RealMatrix,
    p: &RealMatrix,
    lambda: f64,
    delta: f64,
) -> RealMatrix {
    let n = a_nu.nrows();
    let m = b.ncols();
    let top = a_nu.transpose() * p
        + p * a_nu
        + c.transpose() * c * (lambda * lambda)
        + RealMatrix::identity(n, n) * delta;
    let pb = p * b;
    let mut blk = RealMatrix::zeros(n + m, n + m);
    blk.view_mut((0, 0), (n, n)).copy_from(&top);
    blk.view_mut((0, n), (n, m)).copy_from(&pb);
    blk.view_mut((n, 0), (m, n)).copy_from(&pb.transpose());
    blk.view_mut((n, n), (m, m))
        .copy_from(&(-RealMatrix::identity(m, m)));
    symmetrize(&blk)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthesisOptions {
    /// δ as a fraction of the largest feasible δ.
    pub delta_fraction: f64,
    /// Fixed δ, bypassing the search.
    pub delta: Option<f64>,
    /// Certification constant; the larger of this, the system's declared one
    /// and the fixture hint is used.
    pub lambda: Option<f64>,
    pub bisection_steps: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            delta_fraction: 0.5,
            delta: None,
            lambda: None,
            bisection_steps: 20,
        }
    }
}

pub fn certification_lambda(sys: &SystemSpec, opts: &SynthesisOptions) -> f64 {
    [Some(sys.lambda()), sys.hints.lambda_certify, opts.lambda]
        .into_iter()
        .flatten()
        .fold(0.0, f64::max)
}

fn try_field(
    sys: &SystemSpec,
    a_nu: &RealMatrix,
    nu0: f64,
    lambda: f64,
    delta: f64,
) -> Result<ConeField> {
    let p = riccati(a_nu, &sys.b, &sys.c, lambda, delta)?;
    ConeField::from_p(&sys.name, p, &sys.a, nu0, delta, lambda)
}

/// Largest δ (up to bisection resolution) for which synthesis succeeds.
pub fn delta_max(sys: &SystemSpec, nu0: f64, lambda: f64, steps: usize) -> Result<f64> {
    let n = sys.n();
    let a_nu = &sys.a + RealMatrix::identity(n, n) * nu0;
    try_field(sys, &a_nu, nu0, lambda, 0.0)?;
    let ok = |d: f64| try_field(sys, &a_nu, nu0, lambda, d).is_ok();
    let scale =
        1.0 + operator_norm2_real(&a_nu) + lambda * lambda * operator_norm2_real(&sys.c).powi(2);
    let mut d = 1e-3 * scale;
    let (mut lo, mut hi);
    if ok(d) {
        lo = d;
        loop {
            d *= 2.0;
            if d > 1e12 * scale {
                return Ok(lo);
            }
            if !ok(d) {
                hi = d;
                break;
            }
            lo = d;
        }
    } else {
        hi = d;
        lo = 0.0;
        for _ in 0..40 {
            d /= 2.0;
            if ok(d) {
                lo = d;
                break;
            }
            hi = d;
        }
        if lo == 0.0 {
            return Ok(0.0);
        }
    }
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Riccati synthesis with `δ = delta_fraction · δ_max` (or the fixed δ).
pub fn synthesize_p(sys: &SystemSpec, nu0: f64, opts: &SynthesisOptions) -> Result<ConeField> {
    let n = sys.n();
    let lambda = certification_lambda(sys, opts);
    let a_nu = &sys.a + RealMatrix::identity(n, n) * nu0;
    if let Some(delta) = opts.delta {
        return try_field(sys, &a_nu, nu0, lambda, delta);
    }
    if !(opts.delta_fraction > 0.0 && opts.delta_fraction < 1.0) {
        return Err(Error::pre(format!(
            "delta fraction must lie in (0, 1), got {}",
            opts.delta_fraction
        )));
    }
    let dmax = delta_max(sys, nu0, lambda, opts.bisection_steps)?;
    if dmax <= 0.0 {
        return Err(Error::pre("no positive squeezing margin is feasible"));
    }
    let mut delta = opts.delta_fraction * dmax;
    let mut last = None;
    for _ in 0..=10 {
        match try_field(sys, &a_nu, nu0, lambda, delta) {
            Ok(cf) => return Ok(cf),
            Err(e) => last = Some(e),
        }
        delta /= 2.0;
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldChecks {
    pub symmetry: f64,
    pub idempotence: f64,
    /// Worst `|V(v) - V(Πv) - V(v - Πv)| / (‖P‖ |v|²)` over random vectors.
    pub orthogonality: f64,
    pub range_residual: f64,
    pub projector_bound_ok: bool,
    /// `λ_max` of the Schur complement; should sit at `-δ`.
    pub schur_max: f64,
    pub block_max: f64,
    pub riccati_residual: f64,
    pub ok: bool,
}

/// Re-verifies the algebraic invariants of a synthesized field.
pub fn check_field(sys: &SystemSpec, cf: &ConeField, seed: u64) -> Result<FieldChecks> {
    let n = sys.n();
    let a_nu = &sys.a + RealMatrix::identity(n, n) * cf.nu0;
    let symmetry = (&cf.p - cf.p.transpose()).abs().max();
    let idempotence = (&cf.pi * &cf.pi - &cf.pi).abs().max();
    let mut orthogonality = 0.0f64;
    for i in 0..100 {
        let v = ball_point(&mut item_rng(seed, i), n, 1.0);
        let (minus, plus) = cf.split(&v);
        let size = v.iter().map(|x| x * x).sum::<f64>().max(1e-300);
        let err = (cf.v(&v) - cf.v(&minus) - cf.v(&plus)).abs() / (cf.m_p * size);
        orthogonality = orthogonality.max(err);
    }
    let range_residual = if cf.j == 0 {
        0.0
    } else {
        (&cf.pi * &cf.e_minus - &cf.e_minus).abs().max()
    };
    let projector_bound_ok = cf.j == 0 || cf.m_pi <= cf.m_p / (cf.c_q * cf.c_q) * (1.0 + 1e-9);
    let schur = schur_complement(&a_nu, &sys.b, &sys.c, &cf.p, cf.lambda);
    let schur_max = symmetric_eigen(&schur)?.max();
    let block_max = symmetric_eigen(&lmi_block(
        &a_nu, &sys.b, &sys.c, &cf.p, cf.lambda, cf.delta,
    ))?
    .max();
    let riccati_residual = (schur + RealMatrix::identity(n, n) * cf.delta).abs().max();
    let scale = 1.0 + cf.m_p;
    let ok = symmetry <= 1e-12 * scale
        && idempotence <= 1e-10 * (1.0 + cf.m_pi)
        && orthogonality <= 1e-9
        && projector_bound_ok
        && schur_max <= -cf.delta / 2.0 + 1e-8
        && block_max <= 1e-8 * scale;
    Ok(FieldChecks {
        symmetry,
        idempotence,
        orthogonality,
        range_residual,
        projector_bound_ok,
        schur_max,
        block_max,
        riccati_residual,
        ok,
    })
}

/// `L_t = exp(t (‖A‖ + Λ‖B‖‖C‖))`, a Lipschitz bound for the time-t map.
pub fn ulip(sys: &SystemSpec, t: f64) -> f64 {
    (t * sys.rhs_lipschitz()).exp()
}

/// `(‖P‖/δ)^{1/2} · L · e^{α (τ_S + 1)}`.
pub fn lipschitz_bound(norm_p: f64, delta: f64, l: f64, alpha_abs: f64, tau_s: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::pre(format!(
            "squeezing margin must be positive, got {delta}"
        )));
    }
    Ok((norm_p / delta).sqrt() * l * (alpha_abs * (tau_s + 1.0)).exp())
}

/// Predicted Lipschitz constant of manifold graphs; `alpha` is the exponent range.
pub fn clip_constant(cf: &ConeField, l: f64, alpha: (f64, f64), tau_s: f64) -> Result<f64> {
    lipschitz_bound(cf.m_p, cf.delta, l, alpha.0.abs().max(alpha.1.abs()), tau_s)
}

#[derive(Debug, Clone, Copy)]
pub struct BatteryOptions {
    pub pairs: usize,
    pub horizon: f64,
    pub seed: u64,
    pub h: Option<f64>,
    pub radius: Option<f64>,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions {
            pairs: 64,
            horizon: 3.0,
            seed: 42,
            h: None,
            radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaReport {
    pub kappa0: f64,
    pub grid: Vec<f64>,
    /// Largest residual of the perturbed inequality per grid value (≤ 0 passes).
    pub worst: Vec<f64>,
    /// Threshold with the slack factor `L²`.
    pub analytic_l2: f64,
    /// Same with `L⁻²`.
    pub analytic_inv_l2: f64,
}

fn analytic_kappa(cf: &ConeField, factor: f64, tau_s: f64) -> f64 {
    let slack = cf.delta / 2.0 * (-2.0 * cf.nu0.abs() * (tau_s + 1.0)).exp() * factor
        / (cf.m_p * cf.m_pi * cf.m_pi);
    (1.0 - slack).clamp(0.0, 1.0).sqrt()
}

/// Smallest grid κ such that the perturbed inequality
/// `e^{2ν0 r} V^κ(Δ(r)) - V^κ(Δ(0)) <= -(δ/2) ∫_0^r e^{2ν0 s}|Δ(s)|² ds`
/// holds on the pair battery for it and every larger grid value.
pub fn kappa_threshold(
    sys: &SystemSpec,
    cf: &ConeField,
    l: f64,
    tau_s: f64,
    opts: &BatteryOptions,
    exec: Exec,
) -> Result<KappaReport> {
    let grid: Vec<f64> = (1..=20).map(|k| k as f64 * 0.05).collect();
    let n = sys.n();
    let h = opts.h.unwrap_or_else(|| sys.default_step());
    let radius = opts.radius.or(sys.hints.ball_radius).unwrap_or(5.0);
    let horizon = opts.horizon.max(tau_s + 1.0);
    let q0 = vec![0.0; sys.forcing.driving_dim()];
    let per_pair = exec.try_map(opts.pairs, |i| -> Result<Vec<f64>> {
        let mut rng = item_rng(opts.seed, i);
        let v1 = ball_point(&mut rng, n, radius);
        let v2 = ball_point(&mut rng, n, radius);
        let (times, deltas) = integrate_pair(sys, &q0, &v1, &v2, horizon, h)?;
        let dt = if times.len() > 1 {
            times[1] - times[0]
        } else {
            h
        };
        let g: Vec<f64> = times
            .iter()
            .zip(&deltas)
            .map(|(t, d)| (2.0 * cf.nu0 * t).exp() * d.iter().map(|x| x * x).sum::<f64>())
            .collect();
        let integral = cumulative_trapezoid(&g, dt);
        let (m0, p0) = cf.split(&deltas[0]);
        let (vm0, vp0) = (cf.v(&m0), cf.v(&p0));
        let mut worst = vec![f64::NEG_INFINITY; grid.len()];
        let stride = ((times.len() - 1) / 50).max(1);
        for k in (0..times.len()).step_by(stride) {
            if times[k] < tau_s + 1.0 - 1e-12 {
                continue;
            }
            let (m, p) = cf.split(&deltas[k]);
            let (vm, vp) = (cf.v(&m), cf.v(&p));
            let w = (2.0 * cf.nu0 * times[k]).exp();
            let eps = cf.delta / 2.0 * trapezoid_error_bound(&g, dt, k)
                + 1e-12 * (1.0 + w * (vm.abs() + vp.abs()));
            for (kk, kappa) in grid.iter().enumerate() {
                let k2 = kappa * kappa;
                let res =
                    w * (vp + k2 * vm) - (vp0 + k2 * vm0) + cf.delta / 2.0 * integral[k] - eps;
                worst[kk] = worst[kk].max(res);
            }
        }
        Ok(worst)
    })?;
    let worst: Vec<f64> = (0..grid.len())
        .map(|kk| {
            per_pair
                .iter()
                .map(|w| w[kk])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut kappa0 = 1.0;
    for kk in (0..grid.len()).rev() {
        if worst[kk] <= 0.0 {
            kappa0 = grid[kk];
        } else {
            break;
        }
    }
    Ok(KappaReport {
        kappa0,
        analytic_l2: analytic_kappa(cf, l * l, tau_s),
        analytic_inv_l2: analytic_kappa(cf, 1.0 / (l * l), tau_s),
        grid,
        worst,
    })
}
