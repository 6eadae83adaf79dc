//! Graphs `ζ ↦ Φ(ζ)` over 𝔼⁻ coordinates: the graph transform, the pullback
//! construction of the principal leaf, tangent spaces, recharting and nested
//! manifolds.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flow::{drive, flow, flow_variational, integrate};
use crate::interp::{Interpolation, Lattice};
use crate::linalg::{
    eig_general, max_principal_angle, orthonormal_basis, solve_real, symmetric_eigen, RealMatrix,
};
use crate::sample::{norm, sub};
use crate::synthesis::ConeField;
use crate::system::SystemSpec;

const NEWTON_MAX: usize = 50;
const DEFAULT_RADIUS: f64 = 5.0;
const DEFAULT_NODES: usize = 21;

pub(crate) fn mat_vec(m: &RealMatrix, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).as_slice().to_vec()
}

/// How the nodes were produced: plane coordinates at the pullback start.
#[derive(Debug, Clone)]
pub struct PlaneSeeds {
    pub theta: f64,
    pub xi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ManifoldGraph {
    pub system: String,
    pub lattice: Lattice,
    /// `v ↦ ζ`, a `j × n` matrix.
    pub chart: RealMatrix,
    /// Orthonormal basis of the chart's range (`n × j`).
    pub basis: RealMatrix,
    /// Quadratic form used for chord checks.
    pub p: RealMatrix,
    pub values: Vec<Vec<f64>>,
    pub lipschitz_est: f64,
    pub converged: bool,
    pub t_used: f64,
    pub tol: f64,
    pub last_change: f64,
    pub anchor: Vec<f64>,
    /// Driving state the graph lives over.
    pub q: Vec<f64>,
    pub h: f64,
    pub interpolation: Interpolation,
    pub seeds: Option<PlaneSeeds>,
}

/// Metadata written next to the node CSV.
#[derive(Debug, Clone, Serialize)]
pub struct ManifoldSidecar {
    pub system: String,
    pub j: usize,
    pub n: usize,
    pub nodes_per_axis: usize,
    pub radius: f64,
    pub spacing: f64,
    pub center: Vec<f64>,
    pub anchor: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(rename = "T_used")]
    pub t_used: f64,
    pub tol: f64,
    pub last_change: f64,
    pub lipschitz_est: f64,
    pub converged: bool,
    pub chart_residual: f64,
}

impl ManifoldGraph {
    pub fn j(&self) -> usize {
        self.lattice.dim()
    }

    pub fn n(&self) -> usize {
        self.chart.ncols()
    }

    pub fn coords(&self, v: &[f64]) -> Vec<f64> {
        mat_vec(&self.chart, v)
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        self.lattice.points()
    }

    /// Interpolated graph value.
    pub fn eval(&self, zeta: &[f64]) -> Vec<f64> {
        self.lattice
            .interpolate(&self.values, zeta, self.interpolation)
    }

    /// `max_nodes |chart Φ(ζ) - ζ|`.
    pub fn chart_residual(&self) -> f64 {
        self.nodes()
            .iter()
            .zip(&self.values)
            .map(|(z, v)| norm(&sub(&self.coords(v), z)))
            .fold(0.0, f64::max)
    }

    /// Distance of `v` from the graph measured along the chart fibre.
    pub fn fibre_distance(&self, v: &[f64]) -> f64 {
        norm(&sub(v, &self.eval(&self.coords(v))))
    }

    pub fn sidecar(&self) -> ManifoldSidecar {
        ManifoldSidecar {
            system: self.system.clone(),
            j: self.j(),
            n: self.n(),
            nodes_per_axis: self.lattice.nodes,
            radius: self.lattice.radius,
            spacing: self.lattice.spacing(),
            center: self.lattice.center.clone(),
            anchor: self.anchor.clone(),
            q: self.q.clone(),
            t_used: self.t_used,
            tol: self.tol,
            last_change: self.last_change,
            lipschitz_est: self.lipschitz_est,
            converged: self.converged,
            chart_residual: self.chart_residual(),
        }
    }

    pub fn csv_header(&self) -> Vec<String> {
        (1..=self.j())
            .map(|k| format!("zeta_{k}"))
            .chain((1..=self.n()).map(|k| format!("v_{k}")))
            .collect()
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.nodes()
            .into_iter()
            .zip(&self.values)
            .map(|(mut z, v)| {
                z.extend_from_slice(v);
                z
            })
            .collect()
    }
}

/// Largest pairwise ratio `|Φ(ζ1) - Φ(ζ2)| / |ζ1 - ζ2|` and the chord with the
/// largest normalized `V`, reported when it is not strictly negative.
pub fn chord_stats(
    p: &RealMatrix,
    points: &[Vec<f64>],
    values: &[Vec<f64>],
) -> (f64, Option<(usize, usize, f64)>) {
    let scale = crate::linalg::operator_norm2_real(p);
    let mut lip = 0.0_f64;
    let mut worst: Option<(usize, usize, f64)> = None;
    for a in 0..values.len() {
        for b in (a + 1)..values.len() {
            let d = sub(&values[a], &values[b]);
            let dz = norm(&sub(&points[a], &points[b]));
            let nd = norm(&d);
            if dz > 0.0 {
                lip = lip.max(nd / dz);
            }
            if nd == 0.0 {
                continue;
            }
            let x = DVector::from_column_slice(&d);
            let value = x.dot(&(p * &x)) / (scale * nd * nd);
            if value >= -1e-12 && worst.is_none_or(|w| value > w.2) {
                worst = Some((a, b, value));
            }
        }
    }
    (lip, worst)
}

fn check_chords(m: &ManifoldGraph) -> Result<f64> {
    let (lip, worst) = chord_stats(&m.p, &m.nodes(), &m.values);
    match worst {
        Some((a, b, value)) => Err(Error::AdmissibilityLost { a, b, value }),
        None => Ok(lip),
    }
}

/// Damped Newton on a `j`-dimensional residual with a forward-difference
/// Jacobian. `residual` returns the residual and a payload kept for the root.
pub(crate) fn newton<R>(
    residual: R,
    xi0: Vec<f64>,
    tol: f64,
    node: usize,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    R: Fn(&[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let j = xi0.len();
    let mut xi = xi0;
    let (mut r, mut payload) = residual(&xi)?;
    let mut rn = norm(&r);
    for _ in 0..NEWTON_MAX {
        if rn <= tol {
            return Ok((xi, payload));
        }
        let mut jac = RealMatrix::zeros(j, j);
        for c in 0..j {
            let step = 1e-7 * (1.0 + xi[c].abs());
            let mut xp = xi.clone();
            xp[c] += step;
            let (rp, _) = residual(&xp)?;
            for row in 0..j {
                jac[(row, c)] = (rp[row] - r[row]) / step;
            }
        }
        let rhs = RealMatrix::from_column_slice(j, 1, &r);
        let dx =
            solve_real(&jac, &rhs).map_err(|_| Error::NewtonDiverged { node, residual: rn })?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = (0..j).map(|c| xi[c] - alpha * dx[(c, 0)]).collect();
            if let Ok((rt, pt)) = residual(&trial) {
                let tn = norm(&rt);
                if tn < rn {
                    xi = trial;
                    r = rt;
                    rn = tn;
                    payload = pt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rn <= tol {
        Ok((xi, payload))
    } else {
        Err(Error::NewtonDiverged { node, residual: rn })
    }
}

/// Solves every node of `lattice` ring by ring, warm-starting each node
/// from its inward neighbour. `solve(node, guess)` returns `(ξ, value)`.
fn sweep<S>(
    lattice: &Lattice,
    ring0_guess: &[f64],
    exec: Exec,
    solve: S,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)>
where
    S: Fn(usize, &[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Sync + Send,
{
    let total = lattice.len();
    let mut xi: Vec<Option<Vec<f64>>> = vec![None; total];
    let mut values: Vec<Option<Vec<f64>>> = vec![None; total];
    for (r, ring) in lattice.rings().into_iter().enumerate() {
        let solved = exec.try_map(ring.len(), |k| {
            let node = ring[k];
            let guess = if r == 0 {
                ring0_guess.to_vec()
            } else {
                xi[lattice.inward(node)]
                    .clone()
                    .expect("inner ring solved first")
            };
            solve(node, &guess)
        })?;
        for (k, (x, v)) in solved.into_iter().enumerate() {
            xi[ring[k]] = Some(x);
            values[ring[k]] = Some(v);
        }
    }
    Ok((
        xi.into_iter().map(Option::unwrap).collect(),
        values.into_iter().map(Option::unwrap).collect(),
    ))
}

fn newton_tol(zeta: &[f64]) -> f64 {
    1e-11 * (1.0 + norm(zeta))
}

/// Equilibrium by damped Newton from the origin, or the origin itself when
/// Newton fails (or the system is forced) and the flow from it stays bounded.
pub fn find_anchor(sys: &SystemSpec, q: &[f64]) -> Result<Vec<f64>> {
    let n = sys.n();
    if sys.forcing.is_autonomous() {
        let mut x = vec![0.0; n];
        let mut f = sys.rhs_vec(q, &x);
        for _ in 0..NEWTON_MAX {
            if norm(&f) <= 1e-12 * (1.0 + norm(&x)) {
                return Ok(x);
            }
            let jac = match sys.jacobian(&x) {
                Ok(j) => j,
                Err(_) => RealMatrix::from_fn(n, n, |r, c| {
                    let mut xp = x.clone();
                    let step = 1e-7 * (1.0 + x[c].abs());
                    xp[c] += step;
                    (sys.rhs_vec(q, &xp)[r] - f[r]) / step
                }),
            };
            let Ok(dx) = solve_real(&jac, &RealMatrix::from_column_slice(n, 1, &f)) else {
                break;
            };
            let mut alpha = 1.0;
            let fn0 = norm(&f);
            let mut moved = false;
            for _ in 0..30 {
                let trial: Vec<f64> = (0..n).map(|i| x[i] - alpha * dx[(i, 0)]).collect();
                let ft = sys.rhs_vec(q, &trial);
                if norm(&ft) < fn0 {
                    x = trial;
                    f = ft;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }
    let origin = vec![0.0; n];
    match flow(sys, q, &origin, 20.0, sys.default_step()) {
        Ok(end) if norm(&end) < 1e6 => Ok(origin),
        Ok(end) => Err(Error::AnchorNotFound(format!(
            "flow from the origin reaches |v| = {:.3e}",
            norm(&end)
        ))),
        Err(e) => Err(Error::AnchorNotFound(e.to_string())),
    }
}

/// Flow time after which off-manifold components are damped by `e^{-16}`
/// relative to the manifold directions, from the linear spectrum.
pub fn lift_time(sys: &SystemSpec, cf: &ConeField) -> Result<f64> {
    let eig = eig_general(&sys.a)?;
    let inside = eig
        .iter()
        .filter(|l| l.re > -cf.nu0)
        .map(|l| l.re)
        .fold(f64::INFINITY, f64::min);
    let outside = eig
        .iter()
        .filter(|l| l.re <= -cf.nu0)
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = inside - outside;
    Ok(if gap.is_finite() && gap > 0.0 {
        (16.0 / gap).clamp(0.5, 10.0)
    } else {
        0.5
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub radius: Option<f64>,
    pub nodes: Option<usize>,
    /// Pullback increment `T0`.
    pub t0: f64,
    pub t_max: f64,
    pub tol: Option<f64>,
    pub h: Option<f64>,
    pub interpolation: Interpolation,
    pub exec: Exec,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            radius: None,
            nodes: None,
            t0: 1.0,
            t_max: 20.0,
            tol: None,
            h: None,
            interpolation: Interpolation::Cubic,
            exec: Exec::Parallel,
        }
    }
}

impl BuildOptions {
    fn resolve(&self, sys: &SystemSpec) -> (f64, usize, f64, f64) {
        (
            self.radius
                .or(sys.hints.grid_radius)
                .unwrap_or(DEFAULT_RADIUS),
            self.nodes.or(sys.hints.grid_nodes).unwrap_or(DEFAULT_NODES),
            self.tol.or(sys.hints.tol).unwrap_or(1e-7),
            self.h.unwrap_or_else(|| sys.default_step()),
        )
    }
}

fn check_j(cf: &ConeField) -> Result<()> {
    if !(1..=2).contains(&cf.j) {
        return Err(Error::pre(format!(
            "manifold grids need j in {{1, 2}}, certificate has j = {}",
            cf.j
        )));
    }
    Ok(())
}

fn check_pair(sys: &SystemSpec, cf: &ConeField) -> Result<()> {
    if cf.n() != sys.n() || (!cf.system.is_empty() && !sys.name.is_empty() && cf.system != sys.name)
    {
        return Err(Error::pre(format!(
            "certificate for `{}` does not match system `{}`",
            cf.system, sys.name
        )));
    }
    Ok(())
}

/// Pullback limit: the plane `anchor + 𝔼⁻` placed at time `-θ` and flowed to
/// time 0, for `θ = T0, 2T0, …` until the sup-node change drops below `tol`.
pub fn build_manifold(
    sys: &SystemSpec,
    cf: &ConeField,
    q: &[f64],
    opts: &BuildOptions,
) -> Result<ManifoldGraph> {
    check_j(cf)?;
    check_pair(sys, cf)?;
    let (radius, nodes, tol, h) = opts.resolve(sys);
    let anchor = find_anchor(sys, q)?;
    let chart = cf.e_minus.transpose() * &cf.pi;
    let center = mat_vec(&chart, &anchor);
    let lattice = Lattice::new(center.clone(), radius, nodes)?;
    let points = lattice.points();
    let plane = |xi: &[f64]| -> Vec<f64> {
        let off = cf.lift(&sub(xi, &center));
        anchor.iter().zip(&off).map(|(a, o)| a + o).collect()
    };

    let mut best: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> = None;
    let mut change = f64::INFINITY;
    let mut converged = false;
    let mut theta = 0.0;
    let mut k = 1;
    while (k as f64) * opts.t0 <= opts.t_max * (1.0 + 1e-12) {
        theta = k as f64 * opts.t0;
        let q_start = drive(&sys.forcing, q, -theta);
        let (xi, values) = sweep(&lattice, &center, opts.exec, |node, guess| {
            let target = &points[node];
            newton(
                |x| {
                    let end = flow(sys, &q_start, &plane(x), theta, h)?;
                    Ok((sub(&mat_vec(&chart, &end), target), end))
                },
                guess.to_vec(),
                newton_tol(target),
                node,
            )
        })?;
        if let Some((_, prev, _)) = &best {
            change = values
                .iter()
                .zip(prev)
                .map(|(a, b)| norm(&sub(a, b)))
                .fold(0.0, f64::max);
        }
        best = Some((xi, values, theta));
        if change < tol {
            converged = true;
            break;
        }
        k += 1;
    }
    let Some((xi, values, theta_best)) = best else {
        return Err(Error::pre(format!(
            "T_max = {} is below the pullback step {}",
            opts.t_max, opts.t0
        )));
    };
    let mut m = ManifoldGraph {
        system: sys.name.clone(),
        lattice,
        chart,
        basis: cf.e_minus.clone(),
        p: cf.p.clone(),
        values,
        lipschitz_est: 0.0,
        converged,
        t_used: if converged { theta } else { opts.t_max },
        tol,
        last_change: change,
        anchor,
        q: q.to_vec(),
        h,
        interpolation: opts.interpolation,
        seeds: Some(PlaneSeeds {
            theta: theta_best,
            xi,
        }),
    };
    m.lipschitz_est = check_chords(&m)?;
    Ok(m)
}

/// Pushes `m` forward by `ψᵗ(q, ·)` and re-parametrizes over the same lattice.
pub fn graph_transform_step(
    sys: &SystemSpec,
    cf: &ConeField,
    m: &ManifoldGraph,
    t: f64,
    exec: Exec,
) -> Result<ManifoldGraph> {
    check_pair(sys, cf)?;
    if t < cf.tau_p || t <= 0.0 {
        return Err(Error::pre(format!(
            "graph transform needs t >= max(tau_V, 0+), got {t}"
        )));
    }
    check_chords(m)?;
    let points = m.nodes();
    let center = m.lattice.center.clone();
    let (_, values) = sweep(&m.lattice, &center, exec, |node, guess| {
        let target = &points[node];
        newton(
            |x| {
                let end = flow(sys, &m.q, &m.eval(x), t, m.h)?;
                Ok((sub(&m.coords(&end), target), end))
            },
            guess.to_vec(),
            newton_tol(target),
            node,
        )
    })?;
    let mut out = ManifoldGraph {
        values,
        q: drive(&sys.forcing, &m.q, t),
        t_used: m.t_used + t,
        seeds: None,
        anchor: if sys.forcing.is_autonomous() {
            m.anchor.clone()
        } else {
            flow(sys, &m.q, &m.anchor, t, m.h)?
        },
        ..m.clone()
    };
    out.lipschitz_est = check_chords(&out)?;
    Ok(out)
}

/// Off-lattice evaluation of the graph: `Φ(ζ) = ψ^{t_lift}(Φ̃(ξ))` with `ξ`
/// solving `chart ψ^{t_lift}(Φ̃(ξ)) = ζ`, where `Φ̃` is the interpolated graph.
/// The flow damps the interpolation error transversal to the graph.
/// Preimages and Jacobians are precomputed per node, so an evaluation is a
/// chord-Newton solve from interpolated data. Autonomous systems only.
#[derive(Debug, Clone)]
pub struct Lifter {
    system: SystemSpec,
    graph: ManifoldGraph,
    pub t_lift: f64,
    pub h: f64,
    preimages: Vec<Vec<f64>>,
    /// Column-major `j × j` Jacobians of `ξ ↦ chart ψ^{t_lift}(Φ̃(ξ))`.
    jacobians: Vec<Vec<f64>>,
}

impl Lifter {
    pub fn new(sys: &SystemSpec, cf: &ConeField, m: &ManifoldGraph, exec: Exec) -> Result<Self> {
        if !sys.forcing.is_autonomous() {
            return Err(Error::pre("lifted evaluation needs an autonomous system"));
        }
        let t_lift = lift_time(sys, cf)?;
        let h =
            m.h.max(0.03 / sys.rhs_lipschitz().max(1e-12))
                .min(t_lift / 50.0);
        let j = m.j();
        // linearized preimage along the chart directions
        let back = ((&m.chart * &sys.a * &m.basis) * (-t_lift)).exp();
        let center = &m.lattice.center;
        let points = m.nodes();
        let image = |x: &[f64]| flow(sys, &m.q, &m.eval(x), t_lift, h);
        let solved = exec.try_map(points.len(), |node| -> Result<(Vec<f64>, Vec<f64>)> {
            let zeta = &points[node];
            let shift = mat_vec(&back, &sub(zeta, center));
            let guess: Vec<f64> = center.iter().zip(&shift).map(|(c, s)| c + s).collect();
            let (xi, _) = newton(
                |x| Ok((sub(&m.coords(&image(x)?), zeta), Vec::new())),
                guess,
                newton_tol(zeta),
                node,
            )?;
            let base = m.coords(&image(&xi)?);
            let mut jac = Vec::with_capacity(j * j);
            for c in 0..j {
                let step = 1e-6 * (1.0 + xi[c].abs());
                let mut xp = xi.clone();
                xp[c] += step;
                let col = m.coords(&image(&xp)?);
                jac.extend((0..j).map(|r| (col[r] - base[r]) / step));
            }
            Ok((xi, jac))
        })?;
        let (preimages, jacobians) = solved.into_iter().unzip();
        Ok(Lifter {
            system: sys.clone(),
            graph: m.clone(),
            t_lift,
            h,
            preimages,
            jacobians,
        })
    }

    pub fn graph(&self) -> &ManifoldGraph {
        &self.graph
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    pub fn value(&self, zeta: &[f64]) -> Result<Vec<f64>> {
        let m = &self.graph;
        let j = m.j();
        let mode = Interpolation::Cubic;
        let mut xi = m.lattice.interpolate(&self.preimages, zeta, mode);
        let jac = RealMatrix::from_column_slice(
            j,
            j,
            &m.lattice.interpolate(&self.jacobians, zeta, mode),
        );
        let lu = jac.lu();
        let tol = newton_tol(zeta);
        let image = |x: &[f64]| flow(&self.system, &m.q, &m.eval(x), self.t_lift, self.h);
        for _ in 0..12 {
            let end = image(&xi)?;
            let r = sub(&m.coords(&end), zeta);
            if norm(&r) <= tol {
                return Ok(end);
            }
            let Some(dx) = lu.solve(&DVector::from_vec(r)) else {
                break;
            };
            for (x, d) in xi.iter_mut().zip(dx.iter()) {
                *x -= d;
            }
        }
        let (_, end) = newton(
            |x| {
                let end = image(x)?;
                Ok((sub(&m.coords(&end), zeta), end))
            },
            xi,
            tol,
            0,
        )?;
        Ok(end)
    }
}

/// `sup` over interior nodes whose image stays in the box of the distance from
/// `ψᵗ(Φ(ζ))` to the graph, the graph evaluated off-lattice by a [`Lifter`].
pub fn invariance_residual(
    sys: &SystemSpec,
    cf: &ConeField,
    m: &ManifoldGraph,
    t: f64,
    exec: Exec,
) -> Result<f64> {
    let lifter = Lifter::new(sys, cf, m, exec)?;
    let interior: Vec<usize> = (0..m.lattice.len())
        .filter(|&i| m.lattice.ring(i) + 1 < m.lattice.nodes.div_ceil(2))
        .collect();
    let dists = exec.try_map(interior.len(), |k| -> Result<f64> {
        let end = flow(sys, &m.q, &m.values[interior[k]], t, m.h)?;
        let zeta = m.coords(&end);
        if !m.lattice.contains(&zeta, 0.0) {
            return Ok(0.0);
        }
        Ok(norm(&sub(&end, &lifter.value(&zeta)?)))
    })?;
    Ok(dists.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct TangentField {
    /// Orthonormal `n × j` basis per node, stored column-major.
    #[serde(skip)]
    pub bases: Vec<RealMatrix>,
    /// Principal angle to the finite-difference tangent per node (absent for a single node).
    pub fd_angles: Vec<Option<f64>>,
    pub max_fd_angle: f64,
    pub fd_tolerance: f64,
    /// Transport horizon at which each node's iteration settled.
    pub horizons: Vec<f64>,
    /// `max_nodes λmax(SᵀPS)`, non-positive inside the cone.
    pub worst_cone_value: f64,
    /// `min_nodes σmin(chart · S)`.
    pub min_chart_singular: f64,
    pub pass: bool,
}

/// Gram-Schmidt with columns kept in order (positive diagonal).
fn gram_schmidt(m: &RealMatrix) -> Result<RealMatrix> {
    let mut q = m.clone();
    for c in 0..q.ncols() {
        for p in 0..c {
            let proj = q.column(p).dot(&q.column(c));
            let col = q.column(p).into_owned();
            q.column_mut(c).axpy(-proj, &col, 1.0);
        }
        let nc = q.column(c).norm();
        if nc <= 1e-12 * (1.0 + m.column(c).norm()) {
            return Err(Error::SingularMatrix {
                pivot: nc,
                threshold: 1e-12,
            });
        }
        q.column_mut(c).unscale_mut(nc);
    }
    Ok(q)
}

/// Derivative columns of the graph at a node by central differences
/// (second-order one-sided at the boundary).
fn fd_tangent(m: &ManifoldGraph, node: usize) -> Option<RealMatrix> {
    let lat = &m.lattice;
    if lat.nodes < 3 {
        return None;
    }
    let sp = lat.spacing();
    let idx = lat.multi(node);
    let mut out = RealMatrix::zeros(m.n(), lat.dim());
    for axis in 0..lat.dim() {
        let at = |k: usize| {
            let mut i = idx.clone();
            i[axis] = k;
            &m.values[lat.flat(&i)]
        };
        let k = idx[axis];
        let col: Vec<f64> = if k == 0 {
            (0..m.n())
                .map(|r| (-3.0 * at(0)[r] + 4.0 * at(1)[r] - at(2)[r]) / (2.0 * sp))
                .collect()
        } else if k == lat.nodes - 1 {
            (0..m.n())
                .map(|r| (3.0 * at(k)[r] - 4.0 * at(k - 1)[r] + at(k - 2)[r]) / (2.0 * sp))
                .collect()
        } else {
            (0..m.n())
                .map(|r| (at(k + 1)[r] - at(k - 1)[r]) / (2.0 * sp))
                .collect()
        };
        out.set_column(axis, &DVector::from_vec(col));
    }
    Some(out)
}

/// Tangent spaces by transporting an 𝔼⁻ basis along the recorded pullback
/// trajectory of each node, starting further back until the subspace settles.
pub fn build_tangents(
    sys: &SystemSpec,
    cf: &ConeField,
    m: &ManifoldGraph,
    tol: f64,
    exec: Exec,
) -> Result<TangentField> {
    let seeds = m
        .seeds
        .as_ref()
        .ok_or_else(|| Error::pre("tangents need a graph produced by build_manifold"))?;
    if !sys.nonlinearity.has_derivative {
        return Err(Error::DerivativeUnavailable);
    }
    let t0 = 0.5_f64.min(seeds.theta / 2.0);
    let chunks = ((seeds.theta / t0) - 1e-9).ceil().max(1.0) as usize;
    let chunk = seeds.theta / chunks as f64;
    let q_start = drive(&sys.forcing, &m.q, -seeds.theta);
    let center = &m.lattice.center;
    let per_node = exec.try_map(m.lattice.len(), |node| -> Result<(RealMatrix, f64)> {
        let off = cf.lift(&sub(&seeds.xi[node], center));
        let start: Vec<f64> = m.anchor.iter().zip(&off).map(|(a, o)| a + o).collect();
        // path points at the chunk boundaries, earliest first
        let mut path = vec![start];
        for c in 0..chunks {
            let q = drive(&sys.forcing, &q_start, c as f64 * chunk);
            let next = flow(sys, &q, path.last().expect("nonempty"), chunk, m.h)?;
            path.push(next);
        }
        let mut prev: Option<RealMatrix> = None;
        let mut last_change = f64::INFINITY;
        for back in 1..=chunks {
            let mut s = m.basis.clone();
            for c in (chunks - back)..chunks {
                let q = drive(&sys.forcing, &q_start, c as f64 * chunk);
                let (_, l) = flow_variational(sys, &q, &path[c], chunk, m.h)?;
                s = orthonormal_basis(&(l * s), 1e-14);
                if s.ncols() != m.j() {
                    return Err(Error::SubspaceStalled {
                        node,
                        change: f64::NAN,
                    });
                }
            }
            if let Some(p) = &prev {
                last_change = max_principal_angle(p, &s);
                if last_change < tol {
                    return Ok((s, back as f64 * chunk));
                }
            }
            prev = Some(s);
        }
        // a single chunk cannot be compared; accept it only when the flow is linear
        Err(Error::SubspaceStalled {
            node,
            change: last_change,
        })
    })?;
    let fd_tolerance = (5.0 * m.lattice.spacing().powi(2)).max(1e-3);
    let mut fd_angles = Vec::with_capacity(per_node.len());
    let mut worst_cone_value = f64::NEG_INFINITY;
    let mut min_chart_singular = f64::INFINITY;
    for (node, (s, _)) in per_node.iter().enumerate() {
        fd_angles.push(fd_tangent(m, node).map(|fd| max_principal_angle(&fd, s)));
        worst_cone_value =
            worst_cone_value.max(symmetric_eigen(&(s.transpose() * &cf.p * s))?.max());
        min_chart_singular =
            min_chart_singular.min(crate::linalg::min_singular_value(&(&m.chart * s)));
    }
    let max_fd_angle = fd_angles.iter().flatten().copied().fold(0.0, f64::max);
    let pass = max_fd_angle <= fd_tolerance && worst_cone_value <= 0.0 && min_chart_singular > 1e-8;
    let (bases, horizons) = per_node.into_iter().unzip();
    Ok(TangentField {
        bases,
        fd_angles,
        max_fd_angle,
        fd_tolerance,
        horizons,
        worst_cone_value,
        min_chart_singular,
        pass,
    })
}

/// Re-indexes `m` over the range of another admissible projector `pi_alt`.
pub fn rechart(m: &ManifoldGraph, pi_alt: &RealMatrix, exec: Exec) -> Result<ManifoldGraph> {
    let n = m.n();
    let j = m.j();
    if pi_alt.nrows() != n || pi_alt.ncols() != n {
        return Err(Error::dim(format!("projector must be {n}x{n}")));
    }
    let range_err = Error::NotAdmissibleProjector {
        side: "range",
        expected: "negative",
    };
    if orthonormal_basis(pi_alt, 1e-10).ncols() != j {
        return Err(range_err);
    }
    let r = gram_schmidt(&(pi_alt * &m.basis)).map_err(|_| Error::NotAdmissibleProjector {
        side: "range",
        expected: "negative",
    })?;
    if symmetric_eigen(&(r.transpose() * &m.p * &r))?.max() >= 0.0 {
        return Err(range_err);
    }
    let kernel = orthonormal_basis(&(RealMatrix::identity(n, n) - pi_alt), 1e-10);
    if kernel.ncols() != n - j
        || (kernel.ncols() > 0
            && symmetric_eigen(&(kernel.transpose() * &m.p * &kernel))?.min() <= 0.0)
    {
        return Err(Error::NotAdmissibleProjector {
            side: "kernel",
            expected: "positive",
        });
    }
    let chart = r.transpose() * pi_alt;
    let center = mat_vec(&chart, &m.anchor);
    let lattice = Lattice::new(center, m.lattice.radius, m.lattice.nodes)?;
    let old_nodes = m.nodes();
    let old_in_new: Vec<Vec<f64>> = m.values.iter().map(|v| mat_vec(&chart, v)).collect();
    let points = lattice.points();
    let solved = exec.try_map(points.len(), |node| -> Result<Vec<f64>> {
        let target = &points[node];
        let nearest = (0..old_in_new.len())
            .min_by(|&a, &b| {
                norm(&sub(&old_in_new[a], target)).total_cmp(&norm(&sub(&old_in_new[b], target)))
            })
            .expect("nonempty lattice");
        let (_, value) = newton(
            |x| {
                let v = m.eval(x);
                Ok((sub(&mat_vec(&chart, &v), target), v))
            },
            old_nodes[nearest].clone(),
            newton_tol(target),
            node,
        )?;
        Ok(value)
    })?;
    let mut out = ManifoldGraph {
        lattice,
        chart,
        basis: r,
        values: solved,
        seeds: None,
        ..m.clone()
    };
    out.lipschitz_est = check_chords(&out)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct NestedBuild {
    pub outer: ManifoldGraph,
    pub inner: ManifoldGraph,
    pub worst_node: usize,
    pub worst_distance: f64,
}

/// Builds the `j₁`- and `j₂`-dimensional manifolds (`j₂ <= j₁`) and checks
/// that every node of the inner one lies on the outer graph.
pub fn build_nested(
    sys: &SystemSpec,
    outer_cf: &ConeField,
    inner_cf: &ConeField,
    outer_opts: &BuildOptions,
    inner_opts: &BuildOptions,
    tol: f64,
) -> Result<NestedBuild> {
    check_pair(sys, outer_cf)?;
    check_pair(sys, inner_cf)?;
    if inner_cf.j > outer_cf.j {
        return Err(Error::pre(format!(
            "inner dimension {} exceeds outer dimension {}",
            inner_cf.j, outer_cf.j
        )));
    }
    let q = vec![0.0; sys.forcing.driving_dim()];
    let outer = build_manifold(sys, outer_cf, &q, outer_opts)?;
    let inner = build_manifold(sys, inner_cf, &q, inner_opts)?;
    let (worst_node, worst_distance) = inner
        .values
        .iter()
        .map(|v| outer.fibre_distance(v))
        .enumerate()
        .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
    if worst_distance > tol {
        return Err(Error::ContainmentViolated {
            node: worst_node,
            distance: worst_distance,
        });
    }
    Ok(NestedBuild {
        outer,
        inner,
        worst_node,
        worst_distance,
    })
}

/// Sup-node distance between two graphs on the same lattice and chart.
pub fn sup_distance(a: &ManifoldGraph, b: &ManifoldGraph) -> Result<f64> {
    if a.lattice != b.lattice || a.n() != b.n() {
        return Err(Error::dim("graphs live on different lattices"));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| norm(&sub(x, y)))
        .fold(0.0, f64::max))
}

/// Trajectory of the full system recorded for plotting the anchor neighbourhood.
pub fn anchor_trajectory(
    sys: &SystemSpec,
    m: &ManifoldGraph,
    t: f64,
) -> Result<crate::flow::Trajectory> {
    integrate(sys, &m.q, &m.anchor, t, m.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{synthesize_p, SynthesisOptions};
    use crate::system::fixture;

    fn lin2() -> (SystemSpec, ConeField) {
        let sys = fixture("SYS-LIN2").unwrap();
        let cf = synthesize_p(&sys, 1.0, &SynthesisOptions::default()).unwrap();
        (sys, cf)
    }

    #[test]
    fn lin2_manifold_is_the_unstable_axis() {
        let (sys, cf) = lin2();
        let m = build_manifold(&sys, &cf, &[], &BuildOptions::default()).unwrap();
        assert!(m.converged);
        assert!(m.t_used <= 3.0);
        for (z, v) in m.nodes().iter().zip(&m.values) {
            assert!(
                (v[0] - z[0] * cf.e_minus[(0, 0)]).abs() < 1e-6 && v[1].abs() < 1e-6,
                "{z:?} {v:?}"
            );
        }
        assert!(m.chart_residual() < 1e-9);
        assert!((m.lipschitz_est - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unreachable_tolerance_is_flagged() {
        let (sys, cf) = lin2();
        let opts = BuildOptions {
            tol: Some(0.0),
            t_max: 2.0,
            nodes: Some(5),
            ..Default::default()
        };
        let m = build_manifold(&sys, &cf, &[], &opts).unwrap();
        assert!(!m.converged);
        assert_eq!(m.t_used, 2.0);
    }

    #[test]
    fn graph_transform_fixes_the_invariant_graph_and_contracts_offsets() {
        let (sys, cf) = lin2();
        let opts = BuildOptions {
            nodes: Some(11),
            ..Default::default()
        };
        let m = build_manifold(&sys, &cf, &[], &opts).unwrap();
        let step = graph_transform_step(&sys, &cf, &m, 1.0, Exec::Sequential).unwrap();
        assert!(sup_distance(&m, &step).unwrap() < 1e-8);

        let mut plane = m.clone();
        for v in plane.values.iter_mut() {
            v[1] = 1.0;
        }
        let out = graph_transform_step(&sys, &cf, &plane, 1.0, Exec::Sequential).unwrap();
        let expected = (-3.0_f64).exp();
        for (z, v) in out.nodes().iter().zip(&out.values) {
            assert!((v[1] - expected).abs() < 1e-9);
            assert!((out.coords(v)[0] - z[0]).abs() < 1e-9);
        }

        let mut bad = m.clone();
        for (v, z) in bad.values.iter_mut().zip(m.nodes()) {
            v[1] = 3.0 * z[0];
        }
        assert!(matches!(
            graph_transform_step(&sys, &cf, &bad, 1.0, Exec::Sequential),
            Err(Error::AdmissibilityLost { .. })
        ));
    }

    #[test]
    fn lin2_tangents_and_recharting() {
        let (sys, cf) = lin2();
        let opts = BuildOptions {
            nodes: Some(9),
            ..Default::default()
        };
        let m = build_manifold(&sys, &cf, &[], &opts).unwrap();
        let tf = build_tangents(&sys, &cf, &m, 1e-10, Exec::Parallel).unwrap();
        assert!(tf.pass, "{tf:?}");
        for s in &tf.bases {
            assert!(s[(1, 0)].abs() < 1e-9);
        }
        let same = rechart(&m, &cf.pi, Exec::Sequential).unwrap();
        assert!(sup_distance(&m, &same).unwrap() < 1e-12);
        let spectral = RealMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(
            sup_distance(&m, &rechart(&m, &spectral, Exec::Sequential).unwrap()).unwrap() < 1e-10
        );
        // kernel along e1 sits inside the negative cone
        let bad = RealMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            rechart(&m, &bad, Exec::Sequential),
            Err(Error::NotAdmissibleProjector { .. })
        ));
    }

    #[test]
    fn single_node_grid() {
        let (sys, cf) = lin2();
        let opts = BuildOptions {
            nodes: Some(1),
            radius: Some(0.0),
            ..Default::default()
        };
        let m = build_manifold(&sys, &cf, &[], &opts).unwrap();
        assert_eq!(m.values.len(), 1);
        let tf = build_tangents(&sys, &cf, &m, 1e-10, Exec::Sequential).unwrap();
        assert_eq!(tf.fd_angles, vec![None]);
        assert!(tf.pass);
    }

    #[test]
    fn anchor_is_the_equilibrium() {
        let sys = fixture("SYS-SCALAR").unwrap();
        assert_eq!(find_anchor(&sys, &[]).unwrap(), vec![0.0]);
        let forced = fixture("SYS-FORCED2").unwrap();
        assert_eq!(find_anchor(&forced, &[0.0]).unwrap(), vec![0.0, 0.0]);
    }
}
