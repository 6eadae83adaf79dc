//! Control-form systems `v' = A v + B F(C v) + W(q)`, their JSON configs and
//! the named fixtures shipped with the crate.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm2_real, RealMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Ode,
    DelayDiscretized,
    ParabolicGalerkin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinKind {
    Zero,
    /// `a tanh(b y)`
    Sigmoid,
    /// `a (c - c^3 / (3 s^2))` with `c = clamp(y, -s, s)`
    SaturatedCubic,
    /// `a p(clamp(y, -s, s))`, coefficients ascending
    PolynomialWithClamp,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinConfig {
    pub kind: NonlinKind,
    #[serde(default)]
    pub params: NonlinParams,
    pub lambda: f64,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub derivative: bool,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

/// Scalar nonlinearity applied componentwise to `y = C v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    pub kind: NonlinKind,
    pub amplitude: f64,
    pub gain: f64,
    /// `None` means unclamped (only for hand-built blow-up fixtures).
    pub saturation: Option<f64>,
    pub coeffs: Vec<f64>,
    dcoeffs: Vec<f64>,
    /// Declared Lipschitz constant.
    pub lambda: f64,
    pub has_derivative: bool,
}

impl Nonlinearity {
    pub fn zero() -> Self {
        Nonlinearity {
            kind: NonlinKind::Zero,
            amplitude: 0.0,
            gain: 0.0,
            saturation: None,
            coeffs: Vec::new(),
            dcoeffs: Vec::new(),
            lambda: 0.0,
            has_derivative: true,
        }
    }

    pub fn sigmoid(amplitude: f64, gain: f64, lambda: f64) -> Self {
        Nonlinearity {
            kind: NonlinKind::Sigmoid,
            amplitude,
            gain,
            ..Self::zero()
        }
        .with_lambda(lambda)
    }

    pub fn saturated_cubic(amplitude: f64, saturation: f64, lambda: f64) -> Self {
        Nonlinearity {
            kind: NonlinKind::SaturatedCubic,
            amplitude,
            saturation: Some(saturation),
            ..Self::zero()
        }
        .with_lambda(lambda)
    }

    pub fn polynomial(
        amplitude: f64,
        coeffs: Vec<f64>,
        saturation: Option<f64>,
        lambda: f64,
    ) -> Self {
        let dcoeffs = coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect();
        Nonlinearity {
            kind: NonlinKind::PolynomialWithClamp,
            amplitude,
            saturation,
            coeffs,
            dcoeffs,
            ..Self::zero()
        }
        .with_lambda(lambda)
    }

    fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn from_config(cfg: &NonlinConfig) -> Result<Self> {
        let p = &cfg.params;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Schema {
                path: format!("nonlinearity.params.{name}"),
                message: "required for this kind".into(),
            })
        };
        if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
            return Err(Error::Schema {
                path: "nonlinearity.lambda".into(),
                message: format!("must be finite and nonnegative, got {}", cfg.lambda),
            });
        }
        let mut f = match cfg.kind {
            NonlinKind::Zero => Self::zero().with_lambda(cfg.lambda),
            NonlinKind::Sigmoid => Self::sigmoid(
                p.amplitude.unwrap_or(1.0),
                p.gain.unwrap_or(1.0),
                cfg.lambda,
            ),
            NonlinKind::SaturatedCubic => {
                let s = need(p.saturation, "saturation")?;
                if s <= 0.0 {
                    return Err(Error::Schema {
                        path: "nonlinearity.params.saturation".into(),
                        message: "must be positive".into(),
                    });
                }
                Self::saturated_cubic(p.amplitude.unwrap_or(1.0), s, cfg.lambda)
            }
            NonlinKind::PolynomialWithClamp => {
                let s = need(p.saturation, "saturation")?;
                if s <= 0.0 {
                    return Err(Error::Schema {
                        path: "nonlinearity.params.saturation".into(),
                        message: "must be positive".into(),
                    });
                }
                Self::polynomial(
                    p.amplitude.unwrap_or(1.0),
                    p.coeffs.clone(),
                    Some(s),
                    cfg.lambda,
                )
            }
        };
        f.has_derivative = cfg.derivative;
        Ok(f)
    }

    /// Same family with amplitude and declared constant multiplied by `eps`.
    pub fn scaled(&self, eps: f64) -> Self {
        let mut f = self.clone();
        f.amplitude *= eps;
        f.lambda *= eps.abs();
        f
    }

    fn clamp(&self, y: f64) -> (f64, bool) {
        match self.saturation {
            Some(s) if y > s => (s, true),
            Some(s) if y < -s => (-s, true),
            _ => (y, false),
        }
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match self.kind {
            NonlinKind::Zero => 0.0,
            NonlinKind::Sigmoid => self.amplitude * (self.gain * y).tanh(),
            NonlinKind::SaturatedCubic => {
                let s = self.saturation.unwrap_or(f64::INFINITY);
                let (c, _) = self.clamp(y);
                self.amplitude * (c - c * c * c / (3.0 * s * s))
            }
            NonlinKind::PolynomialWithClamp => {
                let (c, _) = self.clamp(y);
                self.amplitude * horner(&self.coeffs, c)
            }
        }
    }

    #[inline]
    pub fn deriv(&self, y: f64) -> f64 {
        match self.kind {
            NonlinKind::Zero => 0.0,
            NonlinKind::Sigmoid => {
                let t = (self.gain * y).tanh();
                self.amplitude * self.gain * (1.0 - t * t)
            }
            NonlinKind::SaturatedCubic => {
                let s = self.saturation.unwrap_or(f64::INFINITY);
                let (c, clamped) = self.clamp(y);
                if clamped {
                    0.0
                } else {
                    self.amplitude * (1.0 - c * c / (s * s))
                }
            }
            NonlinKind::PolynomialWithClamp => {
                let (c, clamped) = self.clamp(y);
                if clamped {
                    0.0
                } else {
                    self.amplitude * horner(&self.dcoeffs, c)
                }
            }
        }
    }

    /// sup |f'| from the closed forms; the clamped polynomial is scanned densely.
    pub fn analytic_lipschitz(&self) -> f64 {
        match self.kind {
            NonlinKind::Zero => 0.0,
            NonlinKind::Sigmoid => (self.amplitude * self.gain).abs(),
            NonlinKind::SaturatedCubic => self.amplitude.abs(),
            NonlinKind::PolynomialWithClamp => match self.saturation {
                None if self.dcoeffs.iter().skip(1).any(|&c| c != 0.0) => f64::INFINITY,
                _ => {
                    let s = self.saturation.unwrap_or(1.0);
                    let k = 20_000;
                    (0..=k)
                        .map(|i| {
                            let y = -s + 2.0 * s * i as f64 / k as f64;
                            (self.amplitude * horner(&self.dcoeffs, y)).abs()
                        })
                        .fold(0.0, f64::max)
                }
            },
        }
    }

    /// Range over which Lipschitz pairs are sampled.
    fn sample_radius(&self) -> f64 {
        match (self.kind, self.saturation) {
            (NonlinKind::Sigmoid, _) => 4.0 / self.gain.abs().max(1e-12),
            (_, Some(s)) => 1.5 * s,
            _ => 10.0,
        }
    }

    /// Samples `pairs` scalar pairs (uniform, near-coincident, and steep ones
    /// around the maximum of |f'|) and checks the declared constant.
    pub fn check_lipschitz(&self, pairs: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.sample_radius();
        let steep = self.steepest_point();
        let bound = self.lambda * (1.0 + 1e-9) + 1e-9;
        for i in 0..pairs {
            let (y1, y2) = match i % 3 {
                0 => (rng.random_range(-r..r), rng.random_range(-r..r)),
                1 => {
                    let y = rng.random_range(-r..r);
                    (y, y + rng.random_range(-1e-4..1e-4) * r)
                }
                _ => {
                    let y = steep + rng.random_range(-1e-3..1e-3) * r;
                    (y, y + 1e-6 * r)
                }
            };
            if y1 == y2 {
                continue;
            }
            let ratio = (self.eval(y1) - self.eval(y2)).abs() / (y1 - y2).abs();
            if ratio > bound {
                return Err(Error::LipschitzViolation {
                    y1: vec![y1],
                    y2: vec![y2],
                    ratio,
                    lambda: self.lambda,
                });
            }
        }
        Ok(())
    }

    fn steepest_point(&self) -> f64 {
        match self.kind {
            NonlinKind::PolynomialWithClamp => {
                let s = self.saturation.unwrap_or(1.0);
                let k = 2_000;
                (0..=k)
                    .map(|i| -s + 2.0 * s * i as f64 / k as f64)
                    .max_by(|a, b| self.deriv(*a).abs().total_cmp(&self.deriv(*b).abs()))
                    .unwrap_or(0.0)
            }
            _ => 0.0,
        }
    }

    pub fn to_config(&self) -> NonlinConfig {
        let params = match self.kind {
            NonlinKind::Zero => NonlinParams::default(),
            NonlinKind::Sigmoid => NonlinParams {
                amplitude: Some(self.amplitude),
                gain: Some(self.gain),
                ..Default::default()
            },
            NonlinKind::SaturatedCubic => NonlinParams {
                amplitude: Some(self.amplitude),
                saturation: self.saturation,
                ..Default::default()
            },
            NonlinKind::PolynomialWithClamp => NonlinParams {
                amplitude: Some(self.amplitude),
                saturation: self.saturation,
                coeffs: self.coeffs.clone(),
                ..Default::default()
            },
        };
        NonlinConfig {
            kind: self.kind,
            params,
            lambda: self.lambda,
            derivative: self.has_derivative,
        }
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingConfig {
    None,
    /// `W(q) = w0 + w_cos cos(2 pi q / period) + w_sin sin(2 pi q / period)`
    Periodic {
        period: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        constant: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        cos: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        sin: Vec<f64>,
    },
    /// `W(q) = w0 + sum_k (w_cos[k] cos(2 pi q_k) + w_sin[k] sin(2 pi q_k))`
    /// over the torus coordinates `q_k`.
    Quasiperiodic {
        frequencies: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        constant: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        cos: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        sin: Vec<Vec<f64>>,
    },
}

/// Driving mode plus the bounded forcing term `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub config: ForcingConfig,
    n: usize,
}

impl Forcing {
    pub fn none(n: usize) -> Self {
        Forcing {
            config: ForcingConfig::None,
            n,
        }
    }

    pub fn new(config: ForcingConfig, n: usize) -> Result<Self> {
        let schema = |path: &str, message: String| Error::Schema {
            path: format!("forcing.{path}"),
            message,
        };
        let check_len = |path: &str, v: &[f64]| {
            if !v.is_empty() && v.len() != n {
                Err(schema(
                    path,
                    format!("expected {n} entries, got {}", v.len()),
                ))
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(schema(path, "entries must be finite".into()))
            } else {
                Ok(())
            }
        };
        match &config {
            ForcingConfig::None => {}
            ForcingConfig::Periodic {
                period,
                constant,
                cos,
                sin,
            } => {
                if !(period.is_finite() && *period > 0.0) {
                    return Err(schema("period", format!("must be positive, got {period}")));
                }
                check_len("constant", constant)?;
                check_len("cos", cos)?;
                check_len("sin", sin)?;
            }
            ForcingConfig::Quasiperiodic {
                frequencies,
                constant,
                cos,
                sin,
            } => {
                let d = frequencies.len();
                if d == 0 || d > 3 {
                    return Err(schema(
                        "frequencies",
                        format!("torus dimension must be 1..=3, got {d}"),
                    ));
                }
                if frequencies.iter().all(|&w| w == 0.0)
                    || frequencies.iter().any(|w| !w.is_finite())
                {
                    return Err(schema(
                        "frequencies",
                        "must be finite and not all zero".into(),
                    ));
                }
                check_len("constant", constant)?;
                for (name, rows) in [("cos", cos), ("sin", sin)] {
                    if !rows.is_empty() && rows.len() != d {
                        return Err(schema(
                            name,
                            format!("expected {d} vectors, got {}", rows.len()),
                        ));
                    }
                    for row in rows {
                        check_len(name, row)?;
                    }
                }
            }
        }
        Ok(Forcing { config, n })
    }

    pub fn is_autonomous(&self) -> bool {
        match &self.config {
            ForcingConfig::None => true,
            ForcingConfig::Periodic { cos, sin, .. } => cos.is_empty() && sin.is_empty(),
            ForcingConfig::Quasiperiodic { cos, sin, .. } => cos.is_empty() && sin.is_empty(),
        }
    }

    pub fn period(&self) -> Option<f64> {
        match &self.config {
            ForcingConfig::Periodic { period, .. } => Some(*period),
            _ => None,
        }
    }

    /// Dimension of the driving state `q`.
    pub fn driving_dim(&self) -> usize {
        match &self.config {
            ForcingConfig::None => 0,
            ForcingConfig::Periodic { .. } => 1,
            ForcingConfig::Quasiperiodic { frequencies, .. } => frequencies.len(),
        }
    }

    /// Adds `W(q)` to `out`.
    pub fn add_to(&self, q: &[f64], out: &mut [f64]) {
        use std::f64::consts::TAU;
        let add = |out: &mut [f64], v: &[f64], w: f64| {
            for (o, x) in out.iter_mut().zip(v) {
                *o += w * x;
            }
        };
        match &self.config {
            ForcingConfig::None => {}
            ForcingConfig::Periodic {
                period,
                constant,
                cos,
                sin,
            } => {
                let phase = TAU * q.first().copied().unwrap_or(0.0) / period;
                add(out, constant, 1.0);
                add(out, cos, phase.cos());
                add(out, sin, phase.sin());
            }
            ForcingConfig::Quasiperiodic {
                constant, cos, sin, ..
            } => {
                add(out, constant, 1.0);
                for (k, row) in cos.iter().enumerate() {
                    add(out, row, (TAU * q.get(k).copied().unwrap_or(0.0)).cos());
                }
                for (k, row) in sin.iter().enumerate() {
                    add(out, row, (TAU * q.get(k).copied().unwrap_or(0.0)).sin());
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// One entry of the output operator: `y[output] += weight * x_component(t - lag)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayTap {
    pub output: usize,
    pub component: usize,
    pub lag: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub weight: f64,
}

/// A matrix acting on the history at a fixed lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixTap {
    pub lag: f64,
    pub matrix: Vec<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub tau: f64,
    #[serde(default)]
    pub d0_norm: f64,
    /// Discrete atoms of the neutral operator; their norms should sum to `d0_norm`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub d0_taps: Vec<MatrixTap>,
    /// Delayed atoms of the state operator, in addition to the instantaneous `A`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a_taps: Vec<MatrixTap>,
    pub taps: Vec<DelayTap>,
    #[serde(default = "default_chain")]
    pub n_chain: usize,
}

fn default_chain() -> usize {
    64
}

impl DelaySpec {
    pub fn outputs(&self) -> usize {
        self.taps.iter().map(|t| t.output + 1).max().unwrap_or(0)
    }

    fn validate(&self, n: usize) -> Result<()> {
        let schema = |path: &str, message: String| Error::Schema {
            path: format!("delay.{path}"),
            message,
        };
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(schema("tau", format!("must be positive, got {}", self.tau)));
        }
        if !(self.d0_norm.is_finite() && self.d0_norm >= 0.0) {
            return Err(schema("d0_norm", "must be finite and nonnegative".into()));
        }
        if self.n_chain == 0 {
            return Err(schema("n_chain", "must be at least 1".into()));
        }
        let in_range = |lag: f64| (0.0..=self.tau * (1.0 + 1e-12)).contains(&lag);
        let mut variation = vec![0.0; self.outputs()];
        for (i, t) in self.taps.iter().enumerate() {
            if t.component >= n {
                return Err(schema(
                    &format!("taps[{i}].component"),
                    format!("must be < {n}"),
                ));
            }
            if !in_range(t.lag) {
                return Err(schema(
                    &format!("taps[{i}].lag"),
                    format!("must lie in [0, {}]", self.tau),
                ));
            }
            variation[t.output] += t.weight.abs();
        }
        if let Some((o, v)) = variation
            .iter()
            .enumerate()
            .find(|(_, v)| **v > 1.0 + 1e-12)
        {
            return Err(schema(
                "taps",
                format!("output {o} has total variation {v}, must not exceed 1"),
            ));
        }
        for (name, taps) in [("a_taps", &self.a_taps), ("d0_taps", &self.d0_taps)] {
            for (i, t) in taps.iter().enumerate() {
                if !in_range(t.lag) {
                    return Err(schema(
                        &format!("{name}[{i}].lag"),
                        format!("must lie in [0, {}]", self.tau),
                    ));
                }
                matrix_from_rows(
                    &t.matrix,
                    &format!("delay.{name}[{i}].matrix"),
                    Some((n, n)),
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eigenvalues {
    /// `"squares"` gives `lambda_k = k^2`.
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinSpec {
    pub lambdas: Eigenvalues,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl GalerkinSpec {
    pub fn squares(n: usize, alpha: f64, beta: f64) -> Self {
        GalerkinSpec {
            lambdas: Eigenvalues::Named("squares".into()),
            alpha,
            beta,
            n,
        }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let l = match &self.lambdas {
            Eigenvalues::Named(name) if name == "squares" => {
                (1..=self.n).map(|k| (k * k) as f64).collect()
            }
            Eigenvalues::Named(other) => {
                return Err(Error::Schema {
                    path: "galerkin.lambdas".into(),
                    message: format!("unknown eigenvalue family `{other}`"),
                })
            }
            Eigenvalues::Explicit(v) => {
                if v.len() != self.n {
                    return Err(Error::Schema {
                        path: "galerkin.lambdas".into(),
                        message: format!("expected N = {} values, got {}", self.n, v.len()),
                    });
                }
                v.clone()
            }
        };
        if l.iter().any(|&x| !(x.is_finite() && x > 0.0)) || l.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Schema {
                path: "galerkin.lambdas".into(),
                message: "must be positive and nondecreasing".into(),
            });
        }
        if !(0.0 <= self.beta && self.beta <= self.alpha && self.alpha < 1.0) {
            return Err(Error::Schema {
                path: "galerkin.alpha".into(),
                message: format!(
                    "need 0 <= beta <= alpha < 1, got alpha={} beta={}",
                    self.alpha, self.beta
                ),
            });
        }
        Ok(l)
    }
}

/// Optional defaults for the end-to-end pipeline stored alongside a fixture.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineHints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu0: Option<f64>,
    /// Lipschitz constant used for certification when larger than the declared one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_certify: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub family: Family,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    pub nonlinearity: NonlinConfig,
    #[serde(default = "no_forcing")]
    pub forcing: ForcingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelaySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub galerkin: Option<GalerkinSpec>,
    #[serde(default, skip_serializing_if = "is_default_hints")]
    pub pipeline: PipelineHints,
}

fn no_forcing() -> ForcingConfig {
    ForcingConfig::None
}

fn is_default_hints(h: &PipelineHints) -> bool {
    *h == PipelineHints::default()
}

/// The validated system `v' = A v + B F(C v) + W(q)`.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    pub family: Family,
    pub a: RealMatrix,
    pub b: RealMatrix,
    pub c: RealMatrix,
    pub nonlinearity: Nonlinearity,
    pub forcing: Forcing,
    pub delay: Option<DelaySpec>,
    /// Instantaneous state matrix and input matrix of the undiscretized delay system.
    pub delay_base: Option<(RealMatrix, RealMatrix)>,
    pub galerkin: Option<GalerkinSpec>,
    pub hints: PipelineHints,
}

fn matrix_from_rows(
    rows: &[Vec<f64>],
    path: &str,
    shape: Option<(usize, usize)>,
) -> Result<RealMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::Schema {
            path: format!("{path}[{i}]"),
            message: format!("ragged row: expected {c} entries"),
        });
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Schema {
            path: path.into(),
            message: "entries must be finite".into(),
        });
    }
    if let Some((er, ec)) = shape {
        if (r, c) != (er, ec) {
            return Err(Error::Schema {
                path: path.into(),
                message: format!("expected {er}x{ec}, got {r}x{c}"),
            });
        }
    }
    Ok(RealMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &RealMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

const LIPSCHITZ_PAIRS: usize = 10_000;
const LIPSCHITZ_SEED: u64 = 0x11b5;

impl SystemSpec {
    /// Builds without the sampled Lipschitz check (shapes are still checked).
    pub fn from_parts(
        name: &str,
        a: RealMatrix,
        b: RealMatrix,
        c: RealMatrix,
        nonlinearity: Nonlinearity,
        forcing: Forcing,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::dim(format!(
                "A must be square, got {}x{}",
                n,
                a.ncols()
            )));
        }
        if b.nrows() != n || c.ncols() != n {
            return Err(Error::dim(format!(
                "B is {}x{} and C is {}x{} for n = {n}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if b.ncols() != c.nrows() {
            return Err(Error::dim(format!(
                "componentwise F needs m = r, got m = {} and r = {}",
                b.ncols(),
                c.nrows()
            )));
        }
        if forcing.dim() != n {
            return Err(Error::dim("forcing dimension differs from n"));
        }
        Ok(SystemSpec {
            name: name.to_string(),
            family: Family::Ode,
            a,
            b,
            c,
            nonlinearity,
            forcing,
            delay: None,
            delay_base: None,
            galerkin: None,
            hints: PipelineHints::default(),
        })
    }

    pub fn linear(name: &str, a: RealMatrix, b: RealMatrix, c: RealMatrix) -> Result<Self> {
        let n = a.nrows();
        Self::from_parts(name, a, b, c, Nonlinearity::zero(), Forcing::none(n))
    }

    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let nonlin = Nonlinearity::from_config(&cfg.nonlinearity)?;
        let mut spec = match cfg.family {
            Family::Ode => {
                fn rows<'a>(m: &'a Option<Vec<Vec<f64>>>, name: &str) -> Result<&'a Vec<Vec<f64>>> {
                    m.as_ref().ok_or_else(|| Error::Schema {
                        path: name.into(),
                        message: "required for family `ode`".into(),
                    })
                }
                let a = matrix_from_rows(rows(&cfg.a, "A")?, "A", None)?;
                let n = a.nrows();
                if !a.is_square() {
                    return Err(Error::Schema {
                        path: "A".into(),
                        message: format!("must be square, got {}x{}", n, a.ncols()),
                    });
                }
                let b = matrix_from_rows(rows(&cfg.b, "B")?, "B", None)?;
                if b.nrows() != n {
                    return Err(Error::Schema {
                        path: "B".into(),
                        message: format!("expected {n} rows, got {}", b.nrows()),
                    });
                }
                let c = matrix_from_rows(rows(&cfg.c, "C")?, "C", Some((b.ncols(), n)))?;
                let forcing = Forcing::new(cfg.forcing.clone(), n)?;
                Self::from_parts(&cfg.name, a, b, c, nonlin, forcing)?
            }
            Family::DelayDiscretized => {
                let delay = cfg.delay.as_ref().ok_or_else(|| Error::Schema {
                    path: "delay".into(),
                    message: "required for family `delay-discretized`".into(),
                })?;
                let a0 = matrix_from_rows(
                    cfg.a.as_ref().ok_or_else(|| Error::Schema {
                        path: "A".into(),
                        message: "required (instantaneous part of the state operator)".into(),
                    })?,
                    "A",
                    None,
                )?;
                let n = a0.nrows();
                let b = matrix_from_rows(
                    cfg.b.as_ref().ok_or_else(|| Error::Schema {
                        path: "B".into(),
                        message: "required".into(),
                    })?,
                    "B",
                    Some((n, delay.outputs())),
                )?;
                let mut spec = discretize_delay(delay, &a0, &b, nonlin)?;
                spec.name = cfg.name.clone();
                if !matches!(cfg.forcing, ForcingConfig::None) {
                    return Err(Error::Schema {
                        path: "forcing".into(),
                        message: "forcing is not supported for delay systems".into(),
                    });
                }
                spec
            }
            Family::ParabolicGalerkin => {
                let g = cfg.galerkin.as_ref().ok_or_else(|| Error::Schema {
                    path: "galerkin".into(),
                    message: "required for family `parabolic-galerkin`".into(),
                })?;
                let mut spec = galerkin_system(g, nonlin)?;
                spec.forcing = Forcing::new(cfg.forcing.clone(), g.n)?;
                spec.name = cfg.name.clone();
                spec
            }
        };
        spec.hints = cfg.pipeline.clone();
        Ok(spec)
    }

    pub fn to_config(&self) -> SystemConfig {
        let (a, b, c) = match self.family {
            Family::Ode => (
                Some(matrix_to_rows(&self.a)),
                Some(matrix_to_rows(&self.b)),
                Some(matrix_to_rows(&self.c)),
            ),
            Family::DelayDiscretized => {
                let (a0, b0) = self
                    .delay_base
                    .as_ref()
                    .expect("delay systems keep their base");
                (Some(matrix_to_rows(a0)), Some(matrix_to_rows(b0)), None)
            }
            Family::ParabolicGalerkin => (None, None, None),
        };
        SystemConfig {
            name: self.name.clone(),
            family: self.family,
            a,
            b,
            c,
            nonlinearity: self.nonlinearity.to_config(),
            forcing: self.forcing.config.clone(),
            delay: self.delay.clone(),
            galerkin: self.galerkin.clone(),
            pipeline: self.hints.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn r(&self) -> usize {
        self.c.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.nonlinearity.lambda
    }

    /// Sampled check of the declared Lipschitz constant on 10^4 pairs.
    pub fn check_lipschitz(&self) -> Result<()> {
        self.nonlinearity
            .check_lipschitz(LIPSCHITZ_PAIRS, LIPSCHITZ_SEED)
    }

    /// Copy with the nonlinearity scaled by `eps` (amplitude and declared constant).
    pub fn with_scaled_nonlinearity(&self, eps: f64) -> Self {
        let mut s = self.clone();
        s.nonlinearity = self.nonlinearity.scaled(eps);
        s
    }

    /// `‖A‖ + Λ‖B‖‖C‖`, the Lipschitz constant of the right-hand side.
    pub fn rhs_lipschitz(&self) -> f64 {
        operator_norm2_real(&self.a)
            + self.lambda() * operator_norm2_real(&self.b) * operator_norm2_real(&self.c)
    }

    /// Default RK4 step.
    pub fn default_step(&self) -> f64 {
        if let Some(h) = self.hints.h {
            return h;
        }
        (1e-3 / (self.rhs_lipschitz() + 1.0)).clamp(1e-5, 1e-2)
    }

    /// Right-hand side at driving state `q`. `y` is scratch of length `r`.
    pub fn rhs(&self, q: &[f64], v: &[f64], out: &mut [f64], y: &mut [f64]) {
        let n = self.n();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for (k, vk) in v.iter().enumerate() {
                acc += self.a[(i, k)] * vk;
            }
            *o = acc;
        }
        if self.nonlinearity.kind != NonlinKind::Zero {
            for (i, yi) in y.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, vk) in v.iter().enumerate() {
                    acc += self.c[(i, k)] * vk;
                }
                *yi = self.nonlinearity.eval(acc);
            }
            for (i, o) in out.iter_mut().enumerate().take(n) {
                let mut acc = 0.0;
                for (k, fk) in y.iter().enumerate() {
                    acc += self.b[(i, k)] * fk;
                }
                *o += acc;
            }
        }
        self.forcing.add_to(q, out);
    }

    pub fn rhs_vec(&self, q: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        let mut y = vec![0.0; self.r()];
        self.rhs(q, v, &mut out, &mut y);
        out
    }

    /// `A + B diag(F'(C v)) C`.
    pub fn jacobian(&self, v: &[f64]) -> Result<RealMatrix> {
        if !self.nonlinearity.has_derivative {
            return Err(Error::DerivativeUnavailable);
        }
        let mut j = self.a.clone();
        if self.nonlinearity.kind != NonlinKind::Zero {
            let vv = nalgebra::DVector::from_column_slice(v);
            let y = &self.c * vv;
            let d = y.map(|yi| self.nonlinearity.deriv(yi));
            let mut bd = self.b.clone();
            for (col, dk) in d.iter().enumerate() {
                bd.column_mut(col).scale_mut(*dk);
            }
            j += bd * &self.c;
        }
        Ok(j)
    }
}

/// Linear-chain discretization of `x' = A x(t) + sum_k A_k x(t - l_k) + B F(C~ x_t)`.
/// The chain node `y_i` approximates `x(t - i tau / N)`.
pub fn discretize_delay(
    spec: &DelaySpec,
    a0: &RealMatrix,
    b: &RealMatrix,
    nonlinearity: Nonlinearity,
) -> Result<SystemSpec> {
    let n = a0.nrows();
    if !a0.is_square() {
        return Err(Error::dim("instantaneous delay matrix must be square"));
    }
    spec.validate(n)?;
    if spec.d0_norm > 0.0 || !spec.d0_taps.is_empty() {
        return Err(Error::UnsupportedNeutralTerm {
            d0_norm: spec.d0_norm,
        });
    }
    let chain = spec.n_chain;
    let dim = n * (chain + 1);
    let rate = chain as f64 / spec.tau;
    let node = |lag: f64| ((lag * rate).round() as usize).min(chain);
    let mut a = RealMatrix::zeros(dim, dim);
    a.view_mut((0, 0), (n, n)).copy_from(a0);
    for t in &spec.a_taps {
        let m = matrix_from_rows(&t.matrix, "delay.a_taps.matrix", Some((n, n)))?;
        let k = node(t.lag);
        let mut block = a.view_mut((0, k * n), (n, n));
        block += m;
    }
    for k in 1..=chain {
        for i in 0..n {
            a[(k * n + i, k * n + i)] = -rate;
            a[(k * n + i, (k - 1) * n + i)] = rate;
        }
    }
    let r = spec.outputs();
    if b.nrows() != n || b.ncols() != r {
        return Err(Error::dim(format!("delay input matrix must be {n}x{r}")));
    }
    let mut big_b = RealMatrix::zeros(dim, r);
    big_b.view_mut((0, 0), (n, r)).copy_from(b);
    let mut c = RealMatrix::zeros(r, dim);
    for t in &spec.taps {
        c[(t.output, node(t.lag) * n + t.component)] += t.weight;
    }
    let mut sys = SystemSpec::from_parts("", a, big_b, c, nonlinearity, Forcing::none(dim))?;
    sys.family = Family::DelayDiscretized;
    sys.delay = Some(spec.clone());
    sys.delay_base = Some((a0.clone(), b.clone()));
    Ok(sys)
}

/// Orthogonal sine transform `S_ik = sqrt(2/(N+1)) sin(i k pi / (N+1))`.
pub fn sine_transform(n: usize) -> RealMatrix {
    let scale = (2.0 / (n as f64 + 1.0)).sqrt();
    RealMatrix::from_fn(n, n, |i, k| {
        scale * ((i + 1) as f64 * (k + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).sin()
    })
}

/// Galerkin truncation `v' = -diag(lambda) v + B F(C v)` in modal coordinates.
/// The nonlinearity acts on the N interior grid values `C v = S diag(lambda^alpha) v`,
/// and is projected back by `B = diag(lambda^-beta) S^T`.
pub fn galerkin_system(spec: &GalerkinSpec, nonlinearity: Nonlinearity) -> Result<SystemSpec> {
    let l = spec.eigenvalues()?;
    let n = spec.n;
    let s = sine_transform(n);
    let a = RealMatrix::from_fn(n, n, |i, k| if i == k { -l[i] } else { 0.0 });
    let c = RealMatrix::from_fn(n, n, |i, k| s[(i, k)] * l[k].powf(spec.alpha));
    let b = RealMatrix::from_fn(n, n, |i, k| l[i].powf(-spec.beta) * s[(k, i)]);
    let mut sys = SystemSpec::from_parts("", a, b, c, nonlinearity, Forcing::none(n))?;
    sys.family = Family::ParabolicGalerkin;
    sys.galerkin = Some(spec.clone());
    Ok(sys)
}

pub fn parse_system(text: &str) -> Result<SystemSpec> {
    let cfg: SystemConfig = serde_json::from_str(text).map_err(|e| {
        if e.is_data() {
            Error::Schema {
                path: format!("line {} column {}", e.line(), e.column()),
                message: e.to_string(),
            }
        } else {
            Error::Parse(e.to_string())
        }
    })?;
    let spec = SystemSpec::from_config(&cfg)?;
    spec.check_lipschitz()?;
    Ok(spec)
}

/// Reads, validates and Lipschitz-checks a system config.
pub fn load_system(path: &Path) -> Result<SystemSpec> {
    parse_system(&std::fs::read_to_string(path)?)
}

pub fn save_system(spec: &SystemSpec, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&spec.to_config())?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

const FIXTURES: &[(&str, &str)] = &[
    ("SYS-LIN2", include_str!("../fixtures/sys-lin2.json")),
    ("SYS-SCALAR", include_str!("../fixtures/sys-scalar.json")),
    ("SYS-ODE3", include_str!("../fixtures/sys-ode3.json")),
    ("SYS-DELAY1", include_str!("../fixtures/sys-delay1.json")),
    ("SYS-PARAB8", include_str!("../fixtures/sys-parab8.json")),
    (
        "SYS-LIN2-COUPLED",
        include_str!("../fixtures/sys-lin2-coupled.json"),
    ),
    ("SYS-NESTED3", include_str!("../fixtures/sys-nested3.json")),
    ("SYS-FORCED2", include_str!("../fixtures/sys-forced2.json")),
    (
        "SYS-SCALAR-QP",
        include_str!("../fixtures/sys-scalar-qp.json"),
    ),
];

pub fn fixture_names() -> Vec<&'static str> {
    FIXTURES.iter().map(|(n, _)| *n).collect()
}

pub fn fixture_text(name: &str) -> Result<&'static str> {
    FIXTURES
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            Error::pre(format!(
                "unknown fixture `{name}`; known: {}",
                fixture_names().join(", ")
            ))
        })
}

pub fn fixture(name: &str) -> Result<SystemSpec> {
    parse_system(fixture_text(name)?)
}

/// A fixture name or a path to a config file.
pub fn resolve_system(name_or_path: &str) -> Result<SystemSpec> {
    match fixture_text(name_or_path) {
        Ok(t) => parse_system(t),
        Err(_) if Path::new(name_or_path).exists() => load_system(Path::new(name_or_path)),
        Err(e) => Err(e),
    }
}
