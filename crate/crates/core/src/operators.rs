//! Potential-type operators, maximal functions and the `Omega` function on
//! grid functions.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{fit_power_constant, FITTED_CONSTANT_SLACK, lower_type_check_all, BallIndex, DiscreteMeasure, DominatingFunction, LambdaForm, RegularityReport};
use crate::numeric::CompensatedSum;
use crate::space::QuasiMetricSpace;
use crate::two_component::{lambda_piecewise, lambda_simplified, GluedMeasure, TwoComponentSpace};

/// Node values of a function, in the node order of its space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridFunction(Vec<f64>);

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(GridFunction(values))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        GridFunction(vec![c; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    /// Characteristic function of `nodes`.
    pub fn indicator(n: usize, nodes: impl IntoIterator<Item = usize>) -> Self {
        let mut v = vec![0.0; n];
        for i in nodes {
            v[i] = 1.0;
        }
        GridFunction(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, x: usize) -> f64 {
        self.0[x]
    }

    pub fn scaled(&self, t: f64) -> Self {
        GridFunction(self.0.iter().map(|v| v * t).collect())
    }

    pub fn abs(&self) -> Self {
        GridFunction(self.0.iter().map(|v| v.abs()).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: self.0.len() });
        }
        Ok(())
    }
}

/// How a dominating function is obtained from its context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum LambdaSpec {
    /// `k r^n`; a missing `k` is fitted as the smallest constant with
    /// `mu(B(x, r)) <= k r^n`.
    Power {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<f64>,
        n: f64,
    },
    /// `k r^{n(x)}`, the field defaulting to the dimension field of the setting
    /// and `k` to the fitted constant.
    PowerField {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<Vec<f64>>,
    },
    /// `mu(B(x, r))`.
    BallMeasure,
    /// Two-regime form of a glued measure.
    Piecewise,
    /// `K4 r^{n(x)}` of a glued measure.
    Simplified,
}

/// The space and measure an operator acts on, with the glue structure when
/// there is one.
#[derive(Clone, Copy)]
pub struct Setting<'a> {
    pub space: &'a QuasiMetricSpace,
    pub mu: &'a DiscreteMeasure,
    pub glue: Option<(&'a TwoComponentSpace, &'a GluedMeasure)>,
}

impl<'a> Setting<'a> {
    pub fn new(space: &'a QuasiMetricSpace, mu: &'a DiscreteMeasure) -> Self {
        Setting { space, mu, glue: None }
    }

    pub fn glued(tc: &'a TwoComponentSpace, gm: &'a GluedMeasure) -> Self {
        Setting { space: &tc.base, mu: &gm.underlying, glue: Some((tc, gm)) }
    }

    /// `n(x)`: the component dimension on glued spaces, otherwise the nominal
    /// dimension of the space family.
    pub fn n_field(&self) -> Option<Vec<f64>> {
        if let Some((tc, _)) = self.glue {
            return Some(tc.n_field());
        }
        let q = self.space.spec()?.nominal_dimension()?;
        Some(vec![q; self.space.len()])
    }

    pub fn lambda(&self, spec: &LambdaSpec) -> Result<DominatingFunction> {
        let space = self.space;
        match spec {
            LambdaSpec::Power { k, n } => {
                let k = match k {
                    Some(k) => *k,
                    None => self.fitted_constant(&vec![*n; space.len()])?,
                };
                DominatingFunction::power(space, k, *n)
            }
            LambdaSpec::PowerField { k, n } => {
                let n = match n {
                    Some(n) => n.clone(),
                    None => self.n_field().ok_or_else(|| Error::InvalidLambda("no dimension field known for this space".into()))?,
                };
                let k = match k {
                    Some(k) => *k,
                    None => self.fitted_constant(&n)?,
                };
                DominatingFunction::power_field(space, k, n)
            }
            LambdaSpec::BallMeasure => DominatingFunction::ball_measure(space, self.mu),
            LambdaSpec::Piecewise | LambdaSpec::Simplified => {
                let (tc, gm) = self.glue.ok_or_else(|| Error::InvalidLambda("glued forms need a glued space".into()))?;
                if *spec == LambdaSpec::Piecewise {
                    lambda_piecewise(tc, gm)
                } else {
                    lambda_simplified(tc, gm)
                }
            }
        }
    }

    fn fitted_constant(&self, n: &[f64]) -> Result<f64> {
        self.mu.check_space(self.space)?;
        let rep = fit_power_constant(self.space, self.mu, n);
        if !(rep.best_constant > 0.0 && rep.best_constant.is_finite()) {
            return Err(Error::InvalidLambda("cannot fit a positive power constant to this measure".into()));
        }
        Ok(rep.best_constant * (1.0 + FITTED_CONSTANT_SLACK))
    }
}

/// Which potential operator to apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `d^alpha / lambda(x, d)`.
    General { alpha: f64, lambda: LambdaSpec },
    /// `d^{alpha - q}`.
    DimPower { alpha: f64, q: f64 },
    /// `d^{gamma - 1}`.
    OneMinus { gamma: f64 },
    /// `mu(B(x, d))^{gamma - 1}`.
    MeasurePower { gamma: f64 },
    /// `d^alpha / mu(B(x, d))`.
    MeasureRatio { alpha: f64 },
    /// `d^{alpha - n(x)}`.
    VariableDim { alpha: f64 },
}

impl KernelSpec {
    pub fn order(&self) -> f64 {
        match self {
            KernelSpec::General { alpha, .. }
            | KernelSpec::DimPower { alpha, .. }
            | KernelSpec::MeasureRatio { alpha }
            | KernelSpec::VariableDim { alpha } => *alpha,
            KernelSpec::OneMinus { gamma } | KernelSpec::MeasurePower { gamma } => *gamma,
        }
    }
}

fn parse_params(body: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let bytes = body.as_bytes();
    let mut push = |s: &str| -> Result<()> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(());
        }
        let (k, v) = s.split_once('=').ok_or_else(|| Error::InvalidKernel(format!("expected key=value, got `{s}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
        Ok(())
    };
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b',' if depth == 0 => {
                push(&body[start..i])?;
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::InvalidKernel(format!("unbalanced parentheses in `{body}`")));
    }
    push(&body[start..])?;
    Ok(out)
}

fn number(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| Error::InvalidKernel(format!("`{key}` must be a number, got `{v}`")))
}

fn take(params: &[(String, String)], key: &str) -> Result<f64> {
    let v = params
        .iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::InvalidKernel(format!("missing parameter `{key}`")))?;
    number(key, &v.1)
}

fn check_keys(params: &[(String, String)], allowed: &[&str]) -> Result<()> {
    for (k, _) in params {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::InvalidKernel(format!("unknown parameter `{k}`")));
        }
    }
    Ok(())
}

impl FromStr for LambdaSpec {
    type Err = Error;

    /// `power(k=1,n=1)`, `power(n=1)`, `power-field(k=2)`, `ball-measure`,
    /// `piecewise`, `simplified`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, params) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], parse_params(&s[i + 1..s.len() - 1])?),
            Some(_) => return Err(Error::InvalidKernel(format!("malformed dominating function `{s}`"))),
            None => (s, Vec::new()),
        };
        let opt = |key: &str| params.iter().find(|(k, _)| k == key).map(|(_, v)| number(key, v)).transpose();
        match name {
            "power" => {
                check_keys(&params, &["k", "n"])?;
                Ok(LambdaSpec::Power { k: opt("k")?, n: take(&params, "n")? })
            }
            "power-field" => {
                check_keys(&params, &["k"])?;
                Ok(LambdaSpec::PowerField { k: opt("k")?, n: None })
            }
            "ball-measure" | "piecewise" | "simplified" => {
                if !params.is_empty() {
                    return Err(Error::InvalidKernel(format!("`{name}` takes no parameters")));
                }
                Ok(match name {
                    "ball-measure" => LambdaSpec::BallMeasure,
                    "piecewise" => LambdaSpec::Piecewise,
                    _ => LambdaSpec::Simplified,
                })
            }
            _ => Err(Error::InvalidKernel(format!("unknown dominating function `{name}`"))),
        }
    }
}

impl fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaSpec::Power { k: Some(k), n } => write!(f, "power(k={k},n={n})"),
            LambdaSpec::Power { k: None, n } => write!(f, "power(n={n})"),
            LambdaSpec::PowerField { k: Some(k), .. } => write!(f, "power-field(k={k})"),
            LambdaSpec::PowerField { k: None, .. } => write!(f, "power-field"),
            LambdaSpec::BallMeasure => write!(f, "ball-measure"),
            LambdaSpec::Piecewise => write!(f, "piecewise"),
            LambdaSpec::Simplified => write!(f, "simplified"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// `kind:key=value,...`, for instance `general:alpha=0.5,lambda=power(k=1,n=1)`,
    /// `dim-power:alpha=0.5,q=1`, `jalpha:alpha=0.5`, `kgamma:gamma=0.3`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s.split_once(':').unwrap_or((s, ""));
        let params = parse_params(body)?;
        let spec = match kind.trim() {
            "general" | "ilambda" => {
                check_keys(&params, &["alpha", "lambda"])?;
                let lam = params
                    .iter()
                    .find(|(k, _)| k == "lambda")
                    .ok_or_else(|| Error::InvalidKernel("missing parameter `lambda`".into()))?;
                KernelSpec::General { alpha: take(&params, "alpha")?, lambda: lam.1.parse()? }
            }
            "dim-power" | "iq" => {
                check_keys(&params, &["alpha", "q"])?;
                KernelSpec::DimPower { alpha: take(&params, "alpha")?, q: take(&params, "q")? }
            }
            "one-minus" | "igamma" => {
                check_keys(&params, &["gamma"])?;
                KernelSpec::OneMinus { gamma: take(&params, "gamma")? }
            }
            "measure-power" | "kgamma" => {
                check_keys(&params, &["gamma"])?;
                KernelSpec::MeasurePower { gamma: take(&params, "gamma")? }
            }
            "measure-ratio" | "jalpha" => {
                check_keys(&params, &["alpha"])?;
                KernelSpec::MeasureRatio { alpha: take(&params, "alpha")? }
            }
            "variable-dim" | "ndim" => {
                check_keys(&params, &["alpha"])?;
                KernelSpec::VariableDim { alpha: take(&params, "alpha")? }
            }
            other => return Err(Error::InvalidKernel(format!("unknown kernel kind `{other}`"))),
        };
        Ok(spec)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::General { alpha, lambda } => write!(f, "general:alpha={alpha},lambda={lambda}"),
            KernelSpec::DimPower { alpha, q } => write!(f, "dim-power:alpha={alpha},q={q}"),
            KernelSpec::OneMinus { gamma } => write!(f, "one-minus:gamma={gamma}"),
            KernelSpec::MeasurePower { gamma } => write!(f, "measure-power:gamma={gamma}"),
            KernelSpec::MeasureRatio { alpha } => write!(f, "measure-ratio:alpha={alpha}"),
            KernelSpec::VariableDim { alpha } => write!(f, "variable-dim:alpha={alpha}"),
        }
    }
}

/// Treatment of the excluded diagonal cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Drop the `y = x` term.
    #[default]
    Plain,
    /// Replace the `y = x` term, for kernels `c d^{-beta}` of a local
    /// dimension `D`, by the integral of the kernel over a ball of radius
    /// `rho` (half the nearest-neighbour distance) carrying the node's mass:
    /// `w(x) c D / (D - beta) rho^{-beta}`. Exact for the cells of uniform
    /// 1-D grids; other kernels fall back to `Plain`.
    SelfCell,
}

/// A kernel bound to its setting.
#[derive(Debug, Clone)]
pub enum Kernel {
    Lambda { alpha: f64, lam: DominatingFunction },
    DimPower { alpha: f64, q: f64 },
    OneMinus { gamma: f64 },
    MeasurePower { gamma: f64, index: Arc<BallIndex> },
    MeasureRatio { alpha: f64, index: Arc<BallIndex> },
    VariableDim { alpha: f64, n: Vec<f64> },
}

impl Kernel {
    /// Resolves `spec` against `setting`, checking the order ranges.
    pub fn resolve(setting: &Setting<'_>, spec: &KernelSpec) -> Result<Kernel> {
        setting.mu.check_space(setting.space)?;
        let bad = |msg: String| Err(Error::InvalidKernel(msg));
        let kernel = match spec {
            KernelSpec::General { alpha, lambda } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return bad(format!("alpha must be positive, got {alpha}"));
                }
                Kernel::Lambda { alpha: *alpha, lam: setting.lambda(lambda)? }
            }
            KernelSpec::DimPower { alpha, q } => {
                if !(*alpha > 0.0 && alpha < q && q.is_finite()) {
                    return bad(format!("dim-power needs 0 < alpha < Q, got alpha={alpha}, Q={q}"));
                }
                Kernel::DimPower { alpha: *alpha, q: *q }
            }
            KernelSpec::OneMinus { gamma } | KernelSpec::MeasurePower { gamma } => {
                if !(*gamma > 0.0 && *gamma < 1.0) {
                    return bad(format!("gamma must lie in (0, 1), got {gamma}"));
                }
                if let KernelSpec::OneMinus { .. } = spec {
                    Kernel::OneMinus { gamma: *gamma }
                } else {
                    Kernel::MeasurePower { gamma: *gamma, index: Arc::new(BallIndex::new(setting.space, setting.mu)) }
                }
            }
            KernelSpec::MeasureRatio { alpha } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return bad(format!("alpha must be positive, got {alpha}"));
                }
                Kernel::MeasureRatio { alpha: *alpha, index: Arc::new(BallIndex::new(setting.space, setting.mu)) }
            }
            KernelSpec::VariableDim { alpha } => {
                let n = setting.n_field().ok_or_else(|| Error::InvalidKernel("no dimension field known for this space".into()))?;
                let n_min = n.iter().copied().fold(f64::INFINITY, f64::min);
                if !(*alpha > 0.0 && *alpha < n_min) {
                    return bad(format!("variable-dim needs 0 < alpha < min n(x) = {n_min}, got {alpha}"));
                }
                Kernel::VariableDim { alpha: *alpha, n }
            }
        };
        Ok(kernel)
    }

    /// Uses an already built dominating function.
    pub fn with_lambda(alpha: f64, lam: DominatingFunction) -> Result<Kernel> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidKernel(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Kernel::Lambda { alpha, lam })
    }

    pub fn order(&self) -> f64 {
        match self {
            Kernel::Lambda { alpha, .. }
            | Kernel::DimPower { alpha, .. }
            | Kernel::MeasureRatio { alpha, .. }
            | Kernel::VariableDim { alpha, .. } => *alpha,
            Kernel::OneMinus { gamma } | Kernel::MeasurePower { gamma, .. } => *gamma,
        }
    }

    pub fn lambda(&self) -> Option<&DominatingFunction> {
        match self {
            Kernel::Lambda { lam, .. } => Some(lam),
            _ => None,
        }
    }

    /// Kernel value at `d = dist(x, y) > 0`; `None` when the denominator vanishes.
    #[inline]
    pub fn eval(&self, x: usize, d: f64) -> Option<f64> {
        let v = match self {
            Kernel::Lambda { alpha, lam } => {
                let l = lam.eval(x, d);
                if !(l > 0.0) {
                    return None;
                }
                d.powf(*alpha) / l
            }
            Kernel::DimPower { alpha, q } => d.powf(alpha - q),
            Kernel::OneMinus { gamma } => d.powf(gamma - 1.0),
            Kernel::MeasurePower { gamma, index } => {
                let m = index.measure(x, d);
                if !(m > 0.0) {
                    return None;
                }
                m.powf(gamma - 1.0)
            }
            Kernel::MeasureRatio { alpha, index } => {
                let m = index.measure(x, d);
                if !(m > 0.0) {
                    return None;
                }
                d.powf(*alpha) / m
            }
            Kernel::VariableDim { alpha, n } => d.powf(alpha - n[x]),
        };
        Some(v)
    }

    /// `(c, D, beta)` when the kernel at `x` is `c d^{-beta}` with local dimension `D`.
    fn power_law(&self, x: usize) -> Option<(f64, f64, f64)> {
        match self {
            Kernel::DimPower { alpha, q } => Some((1.0, *q, q - alpha)),
            Kernel::VariableDim { alpha, n } => Some((1.0, n[x], n[x] - alpha)),
            Kernel::Lambda { alpha, lam } => match lam.form() {
                LambdaForm::Power { k, n } => Some((1.0 / k, *n, n - alpha)),
                LambdaForm::PowerField { k, n } => Some((1.0 / k, n[x], n[x] - alpha)),
                _ => None,
            },
            _ => None,
        }
    }

    /// Confirms that the dominating function has lower type above the order:
    /// the lower-type check is run at `alpha0 = max(a, alpha + 1e-3)`, `a`
    /// being the declared type, and must hold at every node.
    pub fn certify_lower_type(&self, space: &QuasiMetricSpace) -> Result<RegularityReport> {
        let Kernel::Lambda { alpha, lam } = self else {
            return Err(Error::InvalidKernel("only general kernels carry a dominating function".into()));
        };
        let alpha0 = lam.lower_type().a.max(alpha + 1e-3);
        let rep = lower_type_check_all(space, lam, alpha0);
        if !rep.holds || lam.lower_type().a <= *alpha {
            let at = rep.worst_witness.map_or(String::from("no node"), |w| format!("node {}, radius {:.6e}", w.node, w.radius));
            return Err(Error::Precondition(format!(
                "lower_type_check failed at {at}: lower type {} with constant {} does not exceed alpha = {alpha} (measured constant {:.6e} at alpha0 = {alpha0})",
                lam.lower_type().a,
                lam.lower_type().c1,
                rep.best_constant
            )));
        }
        Ok(rep)
    }
}

/// Dense matrix of `kernel(x, y) weight(y)`, ready to apply to many functions.
#[derive(Debug, Clone)]
pub struct PotentialOperator {
    n: usize,
    rows: Vec<f64>,
}

impl PotentialOperator {
    pub fn new(setting: &Setting<'_>, kernel: &Kernel, quadrature: Quadrature) -> Result<Self> {
        let space = setting.space;
        let mu = setting.mu;
        mu.check_space(space)?;
        let n = space.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|x| {
                let mut row = vec![0.0; n];
                let mut nearest = f64::INFINITY;
                for y in 0..n {
                    if y == x {
                        continue;
                    }
                    let d = space.dist(x, y);
                    nearest = nearest.min(d);
                    let w = mu.weight(y);
                    if w == 0.0 {
                        continue;
                    }
                    let k = kernel.eval(x, d).ok_or_else(|| {
                        Error::Precondition(format!("kernel denominator vanishes at node {x}, radius {d:.6e} (pair {x}, {y})"))
                    })?;
                    row[y] = k * w;
                }
                if quadrature == Quadrature::SelfCell && nearest.is_finite() {
                    if let Some((c, dim, beta)) = kernel.power_law(x) {
                        if dim > beta {
                            let rho = 0.5 * nearest;
                            row[x] = mu.weight(x) * c * dim / (dim - beta) * rho.powf(-beta);
                        }
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(PotentialOperator { n, rows: rows.concat() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `kernel(x, y) weight(y)`, with the diagonal cell term at `y = x`.
    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x * self.n..(x + 1) * self.n]
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        f.check_len(self.n)?;
        let fv = f.values();
        let out = (0..self.n)
            .into_par_iter()
            .map(|x| self.row(x).iter().zip(fv).map(|(k, v)| k * v).collect::<CompensatedSum>().value())
            .collect();
        Ok(GridFunction(out))
    }
}

/// `(If)(x) = sum_{y != x} kernel(x, y) f(y) weight(y)`.
pub fn potential(space: &QuasiMetricSpace, mu: &DiscreteMeasure, ks: &KernelSpec, f: &GridFunction) -> Result<GridFunction> {
    potential_in(&Setting::new(space, mu), ks, f, Quadrature::Plain)
}

pub fn potential_in(setting: &Setting<'_>, ks: &KernelSpec, f: &GridFunction, quadrature: Quadrature) -> Result<GridFunction> {
    f.check_len(setting.space.len())?;
    let kernel = Kernel::resolve(setting, ks)?;
    PotentialOperator::new(setting, &kernel, quadrature)?.apply(f)
}

/// Per-center neighbour orders and the ball sizes at every canonical radius
/// `r` and at `3 k1 r`, shared by both maximal operators.
#[derive(Debug, Clone)]
pub struct MaximalIndex {
    n: usize,
    m: usize,
    order: Vec<u32>,
    /// Monotone cumulative masses along `order`.
    mass: Vec<f64>,
    inner: Vec<u32>,
    outer: Vec<u32>,
    weights: Vec<f64>,
}

impl MaximalIndex {
    pub fn new(space: &QuasiMetricSpace, mu: &DiscreteMeasure) -> Result<Self> {
        mu.check_space(space)?;
        let n = space.len();
        let radii = space.canonical_radii();
        let m = radii.len();
        let inflate = 3.0 * space.k1();
        let per: Vec<(Vec<u32>, Vec<f64>, Vec<u32>, Vec<u32>)> = (0..n)
            .into_par_iter()
            .map(|x| {
                let mut ord: Vec<u32> = (0..n as u32).collect();
                let d = space.distances_from(x);
                ord.sort_by(|&a, &b| d[a as usize].total_cmp(&d[b as usize]).then(a.cmp(&b)));
                let sorted: Vec<f64> = ord.iter().map(|&y| d[y as usize]).collect();
                let mut mass = Vec::with_capacity(n + 1);
                mass.push(0.0);
                let mut acc = CompensatedSum::new();
                let mut prev = 0.0f64;
                for &y in &ord {
                    acc.add(mu.weight(y as usize));
                    prev = prev.max(acc.value());
                    mass.push(prev);
                }
                let inner = radii.iter().map(|&r| sorted.partition_point(|&t| t < r) as u32).collect();
                let outer = radii.iter().map(|&r| sorted.partition_point(|&t| t < inflate * r) as u32).collect();
                (ord, mass, inner, outer)
            })
            .collect();
        let mut idx = MaximalIndex {
            n,
            m,
            order: Vec::with_capacity(n * n),
            mass: Vec::with_capacity(n * (n + 1)),
            inner: Vec::with_capacity(n * m),
            outer: Vec::with_capacity(n * m),
            weights: mu.weights().to_vec(),
        };
        for (o, ms, i, u) in per {
            idx.order.extend(o);
            idx.mass.extend(ms);
            idx.inner.extend(i);
            idx.outer.extend(u);
        }
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn run(&self, f: &GridFunction, modified: bool) -> Result<GridFunction> {
        f.check_len(self.n)?;
        let n = self.n;
        let out = (0..n)
            .into_par_iter()
            .map(|x| {
                let order = &self.order[x * n..(x + 1) * n];
                let mass = &self.mass[x * (n + 1)..(x + 1) * (n + 1)];
                let mut num = Vec::with_capacity(n + 1);
                num.push(0.0);
                let mut acc = CompensatedSum::new();
                let mut prev = 0.0f64;
                for &y in order {
                    let y = y as usize;
                    acc.add(f.get(y).abs() * self.weights[y]);
                    prev = prev.max(acc.value());
                    num.push(prev);
                }
                if self.m == 0 {
                    return if self.weights[x] > 0.0 { f.get(x).abs() } else { 0.0 };
                }
                let mut best = 0.0f64;
                for j in 0..self.m {
                    let k = self.inner[x * self.m + j] as usize;
                    let kd = if modified { self.outer[x * self.m + j] as usize } else { k };
                    let den = mass[kd];
                    if den > 0.0 {
                        best = best.max(num[k] / den);
                    }
                }
                best
            })
            .collect();
        Ok(GridFunction(out))
    }

    /// `Mf`.
    pub fn standard(&self, f: &GridFunction) -> Result<GridFunction> {
        self.run(f, false)
    }

    /// `M~f`, with the denominator taken on the `3 k1`-times larger ball.
    pub fn modified(&self, f: &GridFunction) -> Result<GridFunction> {
        self.run(f, true)
    }
}

/// Hardy-Littlewood maximal function over canonical radii.
pub fn maximal_standard(space: &QuasiMetricSpace, mu: &DiscreteMeasure, f: &GridFunction) -> Result<GridFunction> {
    f.check_len(space.len())?;
    MaximalIndex::new(space, mu)?.standard(f)
}

/// Modified maximal function `sup_r mu(B(x, 3 k1 r))^{-1} int_{B(x, r)} |f| dmu`.
pub fn maximal_modified(space: &QuasiMetricSpace, mu: &DiscreteMeasure, f: &GridFunction) -> Result<GridFunction> {
    f.check_len(space.len())?;
    MaximalIndex::new(space, mu)?.modified(f)
}

/// `Omega(x) = max_R mu(B(x, R)) / lambda(x, R)` over canonical radii.
pub fn omega(space: &QuasiMetricSpace, mu: &DiscreteMeasure, lam: &DominatingFunction) -> Result<GridFunction> {
    mu.check_space(space)?;
    let index = BallIndex::new(space, mu);
    Ok(omega_indexed(space, &index, lam))
}

pub fn omega_indexed(space: &QuasiMetricSpace, index: &BallIndex, lam: &DominatingFunction) -> GridFunction {
    let radii = space.canonical_radii();
    let ball_form = matches!(lam.form(), LambdaForm::BallMeasure(_));
    let out = (0..space.len())
        .into_par_iter()
        .map(|x| {
            radii.iter().fold(0.0f64, |best, &r| {
                let m = index.measure(x, r);
                let l = lam.eval(x, r);
                let v = if ball_form && m == l { 1.0 } else { m / l };
                best.max(v)
            })
        })
        .collect();
    GridFunction(out)
}
