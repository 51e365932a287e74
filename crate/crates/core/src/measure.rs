//! Discrete measures, dominating functions and the regularity checks that
//! relate them.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::space::QuasiMetricSpace;
#[cfg(doc)]
use crate::space::SpaceSpec;

/// Relative slack allowed when a declared constant is compared with a scan.
pub const DECLARED_SLACK: f64 = 1e-9;
/// Relative inflation applied to fitted power constants so that the fitted
/// majorant dominates the measure despite rounding in `mu / r^n`.
pub const FITTED_CONSTANT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if let Some(i) = weights.iter().position(|&w| w < 0.0) {
            return Err(Error::InvalidSpec(format!("negative weight {} at node {i}", weights[i])));
        }
        Ok(Self { weights })
    }

    pub fn for_space(space: &QuasiMetricSpace, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::LengthMismatch { expected: space.len(), got: weights.len() });
        }
        Self::new(weights)
    }

    /// Equal weights summing to `total`.
    pub fn uniform(n: usize, total: f64) -> Self {
        Self { weights: vec![total / n as f64; n] }
    }

    /// Quadrature measure of the space's own family (see
    /// [`SpaceSpec::natural_weights`]); unit weights when the space has no family.
    pub fn natural(space: &QuasiMetricSpace) -> Self {
        let weights = space.spec().map_or_else(|| vec![1.0; space.len()], |s| s.natural_weights());
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, node: usize) -> f64 {
        self.weights[node]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { weights: self.weights.iter().map(|w| w * t).collect() }
    }

    /// Same measure with `extra` mass added at `node`.
    pub fn with_added_mass(&self, node: usize, extra: f64) -> Self {
        let mut weights = self.weights.clone();
        weights[node] += extra;
        Self { weights }
    }

    pub fn check_space(&self, space: &QuasiMetricSpace) -> Result<()> {
        if self.len() == space.len() {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected: space.len(), got: self.len() })
        }
    }
}

/// Sum of member weights of the open ball, accumulated in node order.
pub fn ball_measure(space: &QuasiMetricSpace, mu: &DiscreteMeasure, x: usize, r: f64) -> Result<f64> {
    space.check_node(x)?;
    mu.check_space(space)?;
    if !(r > 0.0) || r.is_nan() {
        return Err(Error::InvalidRadius(r));
    }
    let mut acc = CompensatedSum::new();
    for y in 0..space.len() {
        if space.dist(x, y) < r {
            acc.add(mu.weight(y));
        }
    }
    Ok(acc.value())
}

/// Per-center sorted distances with cumulative masses, so that a ball
/// measure costs one binary search.
#[derive(Debug, Clone)]
pub struct BallIndex {
    n: usize,
    dists: Vec<f64>,
    prefix: Vec<f64>,
    total: f64,
}

impl BallIndex {
    pub fn new(space: &QuasiMetricSpace, mu: &DiscreteMeasure) -> Self {
        let n = space.len();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|x| {
                let mut pairs: Vec<(f64, f64)> = (0..n).map(|y| (space.dist(x, y), mu.weight(y))).collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut prefix = Vec::with_capacity(n + 1);
                prefix.push(0.0);
                let mut acc = CompensatedSum::new();
                for &(_, w) in &pairs {
                    acc.add(w);
                    prefix.push(acc.value());
                }
                (pairs.into_iter().map(|p| p.0).collect(), prefix)
            })
            .collect();
        let mut dists = Vec::with_capacity(n * n);
        let mut prefix = Vec::with_capacity(n * (n + 1));
        for (d, p) in rows {
            dists.extend(d);
            prefix.extend(p);
        }
        BallIndex { n, dists, prefix, total: mu.total() }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of nodes in `B(x, r)`.
    #[inline]
    pub fn count(&self, x: usize, r: f64) -> usize {
        self.dists[x * self.n..(x + 1) * self.n].partition_point(|&d| d < r)
    }

    /// `mu(B(x, r))`; the whole space returns the node-order total exactly.
    #[inline]
    pub fn measure(&self, x: usize, r: f64) -> f64 {
        let k = self.count(x, r);
        if k == self.n {
            self.total
        } else {
            self.prefix[x * (self.n + 1) + k]
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub node: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub holds: bool,
    pub best_constant: f64,
    #[serde(rename = "witness")]
    pub worst_witness: Option<Witness>,
    #[serde(rename = "samples")]
    pub samples_checked: usize,
}

/// Running maximum with a deterministic tie-break (smallest node, then
/// smallest radius), so parallel reductions agree with sequential ones.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Worst {
    pub value: f64,
    pub witness: Option<Witness>,
    pub samples: usize,
}

impl Worst {
    pub fn empty() -> Self {
        Worst { value: f64::NEG_INFINITY, witness: None, samples: 0 }
    }

    pub fn offer(&mut self, value: f64, node: usize, radius: f64) {
        self.samples += 1;
        if Self::beats(value, node, radius, self.value, self.witness) {
            self.value = value;
            self.witness = Some(Witness { node, radius });
        }
    }

    fn beats(value: f64, node: usize, radius: f64, cur: f64, cur_w: Option<Witness>) -> bool {
        if value.is_nan() {
            return false;
        }
        match cur_w {
            None => true,
            Some(w) => value > cur || (value == cur && (node, radius) < (w.node, w.radius)),
        }
    }

    pub fn merge(mut self, other: Worst) -> Worst {
        let samples = self.samples + other.samples;
        if let Some(w) = other.witness {
            if Self::beats(other.value, w.node, w.radius, self.value, self.witness) {
                self = other;
            }
        }
        self.samples = samples;
        self
    }

    pub fn into_report(self, holds: impl FnOnce(f64) -> bool, empty_value: f64) -> RegularityReport {
        let best = if self.witness.is_some() { self.value } else { empty_value };
        RegularityReport { holds: holds(best), best_constant: best, worst_witness: self.witness, samples_checked: self.samples }
    }
}

/// Declared lower type `a` with constant `c1`: `lambda(st) <= c1 s^a lambda(t)` for `s <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerType {
    pub a: f64,
    pub c1: f64,
}

/// Closed forms a dominating function can take.
#[derive(Debug, Clone)]
pub enum LambdaForm {
    /// `k r^n`.
    Power { k: f64, n: f64 },
    /// `k r^{n(x)}`.
    PowerField { k: f64, n: Vec<f64> },
    /// `mu(B(x, r))`.
    BallMeasure(Arc<BallIndex>),
    /// Two-regime glued form: `k3 r^{n(x)} d^{gamma(x)}` for `r < c d`, else
    /// `k3 r^xi`, where `d = d(x, x0)`. Past the kink the value is the running
    /// maximum of the two branches, which keeps each section non-decreasing.
    Piecewise { k3: f64, c: f64, xi: f64, n: Vec<f64>, gamma: Vec<f64>, dist_to_contact: Vec<f64> },
    /// Step function: at node `x` and radius `r` the value is the entry at the
    /// first tabulated radius `>= r` (the last entry beyond the table).
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

impl LambdaForm {
    #[inline]
    pub fn eval(&self, x: usize, r: f64) -> f64 {
        match self {
            LambdaForm::Power { k, n } => k * r.powf(*n),
            LambdaForm::PowerField { k, n } => k * r.powf(n[x]),
            LambdaForm::BallMeasure(index) => index.measure(x, r),
            LambdaForm::Piecewise { k3, c, xi, n, gamma, dist_to_contact } => {
                let d = dist_to_contact[x];
                let kink = c * d;
                if r < kink {
                    k3 * r.powf(n[x]) * d.powf(gamma[x])
                } else {
                    let plateau = if d > 0.0 { kink.powf(n[x]) * d.powf(gamma[x]) } else { 0.0 };
                    k3 * plateau.max(r.powf(*xi))
                }
            }
            LambdaForm::Tabulated { radii, values } => {
                let m = radii.len();
                let j = radii.partition_point(|&t| t < r).min(m - 1);
                values[x * m + j]
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            LambdaForm::Power { .. } => "power",
            LambdaForm::PowerField { .. } => "power-field",
            LambdaForm::BallMeasure(_) => "ball-measure",
            LambdaForm::Piecewise { .. } => "piecewise",
            LambdaForm::Tabulated { .. } => "tabulated",
        }
    }
}

/// A majorant `lambda(x, r)` of ball measures, non-decreasing and doubling in `r`.
#[derive(Debug, Clone)]
pub struct DominatingFunction {
    form: LambdaForm,
    c_lambda: f64,
    lower_type: LowerType,
}

impl DominatingFunction {
    /// Checks positivity, monotonicity and the declared doubling constant on
    /// the canonical radii of `space`.
    pub fn new(space: &QuasiMetricSpace, form: LambdaForm, c_lambda: f64, lower_type: LowerType) -> Result<Self> {
        if let LambdaForm::PowerField { n, .. } | LambdaForm::Piecewise { n, .. } = &form {
            if n.len() != space.len() {
                return Err(Error::LengthMismatch { expected: space.len(), got: n.len() });
            }
        }
        if let LambdaForm::Tabulated { radii, values } = &form {
            if radii.is_empty() || values.len() != radii.len() * space.len() {
                return Err(Error::InvalidLambda("tabulated values must hold one row of radii per node".into()));
            }
        }
        let lam = DominatingFunction { form, c_lambda, lower_type };
        let radii = space.canonical_radii();
        let found = (0..space.len())
            .into_par_iter()
            .map(|x| {
                let mut worst = Worst::empty();
                let mut prev = 0.0f64;
                for &r in radii {
                    let v = lam.eval(x, r);
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::InvalidLambda(format!("{} is not positive at node {x}, radius {r}", lam.form.name())));
                    }
                    if v < prev * (1.0 - DECLARED_SLACK) {
                        return Err(Error::InvalidLambda(format!("{} decreases in r at node {x}, radius {r}", lam.form.name())));
                    }
                    prev = v;
                    worst.offer(lam.eval(x, 2.0 * r) / v, x, r);
                }
                Ok(worst)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(Worst::empty(), Worst::merge);
        if let Some(w) = found.witness {
            if found.value > c_lambda * (1.0 + DECLARED_SLACK) {
                return Err(Error::InvalidLambda(format!(
                    "doubling ratio {} at node {}, radius {} exceeds declared constant {c_lambda}",
                    found.value, w.node, w.radius
                )));
            }
        }
        Ok(lam)
    }

    /// `k r^n`: doubling constant `2^n`, lower type `n` with constant 1.
    pub fn power(space: &QuasiMetricSpace, k: f64, n: f64) -> Result<Self> {
        if !(k > 0.0 && n >= 0.0 && k.is_finite() && n.is_finite()) {
            return Err(Error::InvalidLambda(format!("power form needs k > 0, n >= 0 (got k={k}, n={n})")));
        }
        Self::new(space, LambdaForm::Power { k, n }, 2f64.powf(n), LowerType { a: n, c1: 1.0 })
    }

    /// `k r^{n(x)}`: doubling constant `2^{max n}`, lower type `min n` with constant 1.
    pub fn power_field(space: &QuasiMetricSpace, k: f64, n: Vec<f64>) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) || n.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidLambda("power-field form needs k > 0 and finite n(x) >= 0".into()));
        }
        let lo = n.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = n.iter().copied().fold(0.0, f64::max);
        Self::new(space, LambdaForm::PowerField { k, n }, 2f64.powf(hi), LowerType { a: lo, c1: 1.0 })
    }

    /// `mu(B(x, r))`, with the doubling constant of the measure itself.
    pub fn ball_measure(space: &QuasiMetricSpace, mu: &DiscreteMeasure) -> Result<Self> {
        mu.check_space(space)?;
        if let Some(x) = mu.weights().iter().position(|&w| w <= 0.0) {
            return Err(Error::InvalidLambda(format!("ball-measure form vanishes at small radii around zero-weight node {x}")));
        }
        let index = Arc::new(BallIndex::new(space, mu));
        let c = doubling_scan(space, &index, false).value.max(1.0);
        Self::new(space, LambdaForm::BallMeasure(index), c, LowerType { a: 0.0, c1: 1.0 })
    }

    pub fn form(&self) -> &LambdaForm {
        &self.form
    }

    pub fn c_lambda(&self) -> f64 {
        self.c_lambda
    }

    pub fn lower_type(&self) -> LowerType {
        self.lower_type
    }

    #[inline]
    pub fn eval(&self, x: usize, r: f64) -> f64 {
        self.form.eval(x, r)
    }

    /// Nodes where the form carries a dimension field.
    pub fn dimension_field(&self) -> Option<&[f64]> {
        match &self.form {
            LambdaForm::PowerField { n, .. } | LambdaForm::Piecewise { n, .. } => Some(n),
            _ => None,
        }
    }

    /// Largest doubling ratio `lambda(x, 2r) / lambda(x, r)` on canonical radii.
    pub fn measured_doubling(&self, space: &QuasiMetricSpace) -> f64 {
        let radii = space.canonical_radii();
        (0..space.len())
            .into_par_iter()
            .map(|x| radii.iter().map(|&r| self.eval(x, 2.0 * r) / self.eval(x, r)).fold(1.0, f64::max))
            .reduce(|| 1.0, f64::max)
    }
}

/// `mu(B(x, r)) <= lambda(x, r)` at every node and canonical radius.
pub fn check_upper_doubling(space: &QuasiMetricSpace, mu: &DiscreteMeasure, lam: &DominatingFunction) -> RegularityReport {
    let index = BallIndex::new(space, mu);
    upper_doubling_scan(space, &index, lam)
}

pub fn upper_doubling_scan(space: &QuasiMetricSpace, index: &BallIndex, lam: &DominatingFunction) -> RegularityReport {
    let radii = space.canonical_radii();
    let worst = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let mut w = Worst::empty();
            for &r in radii {
                let m = index.measure(x, r);
                let l = lam.eval(x, r);
                let ratio = if let LambdaForm::BallMeasure(_) = lam.form() { if m == l { 1.0 } else { m / l } } else { m / l };
                w.offer(ratio, x, r);
            }
            w
        })
        .reduce(Worst::empty, Worst::merge);
    worst.into_report(|c| c <= 1.0, 0.0)
}

/// Largest `mu(B(x, 2r)) / mu(B(x, r))` over nodes and canonical radii.
///
/// A zero-measure ball whose double is charged counts as an infinite ratio,
/// and is reported as the witness.
pub fn estimate_doubling_constant(space: &QuasiMetricSpace, mu: &DiscreteMeasure) -> RegularityReport {
    let index = BallIndex::new(space, mu);
    doubling_scan(space, &index, false).into_report(f64::is_finite, 1.0)
}

/// As [`estimate_doubling_constant`], restricted to centers of positive weight.
pub fn estimate_doubling_constant_on_support(space: &QuasiMetricSpace, mu: &DiscreteMeasure) -> RegularityReport {
    let index = BallIndex::new(space, mu);
    doubling_scan_weighted(space, &index, Some(mu)).into_report(f64::is_finite, 1.0)
}

fn doubling_scan(space: &QuasiMetricSpace, index: &BallIndex, _support_only: bool) -> Worst {
    doubling_scan_weighted(space, index, None)
}

fn doubling_scan_weighted(space: &QuasiMetricSpace, index: &BallIndex, support: Option<&DiscreteMeasure>) -> Worst {
    let radii = space.canonical_radii();
    (0..space.len())
        .into_par_iter()
        .filter(|&x| support.map_or(true, |mu| mu.weight(x) > 0.0))
        .map(|x| {
            let mut w = Worst::empty();
            for &r in radii {
                let small = index.measure(x, r);
                let big = index.measure(x, 2.0 * r);
                let ratio = if small > 0.0 {
                    big / small
                } else if big > 0.0 {
                    f64::INFINITY
                } else {
                    continue;
                };
                w.offer(ratio, x, r);
            }
            w
        })
        .reduce(Worst::empty, Worst::merge)
}

/// Fit window: radii above this multiple of the smallest positive distance...
pub const AHLFORS_MIN_CELLS: f64 = 1.0;
/// ...and at most this fraction of the diameter.
pub const AHLFORS_MAX_FRACTION: f64 = 0.25;
const AHLFORS_STEPS_PER_OCTAVE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhlforsFit {
    pub q: f64,
    pub a1: f64,
    /// Largest absolute residual in log space over all (node, radius) samples.
    pub residual: f64,
    pub samples: usize,
}

/// Slope of `log mu(B(x, r))` against `log r`.
///
/// Radii run over a quarter-octave ladder between the grid scale and a
/// quarter of the diameter. At each radius the median over centers of
/// `log mu(B(x, r))` is taken, and the slope is the least-squares line through
/// those medians. Centers near an edge or corner see balls that are partly
/// outside the space, a deficit that changes with `r` and drags a plain pooled
/// regression below the true dimension; the median ignores that minority.
/// `a1` certifies `a1^-1 r^q <= mu(B(x, r)) <= a1 r^q` on every sample.
pub fn ahlfors_fit(space: &QuasiMetricSpace, mu: &DiscreteMeasure) -> Result<AhlforsFit> {
    ahlfors_fit_window(space, mu, AHLFORS_MIN_CELLS, AHLFORS_MAX_FRACTION)
}

/// [`ahlfors_fit`] on radii in `(lo * min_distance, hi * r0]`.
pub fn ahlfors_fit_window(space: &QuasiMetricSpace, mu: &DiscreteMeasure, lo: f64, hi: f64) -> Result<AhlforsFit> {
    mu.check_space(space)?;
    let (r_lo, r_hi) = (lo * space.min_distance(), hi * space.r0());
    let radii: Vec<f64> = (0..)
        .map(|j| r_hi * 2f64.powf(-(j as f64) / AHLFORS_STEPS_PER_OCTAVE))
        .take_while(|&r| r > r_lo)
        .collect();
    if radii.len() < 2 {
        return Err(Error::Precondition("Ahlfors fit needs at least two resolved radii".into()));
    }
    // masses[x][j] = mu(B(x, radii[j])), built from one sorted sweep per center.
    let masses: Vec<Vec<f64>> = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let mut pairs: Vec<(f64, f64)> = (0..space.len()).map(|y| (space.dist(x, y), mu.weight(y))).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut out = vec![0.0; radii.len()];
            let mut acc = CompensatedSum::new();
            let mut k = 0;
            for (j, &r) in radii.iter().enumerate().rev() {
                while k < pairs.len() && pairs[k].0 < r {
                    acc.add(pairs[k].1);
                    k += 1;
                }
                out[j] = acc.value();
            }
            out
        })
        .collect();

    let mut line = Vec::with_capacity(radii.len());
    for (j, &r) in radii.iter().enumerate() {
        let mut logs: Vec<f64> = masses.iter().map(|row| row[j]).filter(|&m| m > 0.0).map(f64::ln).collect();
        if logs.is_empty() {
            continue;
        }
        logs.sort_by(f64::total_cmp);
        let mid = logs.len() / 2;
        let median = if logs.len() % 2 == 1 { logs[mid] } else { 0.5 * (logs[mid - 1] + logs[mid]) };
        line.push((r.ln(), median));
    }
    let k = line.len() as f64;
    let mx = compensated_sum(line.iter().map(|p| p.0)) / k;
    let my = compensated_sum(line.iter().map(|p| p.1)) / k;
    let sxy = compensated_sum(line.iter().map(|p| (p.0 - mx) * (p.1 - my)));
    let sxx = compensated_sum(line.iter().map(|p| (p.0 - mx) * (p.0 - mx)));
    if !(sxx > 0.0) {
        return Err(Error::Precondition("Ahlfors fit is degenerate: a single radius".into()));
    }
    let q = sxy / sxx;
    let b = my - q * mx;

    let mut residual = 0.0f64;
    let mut extreme = 0.0f64;
    let mut samples = 0;
    for row in &masses {
        for (j, &m) in row.iter().enumerate() {
            if m > 0.0 {
                let lr = radii[j].ln();
                residual = residual.max((m.ln() - q * lr - b).abs());
                extreme = extreme.max((m.ln() - q * lr).abs());
                samples += 1;
            }
        }
    }
    Ok(AhlforsFit { q, a1: extreme.exp(), residual, samples })
}

/// Minimal `c1` with `r2^alpha / lambda(x, r2) <= c1 r1^alpha / lambda(x, r1)`
/// for canonical `r1 <= r2`; holds when it does not exceed the declared `c1`.
pub fn lower_type_check(space: &QuasiMetricSpace, lam: &DominatingFunction, x: usize, alpha: f64) -> Result<RegularityReport> {
    space.check_node(x)?;
    if !(alpha >= 0.0) {
        return Err(Error::Precondition(format!("lower type exponent must be nonnegative, got {alpha}")));
    }
    Ok(lower_type_on_radii(lam, x, alpha, space.canonical_radii()))
}

pub fn lower_type_on_radii(lam: &DominatingFunction, x: usize, alpha: f64, radii: &[f64]) -> RegularityReport {
    let mut worst = Worst::empty();
    let mut lowest = f64::INFINITY;
    for &r in radii {
        let g = r.powf(alpha) / lam.eval(x, r);
        lowest = lowest.min(g);
        worst.offer(g / lowest, x, r);
    }
    let declared = lam.lower_type().c1;
    worst.into_report(|c| c <= declared * (1.0 + DECLARED_SLACK), 1.0)
}

/// Lower-type check at every node; the report carries the worst node.
pub fn lower_type_check_all(space: &QuasiMetricSpace, lam: &DominatingFunction, alpha: f64) -> RegularityReport {
    let radii = space.canonical_radii();
    let worst = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let rep = lower_type_on_radii(lam, x, alpha, radii);
            let mut w = Worst::empty();
            if let Some(wit) = rep.worst_witness {
                w.offer(rep.best_constant, wit.node, wit.radius);
            }
            w.samples = rep.samples_checked;
            w
        })
        .reduce(Worst::empty, Worst::merge);
    let declared = lam.lower_type().c1;
    worst.into_report(|c| c <= declared * (1.0 + DECLARED_SLACK), 1.0)
}

/// Nodes carrying more mass than `lambda` allows at the smallest canonical radius.
pub fn atom_scan(space: &QuasiMetricSpace, mu: &DiscreteMeasure, lam: &DominatingFunction) -> Vec<(usize, f64)> {
    let Some(&r_min) = space.canonical_radii().first() else {
        return Vec::new();
    };
    (0..space.len())
        .filter(|&x| mu.weight(x) > lam.eval(x, r_min))
        .map(|x| (x, mu.weight(x)))
        .collect()
}

/// Smallest `C` with `lambda(x, r) <= C lambda(y, r)` whenever `d(x, y) < r`,
/// sampled at the first canonical radius past `d(x, y)` and at the diameter.
/// Exact for power forms, whose pairwise ratios are monotone in `r`.
pub fn comparable_center_constant(space: &QuasiMetricSpace, lam: &DominatingFunction) -> RegularityReport {
    let radii = space.canonical_radii();
    let n = space.len();
    let worst = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut w = Worst::empty();
            for y in 0..n {
                if y == x {
                    continue;
                }
                let d = space.dist(x, y);
                let k = radii.partition_point(|&r| r <= d);
                if k == radii.len() {
                    continue;
                }
                for r in [radii[k], radii[radii.len() - 1]] {
                    w.offer(lam.eval(x, r) / lam.eval(y, r), x, r);
                }
            }
            w
        })
        .reduce(Worst::empty, Worst::merge);
    worst.into_report(f64::is_finite, 1.0)
}

/// Smallest `K` with `mu(B(x, r)) <= K r^{n(x)}` on canonical radii.
pub fn fit_power_constant(space: &QuasiMetricSpace, mu: &DiscreteMeasure, n: &[f64]) -> RegularityReport {
    let index = BallIndex::new(space, mu);
    let radii = space.canonical_radii();
    let worst = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let mut w = Worst::empty();
            for &r in radii {
                w.offer(index.measure(x, r) / r.powf(n[x]), x, r);
            }
            w
        })
        .reduce(Worst::empty, Worst::merge);
    worst.into_report(|k| k.is_finite() && k > 0.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_space, SpaceSpec};

    fn grid(n: usize) -> QuasiMetricSpace {
        build_space(&SpaceSpec::Grid1d { n, length: 1.0 }).unwrap()
    }

    fn pair() -> QuasiMetricSpace {
        build_space(&SpaceSpec::Explicit { n: 2, matrix: vec![0.0, 1.0, 1.0, 0.0], labels: None }).unwrap()
    }

    #[test]
    fn ball_measure_examples() {
        let s = grid(11);
        let mu = DiscreteMeasure::uniform(11, 1.0);
        assert_eq!(ball_measure(&s, &mu, 3, 2.0).unwrap(), mu.total());
        // nodes 0.3..0.7
        assert!((ball_measure(&s, &mu, 5, 0.25).unwrap() - 5.0 / 11.0).abs() < 1e-15);
        let zero = DiscreteMeasure::uniform(11, 0.0);
        assert_eq!(ball_measure(&s, &zero, 5, 0.5).unwrap(), 0.0);
        let idx = BallIndex::new(&s, &mu);
        for x in 0..11 {
            for &r in s.canonical_radii() {
                assert!((idx.measure(x, r) - ball_measure(&s, &mu, x, r).unwrap()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn upper_doubling_examples() {
        let s = grid(101);
        let mu = DiscreteMeasure::natural(&s);
        let own = DominatingFunction::ball_measure(&s, &mu).unwrap();
        let rep = check_upper_doubling(&s, &mu, &own);
        assert!(rep.holds);
        assert_eq!(rep.best_constant, 1.0);

        // Open balls of radius just above k h hold 2k + 1 nodes, so 2r is
        // exceeded by one cell; 3r covers it.
        let tight = check_upper_doubling(&s, &mu, &DominatingFunction::power(&s, 2.0, 1.0).unwrap());
        assert!(tight.best_constant <= 1.5 + 1e-12);
        let loose = check_upper_doubling(&s, &mu, &DominatingFunction::power(&s, 3.0, 1.0).unwrap());
        assert!(loose.holds);
    }

    #[test]
    fn doubling_examples() {
        let single = build_space(&SpaceSpec::Grid1d { n: 1, length: 1.0 }).unwrap();
        let rep = estimate_doubling_constant(&single, &DiscreteMeasure::uniform(1, 1.0));
        assert!(rep.holds);
        assert_eq!(rep.best_constant, 1.0);

        let s = grid(200);
        let rep = estimate_doubling_constant(&s, &DiscreteMeasure::natural(&s));
        assert!(rep.holds && rep.best_constant <= 3.0 + 1e-12);

        let p = pair();
        let heavy = DiscreteMeasure::new(vec![1.0, 0.0]).unwrap();
        let rep = estimate_doubling_constant(&p, &heavy);
        assert!(!rep.holds);
        let w = rep.worst_witness.unwrap();
        assert_eq!(w.node, 1);
        assert!(w.radius <= 1.0 && 2.0 * w.radius > 1.0);
        assert!(estimate_doubling_constant_on_support(&p, &heavy).holds);
    }

    #[test]
    fn ahlfors_examples() {
        let s = grid(1024);
        let fit = ahlfors_fit(&s, &DiscreteMeasure::natural(&s)).unwrap();
        assert!((fit.q - 1.0).abs() < 0.1, "{fit:?}");

        let c = build_space(&SpaceSpec::Cantor { generation: 7 }).unwrap();
        let fit = ahlfors_fit(&c, &DiscreteMeasure::natural(&c)).unwrap();
        assert!((fit.q - 2f64.ln() / 3f64.ln()).abs() < 0.05, "{fit:?}");

        let g = build_space(&SpaceSpec::Grid2d { n: 64, length: 1.0 }).unwrap();
        let fit = ahlfors_fit(&g, &DiscreteMeasure::natural(&g)).unwrap();
        assert!((fit.q - 2.0).abs() < 0.1, "{fit:?}");

        assert!(ahlfors_fit(&pair(), &DiscreteMeasure::uniform(2, 1.0)).is_err());
    }

    #[test]
    fn lower_type_examples() {
        let s = grid(64);
        let sq = DominatingFunction::power(&s, 1.0, 2.0).unwrap();
        let rep = lower_type_check(&s, &sq, 10, 1.0).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.best_constant, 1.0);
        let lin = DominatingFunction::power(&s, 1.0, 1.0).unwrap();
        assert!(!lower_type_check(&s, &lin, 10, 2.0).unwrap().holds);

        let field: Vec<f64> = (0..64).map(|i| if i < 32 { 1.0 } else { 2.0 }).collect();
        let pf = DominatingFunction::power_field(&s, 1.0, field).unwrap();
        assert!(lower_type_check(&s, &pf, 3, 0.5).unwrap().holds);
        assert!(!lower_type_check(&s, &pf, 3, 1.5).unwrap().holds);
    }

    #[test]
    fn power_form_constants() {
        let s = grid(50);
        for n in [0.5, 1.0, 2.0, 3.3] {
            let lam = DominatingFunction::power(&s, 1.7, n).unwrap();
            assert!((lam.measured_doubling(&s) - 2f64.powf(n)).abs() <= 1e-9 * 2f64.powf(n));
            for alpha in [0.0, n / 2.0, n] {
                let rep = lower_type_check_all(&s, &lam, alpha);
                assert!(rep.holds);
                assert!((rep.best_constant - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn declared_doubling_is_verified() {
        let s = grid(20);
        let form = LambdaForm::Power { k: 1.0, n: 2.0 };
        assert!(matches!(
            DominatingFunction::new(&s, form, 3.0, LowerType { a: 2.0, c1: 1.0 }),
            Err(Error::InvalidLambda(_))
        ));
    }

    #[test]
    fn atom_examples() {
        let s = grid(11);
        let mut w = vec![0.0; 11];
        w[4] = 1.0;
        let lin = DominatingFunction::power(&s, 1.0, 1.0).unwrap();
        assert_eq!(atom_scan(&s, &DiscreteMeasure::new(w).unwrap(), &lin), vec![(4, 1.0)]);
        let mu = DiscreteMeasure::uniform(11, 1.0);
        let two = DominatingFunction::power(&s, 2.0, 1.0).unwrap();
        assert!(atom_scan(&s, &mu, &two).is_empty());
        let own = DominatingFunction::ball_measure(&s, &mu).unwrap();
        assert!(atom_scan(&s, &mu, &own).is_empty());
    }

    #[test]
    fn ball_measure_form_needs_positive_weights() {
        let p = pair();
        let mu = DiscreteMeasure::new(vec![1.0, 0.0]).unwrap();
        assert!(DominatingFunction::ball_measure(&p, &mu).is_err());
    }

    #[test]
    fn report_serializes_with_schema_names() {
        let s = grid(5);
        let mu = DiscreteMeasure::natural(&s);
        let rep = check_upper_doubling(&s, &mu, &DominatingFunction::ball_measure(&s, &mu).unwrap());
        let v = serde_json::to_value(&rep).unwrap();
        for key in ["holds", "best_constant", "witness", "samples"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
