//! Constant and variable exponent Lebesgue norms on discrete measures.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::numeric::CompensatedSum;
use crate::operators::GridFunction;
use crate::space::Ball;

/// Bisection stops once the bracket's relative width is below this.
pub const NORM_TOLERANCE: f64 = 1e-13;
pub const NORM_MAX_ITERATIONS: usize = 200;

/// Exponent `p(x)` with `1 < p_minus <= p(x) <= p_plus < inf`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFunction {
    values: Vec<f64>,
    p_minus: f64,
    p_plus: f64,
}

impl ExponentFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("exponent needs at least one node".into()));
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 1.0 && v.is_finite())) {
            return Err(Error::ExponentRange { node, value });
        }
        let p_minus = values.iter().copied().fold(f64::INFINITY, f64::min);
        let p_plus = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(ExponentFunction { values, p_minus, p_plus })
    }

    pub fn constant(n: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: usize) -> f64 {
        self.values[x]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    pub fn is_constant(&self) -> bool {
        self.p_minus == self.p_plus
    }
}

impl<'de> Deserialize<'de> for ExponentFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            values: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        ExponentFunction::new(raw.values).map_err(serde::de::Error::custom)
    }
}

/// Textual exponent: a number, a JSON array, or `hls:p=...,alpha=...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExponentSpec {
    Constant(f64),
    Field(Vec<f64>),
    Hls { p: f64, alpha: f64 },
}

impl ExponentSpec {
    /// Exponent on `n` nodes; the HLS form needs the dimension field.
    pub fn resolve(&self, n: usize, nfield: Option<&[f64]>) -> Result<ExponentFunction> {
        match self {
            ExponentSpec::Constant(p) => ExponentFunction::constant(n, *p),
            ExponentSpec::Field(v) => {
                if v.len() != n {
                    return Err(Error::LengthMismatch { expected: n, got: v.len() });
                }
                ExponentFunction::new(v.clone())
            }
            ExponentSpec::Hls { p, alpha } => {
                let nf = nfield.ok_or_else(|| Error::Precondition("hls exponent needs a dimension field".into()))?;
                hls_exponent(*p, *alpha, nf)
            }
        }
    }
}

impl FromStr for ExponentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(p) = s.parse::<f64>() {
            return Ok(ExponentSpec::Constant(p));
        }
        if s.starts_with('[') {
            return Ok(ExponentSpec::Field(serde_json::from_str(s)?));
        }
        if let Some(body) = s.strip_prefix("hls:") {
            let mut p = None;
            let mut alpha = None;
            for kv in body.split(',') {
                let (k, v) = kv.split_once('=').ok_or_else(|| Error::Precondition(format!("expected key=value in `{kv}`")))?;
                let v: f64 = v.trim().parse().map_err(|_| Error::Precondition(format!("`{}` must be a number", k.trim())))?;
                match k.trim() {
                    "p" => p = Some(v),
                    "alpha" => alpha = Some(v),
                    other => return Err(Error::Precondition(format!("unknown exponent parameter `{other}`"))),
                }
            }
            return match (p, alpha) {
                (Some(p), Some(alpha)) => Ok(ExponentSpec::Hls { p, alpha }),
                _ => Err(Error::Precondition("hls exponent needs p and alpha".into())),
            };
        }
        Err(Error::Precondition(format!("unrecognised exponent `{s}`")))
    }
}

fn check_lengths(mu: &DiscreteMeasure, pexp: &ExponentFunction, f: &GridFunction) -> Result<()> {
    if pexp.len() != mu.len() {
        return Err(Error::LengthMismatch { expected: mu.len(), got: pexp.len() });
    }
    f.check_len(mu.len())
}

fn modular_scaled(mu: &DiscreteMeasure, pexp: &ExponentFunction, f: &GridFunction, scale: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for (x, &v) in f.values().iter().enumerate() {
        let w = mu.weight(x);
        if w > 0.0 && v != 0.0 {
            acc.add((v.abs() / scale).powf(pexp.at(x)) * w);
        }
    }
    acc.value()
}

/// `sum_x |f(x)|^{p(x)} weight(x)`.
pub fn modular(mu: &DiscreteMeasure, pexp: &ExponentFunction, f: &GridFunction) -> Result<f64> {
    check_lengths(mu, pexp, f)?;
    Ok(modular_scaled(mu, pexp, f, 1.0))
}

/// `inf { lambda > 0 : modular(f / lambda) <= 1 }` by geometric bisection.
pub fn luxemburg_norm(mu: &DiscreteMeasure, pexp: &ExponentFunction, f: &GridFunction) -> Result<f64> {
    check_lengths(mu, pexp, f)?;
    let sup = (0..mu.len()).filter(|&x| mu.weight(x) > 0.0).map(|x| f.get(x).abs()).fold(0.0, f64::max);
    if sup == 0.0 {
        return Ok(0.0);
    }
    let mut hi = sup * mu.total().max(1.0).powf(1.0 / pexp.p_minus()) + 1.0;
    let mut lo = f64::MIN_POSITIVE;
    debug_assert!(modular_scaled(mu, pexp, f, hi) <= 1.0);
    for _ in 0..NORM_MAX_ITERATIONS {
        if hi / lo - 1.0 <= NORM_TOLERANCE {
            break;
        }
        let mid = if hi / lo > 4.0 { (lo.ln() + 0.5 * (hi.ln() - lo.ln())).exp() } else { 0.5 * (lo + hi) };
        if !(mid > lo && mid < hi) {
            break;
        }
        if modular_scaled(mu, pexp, f, mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Constant exponent norm; `p = inf` is the essential supremum over the support.
pub fn lp_norm(mu: &DiscreteMeasure, p: f64, f: &GridFunction) -> Result<f64> {
    f.check_len(mu.len())?;
    if !(p >= 1.0) {
        return Err(Error::ExponentRange { node: 0, value: p });
    }
    let support = (0..mu.len()).filter(|&x| mu.weight(x) > 0.0);
    if p.is_infinite() {
        return Ok(support.map(|x| f.get(x).abs()).fold(0.0, f64::max));
    }
    let s: CompensatedSum = support.map(|x| f.get(x).abs().powf(p) * mu.weight(x)).collect();
    Ok(s.value().powf(1.0 / p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharBallReport {
    /// `||chi_B||_{p(.)}`.
    pub lhs: f64,
    /// `max_{x in B} mu(B)^{1/p(x)}`.
    pub rhs: f64,
    pub holds: bool,
    /// `lhs - rhs`; negative when the bound fails.
    pub margin: f64,
    /// Node of `B` attaining `rhs`.
    pub worst_node: usize,
    /// `mu(B)^{1/p_-(B)}`, the lower bound that always holds when `mu(B) <= 1`.
    pub floor: f64,
}

/// Tests `||chi_B|| >= mu(B)^{1/p(x)}` for every `x` in a ball with `mu(B) <= 1`.
pub fn char_ball_lower_bound(mu: &DiscreteMeasure, pexp: &ExponentFunction, ball: &Ball) -> Result<CharBallReport> {
    if pexp.len() != mu.len() {
        return Err(Error::LengthMismatch { expected: mu.len(), got: pexp.len() });
    }
    let mass: CompensatedSum = ball.members.iter().map(|&y| mu.weight(y)).collect();
    let mass = mass.value();
    if mass > 1.0 {
        return Err(Error::Precondition(format!("ball B({}, {}) has measure {mass} > 1", ball.center, ball.radius)));
    }
    let chi = GridFunction::indicator(mu.len(), ball.members.iter().copied());
    let lhs = luxemburg_norm(mu, pexp, &chi)?;
    let mut rhs = f64::NEG_INFINITY;
    let mut worst_node = ball.center;
    let mut p_low = f64::INFINITY;
    for &x in &ball.members {
        let v = mass.powf(1.0 / pexp.at(x));
        if v > rhs {
            rhs = v;
            worst_node = x;
        }
        p_low = p_low.min(pexp.at(x));
    }
    let margin = lhs - rhs;
    let holds = lhs >= rhs * (1.0 - 1e-9);
    Ok(CharBallReport { lhs, rhs, holds, margin, worst_node, floor: mass.powf(1.0 / p_low) })
}

/// `q(x) = 1 / (1/p - alpha/n(x))`.
pub fn hls_exponent(p: f64, alpha: f64, nfield: &[f64]) -> Result<ExponentFunction> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::ExponentRange { node: 0, value: p });
    }
    let n_min = nfield.iter().copied().fold(f64::INFINITY, f64::min);
    if !(alpha > 0.0 && alpha < n_min) {
        return Err(Error::Precondition(format!("hls exponent needs 0 < alpha < min n(x) = {n_min}, got {alpha}")));
    }
    let mut q = Vec::with_capacity(nfield.len());
    for (x, &n) in nfield.iter().enumerate() {
        if p >= n / alpha {
            return Err(Error::Precondition(format!("p = {p} >= n(x)/alpha = {} at node {x}", n / alpha)));
        }
        q.push(1.0 / (1.0 / p - alpha / n));
    }
    let q = ExponentFunction::new(q)?;
    debug_assert!(p < q.p_minus());
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub holds: bool,
    /// Largest `||f||_p / ||f||_q` over the family.
    pub constant: f64,
    /// Theoretical embedding constant the fit is compared against.
    pub bound: f64,
    /// Family index attaining `constant`.
    pub witness: Option<usize>,
    pub samples: usize,
}

/// Fits `C` in `||f||_{p(.)} <= C ||f||_{q(.)}` over `family`. The bound is
/// `mu(X)^{1/p - 1/q}` for constant exponents and `1 + mu(X)` otherwise.
pub fn embedding_check(mu: &DiscreteMeasure, pexp: &ExponentFunction, qexp: &ExponentFunction, family: &[GridFunction]) -> Result<EmbeddingReport> {
    if qexp.len() != pexp.len() {
        return Err(Error::LengthMismatch { expected: pexp.len(), got: qexp.len() });
    }
    if let Some(x) = (0..pexp.len()).find(|&x| mu.weight(x) > 0.0 && pexp.at(x) > qexp.at(x)) {
        return Err(Error::Precondition(format!("p(x) > q(x) at node {x}")));
    }
    let bound = if pexp.is_constant() && qexp.is_constant() {
        mu.total().powf(1.0 / pexp.p_minus() - 1.0 / qexp.p_minus())
    } else {
        1.0 + mu.total()
    };
    let mut constant = 0.0f64;
    let mut witness = None;
    let mut samples = 0;
    for (i, f) in family.iter().enumerate() {
        let nq = luxemburg_norm(mu, qexp, f)?;
        if nq == 0.0 {
            continue;
        }
        samples += 1;
        let ratio = luxemburg_norm(mu, pexp, f)? / nq;
        if witness.is_none() || ratio > constant {
            constant = ratio;
            witness = Some(i);
        }
    }
    Ok(EmbeddingReport { holds: constant <= bound * (1.0 + 1e-9), constant, bound, witness, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ball, build_space, SpaceSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gf(v: Vec<f64>) -> GridFunction {
        GridFunction::new(v).unwrap()
    }

    /// Root of `a u^2 + b u - 1 = 0` in `u = lambda^{-2}`, solved by its own bisection.
    fn quartic_root(a: f64, b: f64) -> f64 {
        let g = |lam: f64| a * lam.powi(-4) + b * lam.powi(-2) - 1.0;
        let (mut lo, mut hi) = (0.1, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn modular_examples() {
        let mu = DiscreteMeasure::new(vec![0.5, 1.0, 2.0]).unwrap();
        let p = ExponentFunction::new(vec![2.0, 3.0, 1.5]).unwrap();
        assert_relative_eq!(modular(&mu, &p, &GridFunction::constant(3, 1.0)).unwrap(), 3.5);
        assert_eq!(modular(&mu, &p, &GridFunction::zeros(3)).unwrap(), 0.0);
        let p2 = ExponentFunction::constant(3, 2.0).unwrap();
        assert_relative_eq!(modular(&mu, &p2, &GridFunction::indicator(3, [0, 2])).unwrap(), 2.5);
    }

    #[test]
    fn rejects_unit_exponent() {
        assert!(matches!(ExponentFunction::new(vec![2.0, 1.0]), Err(Error::ExponentRange { node: 1, .. })));
        assert!(ExponentFunction::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn mixed_exponent_two_nodes() {
        let mu = DiscreteMeasure::new(vec![1.0, 1.0]).unwrap();
        let p = ExponentFunction::new(vec![2.0, 4.0]).unwrap();
        let norm = luxemburg_norm(&mu, &p, &GridFunction::constant(2, 1.0)).unwrap();
        let oracle = quartic_root(1.0, 1.0);
        assert!((norm - oracle).abs() < 1e-9);
        assert!((norm - 1.272_019_649_514_069).abs() < 1e-9);
    }

    #[test]
    fn characteristic_ball_norm() {
        let s = build_space(&SpaceSpec::Grid1d { n: 11, length: 1.0 }).unwrap();
        let mu = DiscreteMeasure::natural(&s);
        let b = ball(&s, 5, 0.25).unwrap();
        let p = ExponentFunction::constant(11, 3.0).unwrap();
        let rep = char_ball_lower_bound(&mu, &p, &b).unwrap();
        assert_relative_eq!(rep.lhs, 0.5f64.powf(1.0 / 3.0), max_relative = 1e-12);
        assert!(rep.holds && rep.margin.abs() < 1e-12);
        let whole = ball(&s, 5, 2.0).unwrap();
        let rep = char_ball_lower_bound(&mu, &p, &whole).unwrap();
        assert_relative_eq!(rep.lhs, 1.0, max_relative = 1e-12);
        assert!(rep.holds);
    }

    #[test]
    fn characteristic_ball_mixed_exponent_falls_short() {
        // For mu(B) < 1 the largest exponent gives the largest mu(B)^{1/p(x)},
        // and the norm sits between mu(B)^{1/p_-} and mu(B)^{1/p_+}.
        let s = build_space(&SpaceSpec::Explicit { n: 2, matrix: vec![0.0, 1.0, 1.0, 0.0], labels: None }).unwrap();
        let mu = DiscreteMeasure::new(vec![0.25, 0.25]).unwrap();
        let p = ExponentFunction::new(vec![2.0, 4.0]).unwrap();
        let rep = char_ball_lower_bound(&mu, &p, &ball(&s, 0, 2.0).unwrap()).unwrap();
        assert!((rep.lhs - quartic_root(0.25, 0.25)).abs() < 1e-9);
        assert_relative_eq!(rep.rhs, 0.5f64.powf(0.25), max_relative = 1e-12);
        assert_eq!(rep.worst_node, 1);
        assert!(!rep.holds);
        assert!(rep.lhs >= rep.floor);
        let heavy = DiscreteMeasure::new(vec![1.0, 1.0]).unwrap();
        assert!(char_ball_lower_bound(&heavy, &p, &ball(&s, 0, 2.0).unwrap()).is_err());
    }

    #[test]
    fn hls_arithmetic() {
        let q = hls_exponent(2.0, 1.0, &[4.0; 3]).unwrap();
        assert!(q.values().iter().all(|&v| (v - 4.0).abs() < 1e-12));
        // alpha = 1/2 puts p = 4 beyond n/alpha = 2 on the one-dimensional nodes.
        assert!(hls_exponent(4.0, 0.5, &[1.0, 2.0]).is_err());
        let q = hls_exponent(4.0, 0.125, &[1.0, 2.0]).unwrap();
        assert_relative_eq!(q.at(0), 8.0, max_relative = 1e-12);
        assert_relative_eq!(q.at(1), 16.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(q.p_minus(), 16.0 / 3.0, max_relative = 1e-12);
        let err = hls_exponent(2.0, 0.5, &[2.0, 1.0]).unwrap_err().to_string();
        assert!(err.contains("node 1"), "{err}");
    }

    #[test]
    fn exponent_spec_parsing() {
        assert_eq!("2.5".parse::<ExponentSpec>().unwrap(), ExponentSpec::Constant(2.5));
        assert_eq!("[2, 3]".parse::<ExponentSpec>().unwrap(), ExponentSpec::Field(vec![2.0, 3.0]));
        assert_eq!("hls:p=4,alpha=0.5".parse::<ExponentSpec>().unwrap(), ExponentSpec::Hls { p: 4.0, alpha: 0.5 });
        assert!("hls:p=4".parse::<ExponentSpec>().is_err());
    }

    #[test]
    fn embedding_constants() {
        let fam: Vec<GridFunction> = (0..10).map(|i| gf((0..8).map(|j| ((i * 3 + j * 5) % 7) as f64 - 3.0).collect())).collect();
        let mu4 = DiscreteMeasure::uniform(8, 4.0);
        let p2 = ExponentFunction::constant(8, 2.0).unwrap();
        let q4 = ExponentFunction::constant(8, 4.0).unwrap();
        let same = embedding_check(&mu4, &p2, &p2, &fam).unwrap();
        assert_relative_eq!(same.constant, 1.0, max_relative = 1e-9);
        let rep = embedding_check(&mu4, &p2, &q4, &fam).unwrap();
        assert_relative_eq!(rep.bound, 4f64.powf(0.25), max_relative = 1e-12);
        assert!(rep.holds && rep.constant <= rep.bound);
        let prob = DiscreteMeasure::uniform(8, 1.0);
        let rep = embedding_check(&prob, &p2, &q4, &fam).unwrap();
        assert!(rep.holds && rep.constant <= 1.0 + 1e-9);
        // The constant function attains Hoelder's bound.
        let ones = embedding_check(&mu4, &p2, &q4, &[GridFunction::constant(8, 1.0)]).unwrap();
        assert_relative_eq!(ones.constant, ones.bound, max_relative = 1e-9);
        assert!(embedding_check(&mu4, &q4, &p2, &fam).is_err());
    }

    fn weights_and_values(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(0.0..2.0f64, n),
            prop::collection::vec(1.05..6.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn constant_exponent_matches_closed_form((w, _, f) in weights_and_values(12), p in 1.1..8.0f64) {
            let mu = DiscreteMeasure::new(w).unwrap();
            let f = gf(f);
            let pe = ExponentFunction::constant(12, p).unwrap();
            let lux = luxemburg_norm(&mu, &pe, &f).unwrap();
            let closed = lp_norm(&mu, p, &f).unwrap();
            prop_assert!((lux - closed).abs() <= 1e-9 * closed.max(1e-300), "{} vs {}", lux, closed);
        }

        #[test]
        fn modular_axioms((w, p, f) in weights_and_values(10), g in prop::collection::vec(-5.0..5.0f64, 10), t in 0.0..1.0f64) {
            let mu = DiscreteMeasure::new(w).unwrap();
            let pe = ExponentFunction::new(p).unwrap();
            let (f, g) = (gf(f), gf(g));
            let rf = modular(&mu, &pe, &f).unwrap();
            prop_assert!(rf >= 0.0);
            prop_assert_eq!(rf, modular(&mu, &pe, &f.scaled(-1.0)).unwrap());
            let mix = gf(f.values().iter().zip(g.values()).map(|(a, b)| t * a + (1.0 - t) * b).collect());
            let rg = modular(&mu, &pe, &g).unwrap();
            prop_assert!(modular(&mu, &pe, &mix).unwrap() <= (t * rf + (1.0 - t) * rg) * (1.0 + 1e-12) + 1e-300);
            let bigger = gf(f.values().iter().map(|v| v.abs() + 0.5).collect());
            prop_assert!(modular(&mu, &pe, &bigger).unwrap() >= rf);
            let on_support_zero = (0..10).all(|x| mu.weight(x) == 0.0 || f.get(x) == 0.0);
            prop_assert_eq!(rf == 0.0, on_support_zero);
        }

        #[test]
        fn norm_homogeneity_and_triangle((w, p, f) in weights_and_values(10), g in prop::collection::vec(-5.0..5.0f64, 10), t in -4.0..4.0f64) {
            let mu = DiscreteMeasure::new(w).unwrap();
            let pe = ExponentFunction::new(p).unwrap();
            let (f, g) = (gf(f), gf(g));
            let nf = luxemburg_norm(&mu, &pe, &f).unwrap();
            let nt = luxemburg_norm(&mu, &pe, &f.scaled(t)).unwrap();
            prop_assert!((nt - t.abs() * nf).abs() <= 1e-9 * nf.max(1e-300) * t.abs().max(1.0));
            let ng = luxemburg_norm(&mu, &pe, &g).unwrap();
            let sum = gf(f.values().iter().zip(g.values()).map(|(a, b)| a + b).collect());
            prop_assert!(luxemburg_norm(&mu, &pe, &sum).unwrap() <= (nf + ng) * (1.0 + 1e-9));
        }

        #[test]
        fn small_norm_bounds_modular((w, p, f) in weights_and_values(10), s in 0.01..1.0f64) {
            let mu = DiscreteMeasure::new(w).unwrap();
            let pe = ExponentFunction::new(p).unwrap();
            let f = gf(f);
            let n = luxemburg_norm(&mu, &pe, &f).unwrap();
            prop_assume!(n > 0.0);
            let g = f.scaled(s / n);
            let ng = luxemburg_norm(&mu, &pe, &g).unwrap();
            prop_assert!(ng <= 1.0 + 1e-9);
            prop_assert!(modular(&mu, &pe, &g).unwrap() <= ng * (1.0 + 1e-9));
        }

        #[test]
        fn characteristic_norm_between_extreme_exponents(w in prop::collection::vec(0.001..0.2f64, 5), p in prop::collection::vec(1.05..6.0f64, 5)) {
            let mu = DiscreteMeasure::new(w).unwrap();
            let pe = ExponentFunction::new(p).unwrap();
            let members: Vec<usize> = (0..5).collect();
            let b = Ball { center: 0, radius: f64::INFINITY, members };
            let rep = char_ball_lower_bound(&mu, &pe, &b).unwrap();
            prop_assert!(rep.lhs >= rep.floor * (1.0 - 1e-9));
            prop_assert!(rep.lhs <= rep.rhs * (1.0 + 1e-9));
        }
    }
}
