//! Two components touching at a single contact point, the distance-weighted
//! measure on their union and its ball estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{
    ahlfors_fit, ball_measure, fit_power_constant, BallIndex, DiscreteMeasure, DominatingFunction, LambdaForm, LowerType,
    RegularityReport, Witness, Worst, FITTED_CONSTANT_SLACK,
};
use crate::space::{build_space, QuasiMetricSpace, SpaceSpec};

pub const DEFAULT_MAX_CONTACT: f64 = 100.0;
/// Largest allowed gap between a component's fitted and nominal dimension.
pub const AHLFORS_TOLERANCE: f64 = 0.25;
/// Node count at which a component family's regularity is checked.
pub const AHLFORS_REFERENCE_NODES: usize = 2048;
/// Candidate regime thresholds searched when fitting the ball estimates.
pub const C_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const ADMISSIBLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlueSpec {
    pub component1: SpaceSpec,
    pub component2: SpaceSpec,
    #[serde(default)]
    pub offset1: Vec<f64>,
    #[serde(default)]
    pub offset2: Vec<f64>,
    /// Ambient coordinates of the contact point; the origin when omitted.
    #[serde(default)]
    pub contact: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    #[serde(default = "default_max_contact")]
    pub max_contact_c: f64,
}

fn default_max_contact() -> f64 {
    DEFAULT_MAX_CONTACT
}

impl GlueSpec {
    /// Same glue with each component subdivided into `k` cells per unit side.
    pub fn with_subdivisions(&self, k: usize) -> GlueSpec {
        let refine = |s: &SpaceSpec| match s {
            SpaceSpec::Grid1d { length, .. } => SpaceSpec::Grid1d { n: k + 1, length: *length },
            SpaceSpec::Grid2d { length, .. } => SpaceSpec::Grid2d { n: k + 1, length: *length },
            SpaceSpec::Cantor { .. } => SpaceSpec::Cantor { generation: (k.max(1) as f64).log2().round() as u32 },
            other => other.clone(),
        };
        GlueSpec { component1: refine(&self.component1), component2: refine(&self.component2), ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Contact,
    One,
    Two,
}

#[derive(Debug, Clone)]
pub struct TwoComponentSpace {
    pub base: QuasiMetricSpace,
    /// Node 0 is the contact point.
    pub part: Vec<Part>,
    pub n1: f64,
    pub n2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Common value of `gamma_i + n_i` when admissible.
    pub xi: Option<f64>,
    pub contact_c: f64,
    pub s_const: f64,
    pub dist_to_contact: Vec<f64>,
    /// Quadrature weight each node carries in its own component.
    pub component_weights: Vec<f64>,
    pub fitted_dimensions: (f64, f64),
    pub spec: GlueSpec,
}

impl TwoComponentSpace {
    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn contact(&self) -> usize {
        0
    }

    /// `n(x)`: the component dimension, `n1` at the contact point.
    pub fn n_field(&self) -> Vec<f64> {
        self.part.iter().map(|p| if *p == Part::Two { self.n2 } else { self.n1 }).collect()
    }

    /// `gamma(x)`: the component exponent, `gamma1` at the contact point.
    pub fn gamma_field(&self) -> Vec<f64> {
        self.part.iter().map(|p| if *p == Part::Two { self.gamma2 } else { self.gamma1 }).collect()
    }

    /// Smallest `n(x)`, which bounds the admissible potential order.
    pub fn n_min(&self) -> f64 {
        self.n1
    }
}

fn component_points(spec: &SpaceSpec) -> Result<(Vec<[f64; 2]>, Vec<f64>, f64)> {
    match spec {
        SpaceSpec::Grid1d { .. } | SpaceSpec::Grid2d { .. } | SpaceSpec::Cantor { .. } => {}
        _ => return Err(Error::InvalidGlue("components must be grid1d, grid2d or cantor".into())),
    }
    let space = build_space(spec)?;
    let dim = space.ambient_dimension().unwrap_or(1);
    let pts = (0..space.len())
        .map(|i| {
            let c = space.coordinates(i).expect("coordinate space");
            if dim == 1 {
                [c[0], 0.0]
            } else {
                [c[0], c[1]]
            }
        })
        .collect();
    let nominal = spec.nominal_dimension().expect("coordinate families have a dimension");
    Ok((pts, spec.natural_weights(), nominal))
}

fn offset(v: &[f64]) -> Result<[f64; 2]> {
    match v.len() {
        0 => Ok([0.0, 0.0]),
        1 => Ok([v[0], 0.0]),
        2 => Ok([v[0], v[1]]),
        k => Err(Error::InvalidGlue(format!("ambient coordinates are 2-D, got {k} components"))),
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Slope of the component's natural measure at a reference resolution.
fn component_dimension(spec: &SpaceSpec) -> Result<f64> {
    let reference = build_space(&spec.at_resolution(AHLFORS_REFERENCE_NODES))?;
    Ok(ahlfors_fit(&reference, &DiscreteMeasure::natural(&reference))?.q)
}

pub fn build_glued(spec: &GlueSpec) -> Result<TwoComponentSpace> {
    if !(spec.gamma1.is_finite() && spec.gamma2.is_finite()) {
        return Err(Error::InvalidGlue("exponents must be finite".into()));
    }
    let (p1, w1, n1) = component_points(&spec.component1)?;
    let (p2, w2, n2) = component_points(&spec.component2)?;
    if n1 > n2 {
        return Err(Error::InvalidGlue(format!("component dimensions must satisfy n1 <= n2, got {n1} > {n2}; swap the components")));
    }
    if !(spec.gamma1 > -n1 && spec.gamma2 > -n2) {
        return Err(Error::InvalidGlue(format!(
            "exponents must satisfy gamma_i > -n_i, got gamma1={}, gamma2={}",
            spec.gamma1, spec.gamma2
        )));
    }
    let q1 = component_dimension(&spec.component1)?;
    let q2 = component_dimension(&spec.component2)?;
    for (i, q, n) in [(1, q1, n1), (2, q2, n2)] {
        if (q - n).abs() > AHLFORS_TOLERANCE {
            return Err(Error::InvalidGlue(format!("component {i} fits dimension {q:.3}, expected {n:.3}")));
        }
    }

    let (o1, o2, x0) = (offset(&spec.offset1)?, offset(&spec.offset2)?, offset(&spec.contact)?);
    let shift = |p: [f64; 2], o: [f64; 2]| [p[0] + o[0], p[1] + o[1]];
    let p1: Vec<[f64; 2]> = p1.into_iter().map(|p| shift(p, o1)).collect();
    let p2: Vec<[f64; 2]> = p2.into_iter().map(|p| shift(p, o2)).collect();
    let scale = p1.iter().chain(&p2).map(|p| dist2(*p, x0)).fold(0.0, f64::max).max(1.0);
    let same = |a: [f64; 2], b: [f64; 2]| dist2(a, b) <= 1e-12 * scale;

    let mut coords = vec![x0];
    let mut part = vec![Part::Contact];
    let mut cw = vec![0.0];
    for (pts, w, tag) in [(&p1, &w1, Part::One), (&p2, &w2, Part::Two)] {
        for (&p, &wp) in pts.iter().zip(w) {
            if same(p, x0) {
                continue;
            }
            coords.push(p);
            part.push(tag);
            cw.push(wp);
        }
    }
    for &a in &p1 {
        if same(a, x0) {
            continue;
        }
        if let Some(b) = p2.iter().find(|&&b| same(a, b)) {
            return Err(Error::InvalidGlue(format!("components overlap at ({}, {}) away from the contact point", b[0], b[1])));
        }
    }
    // Discrete closure contact: each component comes within one of its own
    // grid spacings of the contact point.
    for (i, pts) in [(1, &p1), (2, &p2)] {
        let gap = pts.iter().map(|p| dist2(*p, x0)).fold(f64::INFINITY, f64::min);
        let spacing = pts
            .iter()
            .enumerate()
            .flat_map(|(a, p)| pts[a + 1..].iter().map(move |q| dist2(*p, *q)))
            .fold(f64::INFINITY, f64::min);
        if gap > spacing * (1.0 + 1e-9) && gap > 1e-12 * scale {
            return Err(Error::InvalidGlue(format!("component {i} stays {gap:.3e} away from the contact point")));
        }
    }

    let flat: Vec<f64> = coords.iter().flat_map(|p| [p[0], p[1]]).collect();
    let base = QuasiMetricSpace::from_points(2, flat, 1.0)?;
    let n = base.len();
    let dist_to_contact: Vec<f64> = (0..n).map(|x| base.dist(x, 0)).collect();

    // d(x, closure of X_i): nodes of X_i together with the contact point.
    let contact_c = (1..n)
        .into_par_iter()
        .map(|x| {
            let mut d1 = dist_to_contact[x];
            let mut d2 = dist_to_contact[x];
            for y in 1..n {
                let d = base.dist(x, y);
                match part[y] {
                    Part::One => d1 = d1.min(d),
                    Part::Two => d2 = d2.min(d),
                    Part::Contact => {}
                }
            }
            dist_to_contact[x] / (d1 + d2)
        })
        .reduce(|| 1.0, f64::max);
    if !(contact_c <= spec.max_contact_c) {
        return Err(Error::InvalidGlue(format!(
            "contact constant {contact_c:.3} exceeds {}: the components meet in more than one point",
            spec.max_contact_c
        )));
    }

    let diam = |tag: Part| {
        let ids: Vec<usize> = (0..n).filter(|&i| part[i] == tag || part[i] == Part::Contact).collect();
        ids.iter().flat_map(|&a| ids.iter().map(move |&b| (a, b))).map(|(a, b)| base.dist(a, b)).fold(0.0, f64::max)
    };
    let s_const = diam(Part::One) + diam(Part::Two);
    let mut tc = TwoComponentSpace {
        base,
        part,
        n1,
        n2,
        gamma1: spec.gamma1,
        gamma2: spec.gamma2,
        xi: None,
        contact_c,
        s_const,
        dist_to_contact,
        component_weights: cw,
        fitted_dimensions: (q1, q2),
        spec: spec.clone(),
    };
    admissible(&mut tc);
    Ok(tc)
}

/// `gamma1 + n1 == gamma2 + n2`; records the common value as `xi`.
pub fn admissible(tc: &mut TwoComponentSpace) -> bool {
    let a = tc.gamma1 + tc.n1;
    let b = tc.gamma2 + tc.n2;
    let ok = (a - b).abs() <= ADMISSIBLE_TOLERANCE * a.abs().max(b.abs()).max(1.0);
    tc.xi = ok.then_some(a);
    ok
}

/// `d(x, x0)^{gamma(x)}` times the component weight; zero at the contact point.
pub fn glued_weights(tc: &TwoComponentSpace) -> DiscreteMeasure {
    let gamma = tc.gamma_field();
    let w = (0..tc.len())
        .map(|x| if x == 0 { 0.0 } else { tc.dist_to_contact[x].powf(gamma[x]) * tc.component_weights[x] })
        .collect();
    DiscreteMeasure::new(w).expect("weights are finite and nonnegative")
}

#[derive(Debug, Clone)]
pub struct GluedMeasure {
    pub underlying: DiscreteMeasure,
    pub k3: f64,
    pub k4: f64,
    pub c_small: f64,
    pub k4_witness: Option<Witness>,
    pub warnings: Vec<String>,
}

/// Glued measure with its fitted constants. `k3` and `c_small` are only
/// available on admissible glues and are `NaN` otherwise.
pub fn glued_measure(tc: &TwoComponentSpace) -> GluedMeasure {
    let underlying = glued_weights(tc);
    let k4_fit = fit_power_constant(&tc.base, &underlying, &tc.n_field());
    let mut warnings = Vec::new();
    if tc.gamma1 < 0.0 || tc.gamma2 < 0.0 {
        let w = k4_fit.worst_witness.map_or(String::new(), |w| format!(" (worst at node {}, radius {:.3e})", w.node, w.radius));
        warnings.push(format!("negative gamma: K4 = {:.4e} is resolution dependent near the contact point{w}", k4_fit.best_constant));
    }
    let (k3, c_small) = match fit_ball_estimates(tc, &underlying) {
        Ok(rep) => (rep.k3, rep.c),
        Err(_) => (f64::NAN, f64::NAN),
    };
    GluedMeasure { underlying, k3, k4: k4_fit.best_constant, c_small, k4_witness: k4_fit.worst_witness, warnings }
}

/// Two-regime dominating function built from the fitted `k3` and `c_small`.
pub fn lambda_piecewise(tc: &TwoComponentSpace, gm: &GluedMeasure) -> Result<DominatingFunction> {
    let xi = tc.xi.ok_or_else(|| Error::Precondition("piecewise dominating function needs an admissible glue".into()))?;
    if !(gm.k3 >= 1.0 && gm.c_small > 0.0 && gm.c_small < 1.0) {
        return Err(Error::Precondition("ball estimate constants were not fitted".into()));
    }
    let n = tc.n_field();
    let gamma = tc.gamma_field();
    let c = gm.c_small;
    let n_max = n.iter().copied().fold(0.0, f64::max);
    let g_min = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let c_lambda = 2f64.powf(xi.max(n_max)) * if g_min < 0.0 { (c / 2.0).powf(g_min) } else { 1.0 };
    let a = n.iter().copied().fold(f64::INFINITY, f64::min).min(xi);
    let c1 = n.iter().map(|&nx| c.powf((nx.min(xi) / xi - 1.0) * a)).fold(1.0, f64::max);
    DominatingFunction::new(
        &tc.base,
        LambdaForm::Piecewise { k3: gm.k3, c, xi, n, gamma, dist_to_contact: tc.dist_to_contact.clone() },
        c_lambda,
        LowerType { a, c1 },
    )
}

/// `k4 r^{n(x)}`.
pub fn lambda_simplified(tc: &TwoComponentSpace, gm: &GluedMeasure) -> Result<DominatingFunction> {
    if tc.xi.is_none() {
        return Err(Error::Precondition("simplified dominating function needs an admissible glue".into()));
    }
    DominatingFunction::power_field(&tc.base, gm.k4 * (1.0 + FITTED_CONSTANT_SLACK), tc.n_field())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub samples: usize,
    pub violations: usize,
    /// Sample needing the largest constant.
    pub witness: Option<Witness>,
    pub worst_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallEstimateReport {
    pub holds: bool,
    pub k3: f64,
    pub c: f64,
    /// `k3` needed for each candidate threshold, in `C_GRID` order.
    pub k3_by_c: Vec<f64>,
    pub regime_i: RegimeSummary,
    pub regime_ii: RegimeSummary,
    pub regime_iii: RegimeSummary,
    /// `mu(B(x0, r)) / r^xi` over radii that resolve neighbors of the contact point.
    pub contact_ratio_min: f64,
    pub contact_ratio_max: f64,
    pub s_const: f64,
}

struct Sample {
    x: usize,
    r: f64,
    /// Constant regime (i) would need at this sample.
    need_i: f64,
    need_ii: f64,
}

fn two_sided(m: f64, model: f64) -> f64 {
    if m > 0.0 {
        (m / model).max(model / m).max(1.0)
    } else {
        f64::INFINITY
    }
}

/// Fits `(k3, c)` for the three ball regimes, then recounts violations at the
/// fitted constants.
pub fn verify_ball_estimates(tc: &TwoComponentSpace, gm: &GluedMeasure) -> Result<BallEstimateReport> {
    fit_ball_estimates(tc, &gm.underlying)
}

fn fit_ball_estimates(tc: &TwoComponentSpace, mu: &DiscreteMeasure) -> Result<BallEstimateReport> {
    let xi = tc.xi.ok_or_else(|| Error::Precondition("ball estimates need an admissible glue".into()))?;
    let space = &tc.base;
    let n_field = tc.n_field();
    let gamma = tc.gamma_field();
    let s = tc.s_const;
    let index = BallIndex::new(space, mu);
    let radii: Vec<f64> = space.canonical_radii().iter().copied().filter(|&r| r <= s).collect();

    let samples: Vec<Sample> = (1..tc.len())
        .into_par_iter()
        .flat_map_iter(|x| {
            let d = tc.dist_to_contact[x];
            let dg = d.powf(gamma[x]);
            let nx = n_field[x];
            let index = &index;
            radii.iter().map(move |&r| {
                let mass = index.measure(x, r);
                Sample { x, r, need_i: two_sided(mass, dg * r.powf(nx)), need_ii: two_sided(mass, r.powf(xi)) }
            })
        })
        .collect();

    let k3_by_c: Vec<f64> = C_GRID
        .par_iter()
        .map(|&c| {
            samples
                .iter()
                .map(|s| if s.r < c * tc.dist_to_contact[s.x] { s.need_i } else { s.need_ii })
                .fold(1.0, f64::max)
        })
        .collect();
    // argmin with the smallest c winning ties
    let best = (0..C_GRID.len()).fold(0, |b, i| if k3_by_c[i] < k3_by_c[b] { i } else { b });
    let (k3, c) = (k3_by_c[best], C_GRID[best]);

    let mut regime_i = Worst::empty();
    let mut regime_ii = Worst::empty();
    let (mut viol_i, mut viol_ii) = (0, 0);
    let slack = 1.0 + 1e-12;
    for smp in &samples {
        let d = tc.dist_to_contact[smp.x];
        if smp.r < c * d {
            regime_i.offer(smp.need_i, smp.x, smp.r);
            viol_i += usize::from(smp.need_i > k3 * slack);
        } else {
            regime_ii.offer(smp.need_ii, smp.x, smp.r);
            viol_ii += usize::from(smp.need_ii > k3 * slack);
        }
    }

    let total = mu.total();
    let mut regime_iii = Worst::empty();
    let mut viol_iii = 0;
    for x in 1..tc.len() {
        for r in [s * (1.0 + 1e-6), 1.5 * s, 2.0 * s] {
            let m = ball_measure(space, mu, x, r)?;
            regime_iii.offer((m - total).abs(), x, r);
            viol_iii += usize::from(m != total);
        }
    }

    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &r in radii.iter().filter(|&&r| r > space.min_distance()) {
        let ratio = index.measure(0, r) / r.powf(xi);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }

    let summary = |w: Worst, violations: usize| RegimeSummary {
        samples: w.samples,
        violations,
        witness: w.witness,
        worst_constant: if w.witness.is_some() { w.value } else { 0.0 },
    };
    Ok(BallEstimateReport {
        holds: k3.is_finite() && viol_i + viol_ii + viol_iii == 0,
        k3,
        c,
        k3_by_c,
        regime_i: summary(regime_i, viol_i),
        regime_ii: summary(regime_ii, viol_ii),
        regime_iii: summary(regime_iii, viol_iii),
        contact_ratio_min: lo,
        contact_ratio_max: hi,
        s_const: s,
    })
}

/// Report form of [`verify_ball_estimates`] for callers that only need the
/// headline constant.
pub fn ball_estimates_as_regularity(rep: &BallEstimateReport) -> RegularityReport {
    let witness = [&rep.regime_i, &rep.regime_ii]
        .into_iter()
        .filter(|r| r.witness.is_some())
        .max_by(|a, b| a.worst_constant.total_cmp(&b.worst_constant))
        .and_then(|r| r.witness);
    RegularityReport {
        holds: rep.holds,
        best_constant: rep.k3,
        worst_witness: witness,
        samples_checked: rep.regime_i.samples + rep.regime_ii.samples + rep.regime_iii.samples,
    }
}
