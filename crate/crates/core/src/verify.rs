//! Refinement studies of the boundedness theorems: each experiment runs on a
//! family of levels, fits its constants per level and calls the result
//! stable when no tracked constant grows by more than `tau` between
//! consecutive levels.
//!
//! Hypotheses are checked first. A level whose hypotheses fail is not
//! evaluated, and the report says so instead of claiming a violation.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Level, RunConfig};
use crate::error::{Error, Result};
use crate::lebesgue::{hls_exponent, lp_norm, luxemburg_norm, ExponentFunction};
use crate::measure::{check_upper_doubling, BallIndex, DominatingFunction, LambdaForm, DECLARED_SLACK};
use crate::operators::{omega_indexed, GridFunction, Kernel, MaximalIndex, PotentialOperator, Setting};
use crate::space::QuasiMetricSpace;

/// Centers sampled per level by the necessity harness.
pub const NECESSITY_CENTERS: usize = 24;
/// Spikes are capped at this fraction of `r0`.
pub const SPIKE_TRUNCATION: f64 = 1.0 / 16.0;
pub const DEFAULT_CLUSTER_WEIGHTS: [f64; 3] = [1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Growing,
    Violated,
    HypothesesNotMet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub level: usize,
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWitness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub label: String,
    pub value: f64,
    /// Whether the value enters the stability verdict.
    pub tracked: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<SampleWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub n: usize,
    /// Headline number of the experiment at this level.
    pub ratio: f64,
    pub constants: Vec<Constant>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl LevelRecord {
    pub fn constant(&self, label: &str) -> Option<&Constant> {
        self.constants.iter().find(|c| c.label == label)
    }
}

/// Necessity harness output for one injected cluster mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub level: usize,
    pub node: usize,
    pub weight: f64,
    /// Largest extremal-function ratio over radii at the cluster.
    pub ratio: f64,
    pub radius: f64,
    /// Bound on `mu(B) / lambda` implied by the fitted operator constant.
    pub derived_c_prime: f64,
    /// Largest `mu(B) / lambda` measured on canonical radii.
    pub measured_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub tau: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub config: RunConfig,
    pub hypotheses: Vec<Hypothesis>,
    pub levels: Vec<LevelRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cluster: Vec<ClusterRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ExperimentReport {
    /// Growth factor of a tracked constant between consecutive levels.
    pub fn growth(&self, label: &str) -> Vec<f64> {
        let vals: Vec<f64> = self.levels.iter().filter_map(|l| l.constant(label).map(|c| c.value)).collect();
        vals.windows(2).map(|w| growth(w[0], w[1])).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per level and constant.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,N,label,value,witness_function,witness_node,witness_radius\n");
        for l in &self.levels {
            for c in &l.constants {
                let w = c.witness.as_ref();
                let func = w.and_then(|w| w.function.clone()).unwrap_or_default();
                let node = w.and_then(|w| w.node).map(|v| v.to_string()).unwrap_or_default();
                let radius = w.and_then(|w| w.radius).map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{},{},{},{}", l.level, l.n, c.label, c.value, func, node, radius);
            }
        }
        out
    }

    pub fn hypotheses_met(&self) -> bool {
        self.hypotheses.iter().all(|h| h.holds)
    }
}

fn growth(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else if a > 0.0 {
        b / a
    } else {
        f64::INFINITY
    }
}

fn tracked_verdict(levels: &[LevelRecord], tau: f64) -> (Verdict, Option<String>) {
    for l in levels {
        for c in l.constants.iter().filter(|c| c.tracked) {
            if !c.value.is_finite() {
                return (Verdict::Violated, Some(format!("{} is not finite at level {} (N = {})", c.label, l.level, l.n)));
            }
        }
    }
    for pair in levels.windows(2) {
        for c in pair[1].constants.iter().filter(|c| c.tracked) {
            if let Some(prev) = pair[0].constant(&c.label) {
                let g = growth(prev.value, c.value);
                if g > tau {
                    return (
                        Verdict::Growing,
                        Some(format!("{} grows by {g:.4} from N = {} to N = {}", c.label, pair[0].n, pair[1].n)),
                    );
                }
            }
        }
    }
    (Verdict::Stable, None)
}

/// Test-function recipe, defined on the continuum so that it means the same
/// function at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Member {
    /// Characteristic function of `B(x_c, radius r0)`, `x_c` at node-order fraction `center`.
    Ball { center: f64, radius: f64 },
    /// `max(d(., x_c), r0 / 16)^{-beta n(x_c) / p}`.
    Spike { center: f64, beta: f64 },
    /// Independent uniform values in `[-1, 1]`.
    Random { stream: u64 },
}

/// Balls, spikes and random functions in proportions 1/3 each; the first
/// spike sits at node 0, which is the contact point of a glued space.
pub fn family_plan(seed: u64, size: usize) -> Vec<Member> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = (size + 2) / 3;
    let ns = size / 3;
    let nr = size - nb - ns;
    let mut out = Vec::with_capacity(size);
    for _ in 0..nb {
        let center = rng.gen::<f64>();
        let radius = (8f64.recip().ln() + rng.gen::<f64>() * 4f64.ln()).exp();
        out.push(Member::Ball { center, radius });
    }
    for i in 0..ns {
        let center = if i == 0 { 0.0 } else { rng.gen::<f64>() };
        let beta = 0.25 + 0.5 * rng.gen::<f64>();
        out.push(Member::Spike { center, beta });
    }
    for stream in 0..nr as u64 {
        out.push(Member::Random { stream });
    }
    out
}

fn center_node(center: f64, n: usize) -> usize {
    ((center * n as f64).floor() as usize).min(n - 1)
}

/// Node of `space` named by a node-order fraction of `coarse`: the nearest
/// node to that coarse node's coordinates, so a fraction means the same point
/// at every level. Spaces without coordinates fall back to the fraction itself.
pub fn anchored_node(center: f64, space: &QuasiMetricSpace, coarse: &QuasiMetricSpace) -> usize {
    let c0 = center_node(center, coarse.len());
    let Some(target) = coarse.coordinates(c0).filter(|_| space.ambient_dimension() == coarse.ambient_dimension()) else {
        return center_node(center, space.len());
    };
    let sq = |y: usize| space.coordinates(y).map_or(f64::INFINITY, |c| c.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum());
    argmax(&(0..space.len()).collect::<Vec<_>>(), |&y| -sq(y)).unwrap_or(0)
}

impl Member {
    pub fn label(&self, index: usize) -> String {
        match self {
            Member::Ball { .. } => format!("ball-{index}"),
            Member::Spike { .. } => format!("spike-{index}"),
            Member::Random { .. } => format!("random-{index}"),
        }
    }

    /// The function on `setting`'s nodes; `p` scales spike exponents and
    /// `locate` turns a center fraction into a node.
    pub fn realize(&self, setting: &Setting<'_>, nfield: Option<&[f64]>, p: f64, seed: u64, locate: impl Fn(f64) -> usize) -> GridFunction {
        let space = setting.space;
        let n = space.len();
        let values = match self {
            Member::Ball { center, radius } => {
                let c = locate(*center);
                let r = radius * space.r0();
                (0..n).map(|y| if space.dist(c, y) < r { 1.0 } else { 0.0 }).collect()
            }
            Member::Spike { center, beta } => {
                let c = locate(*center);
                let dim = nfield.map_or(1.0, |f| f[c]);
                let expo = beta * dim / p;
                // a level-independent cap, so refinement sees one function
                let h = (space.r0() * SPIKE_TRUNCATION).max(f64::MIN_POSITIVE);
                (0..n).map(|y| space.dist(c, y).max(h).powf(-expo)).collect()
            }
            Member::Random { stream } => {
                let mixed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (stream << 32) ^ n as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(mixed);
                (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
            }
        };
        GridFunction::new(values).expect("family members are finite")
    }
}

/// The realised family at one level, labelled; centers are anchored on `coarse`.
pub fn family_at(level: &Level, coarse: &Level, cfg: &RunConfig, p: f64) -> Vec<(String, GridFunction)> {
    let setting = level.setting();
    let nfield = setting.n_field();
    let locate = |u: f64| anchored_node(u, level.space(), coarse.space());
    family_plan(cfg.seed, cfg.family_size)
        .iter()
        .enumerate()
        .map(|(i, m)| (m.label(i), m.realize(&setting, nfield.as_deref(), p, cfg.seed, locate)))
        .collect()
}

struct Resolved {
    lam: DominatingFunction,
    kernel: Kernel,
    q: ExponentFunction,
}

#[derive(Clone, Copy, PartialEq)]
enum Regime {
    /// `r^alpha <= lambda^{1/p - 1/q(x)}` and upper doubling.
    Sufficiency,
    /// `r^alpha = kappa lambda^{1/p - 1/q(x)}` with a single constant `kappa`.
    Necessity,
}

fn target_exponent(setting: &Setting<'_>, lam: &DominatingFunction, cfg: &RunConfig, p: f64, alpha: f64) -> Result<ExponentFunction> {
    let n = setting.space.len();
    if let Some(q) = &cfg.q {
        return q.resolve(n, setting.n_field().as_deref());
    }
    match lam.form() {
        LambdaForm::Power { n: dim, .. } => hls_exponent(p, alpha, &vec![*dim; n]),
        LambdaForm::PowerField { n: field, .. } => hls_exponent(p, alpha, field),
        _ => Err(Error::Precondition("q(x) must be supplied unless lambda is a power form".into())),
    }
}

/// Per node, `min` and `max` of `r^alpha / lambda(x, r)^{1/p - 1/q(x)}` over canonical radii.
fn exponent_ratios(space: &QuasiMetricSpace, lam: &DominatingFunction, alpha: f64, p: f64, q: &ExponentFunction) -> Vec<(f64, f64, f64)> {
    let radii = space.canonical_radii();
    (0..space.len())
        .into_par_iter()
        .map(|x| {
            let e = 1.0 / p - 1.0 / q.at(x);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut at = 0.0;
            for &r in radii {
                let v = r.powf(alpha) / lam.eval(x, r).powf(e);
                lo = lo.min(v);
                if v > hi {
                    hi = v;
                    at = r;
                }
            }
            (lo, hi, at)
        })
        .collect()
}

fn check_level(level_idx: usize, level: &Level, cfg: &RunConfig, regime: Regime, hyps: &mut Vec<Hypothesis>) -> Result<Option<Resolved>> {
    let alpha = cfg.alpha()?;
    let p = cfg.p()?;
    let setting = level.setting();
    let space = setting.space;
    let lam = setting.lambda(cfg.lambda()?)?;
    let kernel = Kernel::with_lambda(alpha, lam.clone())?;
    let mut ok = true;
    let mut push = |name: &str, holds: bool, detail: String| {
        ok &= holds;
        hyps.push(Hypothesis { level: level_idx, name: name.into(), holds, detail });
    };

    match kernel.certify_lower_type(space) {
        Ok(rep) => push("lower_type", true, format!("lower type {} certified, measured constant {:.6e}", lam.lower_type().a, rep.best_constant)),
        Err(e) => push("lower_type", false, e.to_string()),
    }
    if regime == Regime::Sufficiency {
        let ud = check_upper_doubling(space, setting.mu, &lam);
        let at = ud.worst_witness.map_or(String::new(), |w| format!(" at node {}, radius {:.6e}", w.node, w.radius));
        push("upper_doubling", ud.holds, format!("max mu(B)/lambda = {:.6e}{at}", ud.best_constant));
    }
    if !(p > 1.0 && p.is_finite()) {
        push("exponents", false, format!("p = {p} must lie in (1, inf)"));
        return Ok(None);
    }
    let q = match target_exponent(&setting, &lam, cfg, p, alpha) {
        Ok(q) => q,
        Err(e) => {
            push("exponents", false, e.to_string());
            return Ok(None);
        }
    };
    push(
        "exponents",
        p < q.p_minus(),
        format!("p = {p}, q_- = {}, q_+ = {}", q.p_minus(), q.p_plus()),
    );
    let ratios = exponent_ratios(space, &lam, alpha, p, &q);
    match regime {
        Regime::Sufficiency => {
            let x = argmax(&ratios, |t| t.1).unwrap_or(0);
            let (_, hi, r) = ratios[x];
            push(
                "exponent_condition",
                hi <= 1.0 + DECLARED_SLACK,
                format!("max r^alpha / lambda^(1/p-1/q(x)) = {hi:.6e} at node {x}, radius {r:.6e}"),
            )
        }
        Regime::Necessity => {
            // constant in r at each node; the node-dependent constant enters C'
            let x = argmax(&ratios, |t| t.1 / t.0).unwrap_or(0);
            let (lo, hi, _) = ratios[x];
            let (min, max) = ratios.iter().fold((f64::INFINITY, 0.0f64), |a, t| (a.0.min(t.0), a.1.max(t.1)));
            push(
                "equality_case",
                hi <= lo * (1.0 + DECLARED_SLACK),
                format!("r^alpha / lambda^(1/p-1/q(x)) varies by {:.3e} in r at node {x}; range [{min:.6e}, {max:.6e}]", hi / lo - 1.0),
            )
        }
    }
    Ok(ok.then_some(Resolved { lam, kernel, q }))
}

fn finish(experiment: &str, cfg: &RunConfig, hypotheses: Vec<Hypothesis>, levels: Vec<LevelRecord>, cluster: Vec<ClusterRecord>, notes: Vec<String>) -> ExperimentReport {
    let (verdict, reason) = if let Some(h) = hypotheses.iter().find(|h| !h.holds) {
        (Verdict::HypothesesNotMet, Some(format!("{} (level {}): {}", h.name, h.level, h.detail)))
    } else {
        tracked_verdict(&levels, cfg.tau)
    };
    ExperimentReport {
        experiment: experiment.into(),
        seed: cfg.seed,
        tau: cfg.tau,
        verdict,
        reason,
        config: cfg.clone(),
        hypotheses,
        levels,
        cluster,
        notes,
    }
}

/// Index of the largest value, the first one on ties.
fn argmax<T>(items: &[T], key: impl Fn(&T) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, it) in items.iter().enumerate() {
        let v = key(it);
        if v.is_nan() {
            continue;
        }
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|b| b.0)
}

fn constant(label: &str, value: f64, tracked: bool, witness: Option<SampleWitness>) -> Constant {
    Constant { label: label.into(), value, tracked, witness }
}

/// Sup over the family of `||I f||_{q(.)} / ||f||_p` per level.
pub fn verify_sufficiency(cfg: &RunConfig) -> Result<ExperimentReport> {
    verify_sufficiency_on(&cfg.family.build()?, cfg)
}

pub fn verify_sufficiency_on(levels: &[Level], cfg: &RunConfig) -> Result<ExperimentReport> {
    let p = cfg.p()?;
    let mut hyps = Vec::new();
    let mut records = Vec::new();
    let mut notes = Vec::new();
    for (li, level) in levels.iter().enumerate() {
        let Some(res) = check_level(li, level, cfg, Regime::Sufficiency, &mut hyps)? else {
            notes.push(format!("level {li} skipped: hypotheses not met"));
            continue;
        };
        let setting = level.setting();
        let op = PotentialOperator::new(&setting, &res.kernel, cfg.quadrature)?;
        let family = family_at(level, &levels[0], cfg, p);
        let rows: Vec<(f64, usize)> = family
            .par_iter()
            .map(|(_, f)| -> Result<(f64, usize)> {
                let nf = lp_norm(setting.mu, p, f)?;
                if nf == 0.0 {
                    return Ok((0.0, 0));
                }
                let g = op.apply(f)?;
                let node = argmax(g.values(), |v| v.abs()).unwrap_or(0);
                Ok((luxemburg_norm(setting.mu, &res.q, &g)? / nf, node))
            })
            .collect::<Result<_>>()?;
        let best = argmax(&rows, |r| r.0);
        let (ratio, witness) = match best {
            Some(i) => (rows[i].0, Some(SampleWitness { function: Some(family[i].0.clone()), node: Some(rows[i].1), radius: None })),
            None => (0.0, None),
        };
        records.push(LevelRecord {
            level: li,
            n: level.len(),
            ratio,
            constants: vec![
                constant("ratio", ratio, true, witness),
                constant("q_minus", res.q.p_minus(), false, None),
                constant("q_plus", res.q.p_plus(), false, None),
                constant("c_lambda", res.lam.c_lambda(), false, None),
            ],
            notes: Vec::new(),
        });
    }
    Ok(finish("sufficiency", cfg, hyps, records, Vec::new(), notes))
}

/// Fits `C3` in `|If(x)| <= C3 (r^alpha M~f(x) + r^alpha ||f||_p lambda(x, r)^{-1/p})`
/// over nodes and dyadic radii, and `C6` in
/// `|If(x)| <= C6 ||f||_p (M~f(x)^{p/q(x)} ||f||_p^{-p/q(x)} + 1)`.
pub fn verify_hedberg(cfg: &RunConfig) -> Result<ExperimentReport> {
    verify_hedberg_on(&cfg.family.build()?, cfg)
}

#[derive(Clone, Copy, Default)]
struct Fit {
    value: f64,
    node: usize,
    radius: f64,
    samples: usize,
    skipped: usize,
}

impl Fit {
    fn offer(&mut self, v: f64, node: usize, radius: f64) {
        self.samples += 1;
        if v > self.value {
            self.value = v;
            self.node = node;
            self.radius = radius;
        }
    }
}

pub fn verify_hedberg_on(levels: &[Level], cfg: &RunConfig) -> Result<ExperimentReport> {
    let p = cfg.p()?;
    let alpha = cfg.alpha()?;
    let mut hyps = Vec::new();
    let mut records = Vec::new();
    let mut notes = Vec::new();
    for (li, level) in levels.iter().enumerate() {
        let Some(res) = check_level(li, level, cfg, Regime::Sufficiency, &mut hyps)? else {
            notes.push(format!("level {li} skipped: hypotheses not met"));
            continue;
        };
        let setting = level.setting();
        let space = setting.space;
        let n = space.len();
        let op = PotentialOperator::new(&setting, &res.kernel, cfg.quadrature)?;
        let maximal = MaximalIndex::new(space, setting.mu)?;
        let radii = space.dyadic_radii();
        let family = family_at(level, &levels[0], cfg, p);
        let fits: Vec<(Fit, Fit, Fit, usize)> = family
            .par_iter()
            .map(|(_, f)| -> Result<(Fit, Fit, Fit, usize)> {
                let nf = lp_norm(setting.mu, p, f)?;
                let (mut c3, mut c5, mut c6) = (Fit::default(), Fit::default(), Fit::default());
                if nf == 0.0 {
                    return Ok((c3, c5, c6, 1));
                }
                let g = op.apply(f)?;
                let mf = maximal.modified(f)?;
                for x in 0..n {
                    let ix = g.get(x).abs();
                    if mf.get(x) == 0.0 {
                        c3.skipped += 1;
                        continue;
                    }
                    for &r in &radii {
                        let ra = r.powf(alpha);
                        let rhs = ra * mf.get(x) + ra * nf * res.lam.eval(x, r).powf(-1.0 / p);
                        c3.offer(ix / rhs, x, r);
                    }
                    c5.offer(ix / nf, x, space.r0());
                    let e = p / res.q.at(x);
                    let rhs6 = nf * (mf.get(x).powf(e) * nf.powf(-e) + 1.0);
                    c6.offer(ix / rhs6, x, f64::NAN);
                }
                Ok((c3, c5, c6, 0))
            })
            .collect::<Result<_>>()?;
        let vacuous: usize = fits.iter().map(|f| f.3).sum();
        let skipped: usize = fits.iter().map(|f| f.0.skipped).sum();
        let pick = |sel: fn(&(Fit, Fit, Fit, usize)) -> Fit, with_radius: bool| -> (f64, Option<SampleWitness>) {
            match argmax(&fits, |t| sel(t).value) {
                Some(i) if sel(&fits[i]).samples > 0 => {
                    let fit = sel(&fits[i]);
                    let radius = with_radius.then_some(fit.radius);
                    (fit.value, Some(SampleWitness { function: Some(family[i].0.clone()), node: Some(fit.node), radius }))
                }
                _ => (0.0, None),
            }
        };
        let (c3, w3) = pick(|t| t.0, true);
        let (c5, w5) = pick(|t| t.1, true);
        let (c6, w6) = pick(|t| t.2, false);
        let mut lnotes = Vec::new();
        if vacuous > 0 {
            lnotes.push(format!("{vacuous} zero functions: bound holds vacuously"));
        }
        if skipped > 0 {
            lnotes.push(format!("{skipped} nodes skipped where M~f vanishes"));
        }
        let samples: usize = fits.iter().map(|f| f.0.samples).sum();
        records.push(LevelRecord {
            level: li,
            n: level.len(),
            ratio: c3,
            constants: vec![
                constant("c3", c3, true, w3),
                constant("c6", c6, true, w6),
                constant("c5", c5, false, w5),
                constant("samples", samples as f64, false, None),
            ],
            notes: lnotes,
        });
    }
    Ok(finish("hedberg", cfg, hyps, records, Vec::new(), notes))
}

/// Implied bound on `mu(B(a, r)) / lambda(a, r)` from the operator constant,
/// following the extremal-function argument:
/// `(C C_lambda^l c1 / ((2 K1)^alpha kappa))^{1 / (1 - 1/p + 1/q(a))}`.
fn implied_constant(c_op: f64, lam: &DominatingFunction, k1: f64, alpha: f64, p: f64, qa: f64, kappa: f64) -> f64 {
    let ell = (2.0 * k1).log2().ceil().max(1.0);
    let s = 1.0 - 1.0 / p + 1.0 / qa;
    (c_op * lam.c_lambda().powf(ell) * lam.lower_type().c1 / ((2.0 * k1).powf(alpha) * kappa)).powf(1.0 / s)
}

struct Extremal {
    ratio: f64,
    node: usize,
    radius: f64,
    /// Largest `mu(B) / lambda` over the samples, for the same centers and radii.
    measured: f64,
    /// Largest implied constant inputs, `(q(a), kappa(a, r))` at the worst sample.
    qa: f64,
    kappa: f64,
}

/// Extremal ratios `||I f||_q / ||f||_p` for `f = chi_{B(a,r)} lambda(., r) / lambda(a, r)`.
fn extremal_scan(setting: &Setting<'_>, res: &Resolved, cfg: &RunConfig, p: f64, alpha: f64, centers: &[usize]) -> Result<Vec<Extremal>> {
    let space = setting.space;
    let mu = setting.mu;
    let n = space.len();
    let op = PotentialOperator::new(setting, &res.kernel, cfg.quadrature)?;
    let index = BallIndex::new(space, mu);
    let radii = space.dyadic_radii();
    let samples: Vec<(usize, f64)> = centers.iter().flat_map(|&a| radii.iter().map(move |&r| (a, r))).collect();
    samples
        .par_iter()
        .map(|&(a, r)| -> Result<Extremal> {
            let la = res.lam.eval(a, r);
            let f = GridFunction::new((0..n).map(|y| if space.dist(a, y) < r { res.lam.eval(y, r) / la } else { 0.0 }).collect())?;
            let nf = lp_norm(mu, p, &f)?;
            let ratio = if nf > 0.0 { luxemburg_norm(mu, &res.q, &op.apply(&f)?)? / nf } else { 0.0 };
            let qa = res.q.at(a);
            let kappa = r.powf(alpha) / la.powf(1.0 / p - 1.0 / qa);
            Ok(Extremal { ratio, node: a, radius: r, measured: index.measure(a, r) / la, qa, kappa })
        })
        .collect()
}

fn pick_centers(n: usize, seed: u64, extra: Option<usize>) -> Vec<usize> {
    let mut centers: Vec<usize> = if n <= NECESSITY_CENTERS {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e65_6365_7373_6974);
        rand::seq::index::sample(&mut rng, n, NECESSITY_CENTERS).into_vec()
    };
    if let Some(c) = extra {
        centers.push(c);
    }
    centers.sort_unstable();
    centers.dedup();
    centers
}

/// Extremal-function test of the necessity statement, plus the contrapositive:
/// an injected heavy mass at one node must drive the extremal ratio up
/// strictly with the mass.
pub fn verify_necessity(cfg: &RunConfig) -> Result<ExperimentReport> {
    verify_necessity_on(&cfg.family.build()?, cfg)
}

pub fn verify_necessity_on(levels: &[Level], cfg: &RunConfig) -> Result<ExperimentReport> {
    let p = cfg.p()?;
    let alpha = cfg.alpha()?;
    let weights = cfg.cluster_weights.clone().unwrap_or_else(|| DEFAULT_CLUSTER_WEIGHTS.to_vec());
    let mut hyps = Vec::new();
    let mut records = Vec::new();
    let mut cluster = Vec::new();
    let mut notes = Vec::new();
    let mut failure: Option<String> = None;
    for (li, level) in levels.iter().enumerate() {
        let Some(res) = check_level(li, level, cfg, Regime::Necessity, &mut hyps)? else {
            notes.push(format!("level {li} skipped: hypotheses not met"));
            continue;
        };
        let setting = level.setting();
        let space = setting.space;
        let n = space.len();
        let k1 = space.k1();
        let hot = anchored_node(ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x636c_7573).gen::<f64>(), space, levels[0].space());
        let centers = pick_centers(n, cfg.seed, Some(hot));
        let scan = extremal_scan(&setting, &res, cfg, p, alpha, &centers)?;
        let Some(top) = argmax(&scan, |e| e.ratio) else {
            continue;
        };
        let c_op = scan[top].ratio;
        let c_prime = scan.iter().map(|e| implied_constant(c_op, &res.lam, k1, alpha, p, e.qa, e.kappa)).fold(0.0, f64::max);
        let measured_at = argmax(&scan, |e| e.measured).unwrap_or(top);
        let measured = scan[measured_at].measured;
        let ud = check_upper_doubling(space, setting.mu, &res.lam);
        if measured > c_prime {
            failure.get_or_insert(format!("level {li}: sampled mu(B)/lambda = {measured:.6e} exceeds the implied C' = {c_prime:.6e}"));
        }
        records.push(LevelRecord {
            level: li,
            n,
            ratio: c_op,
            constants: vec![
                constant(
                    "operator_constant",
                    c_op,
                    true,
                    Some(SampleWitness { function: Some("extremal".into()), node: Some(scan[top].node), radius: Some(scan[top].radius) }),
                ),
                constant("derived_c_prime", c_prime, false, None),
                constant(
                    "sampled_upper_constant",
                    measured,
                    false,
                    Some(SampleWitness { function: None, node: Some(scan[measured_at].node), radius: Some(scan[measured_at].radius) }),
                ),
                constant(
                    "upper_doubling_constant",
                    ud.best_constant,
                    false,
                    ud.worst_witness.map(|w| SampleWitness { function: None, node: Some(w.node), radius: Some(w.radius) }),
                ),
            ],
            notes: Vec::new(),
        });

        let mut prev: Option<f64> = None;
        for &w in &weights {
            let heavy = level.with_measure(setting.mu.with_added_mass(hot, w))?;
            let hs = heavy.setting();
            let scan = extremal_scan(&hs, &res, cfg, p, alpha, &[hot])?;
            let Some(i) = argmax(&scan, |e| e.ratio) else {
                continue;
            };
            let c_prime = scan.iter().map(|e| implied_constant(scan[i].ratio, &res.lam, k1, alpha, p, e.qa, e.kappa)).fold(0.0, f64::max);
            let measured = check_upper_doubling(hs.space, hs.mu, &res.lam).best_constant;
            if let Some(pr) = prev {
                if !(scan[i].ratio > pr) {
                    failure.get_or_insert(format!("level {li}: extremal ratio at node {hot} does not increase at cluster weight {w}"));
                }
            }
            prev = Some(scan[i].ratio);
            cluster.push(ClusterRecord { level: li, node: hot, weight: w, ratio: scan[i].ratio, radius: scan[i].radius, derived_c_prime: c_prime, measured_constant: measured });
        }
    }
    let mut rep = finish("necessity", cfg, hyps, records, cluster, notes);
    if rep.verdict != Verdict::HypothesesNotMet {
        if let Some(f) = failure {
            rep.verdict = Verdict::Violated;
            rep.reason = Some(f);
        }
    }
    Ok(rep)
}

/// `sup_t t mu{g > t}`, attained just below one of the values of `g`.
fn weak_quasi_norm(mu: &[f64], g: &GridFunction) -> f64 {
    let mut pairs: Vec<(f64, f64)> = g.values().iter().zip(mu).map(|(&v, &w)| (v.abs(), w)).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut mass = 0.0;
    let mut best = 0.0f64;
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == v {
            mass += pairs[i].1;
            i += 1;
        }
        best = best.max(v * mass);
    }
    best
}

/// Strong `(p, p)` and weak `(1, 1)` constants of `M~`, the pointwise
/// domination `M~f <= Mf`, and `Omega <= 1` when a dominating function is
/// configured and the measure is upper doubling for it.
pub fn verify_maximal_bounds(cfg: &RunConfig) -> Result<ExperimentReport> {
    verify_maximal_bounds_on(&cfg.family.build()?, cfg)
}

pub fn verify_maximal_bounds_on(levels: &[Level], cfg: &RunConfig) -> Result<ExperimentReport> {
    let p = cfg.p.unwrap_or(f64::INFINITY);
    let mut hyps = Vec::new();
    if !(p > 1.0) {
        hyps.push(Hypothesis { level: 0, name: "exponent".into(), holds: false, detail: format!("p = {p} must exceed 1") });
        return Ok(finish("maximal", cfg, hyps, Vec::new(), Vec::new(), Vec::new()));
    }
    let spike_p = if p.is_finite() { p } else { 2.0 };
    let mut records = Vec::new();
    let mut failure: Option<String> = None;
    for (li, level) in levels.iter().enumerate() {
        let setting = level.setting();
        let space = setting.space;
        let mu = setting.mu;
        let idx = MaximalIndex::new(space, mu)?;
        let family = family_at(level, &levels[0], cfg, spike_p);
        let rows: Vec<(f64, f64, usize)> = family
            .par_iter()
            .map(|(_, f)| -> Result<(f64, f64, usize)> {
                let m = idx.standard(f)?;
                let mm = idx.modified(f)?;
                let violations = (0..f.len()).filter(|&x| mm.get(x) > m.get(x)).count();
                let nf = lp_norm(mu, p, f)?;
                let strong = if nf > 0.0 { lp_norm(mu, p, &mm)? / nf } else { 0.0 };
                let n1 = lp_norm(mu, 1.0, f)?;
                let weak = if n1 > 0.0 { weak_quasi_norm(mu.weights(), &mm) / n1 } else { 0.0 };
                Ok((strong, weak, violations))
            })
            .collect::<Result<_>>()?;
        let strong_i = argmax(&rows, |r| r.0);
        let weak_i = argmax(&rows, |r| r.1);
        let wit = |i: Option<usize>| i.map(|i| SampleWitness { function: Some(family[i].0.clone()), node: None, radius: None });
        let c0 = strong_i.map_or(0.0, |i| rows[i].0);
        let cw = weak_i.map_or(0.0, |i| rows[i].1);
        let violations: usize = rows.iter().map(|r| r.2).sum();
        if violations > 0 {
            failure.get_or_insert(format!("level {li}: M~f exceeds Mf at {violations} samples"));
        }
        let mut constants = vec![
            constant("c0", c0, true, wit(strong_i)),
            constant("weak", cw, true, wit(weak_i)),
            constant("domination_violations", violations as f64, false, None),
        ];
        let mut lnotes = Vec::new();
        if let Some(spec) = &cfg.lambda {
            let lam = setting.lambda(spec)?;
            let index = BallIndex::new(space, mu);
            let ud = crate::measure::upper_doubling_scan(space, &index, &lam);
            let om = omega_indexed(space, &index, &lam);
            let worst = argmax(om.values(), |v| *v).unwrap_or(0);
            let over = om.values().iter().filter(|&&v| v > 1.0).count();
            if ud.holds && over > 0 {
                failure.get_or_insert(format!("level {li}: Omega > 1 at {over} nodes although mu is upper doubling"));
            }
            if !ud.holds {
                lnotes.push("measure is not upper doubling for the configured lambda; Omega <= 1 not required".into());
            }
            constants.push(constant("omega_max", om.get(worst), false, Some(SampleWitness { function: None, node: Some(worst), radius: None })));
            constants.push(constant("omega_violations", if ud.holds { over as f64 } else { 0.0 }, false, None));
        }
        records.push(LevelRecord { level: li, n: level.len(), ratio: c0, constants, notes: lnotes });
    }
    let mut rep = finish("maximal", cfg, hyps, records, Vec::new(), Vec::new());
    if let Some(f) = failure {
        rep.verdict = Verdict::Violated;
        rep.reason = Some(f);
    }
    Ok(rep)
}
