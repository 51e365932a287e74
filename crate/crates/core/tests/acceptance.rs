//! Acceptance run. Prints one line per criterion and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rieszpot::config::{FamilySpec, Level, MeasureSpec, RunConfig};
use rieszpot::lebesgue::{luxemburg_norm, ExponentFunction};
use rieszpot::measure::{check_upper_doubling, estimate_doubling_constant_on_support, lower_type_check_all, DiscreteMeasure, DominatingFunction};
use rieszpot::operators::{potential_in, GridFunction, KernelSpec, LambdaSpec, Quadrature, Setting};
use rieszpot::space::{build_space, QuasiMetricSpace, SpaceSpec};
use rieszpot::two_component::{build_glued, glued_measure, glued_weights, lambda_piecewise, lambda_simplified, verify_ball_estimates, GlueSpec};
use rieszpot::verify::{self, ExperimentReport, Verdict};

const QUADRATURE_TOL: f64 = 0.05;
const QUADRATURE_BUDGET: Duration = Duration::from_secs(10);
const LUX_CONSTANT_TOL: f64 = 1e-9;
const LUX_MIXED_TOL: f64 = 1e-6;
const GROWTH_TOL: f64 = 1.10;
const NON_DOUBLING_GROWTH: f64 = 1.5;
const SUFFICIENCY_BUDGET: Duration = Duration::from_secs(300);
const SEED: u64 = 0;
const SEGMENT_LEVELS: [usize; 3] = [256, 512, 1024];
const GLUE_LEVELS: [usize; 3] = [16, 32, 64];
const BALL_LEVELS: [usize; 3] = [8, 16, 32];

type Check = Result<(bool, String), String>;

fn segment_square(gamma1: f64, gamma2: f64) -> GlueSpec {
    GlueSpec {
        component1: SpaceSpec::Grid1d { n: 2, length: 1.0 },
        component2: SpaceSpec::Grid2d { n: 2, length: 1.0 },
        offset1: vec![],
        offset2: vec![-1.0, -1.0],
        contact: vec![],
        gamma1,
        gamma2,
        max_contact_c: 100.0,
    }
}

fn segment_config() -> RunConfig {
    RunConfig {
        family: FamilySpec::Space { space: SpaceSpec::Grid1d { n: 2, length: 1.0 }, measure: MeasureSpec::Natural, levels: SEGMENT_LEVELS.to_vec() },
        lambda: Some(LambdaSpec::Power { k: None, n: 1.0 }),
        kernel: None,
        alpha: Some(0.5),
        p: Some(4.0 / 3.0),
        q: None,
        seed: SEED,
        family_size: verify_family_size(),
        quadrature: Quadrature::SelfCell,
        tau: GROWTH_TOL,
        cluster_weights: None,
    }
}

fn glue_config() -> RunConfig {
    RunConfig {
        family: FamilySpec::Glue { glue: segment_square(1.0, 0.0), levels: GLUE_LEVELS.to_vec() },
        lambda: Some(LambdaSpec::Simplified),
        ..segment_config()
    }
}

fn verify_family_size() -> usize {
    rieszpot::config::DEFAULT_FAMILY_SIZE
}

fn growths(vals: &[f64]) -> Vec<f64> {
    vals.windows(2).map(|w| w[1] / w[0]).collect()
}

fn fmt(vals: &[f64]) -> String {
    let parts: Vec<String> = vals.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn tracked(rep: &ExperimentReport, label: &str) -> Vec<f64> {
    rep.levels.iter().filter_map(|l| l.constant(label).map(|c| c.value)).collect()
}

fn sizes(rep: &ExperimentReport) -> String {
    let n: Vec<String> = rep.levels.iter().map(|l| l.n.to_string()).collect();
    n.join("/")
}

fn quadrature_fidelity() -> Check {
    let t = Instant::now();
    let s = build_space(&SpaceSpec::Grid1d { n: 1024, length: 1.0 }).map_err(|e| e.to_string())?;
    let mu = DiscreteMeasure::natural(&s);
    let setting = Setting::new(&s, &mu);
    let ks: KernelSpec = "dim-power:alpha=0.5,q=1".parse().map_err(|e: rieszpot::Error| e.to_string())?;
    let one = GridFunction::constant(s.len(), 1.0);
    let err = |q| -> Result<f64, String> {
        let g = potential_in(&setting, &ks, &one, q).map_err(|e| e.to_string())?;
        Ok((1..s.len() - 1)
            .map(|i| {
                let x = s.coordinates(i).unwrap()[0];
                (g.get(i) - 2.0 * (x.sqrt() + (1.0 - x).sqrt())).abs()
            })
            .fold(0.0, f64::max))
    };
    let e = err(Quadrature::SelfCell)?;
    let elapsed = t.elapsed();
    let plain = err(Quadrature::Plain)?;
    Ok((
        e <= QUADRATURE_TOL && elapsed <= QUADRATURE_BUDGET,
        format!("self-cell max error {e:.4e} <= {QUADRATURE_TOL} in {:.2}s <= 10s (plain diagonal exclusion: {plain:.4e})", elapsed.as_secs_f64()),
    ))
}

fn luxemburg_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=64);
        let p = rng.gen_range(1.05..8.0);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..2.0)).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let closed = f.iter().zip(&w).map(|(v, w)| w * v.abs().powf(p)).sum::<f64>().powf(1.0 / p);
        let mu = DiscreteMeasure::new(w).map_err(|e| e.to_string())?;
        let pexp = ExponentFunction::constant(n, p).map_err(|e| e.to_string())?;
        let norm = luxemburg_norm(&mu, &pexp, &GridFunction::new(f).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = worst.max((norm - closed).abs() / closed.max(f64::MIN_POSITIVE));
    }
    // two unit masses, exponents 2 and 4, f = 1: lambda^-2 + lambda^-4 = 1, so lambda^-2 = (sqrt 5 - 1) / 2
    let oracle = ((5f64.sqrt() - 1.0) / 2.0).powf(-0.5);
    let mu = DiscreteMeasure::new(vec![1.0, 1.0]).map_err(|e| e.to_string())?;
    let pexp = ExponentFunction::new(vec![2.0, 4.0]).map_err(|e| e.to_string())?;
    let mixed = luxemburg_norm(&mu, &pexp, &GridFunction::constant(2, 1.0)).map_err(|e| e.to_string())?;
    let d = (mixed - oracle).abs();
    Ok((
        worst <= LUX_CONSTANT_TOL && d <= LUX_MIXED_TOL,
        format!("100 constant-exponent cases max rel error {worst:.2e} <= 1e-9; two-node mixed {mixed:.10} vs root {oracle:.10} (|d| = {d:.1e} <= 1e-6)"),
    ))
}

fn glued_upper_doubling() -> Check {
    let mut k4 = Vec::new();
    let mut ok = true;
    let mut notes = Vec::new();
    for k in BALL_LEVELS {
        let tc = build_glued(&segment_square(1.0, 0.0).with_subdivisions(k)).map_err(|e| e.to_string())?;
        let gm = glued_measure(&tc);
        let lam = lambda_simplified(&tc, &gm).map_err(|e| e.to_string())?;
        let ud = check_upper_doubling(&tc.base, &gm.underlying, &lam);
        let balls = verify_ball_estimates(&tc, &gm).map_err(|e| e.to_string())?;
        let v = (balls.regime_i.violations, balls.regime_ii.violations, balls.regime_iii.violations);
        ok &= ud.holds && v == (0, 0, 0);
        k4.push(gm.k4);
        notes.push(format!("N={}: holds={} K3={:.3} c={} viol={:?}", tc.len(), ud.holds, balls.k3, balls.c, v));
    }
    let g = growths(&k4);
    ok &= g.iter().all(|&x| x <= GROWTH_TOL);
    Ok((ok, format!("K4 {} growth {} <= 1.10; {}", fmt(&k4), fmt(&g), notes.join("; "))))
}

fn doubling_iff_admissible() -> Check {
    let consts = |g1: f64, g2: f64| -> Result<Vec<f64>, String> {
        BALL_LEVELS
            .iter()
            .map(|&k| {
                let tc = build_glued(&segment_square(g1, g2).with_subdivisions(k)).map_err(|e| e.to_string())?;
                Ok(estimate_doubling_constant_on_support(&tc.base, &glued_weights(&tc)).best_constant)
            })
            .collect()
    };
    let good = consts(1.0, 0.0)?;
    let bad = consts(0.0, 0.0)?;
    let (gg, gb) = (growths(&good), growths(&bad));
    Ok((
        gg.iter().all(|&g| g <= GROWTH_TOL) && gb.iter().all(|&g| g >= NON_DOUBLING_GROWTH),
        format!("admissible {} growth {} <= 1.10; non-admissible {} growth {} >= 1.5", fmt(&good), fmt(&gg), fmt(&bad), fmt(&gb)),
    ))
}

struct Families {
    segment: Vec<Level>,
    glue: Vec<Level>,
    glue_build: Duration,
    segment_build: Duration,
}

fn sufficiency(f: &Families) -> Check {
    let t = Instant::now();
    let mut literal = segment_config();
    literal.lambda = Some(LambdaSpec::Power { k: Some(1.0), n: 1.0 });
    let refused = verify::verify_sufficiency_on(&f.segment[..1], &literal).map_err(|e| e.to_string())?;
    let a = verify::verify_sufficiency_on(&f.segment, &segment_config()).map_err(|e| e.to_string())?;
    let b = verify::verify_sufficiency_on(&f.glue, &glue_config()).map_err(|e| e.to_string())?;
    let total = t.elapsed() + f.glue_build + f.segment_build;
    let ok = refused.verdict == Verdict::HypothesesNotMet && a.verdict == Verdict::Stable && b.verdict == Verdict::Stable && total <= SUFFICIENCY_BUDGET;
    Ok((
        ok,
        format!(
            "(a) segment N={} lambda=Kr ratio {} {:?}; lambda=r refused ({:?}); (b) glue N={} ratio {} {:?}; {:.1}s <= 300s",
            sizes(&a),
            fmt(&tracked(&a, "ratio")),
            a.verdict,
            refused.verdict,
            sizes(&b),
            fmt(&tracked(&b, "ratio")),
            b.verdict,
            total.as_secs_f64()
        ),
    ))
}

fn hedberg(f: &Families) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, levels, cfg) in [("segment", &f.segment, segment_config()), ("glue", &f.glue, glue_config())] {
        let rep = verify::verify_hedberg_on(levels, &cfg).map_err(|e| e.to_string())?;
        let (c3, c6) = (tracked(&rep, "c3"), tracked(&rep, "c6"));
        let finite = c3.iter().chain(&c6).all(|v| v.is_finite() && *v > 0.0);
        ok &= rep.verdict == Verdict::Stable && finite && c3.len() == 3;
        parts.push(format!("{name} C3 {} C6 {} {:?}", fmt(&c3), fmt(&c6), rep.verdict));
    }
    Ok((ok, format!("{}; constants are sample maxima, so no sample exceeds them", parts.join("; "))))
}

fn necessity(f: &Families) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, levels, cfg) in [("segment", &f.segment, segment_config()), ("glue", &f.glue, glue_config())] {
        let rep = verify::verify_necessity_on(levels, &cfg).map_err(|e| e.to_string())?;
        let mut monotone = true;
        let mut tracks = true;
        for l in 0..levels.len() {
            let rows: Vec<_> = rep.cluster.iter().filter(|c| c.level == l).collect();
            monotone &= rows.len() == 3 && rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
            tracks &= rows.iter().all(|c| c.measured_constant <= c.derived_c_prime);
        }
        for l in &rep.levels {
            tracks &= l.constant("sampled_upper_constant").unwrap().value <= l.constant("derived_c_prime").unwrap().value;
        }
        ok &= monotone && tracks && rep.verdict == Verdict::Stable;
        let last: Vec<f64> = rep.cluster.iter().filter(|c| c.level == levels.len() - 1).map(|c| c.ratio).collect();
        parts.push(format!("{name}: cluster ratios at N={} {} strictly increasing={monotone}, measured <= C' everywhere={tracks}, {:?}", levels.last().unwrap().len(), fmt(&last), rep.verdict));
    }
    Ok((ok, parts.join("; ")))
}

fn maximal(f: &Families) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, levels, cfg) in [("segment", &f.segment, segment_config()), ("glue", &f.glue, glue_config())] {
        let rep = verify::verify_maximal_bounds_on(levels, &cfg).map_err(|e| e.to_string())?;
        let dom: f64 = tracked(&rep, "domination_violations").iter().sum();
        let om: f64 = tracked(&rep, "omega_violations").iter().sum();
        ok &= rep.verdict == Verdict::Stable && dom == 0.0 && om == 0.0;
        parts.push(format!(
            "{name}: M~<=M violations {dom}, Omega>1 violations {om}, C0 {} weak {} {:?}",
            fmt(&tracked(&rep, "c0")),
            fmt(&tracked(&rep, "weak")),
            rep.verdict
        ));
    }
    Ok((ok, parts.join("; ")))
}

/// `lambda(x, s t) <= c1 s^alpha lambda(x, t)` on seeded continuous `s` and canonical `t`.
fn direct_lower_type(space: &QuasiMetricSpace, lam: &DominatingFunction, alpha: f64, rng: &mut ChaCha8Rng) -> bool {
    let c1 = lam.lower_type().c1 * (1.0 + 1e-9);
    let nodes: Vec<usize> = if space.len() <= 48 { (0..space.len()).collect() } else { (0..48).map(|_| rng.gen_range(0..space.len())).collect() };
    let radii = space.canonical_radii();
    let span = (radii[radii.len() - 1] / radii[0]).ln();
    for &x in &nodes {
        for &t in radii {
            for _ in 0..8 {
                let s = if rng.gen::<bool>() { rng.gen_range(f64::EPSILON..=1.0) } else { (-rng.gen::<f64>() * span).exp() };
                if lam.eval(x, s * t) > c1 * s.powf(alpha) * lam.eval(x, t) {
                    return false;
                }
            }
        }
    }
    true
}

fn type_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let grid = build_space(&SpaceSpec::Grid1d { n: 64, length: 1.0 }).map_err(|e| e.to_string())?;
    let mut agree = 0;
    let mut rows = Vec::new();
    let mut held = [0usize; 2];
    for i in 0..20 {
        let below = i % 2 == 0;
        let shift = if below { -0.25 } else { 0.25 };
        let (kind, space, lam, a): (&str, QuasiMetricSpace, DominatingFunction, f64) = match i / 2 % 3 {
            0 => {
                let n = rng.gen_range(0.5..2.5);
                let k = rng.gen_range(0.5..4.0);
                ("power", grid.clone(), DominatingFunction::power(&grid, k, n).map_err(|e| e.to_string())?, n)
            }
            1 => {
                let g1 = rng.gen_range(0.0..1.5);
                let tc = build_glued(&segment_square(g1, g1 - 1.0).with_subdivisions(8)).map_err(|e| e.to_string())?;
                let lam = DominatingFunction::power_field(&tc.base, 2.0, tc.n_field()).map_err(|e| e.to_string())?;
                let a = lam.lower_type().a;
                ("power-field", tc.base.clone(), lam, a)
            }
            _ => {
                // piecewise: r <= c d(x, x0) and the plateau past it
                let g1 = rng.gen_range(0.0..1.5);
                let tc = build_glued(&segment_square(g1, g1 - 1.0).with_subdivisions(8)).map_err(|e| e.to_string())?;
                let gm = glued_measure(&tc);
                let lam = lambda_piecewise(&tc, &gm).map_err(|e| e.to_string())?;
                let a = lam.lower_type().a;
                ("piecewise", tc.base.clone(), lam, a)
            }
        };
        let alpha = a + shift;
        let scan = lower_type_check_all(&space, &lam, alpha).holds;
        let direct = direct_lower_type(&space, &lam, alpha, &mut rng);
        agree += usize::from(scan == direct);
        held[usize::from(scan)] += 1;
        if scan != direct {
            rows.push(format!("#{i} {kind} alpha={alpha:.3}: check={scan} direct={direct}"));
        }
    }
    Ok((
        agree == 20 && held[0] > 0 && held[1] > 0,
        format!("{agree}/20 agree ({} hold, {} fail){}", held[1], held[0], if rows.is_empty() { String::new() } else { format!("; {}", rows.join("; ")) }),
    ))
}

fn determinism() -> Check {
    let mut reports = Vec::new();
    for threads in [1, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let pair = pool.install(|| -> Result<String, String> {
            let a = verify::verify_sufficiency(&segment_config()).map_err(|e| e.to_string())?;
            let b = verify::verify_sufficiency(&glue_config()).map_err(|e| e.to_string())?;
            Ok(a.to_json().map_err(|e| e.to_string())? + &b.to_json().map_err(|e| e.to_string())?)
        })?;
        reports.push(pair);
    }
    let same = reports.windows(2).all(|w| w[0] == w[1]);
    Ok((same, format!("criterion-5 reports ({} bytes) identical at 1/4/8 threads: {same}", reports[0].len())))
}

fn main() -> ExitCode {
    let t = Instant::now();
    let segment = segment_config().family.build().expect("segment levels");
    let segment_build = t.elapsed();
    let t = Instant::now();
    let glue = glue_config().family.build().expect("glue levels");
    let fam = Families { segment, glue, glue_build: t.elapsed(), segment_build };

    let criteria: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("quadrature fidelity", Box::new(quadrature_fidelity)),
        ("Luxemburg correctness", Box::new(luxemburg_correctness)),
        ("glued upper doubling", Box::new(glued_upper_doubling)),
        ("doubling iff admissible", Box::new(doubling_iff_admissible)),
        ("sufficiency stability", Box::new(|| sufficiency(&fam))),
        ("Hedberg pointwise", Box::new(|| hedberg(&fam))),
        ("necessity contrapositive", Box::new(|| necessity(&fam))),
        ("maximal contracts", Box::new(|| maximal(&fam))),
        ("lower type equivalence", Box::new(type_equivalence)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!("criterion {:>2} {:<26} {}  {detail}", i + 1, name, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
