use proptest::prelude::*;

use rieszpot::lebesgue::{luxemburg_norm, ExponentFunction};
use rieszpot::measure::DiscreteMeasure;
use rieszpot::operators::{maximal_modified, maximal_standard, potential_in, GridFunction, KernelSpec, Quadrature, Setting};
use rieszpot::space::{build_space, QuasiMetricSpace, SpaceSpec};

fn segment(n: usize) -> QuasiMetricSpace {
    build_space(&SpaceSpec::Grid1d { n, length: 1.0 }).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0..4.0f64, n)
}

fn kernel() -> KernelSpec {
    "dim-power:alpha=0.5,q=1".parse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn modified_maximal_is_dominated(f in values(24), w in prop::collection::vec(0.1..3.0f64, 24)) {
        let s = segment(24);
        let mu = DiscreteMeasure::new(w).unwrap();
        let f = GridFunction::new(f).unwrap();
        let m = maximal_standard(&s, &mu, &f).unwrap();
        let mm = maximal_modified(&s, &mu, &f).unwrap();
        let sup = f.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in mm.values().iter().zip(m.values()) {
            prop_assert!(*a >= 0.0);
            prop_assert!(*a <= b * (1.0 + 1e-12));
            prop_assert!(*b <= sup * (1.0 + 1e-12));
        }
    }

    #[test]
    fn potential_is_linear(f in values(20), g in values(20), a in -3.0..3.0f64, self_cell in any::<bool>()) {
        let s = segment(20);
        let mu = DiscreteMeasure::natural(&s);
        let setting = Setting::new(&s, &mu);
        let q = if self_cell { Quadrature::SelfCell } else { Quadrature::Plain };
        let apply = |v: Vec<f64>| potential_in(&setting, &kernel(), &GridFunction::new(v).unwrap(), q).unwrap();
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + y).collect();
        let lhs = apply(combo);
        let (pf, pg) = (apply(f), apply(g));
        for i in 0..20 {
            let rhs = a * pf.values()[i] + pg.values()[i];
            prop_assert!((lhs.values()[i] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn potential_preserves_positivity(f in prop::collection::vec(0.0..4.0f64, 20)) {
        let s = segment(20);
        let mu = DiscreteMeasure::natural(&s);
        let out = potential_in(&Setting::new(&s, &mu), &kernel(), &GridFunction::new(f).unwrap(), Quadrature::Plain).unwrap();
        prop_assert!(out.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn luxemburg_norm_is_homogeneous_and_monotone(
        f in values(16),
        p in prop::collection::vec(1.1..6.0f64, 16),
        t in 0.1..10.0f64,
    ) {
        let mu = DiscreteMeasure::new(vec![0.5; 16]).unwrap();
        let pexp = ExponentFunction::new(p).unwrap();
        let norm = |v: Vec<f64>| luxemburg_norm(&mu, &pexp, &GridFunction::new(v).unwrap()).unwrap();
        let base = norm(f.clone());
        let scaled = norm(f.iter().map(|v| t * v).collect());
        prop_assert!((scaled - t * base).abs() <= 1e-8 * (1.0 + t * base));
        let bigger = norm(f.iter().map(|v| v.abs() + 0.1).collect());
        prop_assert!(bigger >= base * (1.0 - 1e-9));
    }
}
