//! Finite discretizations of bounded quasi-metric spaces.
//!
//! A [`QuasiMetricSpace`] is a set of quadrature nodes together with a
//! distance oracle. Continuous spaces (segments, squares, Cantor dust) are
//! represented at a chosen refinement level; refining the level stands in
//! for the continuum limit.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this node count the quasi-triangle constant is estimated from a
/// deterministic sample of triples instead of the exhaustive O(N^3) scan.
pub const K1_EXHAUSTIVE_LIMIT: usize = 2000;
/// Number of triples drawn when the quasi-triangle constant is sampled.
pub const K1_SAMPLE_TRIPLES: usize = 4_000_000;
pub const K1_SAMPLE_SEED: u64 = 0x6b31_5eed;
/// Relative gap below which two pairwise distances count as the same radius.
pub const RADIUS_TIE_TOLERANCE: f64 = 1e-9;
/// Above this node count the geometric doubling scan only uses dyadic radii.
pub const DOUBLING_SCAN_FULL_LIMIT: usize = 512;

/// JSON description of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpaceSpec {
    /// `n` equally spaced nodes on `[0, length]`, endpoints included.
    Grid1d {
        n: usize,
        #[serde(default = "unit_length")]
        length: f64,
    },
    /// `n x n` equally spaced nodes on `[0, length]^2`, row-major.
    Grid2d {
        n: usize,
        #[serde(default = "unit_length")]
        length: f64,
    },
    /// Left endpoints of the `2^generation` intervals of the middle-thirds construction.
    Cantor { generation: u32 },
    /// Row-major `n x n` distance matrix.
    Explicit {
        n: usize,
        matrix: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
    /// Power `d^theta` of another space's distance.
    Snowflake { theta: f64, base: Box<SpaceSpec> },
}

fn unit_length() -> f64 {
    1.0
}

impl SpaceSpec {
    /// Same family at a different resolution, `n` being the target node count.
    pub fn at_resolution(&self, n: usize) -> SpaceSpec {
        match self {
            SpaceSpec::Grid1d { length, .. } => SpaceSpec::Grid1d { n, length: *length },
            SpaceSpec::Grid2d { length, .. } => SpaceSpec::Grid2d {
                n: ((n as f64).sqrt().round() as usize).max(1),
                length: *length,
            },
            SpaceSpec::Cantor { .. } => SpaceSpec::Cantor {
                generation: (n.max(1) as f64).log2().round() as u32,
            },
            SpaceSpec::Explicit { .. } => self.clone(),
            SpaceSpec::Snowflake { theta, base } => SpaceSpec::Snowflake {
                theta: *theta,
                base: Box::new(base.at_resolution(n)),
            },
        }
    }

    /// Dimension of the natural measure carried by this family, when known.
    pub fn nominal_dimension(&self) -> Option<f64> {
        match self {
            SpaceSpec::Grid1d { .. } => Some(1.0),
            SpaceSpec::Grid2d { .. } => Some(2.0),
            SpaceSpec::Cantor { .. } => Some(2f64.ln() / 3f64.ln()),
            SpaceSpec::Explicit { .. } => None,
            SpaceSpec::Snowflake { theta, base } => base.nominal_dimension().map(|q| q / theta),
        }
    }

    /// Quadrature weights of the natural measure: trapezoid weights on grids
    /// (cell volume `h^d`, halved on each boundary face), equal cell masses on
    /// Cantor dust, unit weights on explicit spaces.
    pub fn natural_weights(&self) -> Vec<f64> {
        let trapezoid = |n: usize, length: f64| -> Vec<f64> {
            if n == 1 {
                return vec![length];
            }
            let h = length / (n - 1) as f64;
            (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect()
        };
        match self {
            SpaceSpec::Grid1d { n, length } => trapezoid(*n, *length),
            SpaceSpec::Grid2d { n, length } => {
                let w = trapezoid(*n, *length);
                w.iter().flat_map(|a| w.iter().map(move |b| a * b)).collect()
            }
            SpaceSpec::Cantor { generation } => vec![0.5f64.powi(*generation as i32); 1 << generation],
            SpaceSpec::Explicit { n, .. } => vec![1.0; *n],
            SpaceSpec::Snowflake { base, .. } => base.natural_weights(),
        }
    }
}

#[derive(Debug, Clone)]
enum Metric {
    Points { dim: usize, coords: Vec<f64>, theta: f64 },
    Matrix { d: Vec<f64> },
}

/// How the stored quasi-triangle constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum K1Source {
    /// Euclidean distance raised to a power at most one: a metric, so `k1 = 1`.
    Metric,
    Exhaustive,
    /// Maximum over a deterministic sample of triples; a lower estimate.
    Estimated,
}

#[derive(Debug, Clone)]
pub struct QuasiMetricSpace {
    n: usize,
    metric: Metric,
    k1: f64,
    k1_source: K1Source,
    r0: f64,
    min_dist: f64,
    spec: Option<SpaceSpec>,
    radii: OnceLock<Vec<f64>>,
}

/// Open ball `{y : d(center, y) < radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    /// Ascending node ids.
    pub members: Vec<usize>,
}

impl Ball {
    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }
}

pub fn build_space(spec: &SpaceSpec) -> Result<QuasiMetricSpace> {
    let metric = metric_from_spec(spec)?;
    let mut space = QuasiMetricSpace::from_metric(metric)?;
    space.spec = Some(spec.clone());
    Ok(space)
}

fn metric_from_spec(spec: &SpaceSpec) -> Result<Metric> {
    match spec {
        SpaceSpec::Grid1d { n, length } => {
            if *n == 0 || !(length.is_finite() && *length > 0.0) {
                return Err(Error::InvalidSpec(format!("grid1d needs n >= 1 and length > 0, got n={n}, length={length}")));
            }
            let h = if *n > 1 { length / (*n - 1) as f64 } else { 0.0 };
            let coords = (0..*n).map(|i| i as f64 * h).collect();
            Ok(Metric::Points { dim: 1, coords, theta: 1.0 })
        }
        SpaceSpec::Grid2d { n, length } => {
            if *n == 0 || !(length.is_finite() && *length > 0.0) {
                return Err(Error::InvalidSpec(format!("grid2d needs n >= 1 and length > 0, got n={n}, length={length}")));
            }
            let h = if *n > 1 { length / (*n - 1) as f64 } else { 0.0 };
            let mut coords = Vec::with_capacity(2 * n * n);
            for i in 0..*n {
                for j in 0..*n {
                    coords.push(i as f64 * h);
                    coords.push(j as f64 * h);
                }
            }
            Ok(Metric::Points { dim: 2, coords, theta: 1.0 })
        }
        SpaceSpec::Cantor { generation } => {
            if *generation > 20 {
                return Err(Error::InvalidSpec(format!("cantor generation {generation} too large")));
            }
            Ok(Metric::Points { dim: 1, coords: cantor_left_endpoints(*generation), theta: 1.0 })
        }
        SpaceSpec::Explicit { n, matrix, labels } => {
            if *n == 0 || matrix.len() != n * n {
                return Err(Error::InvalidSpec(format!("explicit matrix must hold n*n = {} entries, got {}", n * n, matrix.len())));
            }
            if let Some(labels) = labels {
                if labels.len() != *n {
                    return Err(Error::InvalidSpec(format!("{} labels for {n} nodes", labels.len())));
                }
            }
            for i in 0..*n {
                for j in 0..*n {
                    let a = matrix[i * n + j];
                    if !a.is_finite() || a < 0.0 {
                        return Err(Error::InvalidSpec(format!("entry ({i}, {j}) = {a} is not a finite nonnegative distance")));
                    }
                    if i == j && a != 0.0 {
                        return Err(Error::InvalidSpec(format!("diagonal entry ({i}, {i}) = {a} is not zero")));
                    }
                    let b = matrix[j * n + i];
                    if (a - b).abs() > 1e-12 * a.max(b) {
                        return Err(Error::Asymmetric(i, j));
                    }
                }
            }
            Ok(Metric::Matrix { d: matrix.clone() })
        }
        SpaceSpec::Snowflake { theta, base } => {
            if !(theta.is_finite() && *theta > 0.0) {
                return Err(Error::InvalidSpec(format!("snowflake exponent must be positive, got {theta}")));
            }
            Ok(match metric_from_spec(base)? {
                Metric::Points { dim, coords, theta: t } => Metric::Points { dim, coords, theta: t * theta },
                Metric::Matrix { d } => Metric::Matrix { d: d.into_iter().map(|v| v.powf(*theta)).collect() },
            })
        }
    }
}

fn cantor_left_endpoints(generation: u32) -> Vec<f64> {
    let mut points = vec![0.0];
    let mut scale = 1.0;
    for _ in 0..generation {
        scale /= 3.0;
        let shifted: Vec<f64> = points.iter().map(|p| p + 2.0 * scale).collect();
        points.extend(shifted);
    }
    points.sort_by(f64::total_cmp);
    points
}

impl QuasiMetricSpace {
    /// Space on explicit points of `R^dim` (row-major coordinates) with distance `|x - y|^theta`.
    pub fn from_points(dim: usize, coords: Vec<f64>, theta: f64) -> Result<Self> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::InvalidSpec(format!("{} coordinates do not split into points of dimension {dim}", coords.len())));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(i / dim));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidSpec(format!("distance exponent must be positive, got {theta}")));
        }
        Self::from_metric(Metric::Points { dim, coords, theta })
    }

    fn from_metric(metric: Metric) -> Result<Self> {
        let n = match &metric {
            Metric::Points { dim, coords, .. } => coords.len() / dim,
            Metric::Matrix { d } => (d.len() as f64).sqrt().round() as usize,
        };
        let mut space = QuasiMetricSpace {
            n,
            metric,
            k1: 1.0,
            k1_source: K1Source::Metric,
            r0: 0.0,
            min_dist: f64::INFINITY,
            spec: None,
            radii: OnceLock::new(),
        };

        let (r0, min_dist, dup) = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut max = 0.0f64;
                let mut min = f64::INFINITY;
                let mut dup = None;
                for j in (i + 1)..n {
                    let d = space.dist(i, j);
                    if d == 0.0 && dup.is_none() {
                        dup = Some((i, j));
                    }
                    max = max.max(d);
                    if d > 0.0 {
                        min = min.min(d);
                    }
                }
                (max, min, dup)
            })
            .reduce(
                || (0.0, f64::INFINITY, None),
                |a, b| (a.0.max(b.0), a.1.min(b.1), a.2.or(b.2)),
            );
        if let Some((i, j)) = dup {
            return Err(Error::DuplicatePoints(i, j));
        }
        space.r0 = r0;
        space.min_dist = min_dist;

        let (k1, source) = match &space.metric {
            Metric::Points { theta, .. } if *theta <= 1.0 => (1.0, K1Source::Metric),
            _ => quasi_triangle_constant_scan(&space),
        };
        space.k1 = k1;
        space.k1_source = source;
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spec(&self) -> Option<&SpaceSpec> {
        self.spec.as_ref()
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k1_source(&self) -> K1Source {
        self.k1_source
    }

    /// Diameter: the largest pairwise distance.
    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// Smallest positive pairwise distance (`inf` for a single node).
    pub fn min_distance(&self) -> f64 {
        self.min_dist
    }

    /// Ambient coordinates of a node, for spaces built from points.
    pub fn coordinates(&self, node: usize) -> Option<&[f64]> {
        match &self.metric {
            Metric::Points { dim, coords, .. } => coords.get(node * dim..(node + 1) * dim),
            Metric::Matrix { .. } => None,
        }
    }

    pub fn ambient_dimension(&self) -> Option<usize> {
        match &self.metric {
            Metric::Points { dim, .. } => Some(*dim),
            Metric::Matrix { .. } => None,
        }
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.metric {
            Metric::Points { dim, coords, theta } => {
                if i == j {
                    return 0.0;
                }
                let a = &coords[i * dim..(i + 1) * dim];
                let b = &coords[j * dim..(j + 1) * dim];
                let e = if *dim == 1 {
                    (a[0] - b[0]).abs()
                } else {
                    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
                };
                if *theta == 1.0 {
                    e
                } else {
                    e.powf(*theta)
                }
            }
            Metric::Matrix { d } => d[i * self.n + j],
        }
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node < self.n {
            Ok(())
        } else {
            Err(Error::UnknownNode { node, len: self.n })
        }
    }

    /// Distances from `x` to every node, in node order.
    pub fn distances_from(&self, x: usize) -> Vec<f64> {
        (0..self.n).map(|y| self.dist(x, y)).collect()
    }

    /// Sorted, tie-merged set of pairwise distances together with the dyadic
    /// ladder; the sampling set for every supremum over radii.
    pub fn canonical_radii(&self) -> &[f64] {
        self.radii.get_or_init(|| compute_canonical_radii(self))
    }

    /// `r0 * 2^-j` for `j = 0..=J`, with `J` the first index below the smallest positive distance.
    pub fn dyadic_radii(&self) -> Vec<f64> {
        if self.n < 2 {
            return Vec::new();
        }
        let mut out = vec![self.r0];
        let mut r = self.r0;
        while r >= self.min_dist {
            r *= 0.5;
            out.push(r);
        }
        out
    }
}

fn compute_canonical_radii(space: &QuasiMetricSpace) -> Vec<f64> {
    let n = space.n;
    let mut all: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| ((i + 1)..n).map(move |j| space.dist(i, j)))
        .collect();
    all.extend(space.dyadic_radii());
    all.par_sort_unstable_by(f64::total_cmp);
    dedup_with_tolerance(all)
}

/// Merge runs of values within a relative tolerance, keeping the smallest of
/// each run, so that an open ball at the kept radius excludes the whole run.
pub(crate) fn dedup_with_tolerance(sorted: Vec<f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in sorted {
        if v <= 0.0 {
            continue;
        }
        match out.last() {
            Some(&last) if v <= last * (1.0 + RADIUS_TIE_TOLERANCE) => {}
            _ => out.push(v),
        }
    }
    out
}

pub fn canonical_radii(space: &QuasiMetricSpace) -> &[f64] {
    space.canonical_radii()
}

/// Largest `d(x,y) / (d(x,z) + d(z,y))` over triples, and at least 1.
pub fn quasi_triangle_constant(space: &QuasiMetricSpace) -> f64 {
    space.k1
}

fn quasi_triangle_constant_scan(space: &QuasiMetricSpace) -> (f64, K1Source) {
    let n = space.n;
    if n < 3 {
        return (1.0, K1Source::Exhaustive);
    }
    if n <= K1_EXHAUSTIVE_LIMIT {
        let dense: Vec<f64> = (0..n * n).map(|k| space.dist(k / n, k % n)).collect();
        let k1 = (0..n)
            .into_par_iter()
            .map(|x| {
                let row_x = &dense[x * n..(x + 1) * n];
                let mut worst = 1.0f64;
                for y in (x + 1)..n {
                    let row_y = &dense[y * n..(y + 1) * n];
                    let via = row_x
                        .iter()
                        .zip(row_y)
                        .enumerate()
                        .filter(|(z, _)| *z != x && *z != y)
                        .map(|(_, (a, b))| a + b)
                        .fold(f64::INFINITY, f64::min);
                    if via.is_finite() {
                        worst = worst.max(row_x[y] / via);
                    }
                }
                worst
            })
            .reduce(|| 1.0, f64::max);
        (k1, K1Source::Exhaustive)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(K1_SAMPLE_SEED);
        let mut worst = 1.0f64;
        for _ in 0..K1_SAMPLE_TRIPLES {
            let x = rng.gen_range(0..n);
            let y = rng.gen_range(0..n);
            let z = rng.gen_range(0..n);
            if x == y || y == z || x == z {
                continue;
            }
            worst = worst.max(space.dist(x, y) / (space.dist(x, z) + space.dist(z, y)));
        }
        (worst, K1Source::Estimated)
    }
}

pub fn ball(space: &QuasiMetricSpace, x: usize, r: f64) -> Result<Ball> {
    space.check_node(x)?;
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidRadius(r));
    }
    let members = (0..space.len()).filter(|&y| space.dist(x, y) < r).collect();
    Ok(Ball { center: x, radius: r, members })
}

/// Upper bound on the geometric doubling number from a greedy cover.
///
/// For each center and radius the ball is covered by half-radius balls
/// centered at its members, always opening a new ball at the uncovered member
/// of smallest id. Within a range of radii where the ball does not change the
/// cover count can only drop as `r` grows, so only the smallest canonical
/// radius of each such range is examined.
pub fn geometric_doubling_number(space: &QuasiMetricSpace) -> usize {
    let n = space.len();
    if n <= 1 {
        return 1;
    }
    let canonical = space.canonical_radii();
    let dyadic = space.dyadic_radii();
    (0..n)
        .into_par_iter()
        .map(|x| {
            let dists = space.distances_from(x);
            let radii: Vec<f64> = if n <= DOUBLING_SCAN_FULL_LIMIT {
                let mut jumps = dists.clone();
                jumps.sort_by(f64::total_cmp);
                let mut r: Vec<f64> = Vec::with_capacity(n + 1);
                r.push(canonical[0]);
                for d in jumps {
                    let k = canonical.partition_point(|&c| c <= d);
                    if k < canonical.len() {
                        r.push(canonical[k]);
                    }
                }
                r.sort_by(f64::total_cmp);
                r.dedup();
                r
            } else {
                dyadic.clone()
            };
            radii
                .iter()
                .map(|&r| {
                    let members: Vec<usize> = (0..n).filter(|&y| dists[y] < r).collect();
                    greedy_cover_count(space, &members, r * 0.5)
                })
                .max()
                .unwrap_or(1)
        })
        .reduce(|| 1, usize::max)
}

fn greedy_cover_count(space: &QuasiMetricSpace, members: &[usize], half: f64) -> usize {
    let mut covered = vec![false; members.len()];
    let mut count = 0;
    for i in 0..members.len() {
        if covered[i] {
            continue;
        }
        count += 1;
        let c = members[i];
        for (j, &m) in members.iter().enumerate().skip(i) {
            if !covered[j] && space.dist(c, m) < half {
                covered[j] = true;
            }
        }
    }
    count
}

/// Serialized form written by `space build`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceFile {
    pub spec: SpaceSpec,
    pub n: usize,
    pub k1: f64,
    pub k1_source: K1Source,
    pub r0: f64,
}

impl SpaceFile {
    pub fn describe(space: &QuasiMetricSpace) -> Option<SpaceFile> {
        space.spec().map(|spec| SpaceFile {
            spec: spec.clone(),
            n: space.len(),
            k1: space.k1(),
            k1_source: space.k1_source(),
            r0: space.r0(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> QuasiMetricSpace {
        QuasiMetricSpace::from_points(1, points.to_vec(), 1.0).unwrap()
    }

    fn k1_brute(space: &QuasiMetricSpace) -> f64 {
        let n = space.len();
        let mut worst = 1.0f64;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    if x != y && z != x && z != y {
                        worst = worst.max(space.dist(x, y) / (space.dist(x, z) + space.dist(z, y)));
                    }
                }
            }
        }
        worst
    }

    #[test]
    fn two_node_grid() {
        let s = build_space(&SpaceSpec::Grid1d { n: 2, length: 1.0 }).unwrap();
        assert_eq!(s.r0(), 1.0);
        assert_eq!(s.k1(), 1.0);
        assert_eq!(quasi_triangle_constant(&s), 1.0);
    }

    #[test]
    fn cantor_generation_three() {
        let s = build_space(&SpaceSpec::Cantor { generation: 3 }).unwrap();
        assert_eq!(s.len(), 8);
        let mut brute = 0.0f64;
        for i in 0..8 {
            for j in 0..8 {
                brute = brute.max(s.dist(i, j));
            }
        }
        assert!((s.r0() - brute).abs() < 1e-15);
        assert!((s.r0() - 26.0 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn snowflake_below_one_stays_metric() {
        let base = SpaceSpec::Explicit { n: 3, matrix: vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0], labels: None };
        let s = build_space(&SpaceSpec::Snowflake { theta: 0.5, base: Box::new(base) }).unwrap();
        assert!((s.dist(0, 2) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.k1(), 1.0);
        assert_eq!(k1_brute(&s), 1.0);
    }

    #[test]
    fn power_above_one_breaks_triangle() {
        let base = SpaceSpec::Explicit { n: 3, matrix: vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0], labels: None };
        let s = build_space(&SpaceSpec::Snowflake { theta: 2.0, base: Box::new(base) }).unwrap();
        // d(0,2)^2 / (d(0,1)^2 + d(1,2)^2) = 4 / 2
        assert_eq!(s.k1(), 2.0);
        assert_eq!(s.k1_source(), K1Source::Exhaustive);
    }

    #[test]
    fn snowflake_of_grid_matches_triple_enumeration() {
        let spec = SpaceSpec::Snowflake { theta: 1.5, base: Box::new(SpaceSpec::Grid1d { n: 64, length: 1.0 }) };
        let s = build_space(&spec).unwrap();
        let brute = k1_brute(&s);
        assert!((s.k1() - brute).abs() <= 1e-12 * brute);
        assert!(s.k1() > 1.0 && s.k1() <= 2f64.sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn rejects_duplicates_and_asymmetry() {
        let dup = SpaceSpec::Explicit { n: 2, matrix: vec![0.0, 0.0, 0.0, 0.0], labels: None };
        assert!(matches!(build_space(&dup), Err(Error::DuplicatePoints(0, 1))));
        let asym = SpaceSpec::Explicit { n: 2, matrix: vec![0.0, 1.0, 2.0, 0.0], labels: None };
        assert!(matches!(build_space(&asym), Err(Error::Asymmetric(0, 1))));
        assert!(matches!(QuasiMetricSpace::from_points(1, vec![0.0, 0.5, 0.5], 1.0), Err(Error::DuplicatePoints(1, 2))));
    }

    #[test]
    fn ball_examples() {
        let s = build_space(&SpaceSpec::Grid1d { n: 11, length: 1.0 }).unwrap();
        let b = ball(&s, 5, 0.25).unwrap();
        assert_eq!(b.members, vec![3, 4, 5, 6, 7]);
        let all = ball(&s, 0, s.r0() * 1.01).unwrap();
        assert_eq!(all.members.len(), 11);
        let single = ball(&s, 4, 0.05).unwrap();
        assert_eq!(single.members, vec![4]);
        assert!(matches!(ball(&s, 11, 0.1), Err(Error::UnknownNode { .. })));
        assert!(matches!(ball(&s, 1, 0.0), Err(Error::InvalidRadius(_))));
    }

    #[test]
    fn ties_are_excluded() {
        let s = line(&[0.0, 1.0, 2.0]);
        assert_eq!(ball(&s, 1, 1.0).unwrap().members, vec![1]);
    }

    #[test]
    fn canonical_radii_examples() {
        let s = line(&[0.0, 1.0]);
        let r = s.canonical_radii();
        assert!(r.contains(&1.0));
        assert_eq!(*r.last().unwrap(), s.r0());
        assert!(r[0] < 1.0);

        let g = build_space(&SpaceSpec::Grid1d { n: 3, length: 1.0 }).unwrap();
        let r = g.canonical_radii();
        assert!(r.contains(&0.5) && r.contains(&1.0));
        assert_eq!(*r.last().unwrap(), 1.0);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
        // smallest dyadic sits below the smallest positive distance
        assert!(r[0] < g.min_distance());
    }

    #[test]
    fn doubling_number_examples() {
        let single = build_space(&SpaceSpec::Grid1d { n: 1, length: 1.0 }).unwrap();
        assert_eq!(geometric_doubling_number(&single), 1);
        let g1 = build_space(&SpaceSpec::Grid1d { n: 40, length: 1.0 }).unwrap();
        assert!(geometric_doubling_number(&g1) <= 5);
        let g2 = build_space(&SpaceSpec::Grid2d { n: 9, length: 1.0 }).unwrap();
        assert!(geometric_doubling_number(&g2) <= 25);
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{"kind":"snowflake","theta":0.5,"base":{"kind":"grid1d","n":8}}"#;
        let spec: SpaceSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec, SpaceSpec::Snowflake { theta: 0.5, base: Box::new(SpaceSpec::Grid1d { n: 8, length: 1.0 }) });
    }
}
