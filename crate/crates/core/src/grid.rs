//! Regular grids over the open unit ball.
//!
//! A grid is the intersection of `n_S` unit directions with the `n_R`
//! spheres of radii `1/(n_R+1), …, n_R/(n_R+1)`, plus `n_0` copies of the
//! origin. Points are stored direction-major: point `k·n_R + (j−1)` sits on
//! direction `k` at radius `j/(n_R+1)`; the origin copies come last.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::series::SeriesMatrix;

/// `n = n_R·n_S + n_0` with `0 ≤ n_0 < min(n_R, n_S)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridFactorization {
    pub n: usize,
    pub n_r: usize,
    pub n_s: usize,
    pub n_0: usize,
}

impl GridFactorization {
    pub fn new(n_r: usize, n_s: usize, n_0: usize) -> Result<Self> {
        if n_r == 0 || n_s == 0 {
            return Err(Error::invalid("n_R and n_S must be positive"));
        }
        if n_0 >= n_r.min(n_s) {
            return Err(Error::invalid(format!("n_0 = {n_0} must be smaller than min(n_R, n_S) = {}", n_r.min(n_s))));
        }
        Ok(Self { n: n_r * n_s + n_0, n_r, n_s, n_0 })
    }
}

/// Chooses `(n_R, n_S, n_0)` for sample size `n` in dimension `d`.
///
/// Starts from `n_R = round(n^{1/d})` and walks `n_R` down until the
/// remainder `n_0 = n − n_R⌊n/n_R⌋` is below `min(n_R, n_S)`. In dimension
/// one there are only two directions, so `n_S = 2`. A caller-supplied
/// triple replaces the heuristic, provided it is valid and sums to `n`.
pub fn factorize(n: usize, d: usize, user: Option<(usize, usize, usize)>) -> Result<GridFactorization> {
    if n < 4 {
        return Err(Error::invalid(format!("grid factorization needs n >= 4, got {n}")));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if let Some((n_r, n_s, n_0)) = user {
        let f = GridFactorization::new(n_r, n_s, n_0)?;
        if f.n != n {
            return Err(Error::invalid(format!("factorization {n_r}*{n_s}+{n_0} = {} does not equal n = {n}", f.n)));
        }
        return Ok(f);
    }
    if d == 1 {
        return GridFactorization::new(n / 2, 2, n % 2);
    }
    let mut n_r = ((n as f64).powf(1.0 / d as f64).round() as usize).clamp(1, n);
    loop {
        let n_s = n / n_r;
        let n_0 = n - n_r * n_s;
        if n_0 < n_r.min(n_s) {
            return GridFactorization::new(n_r, n_s, n_0);
        }
        // n_r = 1 always terminates (n_0 = 0).
        n_r -= 1;
    }
}

/// The `n` gridpoints together with their radial indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallGrid {
    pub points: SeriesMatrix,
    pub factorization: GridFactorization,
    pub d: usize,
    /// Non-origin points closed under `u ↦ −u`.
    pub symmetric: bool,
    /// Radius index `j ∈ {1..n_R}` of each point, `0` for the origin.
    pub ranks: Vec<usize>,
}

impl BallGrid {
    pub fn n(&self) -> usize {
        self.factorization.n
    }

    pub fn n_r(&self) -> usize {
        self.factorization.n_r
    }

    pub fn point(&self, k: usize) -> &[f64] {
        self.points.row(k)
    }

    pub fn is_origin(&self, k: usize) -> bool {
        self.ranks[k] == 0
    }

    /// Rebuilds grid structure from a bare point list (e.g. read from CSV).
    /// Radii must be exactly `j/(n_R+1)` up to `1e-9`, with the same number
    /// of points on every sphere.
    pub fn from_points(points: SeriesMatrix) -> Result<Self> {
        const TOL: f64 = 1e-9;
        let n = points.n();
        let d = points.d();
        let norms: Vec<f64> = points.rows().map(norm).collect();
        let n_0 = norms.iter().filter(|&&r| r <= TOL).count();
        let mut radii: Vec<f64> = norms.iter().copied().filter(|&r| r > TOL).collect();
        radii.sort_by(f64::total_cmp);
        radii.dedup_by(|a, b| (*a - *b).abs() <= TOL);
        let n_r = radii.len();
        if n_r == 0 {
            return Err(Error::invalid("grid has no non-origin points"));
        }
        let step = 1.0 / (n_r + 1) as f64;
        for (j, r) in radii.iter().enumerate() {
            if (r - (j + 1) as f64 * step).abs() > TOL {
                return Err(Error::invalid(format!("grid radius {r} is not {}/{}", j + 1, n_r + 1)));
            }
        }
        let ranks: Vec<usize> = norms.iter().map(|&r| if r <= TOL { 0 } else { (r / step).round() as usize }).collect();
        let n_s = (n - n_0) / n_r;
        for j in 1..=n_r {
            let count = ranks.iter().filter(|&&k| k == j).count();
            if count != n_s {
                return Err(Error::invalid(format!("radius {j}/{} carries {count} points, expected {n_s}", n_r + 1)));
            }
        }
        let factorization = GridFactorization::new(n_r, n_s, n_0)?;
        let symmetric = antipodally_closed(&points, &ranks, TOL);
        Ok(Self { points, factorization, d, symmetric, ranks })
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Multiset check that every non-origin point has its negative in the grid.
pub(crate) fn antipodally_closed(points: &SeriesMatrix, ranks: &[usize], tol: f64) -> bool {
    let idx: Vec<usize> = (0..points.n()).filter(|&k| ranks[k] != 0).collect();
    let mut used = vec![false; points.n()];
    'outer: for &a in &idx {
        if used[a] {
            continue;
        }
        for &b in &idx {
            if b != a && !used[b] && points.row(a).iter().zip(points.row(b)).all(|(x, y)| (x + y).abs() <= tol) {
                used[a] = true;
                used[b] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// The `n_S` unit directions, antipodally completed when `n_S` is even.
fn directions(n_s: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let half = n_s.div_ceil(2);
    let first: Vec<Vec<f64>> = match d {
        1 => vec![vec![1.0]; half],
        2 => {
            if n_s % 2 == 1 {
                // No antipodal structure to preserve: use all n_S angles.
                return (0..n_s)
                    .map(|k| {
                        let a = std::f64::consts::TAU * k as f64 / n_s as f64;
                        vec![a.cos(), a.sin()]
                    })
                    .collect();
            }
            (0..half)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / n_s as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        }
        _ => {
            let mut rng = rng::stream(seed, rng::tag::GRID, d as u64);
            (0..half)
                .map(|_| loop {
                    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let r = norm(&v);
                    if r > 1e-12 {
                        break v.into_iter().map(|x| x / r).collect();
                    }
                })
                .collect()
        }
    };
    let mut all = first.clone();
    all.extend(first.iter().map(|u| u.iter().map(|x| -x).collect::<Vec<f64>>()));
    all.truncate(n_s);
    all
}

/// Builds the grid for a factorization.
///
/// In `d = 2` the directions are the angles `2πk/n_S`; in `d ≥ 3` they are
/// `⌈n_S/2⌉` seeded uniform directions completed by their antipodes. Either
/// way the grid is exactly antipodally symmetric whenever `n_S` is even.
pub fn make_grid(fact: GridFactorization, d: usize, seed: u64) -> Result<BallGrid> {
    let f = GridFactorization::new(fact.n_r, fact.n_s, fact.n_0)?;
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let dirs = directions(f.n_s, d, seed);
    let mut data = Vec::with_capacity(f.n * d);
    let mut ranks = Vec::with_capacity(f.n);
    let step = 1.0 / (f.n_r + 1) as f64;
    for u in &dirs {
        for j in 1..=f.n_r {
            let r = j as f64 * step;
            data.extend(u.iter().map(|x| r * x));
            ranks.push(j);
        }
    }
    data.extend(std::iter::repeat_n(0.0, f.n_0 * d));
    ranks.extend(std::iter::repeat_n(0, f.n_0));
    let points = SeriesMatrix::from_row_major(f.n, d, data)?;
    Ok(BallGrid { points, factorization: f, d, symmetric: f.n_s % 2 == 0, ranks })
}

/// Grid for sign scores: `n_R = 1`, `n_S = n`, `n_0 = 0`, all points at
/// radius 1/2. Only the directions matter for sign scores.
pub fn make_sphere_grid(n: usize, d: usize, seed: u64) -> Result<BallGrid> {
    if n < 2 {
        return Err(Error::invalid("sphere grid needs n >= 2"));
    }
    make_grid(GridFactorization::new(1, n, 0)?, d, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pts(g: &BallGrid) -> Vec<Vec<f64>> {
        g.points.rows().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn documented_factorizations_accepted() {
        let f = factorize(800, 2, Some((20, 40, 0))).unwrap();
        assert_eq!((f.n_r, f.n_s, f.n_0), (20, 40, 0));
        let f = factorize(1400, 3, Some((21, 66, 14))).unwrap();
        assert_eq!((f.n_r, f.n_s, f.n_0), (21, 66, 14));
    }

    #[test]
    fn smallest_factorization() {
        let f = factorize(4, 2, None).unwrap();
        assert_eq!((f.n_r, f.n_s, f.n_0), (2, 2, 0));
    }

    #[test]
    fn factorization_errors() {
        assert!(factorize(3, 2, None).is_err());
        // n_0 too large
        assert!(factorize(802, 2, Some((20, 40, 2))).is_ok());
        assert!(factorize(820, 2, Some((20, 40, 20))).is_err());
        // does not sum to n
        assert!(factorize(801, 2, Some((20, 40, 0))).is_err());
    }

    #[test]
    fn heuristic_examples() {
        let f = factorize(300, 2, None).unwrap();
        assert_eq!((f.n_r, f.n_s, f.n_0), (17, 17, 11));
        let f = factorize(400, 2, None).unwrap();
        assert_eq!((f.n_r, f.n_s, f.n_0), (20, 20, 0));
        let f = factorize(1000, 3, None).unwrap();
        assert_eq!((f.n_r, f.n_s, f.n_0), (10, 100, 0));
        let f = factorize(9, 1, None).unwrap();
        assert_eq!((f.n_r, f.n_s, f.n_0), (4, 2, 1));
    }

    #[test]
    fn two_by_two_grid() {
        let g = make_grid(GridFactorization::new(2, 2, 0).unwrap(), 2, 0).unwrap();
        let p = pts(&g);
        let expect = [[1.0 / 3.0, 0.0], [2.0 / 3.0, 0.0], [-1.0 / 3.0, 0.0], [-2.0 / 3.0, 0.0]];
        for (a, b) in p.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-15);
            assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-15);
        }
        assert!(g.symmetric);
        assert_eq!(g.ranks, vec![1, 2, 1, 2]);
    }

    #[test]
    fn one_by_two_grid() {
        let g = make_grid(GridFactorization::new(1, 2, 0).unwrap(), 2, 0).unwrap();
        assert_eq!(pts(&g), vec![vec![0.5, 0.0], vec![-0.5, -0.0]]);
    }

    #[test]
    fn three_dimensional_grid_invariants() {
        let g = make_grid(GridFactorization::new(2, 4, 0).unwrap(), 3, 11).unwrap();
        assert_eq!(g.n(), 8);
        assert!(g.symmetric);
        assert!(antipodally_closed(&g.points, &g.ranks, 0.0));
        let norms: Vec<f64> = g.points.rows().map(norm).collect();
        for (k, r) in norms.iter().enumerate() {
            let target = g.ranks[k] as f64 / 3.0;
            assert_abs_diff_eq!(*r, target, epsilon = 1e-12);
        }
        assert_eq!(g.ranks.iter().filter(|&&j| j == 1).count(), 4);
    }

    #[test]
    fn sphere_grids() {
        let g = make_sphere_grid(800, 2, 0).unwrap();
        assert_eq!(g.n(), 800);
        assert!(g.points.rows().all(|r| (norm(r) - 0.5).abs() < 1e-12));
        let g = make_sphere_grid(2, 2, 0).unwrap();
        assert_eq!(pts(&g), vec![vec![0.5, 0.0], vec![-0.5, -0.0]]);
        let g = make_sphere_grid(4, 3, 5).unwrap();
        assert!(g.symmetric && antipodally_closed(&g.points, &g.ranks, 0.0));
        assert!(g.points.rows().all(|r| (norm(r) - 0.5).abs() < 1e-12));
    }

    #[test]
    fn origin_copies_appended() {
        let g = make_grid(GridFactorization::new(3, 4, 2).unwrap(), 2, 0).unwrap();
        assert_eq!(g.n(), 14);
        assert!(g.is_origin(12) && g.is_origin(13));
        assert_eq!(g.point(13), &[0.0, 0.0]);
    }

    #[test]
    fn odd_directions_not_symmetric() {
        let g = make_grid(GridFactorization::new(2, 3, 0).unwrap(), 2, 0).unwrap();
        assert!(!g.symmetric);
        assert!(!antipodally_closed(&g.points, &g.ranks, 1e-9));
    }

    #[test]
    fn large_grid_moments_match_spherical_uniform() {
        // U_2 has mean 0 and covariance E[r²]/2 · I = (1/3)/2 · I.
        let f = factorize(10_000, 2, None).unwrap();
        let g = make_grid(f, 2, 0).unwrap();
        let m = g.points.mean();
        assert!(m.iter().all(|v| v.abs() < 1e-12));
        let c = g.points.second_moment();
        assert_abs_diff_eq!(c[(0, 0)], 1.0 / 6.0, epsilon = 1e-2);
        assert_abs_diff_eq!(c[(1, 1)], 1.0 / 6.0, epsilon = 1e-2);
        assert_abs_diff_eq!(c[(0, 1)], 0.0, epsilon = 1e-2);
    }

    #[test]
    fn from_points_recovers_structure() {
        let g = make_grid(GridFactorization::new(3, 6, 2).unwrap(), 2, 0).unwrap();
        let h = BallGrid::from_points(g.points.clone()).unwrap();
        assert_eq!(h.factorization, g.factorization);
        assert_eq!(h.ranks, g.ranks);
        assert!(h.symmetric);
    }

    proptest! {
        #[test]
        fn grids_are_deterministic_and_well_formed(
            n_r in 1usize..6, n_s in 1usize..9, d in 1usize..5, seed in any::<u64>()
        ) {
            let n_0 = (n_r.min(n_s)).saturating_sub(1);
            let f = GridFactorization::new(n_r, n_s, n_0).unwrap();
            let a = make_grid(f, d, seed).unwrap();
            let b = make_grid(f, d, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.points.n(), n_r * n_s + n_0);
            for j in 1..=n_r {
                prop_assert_eq!(a.ranks.iter().filter(|&&k| k == j).count(), n_s);
            }
            if n_s % 2 == 0 {
                prop_assert!(a.symmetric);
                prop_assert!(antipodally_closed(&a.points, &a.ranks, 0.0));
            }
        }
    }
}
