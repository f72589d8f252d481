//! Optimal coupling of residuals with gridpoints.
//!
//! The empirical center-outward distribution function maps each residual to
//! the gridpoint it is paired with under the bijection that minimizes total
//! squared Euclidean distance. The pairing is computed exactly with a
//! shortest-augmenting-path linear sum assignment solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BallGrid;
use crate::series::SeriesMatrix;

/// Solves the square linear sum assignment problem for a dense row-major
/// cost matrix. Returns `col_for_row`.
///
/// This is the shortest augmenting path method of the Jonker–Volgenant
/// family (as described by Crouse, 2016): one Dijkstra-like search per row
/// over reduced costs, followed by a dual update and path augmentation.
/// When several columns tie at the minimum reduced distance a free column
/// is preferred, which ends the search early; otherwise the first one
/// scanned wins, so the result is deterministic.
pub fn linear_sum_assignment(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::dims(format!("cost matrix has {} entries, expected {n}x{n}", cost.len())));
    }
    if let Some(k) = cost.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFinite { row: k / n + 1, col: k % n + 1 });
    }
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut spc = vec![f64::INFINITY; n];
    let mut path = vec![NONE; n];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; n];
    let mut sr = vec![false; n];
    let mut sc = vec![false; n];
    let mut remaining = vec![0usize; n];

    for cur_row in 0..n {
        // Dijkstra over reduced costs from cur_row until a free column.
        let mut min_val = 0.0;
        for (k, r) in remaining.iter_mut().enumerate() {
            *r = k;
        }
        let mut num_remaining = n;
        sr.fill(false);
        sc.fill(false);
        spc.fill(f64::INFINITY);
        let mut i = cur_row;
        let sink = loop {
            sr[i] = true;
            let row = &cost[i * n..(i + 1) * n];
            let base = min_val - u[i];
            let mut lowest = f64::INFINITY;
            let mut index = NONE;
            for (it, &j) in remaining[..num_remaining].iter().enumerate() {
                let r = base + row[j] - v[j];
                if r < spc[j] {
                    path[j] = i;
                    spc[j] = r;
                }
                let s = spc[j];
                if s < lowest || (s == lowest && row4col[j] == NONE) {
                    lowest = s;
                    index = it;
                }
            }
            if index == NONE || !lowest.is_finite() {
                return Err(Error::Numerical("assignment problem is infeasible".into()));
            }
            min_val = lowest;
            let j = remaining[index];
            sc[j] = true;
            num_remaining -= 1;
            remaining.swap(index, num_remaining);
            if row4col[j] == NONE {
                break j;
            }
            i = row4col[j];
        };

        u[cur_row] += min_val;
        for r in 0..n {
            if sr[r] && r != cur_row {
                u[r] += min_val - spc[col4row[r]];
            }
        }
        for c in 0..n {
            if sc[c] {
                v[c] -= min_val - spc[c];
            }
        }
        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    Ok(col4row)
}

/// Empirical center-outward distribution values, ranks and signs of a
/// residual series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// Gridpoint index paired with each time index.
    pub assignment: Vec<usize>,
    /// `F±(Z_t)`, the assigned gridpoint.
    pub f_values: SeriesMatrix,
    /// Center-outward ranks in `0..=n_R`; zero marks an origin point.
    pub ranks: Vec<usize>,
    /// Unit directions, or the zero vector at the origin.
    pub signs: SeriesMatrix,
    pub n_r: usize,
}

impl Coupling {
    fn from_assignment(assignment: Vec<usize>, grid: &BallGrid) -> Result<Self> {
        let n = assignment.len();
        let d = grid.d;
        let mut f = Vec::with_capacity(n * d);
        let mut s = Vec::with_capacity(n * d);
        let mut ranks = Vec::with_capacity(n);
        for &k in &assignment {
            let p = grid.point(k);
            f.extend_from_slice(p);
            let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if grid.is_origin(k) || r == 0.0 {
                s.extend(std::iter::repeat_n(0.0, d));
            } else {
                s.extend(p.iter().map(|x| x / r));
            }
            ranks.push(grid.ranks[k]);
        }
        Ok(Self {
            assignment,
            f_values: SeriesMatrix::from_row_major(n, d, f)?,
            ranks,
            signs: SeriesMatrix::from_row_major(n, d, s)?,
            n_r: grid.n_r(),
        })
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn d(&self) -> usize {
        self.f_values.d()
    }
}

fn check_compatible(residuals: &SeriesMatrix, grid: &BallGrid) -> Result<()> {
    if residuals.d() != grid.d {
        return Err(Error::dims(format!("residuals have dimension {}, grid has dimension {}", residuals.d(), grid.d)));
    }
    if residuals.n() != grid.n() {
        return Err(Error::dims(format!("{} residuals but {} gridpoints", residuals.n(), grid.n())));
    }
    residuals.check_finite()
}

/// Squared-distance cost matrix, row `t` = residual `t`.
pub fn cost_matrix(residuals: &SeriesMatrix, grid: &BallGrid) -> Vec<f64> {
    let n = residuals.n();
    let mut cost = Vec::with_capacity(n * n);
    for z in residuals.rows() {
        for g in grid.points.rows() {
            cost.push(z.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        }
    }
    cost
}

/// Pairs residuals with gridpoints so that `Σ‖Z_t − g_σ(t)‖²` is minimal.
pub fn solve_coupling(residuals: &SeriesMatrix, grid: &BallGrid) -> Result<Coupling> {
    check_compatible(residuals, grid)?;
    let cost = cost_matrix(residuals, grid);
    let assignment = linear_sum_assignment(&cost, residuals.n())?;
    Coupling::from_assignment(assignment, grid)
}

/// `Σ_t ‖Z_t − F±(Z_t)‖²`.
pub fn coupling_cost(c: &Coupling, residuals: &SeriesMatrix) -> Result<f64> {
    if residuals.n() != c.n() || residuals.d() != c.d() {
        return Err(Error::dims("residuals do not match the coupling"));
    }
    Ok(residuals
        .rows()
        .zip(c.f_values.rows())
        .map(|(z, f)| z.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum())
}

/// Reassigns F-values: time `t` receives the gridpoint of time `perm[t]`.
pub fn permute_coupling(c: &Coupling, perm: &[usize]) -> Result<Coupling> {
    let n = c.n();
    if perm.len() != n {
        return Err(Error::invalid(format!("permutation has length {}, expected {n}", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::invalid("permutation is not a bijection"));
        }
    }
    let d = c.d();
    let mut f = Vec::with_capacity(n * d);
    let mut s = Vec::with_capacity(n * d);
    for &p in perm {
        f.extend_from_slice(c.f_values.row(p));
        s.extend_from_slice(c.signs.row(p));
    }
    Ok(Coupling {
        assignment: perm.iter().map(|&p| c.assignment[p]).collect(),
        f_values: SeriesMatrix::from_row_major(n, d, f)?,
        ranks: perm.iter().map(|&p| c.ranks[p]).collect(),
        signs: SeriesMatrix::from_row_major(n, d, s)?,
        n_r: c.n_r,
    })
}
