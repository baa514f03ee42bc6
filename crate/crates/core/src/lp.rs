//! Dense two-phase simplex over free variables.
//!
//! Problems here are tiny (n ≤ 10, a few dozen rows), so the tableau is kept
//! dense and pivoting follows Bland's rule, which rules out cycling on the
//! degenerate vertices that polyhedral faces produce all the time.

use thiserror::Error;

/// Pivot and reduced-cost tolerance.
pub const LP_EPS: f64 = 1e-9;

const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex exceeded the pivot limit")]
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

/// `maximize cᵀx` subject to `A_le x ≤ b_le`, `A_eq x = b_eq`, `x` free.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    dim: usize,
    objective: Vec<f64>,
    le: Vec<(Vec<f64>, f64)>,
    eq: Vec<(Vec<f64>, f64)>,
}

impl LinearProgram {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            objective: vec![0.0; dim],
            le: Vec::new(),
            eq: Vec::new(),
        }
    }

    pub fn maximize(mut self, c: &[f64]) -> Self {
        assert_eq!(c.len(), self.dim);
        self.objective = c.to_vec();
        self
    }

    pub fn minimize(mut self, c: &[f64]) -> Self {
        assert_eq!(c.len(), self.dim);
        self.objective = c.iter().map(|v| -v).collect();
        self
    }

    pub fn le(&mut self, row: &[f64], rhs: f64) -> &mut Self {
        assert_eq!(row.len(), self.dim);
        self.le.push((row.to_vec(), rhs));
        self
    }

    pub fn eq(&mut self, row: &[f64], rhs: f64) -> &mut Self {
        assert_eq!(row.len(), self.dim);
        self.eq.push((row.to_vec(), rhs));
        self
    }

    /// Solves the program. The returned `value` is always that of the
    /// objective as given to [`maximize`](Self::maximize); callers that used
    /// [`minimize`](Self::minimize) must negate it.
    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).run(&self.objective)
    }

    /// Feasibility only.
    pub fn feasible_point(&self) -> Result<Vec<f64>, LpError> {
        let zero = vec![0.0; self.dim];
        Tableau::build(self).run(&zero).map(|s| s.x)
    }
}

struct Tableau {
    n: usize,
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
    artificial_start: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.dim;
        let m_le = lp.le.len();
        let m = m_le + lp.eq.len();
        // columns: u (n) | v (n) | slack (m_le) | artificial (m) | rhs
        let slack_start = 2 * n;
        let artificial_start = slack_start + m_le;
        let ncols = artificial_start + m;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);

        let all = lp
            .le
            .iter()
            .map(|r| (r, true))
            .chain(lp.eq.iter().map(|r| (r, false)));
        for (i, ((a, b), is_le)) in all.enumerate() {
            let scale = a.iter().fold(b.abs(), |acc, v| acc.max(v.abs())).max(1e-300);
            let scale = if scale > 0.0 { 1.0 / scale } else { 1.0 };
            let sign = if *b < 0.0 { -1.0 } else { 1.0 };
            let mut row = vec![0.0; ncols + 1];
            for j in 0..n {
                row[j] = sign * scale * a[j];
                row[n + j] = -sign * scale * a[j];
            }
            if is_le {
                row[slack_start + i] = sign;
            }
            row[ncols] = sign * scale * b;
            if is_le && sign > 0.0 {
                basis.push(slack_start + i);
            } else {
                row[artificial_start + i] = 1.0;
                basis.push(artificial_start + i);
            }
            rows.push(row);
        }
        Self {
            n,
            rows,
            basis,
            ncols,
            artificial_start,
        }
    }

    fn objective_row(&self, cost: &[f64]) -> Vec<f64> {
        // reduced costs r_j = c_Bᵀ B⁻¹ A_j − c_j; rhs holds the objective value.
        let mut z = vec![0.0; self.ncols + 1];
        for (j, zj) in z.iter_mut().enumerate().take(self.ncols) {
            *zj = -cost[j];
        }
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (zj, rj) in z.iter_mut().zip(row) {
                    *zj += cb * rj;
                }
            }
        }
        z
    }

    fn pivot(&mut self, z: &mut [f64], r: usize, s: usize) {
        let p = self.rows[r][s];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[s];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[s] = 0.0;
            }
        }
        let f = z[s];
        if f != 0.0 {
            for (v, pv) in z.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            z[s] = 0.0;
        }
        self.basis[r] = s;
    }

    /// Runs Bland-rule simplex on the current objective row; columns at or
    /// beyond `col_limit` never enter.
    fn optimize(&mut self, z: &mut [f64], col_limit: usize) -> Result<(), LpError> {
        let rhs = self.ncols;
        for _ in 0..MAX_PIVOTS {
            let Some(s) = (0..col_limit).find(|&j| z[j] < -LP_EPS) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[s];
                if a > LP_EPS {
                    let ratio = row[rhs] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(LpError::Unbounded);
            };
            self.pivot(z, r, s);
        }
        Err(LpError::IterationLimit)
    }

    fn run(mut self, objective: &[f64]) -> Result<LpSolution, LpError> {
        let n = self.n;
        let rhs = self.ncols;

        // phase 1: maximize −Σ artificials
        let has_artificial = self.basis.iter().any(|&b| b >= self.artificial_start);
        if has_artificial {
            let mut cost = vec![0.0; self.ncols];
            for c in cost.iter_mut().skip(self.artificial_start) {
                *c = -1.0;
            }
            let mut z = self.objective_row(&cost);
            self.optimize(&mut z, self.ncols)?;
            let scale = self
                .rows
                .iter()
                .map(|r| r[rhs].abs())
                .fold(1.0_f64, f64::max);
            if z[rhs] < -1e-9 * scale {
                return Err(LpError::Infeasible);
            }
            // drive remaining artificials out of the basis
            let mut r = 0;
            while r < self.rows.len() {
                if self.basis[r] >= self.artificial_start {
                    let col = (0..self.artificial_start).find(|&j| self.rows[r][j].abs() > LP_EPS);
                    match col {
                        Some(s) => {
                            let mut dummy = vec![0.0; self.ncols + 1];
                            self.pivot(&mut dummy, r, s);
                            r += 1;
                        }
                        None => {
                            // redundant row
                            self.rows.swap_remove(r);
                            self.basis.swap_remove(r);
                        }
                    }
                } else {
                    r += 1;
                }
            }
        }

        // phase 2
        let mut cost = vec![0.0; self.ncols];
        for j in 0..n {
            cost[j] = objective[j];
            cost[n + j] = -objective[j];
        }
        let mut z = self.objective_row(&cost);
        self.optimize(&mut z, self.artificial_start)?;

        let mut uv = vec![0.0; 2 * n];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < 2 * n {
                uv[b] = row[rhs];
            }
        }
        let x: Vec<f64> = (0..n).map(|j| uv[j] - uv[n + j]).collect();
        let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { value, x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_maximum() {
        let mut lp = LinearProgram::new(2).maximize(&[1.0, 2.0]);
        lp.le(&[1.0, 0.0], 1.0)
            .le(&[-1.0, 0.0], 0.0)
            .le(&[0.0, 1.0], 1.0)
            .le(&[0.0, -1.0], 0.0);
        let s = lp.solve().unwrap();
        assert!((s.value - 3.0).abs() < 1e-12);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_and_equalities() {
        // x ≥ 1, y ≥ 2, x + y = 5, minimize x
        let mut lp = LinearProgram::new(2).minimize(&[1.0, 0.0]);
        lp.le(&[-1.0, 0.0], -1.0).le(&[0.0, -1.0], -2.0).eq(&[1.0, 1.0], 5.0);
        let s = lp.solve().unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.x[1] - 4.0).abs() < 1e-12);
        assert!((s.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.le(&[1.0], 0.0).le(&[-1.0], -1.0);
        assert_eq!(lp.feasible_point().unwrap_err(), LpError::Infeasible);

        let mut lp = LinearProgram::new(2).maximize(&[1.0, 0.0]);
        lp.le(&[0.0, 1.0], 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(2).maximize(&[0.0, 1.0]);
        lp.eq(&[1.0, 1.0], 1.0)
            .eq(&[2.0, 2.0], 2.0)
            .le(&[0.0, 1.0], 0.75)
            .le(&[-1.0, 0.0], 0.0);
        let s = lp.solve().unwrap();
        assert!((s.value - 0.75).abs() < 1e-12);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // many constraints through the origin
        let mut lp = LinearProgram::new(2).maximize(&[1.0, 1.0]);
        for k in 0..12 {
            let th = k as f64 * 0.3;
            lp.le(&[th.cos(), th.sin()], 0.0);
        }
        lp.le(&[1.0, 1.0], 1.0);
        assert!(!matches!(lp.solve(), Err(LpError::IterationLimit)));
    }
}
