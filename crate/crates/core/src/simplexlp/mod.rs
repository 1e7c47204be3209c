//! A bounded-variable two-phase primal simplex with dual extraction and
//! Farkas certificates.
//!
//! Problems are stated as `maximize c·x` over rows `a·x {≤,=,≥} b` and
//! variable bounds `lo ≤ x ≤ hi`. Lower bounds must be finite; upper bounds
//! may be infinite.

mod presolve;
mod simplex;

use thiserror::Error;

pub use simplex::SimplexStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Sorted by column, no duplicates.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    /// Adds a row; coefficients are sorted and duplicate columns summed.
    pub fn add_row(
        &mut self,
        coeffs: impl IntoIterator<Item = (usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let mut c: Vec<(usize, f64)> = coeffs.into_iter().collect();
        c.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(c.len());
        for (j, a) in c {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Row {
            coeffs: merged,
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::InvalidProblem(
                "bound vectors do not match the objective".into(),
            ));
        }
        for j in 0..n {
            if !self.lower[j].is_finite() || self.upper[j].is_nan() || self.lower[j] > self.upper[j]
            {
                return Err(LpError::InvalidProblem(format!(
                    "variable {j} has bounds [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
            if !self.objective[j].is_finite() {
                return Err(LpError::InvalidProblem(format!(
                    "variable {j} has a non-finite cost"
                )));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::InvalidProblem(format!(
                    "row {i} has a non-finite right-hand side"
                )));
            }
            for w in row.coeffs.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(LpError::InvalidProblem(format!(
                        "row {i} coefficients are not sorted"
                    )));
                }
            }
            if row.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(LpError::InvalidProblem(format!(
                    "row {i} has an invalid coefficient"
                )));
            }
        }
        Ok(())
    }

    /// Row activities a·x.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Largest violation of a row or bound by `x`.
    pub fn primal_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (row, act) in self.rows.iter().zip(self.activities(x)) {
            let v = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Ge => row.rhs - act,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    /// c - Aᵀy.
    pub fn reduced_costs(&self, duals: &[f64]) -> Vec<f64> {
        let mut d = self.objective.clone();
        for (row, &y) in self.rows.iter().zip(duals) {
            if y != 0.0 {
                for &(j, a) in &row.coeffs {
                    d[j] -= a * y;
                }
            }
        }
        d
    }
}

/// Tolerances shared by every solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpTolerances {
    /// Bound and row feasibility.
    pub primal: f64,
    /// Reduced-cost optimality.
    pub dual: f64,
    /// Smallest admissible pivot element in the ratio test.
    pub pivot: f64,
    /// Below this the basis is treated as singular.
    pub singular: f64,
    /// Phase-one optimum below `-infeasibility` means the problem is empty.
    pub infeasibility: f64,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_switch: usize,
}

impl Default for LpTolerances {
    fn default() -> Self {
        LpTolerances {
            primal: 1e-9,
            dual: 1e-9,
            pivot: 1e-9,
            singular: 1e-11,
            infeasibility: 1e-8,
            refactor_every: 50,
            degenerate_switch: 25,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub objective: f64,
    pub x: Vec<f64>,
    /// One per row. Signs: ≤ rows nonnegative, ≥ rows nonpositive.
    pub duals: Vec<f64>,
    /// c - Aᵀy; positive entries sit at upper bounds, negative at lower.
    pub reduced_costs: Vec<f64>,
    pub stats: SimplexStats,
}

impl OptimalSolution {
    /// Multipliers of the upper bounds, max(d, 0).
    pub fn upper_bound_duals(&self) -> Vec<f64> {
        self.reduced_costs.iter().map(|&d| d.max(0.0)).collect()
    }

    /// Multipliers of the lower bounds, max(-d, 0).
    pub fn lower_bound_duals(&self) -> Vec<f64> {
        self.reduced_costs.iter().map(|&d| (-d).max(0.0)).collect()
    }

    /// y·b + Σ (γ·hi - β·lo).
    pub fn dual_objective(&self, p: &LpProblem) -> f64 {
        let mut v: f64 = p.rows.iter().zip(&self.duals).map(|(r, y)| r.rhs * y).sum();
        for j in 0..p.num_vars() {
            let d = self.reduced_costs[j];
            if d > 0.0 {
                v += d * p.upper[j];
            } else if d < 0.0 {
                v += d * p.lower[j];
            }
        }
        v
    }

    pub fn duality_gap(&self, p: &LpProblem) -> f64 {
        (self.objective - self.dual_objective(p)).abs()
    }
}

/// Row multipliers proving that no x satisfies the rows and bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasRay {
    pub multipliers: Vec<f64>,
    pub stats: SimplexStats,
}

impl FarkasRay {
    /// r·b - Σ_j min over [lo_j, hi_j] of (Aᵀr)_j·x_j. Negative for a valid
    /// certificate (and -∞ never occurs for rays we produce).
    pub fn certificate_value(&self, p: &LpProblem) -> f64 {
        farkas_value(p, &self.multipliers)
    }

    pub fn verify(&self, p: &LpProblem, tol: f64) -> bool {
        verify_farkas(p, &self.multipliers, tol)
    }
}

pub(crate) fn farkas_value(p: &LpProblem, r: &[f64]) -> f64 {
    let mut g = vec![0.0; p.num_vars()];
    let mut rb = 0.0;
    for (row, &ri) in p.rows.iter().zip(r) {
        rb += ri * row.rhs;
        for &(j, a) in &row.coeffs {
            g[j] += ri * a;
        }
    }
    let mut min_act = 0.0;
    for j in 0..p.num_vars() {
        let gj = g[j];
        if gj.abs() <= 1e-12 {
            continue;
        }
        // Minimum of g·x over the box.
        min_act += if gj > 0.0 {
            gj * p.lower[j]
        } else {
            gj * p.upper[j]
        };
    }
    rb - min_act
}

/// Checks the sign pattern of `r` and that it certifies emptiness: for every
/// x in the box, r·(Ax) ≥ min, but r·b < min by more than `tol`.
pub fn verify_farkas(p: &LpProblem, r: &[f64], tol: f64) -> bool {
    if r.len() != p.num_rows() {
        return false;
    }
    for (row, &ri) in p.rows.iter().zip(r) {
        let ok = match row.sense {
            Sense::Le => ri >= -tol,
            Sense::Ge => ri <= tol,
            Sense::Eq => true,
        };
        if !ok {
            return false;
        }
    }
    let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let v = farkas_value(p, r);
    v.is_finite() && v < -tol * scale
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(OptimalSolution),
    Infeasible(FarkasRay),
    /// Improving direction in x along which the objective grows without
    /// bound.
    Unbounded(Vec<f64>),
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<&OptimalSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, LpOutcome::Infeasible(_))
    }
}

pub fn solve(p: &LpProblem) -> Result<LpOutcome, LpError> {
    solve_with(p, &LpTolerances::default())
}

pub fn solve_with(p: &LpProblem, tol: &LpTolerances) -> Result<LpOutcome, LpError> {
    p.check()?;
    match presolve::Presolved::new(p, true) {
        Some(pre) => pre.solve(p, tol),
        // Singleton rows contradicted each other; skip the bound folding so
        // the certificate comes from the simplex itself.
        None => presolve::Presolved::new(p, false)
            .expect("no bound folding")
            .solve(p, tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lp(obj: &[f64], bounds: &[(f64, f64)]) -> LpProblem {
        let mut p = LpProblem::new();
        for (&c, &(lo, hi)) in obj.iter().zip(bounds) {
            p.add_var(lo, hi, c);
        }
        p
    }

    #[test]
    fn single_bound_row() {
        let mut p = lp(&[1.0], &[(0.0, f64::INFINITY)]);
        p.add_row([(0, 1.0)], Sense::Le, 5.0);
        let s = solve(&p).unwrap();
        let s = s.optimal().unwrap();
        assert!((s.x[0] - 5.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
        assert!(s.duality_gap(&p) < 1e-9);
    }

    #[test]
    fn contradictory_rows_give_a_ray() {
        let mut p = lp(&[1.0], &[(0.0, f64::INFINITY)]);
        p.add_row([(0, 1.0)], Sense::Ge, 3.0);
        p.add_row([(0, 1.0)], Sense::Le, 2.0);
        match solve(&p).unwrap() {
            LpOutcome::Infeasible(ray) => assert!(ray.verify(&p, 1e-8), "{ray:?}"),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    /// Brute-force vertex enumeration for 2-variable problems: intersect every
    /// pair of constraint lines (rows and bounds) and keep the best feasible
    /// point.
    fn vertex_optimum(p: &LpProblem) -> Option<f64> {
        let mut lines: Vec<([f64; 2], f64)> = Vec::new();
        for r in &p.rows {
            let mut a = [0.0; 2];
            for &(j, v) in &r.coeffs {
                a[j] = v;
            }
            lines.push((a, r.rhs));
        }
        for j in 0..2 {
            let mut a = [0.0; 2];
            a[j] = 1.0;
            lines.push((a, p.lower[j]));
            if p.upper[j].is_finite() {
                lines.push((a, p.upper[j]));
            }
        }
        let mut best: Option<f64> = None;
        for i in 0..lines.len() {
            for k in i + 1..lines.len() {
                let ((a, b), (c, d)) = (lines[i], lines[k]);
                let det = a[0] * c[1] - a[1] * c[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = [(b * c[1] - a[1] * d) / det, (a[0] * d - b * c[0]) / det];
                if p.primal_violation(&x) <= 1e-9 {
                    let v = p.objective[0] * x[0] + p.objective[1] * x[1];
                    best = Some(best.map_or(v, |bv: f64| bv.max(v)));
                }
            }
        }
        best
    }

    #[test]
    fn small_polygon_matches_vertex_enumeration() {
        let mut p = lp(&[2.0, 3.0], &[(0.0, f64::INFINITY), (0.0, f64::INFINITY)]);
        p.add_row([(0, 1.0), (1, 1.0)], Sense::Le, 4.0);
        p.add_row([(0, 1.0)], Sense::Le, 2.0);
        let s = solve(&p).unwrap();
        let s = s.optimal().unwrap();
        assert!((s.objective - 12.0).abs() < 1e-9);
        assert!((s.x[0]).abs() < 1e-9 && (s.x[1] - 4.0).abs() < 1e-9);
        assert!((vertex_optimum(&p).unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn equality_rows_and_free_direction() {
        let mut p = lp(&[1.0, 1.0], &[(0.0, f64::INFINITY), (0.0, f64::INFINITY)]);
        p.add_row([(0, 1.0), (1, -1.0)], Sense::Eq, 0.0);
        assert!(matches!(solve(&p).unwrap(), LpOutcome::Unbounded(_)));
        p.add_row([(0, 1.0), (1, 1.0)], Sense::Le, 6.0);
        let s = solve(&p).unwrap();
        let s = s.optimal().unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-9 && (s.x[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_row_conflicts_are_certified() {
        let mut p = lp(&[1.0], &[(0.0, 1.0)]);
        p.rows.push(Row {
            coeffs: vec![],
            sense: Sense::Ge,
            rhs: 1.0,
        });
        match solve(&p).unwrap() {
            LpOutcome::Infeasible(ray) => assert!(ray.verify(&p, 1e-8)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unsorted_rows_and_infinite_lower_bounds() {
        let mut p = lp(&[1.0, 1.0], &[(0.0, 1.0), (0.0, 1.0)]);
        p.rows.push(Row {
            coeffs: vec![(1, 1.0), (0, 1.0)],
            sense: Sense::Le,
            rhs: 1.0,
        });
        assert!(matches!(solve(&p), Err(LpError::InvalidProblem(_))));
        let q = lp(&[1.0], &[(f64::NEG_INFINITY, 1.0)]);
        assert!(matches!(solve(&q), Err(LpError::InvalidProblem(_))));
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example, which cycles under the textbook rule.
        let mut p = lp(&[0.75, -20.0, 0.5, -6.0], &[(0.0, f64::INFINITY); 4]);
        p.add_row([(0, 0.25), (1, -8.0), (2, -1.0), (3, 9.0)], Sense::Le, 0.0);
        p.add_row([(0, 0.5), (1, -12.0), (2, -0.5), (3, 3.0)], Sense::Le, 0.0);
        p.add_row([(2, 1.0)], Sense::Le, 1.0);
        let s = solve(&p).unwrap();
        let s = s.optimal().unwrap();
        assert!((s.objective - 1.25).abs() < 1e-9);
        assert!(s.duality_gap(&p) < 1e-9);
    }

    pub(super) fn random_lp(seed: u64, n: usize, m: usize) -> LpProblem {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = LpProblem::new();
        for _ in 0..n {
            let lo = rng.gen_range(-3..=2) as f64;
            let hi = if rng.gen_bool(0.2) {
                f64::INFINITY
            } else {
                lo + rng.gen_range(0..=6) as f64
            };
            p.add_var(lo, hi, rng.gen_range(-5..=5) as f64);
        }
        for _ in 0..m {
            let mut coeffs = Vec::new();
            for j in 0..n {
                if rng.gen_bool(0.5) {
                    coeffs.push((j, rng.gen_range(-4..=4) as f64));
                }
            }
            let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.gen_range(0..3)];
            p.add_row(coeffs, sense, rng.gen_range(-8..=8) as f64);
        }
        p
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn outcomes_carry_valid_certificates(seed in any::<u64>(), n in 1usize..7, m in 0usize..7) {
            let p = random_lp(seed, n, m);
            match solve(&p).unwrap() {
                LpOutcome::Optimal(s) => {
                    prop_assert!(p.primal_violation(&s.x) <= 1e-8);
                    prop_assert!(s.duality_gap(&p) <= 1e-7 * (1.0 + s.objective.abs()));
                    for (row, &y) in p.rows.iter().zip(&s.duals) {
                        match row.sense {
                            Sense::Le => prop_assert!(y >= -1e-9),
                            Sense::Ge => prop_assert!(y <= 1e-9),
                            Sense::Eq => {}
                        }
                    }
                    // Reduced costs can only push against finite bounds.
                    for j in 0..p.num_vars() {
                        if s.reduced_costs[j] > 1e-9 { prop_assert!(p.upper[j].is_finite()); }
                    }
                    prop_assert!(s.stats.iterations <= 10 * (p.num_rows() + p.num_vars()).max(1));
                    if n == 2 {
                        let v = vertex_optimum(&p).unwrap();
                        prop_assert!((v - s.objective).abs() < 1e-7);
                    }
                }
                LpOutcome::Infeasible(ray) => {
                    prop_assert!(ray.verify(&p, 1e-8), "{:?}", ray);
                }
                LpOutcome::Unbounded(dir) => {
                    let gain: f64 = dir.iter().zip(&p.objective).map(|(d, c)| d * c).sum();
                    prop_assert!(gain > 0.0);
                    for j in 0..p.num_vars() {
                        if dir[j] > 0.0 { prop_assert!(p.upper[j].is_infinite()); }
                        prop_assert!(dir[j] >= -1e-12);
                    }
                }
            }
        }
    }
}
