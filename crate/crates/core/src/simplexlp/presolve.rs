//! Row reductions applied before the simplex, and the mapping of its
//! multipliers back onto the original rows.
//!
//! Singleton rows become variable bounds and rows implied by the bounds are
//! dropped. A dropped row gets multiplier 0; a singleton row that supplies an
//! active bound receives the reduced cost of its variable divided by its
//! coefficient.

use super::simplex::{self, RawOutcome};
use super::{FarkasRay, LpError, LpOutcome, LpProblem, LpTolerances, OptimalSolution, Sense};

pub(super) struct Presolved {
    reduced: LpProblem,
    /// Original row of every kept row.
    kept: Vec<usize>,
    lower_source: Vec<Option<(usize, f64)>>,
    upper_source: Vec<Option<(usize, f64)>>,
    /// An empty row that cannot hold, with the multiplier sign certifying it.
    empty_conflict: Option<(usize, f64)>,
}

impl Presolved {
    /// Returns `None` when folding singleton rows yields crossing bounds.
    pub(super) fn new(p: &LpProblem, fold_singletons: bool) -> Option<Self> {
        let n = p.num_vars();
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        let mut lower_source = vec![None; n];
        let mut upper_source = vec![None; n];
        let mut removed = vec![false; p.num_rows()];
        let mut empty_conflict = None;

        for (i, row) in p.rows.iter().enumerate() {
            if row.coeffs.is_empty() {
                removed[i] = true;
                let violated = match row.sense {
                    Sense::Le => row.rhs < 0.0,
                    Sense::Ge => row.rhs > 0.0,
                    Sense::Eq => row.rhs != 0.0,
                };
                if violated && empty_conflict.is_none() {
                    let sign = match row.sense {
                        Sense::Le => 1.0,
                        Sense::Ge => -1.0,
                        Sense::Eq => -row.rhs.signum(),
                    };
                    empty_conflict = Some((i, sign));
                }
                continue;
            }
            if !fold_singletons || row.coeffs.len() != 1 {
                continue;
            }
            removed[i] = true;
            let (j, a) = row.coeffs[0];
            let bound = row.rhs / a;
            let (sets_upper, sets_lower) = match (row.sense, a > 0.0) {
                (Sense::Eq, _) => (true, true),
                (Sense::Le, true) | (Sense::Ge, false) => (true, false),
                (Sense::Le, false) | (Sense::Ge, true) => (false, true),
            };
            if sets_upper && bound < upper[j] {
                upper[j] = bound;
                upper_source[j] = Some((i, a));
            }
            if sets_lower && bound > lower[j] {
                lower[j] = bound;
                lower_source[j] = Some((i, a));
            }
        }
        if (0..n).any(|j| lower[j] > upper[j]) {
            return None;
        }

        let mut reduced = LpProblem {
            objective: p.objective.clone(),
            lower,
            upper,
            rows: Vec::new(),
        };
        let mut kept = Vec::new();
        for (i, row) in p.rows.iter().enumerate() {
            if removed[i] {
                continue;
            }
            let (mut min_act, mut max_act) = (0.0, 0.0);
            for &(j, a) in &row.coeffs {
                let (l, u) = (reduced.lower[j], reduced.upper[j]);
                if a > 0.0 {
                    min_act += a * l;
                    max_act += a * u;
                } else {
                    min_act += a * u;
                    max_act += a * l;
                }
            }
            let slack = 1e-12 * (1.0 + row.rhs.abs());
            let redundant = match row.sense {
                Sense::Le => max_act <= row.rhs + slack,
                Sense::Ge => min_act >= row.rhs - slack,
                Sense::Eq => false,
            };
            if redundant {
                continue;
            }
            kept.push(i);
            reduced.rows.push(row.clone());
        }
        Some(Presolved {
            reduced,
            kept,
            lower_source,
            upper_source,
            empty_conflict,
        })
    }

    /// Moves each variable's reduced cost onto the singleton row behind its
    /// active bound.
    fn attribute(&self, multipliers: &mut [f64], reduced_costs: &[f64]) {
        for (j, &d) in reduced_costs.iter().enumerate() {
            let source = if d > 0.0 {
                self.upper_source[j]
            } else if d < 0.0 {
                self.lower_source[j]
            } else {
                None
            };
            if let Some((row, a)) = source {
                multipliers[row] += d / a;
            }
        }
    }

    pub(super) fn solve(&self, p: &LpProblem, tol: &LpTolerances) -> Result<LpOutcome, LpError> {
        if let Some((row, sign)) = self.empty_conflict {
            let mut multipliers = vec![0.0; p.num_rows()];
            multipliers[row] = sign;
            return Ok(LpOutcome::Infeasible(FarkasRay {
                multipliers,
                stats: Default::default(),
            }));
        }
        let mut full = vec![0.0; p.num_rows()];
        match simplex::run(&self.reduced, tol)? {
            RawOutcome::Optimal {
                x,
                duals,
                reduced,
                stats,
            } => {
                for (k, &i) in self.kept.iter().enumerate() {
                    full[i] = duals[k];
                }
                self.attribute(&mut full, &reduced);
                clean_signs(p, &mut full);
                let mut reduced_costs = p.reduced_costs(&full);
                for (d, hi) in reduced_costs.iter_mut().zip(&p.upper) {
                    // Roundoff against a missing upper bound.
                    if *d > 0.0 && *d <= tol.dual && hi.is_infinite() {
                        *d = 0.0;
                    }
                }
                let objective = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                Ok(LpOutcome::Optimal(OptimalSolution {
                    objective,
                    x,
                    duals: full,
                    reduced_costs,
                    stats,
                }))
            }
            RawOutcome::Infeasible {
                duals,
                reduced,
                stats,
            } => {
                for (k, &i) in self.kept.iter().enumerate() {
                    full[i] = duals[k];
                }
                self.attribute(&mut full, &reduced);
                clean_signs(p, &mut full);
                Ok(LpOutcome::Infeasible(FarkasRay {
                    multipliers: full,
                    stats,
                }))
            }
            RawOutcome::Unbounded { direction } => Ok(LpOutcome::Unbounded(direction)),
        }
    }
}

/// Rounds multipliers that sit on the wrong side of zero by roundoff.
fn clean_signs(p: &LpProblem, y: &mut [f64]) {
    for (row, v) in p.rows.iter().zip(y.iter_mut()) {
        match row.sense {
            Sense::Le if *v < 0.0 && *v > -1e-9 => *v = 0.0,
            Sense::Ge if *v > 0.0 && *v < 1e-9 => *v = 0.0,
            _ => {}
        }
    }
}
