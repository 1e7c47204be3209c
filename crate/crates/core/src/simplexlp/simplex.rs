//! Revised simplex on an explicit dense basis inverse, with product-form
//! updates and periodic Gauss-Jordan refactorization.

use super::{LpError, LpProblem, LpTolerances, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimplexStats {
    pub iterations: usize,
    pub phase_one_iterations: usize,
    pub refactorizations: usize,
}

pub(super) enum RawOutcome {
    Optimal {
        x: Vec<f64>,
        duals: Vec<f64>,
        reduced: Vec<f64>,
        stats: SimplexStats,
    },
    /// Phase-one duals and the structural reduced costs under the phase-one
    /// objective.
    Infeasible {
        duals: Vec<f64>,
        reduced: Vec<f64>,
        stats: SimplexStats,
    },
    Unbounded {
        direction: Vec<f64>,
    },
}

struct Tableau<'a> {
    tol: &'a LpTolerances,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    at_upper: Vec<bool>,
    binv: Vec<f64>,
    rhs: Vec<f64>,
    since_refactor: usize,
    stats: SimplexStats,
    max_iterations: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded {
        entering: usize,
        dir: f64,
        alpha: Vec<f64>,
    },
}

pub(super) fn run(p: &LpProblem, tol: &LpTolerances) -> Result<RawOutcome, LpError> {
    let m = p.num_rows();
    let n = p.num_vars();
    let ncols = n + 2 * m;
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
    for (i, row) in p.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            cols[j].push((i, a));
        }
        cols[n + i].push((i, 1.0));
    }
    let mut lo = p.lower.clone();
    let mut hi = p.upper.clone();
    for row in &p.rows {
        let (l, h) = match row.sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        lo.push(l);
        hi.push(h);
    }
    // Artificial columns start fixed at zero; the ones needed are opened
    // below.
    lo.extend(std::iter::repeat(0.0).take(m));
    hi.extend(std::iter::repeat(0.0).take(m));

    let mut x = vec![0.0; ncols];
    x[..n].copy_from_slice(&p.lower);
    let mut residual: Vec<f64> = p.rows.iter().map(|r| r.rhs).collect();
    for j in 0..n {
        for &(i, a) in &cols[j] {
            residual[i] -= a * x[j];
        }
    }

    let mut basis = Vec::with_capacity(m);
    let mut in_basis = vec![false; ncols];
    let mut at_upper = vec![false; ncols];
    let mut binv = vec![0.0; m * m];
    let mut needs_phase_one = false;
    for (i, row) in p.rows.iter().enumerate() {
        let r = residual[i];
        let slack_ok = match row.sense {
            Sense::Le => r >= 0.0,
            Sense::Ge => r <= 0.0,
            Sense::Eq => r == 0.0,
        };
        let slack = n + i;
        if slack_ok {
            basis.push(slack);
            in_basis[slack] = true;
            x[slack] = r;
            binv[i * m + i] = 1.0;
        } else {
            let art = n + m + i;
            let sigma = if r > 0.0 { 1.0 } else { -1.0 };
            cols[art].push((i, sigma));
            hi[art] = f64::INFINITY;
            basis.push(art);
            in_basis[art] = true;
            x[art] = r.abs();
            binv[i * m + i] = sigma;
            // The slack rests at its finite bound (0 in every case).
            x[slack] = 0.0;
            at_upper[slack] = row.sense == Sense::Ge;
            needs_phase_one = true;
        }
    }

    let mut t = Tableau {
        tol,
        m,
        cols,
        lo,
        hi,
        cost: vec![0.0; ncols],
        x,
        basis,
        in_basis,
        at_upper,
        binv,
        rhs: p.rows.iter().map(|r| r.rhs).collect(),
        since_refactor: 0,
        stats: SimplexStats::default(),
        max_iterations: 50 * (m + ncols) + 1000,
    };

    if needs_phase_one {
        for i in 0..m {
            let art = n + m + i;
            if t.hi[art] > 0.0 {
                t.cost[art] = -1.0;
            }
        }
        match t.run_phase()? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded { .. } => {
                return Err(LpError::Numerical(
                    "phase one reported an unbounded direction".into(),
                ));
            }
        }
        t.stats.phase_one_iterations = t.stats.iterations;
        let infeasibility: f64 = (0..m).map(|i| t.x[n + m + i]).sum();
        if infeasibility > tol.infeasibility {
            let duals = t.duals();
            let reduced = (0..n).map(|j| t.reduced_cost(j, &duals)).collect();
            return Ok(RawOutcome::Infeasible {
                duals,
                reduced,
                stats: t.stats,
            });
        }
        for i in 0..m {
            let art = n + m + i;
            t.hi[art] = 0.0;
            t.cost[art] = 0.0;
            if !t.in_basis[art] {
                t.x[art] = 0.0;
                t.at_upper[art] = false;
            }
        }
    }

    t.cost[..n].copy_from_slice(&p.objective);
    match t.run_phase()? {
        PhaseEnd::Optimal => {
            let duals = t.duals();
            let reduced = (0..n).map(|j| t.reduced_cost(j, &duals)).collect();
            Ok(RawOutcome::Optimal {
                x: t.x[..n].to_vec(),
                duals,
                reduced,
                stats: t.stats,
            })
        }
        PhaseEnd::Unbounded {
            entering,
            dir,
            alpha,
        } => {
            let mut direction = vec![0.0; n];
            if entering < n {
                direction[entering] = dir;
            }
            for (k, &b) in t.basis.iter().enumerate() {
                if b < n {
                    let v = -dir * alpha[k];
                    direction[b] = if v.abs() <= tol.pivot { 0.0 } else { v };
                }
            }
            Ok(RawOutcome::Unbounded { direction })
        }
    }
}

impl Tableau<'_> {
    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &b) in self.basis.iter().enumerate() {
            let c = self.cost[b];
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for (yi, &v) in y.iter_mut().zip(row) {
                    *yi += c * v;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(i, a)| a * y[i]).sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(i, a) in &self.cols[j] {
            for (k, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[k * m + i] * a;
            }
        }
        alpha
    }

    fn run_phase(&mut self) -> Result<PhaseEnd, LpError> {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut verified = false;
        loop {
            if self.stats.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            if self.since_refactor >= self.tol.refactor_every {
                self.refactor()?;
            }
            let y = self.duals();
            let Some((q, _)) = self.price(&y, bland) else {
                // Confirm optimality on a fresh factorization.
                if !verified && self.since_refactor > 0 {
                    self.refactor()?;
                    verified = true;
                    continue;
                }
                return Ok(PhaseEnd::Optimal);
            };
            verified = false;
            let alpha = self.ftran(q);
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };
            let (theta, leaving) = self.ratio_test(q, dir, &alpha, bland);
            if theta.is_infinite() {
                return Ok(PhaseEnd::Unbounded {
                    entering: q,
                    dir,
                    alpha,
                });
            }
            self.stats.iterations += 1;
            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= self.tol.degenerate_switch {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            self.x[q] += dir * theta;
            for (k, &b) in self.basis.iter().enumerate() {
                if alpha[k] != 0.0 {
                    self.x[b] -= dir * theta * alpha[k];
                }
            }
            match leaving {
                None => {
                    self.at_upper[q] = !self.at_upper[q];
                    self.x[q] = if self.at_upper[q] {
                        self.hi[q]
                    } else {
                        self.lo[q]
                    };
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    self.x[out] = if to_upper { self.hi[out] } else { self.lo[out] };
                    self.at_upper[out] = to_upper;
                    self.in_basis[out] = false;
                    self.in_basis[q] = true;
                    self.at_upper[q] = false;
                    self.basis[r] = q;
                    self.pivot(r, &alpha)?;
                }
            }
        }
    }

    /// Entering column: largest violation (Dantzig) or lowest index (Bland).
    fn price(&self, y: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols.len() {
            if self.in_basis[j] || self.hi[j] <= self.lo[j] {
                continue;
            }
            let d = self.reduced_cost(j, y);
            let eligible = if self.at_upper[j] {
                d < -self.tol.dual
            } else {
                d > self.tol.dual
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, d));
            }
            if best.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                best = Some((j, d));
            }
        }
        best
    }

    /// Step length and the leaving row (with the bound it reaches). `None`
    /// as leaving row means the entering variable flips to its other bound.
    fn ratio_test(
        &self,
        q: usize,
        dir: f64,
        alpha: &[f64],
        bland: bool,
    ) -> (f64, Option<(usize, bool)>) {
        let flip = self.hi[q] - self.lo[q];
        let limit = |k: usize, slack: f64| -> Option<(f64, bool)> {
            let a = alpha[k];
            if a.abs() <= self.tol.pivot {
                return None;
            }
            let b = self.basis[k];
            let rate = -dir * a;
            if rate < 0.0 {
                self.lo[b]
                    .is_finite()
                    .then(|| (((self.x[b] - self.lo[b]) + slack) / -rate, false))
            } else {
                self.hi[b]
                    .is_finite()
                    .then(|| (((self.hi[b] - self.x[b]) + slack) / rate, true))
            }
        };

        if bland {
            let mut best: Option<(f64, usize, bool)> = None;
            for k in 0..self.m {
                if let Some((lim, up)) = limit(k, 0.0) {
                    let lim = lim.max(0.0);
                    let better = match best {
                        None => true,
                        Some((bl, bk, _)) => {
                            lim < bl - 1e-12
                                || (lim <= bl + 1e-12 && self.basis[k] < self.basis[bk])
                        }
                    };
                    if better {
                        best = Some((lim, k, up));
                    }
                }
            }
            return match best {
                Some((lim, k, up)) if lim < flip => (lim, Some((k, up))),
                _ => (flip, None),
            };
        }

        // Harris two-pass test: bound the step with relaxed limits, then pick
        // the largest pivot among rows that block within that bound.
        let mut relaxed = f64::INFINITY;
        for k in 0..self.m {
            if let Some((lim, _)) = limit(k, self.tol.primal) {
                relaxed = relaxed.min(lim);
            }
        }
        if flip <= relaxed {
            return (flip, None);
        }
        let mut best: Option<(usize, bool, f64)> = None;
        for k in 0..self.m {
            if let Some((lim, up)) = limit(k, 0.0) {
                if lim <= relaxed && best.is_none_or(|(bk, _, _)| alpha[k].abs() > alpha[bk].abs())
                {
                    best = Some((k, up, lim));
                }
            }
        }
        match best {
            Some((k, up, lim)) => (lim.max(0.0), Some((k, up))),
            None => (flip, None),
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) -> Result<(), LpError> {
        let m = self.m;
        let p = alpha[r];
        if p.abs() < self.tol.singular {
            return Err(LpError::Numerical(format!(
                "pivot {p:e} below the singularity threshold"
            )));
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        for v in pivot_row.iter_mut() {
            *v /= p;
        }
        for (k, row) in before.chunks_mut(m).chain(after.chunks_mut(m)).enumerate() {
            let k = if k >= r { k + 1 } else { k };
            let f = alpha[k];
            if f != 0.0 {
                for (v, &pr) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * pr;
                }
            }
        }
        self.since_refactor += 1;
        Ok(())
    }

    /// Rebuilds B⁻¹ from scratch and recomputes the basic values.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        self.stats.refactorizations += 1;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut a = vec![0.0; m * m];
        for (k, &b) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[b] {
                a[i * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (pr, pv) = (c..m)
                .map(|r| (r, a[r * m + c].abs()))
                .fold(
                    (c, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if pv < self.tol.singular {
                return Err(LpError::Numerical(format!(
                    "basis is singular at column {c}"
                )));
            }
            if pr != c {
                for j in 0..m {
                    a.swap(pr * m + j, c * m + j);
                    inv.swap(pr * m + j, c * m + j);
                }
            }
            let d = a[c * m + c];
            for j in 0..m {
                a[c * m + j] /= d;
                inv[c * m + j] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for j in 0..m {
                            a[r * m + j] -= f * a[c * m + j];
                            inv[r * m + j] -= f * inv[c * m + j];
                        }
                    }
                }
            }
        }
        // Row k of the inverse belongs to basis position k.
        self.binv = inv;
        let mut r = self.rhs.clone();
        for j in 0..self.cols.len() {
            if !self.in_basis[j] && self.x[j] != 0.0 {
                for &(i, v) in &self.cols[j] {
                    r[i] -= v * self.x[j];
                }
            }
        }
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            self.x[self.basis[k]] = row.iter().zip(&r).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }
}
