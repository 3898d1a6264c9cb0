//! Cutting-plane minimizer for convex programs with a linear backbone plus
//! separable convex terms.
//!
//! minimize   cost.v + sum_k w_k f_k(v[vars_k])
//! subject to A v <= b, lo <= v <= hi, g_k(v[cvars_k]) <= 0
//!
//! Each f_k and g_k is convex on its (small) variable subset and may be
//! +infinity outside its domain (eval returns None there). The master LP
//! carries one epigraph variable per objective term and linearizations of
//! everything at visited points. Because every nonlinear term depends on
//! only a handful of coordinates, Kelley cuts converge quickly here even
//! though the full variable count can be large.

use super::lp::{Lp, LpStatus};
use crate::{Error, Result};

pub const W_BIG: f64 = 1e9;
const MAX_BACKTRACK: usize = 70;
const CUTS_KEPT_PER_TERM: usize = 16;
const NEWEST_KEPT: usize = 3;
const TRUST_INIT: f64 = 4.0;
const TRUST_EXPAND: f64 = 8.0;

/// One convex term: value and gradient on the sub-vector `vars`, or None
/// where the term is +infinity.
pub struct Term<'a> {
    pub weight: f64,
    pub vars: Vec<usize>,
    pub eval: Box<dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)> + 'a>,
}

impl<'a> Term<'a> {
    pub fn new<F>(weight: f64, vars: Vec<usize>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Option<(f64, Vec<f64>)> + 'a,
    {
        Term { weight, vars, eval: Box::new(eval) }
    }

    fn at(&self, v: &[f64]) -> Option<(f64, Vec<f64>)> {
        let sub: Vec<f64> = self.vars.iter().map(|&j| v[j]).collect();
        (self.eval)(&sub)
    }
}

pub struct CutMinProblem<'a> {
    pub n: usize,
    pub cost: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    rows_le: Vec<(Vec<f64>, f64)>,
    rows_eq: Vec<(Vec<f64>, f64)>,
    pub terms: Vec<Term<'a>>,
    /// convex constraints g_k(v) <= 0, cut when violated
    pub cons: Vec<Term<'a>>,
    pub anchor: Vec<f64>,
    /// a point with every g_k strictly negative, used to restore feasible
    /// incumbents when the master iterate sits outside the g_k <= 0 region
    pub interior: Option<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
    /// stop once the proven lower bound exceeds this (threshold queries)
    pub stop_lower_above: Option<f64>,
    /// stop once a feasible value at or below this has been found
    pub stop_best_below: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CutMinReport {
    pub value: f64,
    pub lower: f64,
    pub point: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Cut {
    term: usize,
    coeffs: Vec<f64>, // over the term's sub-vars
    rhs: f64,         // t >= coeffs.sub + rhs  (objective), 0 >= ... (constraint)
    constraint: bool,
}

/// Duplicate rows make the master basis singular, so drop a new cut that
/// matches an existing one of the same term to within rounding.
fn push_unique(cuts: &mut Vec<Cut>, cand: Cut) {
    let dup = cuts.iter().any(|c| {
        c.constraint == cand.constraint
            && c.term == cand.term
            && (c.rhs - cand.rhs).abs() <= 1e-11 * (1.0 + cand.rhs.abs())
            && c.coeffs
                .iter()
                .zip(&cand.coeffs)
                .all(|(a, b)| (a - b).abs() <= 1e-11 * (1.0 + b.abs()))
    });
    if !dup {
        cuts.push(cand);
    }
}

impl<'a> CutMinProblem<'a> {
    pub fn new(n: usize, cost: Vec<f64>, anchor: Vec<f64>) -> Self {
        assert_eq!(cost.len(), n);
        assert_eq!(anchor.len(), n);
        CutMinProblem {
            n,
            cost,
            lo: vec![-W_BIG; n],
            hi: vec![W_BIG; n],
            rows_le: vec![],
            rows_eq: vec![],
            terms: vec![],
            cons: vec![],
            anchor,
            interior: None,
            tol: 1e-9,
            max_iter: 600,
            stop_lower_above: None,
            stop_best_below: None,
        }
    }

    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n);
        self.rows_le.push((coeffs, rhs));
    }

    pub fn add_ge(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.rows_le.push((coeffs.iter().map(|v| -v).collect(), -rhs));
    }

    /// A genuine equality row. Writing one as a le/ge pair would hand the
    /// master LP two exactly dependent rows, whose basis turns singular the
    /// moment both slacks leave it.
    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n);
        self.rows_eq.push((coeffs, rhs));
    }

    fn objective_at(&self, v: &[f64]) -> Option<f64> {
        let mut total: f64 = self.cost.iter().zip(v).map(|(c, x)| c * x).sum();
        for t in &self.terms {
            let (val, _) = t.at(v)?;
            if !val.is_finite() {
                return None;
            }
            total += t.weight * val;
        }
        Some(total)
    }

    /// Signed worst constraint value at v: negative means strictly inside
    /// every g_k <= 0, -infinity when there are no constraints.
    fn max_violation(&self, v: &[f64]) -> Option<f64> {
        let mut worst = f64::NEG_INFINITY;
        for g in &self.cons {
            let (val, _) = g.at(v)?;
            if !val.is_finite() {
                return None;
            }
            worst = worst.max(val);
        }
        Some(worst)
    }

    fn rows_ok(&self, v: &[f64], tol: f64) -> bool {
        self.rows_le.iter().all(|(a, b)| {
            a.iter().zip(v).map(|(ai, vi)| ai * vi).sum::<f64>() <= b + tol
        }) && self.rows_eq.iter().all(|(a, b)| {
            (a.iter().zip(v).map(|(ai, vi)| ai * vi).sum::<f64>() - b).abs() <= tol
        }) && v
            .iter()
            .enumerate()
            .all(|(j, &x)| x >= self.lo[j] - tol && x <= self.hi[j] + tol)
    }

    /// Blend `target` toward the strictly feasible interior point until the
    /// convex constraints hold. Max violation is convex along the segment
    /// and strictly negative at the interior end, so bisection applies.
    fn restore_feasible(&self, target: &[f64], interior: &[f64]) -> Option<Vec<f64>> {
        let blend = |s: f64| -> Vec<f64> {
            interior
                .iter()
                .zip(target)
                .map(|(a, t)| a + s * (t - a))
                .collect()
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..70 {
            let mid = 0.5 * (lo + hi);
            match self.max_violation(&blend(mid)) {
                Some(v) if v <= 0.0 => lo = mid,
                _ => hi = mid,
            }
        }
        let pt = blend(lo);
        let ok = self.max_violation(&pt).is_some_and(|v| v <= 1e-9);
        ok.then_some(pt)
    }

    fn domain_ok(&self, v: &[f64]) -> bool {
        self.terms.iter().all(|t| t.at(v).is_some_and(|(f, _)| f.is_finite()))
            && self.cons.iter().all(|g| g.at(v).is_some_and(|(f, _)| f.is_finite()))
    }

    /// Pull `target` toward the anchor until every term and constraint is
    /// finite. Returns None if even the anchor fails (caller bug).
    fn backtrack(&self, target: &[f64]) -> Option<Vec<f64>> {
        let mut sigma = 1.0;
        for _ in 0..MAX_BACKTRACK {
            let v: Vec<f64> = self
                .anchor
                .iter()
                .zip(target)
                .map(|(a, t)| a + sigma * (t - a))
                .collect();
            let finite = self.terms.iter().all(|t| t.at(&v).is_some_and(|(f, _)| f.is_finite()))
                && self.cons.iter().all(|g| g.at(&v).is_some_and(|(f, _)| f.is_finite()));
            if finite {
                return Some(v);
            }
            sigma *= 0.5;
        }
        None
    }

    pub fn solve(&self) -> Result<CutMinReport> {
        assert!(
            self.rows_ok(&self.anchor, 1e-7),
            "anchor violates the linear rows"
        );
        let anchor_ok = self
            .terms
            .iter()
            .all(|t| t.at(&self.anchor).is_some_and(|(f, _)| f.is_finite()))
            && self
                .cons
                .iter()
                .all(|g| g.at(&self.anchor).is_some_and(|(f, _)| f.is_finite()));
        if !anchor_ok {
            return Err(Error::Invalid("anchor outside the domain of a term".into()));
        }

        let mut cuts: Vec<Cut> = vec![];
        self.add_point_cuts(&self.anchor, &mut cuts);
        let mut best_val = f64::INFINITY;
        let mut best_pt = self.anchor.to_vec();
        let anchor_viol = self.max_violation(&self.anchor).unwrap_or(1.0);
        if anchor_viol <= 1e-9 {
            best_val = self.objective_at(&self.anchor).unwrap();
        }
        // a strictly feasible anchor doubles as the restoration point
        let owned_interior;
        let interior: Option<&Vec<f64>> = match &self.interior {
            Some(v) => Some(v),
            None if anchor_viol < -1e-12 && !self.cons.is_empty() => {
                owned_interior = self.anchor.clone();
                Some(&owned_interior)
            }
            None => None,
        };
        let mut lower = -f64::INFINITY;
        // trust box around the incumbent: master iterates stay at the scale
        // of the data instead of flying to the corners of a huge default
        // box, which keeps the cut coefficients well conditioned. The box
        // grows geometrically whenever it clips the master solution, and
        // only unclipped master values count as global lower bounds.
        let mut trust: Vec<f64> =
            self.anchor.iter().map(|a| TRUST_INIT * (1.0 + a.abs())).collect();

        // two iterations with no new cut and no bound movement mean the
        // bundle is a fixed point: the remaining gap is oracle rounding
        // noise that more iterations cannot close
        let mut stalled = 0usize;
        let mut iters_used = 0usize;
        for iter in 0..self.max_iter {
            iters_used = iter + 1;
            let centre: Vec<f64> = if best_val.is_finite() {
                best_pt.clone()
            } else {
                self.anchor.clone()
            };
            let lo_eff: Vec<f64> = (0..self.n)
                .map(|j| self.lo[j].max(centre[j] - trust[j]))
                .collect();
            let hi_eff: Vec<f64> = (0..self.n)
                .map(|j| self.hi[j].min(centre[j] + trust[j]))
                .collect();
            let (master_val, v_hat) = self.solve_master(&cuts, &lo_eff, &hi_eff)?;
            let mut clipped = false;
            for j in 0..self.n {
                let margin = 1e-7 * (1.0 + v_hat[j].abs());
                if (v_hat[j] <= lo_eff[j] + margin && lo_eff[j] > self.lo[j] + margin)
                    || (v_hat[j] >= hi_eff[j] - margin && hi_eff[j] < self.hi[j] - margin)
                {
                    clipped = true;
                    trust[j] *= TRUST_EXPAND;
                }
            }
            if !clipped {
                lower = lower.max(master_val);
            }
            let cuts_before = cuts.len();
            let (prev_best, prev_lower) = (best_val, lower);
            // evaluate at the master argmin and at a point pulled halfway
            // toward the incumbent; the midpoint cut tames the oscillation
            // of pure cutting planes while the argmin cut keeps the lower
            // bound moving
            let center = if best_val.is_finite() { &best_pt } else { &self.anchor };
            let mid: Vec<f64> =
                center.iter().zip(&v_hat).map(|(c, v)| 0.5 * (c + v)).collect();
            for (primary, target) in [(true, &v_hat), (false, &mid)] {
                if !primary
                    && mid
                        .iter()
                        .zip(&v_hat)
                        .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()))
                {
                    break;
                }
                let eval_pt = if self.domain_ok(target) {
                    target.clone()
                } else if primary {
                    // cut at v_hat with whatever information is finite there
                    self.add_point_cuts(target, &mut cuts);
                    match self.backtrack(target) {
                        Some(p) => p,
                        None => {
                            return Err(Error::NotConverged(
                                "domain backtracking failed".into(),
                            ))
                        }
                    }
                } else {
                    continue;
                };
                self.add_point_cuts(&eval_pt, &mut cuts);
                let mut viol = self.max_violation(&eval_pt).unwrap_or(f64::INFINITY);
                let mut eval_pt = eval_pt;
                if viol > 1e-9 {
                    if let Some(feas) =
                        interior.and_then(|int| self.restore_feasible(&eval_pt, int))
                    {
                        self.add_point_cuts(&feas, &mut cuts);
                        eval_pt = feas;
                        viol = self.max_violation(&eval_pt).unwrap_or(f64::INFINITY);
                    }
                }
                if viol <= 1e-9 {
                    if let Some(val) = self.objective_at(&eval_pt) {
                        if val < best_val {
                            best_val = val;
                            best_pt = eval_pt.clone();
                        }
                    }
                }
            }
            let scale = 1.0 + best_val.abs().min(1e12);
            if best_val.is_finite() && best_val - lower <= self.tol * scale {
                return Ok(CutMinReport {
                    value: best_val,
                    lower,
                    point: best_pt,
                    iterations: iter + 1,
                    converged: true,
                });
            }
            // threshold queries can stop as soon as the answer is decided
            let lower_decided = self.stop_lower_above.is_some_and(|a| lower > a);
            let best_decided =
                self.stop_best_below.is_some_and(|b| best_val.is_finite() && best_val <= b);
            if lower_decided || best_decided {
                return Ok(CutMinReport {
                    value: best_val,
                    lower,
                    point: best_pt,
                    iterations: iter + 1,
                    converged: false,
                });
            }
            let progressed = clipped
                || cuts.len() != cuts_before
                || best_val < prev_best - 1e-15 * scale
                || lower > prev_lower + 1e-15 * scale;
            if progressed {
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 2 {
                    break;
                }
            }
            self.prune(&v_hat, &mut cuts);
        }
        if best_val.is_finite() && best_val - lower <= 1e-5 * (1.0 + best_val.abs()) {
            // close enough to report, but flag the weaker gap
            return Ok(CutMinReport {
                value: best_val,
                lower,
                point: best_pt,
                iterations: iters_used,
                converged: false,
            });
        }
        Err(Error::NotConverged(format!(
            "cut minimizer stalled: best {best_val:.6e}, lower {lower:.6e}"
        )))
    }

    fn add_point_cuts(&self, v: &[f64], cuts: &mut Vec<Cut>) {
        for (k, t) in self.terms.iter().enumerate() {
            if let Some((val, grad)) = t.at(v) {
                if val.is_finite() {
                    let sub: Vec<f64> = t.vars.iter().map(|&j| v[j]).collect();
                    let rhs = val - grad.iter().zip(&sub).map(|(g, x)| g * x).sum::<f64>();
                    push_unique(cuts, Cut { term: k, coeffs: grad, rhs, constraint: false });
                }
            }
        }
        for (k, g) in self.cons.iter().enumerate() {
            if let Some((val, grad)) = g.at(v) {
                if val.is_finite() {
                    let sub: Vec<f64> = g.vars.iter().map(|&j| v[j]).collect();
                    let rhs = val - grad.iter().zip(&sub).map(|(gi, x)| gi * x).sum::<f64>();
                    push_unique(cuts, Cut { term: k, coeffs: grad, rhs, constraint: true });
                }
            }
        }
    }

    fn solve_master(
        &self,
        cuts: &[Cut],
        lo_eff: &[f64],
        hi_eff: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let nt = self.terms.len();
        let n_all = self.n + nt;
        let mut cost = vec![0.0; n_all];
        cost[..self.n].copy_from_slice(&self.cost);
        for (k, t) in self.terms.iter().enumerate() {
            cost[self.n + k] = t.weight;
        }
        let mut lp = Lp::minimize(cost);
        for j in 0..self.n {
            lp.set_bounds(j, lo_eff[j].max(-W_BIG), hi_eff[j].min(W_BIG));
        }
        // epigraph variables stay free: every term carries at least the
        // anchor cut, which bounds the master from below over the var box
        for k in 0..nt {
            lp.set_free(self.n + k);
        }
        for (a, b) in &self.rows_le {
            let mut row = vec![0.0; n_all];
            row[..self.n].copy_from_slice(a);
            lp.add_le(row, *b);
        }
        for (a, b) in &self.rows_eq {
            let mut row = vec![0.0; n_all];
            row[..self.n].copy_from_slice(a);
            lp.add_eq(row, *b);
        }
        for cut in cuts {
            // objective cut: t_k - grad.sub >= rhs; constraint: -grad.sub >= rhs
            let vars = if cut.constraint {
                &self.cons[cut.term].vars
            } else {
                &self.terms[cut.term].vars
            };
            let mut row = vec![0.0; n_all];
            for (g, &j) in cut.coeffs.iter().zip(vars) {
                row[j] = -g;
            }
            if !cut.constraint {
                row[self.n + cut.term] = 1.0;
            }
            lp.add_ge(row, cut.rhs);
        }
        let sol = lp.solve()?;
        match sol.status {
            LpStatus::Optimal => Ok((sol.value, sol.x[..self.n].to_vec())),
            LpStatus::Infeasible => Err(Error::Infeasible(
                "cut master infeasible: linear rows and cuts conflict".into(),
            )),
            LpStatus::Unbounded => Err(Error::NotConverged(
                "cut master unbounded despite box bounds".into(),
            )),
            LpStatus::IterLimit => Err(Error::NotConverged("master LP hit its pivot cap".into())),
        }
    }

    fn prune(&self, at: &[f64], cuts: &mut Vec<Cut>) {
        let nt = self.terms.len();
        let n_cons = self.cons.len();
        // hard cap per group: the most binding cuts at the current master
        // point plus the newest few, so the master LP stays small
        let mut keep = vec![false; cuts.len()];
        for group in 0..nt + n_cons {
            let constraint = group >= nt;
            let term = if constraint { group - nt } else { group };
            let idx: Vec<usize> = (0..cuts.len())
                .filter(|&i| cuts[i].constraint == constraint && cuts[i].term == term)
                .collect();
            if idx.len() <= CUTS_KEPT_PER_TERM {
                for &i in &idx {
                    keep[i] = true;
                }
                continue;
            }
            let vars = if constraint { &self.cons[term].vars } else { &self.terms[term].vars };
            let sub: Vec<f64> = vars.iter().map(|&j| at[j]).collect();
            let mut scored: Vec<(f64, usize)> = idx
                .iter()
                .map(|&i| {
                    let lin = cuts[i]
                        .coeffs
                        .iter()
                        .zip(&sub)
                        .map(|(g, x)| g * x)
                        .sum::<f64>()
                        + cuts[i].rhs;
                    (lin, i)
                })
                .collect();
            // higher linearization value = more binding
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            for &(_, i) in scored.iter().take(CUTS_KEPT_PER_TERM - NEWEST_KEPT) {
                keep[i] = true;
            }
            for &i in idx.iter().rev().take(NEWEST_KEPT) {
                keep[i] = true;
            }
        }
        let mut i = 0;
        cuts.retain(|_| {
            let k = keep[i];
            i += 1;
            k
        });
    }
}
