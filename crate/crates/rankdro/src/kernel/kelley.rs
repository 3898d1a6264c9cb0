//! Kelley-style minimization of a finite max of convex functions over a
//! polyhedral decision set: the master LP carries one epigraph variable and
//! accumulates linearizations of every component at every visited point.

use super::cutmin::W_BIG;
use super::lp::{Lp, LpStatus};
use crate::{Error, Result};

/// Decision set { a : lo <= a <= hi, rows_le . a <= rhs, rows_eq . a = rhs }.
#[derive(Clone, Debug, Default)]
pub struct Polyhedron {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rows_le: Vec<(Vec<f64>, f64)>,
    pub rows_eq: Vec<(Vec<f64>, f64)>,
}

impl Polyhedron {
    pub fn free(n: usize) -> Self {
        Polyhedron {
            lo: vec![-W_BIG; n],
            hi: vec![W_BIG; n],
            rows_le: vec![],
            rows_eq: vec![],
        }
    }

    pub fn n(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, a: &[f64], tol: f64) -> bool {
        a.iter()
            .enumerate()
            .all(|(j, &v)| v >= self.lo[j] - tol && v <= self.hi[j] + tol)
            && self
                .rows_le
                .iter()
                .all(|(c, b)| c.iter().zip(a).map(|(ci, ai)| ci * ai).sum::<f64>() <= b + tol)
            && self.rows_eq.iter().all(|(c, b)| {
                (c.iter().zip(a).map(|(ci, ai)| ci * ai).sum::<f64>() - b).abs() <= tol
            })
    }
}

#[derive(Clone, Debug)]
pub struct KelleyReport {
    /// best (smallest) max-value seen; attained at `point`
    pub value: f64,
    pub point: Vec<f64>,
    /// master lower bound on the min-max
    pub lower: f64,
    pub iterations: usize,
    pub converged: bool,
}

type CutRow = (usize, Vec<f64>, f64); // (component, gradient, intercept)

/// Minimize max_j f_j(a) over the polyhedron. Each component returns value
/// and subgradient. `a0` seeds the first cuts and must lie in the set.
pub fn kelley_min_max(
    components: &[&dyn Fn(&[f64]) -> (f64, Vec<f64>)],
    poly: &Polyhedron,
    a0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<KelleyReport> {
    let n = poly.n();
    if components.is_empty() {
        return Err(Error::Invalid("no components to minimize over".into()));
    }
    if !poly.contains(a0, 1e-7) {
        return Err(Error::Invalid("start point outside the decision set".into()));
    }
    let eval_max = |a: &[f64]| -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (j, f) in components.iter().enumerate() {
            let (v, _) = f(a);
            if v > best {
                best = v;
                arg = j;
            }
        }
        (best, arg)
    };

    let mut cuts: Vec<CutRow> = vec![];
    let add_cuts = |a: &[f64], cuts: &mut Vec<CutRow>| {
        for (j, f) in components.iter().enumerate() {
            let (v, g) = f(a);
            let intercept = v - g.iter().zip(a).map(|(gi, ai)| gi * ai).sum::<f64>();
            cuts.push((j, g, intercept));
        }
    };
    add_cuts(a0, &mut cuts);
    let (mut best_val, _) = eval_max(a0);
    let mut best_pt = a0.to_vec();
    let mut lower = f64::NEG_INFINITY;

    for iter in 0..max_iter {
        // master: min t s.t. t >= g.a + b for every cut, a in poly
        let mut cost = vec![0.0; n + 1];
        cost[n] = 1.0;
        let mut lp = Lp::minimize(cost);
        for j in 0..n {
            lp.set_bounds(j, poly.lo[j].max(-W_BIG), poly.hi[j].min(W_BIG));
        }
        // the epigraph variable is bounded below by the seed cuts
        lp.set_free(n);
        for (c, b) in &poly.rows_le {
            let mut row = c.clone();
            row.push(0.0);
            lp.add_le(row, *b);
        }
        for (c, b) in &poly.rows_eq {
            let mut row = c.clone();
            row.push(0.0);
            lp.add_eq(row, *b);
        }
        for (_, g, b) in &cuts {
            let mut row: Vec<f64> = g.iter().map(|gi| -gi).collect();
            row.push(1.0);
            lp.add_ge(row, *b);
        }
        let sol = lp.solve()?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                return Err(Error::Infeasible("empty decision set".into()))
            }
            _ => return Err(Error::NotConverged("min-max master did not solve".into())),
        }
        lower = lower.max(sol.value);
        let a_hat = sol.x[..n].to_vec();
        let (val, _) = eval_max(&a_hat);
        if val < best_val {
            best_val = val;
            best_pt = a_hat.clone();
        }
        add_cuts(&a_hat, &mut cuts);
        if best_val - lower <= tol * (1.0 + best_val.abs()) {
            return Ok(KelleyReport {
                value: best_val,
                point: best_pt,
                lower,
                iterations: iter + 1,
                converged: true,
            });
        }
        prune_cuts(&mut cuts, &a_hat, components.len());
    }
    Ok(KelleyReport {
        value: best_val,
        point: best_pt,
        lower,
        iterations: max_iter,
        converged: false,
    })
}

fn prune_cuts(cuts: &mut Vec<CutRow>, at: &[f64], n_components: usize) {
    const KEEP: usize = 40;
    if cuts.len() <= KEEP * n_components.max(1) {
        return;
    }
    // keep, per component, the cuts with the highest linearization value at
    // the current point plus the newest one
    let mut keep_flags = vec![false; cuts.len()];
    for comp in 0..n_components {
        let mut scored: Vec<(f64, usize)> = cuts
            .iter()
            .enumerate()
            .filter(|(_, (j, _, _))| *j == comp)
            .map(|(i, (_, g, b))| {
                (g.iter().zip(at).map(|(gi, ai)| gi * ai).sum::<f64>() + b, i)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for &(_, i) in scored.iter().take(KEEP) {
            keep_flags[i] = true;
        }
        if let Some(&(_, last)) = scored.iter().max_by_key(|&&(_, i)| i) {
            keep_flags[last] = true;
        }
    }
    let mut i = 0;
    cuts.retain(|_| {
        let k = keep_flags[i];
        i += 1;
        k
    });
}
