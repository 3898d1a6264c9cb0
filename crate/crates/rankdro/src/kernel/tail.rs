//! Global maximization of a weighted sum of piecewise-linear transforms of
//! tail masses over a divergence ball:
//!
//!     max  sum_k w_k * curve(T_k(q)),   T_k(q) = q_k + ... + q_{m-1},
//!     s.t. q in simplex, D_phi(q || p) <= r,
//!
//! with w_k >= 0 but the curve not necessarily concave. Tail masses are
//! nested (T_1 >= T_2 >= ...), so fixing the linear piece each T_k lands on
//! turns the problem into a linear maximization over a convex region; the
//! piece assignments that respect the nesting are enumerated, pruned by the
//! reachable range of each tail, and each surviving cell is solved exactly.
//! When the cell count exceeds the enumeration budget the solver falls back
//! to a seeded multistart ascent polished on its own cell, bracketed from
//! above by the concave-envelope relaxation.

use super::ball::{concave_max_over_ball, linear_ball_bound, simplex_project};
use super::cutmin::{CutMinProblem, Term};
use super::lp::{Lp, LpStatus};
use crate::measures::{Divergence, ProbVector};
use crate::pwl::{concave_envelope, PlCurve};
use crate::rng::Rng;
use crate::{Error, Result, TAIL_ASSIGN_BUDGET};

#[derive(Clone, Debug)]
pub struct TailMax {
    /// best feasible objective value found
    pub value: f64,
    pub point: Vec<f64>,
    /// valid upper bound (equals `value` when the enumeration was exhaustive)
    pub upper: f64,
    pub exact: bool,
    pub cells_solved: usize,
}

/// weights[k] multiplies curve(q_k + ... + q_{m-1}); weights[0] must be 0
/// because T_0 = 1 is constant (add the constant outside).
pub fn tail_sum_global_max(
    weights: &[f64],
    curve: &PlCurve,
    p: &ProbVector,
    phi: Divergence,
    r: f64,
    tol: f64,
) -> Result<TailMax> {
    let m = p.len();
    if weights.len() != m {
        return Err(Error::Invalid("one tail weight per outcome expected".into()));
    }
    if weights[0].abs() > 1e-15 {
        return Err(Error::Invalid("weight on the full mass must be zero".into()));
    }
    if weights.iter().any(|&w| w < -1e-12) {
        return Err(Error::Invalid("tail weights must be nonnegative".into()));
    }
    if p.as_slice().iter().any(|&pi| pi <= 0.0) {
        return Err(Error::Invalid("tail maximization needs positive reference mass".into()));
    }
    let involved: Vec<usize> = (1..m).filter(|&k| weights[k] > 1e-15).collect();
    let eval_g = |q: &[f64]| -> f64 {
        involved
            .iter()
            .map(|&k| weights[k] * curve.eval(q[k..].iter().sum()))
            .sum()
    };
    if involved.is_empty() {
        return Ok(TailMax {
            value: 0.0,
            point: p.as_slice().to_vec(),
            upper: 0.0,
            exact: true,
            cells_solved: 0,
        });
    }
    if r <= 1e-12 {
        let v = eval_g(p.as_slice());
        return Ok(TailMax {
            value: v,
            point: p.as_slice().to_vec(),
            upper: v,
            exact: true,
            cells_solved: 0,
        });
    }

    let pieces = curve.pieces();
    let kk = pieces.len();
    // reachable piece range for each involved tail from valid bounds on
    // max/min of the tail mass over the ball
    let mut piece_range: Vec<(usize, usize)> = Vec::with_capacity(involved.len());
    for &k in &involved {
        let mut e = vec![0.0; m];
        for v in e.iter_mut().skip(k) {
            *v = 1.0;
        }
        let hi_t = linear_ball_bound(&e, p.as_slice(), phi, r)?.min(1.0);
        let neg: Vec<f64> = e.iter().map(|v| -v).collect();
        let lo_t = (-linear_ball_bound(&neg, p.as_slice(), phi, r)?).max(0.0);
        let lo_piece = pieces
            .iter()
            .position(|pc| pc.hi >= lo_t - 1e-12)
            .unwrap_or(0);
        let hi_piece = pieces
            .iter()
            .rposition(|pc| pc.lo <= hi_t + 1e-12)
            .unwrap_or(kk - 1);
        piece_range.push((lo_piece, hi_piece));
    }

    // count nesting-respecting assignments (piece index nonincreasing in
    // tail depth) within the pruned ranges; cap at the enumeration budget
    let count = count_cells(&piece_range, kk, TAIL_ASSIGN_BUDGET + 1);
    if count <= TAIL_ASSIGN_BUDGET {
        exact_enumeration(
            weights, curve, &involved, &piece_range, p, phi, r, tol, &eval_g,
        )
    } else {
        heuristic_with_envelope(weights, curve, &involved, p, phi, r, tol, &eval_g)
    }
}

/// Count nonincreasing piece assignments within the per-tail ranges by a
/// suffix-sum recurrence, saturating at `cap`.
fn count_cells(ranges: &[(usize, usize)], kk: usize, cap: usize) -> usize {
    let (lo0, hi0) = ranges[0];
    let mut cur: Vec<usize> = (0..kk)
        .map(|j| usize::from(j >= lo0 && j <= hi0))
        .collect();
    for &(lo, hi) in &ranges[1..] {
        let mut next = vec![0usize; kk];
        let mut suffix = 0usize;
        for j in (0..kk).rev() {
            suffix = (suffix + cur[j]).min(cap);
            if j >= lo && j <= hi {
                next[j] = suffix;
            }
        }
        cur = next;
    }
    let mut total = 0usize;
    for v in &cur {
        total = (total + v).min(cap);
    }
    total
}

fn enumerate_nonincreasing(
    depth: usize,
    max_piece: usize,
    piece_range: &[(usize, usize)],
    assignment: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if depth == piece_range.len() {
        out.push(assignment.clone());
        return;
    }
    let (lo, hi) = piece_range[depth];
    let hi_eff = hi.min(max_piece);
    if lo > hi_eff {
        return;
    }
    for j in (lo..=hi_eff).rev() {
        assignment.push(j);
        enumerate_nonincreasing(depth + 1, j, piece_range, assignment, out);
        assignment.pop();
    }
}

#[allow(clippy::too_many_arguments)]
fn exact_enumeration(
    weights: &[f64],
    curve: &PlCurve,
    involved: &[usize],
    piece_range: &[(usize, usize)],
    p: &ProbVector,
    phi: Divergence,
    r: f64,
    tol: f64,
    _eval_g: &dyn Fn(&[f64]) -> f64,
) -> Result<TailMax> {
    let kk = curve.n_pieces();
    let mut cells_list: Vec<Vec<usize>> = vec![];
    enumerate_nonincreasing(0, kk - 1, piece_range, &mut Vec::new(), &mut cells_list);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_pt = p.as_slice().to_vec();
    let mut cells = 0usize;
    for assignment in &cells_list {
        cells += 1;
        if let Some((val, pt)) =
            solve_cell(weights, curve, involved, assignment, p, phi, r, tol)?
        {
            if val > best_val {
                best_val = val;
                best_pt = pt;
            }
        }
    }
    if best_val == f64::NEG_INFINITY {
        return Err(Error::Infeasible("no tail cell intersects the ball".into()));
    }
    // the enumeration is exhaustive, so the best cell value is the optimum
    Ok(TailMax {
        value: best_val,
        point: best_pt,
        upper: best_val,
        exact: true,
        cells_solved: cells,
    })
}

/// Solve one piece-assignment cell: maximize the (now linear) objective over
/// ball, simplex and the piece windows. Returns None if the cell misses the
/// ball entirely.
#[allow(clippy::too_many_arguments)]
fn solve_cell(
    weights: &[f64],
    curve: &PlCurve,
    involved: &[usize],
    assignment: &[usize],
    p: &ProbVector,
    phi: Divergence,
    r: f64,
    tol: f64,
) -> Result<Option<(f64, Vec<f64>)>> {
    let m = p.len();
    let pieces = curve.pieces();
    let cell_pieces: Vec<(usize, usize)> =
        involved.iter().copied().zip(assignment.iter().copied()).collect();
    // interior anchor: maximize the minimum coordinate within the windows
    let Some(anchor) = cell_interior_anchor(m, &cell_pieces, &pieces)? else {
        return Ok(None);
    };
    // the divergence minimum over the cell decides feasibility and provides
    // a strictly interior point for restoration
    let (d_lower, d_min, q_center) =
        min_divergence_over_cell(&anchor, &cell_pieces, &pieces, p, phi, r)?;
    if d_lower > r + 1e-9 {
        return Ok(None);
    }
    let constant: f64 = cell_pieces
        .iter()
        .map(|&(k, j)| weights[k] * pieces[j].intercept)
        .sum();
    if d_min >= r - 1e-9 {
        // tangency: the cell meets the ball in (numerically) one point
        let val = cell_pieces
            .iter()
            .map(|&(k, j)| weights[k] * (pieces[j].slope * q_center[k..].iter().sum::<f64>()))
            .sum::<f64>()
            + constant;
        return Ok(Some((val, q_center)));
    }
    // linear objective coefficients: d/dq_i = sum over involved k <= i
    let mut coeff = vec![0.0; m];
    for &(k, j) in &cell_pieces {
        for c in coeff.iter_mut().skip(k) {
            *c += weights[k] * pieces[j].slope;
        }
    }
    let mut prob = CutMinProblem::new(m, coeff.iter().map(|c| -c).collect(), q_center.clone());
    prob.lo = vec![0.0; m];
    prob.hi = vec![1.0; m];
    prob.add_eq(vec![1.0; m], 1.0);
    for &(k, j) in &cell_pieces {
        let mut row = vec![0.0; m];
        for v in row.iter_mut().skip(k) {
            *v = 1.0;
        }
        prob.add_le(row.clone(), pieces[j].hi);
        prob.add_ge(row, pieces[j].lo);
    }
    let pv: Vec<f64> = p.as_slice().to_vec();
    prob.cons.push(Term::new(1.0, (0..m).collect(), move |v| {
        let mut total = 0.0;
        let mut grad = vec![0.0; v.len()];
        for i in 0..v.len() {
            let t = v[i] / pv[i];
            if t < 0.0 {
                return None;
            }
            let val = phi.phi(t);
            let der = phi.phi_deriv(t);
            if !val.is_finite() || !der.is_finite() {
                return None;
            }
            total += pv[i] * val;
            grad[i] = der;
        }
        Some((total - r, grad))
    }));
    prob.interior = Some(q_center);
    prob.tol = tol.min(1e-9);
    prob.max_iter = 500;
    match prob.solve() {
        Ok(rep) => Ok(Some((-rep.value + constant, rep.point))),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// LP: find a point of the cell polytope maximizing its smallest coordinate.
fn cell_interior_anchor(
    m: usize,
    cell_pieces: &[(usize, usize)],
    pieces: &[crate::pwl::CurvePiece],
) -> Result<Option<Vec<f64>>> {
    let mut lp = Lp::minimize({
        let mut c = vec![0.0; m + 1];
        c[m] = -1.0;
        c
    });
    for j in 0..m {
        lp.set_bounds(j, 0.0, 1.0);
    }
    lp.set_bounds(m, 0.0, 1.0);
    let mut ones = vec![1.0; m + 1];
    ones[m] = 0.0;
    lp.add_eq(ones, 1.0);
    for &(k, j) in cell_pieces {
        let mut row = vec![0.0; m + 1];
        for v in row.iter_mut().take(m).skip(k) {
            *v = 1.0;
        }
        lp.add_le(row.clone(), pieces[j].hi);
        for v in row.iter_mut() {
            *v = -*v;
        }
        lp.add_le(row, -pieces[j].lo);
    }
    for i in 0..m {
        let mut row = vec![0.0; m + 1];
        row[i] = -1.0;
        row[m] = 1.0;
        lp.add_le(row, 0.0); // eps <= q_i
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal || sol.x[m] <= 1e-10 {
        return Ok(None);
    }
    Ok(Some(sol.x[..m].to_vec()))
}

/// Minimize D(q||p) over the cell far enough to decide feasibility against
/// the radius r and, when feasible, produce a strictly interior restoration
/// point. Returns (proven lower bound, best value, best point).
fn min_divergence_over_cell(
    anchor: &[f64],
    cell_pieces: &[(usize, usize)],
    pieces: &[crate::pwl::CurvePiece],
    p: &ProbVector,
    phi: Divergence,
    r: f64,
) -> Result<(f64, f64, Vec<f64>)> {
    let m = anchor.len();
    let mut prob = CutMinProblem::new(m, vec![0.0; m], anchor.to_vec());
    prob.lo = vec![0.0; m];
    prob.hi = vec![1.0; m];
    prob.add_eq(vec![1.0; m], 1.0);
    for &(k, j) in cell_pieces {
        let mut row = vec![0.0; m];
        for v in row.iter_mut().skip(k) {
            *v = 1.0;
        }
        prob.add_le(row.clone(), pieces[j].hi);
        prob.add_ge(row, pieces[j].lo);
    }
    let pv: Vec<f64> = p.as_slice().to_vec();
    prob.terms.push(Term::new(1.0, (0..m).collect(), move |v| {
        let mut total = 0.0;
        let mut grad = vec![0.0; v.len()];
        for i in 0..v.len() {
            let t = v[i] / pv[i];
            if t < 0.0 {
                return None;
            }
            let val = phi.phi(t);
            let der = phi.phi_deriv(t);
            if !val.is_finite() || !der.is_finite() {
                return None;
            }
            total += pv[i] * val;
            grad[i] = der;
        }
        Some((total, grad))
    }));
    prob.tol = 1e-10;
    // feasibility is decided once the bound clears the radius either way;
    // stopping well inside the ball keeps the restoration point interior
    prob.stop_lower_above = Some(r + 2e-9);
    prob.stop_best_below = Some(r - (0.1 * r).max(2e-9));
    let rep = prob.solve()?;
    Ok((rep.lower, rep.value, rep.point))
}

#[allow(clippy::too_many_arguments)]
fn heuristic_with_envelope(
    weights: &[f64],
    curve: &PlCurve,
    involved: &[usize],
    p: &ProbVector,
    phi: Divergence,
    r: f64,
    tol: f64,
    eval_g: &dyn Fn(&[f64]) -> f64,
) -> Result<TailMax> {
    let pv = p.as_slice();
    // upper bound: replace the curve by its concave envelope and solve the
    // now-concave problem to optimality
    let env = concave_envelope(curve)?;
    let f_env = |q: &[f64]| -> (f64, Vec<f64>) {
        let mut val = 0.0;
        let mut grad = vec![0.0; q.len()];
        for &k in involved {
            let t: f64 = q[k..].iter().sum();
            val += weights[k] * env.eval(t);
            let s = weights[k] * env.slope_at(t);
            for g in grad.iter_mut().skip(k) {
                *g += s;
            }
        }
        (val, grad)
    };
    let env_max = concave_max_over_ball(&f_env, p, phi, r, tol)?;
    let upper = env_max.certificate;

    // lower bound: seeded multistart supergradient ascent on the true
    // objective, then an exact polish on the incumbent's own cell
    let grad_g = |q: &[f64]| -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; q.len()];
        for &k in involved {
            let t: f64 = q[k..].iter().sum();
            let s = weights[k] * curve.slope_at(t);
            for g in grad.iter_mut().skip(k) {
                *g += s;
            }
        }
        (eval_g(q), grad)
    };
    let mut rng = Rng::new(0x7a11);
    let mut best_val = eval_g(pv);
    let mut best_pt = pv.to_vec();
    let mut starts: Vec<Vec<f64>> = vec![pv.to_vec(), env_max.point.clone()];
    for _ in 0..10 {
        let qs: Vec<f64> = pv
            .iter()
            .map(|&pi| (pi * (1.0 + 0.8 * rng.normal())).max(1e-6))
            .collect();
        let total: f64 = qs.iter().sum();
        starts.push(qs.into_iter().map(|v| v / total).collect());
    }
    for start in starts {
        let q0 = restore_toward(pv, &start, phi, r);
        let q = local_ascent(&grad_g, &q0, pv, phi, r);
        let v = eval_g(&q);
        if v > best_val {
            best_val = v;
            best_pt = q;
        }
    }
    // polish: solve the incumbent's own cell and its immediate neighbors
    let pieces = curve.pieces();
    let base_cell: Vec<usize> = involved
        .iter()
        .map(|&k| {
            let t: f64 = best_pt[k..].iter().sum();
            pieces
                .iter()
                .position(|pc| t <= pc.hi + 1e-12)
                .unwrap_or(pieces.len() - 1)
        })
        .collect();
    let mut candidates: Vec<Vec<usize>> = vec![base_cell.clone()];
    for d in 0..involved.len() {
        for delta in [-1i64, 1i64] {
            let j = base_cell[d] as i64 + delta;
            if j < 0 || j >= pieces.len() as i64 {
                continue;
            }
            let mut c = base_cell.clone();
            c[d] = j as usize;
            // keep the nesting order valid
            if c.windows(2).all(|w| w[0] >= w[1]) {
                candidates.push(c);
            }
        }
    }
    candidates.dedup();
    let mut cells = 0usize;
    for cand in candidates.iter().take(24) {
        cells += 1;
        if let Some((val, pt)) =
            solve_cell(weights, curve, involved, cand, p, phi, r, tol)?
        {
            if val > best_val {
                best_val = val;
                best_pt = pt;
            }
        }
    }
    Ok(TailMax {
        value: best_val,
        point: best_pt,
        upper: upper.max(best_val),
        exact: false,
        cells_solved: cells,
    })
}

fn restore_toward(p: &[f64], q: &[f64], phi: Divergence, r: f64) -> Vec<f64> {
    let d = |v: &[f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..v.len() {
            let t = (v[i] / p[i]).max(0.0);
            let val = phi.phi(t);
            if !val.is_finite() {
                return f64::INFINITY;
            }
            total += p[i] * val;
        }
        total
    };
    if d(q) <= r {
        return q.to_vec();
    }
    let blend =
        |s: f64| -> Vec<f64> { p.iter().zip(q).map(|(pi, qi)| pi + s * (qi - pi)).collect() };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if d(&blend(mid)) <= r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    blend(lo)
}

fn local_ascent(
    g: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    q0: &[f64],
    p: &[f64],
    phi: Divergence,
    r: f64,
) -> Vec<f64> {
    let mut q = q0.to_vec();
    let (mut fq, _) = g(&q);
    for _ in 0..80 {
        let (_, gr) = g(&q);
        let norm = gr.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-14 {
            break;
        }
        let mut improved = false;
        let mut step = 0.3;
        for _ in 0..18 {
            let cand: Vec<f64> =
                q.iter().zip(&gr).map(|(qi, gi)| qi + step * gi / norm).collect();
            let cand = simplex_project(&cand);
            let cand = restore_toward(p, &cand, phi, r);
            let (fc, _) = g(&cand);
            if fc > fq + 1e-13 {
                q = cand;
                fq = fc;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    q
}
