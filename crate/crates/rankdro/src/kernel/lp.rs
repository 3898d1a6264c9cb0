//! Dense two-phase revised simplex with explicit basis inverse.
//!
//! Scope: the master problems and reformulation programs here are small
//! (hundreds of rows/columns), so a dense basis inverse with periodic
//! refactorization is plenty. Dantzig pricing with a switch to Bland's rule
//! after a stretch of non-improving pivots guarantees termination.

use crate::{Error, Result};

const EPS_PIVOT: f64 = 1e-9;
const EPS_OPT: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub x: Vec<f64>,
    /// Sensitivity duals, one per added row: d(value)/d(rhs). For a binding
    /// `<=` row of a minimization this is <= 0.
    pub dual_rows: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum RowSense {
    Le,
    Ge,
    Eq,
}

/// Problem builder; always a minimization of c.x.
pub struct Lp {
    n: usize,
    c: Vec<f64>,
    rows: Vec<(Vec<f64>, RowSense, f64)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Lp {
    pub fn minimize(c: Vec<f64>) -> Self {
        let n = c.len();
        Lp { n, c, rows: vec![], lo: vec![0.0; n], hi: vec![f64::INFINITY; n] }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n);
        self.rows.push((coeffs, RowSense::Le, rhs));
    }

    pub fn add_ge(&mut self, coeffs: Vec<f64>, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n);
        self.rows.push((coeffs, RowSense::Ge, rhs));
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n);
        self.rows.push((coeffs, RowSense::Eq, rhs));
    }

    /// lo may be -inf for a free-below variable; hi may be +inf.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        assert!(lo <= hi + 1e-15, "bounds crossed for var {j}: [{lo}, {hi}]");
        self.lo[j] = lo;
        self.hi[j] = hi;
    }

    pub fn set_free(&mut self, j: usize) {
        self.lo[j] = f64::NEG_INFINITY;
        self.hi[j] = f64::INFINITY;
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Simplex::build(self)?.run()
    }
}

// Standard-form translation: min c.z, A z = b (b >= 0), z >= 0.
// Original var j maps to one shifted column (finite lower bound) or a +/-
// split (free below). Finite upper bounds become extra <= rows up front.
struct Simplex {
    n_orig: usize,
    n_user_rows: usize,
    // per original var: (column, offset) or (col_plus, col_minus)
    var_map: Vec<VarMap>,
    // per user+bound row: index into std rows and sign flip applied
    row_sign: Vec<f64>,
    a: Vec<Vec<f64>>, // m x n_std
    b: Vec<f64>,
    c: Vec<f64>,
    n_std: usize,
    n_structural: usize, // columns before artificials
    artificial_of_row: Vec<Option<usize>>,
    // the twin column of a +/- split variable: exact negations, so a basis
    // holding both is exactly singular. Pricing never admits a column whose
    // twin is basic; its true reduced cost is zero there and only rounding
    // noise could select it.
    partner: Vec<Option<usize>>,
    basis: Vec<usize>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
}

#[derive(Clone)]
enum VarMap {
    Shifted { col: usize, offset: f64 },
    Split { pos: usize, neg: usize },
}

impl Simplex {
    fn build(lp: &Lp) -> Result<Simplex> {
        let n_user_rows = lp.rows.len();
        // assemble rows: user rows then upper-bound rows
        let mut rows: Vec<(Vec<f64>, RowSense, f64)> = lp.rows.clone();
        for j in 0..lp.n {
            if lp.hi[j].is_finite() {
                let mut coeffs = vec![0.0; lp.n];
                coeffs[j] = 1.0;
                rows.push((coeffs, RowSense::Le, lp.hi[j]));
            }
            if !lp.lo[j].is_finite() && !lp.hi[j].is_finite() {
                // handled by split below
            }
            if lp.lo[j].is_finite() && !(lp.lo[j] <= lp.hi[j] + 1e-15) {
                return Err(Error::Invalid(format!("bounds crossed for var {j}")));
            }
        }
        // variable mapping
        let mut var_map = Vec::with_capacity(lp.n);
        let mut n_cols = 0usize;
        for j in 0..lp.n {
            if lp.lo[j].is_finite() {
                var_map.push(VarMap::Shifted { col: n_cols, offset: lp.lo[j] });
                n_cols += 1;
            } else {
                var_map.push(VarMap::Split { pos: n_cols, neg: n_cols + 1 });
                n_cols += 2;
            }
        }
        let m = rows.len();
        // structural columns + one slack/surplus per inequality row
        let n_slack = rows
            .iter()
            .filter(|r| r.1 != RowSense::Eq)
            .count();
        let n_structural = n_cols + n_slack;
        let mut a = vec![vec![0.0; n_structural]; m];
        let mut b = vec![0.0; m];
        let mut c = vec![0.0; n_structural];
        let mut row_sign = vec![1.0; m];

        for (j, vm) in var_map.iter().enumerate() {
            match vm {
                VarMap::Shifted { col, .. } => c[*col] = lp.c[j],
                VarMap::Split { pos, neg } => {
                    c[*pos] = lp.c[j];
                    c[*neg] = -lp.c[j];
                }
            }
        }
        let mut slack_col = n_cols;
        for (i, (coeffs, sense, rhs)) in rows.iter().enumerate() {
            // substitute variable mapping and collect the shifted rhs
            let mut rhs_adj = *rhs;
            for (j, vm) in var_map.iter().enumerate() {
                let aij = coeffs[j];
                if aij == 0.0 {
                    continue;
                }
                match vm {
                    VarMap::Shifted { col, offset } => {
                        a[i][*col] = aij;
                        rhs_adj -= aij * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        a[i][*pos] = aij;
                        a[i][*neg] = -aij;
                    }
                }
            }
            match sense {
                RowSense::Le => {
                    a[i][slack_col] = 1.0;
                    slack_col += 1;
                }
                RowSense::Ge => {
                    a[i][slack_col] = -1.0;
                    slack_col += 1;
                }
                RowSense::Eq => {}
            }
            b[i] = rhs_adj;
            // normalize to b >= 0
            if b[i] < 0.0 {
                for v in a[i].iter_mut() {
                    *v = -*v;
                }
                b[i] = -b[i];
                row_sign[i] = -1.0;
            }
        }

        let mut partner = vec![None; n_structural];
        for vm in &var_map {
            if let VarMap::Split { pos, neg } = vm {
                partner[*pos] = Some(*neg);
                partner[*neg] = Some(*pos);
            }
        }
        Ok(Simplex {
            n_orig: lp.n,
            n_user_rows,
            var_map,
            row_sign,
            a,
            b,
            c,
            n_std: n_structural,
            n_structural,
            artificial_of_row: vec![None; m],
            partner,
            basis: vec![],
            binv: vec![],
            xb: vec![],
        })
    }

    fn run(&mut self) -> Result<LpSolution> {
        let m = self.a.len();
        if m == 0 {
            return self.solve_unconstrained();
        }
        // initial basis: slack where its sign survived normalization,
        // artificial otherwise
        let mut basis = vec![usize::MAX; m];
        for i in 0..m {
            for j in (0..self.n_std).rev() {
                // a slack column has a single +-1 entry; accept +1 in this row
                if self.a[i][j] == 1.0
                    && self
                        .a
                        .iter()
                        .enumerate()
                        .all(|(k, row)| k == i || row[j] == 0.0)
                    && self.c[j] == 0.0
                    && j >= self.n_std - self.count_slacks()
                {
                    basis[i] = j;
                    break;
                }
            }
        }
        // add artificials for uncovered rows
        for i in 0..m {
            if basis[i] == usize::MAX {
                for row in self.a.iter_mut() {
                    row.push(0.0);
                }
                self.a[i][self.n_std] = 1.0;
                self.c.push(0.0);
                self.partner.push(None);
                self.artificial_of_row[i] = Some(self.n_std);
                basis[i] = self.n_std;
                self.n_std += 1;
            }
        }
        self.basis = basis;
        self.refactor()?;

        // phase 1: minimize total artificial mass
        let has_artificials = self.artificial_of_row.iter().any(Option::is_some);
        if has_artificials {
            let mut c1 = vec![0.0; self.n_std];
            for art in self.artificial_of_row.iter().flatten() {
                c1[*art] = 1.0;
            }
            let status = self.iterate(&c1, true)?;
            if status == LpStatus::IterLimit {
                return Ok(self.report(LpStatus::IterLimit));
            }
            let infeas: f64 = self
                .basis
                .iter()
                .zip(&self.xb)
                .filter(|(j, _)| self.is_artificial(**j))
                .map(|(_, v)| v.max(0.0))
                .sum();
            if infeas > 1e-9 && self.residual_violations_large() {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    value: f64::NAN,
                    x: vec![f64::NAN; self.n_orig],
                    dual_rows: vec![f64::NAN; self.n_user_rows],
                });
            }
            self.drive_out_artificials()?;
        }

        // phase 2 on the true objective (artificial columns are forbidden)
        let c2 = self.c.clone();
        let status = self.iterate(&c2, false)?;
        Ok(self.report(status))
    }

    /// After phase 1, a residual artificial is the violation of its row.
    /// Compare each violation against its own row's data and activity so
    /// that rows mixing tiny and huge coefficients are judged at their own
    /// scale.
    fn residual_violations_large(&self) -> bool {
        let mut x_std = vec![0.0; self.n_std];
        for (k, &j) in self.basis.iter().enumerate() {
            x_std[j] = self.xb[k].max(0.0);
        }
        for (i, art) in self.artificial_of_row.iter().enumerate() {
            let Some(art) = art else { continue };
            let v = x_std[*art];
            if v <= 0.0 {
                continue;
            }
            let activity: f64 = (0..self.n_structural)
                .map(|j| (self.a[i][j] * x_std[j]).abs())
                .sum();
            if v > 1e-8 * (1.0 + self.b[i].abs() + activity) {
                return true;
            }
        }
        false
    }

    fn count_slacks(&self) -> usize {
        // slacks were appended directly after the variable columns
        self.n_structural
            - self
                .var_map
                .iter()
                .map(|vm| match vm {
                    VarMap::Shifted { .. } => 1,
                    VarMap::Split { .. } => 2,
                })
                .sum::<usize>()
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_structural
    }

    fn solve_unconstrained(&self) -> Result<LpSolution> {
        // no rows: optimum at bounds where possible
        let mut x = vec![0.0; self.n_orig];
        let mut value = 0.0;
        for (j, vm) in self.var_map.iter().enumerate() {
            let cj = match vm {
                VarMap::Shifted { col, .. } => self.c[*col],
                VarMap::Split { pos, .. } => self.c[*pos],
            };
            match vm {
                VarMap::Shifted { offset, .. } => {
                    if cj >= 0.0 {
                        x[j] = *offset;
                    } else {
                        return Ok(LpSolution {
                            status: LpStatus::Unbounded,
                            value: f64::NEG_INFINITY,
                            x: vec![f64::NAN; self.n_orig],
                            dual_rows: vec![],
                        });
                    }
                }
                VarMap::Split { .. } => {
                    if cj != 0.0 {
                        return Ok(LpSolution {
                            status: LpStatus::Unbounded,
                            value: f64::NEG_INFINITY,
                            x: vec![f64::NAN; self.n_orig],
                            dual_rows: vec![],
                        });
                    }
                    x[j] = 0.0;
                }
            }
            value += cj * x[j];
        }
        Ok(LpSolution { status: LpStatus::Optimal, value, x, dual_rows: vec![] })
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.a.len();
        // invert the basis matrix by Gauss-Jordan with partial pivoting
        let mut aug = vec![vec![0.0; 2 * m]; m];
        for i in 0..m {
            for (r, row) in self.a.iter().enumerate() {
                aug[r][i] = row[self.basis[i]];
            }
            aug[i][m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            for r in col + 1..m {
                if aug[r][col].abs() > aug[piv][col].abs() {
                    piv = r;
                }
            }
            if aug[piv][col].abs() < 1e-12 {
                return Err(Error::NotConverged("singular basis during refactor".into()));
            }
            aug.swap(col, piv);
            let d = aug[col][col];
            for v in aug[col].iter_mut() {
                *v /= d;
            }
            for r in 0..m {
                if r != col && aug[r][col] != 0.0 {
                    let f = aug[r][col];
                    for k in 0..2 * m {
                        aug[r][k] -= f * aug[col][k];
                    }
                }
            }
        }
        self.binv = aug.iter().map(|row| row[m..].to_vec()).collect();
        self.xb = (0..m)
            .map(|i| (0..m).map(|k| self.binv[i][k] * self.b[k]).sum())
            .collect();
        Ok(())
    }

    /// Primal simplex iterations for the given costs. `phase1` permits
    /// artificial columns to stay; otherwise they are barred from entering.
    fn iterate(&mut self, costs: &[f64], phase1: bool) -> Result<LpStatus> {
        let m = self.a.len();
        let max_iter = 200 * (m + self.n_std) + 5000;
        let mut stall = 0usize;
        let mut last_obj = f64::INFINITY;
        // conclusions are only trusted on a freshly refactored basis: the
        // eta updates drift on ill-conditioned bases and can fake both
        // optimality and unboundedness
        let mut fresh = false;
        for iter in 0..max_iter {
            if iter % REFACTOR_EVERY == REFACTOR_EVERY - 1 {
                self.refactor()?;
                fresh = true;
            }
            // duals y = cB . binv
            let mut y = vec![0.0; m];
            for i in 0..m {
                let cb = costs[self.basis[i]];
                if cb != 0.0 {
                    for k in 0..m {
                        y[k] += cb * self.binv[i][k];
                    }
                }
            }
            // pricing
            let bland = stall > 256;
            let mut enter: Option<usize> = None;
            let mut best = -EPS_OPT;
            for j in 0..self.n_std {
                if !phase1 && self.is_artificial(j) {
                    continue;
                }
                if self.basis.contains(&j) {
                    continue;
                }
                if self.partner[j].is_some_and(|pn| self.basis.contains(&pn)) {
                    continue;
                }
                let mut d = costs[j];
                for (i, row) in self.a.iter().enumerate() {
                    if row[j] != 0.0 {
                        d -= y[i] * row[j];
                    }
                }
                if d < -EPS_OPT {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if d < best {
                        best = d;
                        enter = Some(j);
                    }
                }
            }
            let Some(j_in) = enter else {
                if fresh {
                    return Ok(LpStatus::Optimal);
                }
                self.refactor()?;
                fresh = true;
                continue;
            };
            // direction u = binv . A_j
            let u: Vec<f64> = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|k| self.binv[i][k] * self.a[k][j_in])
                        .sum::<f64>()
                })
                .collect();
            // ratio test
            let mut leave: Option<usize> = None;
            if bland {
                // deterministic index rule for termination
                let mut best_ratio = f64::INFINITY;
                for i in 0..m {
                    if u[i] > EPS_PIVOT {
                        let ratio = self.xb[i].max(0.0) / u[i];
                        let better = ratio < best_ratio - 1e-12
                            || (ratio < best_ratio + 1e-12
                                && leave.is_some_and(|l| self.basis[i] < self.basis[l]));
                        if better {
                            best_ratio = ratio;
                            leave = Some(i);
                        }
                    }
                }
            } else {
                // two-pass ratio test: relax the minimum ratio by a hair,
                // then take the largest eligible pivot. Tiny pivots scale
                // the basis inverse by their reciprocal and wreck it when
                // near-parallel rows are binding together.
                let mut theta = f64::INFINITY;
                for i in 0..m {
                    if u[i] > EPS_PIVOT {
                        theta = theta.min((self.xb[i].max(0.0) + 1e-9) / u[i]);
                    }
                }
                if theta.is_finite() {
                    let mut best_piv = EPS_PIVOT;
                    for i in 0..m {
                        if u[i] > best_piv && self.xb[i].max(0.0) / u[i] <= theta {
                            best_piv = u[i];
                            leave = Some(i);
                        }
                    }
                }
            }
            let Some(r) = leave else {
                if !fresh {
                    self.refactor()?;
                    fresh = true;
                    continue;
                }
                return if phase1 {
                    Err(Error::NotConverged("phase-1 subproblem unbounded".into()))
                } else {
                    Ok(LpStatus::Unbounded)
                };
            };
            // pivot: update binv and xb by the eta transformation
            let ur = u[r];
            let theta = self.xb[r].max(0.0) / ur;
            for i in 0..m {
                if i == r {
                    continue;
                }
                let f = u[i];
                if f != 0.0 {
                    for k in 0..m {
                        self.binv[i][k] -= f / ur * self.binv[r][k];
                    }
                    self.xb[i] -= f * theta;
                }
            }
            for k in 0..m {
                self.binv[r][k] /= ur;
            }
            self.xb[r] = theta;
            self.basis[r] = j_in;
            fresh = false;
            // stall detection for Bland switching
            let obj: f64 = self
                .basis
                .iter()
                .zip(&self.xb)
                .map(|(&j, &v)| costs[j] * v)
                .sum();
            if obj < last_obj - 1e-12 {
                stall = 0;
                last_obj = obj;
            } else {
                stall += 1;
            }
        }
        Ok(LpStatus::IterLimit)
    }

    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.a.len();
        for r in 0..m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            // find any structural column with a nonzero pivot in this row
            let mut found = None;
            for j in 0..self.n_structural {
                if self.basis.contains(&j) {
                    continue;
                }
                if self.partner[j].is_some_and(|pn| self.basis.contains(&pn)) {
                    continue;
                }
                let urj: f64 = (0..m).map(|k| self.binv[r][k] * self.a[k][j]).sum();
                if urj.abs() > 1e-7 {
                    found = Some((j, urj));
                    break;
                }
            }
            if let Some((j, urj)) = found {
                for i in 0..m {
                    if i == r {
                        continue;
                    }
                    let uij: f64 = (0..m).map(|k| self.binv[i][k] * self.a[k][j]).sum();
                    if uij != 0.0 {
                        for k in 0..m {
                            self.binv[i][k] -= uij / urj * self.binv[r][k];
                        }
                        self.xb[i] -= uij / urj * self.xb[r];
                    }
                }
                for k in 0..m {
                    self.binv[r][k] /= urj;
                }
                self.xb[r] /= urj;
                self.basis[r] = j;
            }
            // a fully zero row is redundant; its artificial stays basic at 0
        }
        Ok(())
    }

    fn report(&self, status: LpStatus) -> LpSolution {
        let m = self.a.len();
        let mut z = vec![0.0; self.n_std];
        for (i, &j) in self.basis.iter().enumerate() {
            z[j] = self.xb[i].max(0.0);
        }
        let mut x = vec![0.0; self.n_orig];
        for (j, vm) in self.var_map.iter().enumerate() {
            x[j] = match vm {
                VarMap::Shifted { col, offset } => z[*col] + offset,
                VarMap::Split { pos, neg } => z[*pos] - z[*neg],
            };
        }
        // objective in original terms
        let value = if status == LpStatus::Optimal || status == LpStatus::IterLimit {
            self.var_map
                .iter()
                .enumerate()
                .map(|(j, vm)| match vm {
                    VarMap::Shifted { col, .. } => self.c[*col] * x[j],
                    VarMap::Split { pos, .. } => self.c[*pos] * x[j],
                })
                .sum()
        } else {
            f64::NAN
        };
        // duals from phase-2 costs: y = cB binv, mapped back through the
        // row normalization (the sensitivity convention keeps the flip sign)
        let mut y = vec![0.0; m];
        for i in 0..m {
            let cb = self.c[self.basis[i]];
            if cb != 0.0 {
                for k in 0..m {
                    y[k] += cb * self.binv[i][k];
                }
            }
        }
        let dual_rows: Vec<f64> = (0..self.n_user_rows)
            .map(|i| y[i] * self.row_sign[i])
            .collect();
        LpSolution { status, value, x, dual_rows }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn tiny_known_lp() {
        // min -x - 2y s.t. x + y <= 4, x <= 3, y <= 2  -> x=2? no: y=2, x=2, val -6
        let mut lp = Lp::minimize(vec![-1.0, -2.0]);
        lp.add_le(vec![1.0, 1.0], 4.0);
        lp.set_bounds(0, 0.0, 3.0);
        lp.set_bounds(1, 0.0, 2.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value + 6.0).abs() < 1e-9, "value {}", s.value);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_free_vars() {
        // min |t| written as t free, min t' with t' >= t, t' >= -t, t = 3 - 2s, s in [0,1]
        let mut lp = Lp::minimize(vec![0.0, 1.0, 0.0]); // vars t, t', s
        lp.set_free(0);
        lp.set_bounds(2, 0.0, 1.0);
        lp.add_ge(vec![-1.0, 1.0, 0.0], 0.0);
        lp.add_ge(vec![1.0, 1.0, 0.0], 0.0);
        lp.add_eq(vec![1.0, 0.0, 2.0], 3.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // t = 3 - 2s, minimized |t| at s=1 -> t=1
        assert!((s.value - 1.0).abs() < 1e-9, "value {}", s.value);
        assert!((s.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = Lp::minimize(vec![1.0]);
        lp.add_ge(vec![1.0], 2.0);
        lp.add_le(vec![1.0], 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);

        let mut lp2 = Lp::minimize(vec![-1.0]);
        lp2.add_ge(vec![1.0], 0.0);
        assert_eq!(lp2.solve().unwrap().status, LpStatus::Unbounded);

        let mut lp3 = Lp::minimize(vec![1.0, 1.0]);
        lp3.set_free(0);
        lp3.add_le(vec![1.0, 1.0], 5.0);
        assert_eq!(lp3.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn degenerate_lp_terminates() {
        // classic degeneracy: multiple rows active at the optimum
        let mut lp = Lp::minimize(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value + 0.05).abs() < 1e-9, "value {}", s.value);
    }

    #[test]
    fn simplex_mass_problem() {
        // max q3 over simplex with q3 <= 0.6: min -q3
        let mut lp = Lp::minimize(vec![0.0, 0.0, -1.0]);
        lp.add_eq(vec![1.0, 1.0, 1.0], 1.0);
        lp.add_le(vec![0.0, 0.0, 1.0], 0.6);
        let s = lp.solve().unwrap();
        assert!((s.value + 0.6).abs() < 1e-9);
        // sensitivity: raising the 0.6 cap lowers the minimum -> dual <= 0
        assert!(s.dual_rows[1] <= 1e-12);
        assert!((s.dual_rows[1] + 1.0).abs() < 1e-9);
    }

    fn random_primal_dual_pair(rng: &mut Rng, n: usize, m: usize) -> (f64, f64) {
        // primal: min c.x, A x >= b, x >= 0 with c > 0, A >= 0, b >= 0
        // dual:   max b.y, A^T y <= c, y >= 0  (solved as min -b.y)
        let c: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.5, 2.0)).collect();
        let a: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.uniform_in(0.0, 1.5)).collect())
            .collect();
        let b: Vec<f64> = (0..m).map(|_| rng.uniform_in(0.1, 1.0)).collect();
        let mut p = Lp::minimize(c.clone());
        for i in 0..m {
            p.add_ge(a[i].clone(), b[i]);
        }
        let ps = p.solve().unwrap();
        assert_eq!(ps.status, LpStatus::Optimal);
        let mut d = Lp::minimize(b.iter().map(|v| -v).collect());
        for j in 0..n {
            d.add_le((0..m).map(|i| a[i][j]).collect(), c[j]);
        }
        let ds = d.solve().unwrap();
        assert_eq!(ds.status, LpStatus::Optimal);
        (ps.value, -ds.value)
    }


    #[test]
    fn near_parallel_cut_rows_solve() {
        // a cutting-plane master captured mid-run: many nearly parallel
        // rows (pairwise gaps ~1e-5) with free epigraph variables. Tiny
        // ratio-test pivots or a split column entering against its basic
        // twin used to collapse this into a spurious unbounded claim.
        let cuts: [(usize, f64, f64, f64); 39] = [
            (1, -0.6313785941961721, -0.07828220830289123, -0.6313785941961721),
            (2, -0.6313785941961721, -0.07828220830289123, -0.6313785941961721),
            (0, -1.5532747786902772, -0.13073378782972278, -1.1102230246251565e-16),
            (0, -1.5597125933710387, -0.1335821019918284, 0.0),
            (1, -0.626132765616708, -0.08071635367722574, -0.626132765616708),
            (2, -0.626132765616708, -0.08071635367722574, -0.626132765616708),
            (0, -1.5629106635257615, -0.1350069256534956, 0.0),
            (1, -0.6235294802354435, -0.08194061264868979, -0.6235294802354435),
            (2, -0.6235294802354435, -0.08194061264868979, -0.6235294802354435),
            (0, -1.5564925765531947, -0.13215412560515605, 0.0),
            (1, -0.6287538562767586, -0.07949465629527958, -0.6287538562767586),
            (2, -0.6287538562767586, -0.07949465629527958, -0.6287538562767586),
            (0, -1.5580962269443683, -0.13286446240718497, 0.0),
            (1, -0.6274464406123761, -0.08010267757709305, -0.6274464406123761),
            (2, -0.6274464406123761, -0.08010267757709305, -0.6274464406123761),
            (0, -1.5548834001574074, -0.13144300184904312, 0.0),
            (1, -0.630065769645745, -0.07888727597860185, -0.6300657696457451),
            (2, -0.630065769645745, -0.07888727597860185, -0.6300657696457451),
            (0, -1.5556863937724514, -0.13179765099024532, 0.0),
            (1, -0.6294106015390575, -0.07919025923575712, -0.6294106015390575),
            (2, -0.6294106015390575, -0.07919025923575712, -0.6294106015390575),
            (0, -1.555284879693108, -0.13162026696819085, -1.1102230246251565e-16),
            (1, -0.6297381571911392, -0.07903869553825538, -0.6297381571911392),
            (2, -0.6297381571911392, -0.07903869553825538, -0.6297381571911392),
            (0, -1.5550840405316217, -0.13153157756702416, -1.1102230246251565e-16),
            (1, -0.6299020126534417, -0.07896294170351886, -0.6299020126534417),
            (2, -0.6299020126534417, -0.07896294170351886, -0.6299020126534417),
            (0, -1.5551844590700479, -0.13157591856523765, 0.0),
            (1, -0.6299838893786378, -0.07892510433850902, -0.6299838893786378),
            (2, -0.6299838893786378, -0.07892510433850902, -0.6299838893786378),
            (0, -1.5551342508071997, -0.13155374769997186, -1.1102230246251565e-16),
            (1, -0.6299429511672158, -0.07894402162091241, -0.6299429511672157),
            (2, -0.6299429511672158, -0.07894402162091241, -0.6299429511672157),
            (0, -1.5551593597897997, -0.13156483507215588, 0.0),
            (1, -0.6299224818055295, -0.07895348137807645, -0.6299224818055295),
            (2, -0.6299224818055295, -0.07895348137807645, -0.6299224818055295),
            (0, -1.5551216993726433, -0.1315482055156233, -1.1102230246251565e-16),
            (1, -0.6299122470560954, -0.07895821153779048, -0.6299122470560954),
            (2, -0.6299122470560954, -0.07895821153779048, -0.6299122470560954),
        ];
        let mut lp = Lp::minimize(vec![1.0, 0.1, 0.4, 0.35, 0.25]);
        lp.set_bounds(0, -10.414553294057308, 1.0);
        lp.set_bounds(1, 1e-9, 4.207276647028654);
        for j in 2..5 {
            lp.set_free(j);
        }
        for &(term, ca, cg, rhs) in &cuts {
            let mut row = vec![-ca, -cg, 0.0, 0.0, 0.0];
            row[2 + term] = 1.0;
            lp.add_ge(row, rhs);
        }
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value + 0.37794291104336586).abs() < 1e-6, "value {}", s.value);
    }

    #[test]
    fn strong_duality_on_random_instances() {
        let mut rng = Rng::new(2024);
        for k in 0..100 {
            let n = 2 + rng.below(6);
            let m = 2 + rng.below(6);
            let (pv, dv) = random_primal_dual_pair(&mut rng, n, m);
            assert!(
                (pv - dv).abs() <= 1e-7 * (1.0 + pv.abs()),
                "instance {k}: primal {pv} vs dual {dv}"
            );
        }
    }

    #[test]
    fn duals_satisfy_stationarity() {
        let mut rng = Rng::new(77);
        for _ in 0..30 {
            let n = 3 + rng.below(4);
            let m = 2 + rng.below(4);
            let c: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.2, 2.0)).collect();
            let a: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.uniform_in(-0.5, 1.5)).collect())
                .collect();
            let b: Vec<f64> = (0..m).map(|_| rng.uniform_in(0.5, 2.0)).collect();
            let mut lp = Lp::minimize(c.clone());
            for i in 0..m {
                lp.add_ge(a[i].clone(), b[i]);
            }
            let s = lp.solve().unwrap();
            if s.status != LpStatus::Optimal {
                continue;
            }
            // c_j + sum_i y_i * (-a_ij) >= 0 with equality where x_j > 0
            // (sensitivity duals for >= rows are >= 0 here: tightening b up
            // raises the optimum)
            for j in 0..n {
                let red = c[j] - (0..m).map(|i| s.dual_rows[i] * a[i][j]).sum::<f64>();
                assert!(red >= -1e-7, "negative reduced cost {red}");
                if s.x[j] > 1e-7 {
                    assert!(red.abs() < 1e-6, "x_{j} basic but reduced cost {red}");
                }
            }
            // complementary slackness on rows
            for i in 0..m {
                let slack: f64 =
                    a[i].iter().zip(&s.x).map(|(aij, xj)| aij * xj).sum::<f64>() - b[i];
                if slack > 1e-7 {
                    assert!(s.dual_rows[i].abs() < 1e-6, "slack row with dual");
                }
            }
        }
    }

    #[test]
    fn larger_random_feasible_lps_solve() {
        let mut rng = Rng::new(5);
        for _ in 0..5 {
            let n = 40;
            let m = 30;
            // feasible by construction: random x0 >= 0, b = A x0 + slack
            let x0: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.0, 1.0)).collect();
            let a: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
                .collect();
            let b: Vec<f64> = (0..m)
                .map(|i| {
                    a[i].iter().zip(&x0).map(|(v, x)| v * x).sum::<f64>()
                        + rng.uniform_in(0.0, 0.5)
                })
                .collect();
            let c: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.0, 1.0)).collect();
            let mut lp = Lp::minimize(c);
            for i in 0..m {
                lp.add_le(a[i].clone(), b[i]);
            }
            let s = lp.solve().unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            // feasibility of the reported point
            for i in 0..m {
                let lhs: f64 = a[i].iter().zip(&s.x).map(|(v, x)| v * x).sum();
                assert!(lhs <= b[i] + 1e-7);
            }
            assert!(s.x.iter().all(|&v| v >= -1e-9));
        }
    }
}
