//! Infeasible-start primal–dual interior-point method (HKM direction with a
//! Mehrotra predictor–corrector) for SDPs in the dual form
//!
//! ```text
//! maximize bᵀy  s.t.  C_j − Σ_i y_i A_ij ⪰ 0   (dense blocks)
//!                     c_lp − A_lp y ≥ 0        (linear rows)
//! ```

use nalgebra::{Cholesky, LU};

use crate::linalg::{lambda_min, symmetrize, Mat, Vector};

/// Iterations without halving the error before a loose point is accepted.
const STALL_ITERS: usize = 8;

pub(crate) struct DenseBlock {
    pub c: Mat,
    /// `(i, A_ij)` for the variables that touch this block.
    pub a: Vec<(usize, Mat)>,
}

pub(crate) struct DualForm {
    pub m: usize,
    pub b: Vector,
    pub blocks: Vec<DenseBlock>,
    pub lp_c: Vector,
    /// `k × m`.
    pub lp_a: Mat,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmSettings {
    pub tol: f64,
    pub loose_tol: f64,
    pub max_iter: usize,
}

#[derive(Debug)]
pub(crate) enum IpmExit {
    Converged { loose: bool },
    Stopped,
    Unbounded,
    Failed(String),
}

#[derive(Debug)]
pub(crate) struct IpmResult {
    pub y: Vector,
    pub exit: IpmExit,
    pub iterations: usize,
}

struct Iterate {
    x: Vec<Mat>,
    s: Vec<Mat>,
    xl: Vector,
    sl: Vector,
    y: Vector,
}

struct Residuals {
    rp: Vector,
    rd: Vec<Mat>,
    rdl: Vector,
}

struct Direction {
    dx: Vec<Mat>,
    ds: Vec<Mat>,
    dxl: Vector,
    dsl: Vector,
    dy: Vector,
}

impl DualForm {
    fn apply_a(&self, x: &[Mat], xl: &Vector) -> Vector {
        let mut out = self.lp_a.tr_mul(xl);
        for (blk, xj) in self.blocks.iter().zip(x) {
            for (i, a) in &blk.a {
                out[*i] += a.dot(xj);
            }
        }
        out
    }

    fn apply_at_block(&self, j: usize, y: &Vector) -> Mat {
        let blk = &self.blocks[j];
        let d = blk.c.nrows();
        let mut out = Mat::zeros(d, d);
        for (i, a) in &blk.a {
            if y[*i] != 0.0 {
                out += a * y[*i];
            }
        }
        out
    }

    fn dims(&self) -> usize {
        self.blocks.iter().map(|b| b.c.nrows()).sum::<usize>() + self.lp_c.len()
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let rp = &self.b - self.apply_a(&it.x, &it.xl);
        let rd = (0..self.blocks.len())
            .map(|j| &self.blocks[j].c - &it.s[j] - self.apply_at_block(j, &it.y))
            .collect();
        let rdl = &self.lp_c - &it.sl - &self.lp_a * &it.y;
        Residuals { rp, rd, rdl }
    }

    fn initial(&self) -> Iterate {
        let m = self.m;
        let mut x = Vec::new();
        let mut s = Vec::new();
        for blk in &self.blocks {
            let d = blk.c.nrows();
            let df = d as f64;
            let mut norm_a = vec![0.0; m];
            for (i, a) in &blk.a {
                norm_a[*i] = a.norm();
            }
            let xi = (0..m)
                .map(|i| df * (1.0 + self.b[i].abs()) / (1.0 + norm_a[i]))
                .fold(10.0_f64.max(df.sqrt()), f64::max);
            let eta = norm_a
                .iter()
                .copied()
                .fold(10.0_f64.max(df.sqrt()).max(blk.c.norm()), f64::max);
            x.push(Mat::identity(d, d) * xi);
            s.push(Mat::identity(d, d) * eta);
        }
        let k = self.lp_c.len();
        let kf = k as f64;
        let (xl, sl) = if k > 0 {
            let col_norm: Vec<f64> = (0..m).map(|i| self.lp_a.column(i).norm()).collect();
            let xi = (0..m)
                .map(|i| kf * (1.0 + self.b[i].abs()) / (1.0 + col_norm[i]))
                .fold(10.0_f64.max(kf.sqrt()), f64::max);
            let eta = col_norm
                .iter()
                .copied()
                .fold(10.0_f64.max(kf.sqrt()).max(self.lp_c.norm()), f64::max);
            (Vector::from_element(k, xi), Vector::from_element(k, eta))
        } else {
            (Vector::zeros(0), Vector::zeros(0))
        };
        Iterate {
            x,
            s,
            xl,
            sl,
            y: Vector::zeros(m),
        }
    }
}

fn inverse_spd(m: &Mat) -> Option<Mat> {
    Cholesky::new(m.clone()).map(|c| c.inverse())
}

/// Largest `α` with `x + α·dx ⪰ 0`, infinite when the direction never leaves
/// the cone.
fn max_step_psd(x: &Mat, dx: &Mat) -> f64 {
    let Some(chol) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = chol.l();
    let Some(half) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(w) = l.solve_lower_triangular(&half.transpose()) else {
        return 0.0;
    };
    let lmin = lambda_min(&w);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_step_lp(x: &Vector, dx: &Vector) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Newton {
    s_inv: Vec<Mat>,
    factor: Factor,
}

enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn solve(&self, h: &Vector) -> Option<Vector> {
        match self {
            Factor::Chol(c) => Some(c.solve(h)),
            Factor::Lu(l) => l.solve(h),
        }
    }
}

fn schur(form: &DualForm, it: &Iterate) -> Option<Newton> {
    let m = form.m;
    let mut big = Mat::zeros(m, m);
    let mut s_inv = Vec::with_capacity(form.blocks.len());
    for (j, blk) in form.blocks.iter().enumerate() {
        let si = inverse_spd(&it.s[j])?;
        for (k, ak) in &blk.a {
            let bk = &it.x[j] * ak * &si;
            for (i, ai) in &blk.a {
                big[(*i, *k)] += ai.dot(&bk);
            }
        }
        s_inv.push(si);
    }
    if form.lp_c.len() > 0 {
        let ratio = it.xl.component_div(&it.sl);
        let mut scaled = form.lp_a.clone();
        for (r, mut row) in scaled.row_iter_mut().enumerate() {
            row *= ratio[r];
        }
        big += form.lp_a.tr_mul(&scaled);
    }
    let big = symmetrize(&big);
    let factor = match Cholesky::new(big.clone()) {
        Some(c) => Factor::Chol(c),
        None => {
            let diag_max = big.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let mut reg = big.clone();
            for i in 0..m {
                reg[(i, i)] += 1e-13 * diag_max.max(1e-300);
            }
            match Cholesky::new(reg) {
                Some(c) => Factor::Chol(c),
                None => Factor::Lu(LU::new(big)),
            }
        }
    };
    Some(Newton { s_inv, factor })
}

fn direction(
    form: &DualForm,
    it: &Iterate,
    res: &Residuals,
    newton: &Newton,
    rc: &[Mat],
    rcl: &Vector,
) -> Option<Direction> {
    let mut h = res.rp.clone();
    let mut tmp = Vec::with_capacity(form.blocks.len());
    for (j, blk) in form.blocks.iter().enumerate() {
        let t = &it.x[j] * &res.rd[j] * &newton.s_inv[j] - &rc[j];
        for (i, a) in &blk.a {
            h[*i] += a.dot(&t);
        }
        tmp.push(t);
    }
    if form.lp_c.len() > 0 {
        let t = it.xl.component_mul(&res.rdl).component_div(&it.sl) - rcl;
        h += form.lp_a.tr_mul(&t);
    }
    let dy = newton.factor.solve(&h)?;
    if dy.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut ds = Vec::with_capacity(form.blocks.len());
    let mut dx = Vec::with_capacity(form.blocks.len());
    for j in 0..form.blocks.len() {
        let dsj = &res.rd[j] - form.apply_at_block(j, &dy);
        let dxj = symmetrize(&(&rc[j] - &it.x[j] * &dsj * &newton.s_inv[j]));
        ds.push(dsj);
        dx.push(dxj);
    }
    let dsl = &res.rdl - &form.lp_a * &dy;
    let dxl = rcl - it.xl.component_mul(&dsl).component_div(&it.sl);
    Some(Direction {
        dx,
        ds,
        dxl,
        dsl,
        dy,
    })
}

fn step_lengths(it: &Iterate, dir: &Direction) -> (f64, f64) {
    let mut ap = max_step_lp(&it.xl, &dir.dxl);
    let mut ad = max_step_lp(&it.sl, &dir.dsl);
    for j in 0..it.x.len() {
        ap = ap.min(max_step_psd(&it.x[j], &dir.dx[j]));
        ad = ad.min(max_step_psd(&it.s[j], &dir.ds[j]));
    }
    (ap, ad)
}

fn inner(it: &Iterate) -> f64 {
    it.x.iter().zip(&it.s).map(|(x, s)| x.dot(s)).sum::<f64>() + it.xl.dot(&it.sl)
}

/// Runs the method. `stop` sees the dual iterate after each step and may end
/// the run early by returning `true`.
pub(crate) fn solve(
    form: &DualForm,
    settings: IpmSettings,
    stop: &mut dyn FnMut(&Vector) -> bool,
) -> IpmResult {
    // Variables are rescaled so that every column of the constraint operator
    // has unit norm, and the objective is normalized. Without this a variable
    // that enters only through a small coefficient (ρ next to P·Ã terms)
    // makes the first Newton steps explode.
    let mut col = vec![0.0_f64; form.m];
    for blk in &form.blocks {
        for (i, a) in &blk.a {
            col[*i] += a.norm_squared();
        }
    }
    for i in 0..form.m {
        col[i] = (col[i] + form.lp_a.column(i).norm_squared()).sqrt();
        if !(col[i] > 0.0) {
            col[i] = 1.0;
        }
    }
    let norm_b = form.b.norm();
    let b_scale = if norm_b > 0.0 { norm_b } else { 1.0 };
    let scaled = DualForm {
        m: form.m,
        b: Vector::from_iterator(form.m, (0..form.m).map(|i| form.b[i] / col[i] / b_scale)),
        blocks: form
            .blocks
            .iter()
            .map(|blk| DenseBlock {
                c: blk.c.clone(),
                a: blk.a.iter().map(|(i, a)| (*i, a / col[*i])).collect(),
            })
            .collect(),
        lp_c: form.lp_c.clone(),
        lp_a: {
            let mut a = form.lp_a.clone();
            for (i, mut c) in a.column_iter_mut().enumerate() {
                c /= col[i];
            }
            a
        },
    };
    let to_plain = |y: &Vector| Vector::from_iterator(y.len(), y.iter().zip(&col).map(|(v, c)| v / c));
    let mut stop_plain = |y: &Vector| stop(&to_plain(y));
    let mut res = solve_scaled(&scaled, settings, &mut stop_plain);
    res.y = to_plain(&res.y);
    res
}

fn solve_scaled(
    form: &DualForm,
    settings: IpmSettings,
    stop: &mut dyn FnMut(&Vector) -> bool,
) -> IpmResult {
    let nu = form.dims().max(1) as f64;
    let mut it = form.initial();
    let norm_b = form.b.norm();
    let norm_c = (form.blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>()
        + form.lp_c.norm_squared())
    .sqrt();
    let mut best_loose: Option<Vector> = None;
    let mut best_err = f64::INFINITY;
    // Best objective among iterates whose slack is exactly dual feasible.
    let mut best_feasible: Option<(Vector, f64)> = None;
    let mut last_progress = 0;

    for iter in 0..settings.max_iter {
        let res = form.residuals(&it);
        let mu = inner(&it) / nu;
        let pobj = form
            .blocks
            .iter()
            .zip(&it.x)
            .map(|(b, x)| b.c.dot(x))
            .sum::<f64>()
            + form.lp_c.dot(&it.xl);
        let dobj = form.b.dot(&it.y);
        let pinf = res.rp.norm() / (1.0 + norm_b);
        let dinf = (res.rd.iter().map(|r| r.norm_squared()).sum::<f64>()
            + res.rdl.norm_squared())
        .sqrt()
            / (1.0 + norm_c);
        // The duality gap is measured by ⟨X, S⟩ rather than pobj − dobj:
        // with a large y the latter is dominated by yᵀRp once the primal
        // residual stagnates, while y itself is already a good dual point.
        let comp = mu * nu / (1.0 + pobj.abs() + dobj.abs());
        let err = pinf.max(dinf).max(comp);
        log::trace!(
            "ipm {iter}: pobj={pobj:.6e} dobj={dobj:.6e} pinf={pinf:.2e} dinf={dinf:.2e} comp={comp:.2e}"
        );
        if err < 0.5 * best_err {
            best_err = err;
            last_progress = iter;
        }
        if best_loose.is_some() && iter - last_progress >= STALL_ITERS {
            return finish_stalled(best_loose, it.y, iter, "no progress");
        }

        if iter > 0 && stop(&it.y) {
            return IpmResult {
                y: it.y.clone(),
                exit: IpmExit::Stopped,
                iterations: iter,
            };
        }
        if err < settings.tol {
            return IpmResult {
                y: it.y.clone(),
                exit: IpmExit::Converged { loose: false },
                iterations: iter,
            };
        }
        if err < settings.loose_tol && dinf < settings.tol {
            best_loose = Some(it.y.clone());
        }
        if dinf < settings.tol && best_feasible.as_ref().map_or(true, |(_, o)| dobj > *o) {
            best_feasible = Some((it.y.clone(), dobj));
        }
        if it.y.amax() > 1e12 || (dobj > 1e12 * (1.0 + norm_b) && dinf < 1e-6) {
            return IpmResult {
                y: it.y.clone(),
                exit: IpmExit::Unbounded,
                iterations: iter,
            };
        }

        let Some(newton) = schur(form, &it) else {
            return finish_stalled(best_loose.or(best_feasible.map(|b| b.0)), it.y, iter, "singular slack matrix");
        };

        // predictor
        let rc: Vec<Mat> = it.x.iter().map(|x| -x).collect();
        let rcl = -&it.xl;
        let Some(pred) = direction(form, &it, &res, &newton, &rc, &rcl) else {
            return finish_stalled(best_loose.or(best_feasible.map(|b| b.0)), it.y, iter, "singular Schur complement");
        };
        let (ap, ad) = step_lengths(&it, &pred);
        let ap1 = ap.min(1.0);
        let ad1 = ad.min(1.0);
        let mut after = 0.0;
        for j in 0..it.x.len() {
            after += (&it.x[j] + &pred.dx[j] * ap1).dot(&(&it.s[j] + &pred.ds[j] * ad1));
        }
        after += (&it.xl + &pred.dxl * ap1).dot(&(&it.sl + &pred.dsl * ad1));
        let ratio = (after / (mu * nu)).clamp(0.0, 1.0);
        let expon = (3.0 * ap1.min(ad1).powi(2)).max(1.0);
        let sigma = ratio.powf(expon).min(1.0);

        // corrector
        let rc: Vec<Mat> = (0..it.x.len())
            .map(|j| {
                let si = &newton.s_inv[j];
                si * (sigma * mu) - &it.x[j] - &pred.dx[j] * &pred.ds[j] * si
            })
            .collect();
        let rcl = it.sl.map(|v| sigma * mu / v)
            - &it.xl
            - pred.dxl.component_mul(&pred.dsl).component_div(&it.sl);
        let Some(corr) = direction(form, &it, &res, &newton, &rc, &rcl) else {
            return finish_stalled(best_loose.or(best_feasible.map(|b| b.0)), it.y, iter, "singular Schur complement");
        };
        let (ap, ad) = step_lengths(&it, &corr);
        let gamma = 0.9 + 0.09 * ap.min(ad).min(1.0);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            return finish_stalled(best_loose.or(best_feasible.map(|b| b.0)), it.y, iter, "step length collapsed");
        }
        for j in 0..it.x.len() {
            it.x[j] = symmetrize(&(&it.x[j] + &corr.dx[j] * ap));
            it.s[j] = symmetrize(&(&it.s[j] + &corr.ds[j] * ad));
        }
        it.xl += &corr.dxl * ap;
        it.sl += &corr.dsl * ad;
        it.y += &corr.dy * ad;
    }
    finish_stalled(best_loose.or(best_feasible.map(|b| b.0)), it.y, settings.max_iter, "iteration limit reached")
}

fn finish_stalled(
    best_loose: Option<Vector>,
    y: Vector,
    iterations: usize,
    why: &str,
) -> IpmResult {
    match best_loose {
        Some(y) => IpmResult {
            y,
            exit: IpmExit::Converged { loose: true },
            iterations,
        },
        None => IpmResult {
            y,
            exit: IpmExit::Failed(why.to_string()),
            iterations,
        },
    }
}
