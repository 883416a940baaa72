//! Primal barrier method with a block-reduced Newton system.
//!
//! Every constraint apart from the column bounds touches the columns only
//! through the block sums `x = A·z`, so the Newton system is reduced to the
//! block values and the allocation shares. With `D` the diagonal bound
//! Hessian and `G_b = Σ_{c∈b} 1/D_c`:
//!
//! ```text
//! [G⁻¹ + Hxx   Hxw] [dx]   [−G⁻¹·A·D⁻¹·gz]
//! [Hwx         Hww] [dw] = [−gw          ]
//! dz_c = (G_b⁻¹·(dx_b + Σ_{c'∈b} gz_c'/D_c') − gz_c)/D_c
//! ```

use super::linalg::SymMatrix;
use super::rate::Perspective;
use super::{dot, perspective, ConvexInstance, ConvexPoint, SolveStatus, SolverResult, SolverSettings};
use crate::scalar::Scalar;

/// Centering stops once `λ²/μ` falls below this.
const CENTERED: f64 = 1e-10;
/// Newton steps allowed per barrier weight.
const MAX_CENTERING: usize = 200;
/// Below this `λ²/μ` the full Newton step is taken without a decrease test.
const QUADRATIC: f64 = 0.1;

struct State<S> {
    row_slack: Vec<S>,
    margin: Vec<S>,
    persp: Vec<Perspective<S>>,
    time_rest: S,
    energy_rest: S,
}

struct Step<S> {
    dir: Vec<S>,
    lambda2: S,
}

struct Engine<'a, S> {
    inst: &'a ConvexInstance<S>,
    lo: S,
    hi: S,
    width: usize,
    cols: usize,
    groups: usize,
}

impl<'a, S: Scalar> Engine<'a, S> {
    fn new(inst: &'a ConvexInstance<S>) -> Self {
        let (lo, hi) = inst.bounds();
        Self { inst, lo, hi, width: inst.width(), cols: inst.columns(), groups: inst.rate_rows.len() }
    }

    /// Slacks at `p`, or `None` if `p` is not strictly feasible.
    fn state(&self, p: &ConvexPoint<S>) -> Option<State<S>> {
        let pos = |v: S| v > S::zero() && v.is_finite();
        if !p.selection.iter().all(|&z| pos(z - self.lo) && pos(self.hi - z)) {
            return None;
        }
        let x = self.inst.block_values(&p.selection);
        let row_slack: Vec<S> = self.inst.rows.iter().map(|r| r.rhs - dot(&r.terms, &x)).collect();
        if !row_slack.iter().all(|&s| pos(s)) {
            return None;
        }
        let (mut margin, mut persp) = (Vec::with_capacity(self.groups), Vec::with_capacity(self.groups));
        let (mut time_rest, mut energy_rest) = (S::one(), S::one());
        for (i, r) in self.inst.rate_rows.iter().enumerate() {
            let (tau, eps) = (p.time_share[i], p.energy_share[i]);
            if !(pos(tau) && pos(eps)) {
                return None;
            }
            let f = perspective(r.snr, tau, eps);
            let m = r.capacity * f.value - dot(&r.terms, &x);
            if !pos(m) {
                return None;
            }
            margin.push(m);
            persp.push(f);
            time_rest = time_rest - tau;
            energy_rest = energy_rest - eps;
        }
        if self.groups > 0 && !(pos(time_rest) && pos(energy_rest)) {
            return None;
        }
        Some(State { row_slack, margin, persp, time_rest, energy_rest })
    }

    /// Barrier objective `−c·z + μ·Σ −ln(slack)` and a magnitude for roundoff.
    fn phi(&self, p: &ConvexPoint<S>, st: &State<S>, mu: S) -> (S, S) {
        let mut logs = S::zero();
        for &z in &p.selection {
            logs = logs + (z - self.lo).ln() + (self.hi - z).ln();
        }
        for &s in st.row_slack.iter().chain(&st.margin) {
            logs = logs + s.ln();
        }
        for i in 0..self.groups {
            logs = logs + p.time_share[i].ln() + p.energy_share[i].ln();
        }
        if self.groups > 0 {
            logs = logs + st.time_rest.ln() + st.energy_rest.ln();
        }
        let obj = self.inst.objective_value(&p.selection);
        (-obj - mu * logs, obj.abs() + mu * logs.abs())
    }

    fn newton(&self, p: &ConvexPoint<S>, st: &State<S>, mu: S) -> Option<Step<S>> {
        let inst = self.inst;
        let (nb, ni, w) = (inst.blocks, self.groups, self.width);
        let mut gx = vec![S::zero(); nb];
        for (r, &s) in inst.rows.iter().zip(&st.row_slack) {
            for &(b, a) in &r.terms {
                gx[b] = gx[b] + mu * a / s;
            }
        }
        for (r, &m) in inst.rate_rows.iter().zip(&st.margin) {
            for &(b, a) in &r.terms {
                gx[b] = gx[b] + mu * a / m;
            }
        }
        let mut gz = Vec::with_capacity(self.cols);
        let mut dg = Vec::with_capacity(self.cols);
        for (c, &z) in p.selection.iter().enumerate() {
            let (sl, su) = (z - self.lo, self.hi - z);
            gz.push(-inst.objective[c] - mu / sl + mu / su + gx[c / w]);
            dg.push(mu / (sl * sl) + mu / (su * su));
        }
        let mut gt = Vec::with_capacity(ni);
        let mut ge = Vec::with_capacity(ni);
        for i in 0..ni {
            let (r, f, m) = (&inst.rate_rows[i], &st.persp[i], st.margin[i]);
            let (tau, eps) = (p.time_share[i], p.energy_share[i]);
            gt.push(-mu / tau + mu / st.time_rest - mu * r.capacity * f.d_time / m);
            ge.push(-mu / eps + mu / st.energy_rest - mu * r.capacity * f.d_energy / m);
        }

        let n = nb + 2 * ni;
        let mut k = SymMatrix::zeros(n);
        let mut ginv = Vec::with_capacity(nb);
        let mut rhs = vec![S::zero(); n];
        for b in 0..nb {
            let cols = b * w..(b + 1) * w;
            let g: S = dg[cols.clone()].iter().map(|&d| S::one() / d).sum();
            let gi = S::one() / g;
            ginv.push(gi);
            k.add(b, b, gi);
            rhs[b] = -gi * cols.map(|c| gz[c] / dg[c]).sum::<S>();
        }
        for (r, &s) in inst.rows.iter().zip(&st.row_slack) {
            k.add_outer(&r.terms, mu / (s * s));
        }
        let (tau_at, eps_at) = (|i: usize| nb + i, |i: usize| nb + ni + i);
        for i in 0..ni {
            let (r, f, m) = (&inst.rate_rows[i], &st.persp[i], st.margin[i]);
            let mut grad: Vec<(usize, S)> = r.terms.iter().map(|&(b, a)| (b, -a)).collect();
            grad.push((tau_at(i), r.capacity * f.d_time));
            grad.push((eps_at(i), r.capacity * f.d_energy));
            k.add_outer(&grad, mu / (m * m));
            let (vt, ve) = f.curv_dir;
            k.add_outer(&[(tau_at(i), vt), (eps_at(i), ve)], mu * r.capacity * f.curv_weight / m);
            let (tau, eps) = (p.time_share[i], p.energy_share[i]);
            k.add(tau_at(i), tau_at(i), mu / (tau * tau));
            k.add(eps_at(i), eps_at(i), mu / (eps * eps));
            rhs[tau_at(i)] = -gt[i];
            rhs[eps_at(i)] = -ge[i];
        }
        if ni > 0 {
            let taus: Vec<(usize, S)> = (0..ni).map(|i| (tau_at(i), S::one())).collect();
            let epss: Vec<(usize, S)> = (0..ni).map(|i| (eps_at(i), S::one())).collect();
            k.add_outer(&taus, mu / (st.time_rest * st.time_rest));
            k.add_outer(&epss, mu / (st.energy_rest * st.energy_rest));
        }

        let d = k.solve(&rhs)?;
        let mut dir = Vec::with_capacity(self.cols + 2 * ni);
        for b in 0..nb {
            // dz_c = π_c·(dx_b + Σ_{c'≠c} t_c') − t_c·Σ_{c'≠c} π_c' with
            // π_c = 1/(D_c·G_b) and t_c = gz_c/D_c; no large terms cancel
            let cols = b * w..(b + 1) * w;
            let pi: Vec<S> = cols.clone().map(|c| ginv[b] / dg[c]).collect();
            let t: Vec<S> = cols.clone().map(|c| gz[c] / dg[c]).collect();
            for j in 0..w {
                let (mut pi_rest, mut t_rest) = (S::zero(), S::zero());
                for k in (0..w).filter(|&k| k != j) {
                    pi_rest = pi_rest + pi[k];
                    t_rest = t_rest + t[k];
                }
                dir.push(pi[j] * (d[b] + t_rest) - t[j] * pi_rest);
            }
        }
        dir.extend_from_slice(&d[nb..]);
        if dir.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let lambda2 = -gz.iter().chain(&gt).chain(&ge).zip(&dir).map(|(&g, &v)| g * v).sum::<S>();
        Some(Step { dir, lambda2: lambda2.max(S::zero()) })
    }

    /// Largest step keeping every linear constraint strictly satisfied.
    fn max_linear_step(&self, p: &ConvexPoint<S>, dir: &[S]) -> S {
        let mut alpha = S::infinity();
        let mut limit = |slack: S, rate: S| {
            if rate > S::zero() {
                alpha = alpha.min(slack / rate);
            }
        };
        for (c, &z) in p.selection.iter().enumerate() {
            limit(z - self.lo, -dir[c]);
            limit(self.hi - z, dir[c]);
        }
        let dx = self.inst.block_values(&dir[..self.cols]);
        let x = self.inst.block_values(&p.selection);
        for r in &self.inst.rows {
            limit(r.rhs - dot(&r.terms, &x), dot(&r.terms, &dx));
        }
        if self.groups > 0 {
            let (dt, de) = dir[self.cols..].split_at(self.groups);
            for i in 0..self.groups {
                limit(p.time_share[i], -dt[i]);
                limit(p.energy_share[i], -de[i]);
            }
            let tau_sum: S = p.time_share.iter().copied().sum();
            let eps_sum: S = p.energy_share.iter().copied().sum();
            limit(S::one() - tau_sum, dt.iter().copied().sum());
            limit(S::one() - eps_sum, de.iter().copied().sum());
        }
        alpha
    }

    fn shifted(&self, p: &ConvexPoint<S>, dir: &[S], alpha: S) -> ConvexPoint<S> {
        let step = |v: &[S], d: &[S]| v.iter().zip(d).map(|(&a, &b)| a + alpha * b).collect::<Vec<S>>();
        let (dz, dw) = dir.split_at(self.cols);
        let (dt, de) = dw.split_at(self.groups);
        ConvexPoint {
            selection: step(&p.selection, dz),
            time_share: step(&p.time_share, dt),
            energy_share: step(&p.energy_share, de),
        }
    }

    /// Backtracking along `step`; `None` when no acceptable step exists.
    fn line_search(&self, p: &ConvexPoint<S>, st: &State<S>, step: &Step<S>, mu: S, settings: &SolverSettings<S>) -> Option<ConvexPoint<S>> {
        let mut alpha = (S::lit(0.99) * self.max_linear_step(p, &step.dir)).min(S::one());
        let guarded = step.lambda2 / mu >= S::lit(QUADRATIC);
        let (f0, mag) = self.phi(p, st, mu);
        let noise = S::epsilon() * S::lit(64.0) * mag;
        while alpha > S::lit(1e-20) {
            let q = self.shifted(p, &step.dir, alpha);
            if let Some(qs) = self.state(&q) {
                let (f, _) = self.phi(&q, &qs, mu);
                let target = if guarded { f0 - settings.armijo * alpha * step.lambda2 } else { f0 };
                if f <= target + noise {
                    return Some(q);
                }
            }
            alpha = alpha * settings.backtrack;
        }
        None
    }
}

pub(super) fn run<S: Scalar>(inst: &ConvexInstance<S>, settings: &SolverSettings<S>, start: ConvexPoint<S>) -> SolverResult<S> {
    let eng = Engine::new(inst);
    let cscale = inst.objective.iter().fold(S::one(), |acc, c| acc.max(c.abs()));
    let m = S::of_usize(inst.constraint_count());
    let mut mu = settings.mu_init * cscale;
    let mut p = start;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut reached_gap = false;
    'outer: loop {
        let mut steps = 0;
        let mut last = S::infinity();
        loop {
            if iterations >= settings.max_iters {
                break 'outer;
            }
            let st = eng.state(&p).expect("iterates stay strictly feasible");
            let Some(step) = eng.newton(&p, &st, mu) else { break };
            iterations += 1;
            let dec = step.lambda2 / mu;
            // inside the quadratic region the decrement at least halves
            // until roundoff in the Newton system takes over
            let floor = last < S::lit(QUADRATIC) && dec > S::lit(0.5) * last;
            if dec <= S::lit(CENTERED) || floor || steps >= MAX_CENTERING {
                break;
            }
            last = dec;
            steps += 1;
            match eng.line_search(&p, &st, &step, mu, settings) {
                Some(q) => p = q,
                None => break,
            }
        }
        trace.push(inst.objective_value(&p.selection));
        if m * mu <= settings.gap_tol {
            reached_gap = true;
            break;
        }
        mu = mu * settings.mu_factor;
    }

    let st = eng.state(&p).expect("iterates stay strictly feasible");
    let (dec, stationarity) = match eng.newton(&p, &st, mu) {
        Some(step) => (step.lambda2 / mu, step.lambda2.sqrt() / cscale),
        None => (S::infinity(), S::infinity()),
    };
    let objective = inst.objective_value(&p.selection);
    let kkt_residual = mu.max(stationarity);
    let status = if reached_gap && dec <= S::lit(1e-3) && kkt_residual <= settings.kkt_tol {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIterations
    };
    // gap of an exactly centered point, widened by the residual Newton decrement
    let gap = mu * (m + (m * dec.min(S::one())).sqrt());
    SolverResult {
        levels: inst.block_values(&p.selection),
        point: p,
        objective,
        dual_bound: objective + gap,
        status,
        kkt_residual,
        iterations,
        barrier_trace: trace,
    }
}
