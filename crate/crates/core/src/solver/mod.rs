//! Continuity method for `K^φ[H₀f] = γ·id`.
//!
//! For `ε ∈ (0, 1]` the perturbed equation `L_ε(f) = 0` is solved by Newton
//! on `F(f) = f·L_ε(f)`, warm-started down a geometric ε schedule. After the
//! smallest ε a final Newton solve at `ε = 0` either converges (a
//! Yang-Mills-Higgs metric `H₀f`) or drives `max |log f|` past the blow-up
//! threshold, in which case the retained iterates feed
//! [`extract_destabilizer`].

pub mod destabilizer;
pub mod gmres;
pub mod normalize;
pub mod residual;

use serde::{Deserialize, Serialize};

use crate::bundle::FlatHiggsBundle;
use crate::error::{Error, Result};
use crate::geometry::AffineTorus;
use crate::hermitian::{self, MetricField};
use crate::linalg;
use crate::{CMat, C64};

pub use destabilizer::{extract_destabilizer, threshold_projection, Destabilizer, DestabilizerReport, SIGMA_SCHEDULE};
pub use normalize::{normalize_background, NORMALIZATION_TOL};
pub use residual::{Problem, State};

/// Once below `newton_tol`, Newton keeps polishing until the residual stops
/// halving or drops below this.
const FLOOR_TOL: f64 = 1e-14;
/// A stagnating iterate within this factor of `newton_tol` is accepted as
/// converged to rounding.
const FLOOR_FACTOR: f64 = 10.0;
/// Lower bound on the zeroth-order shift of the preconditioner.
const PRECOND_FLOOR: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// First ε of the schedule.
    pub eps_max: f64,
    /// Last ε before the `ε = 0` solve.
    pub eps_min: f64,
    /// Geometric ratio between consecutive ε.
    pub eps_ratio: f64,
    /// Sup-norm tolerance on `f·L_ε(f)`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Threshold on `m_ε = max |log f|`.
    pub blowup_threshold: f64,
    /// Grid override; `None` keeps the torus grid.
    pub grid: Option<usize>,
    pub det_renormalize: bool,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_max: 1.0,
            eps_min: 1e-4,
            eps_ratio: 0.5,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            blowup_threshold: 12.0,
            grid: None,
            det_renormalize: true,
            gmres_restart: 50,
            gmres_max_iter: 500,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_max > 0.0 && self.eps_max <= 1.0) {
            return Err(Error::config("solver.eps_max", "must lie in (0, 1]"));
        }
        if !(self.eps_min > 0.0 && self.eps_min <= self.eps_max) {
            return Err(Error::config("solver.eps_min", "must lie in (0, eps_max]"));
        }
        if !(self.eps_ratio > 0.0 && self.eps_ratio < 1.0) {
            return Err(Error::config("solver.eps_ratio", "must lie in (0, 1)"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::config("solver.newton_tol", "must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::config("solver.newton_max_iter", "must be positive"));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::config("solver.blowup_threshold", "must be positive"));
        }
        if self.gmres_restart == 0 || self.gmres_max_iter == 0 {
            return Err(Error::config("solver.gmres_restart", "GMRES sizes must be positive"));
        }
        Ok(())
    }

    /// The positive part of the ε schedule.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = vec![self.eps_max];
        loop {
            let last = *out.last().unwrap();
            if last <= self.eps_min {
                break;
            }
            let next = last * self.eps_ratio;
            out.push(if next < self.eps_min { self.eps_min } else { next });
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    Blowup,
    Stalled,
}

/// One accepted solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub eps: f64,
    pub newton_iters: usize,
    pub gmres_iters: usize,
    /// `‖f·L_ε(f)‖∞` at acceptance.
    pub residual: f64,
    pub m_eps: f64,
    /// `max |det f - 1|` before renormalization.
    pub det_defect: f64,
    /// `∫ tr η̂` against the previous accepted step.
    pub trace_eta: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Iterate {
    pub eps: f64,
    pub f: Vec<CMat>,
}

#[derive(Clone, Debug)]
pub struct SolverTrace {
    pub status: SolverStatus,
    pub steps: Vec<StepRecord>,
    /// `m` after every accepted step, then after every `ε = 0` Newton iterate.
    pub m_history: Vec<f64>,
    pub h0: MetricField,
    pub gamma: f64,
    /// Last iterate reached.
    pub f: Vec<CMat>,
    /// On blow-up: the last two accepted iterates and the diverging one.
    pub retained: Vec<Iterate>,
    /// `‖K^φ[H₀f] - γ·id‖∞` for the last iterate.
    pub final_residual: f64,
    pub stall_reason: Option<String>,
}

impl SolverTrace {
    /// `H₀ f`.
    pub fn metric(&self) -> Result<MetricField> {
        MetricField::new(self.h0.values().iter().zip(&self.f).map(|(h, f)| linalg::hermitian_part(&(h * f))).collect())
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// `L_ε(f)` for the background `H₀`.
pub fn residual_l_eps(
    bundle: &FlatHiggsBundle,
    torus: &AffineTorus,
    h0: &MetricField,
    f: &[CMat],
    eps: f64,
) -> Result<Vec<CMat>> {
    let gamma = hermitian::einstein_factor(bundle, torus)?;
    Problem::new(bundle, torus, h0, gamma)?.residual(f, eps)
}

/// Apply-only handle for `Ξ = δ/δf [f·L_ε(f)]` at a fixed `f`.
pub struct Linearization<'a> {
    problem: Problem<'a>,
    state: State,
}

impl<'a> Linearization<'a> {
    pub fn new(bundle: &'a FlatHiggsBundle, torus: &'a AffineTorus, h0: &MetricField, f: &[CMat], eps: f64) -> Result<Self> {
        let gamma = hermitian::einstein_factor(bundle, torus)?;
        let problem = Problem::new(bundle, torus, h0, gamma)?;
        let state = problem.state(f, eps)?;
        Ok(Linearization { problem, state })
    }

    pub fn apply(&self, x: &[CMat]) -> Vec<CMat> {
        self.problem.xi(&self.state, x)
    }

    /// `f·L_ε(f)` at the base point.
    pub fn value(&self) -> Vec<CMat> {
        self.state.f.iter().zip(&self.state.l).map(|(f, l)| f * l).collect()
    }

    pub fn problem(&self) -> &Problem<'a> {
        &self.problem
    }
}

/// Spectral flat-Laplacian preconditioner on packed coordinates, with the
/// constant modes handled by an exact `r²×r²` block.
struct Preconditioner {
    block: usize,
    npts: usize,
    symbol: Vec<f64>,
    mode0: nalgebra::DMatrix<f64>,
}

impl Preconditioner {
    fn new(prob: &Problem, shift: f64, apply: &mut dyn FnMut(&[f64]) -> Vec<f64>) -> Self {
        let torus = prob.torus;
        let sp = torus.spectral();
        let gbar = torus.mean_metric_inv();
        let tau2 = (2.0 * std::f64::consts::PI).powi(2);
        let npts = prob.npts();
        let symbol = (0..npts)
            .map(|idx| {
                let m = sp.mode(idx);
                if m.iter().all(|&k| k == 0) {
                    return 0.0;
                }
                let mut q = 0.0;
                for a in 0..m.len() {
                    for b in 0..m.len() {
                        q += gbar[(a, b)] * (m[a] * m[b]) as f64;
                    }
                }
                1.0 / (0.25 * tau2 * q + shift.max(PRECOND_FLOOR))
            })
            .collect();
        let block = prob.block();
        let mut a = nalgebra::DMatrix::zeros(block, block);
        for c in 0..block {
            let mut v = vec![0.0; block * npts];
            v[c * npts..(c + 1) * npts].iter_mut().for_each(|x| *x = 1.0);
            let w = apply(&v);
            for row in 0..block {
                a[(row, c)] = w[row * npts..(row + 1) * npts].iter().sum::<f64>() / npts as f64;
            }
        }
        let mode0 = linalg::pinv_real(&a, 1e-12);
        Preconditioner { block, npts, symbol, mode0 }
    }

    fn apply(&self, sp: &crate::spectral::Spectral, v: &[f64]) -> Vec<f64> {
        let np = self.npts;
        let mut out = vec![0.0; v.len()];
        let mut means = nalgebra::DVector::zeros(self.block);
        for c in 0..self.block {
            let mut buf: Vec<C64> = v[c * np..(c + 1) * np].iter().map(|&x| C64::new(x, 0.0)).collect();
            sp.fft_nd(&mut buf);
            means[c] = buf[0].re / np as f64;
            for (z, s) in buf.iter_mut().zip(&self.symbol) {
                *z *= *s;
            }
            sp.ifft_nd(&mut buf);
            for (o, z) in out[c * np..(c + 1) * np].iter_mut().zip(&buf) {
                *o = z.re;
            }
        }
        let y = &self.mode0 * means;
        for c in 0..self.block {
            out[c * np..(c + 1) * np].iter_mut().for_each(|o| *o += y[c]);
        }
        out
    }
}

/// `Ŷ ↦ f̂^{-1/2} Ξ(X) f̂^{-1/2}` with `X̂ = f̂^{1/2} Ŷ f̂^{1/2}`, the Newton
/// system in coordinates relative to `f`. At `ε = 0` it is augmented by
/// `⟨tr Ŷ⟩·id`, which removes the scaling kernel.
fn scaled_xi(prob: &Problem, st: &State, sqrt: &[CMat], isqrt: &[CMat], augment: bool, v: &[f64]) -> Vec<f64> {
    let yhat = prob.unpack_hat(v);
    let xhat: Vec<CMat> = yhat.iter().zip(sqrt).map(|(y, s)| s * y * s).collect();
    let xi = prob.to_hat(&prob.xi(st, &prob.from_hat(&xhat)));
    let mut out: Vec<CMat> = xi.iter().zip(isqrt).map(|(x, si)| si * x * si).collect();
    if augment {
        let mean_tr = yhat.iter().map(|y| y.trace().re).sum::<f64>() / yhat.len() as f64;
        let id = linalg::identity(prob.rank()) * C64::new(mean_tr, 0.0);
        for o in out.iter_mut() {
            *o += &id;
        }
    }
    prob.pack_hat(&out)
}

enum NewtonEnd {
    Converged { state: State, iters: usize, gmres: usize, residual: f64 },
    Blowup { f: Vec<CMat> },
    Failed { f: Vec<CMat>, residual: f64, reason: String },
}

/// Newton on `F = f·L_ε(f)` from `f0`. At `ε = 0` the linearization is
/// augmented and each iterate is det-normalized; `monitor` receives every
/// accepted iterate and returns `true` to abort with blow-up.
fn newton(
    prob: &Problem,
    f0: Vec<CMat>,
    eps: f64,
    opts: &SolverOptions,
    monitor: &mut dyn FnMut(&State) -> bool,
) -> Result<NewtonEnd> {
    let zero_phase = eps == 0.0;
    let sp = prob.torus.spectral();
    let mut st = match prob.state(&f0, eps) {
        Ok(s) => s,
        Err(Error::NotPositive { .. }) => {
            return Ok(NewtonEnd::Failed { f: f0, residual: f64::INFINITY, reason: "initial iterate not positive".into() })
        }
        Err(e) => return Err(e),
    };
    let mut gmres_total = 0;
    for it in 0..=opts.newton_max_iter {
        let rhs = prob.packed_residual(&st);
        let res = sup(&rhs);
        if !res.is_finite() {
            return Ok(NewtonEnd::Failed { f: st.f, residual: res, reason: "non-finite residual".into() });
        }
        let polishing = res < opts.newton_tol;
        if polishing && (res < FLOOR_TOL || it == opts.newton_max_iter) {
            return Ok(NewtonEnd::Converged { state: st, iters: it, gmres: gmres_total, residual: res });
        }
        if it == opts.newton_max_iter {
            return Ok(NewtonEnd::Failed {
                f: st.f,
                residual: res,
                reason: format!("no convergence in {} Newton iterations", opts.newton_max_iter),
            });
        }
        let (sqrt, isqrt) = prob.half_powers(&st);
        let mut apply = |v: &[f64]| scaled_xi(prob, &st, &sqrt, &isqrt, zero_phase, v);
        let pre = Preconditioner::new(prob, eps, &mut apply);
        let mut precond = |v: &[f64]| pre.apply(sp, v);
        let fl: Vec<CMat> = st.f.iter().zip(&st.l).map(|(f, l)| f * l).collect();
        let scaled: Vec<CMat> = prob.to_hat(&fl).iter().zip(&isqrt).map(|(x, si)| -(si * x * si)).collect();
        let neg = prob.pack_hat(&scaled);
        let rtol = (1e-3f64).min(res).max(1e-13);
        let (step, out) = gmres::gmres(&mut apply, &mut precond, &neg, rtol, opts.gmres_restart, opts.gmres_max_iter);
        gmres_total += out.iterations;
        if !out.converged && out.relative_residual > 0.5 {
            return Ok(NewtonEnd::Failed {
                f: st.f,
                residual: res,
                reason: format!("linear solve stalled at relative residual {:e}", out.relative_residual),
            });
        }
        let yhat = prob.unpack_hat(&step);
        let mut t = 1.0;
        let next = loop {
            let trial: Vec<CMat> = yhat.iter().map(|y| y * C64::new(t, 0.0)).collect();
            let mut f = prob.symmetrize(&prob.exp_update(&sqrt, &trial));
            if zero_phase && opts.det_renormalize {
                f = prob.det_normalize(&f);
            }
            match prob.state(&f, eps) {
                Ok(s) => {
                    let r = sup(&prob.packed_residual(&s));
                    if r < (1.0 - 1e-4 * t) * res && !(polishing && r > 0.5 * res) {
                        break Some(s);
                    }
                }
                Err(Error::NotPositive { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
            if t < 1e-3 || polishing {
                break None;
            }
        };
        if next.is_none() && res < FLOOR_FACTOR * opts.newton_tol {
            // rounding floor of the residual evaluation
            return Ok(NewtonEnd::Converged { state: st, iters: it, gmres: gmres_total, residual: res });
        }
        match next {
            Some(s) => st = s,
            None => {
                return Ok(NewtonEnd::Failed { f: st.f, residual: res, reason: "line search found no decrease".into() })
            }
        }
        if monitor(&st) {
            return Ok(NewtonEnd::Blowup { f: st.f });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// `∫ (log det f' - log det f) / (ε' - ε)` against `ωⁿ/ν`, the difference
/// quotient of `∫ tr η` along the path.
fn trace_eta(prob: &Problem, f: &[CMat], f_next: &[CMat], de: f64) -> f64 {
    let torus = prob.torus;
    let n = torus.dim();
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let total: f64 = (0..f.len())
        .map(|p| {
            let t = (f_next[p].determinant().re.ln() - f[p].determinant().re.ln()) / de;
            t * fact * torus.metric_at(p).determinant()
        })
        .sum();
    total / (f.len() as f64 * torus.nu())
}

/// Continuity method from `H_init = I`.
pub fn continuity_solve(bundle: &FlatHiggsBundle, torus: &AffineTorus, opts: &SolverOptions) -> Result<SolverTrace> {
    continuity_solve_from(bundle, torus, &MetricField::identity(bundle.rank(), torus.npts()), opts)
}

/// Continuity method from an arbitrary initial metric.
pub fn continuity_solve_from(
    bundle: &FlatHiggsBundle,
    torus: &AffineTorus,
    h_init: &MetricField,
    opts: &SolverOptions,
) -> Result<SolverTrace> {
    opts.validate()?;
    if h_init.npts() != torus.npts() {
        return Err(Error::BadTorus(format!("initial metric has {} points, torus has {}", h_init.npts(), torus.npts())));
    }
    let h0 = normalize_background(bundle, torus, h_init)?;
    let gamma = hermitian::einstein_factor(bundle, torus)?;
    let prob = Problem::new(bundle, torus, &h0, gamma)?;
    let r = bundle.rank();
    let mut f: Vec<CMat> = vec![linalg::identity(r); torus.npts()];
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut m_history = Vec::new();
    let mut accepted: Vec<Iterate> = Vec::new();
    // previous accepted (ε, pre-renormalization f)
    let mut prev: Option<(f64, Vec<CMat>)> = None;

    let finish = |status, f: Vec<CMat>, steps, m_history, retained, stall_reason| -> Result<SolverTrace> {
        let metric = prob.metric(&f)?;
        let k = hermitian::mean_curvature(bundle, torus, &metric)?;
        let id = linalg::identity(r);
        let final_residual = k.iter().map(|m| linalg::max_abs(&(m - &id * C64::new(gamma, 0.0)))).fold(0.0, f64::max);
        Ok(SolverTrace {
            status,
            steps,
            m_history,
            h0: h0.clone(),
            gamma,
            f,
            retained,
            final_residual,
            stall_reason,
        })
    };
    let last_two = |accepted: &[Iterate]| accepted[accepted.len().saturating_sub(2)..].to_vec();

    let schedule = opts.schedule();
    let mut target = 0;
    let mut eps_prev: Option<f64> = None;
    let mut eps = schedule[0];
    loop {
        let end = newton(&prob, f.clone(), eps, opts, &mut |_| false)?;
        match end {
            NewtonEnd::Converged { state, iters, gmres, residual } => {
                let det_defect = prob.det_defect(&state);
                let raw = state.f.clone();
                let trace_eta = prev.as_ref().map(|(e0, f0)| trace_eta(&prob, f0, &raw, eps - e0));
                let fnew = if opts.det_renormalize { prob.det_normalize(&raw) } else { raw.clone() };
                let m = prob.m_of(&prob.state(&fnew, eps)?);
                steps.push(StepRecord { eps, newton_iters: iters, gmres_iters: gmres, residual, m_eps: m, det_defect, trace_eta });
                m_history.push(m);
                prev = Some((eps, raw));
                f = fnew;
                accepted.push(Iterate { eps, f: f.clone() });
                if accepted.len() > 2 {
                    accepted.remove(0);
                }
                if m > opts.blowup_threshold {
                    let retained = last_two(&accepted);
                    return finish(SolverStatus::Blowup, f, steps, m_history, retained, None);
                }
                eps_prev = Some(eps);
                while target < schedule.len() && schedule[target] >= eps {
                    target += 1;
                }
                if target == schedule.len() {
                    break;
                }
                eps = schedule[target];
            }
            NewtonEnd::Blowup { .. } => unreachable!("positive-ε monitor never aborts"),
            NewtonEnd::Failed { residual, reason, .. } => {
                let Some(ep) = eps_prev else {
                    return Err(Error::Stalled { eps, residual, reason });
                };
                let delta = ep - eps;
                if delta * 0.5 < 1e-3 * ep {
                    let reason = format!("step halving exhausted at eps = {eps:e}: {reason}");
                    return finish(SolverStatus::Stalled, f, steps, m_history, last_two(&accepted), Some(reason));
                }
                eps = ep - 0.5 * delta;
            }
        }
    }

    // ε = 0
    let threshold = opts.blowup_threshold;
    let mut zero_m = Vec::new();
    let mut monitor = |s: &State| {
        let m = prob.m_of(s);
        zero_m.push(m);
        m > threshold
    };
    let end = newton(&prob, f.clone(), 0.0, opts, &mut monitor)?;
    m_history.extend(zero_m);
    match end {
        NewtonEnd::Converged { state, iters, gmres, residual } => {
            let m = prob.m_of(&state);
            steps.push(StepRecord {
                eps: 0.0,
                newton_iters: iters,
                gmres_iters: gmres,
                residual,
                m_eps: m,
                det_defect: prob.det_defect(&state),
                trace_eta: None,
            });
            let trace = finish(SolverStatus::Converged, state.f, steps, m_history, Vec::new(), None)?;
            if trace.final_residual < 10.0 * opts.newton_tol {
                Ok(trace)
            } else {
                let reason = format!("curvature residual {:e} above 10 x newton_tol", trace.final_residual);
                Ok(SolverTrace { status: SolverStatus::Stalled, stall_reason: Some(reason), ..trace })
            }
        }
        NewtonEnd::Blowup { f: fd } => {
            let mut retained = last_two(&accepted);
            retained.push(Iterate { eps: 0.0, f: fd.clone() });
            finish(SolverStatus::Blowup, fd, steps, m_history, retained, None)
        }
        NewtonEnd::Failed { f: ff, residual, reason } => {
            let reason = format!("eps = 0 solve failed (residual {residual:e}): {reason}");
            let trace = finish(SolverStatus::Stalled, ff, steps, m_history, last_two(&accepted), Some(reason))?;
            if trace.final_residual < 10.0 * opts.newton_tol {
                // the curvature equation holds even though Newton did not certify it
                Ok(SolverTrace { status: SolverStatus::Converged, stall_reason: None, ..trace })
            } else {
                Ok(trace)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;

    fn random_f(prob: &Problem, seed: u64) -> Vec<CMat> {
        let fhat = scenario::random_metric(prob.torus, prob.rank(), 0.6, seed);
        prob.from_hat(fhat.values())
    }

    fn sup_diff(a: &[CMat], b: &[CMat]) -> f64 {
        a.iter().zip(b).map(|(x, y)| linalg::max_abs(&(x - y))).fold(0.0, f64::max)
    }

    #[test]
    fn residual_matches_mean_curvature_of_h0_f() {
        let c = scenario::skew_diagonalizable(2, 16).with_metric(crate::MetricSpec::SeparableSine { amplitude: 0.2 });
        let (t, b) = c.build().unwrap();
        let h0 = scenario::random_metric(&t, 2, 0.5, 3);
        let gamma = hermitian::einstein_factor(&b, &t).unwrap();
        let prob = Problem::new(&b, &t, &h0, gamma).unwrap();
        let f = random_f(&prob, 11);
        let eps = 0.3;
        let l = prob.residual(&f, eps).unwrap();
        let k = hermitian::mean_curvature(&b, &t, &prob.metric(&f).unwrap()).unwrap();
        let logs = prob.from_hat(&prob.to_hat(&f).iter().map(|m| linalg::herm_fn(m, f64::ln)).collect::<Vec<_>>());
        let expected: Vec<CMat> = (0..t.npts())
            .map(|p| &k[p] - linalg::identity(2) * C64::new(gamma, 0.0) + &logs[p] * C64::new(eps, 0.0))
            .collect();
        assert!(sup_diff(&l, &expected) < 1e-8, "{}", sup_diff(&l, &expected));
    }

    #[test]
    fn residual_at_scalar_f() {
        let (t, b) = scenario::jordan(2, 8).build().unwrap();
        let prob = Problem::new(&b, &t, &MetricField::identity(2, t.npts()), 0.0).unwrap();
        let c = 3.0f64;
        let f = vec![linalg::identity(2) * C64::new(c, 0.0); t.npts()];
        let l = prob.residual(&f, 0.25).unwrap();
        let expected: Vec<CMat> =
            prob.k0().iter().map(|k| k + linalg::identity(2) * C64::new(0.25 * c.ln(), 0.0)).collect();
        assert!(sup_diff(&l, &expected) < 1e-13);
    }

    #[test]
    fn xi_matches_finite_differences() {
        let (t, b) = scenario::jordan(2, 16).build().unwrap();
        let h0 = scenario::random_metric(&t, 2, 0.4, 5);
        let lin_f = {
            let prob = Problem::new(&b, &t, &h0, 0.0).unwrap();
            random_f(&prob, 8)
        };
        let lin = Linearization::new(&b, &t, &h0, &lin_f, 0.2).unwrap();
        let prob = lin.problem();
        let x = prob.from_hat(scenario::random_metric(&t, 2, 0.3, 9).values());
        let h = 1e-5;
        let shift = |s: f64| -> Vec<CMat> {
            let g: Vec<CMat> = lin_f.iter().zip(&x).map(|(a, b)| a + b * C64::new(s, 0.0)).collect();
            let l = prob.residual(&g, 0.2).unwrap();
            g.iter().zip(&l).map(|(a, b)| a * b).collect()
        };
        let (plus, minus) = (shift(h), shift(-h));
        let fd: Vec<CMat> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / C64::new(2.0 * h, 0.0)).collect();
        let exact = lin.apply(&x);
        let norm = |v: &[CMat]| v.iter().map(|m| linalg::frob(m).powi(2)).sum::<f64>().sqrt();
        let diff: Vec<CMat> = fd.iter().zip(&exact).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) / norm(&exact) < 1e-6, "{}", norm(&diff) / norm(&exact));
        let zero = vec![linalg::zeros(2); t.npts()];
        assert_eq!(norm(&lin.apply(&zero)), 0.0);
    }

    #[test]
    fn schedule_ends_at_eps_min() {
        let s = SolverOptions::default().schedule();
        assert_eq!(s[0], 1.0);
        assert_eq!(*s.last().unwrap(), 1e-4);
        assert!(s.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn unknown_option_is_rejected() {
        let err = serde_json::from_str::<SolverOptions>(r#"{"eps_minimum": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("eps_minimum"));
    }
}
