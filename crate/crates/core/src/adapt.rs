//! Greedy distance minimization over a generator pool.
//!
//! Each iteration line-searches every generator from the current state,
//! keeps the generator/angle pair with the smallest resulting distance and
//! applies `exp(θ Ô)`. Because every generator satisfies `Ô³ = -Ô`, the RDM
//! along a line is an exact trigonometric polynomial in `θ`:
//!
//! `ρ(θ) = ρ(0) + (cos θ - 1) N₁ + sin θ N₂ + sin²θ N₃ + sin θ cos θ N₄`
//!
//! so the whole line search runs on a handful of scalars per generator.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::StateVector;
use crate::pool::{apply_generator, Generator, GeneratorAction};
use crate::rdm::{ProjectedTarget, RdmMatrix, RdmTable};
use crate::scalar::{Real, C};
use crate::scan::{ScanPlan, Scratch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Target body rank.
    pub p: usize,
    /// Stop when `|D_k - D_{k-1}| <= delta`.
    pub delta: f64,
    pub k_max: usize,
    /// Line search runs over `[-theta_window, theta_window]`.
    pub theta_window: f64,
    pub line_search_tol: f64,
    /// Distances within this of the best count as ties (lowest id wins).
    pub tie_tol: f64,
    /// Equispaced derivative probes used to bracket minima.
    pub probes: usize,
    /// Worker threads for the pool scan; `None` or 1 scans sequentially.
    pub threads: Option<usize>,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            p: 1,
            delta: 1e-8,
            k_max: 5000,
            theta_window: std::f64::consts::PI,
            line_search_tol: 1e-10,
            tie_tol: 1e-12,
            probes: 32,
            threads: None,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.p == 1 || self.p == 2) {
            return bad("p must be 1 or 2");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1");
        }
        if !(self.theta_window > 0.0) {
            return bad("theta_window must be positive");
        }
        if !(self.line_search_tol > 0.0) || self.tie_tol < 0.0 {
            return bad("tolerances must be positive");
        }
        if self.probes < 2 {
            return bad("probes must be at least 2");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry<T: Real = f64> {
    pub k: usize,
    pub generator_id: usize,
    pub theta: T,
    pub distance: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StallDiagnostic<T: Real = f64> {
    /// Up to the last ten trace distances, oldest first.
    pub last_distances: Vec<T>,
    /// Largest minus smallest of `last_distances`.
    pub spread: T,
}

#[derive(Debug, Clone)]
pub struct ProbeResult<T: Real = f64> {
    pub d_min: T,
    pub initial_distance: T,
    pub final_state: StateVector<T>,
    pub trace: Vec<TraceEntry<T>>,
    /// `true` when the delta criterion fired, `false` when `k_max` ran out.
    pub converged: bool,
    pub stall: StallDiagnostic<T>,
}

/// `D(θ) = d0 + Σ g_k f_k(θ) + Σ G_kl f_k(θ) f_l(θ)` with
/// `f = [cos θ - 1, sin θ, sin²θ, sin θ cos θ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigModel<T: Real> {
    pub d0: T,
    pub g: [T; 4],
    pub gram: [[T; 4]; 4],
}

impl<T: Real> TrigModel<T> {
    fn basis(theta: T) -> ([T; 4], [T; 4]) {
        let (s, c) = theta.sin_cos();
        let f = [c - T::one(), s, s * s, s * c];
        let df = [-s, c, T::lit(2.0) * s * c, c * c - s * s];
        (f, df)
    }

    pub fn value(&self, theta: T) -> T {
        let (f, _) = Self::basis(theta);
        let mut d = self.d0;
        for k in 0..4 {
            d += self.g[k] * f[k];
            for l in 0..4 {
                d += self.gram[k][l] * f[k] * f[l];
            }
        }
        d
    }

    pub fn derivative(&self, theta: T) -> T {
        let (f, df) = Self::basis(theta);
        let mut d = T::zero();
        for k in 0..4 {
            d += self.g[k] * df[k];
            for l in 0..4 {
                d += self.gram[k][l] * (df[k] * f[l] + f[k] * df[l]);
            }
        }
        d
    }

    /// Global minimizer on `[-window, window]` by derivative bracketing.
    /// Falls back to `θ = 0` unless a strictly lower value is found.
    pub fn minimize(&self, window: T, probes: usize, tol: T) -> (T, T) {
        let zero_slack = T::lit(64.0) * T::epsilon() * (self.d0.abs() + T::one());
        let mut best = (T::zero(), self.d0);
        let consider = |theta: T, best: &mut (T, T)| {
            let v = self.value(theta);
            if v < best.1 - zero_slack || (v < best.1 && best.0 != T::zero()) {
                *best = (theta, v);
            }
        };
        let step = T::lit(2.0) * window / T::count(probes);
        let grid: Vec<T> = (0..=probes).map(|i| -window + step * T::count(i)).collect();
        let slopes: Vec<T> = grid.iter().map(|&t| self.derivative(t)).collect();
        if slopes[0] > T::zero() {
            consider(grid[0], &mut best);
        }
        if slopes[probes] < T::zero() {
            consider(grid[probes], &mut best);
        }
        for i in 0..probes {
            if slopes[i] < T::zero() && slopes[i + 1] >= T::zero() {
                let theta = self.refine(grid[i], grid[i + 1], slopes[i], slopes[i + 1], tol);
                consider(theta, &mut best);
            }
        }
        best
    }

    /// Root of the derivative in `[lo, hi]` with `D'(lo) < 0 <= D'(hi)`.
    fn refine(&self, mut lo: T, mut hi: T, mut dlo: T, mut dhi: T, tol: T) -> T {
        let half = T::lit(0.5);
        for _ in 0..200 {
            if hi - lo <= tol {
                break;
            }
            // secant step, guarded by bisection
            let mut mid = lo - dlo * (hi - lo) / (dhi - dlo);
            let span = hi - lo;
            if !(mid > lo + span * T::lit(0.05) && mid < hi - span * T::lit(0.05)) {
                mid = (lo + hi) * half;
            }
            let dm = self.derivative(mid);
            if dm < T::zero() {
                lo = mid;
                dlo = dm;
            } else {
                hi = mid;
                dhi = dm;
            }
            if dm == T::zero() {
                return mid;
            }
        }
        if dlo.abs() < dhi.abs() {
            lo
        } else {
            hi
        }
    }
}

/// Rotates `amps` in place by `exp(θ Ô)`.
pub(crate) fn rotate<T: Real>(action: &GeneratorAction, theta: T, amps: &mut [C<T>]) {
    let (s, c) = theta.sin_cos();
    for pair in &action.pairs {
        let (f, t) = (pair.from as usize, pair.to as usize);
        let ss = if pair.negative { -s } else { s };
        let (pf, pt) = (amps[f], amps[t]);
        amps[f] = pf.scale(c) - pt.scale(ss);
        amps[t] = pt.scale(c) + pf.scale(ss);
    }
}

/// `exp(θ Ô) |Ψ⟩`, exact.
pub fn apply_exponential<T: Real>(g: &Generator, theta: T, state: &StateVector<T>) -> Result<StateVector<T>> {
    let action = GeneratorAction::new(g, state.basis())?;
    let mut out = state.clone();
    rotate(&action, theta, out.amplitudes_mut());
    Ok(out)
}

/// Minimizes `D(θ)` for one generator: returns `(θ*, D(θ*))`.
pub fn line_search<T: Real>(
    state: &StateVector<T>,
    g: &Generator,
    target: &RdmMatrix<T>,
    cfg: &AdaptConfig,
) -> Result<(T, T)> {
    let ctx = Context::new(state, target, cfg)?;
    let plan = ScanPlan::new(state.basis(), std::slice::from_ref(g), cfg.p)?;
    let amps = state.amplitudes();
    let (residual, d0) = ctx.residual(&ctx.table.transition_flat(amps, amps));
    let gm = plan.bath_products(amps);
    let mut sc = plan.scratch();
    Ok(match plan.model(0, &gm, &residual, d0, &mut sc) {
        Some(m) => m.minimize(T::lit(cfg.theta_window), cfg.probes, T::lit(cfg.line_search_tol)),
        None => (T::zero(), d0),
    })
}

/// Analytic `dD/dθ` at `θ = 0`, assembled from the transition matrix
/// `⟨Ψ|E_uv Ô|Ψ⟩`.
pub fn distance_gradient<T: Real>(state: &StateVector<T>, g: &Generator, target: &RdmMatrix<T>) -> Result<T> {
    let cfg = AdaptConfig { p: target.p(), ..Default::default() };
    let ctx = Context::new(state, target, &cfg)?;
    let rho = ctx.table.transition_flat(state.amplitudes(), state.amplitudes());
    let (residual, _) = ctx.residual(&rho);
    let o_psi = apply_generator(g, state)?;
    let t = ctx.table.transition_flat(state.amplitudes(), o_psi.amplitudes());
    let dim = ctx.table.dim;
    let mut grad = T::zero();
    for r in 0..dim {
        for c in 0..dim {
            // dρ = T + T†
            let d = t[r * dim + c] + t[c * dim + r].conj();
            grad += (residual[r * dim + c].conj() * d).re;
        }
    }
    Ok(grad * T::lit(2.0))
}

/// Exact distance from the RDM of `state` to `target`.
pub fn state_distance<T: Real>(state: &StateVector<T>, target: &RdmMatrix<T>) -> Result<T> {
    let cfg = AdaptConfig { p: target.p(), ..Default::default() };
    let ctx = Context::new(state, target, &cfg)?;
    let rho = ctx.table.transition_flat(state.amplitudes(), state.amplitudes());
    Ok(ctx.residual(&rho).1)
}

struct Context<T: Real> {
    table: Arc<RdmTable>,
    target: ProjectedTarget<T>,
    target_flat: Vec<C<T>>,
}

impl<T: Real> Context<T> {
    fn new(state: &StateVector<T>, target: &RdmMatrix<T>, cfg: &AdaptConfig) -> Result<Self> {
        if target.p() != cfg.p {
            return Err(Error::Config(format!("target has p={} but config has p={}", target.p(), cfg.p)));
        }
        let layout = state.layout();
        if target.n_modes() != layout.n_system_modes {
            return Err(Error::ShapeMismatch(format!(
                "target over {} modes, system register has {}",
                target.n_modes(),
                layout.n_system_modes
            )));
        }
        let table = state.basis().rdm_table(cfg.p)?;
        let target = ProjectedTarget::new(target);
        let target_flat = target.matrix.data().iter().copied().collect();
        Ok(Context { table, target, target_flat })
    }

    fn residual(&self, rho: &[C<T>]) -> (Vec<C<T>>, T) {
        let r: Vec<C<T>> = rho.iter().zip(&self.target_flat).map(|(a, b)| a - b).collect();
        let d = r.iter().map(|x| x.norm_sqr()).sum::<T>() + self.target.offset;
        (r, d)
    }
}

/// Greedy minimization from `initial` toward `target`.
pub fn adapt_minimize<T: Real>(
    initial: &StateVector<T>,
    target: &RdmMatrix<T>,
    pool: &[Generator],
    cfg: &AdaptConfig,
) -> Result<ProbeResult<T>> {
    adapt_minimize_with(initial, target, pool, cfg, |_| {})
}

/// As [`adapt_minimize`], calling `observe` after every iteration.
pub fn adapt_minimize_with<T: Real, F: FnMut(&TraceEntry<T>)>(
    initial: &StateVector<T>,
    target: &RdmMatrix<T>,
    pool: &[Generator],
    cfg: &AdaptConfig,
    mut observe: F,
) -> Result<ProbeResult<T>> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let ctx = Context::new(initial, target, cfg)?;
    let basis = initial.basis();
    let actions = pool.iter().map(|g| GeneratorAction::new(g, basis)).collect::<Result<Vec<_>>>()?;
    let plan = ScanPlan::new(basis, pool, cfg.p)?;

    let threads = cfg.threads.unwrap_or(1);
    let workers = if threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let window = T::lit(cfg.theta_window);
    let tol = T::lit(cfg.line_search_tol);
    let tie = T::lit(cfg.tie_tol);
    let delta = T::lit(cfg.delta);

    let mut amps = initial.amplitudes().to_vec();
    let rho = ctx.table.transition_flat(&amps, &amps);
    let (mut residual, mut d_prev) = ctx.residual(&rho);
    if !d_prev.is_finite() {
        return Err(Error::NonFinite);
    }
    let initial_distance = d_prev;
    let mut trace: Vec<TraceEntry<T>> = Vec::new();
    let mut converged = false;
    let mut scratch = plan.scratch();

    for k in 1..=cfg.k_max {
        let gm = plan.bath_products(&amps);
        let evaluate = |i: usize, sc: &mut Scratch<T>| match plan.model(i, &gm, &residual, d_prev, sc) {
            Some(m) => m.minimize(window, cfg.probes, tol),
            None => (T::zero(), d_prev),
        };
        let results: Vec<(T, T)> = match &workers {
            Some(wp) => wp.install(|| {
                (0..pool.len())
                    .into_par_iter()
                    .map_init(|| plan.scratch(), |sc, i| evaluate(i, sc))
                    .collect()
            }),
            None => (0..pool.len()).map(|i| evaluate(i, &mut scratch)).collect(),
        };

        let best_d = results.iter().map(|r| r.1).fold(T::infinity(), T::min);
        if !best_d.is_finite() {
            return Err(Error::NonFinite);
        }
        let chosen = results.iter().position(|r| r.1 <= best_d + tie).expect("non-empty pool");
        let theta = results[chosen].0;

        let mut next = amps.clone();
        rotate(&actions[chosen], theta, &mut next);
        let rho = ctx.table.transition_flat(&next, &next);
        let (next_residual, d_new) = ctx.residual(&rho);

        let entry = if d_new <= d_prev {
            amps = next;
            residual = next_residual;
            TraceEntry { k, generator_id: pool[chosen].id, theta, distance: d_new }
        } else {
            // rounding made the step worse than standing still
            TraceEntry { k, generator_id: pool[chosen].id, theta: T::zero(), distance: d_prev }
        };
        observe(&entry);
        trace.push(entry);
        let change = (d_prev - entry.distance).abs();
        d_prev = entry.distance;
        if change <= delta {
            converged = true;
            break;
        }
    }

    let last: Vec<T> = trace.iter().rev().take(10).rev().map(|e| e.distance).collect();
    let spread = last.iter().copied().fold(T::neg_infinity(), T::max) - last.iter().copied().fold(T::infinity(), T::min);
    let final_state = StateVector::from_amplitudes(basis.clone(), amps)?;
    Ok(ProbeResult {
        d_min: d_prev,
        initial_distance,
        final_state,
        trace,
        converged,
        stall: StallDiagnostic { last_distances: last, spread },
    })
}
