//! Full-batch minimizers: Adam and two-loop L-BFGS with a strong-Wolfe
//! cubic-interpolation line search. Both drive anything implementing
//! [`Trainable`]: the closed-form Stribeck model and KAN networks.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Workspace};
use crate::data::FrictionDataset;
use crate::error::{Error, Result};
use crate::friction::StribeckParams;
use crate::kan::KanNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adam,
    Lbfgs,
}

/// Optimizer settings shared by every fit entry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub algorithm: Algorithm,
    /// Step size; for L-BFGS this is the initial line-search step.
    pub learning_rate: f64,
    pub iterations: usize,
    /// Number of curvature pairs kept by L-BFGS.
    pub lbfgs_history: usize,
    /// Echoed into reports; both algorithms are deterministic full-batch
    /// methods, so the seed only matters to callers generating data.
    pub seed: u64,
    /// Loss-recording stride for the trace.
    pub record_every: usize,
}

impl FitConfig {
    /// Adam defaults: lr 0.01, 30000 iterations.
    pub fn adam() -> Self {
        FitConfig {
            algorithm: Algorithm::Adam,
            learning_rate: 0.01,
            iterations: 30_000,
            lbfgs_history: 10,
            seed: 0,
            record_every: 100,
        }
    }

    /// L-BFGS defaults: initial step 1.0, history 10.
    pub fn lbfgs(iterations: usize) -> Self {
        FitConfig {
            algorithm: Algorithm::Lbfgs,
            learning_rate: 1.0,
            iterations,
            lbfgs_history: 10,
            seed: 0,
            record_every: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.iterations == 0 || self.lbfgs_history == 0 || self.record_every == 0 {
            return Err(Error::invalid(
                "iterations, lbfgs_history and record_every must be >= 1",
            ));
        }
        Ok(())
    }
}

/// Loss curve of one fit. `loss_history` pairs are (iteration, mse) with
/// strictly increasing iterations; the entry at `iterations` is the loss of
/// the returned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub loss_history: Vec<(usize, f64)>,
    pub final_loss: f64,
    pub wall_time: Duration,
}

/// Anything the optimizers can drive: a flat parameter vector plus a
/// loss/gradient oracle.
pub trait Trainable {
    fn param_count(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    /// Loss at the current parameters; writes the gradient into `grad`.
    fn loss_and_grad(&mut self, data: &FrictionDataset, grad: &mut Vec<f64>) -> Result<f64>;
}

/// Minimizes the model's loss on `data` in place.
///
/// The returned parameters are the lowest-loss iterate encountered, not
/// necessarily the last one; Adam in particular can enter a small limit
/// cycle around a minimum once converged.
pub fn fit<T: Trainable>(
    model: &mut T,
    data: &FrictionDataset,
    config: &FitConfig,
) -> Result<FitTrace> {
    fit_observed(model, data, config, &mut |_, _: &T| Ok(()))
}

/// Like [`fit`], additionally invoking `observer(completed_steps, model)`
/// after every iteration, with the model parameters in sync.
pub fn fit_observed<T: Trainable>(
    model: &mut T,
    data: &FrictionDataset,
    config: &FitConfig,
    observer: &mut dyn FnMut(usize, &T) -> Result<()>,
) -> Result<FitTrace> {
    config.validate()?;
    data.validate()?;
    match config.algorithm {
        Algorithm::Adam => fit_adam(model, data, config, observer),
        Algorithm::Lbfgs => fit_lbfgs(model, data, config, observer),
    }
}

fn diverged(iteration: usize, history: Vec<(usize, f64)>, start: Instant) -> Error {
    let final_loss = history.last().map(|&(_, l)| l).unwrap_or(f64::NAN);
    Error::Diverged {
        iteration,
        trace: FitTrace { loss_history: history, final_loss, wall_time: start.elapsed() },
    }
}

fn fit_adam<T: Trainable>(
    model: &mut T,
    data: &FrictionDataset,
    config: &FitConfig,
    observer: &mut dyn FnMut(usize, &T) -> Result<()>,
) -> Result<FitTrace> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    let start = Instant::now();
    let mut p = model.params();
    let dim = p.len();
    let mut grad = Vec::with_capacity(dim);
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut history: Vec<(usize, f64)> = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut best_p = p.clone();

    for t in 1..=config.iterations {
        let loss = model.loss_and_grad(data, &mut grad)?;
        if !loss.is_finite() {
            return Err(diverged(t - 1, history, start));
        }
        if loss < best_loss {
            best_loss = loss;
            best_p.copy_from_slice(&p);
        }
        if (t - 1) % config.record_every == 0 {
            history.push((t - 1, loss));
        }
        let bc1 = 1.0 - BETA1.powi(t as i32);
        let bc2 = 1.0 - BETA2.powi(t as i32);
        for i in 0..dim {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            p[i] -= config.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + EPS);
        }
        model.set_params(&p)?;
        observer(t, model)?;
    }

    let mut final_loss = model.loss_and_grad(data, &mut grad)?;
    if !final_loss.is_finite() {
        return Err(diverged(config.iterations, history, start));
    }
    if best_loss < final_loss {
        model.set_params(&best_p)?;
        final_loss = best_loss;
    }
    history.push((config.iterations, final_loss));
    Ok(FitTrace { loss_history: history, final_loss, wall_time: start.elapsed() })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fit_lbfgs<T: Trainable>(
    model: &mut T,
    data: &FrictionDataset,
    config: &FitConfig,
    observer: &mut dyn FnMut(usize, &T) -> Result<()>,
) -> Result<FitTrace> {
    let start = Instant::now();
    let mut p = model.params();
    let dim = p.len();
    let mut grad = Vec::with_capacity(dim);
    let mut history: Vec<(usize, f64)> = Vec::new();

    let mut f = model.loss_and_grad(data, &mut grad)?;
    if !f.is_finite() {
        return Err(diverged(0, history, start));
    }
    let mut g = grad.clone();
    let mut best_loss = f;
    let mut best_p = p.clone();

    // Curvature pairs (s, y, 1/y·s), newest last.
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut d = vec![0.0; dim];
    let mut xt = vec![0.0; dim];

    for step in 1..=config.iterations {
        if (step - 1) % config.record_every == 0 {
            history.push((step - 1, f));
        }
        if g.iter().all(|&gi| gi.abs() <= 1e-14) {
            break;
        }

        two_loop_direction(&g, &pairs, &mut d);
        let mut gtd = dot(&g, &d);
        if !gtd.is_finite() || gtd > -1e-16 {
            // Not a descent direction; drop the history and restart from
            // steepest descent.
            pairs.clear();
            for i in 0..dim {
                d[i] = -g[i];
            }
            gtd = dot(&g, &d);
            if gtd >= 0.0 {
                break;
            }
        }

        let t0 = if step == 1 {
            let g1: f64 = g.iter().map(|x| x.abs()).sum();
            config.learning_rate * (1.0 / g1).min(1.0)
        } else {
            config.learning_rate
        };

        let mut eval = |t: f64, g_out: &mut Vec<f64>| -> Result<f64> {
            for i in 0..dim {
                xt[i] = p[i] + t * d[i];
            }
            model.set_params(&xt)?;
            let loss = model.loss_and_grad(data, g_out)?;
            Ok(if loss.is_finite() { loss } else { f64::INFINITY })
        };
        let ls = strong_wolfe(&mut eval, t0, &d, f, &g, gtd)?;

        if ls.t == 0.0 || !ls.f.is_finite() {
            // No acceptable step along this direction; restore and stop.
            model.set_params(&p)?;
            break;
        }

        let mut s = vec![0.0; dim];
        let mut y = vec![0.0; dim];
        for i in 0..dim {
            s[i] = ls.t * d[i];
            p[i] += s[i];
            y[i] = ls.g[i] - g[i];
        }
        model.set_params(&p)?;
        let ys = dot(&y, &s);
        if ys > 1e-10 {
            if pairs.len() == config.lbfgs_history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / ys));
        }
        f = ls.f;
        g.copy_from_slice(&ls.g);
        if f < best_loss {
            best_loss = f;
            best_p.copy_from_slice(&p);
        }
        observer(step, model)?;
    }

    let mut final_loss = f;
    if best_loss < final_loss {
        model.set_params(&best_p)?;
        final_loss = best_loss;
    }
    if !final_loss.is_finite() {
        return Err(diverged(config.iterations, history, start));
    }
    history.push((config.iterations, final_loss));
    Ok(FitTrace { loss_history: history, final_loss, wall_time: start.elapsed() })
}

fn two_loop_direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, d: &mut [f64]) {
    d.copy_from_slice(g);
    if pairs.is_empty() {
        for di in d.iter_mut() {
            *di = -*di;
        }
        return;
    }
    let mut alphas = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let alpha = rho * dot(s, d);
        alphas[k] = alpha;
        for (di, yi) in d.iter_mut().zip(y) {
            *di -= alpha * yi;
        }
    }
    let (s_last, y_last, _) = pairs.back().expect("nonempty history");
    let gamma = dot(s_last, y_last) / dot(y_last, y_last);
    for di in d.iter_mut() {
        *di *= gamma;
    }
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let beta = rho * dot(y, d);
        for (di, si) in d.iter_mut().zip(s) {
            *di += (alphas[k] - beta) * si;
        }
    }
    for di in d.iter_mut() {
        *di = -*di;
    }
}

struct LineSearchResult {
    f: f64,
    g: Vec<f64>,
    t: f64,
}

/// Strong-Wolfe line search (c1 = 1e-4, c2 = 0.9) with cubic interpolation:
/// a bracketing phase followed by zoom. Returns the best point found if the
/// conditions cannot be met within the evaluation budget.
fn strong_wolfe(
    eval: &mut dyn FnMut(f64, &mut Vec<f64>) -> Result<f64>,
    t0: f64,
    d: &[f64],
    f0: f64,
    g0: &[f64],
    gtd0: f64,
) -> Result<LineSearchResult> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    const MAX_LS: usize = 25;
    const TOL_CHANGE: f64 = 1e-9;

    let d_norm = d.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let mut t = t0;
    let mut g_new = Vec::with_capacity(g0.len());
    let mut f_new = eval(t, &mut g_new)?;
    let mut gtd_new = dot(&g_new, d);
    let mut ls_iter = 0;

    // Bracketing phase: grow t until the minimum is enclosed.
    let mut t_prev = 0.0;
    let mut f_prev = f0;
    let mut g_prev = g0.to_vec();
    let mut gtd_prev = gtd0;
    let mut done = false;

    let mut bracket: [f64; 2];
    let mut bracket_f: [f64; 2];
    let mut bracket_g: [Vec<f64>; 2];
    let mut bracket_gtd: [f64; 2];

    loop {
        if f_new > f0 + C1 * t * gtd0 || (ls_iter > 1 && f_new >= f_prev) {
            bracket = [t_prev, t];
            bracket_f = [f_prev, f_new];
            bracket_g = [g_prev, g_new.clone()];
            bracket_gtd = [gtd_prev, gtd_new];
            break;
        }
        if gtd_new.abs() <= -C2 * gtd0 {
            return Ok(LineSearchResult { f: f_new, g: g_new, t });
        }
        if gtd_new >= 0.0 {
            bracket = [t_prev, t];
            bracket_f = [f_prev, f_new];
            bracket_g = [g_prev, g_new.clone()];
            bracket_gtd = [gtd_prev, gtd_new];
            break;
        }
        if ls_iter >= MAX_LS {
            bracket = [0.0, t];
            bracket_f = [f0, f_new];
            bracket_g = [g0.to_vec(), g_new.clone()];
            bracket_gtd = [gtd0, gtd_new];
            break;
        }
        let min_step = t + 0.01 * (t - t_prev);
        let max_step = t * 10.0;
        let next = cubic_interpolate(t_prev, f_prev, gtd_prev, t, f_new, gtd_new)
            .clamp(min_step, max_step);
        t_prev = t;
        f_prev = f_new;
        g_prev = std::mem::take(&mut g_new);
        gtd_prev = gtd_new;
        t = next;
        f_new = eval(t, &mut g_new)?;
        gtd_new = dot(&g_new, d);
        ls_iter += 1;
    }

    // Zoom phase: shrink the bracket around a strong-Wolfe point.
    let mut insufficient = false;
    let (mut low, mut high) = if bracket_f[0] <= bracket_f[1] { (0, 1) } else { (1, 0) };
    while !done && ls_iter < MAX_LS {
        if (bracket[1] - bracket[0]).abs() * d_norm < TOL_CHANGE {
            break;
        }
        let (lo_t, hi_t) = (bracket[0].min(bracket[1]), bracket[0].max(bracket[1]));
        t = cubic_interpolate(
            bracket[0],
            bracket_f[0],
            bracket_gtd[0],
            bracket[1],
            bracket_f[1],
            bracket_gtd[1],
        );
        // Guard against stalling at a bracket edge (mirrors the usual
        // insufficient-progress safeguard).
        let eps = 0.1 * (hi_t - lo_t);
        if (hi_t - t).min(t - lo_t) < eps {
            if insufficient || t >= hi_t || t <= lo_t {
                t = if (t - hi_t).abs() < (t - lo_t).abs() { hi_t - eps } else { lo_t + eps };
                insufficient = false;
            } else {
                insufficient = true;
            }
        } else {
            insufficient = false;
        }

        f_new = eval(t, &mut g_new)?;
        gtd_new = dot(&g_new, d);
        ls_iter += 1;

        if f_new > f0 + C1 * t * gtd0 || f_new >= bracket_f[low] {
            bracket[high] = t;
            bracket_f[high] = f_new;
            bracket_g[high] = g_new.clone();
            bracket_gtd[high] = gtd_new;
            let swap = bracket_f[0] > bracket_f[1];
            (low, high) = if swap { (1, 0) } else { (0, 1) };
        } else {
            if gtd_new.abs() <= -C2 * gtd0 {
                done = true;
            } else if gtd_new * (bracket[high] - bracket[low]) >= 0.0 {
                bracket[high] = bracket[low];
                bracket_f[high] = bracket_f[low];
                bracket_g[high] = bracket_g[low].clone();
                bracket_gtd[high] = bracket_gtd[low];
            }
            bracket[low] = t;
            bracket_f[low] = f_new;
            bracket_g[low] = std::mem::take(&mut g_new);
            bracket_gtd[low] = gtd_new;
        }
    }

    Ok(LineSearchResult { f: bracket_f[low], g: bracket_g[low].clone(), t: bracket[low] })
}

/// Cubic Hermite minimizer of two (position, value, slope) samples; falls
/// back to the midpoint when the interpolant has no interior minimum.
fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64) -> f64 {
    let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_square = d1 * d1 - g1 * g2;
    if d2_square >= 0.0 {
        let d2 = d2_square.sqrt();
        let min_pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if min_pos.is_finite() {
            min_pos.clamp(lo, hi)
        } else {
            (lo + hi) / 2.0
        }
    } else {
        (lo + hi) / 2.0
    }
}

/// Fits a KAN network: freezes its normalization maps from the data, then
/// minimizes the MSE over all spline, base and scaler parameters.
pub fn fit_network(
    net: &mut KanNetwork,
    data: &FrictionDataset,
    config: &FitConfig,
) -> Result<FitTrace> {
    fit_network_observed(net, data, config, &mut |_, _| Ok(()))
}

/// [`fit_network`] with a per-iteration observer (used for checkpoint
/// snapshots mid-training).
pub fn fit_network_observed(
    net: &mut KanNetwork,
    data: &FrictionDataset,
    config: &FitConfig,
    observer: &mut dyn FnMut(usize, &KanNetwork) -> Result<()>,
) -> Result<FitTrace> {
    net.freeze_normalization(data)?;
    let mut model = KanFit { net, ws: Workspace::default() };
    fit_observed(&mut model, data, config, &mut |step, m: &KanFit| observer(step, m.net))
}

/// [`Trainable`] adapter binding a network to a reusable gradient workspace.
struct KanFit<'a> {
    net: &'a mut KanNetwork,
    ws: Workspace,
}

impl Trainable for KanFit<'_> {
    fn param_count(&self) -> usize {
        self.net.total_parameters()
    }

    fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.net.read_params(&mut out);
        out
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.net.total_parameters() {
            return Err(Error::invalid("parameter vector length mismatch"));
        }
        self.net.write_params(params);
        Ok(())
    }

    fn loss_and_grad(&mut self, data: &FrictionDataset, grad: &mut Vec<f64>) -> Result<f64> {
        autodiff::loss_and_grad_flat(self.net, &data.velocities, &data.torques, &mut self.ws, grad)
    }
}

/// Fits the smoothed Stribeck model to the data, starting from `init`.
/// `k3` stays positive via an internal log reparameterization.
pub fn fit_known_form(
    data: &FrictionDataset,
    init: &StribeckParams,
    config: &FitConfig,
) -> Result<(StribeckParams, FitTrace)> {
    init.validate()?;
    data.validate()?;
    let mut model = StribeckFit {
        params: [init.k1, init.k2, init.k3.ln(), init.k4],
        smoothing: init.smoothing,
    };
    let trace = fit(&mut model, data, config)?;
    Ok((model.to_params()?, trace))
}

struct StribeckFit {
    /// (k1, k2, ln k3, k4).
    params: [f64; 4],
    smoothing: f64,
}

impl StribeckFit {
    fn to_params(&self) -> Result<StribeckParams> {
        let p = StribeckParams {
            k1: self.params[0],
            k2: self.params[1],
            k3: self.params[2].exp(),
            k4: self.params[3],
            smoothing: self.smoothing,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Trainable for StribeckFit {
    fn param_count(&self) -> usize {
        4
    }

    fn params(&self) -> Vec<f64> {
        self.params.to_vec()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != 4 {
            return Err(Error::invalid("Stribeck fit expects 4 parameters"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn loss_and_grad(&mut self, data: &FrictionDataset, grad: &mut Vec<f64>) -> Result<f64> {
        let k3 = self.params[2].exp();
        let p = StribeckParams {
            k1: self.params[0],
            k2: self.params[1],
            k3,
            k4: self.params[3],
            smoothing: self.smoothing,
        };
        let (loss, gs) = autodiff::stribeck_loss_and_gradients(&p, data)?;
        let g = gs.params.expect("closed-form gradient");
        grad.clear();
        // Chain rule for the log reparameterization: d/d(ln k3) = k3 d/dk3.
        grad.extend_from_slice(&[g[0], g[1], g[2] * k3, g[3]]);
        Ok(loss)
    }
}
