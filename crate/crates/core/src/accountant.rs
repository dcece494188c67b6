//! Moments accounting for subsampled Gaussian, Laplace and Γ-PLRV noise.
//!
//! All three mechanisms share the same Poisson-subsampling expansion of the
//! order-`lambda` moment:
//!
//! ```text
//! alpha(lambda) = ln sum_{eta=0}^{lambda+1} C(lambda+1, eta) (1-zeta)^(lambda+1-eta) zeta^eta * T(eta)
//! ```
//!
//! where `T(eta)` is `exp((eta^2 - eta) / (2 sigma^2))` for the Gaussian,
//! `F(x, eta) = [eta e^{(eta-1)x/b} + (eta-1) e^{-eta x/b}] / (2 eta - 1)`
//! for Laplace with sensitivity `x`, and for Γ-PLRV noise the same mixture
//! with the exponentials replaced by the Gamma MGF of the inverse scale:
//! `G(x, eta) = b1 M_u((eta-1)x) + b2 M_u(-eta x)`, `M_u(t) = (1 - t theta)^(-k)`.
//!
//! The `eta = 0` and `eta = 1` terms are exactly one and the weights sum to
//! one, so the moment is evaluated as `ln(1 + sum_{eta>=2} w_eta (T(eta) - 1))`
//! with the inner sum in log space. This keeps full relative precision when
//! the moment is tiny, as it is for most coordinates of a large model.
//!
//! Laplace and PLRV moments are per coordinate; the multivariate bound sums
//! the per-coordinate moment over the majorization vector
//! `x_i = C (sqrt(i) - sqrt(i-1))`, `i = 1..=N`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::majorization::{coordinate_at, coordinate_unchecked};
use crate::numerics::log_binomial;
use crate::parallel::sum_range;
use crate::params::{
    max_admissible_lambda, AccountingJob, GammaPlrvParams, GaussianParams, LaplaceParams, LogMomentCurve, Mechanism,
};

/// Branch coefficients and MGF arguments for one moment index `eta` at
/// sensitivity `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTermContext {
    pub eta: u32,
    /// Weight of the `M_u((eta-1) x)` branch.
    pub b1: f64,
    /// Weight of the `M_u(-eta x)` branch.
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl MomentTermContext {
    pub fn new(eta: u32, x: f64) -> Self {
        let (b1, b2) = branch_weights(eta);
        let e = eta as f64;
        MomentTermContext {
            eta,
            b1,
            b2,
            a1: (e - 1.0) * x,
            a2: -e * x,
        }
    }
}

// (2 eta - 1) is negative only at eta = 0, so the first two rows come from the
// table rather than from the quotient.
fn branch_weights(eta: u32) -> (f64, f64) {
    match eta {
        0 => (0.0, 1.0),
        1 => (1.0, 0.0),
        _ => {
            let e = eta as f64;
            let d = 2.0 * e - 1.0;
            (e / d, (e - 1.0) / d)
        }
    }
}

/// `ln M_u(t) = -k ln(1 - t theta)` for `u ~ Gamma(k, theta)`.
pub fn gamma_mgf_log(params: &GammaPlrvParams, t: f64) -> Result<f64> {
    let t_theta = t * params.theta();
    if !(t_theta < 1.0) {
        return Err(Error::MgfDomainViolation { t_theta, max_lambda: 0 });
    }
    Ok(-params.k() * (-t_theta).ln_1p())
}

/// `G(x, eta)` in linear space.
pub fn plrv_g_term(params: &GammaPlrvParams, x: f64, eta: u32) -> Result<f64> {
    if eta <= 1 {
        return Ok(1.0);
    }
    let ctx = MomentTermContext::new(eta, x);
    let plus = gamma_mgf_log(params, ctx.a1).map_err(|_| mgf_violation(ctx.a1 * params.theta(), x, params.theta()))?;
    let minus = gamma_mgf_log(params, ctx.a2)?;
    Ok(ctx.b1 * plus.exp() + ctx.b2 * minus.exp())
}

fn mgf_violation(t_theta: f64, x: f64, theta: f64) -> Error {
    Error::MgfDomainViolation {
        t_theta,
        max_lambda: max_admissible_lambda(x, theta),
    }
}

/// `ln(b1 e^a + b2 e^b - 1)` for `a >= 0 >= b` and `b1 + b2 = 1`.
///
/// The two first-order terms cancel, so small arguments go through `expm1`
/// rather than through `ln T - 0`.
#[inline]
fn log_excess(a: f64, b: f64, b1: f64, b2: f64) -> f64 {
    if a <= 1.0 {
        // Exactly zero (or a rounding-level negative) only when x = 0.
        (b1 * a.exp_m1() + b2 * b.exp_m1()).max(0.0).ln()
    } else {
        a + (b1 + b2 * (b - a).exp() - (-a).exp()).ln()
    }
}

/// `ln(e^c - 1)` for `c >= 0`.
#[inline]
fn log_expm1(c: f64) -> f64 {
    if c < 30.0 {
        c.exp_m1().ln()
    } else {
        c + (-(-c).exp()).ln_1p()
    }
}

/// `ln(1 + e^l)`.
#[inline]
fn softplus(l: f64) -> f64 {
    if l < 0.0 {
        l.exp().ln_1p()
    } else {
        l + (-l).exp().ln_1p()
    }
}

/// Per-coordinate `ln(E_{mu0}[(mu1/mu0)^eta] - 1)` for `eta >= 2`.
trait CoordinateKernel: Sync {
    fn log_excess(&self, x: f64, eta: f64, b1: f64, b2: f64) -> f64;
}

struct GammaKernel {
    k: f64,
    theta: f64,
}

/// Below this first-order size the excess is assembled from second-order
/// pieces; above it `b1 expm1(a) + b2 expm1(b)` loses at most a few bits.
const SMALL_EXPONENT: f64 = 0.1;

/// `e^y - 1 - y` without cancellation for small `|y|`.
#[inline]
fn exp_m1_m_x(y: f64) -> f64 {
    if y.abs() >= SMALL_EXPONENT {
        return y.exp_m1() - y;
    }
    let (mut term, mut sum) = (0.5 * y * y, 0.0f64);
    let mut n = 2.0;
    while term.abs() > 1e-17 * sum.abs() {
        sum += term;
        n += 1.0;
        term *= y / n;
    }
    sum
}

/// `ln(1 + y) - y` without cancellation for small `|y|`.
#[inline]
fn ln_1p_m_x(y: f64) -> f64 {
    if y.abs() >= SMALL_EXPONENT {
        return y.ln_1p() - y;
    }
    // -y^2/2 + y^3/3 - ...
    let (mut power, mut sum) = (-y * y, 0.0f64);
    let mut n = 2.0;
    loop {
        let term = power / n;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            return sum;
        }
        power *= -y;
        n += 1.0;
    }
}

impl CoordinateKernel for GammaKernel {
    #[inline]
    fn log_excess(&self, x: f64, eta: f64, b1: f64, b2: f64) -> f64 {
        let xt = x * self.theta;
        let (a, c) = ((eta - 1.0) * xt, eta * xt);
        let up = -self.k * (-a).ln_1p();
        if up > SMALL_EXPONENT {
            return log_excess(up, -self.k * c.ln_1p(), b1, b2);
        }
        // b1 up + b2 down = -k (eta g(-a) + (eta-1) g(c)) / (2 eta - 1) with
        // g(y) = ln(1+y) - y: the first-order parts cancel exactly because
        // eta a = (eta-1) c. Every remaining piece is non-negative.
        let (ga, gc) = (ln_1p_m_x(-a), ln_1p_m_x(c));
        let up = self.k * (a - ga);
        let down = -self.k * (c + gc);
        let linear = -self.k * (eta * ga + (eta - 1.0) * gc) / (2.0 * eta - 1.0);
        (b1 * exp_m1_m_x(up) + b2 * exp_m1_m_x(down) + linear).ln()
    }
}

struct LaplaceKernel {
    inv_b: f64,
}

impl CoordinateKernel for LaplaceKernel {
    #[inline]
    fn log_excess(&self, x: f64, eta: f64, b1: f64, b2: f64) -> f64 {
        let s = x * self.inv_b;
        let (up, down) = ((eta - 1.0) * s, -eta * s);
        if up > SMALL_EXPONENT {
            return log_excess(up, down, b1, b2);
        }
        // b1 up + b2 down = 0 exactly.
        (b1 * exp_m1_m_x(up) + b2 * exp_m1_m_x(down)).ln()
    }
}

/// Log binomial weights and branch coefficients for one moment order.
///
/// Since the weights sum to one and `T(0) = T(1) = 1`, the moment is
/// `ln(1 + sum_{eta >= 2} w_eta (T(eta) - 1))`; only `eta >= 2` is stored.
/// Working with the excess keeps full relative precision for tiny moments
/// and makes `zeta = 0` and `x = 0` exactly zero.
struct OrderTable {
    /// `(eta, ln w_eta, b1, b2)` for every `eta >= 2` with non-zero weight.
    terms: Vec<(f64, f64, f64, f64)>,
}

impl OrderTable {
    fn new(zeta: f64, lambda: u32) -> Result<Self> {
        check_zeta(zeta)?;
        let n = lambda as u64 + 1;
        let ln_z = zeta.ln();
        let ln_1mz = (-zeta).ln_1p();
        let mut terms = Vec::with_capacity(n as usize);
        for eta in 2..=n {
            let from_1mz = if eta == n { 0.0 } else { (n - eta) as f64 * ln_1mz };
            let lw = log_binomial(n, eta)? + eta as f64 * ln_z + from_1mz;
            if lw == f64::NEG_INFINITY {
                continue;
            }
            let (b1, b2) = branch_weights(eta as u32);
            terms.push((eta as f64, lw, b1, b2));
        }
        Ok(OrderTable { terms })
    }

    /// `ln sum exp(ln w_eta + f(eta))` over the stored terms, then softplus.
    #[inline]
    fn combine(&self, mut f: impl FnMut(f64, f64, f64) -> f64) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut scaled = 0.0;
        for &(eta, lw, b1, b2) in &self.terms {
            let term = lw + f(eta, b1, b2);
            if term == f64::NEG_INFINITY {
                continue;
            }
            if term > max {
                scaled = scaled * (max - term).exp() + 1.0;
                max = term;
            } else {
                scaled += (term - max).exp();
            }
        }
        if max == f64::NEG_INFINITY {
            0.0
        } else {
            softplus(max + scaled.ln())
        }
    }

    #[inline]
    fn log_moment<K: CoordinateKernel>(&self, kernel: &K, x: f64) -> f64 {
        self.combine(|eta, b1, b2| kernel.log_excess(x, eta, b1, b2))
    }
}

fn check_zeta(zeta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&zeta) {
        Ok(())
    } else {
        Err(Error::domain(
            "log moment",
            format!("sampling rate must lie in [0, 1], got {zeta}"),
        ))
    }
}

fn check_x(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(
            "log moment",
            format!("sensitivity must be finite and non-negative, got {x}"),
        ))
    }
}

fn check_plrv_domain(params: &GammaPlrvParams, x: f64, lambda: u32) -> Result<()> {
    let t_theta = lambda as f64 * x * params.theta();
    if t_theta < 1.0 {
        Ok(())
    } else {
        Err(mgf_violation(t_theta, x, params.theta()))
    }
}

fn gamma_kernel(params: &GammaPlrvParams) -> GammaKernel {
    GammaKernel {
        k: params.k(),
        theta: params.theta(),
    }
}

/// Subsampled univariate Γ-PLRV log moment at sensitivity `x`.
pub fn plrv_univariate_log_moment(params: &GammaPlrvParams, x: f64, zeta: f64, lambda: u32) -> Result<f64> {
    check_x(x)?;
    check_plrv_domain(params, x, lambda)?;
    let table = OrderTable::new(zeta, lambda)?;
    Ok(table.log_moment(&gamma_kernel(params), x))
}

/// Subsampled univariate Laplace log moment at sensitivity `x`.
pub fn laplace_univariate_log_moment(params: &LaplaceParams, x: f64, zeta: f64, lambda: u32) -> Result<f64> {
    check_x(x)?;
    let table = OrderTable::new(zeta, lambda)?;
    Ok(table.log_moment(
        &LaplaceKernel {
            inv_b: 1.0 / params.b(),
        },
        x,
    ))
}

/// Per-step log moment of the subsampled Gaussian mechanism with noise
/// multiplier `sigma`.
pub fn gaussian_subsampled_log_moment(params: &GaussianParams, zeta: f64, lambda: u32) -> Result<f64> {
    let table = OrderTable::new(zeta, lambda)?;
    let inv = 1.0 / (2.0 * params.sigma() * params.sigma());
    Ok(table.combine(|e, _, _| log_expm1((e * e - e) * inv)))
}

/// How the sum over the `N` majorization coordinates is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SumMode {
    /// Every coordinate, summed with a fixed reduction tree.
    #[default]
    Exact,
    /// Exact head plus Simpson's rule in log-index for the tail.
    Accelerated,
}

/// Coordinates summed exactly before the accelerated tail starts.
pub const ACCELERATED_HEAD: u64 = 1024;
/// Approximate ratio of consecutive indices on the accelerated grid.
pub const ACCELERATED_RATIO: f64 = 1.01;

fn exact_sum<K: CoordinateKernel>(kernel: &K, table: &OrderTable, clip: f64, n: u64) -> Result<f64> {
    sum_range(1, n, |i| Ok(table.log_moment(kernel, coordinate_unchecked(clip, i))))
}

/// Euler–Maclaurin estimate of `sum_{i=head+1}^{n} f(i)`, with the integral
/// taken in `t = ln i` by Simpson's rule on a uniform grid whose step is about
/// `ln ACCELERATED_RATIO`. The error estimate adds the Simpson/trapezoid gap
/// to the size of the derivative correction, which bounds the neglected
/// higher-order terms.
fn geometric_tail<F: Fn(f64) -> f64>(f: &F, head: u64, n: u64) -> (f64, f64) {
    let (t0, t1) = ((head as f64).ln(), (n as f64).ln());
    let mut panels = ((t1 - t0) / ACCELERATED_RATIO.ln()).ceil() as usize;
    panels = (panels + panels % 2).max(2);
    let h = (t1 - t0) / panels as f64;
    let mut trapezoid = 0.0;
    let mut simpson = 0.0;
    let (mut f_head, mut f_n) = (0.0, 0.0);
    for j in 0..=panels {
        let (i, fi) = if j == 0 {
            f_head = f(head as f64);
            (head as f64, f_head)
        } else if j == panels {
            f_n = f(n as f64);
            (n as f64, f_n)
        } else {
            let i = (t0 + j as f64 * h).exp();
            (i, f(i))
        };
        let g = fi * i;
        let (wt, ws) = if j == 0 || j == panels {
            (0.5, 1.0)
        } else if j % 2 == 1 {
            (1.0, 4.0)
        } else {
            (1.0, 2.0)
        };
        trapezoid += wt * g;
        simpson += ws * g;
    }
    // Euler–Maclaurin: (f(n) - f(head))/2 + (f'(n) - f'(head))/12, with
    // central differences for the derivatives.
    let d = |i: f64| 0.5 * (f(i + 1.0) - f(i - 1.0));
    let first = 0.5 * (f_n - f_head);
    let second = (d(n as f64) - d(head as f64)) / 12.0;
    let quadrature_gap = (simpson / 3.0 - trapezoid).abs() * h;
    (simpson * h / 3.0 + first + second, quadrature_gap + second.abs())
}

/// Accelerated multivariate sum: exact head, Simpson tail, error estimate.
fn accelerated_sum<K: CoordinateKernel>(kernel: &K, table: &OrderTable, clip: f64, n: u64) -> Result<(f64, f64)> {
    let head = n.min(ACCELERATED_HEAD);
    let head_sum = exact_sum(kernel, table, clip, head)?;
    if head == n {
        return Ok((head_sum, 0.0));
    }
    let f = |i: f64| table.log_moment(kernel, coordinate_at(clip, i));
    let (tail, err) = geometric_tail(&f, head, n);
    Ok((head_sum + tail, err))
}

/// Majorized multivariate Γ-PLRV log moment (per step), summed exactly over
/// `job.model_dim_N` coordinates.
pub fn plrv_multivariate_log_moment(params: &GammaPlrvParams, job: &AccountingJob, lambda: u32) -> Result<f64> {
    check_plrv_domain(params, job.clip_c, lambda)?;
    let table = OrderTable::new(job.sampling_rate_zeta, lambda)?;
    exact_sum(&gamma_kernel(params), &table, job.clip_c, job.model_dim_n)
}

/// Majorized multivariate Laplace log moment (per step).
pub fn laplace_multivariate_log_moment(params: &LaplaceParams, job: &AccountingJob, lambda: u32) -> Result<f64> {
    let table = OrderTable::new(job.sampling_rate_zeta, lambda)?;
    exact_sum(
        &LaplaceKernel {
            inv_b: 1.0 / params.b(),
        },
        &table,
        job.clip_c,
        job.model_dim_n,
    )
}

/// Per-step log moment of any mechanism for `job`, with an error estimate
/// (zero in exact mode).
pub fn per_step_log_moment(
    mechanism: &Mechanism,
    job: &AccountingJob,
    lambda: u32,
    mode: SumMode,
) -> Result<(f64, f64)> {
    if lambda == 0 {
        return Err(Error::domain("per_step_log_moment", "moment order must be at least 1"));
    }
    match mechanism {
        Mechanism::Gaussian(p) => Ok((gaussian_subsampled_log_moment(p, job.sampling_rate_zeta, lambda)?, 0.0)),
        Mechanism::Plrvo(p) => {
            check_plrv_domain(p, job.clip_c, lambda)?;
            let table = OrderTable::new(job.sampling_rate_zeta, lambda)?;
            let kernel = gamma_kernel(p);
            match mode {
                SumMode::Exact => Ok((exact_sum(&kernel, &table, job.clip_c, job.model_dim_n)?, 0.0)),
                SumMode::Accelerated => accelerated_sum(&kernel, &table, job.clip_c, job.model_dim_n),
            }
        }
        Mechanism::Laplace(p) => {
            let table = OrderTable::new(job.sampling_rate_zeta, lambda)?;
            let kernel = LaplaceKernel { inv_b: 1.0 / p.b() };
            match mode {
                SumMode::Exact => Ok((exact_sum(&kernel, &table, job.clip_c, job.model_dim_n)?, 0.0)),
                SumMode::Accelerated => accelerated_sum(&kernel, &table, job.clip_c, job.model_dim_n),
            }
        }
    }
}

/// Pure-ε bound `C / b` of the unsampled Laplace mechanism with ℓ1 sensitivity `C`.
pub fn laplace_privacy_loss_bound(params: &LaplaceParams, clip: f64) -> f64 {
    clip / params.b()
}

/// Composes a curve over `steps` further iterations: `alpha_total = T alpha`.
pub fn compose(curve: &LogMomentCurve, steps: u64) -> Result<LogMomentCurve> {
    if steps == 0 {
        return Err(Error::domain("compose", "number of steps must be at least 1"));
    }
    let total = curve
        .composed_steps()
        .checked_mul(steps)
        .ok_or_else(|| Error::domain("compose", "step count overflows u64"))?;
    Ok(curve.with_composed_steps(total))
}

/// Result of an (ε, δ) conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonResult {
    pub epsilon: f64,
    pub argmin_lambda: u32,
}

/// `alpha/lambda + ln(lambda/(lambda+1)) - (ln delta + ln(lambda+1))/lambda`.
#[inline]
pub fn epsilon_term(alpha: f64, lambda: u32, ln_delta: f64) -> f64 {
    let l = lambda as f64;
    alpha / l - (1.0 / l).ln_1p() - (ln_delta + (l + 1.0).ln()) / l
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(
            "epsilon_from_delta",
            format!("delta must lie in (0, 1), got {delta}"),
        ))
    }
}

/// ε(δ) minimized over every order on the curve; ties go to the smaller order.
pub fn epsilon_from_delta(curve: &LogMomentCurve, delta: f64) -> Result<EpsilonResult> {
    check_delta(delta)?;
    let ln_delta = delta.ln();
    let mut best = EpsilonResult {
        epsilon: f64::INFINITY,
        argmin_lambda: 0,
    };
    for (lambda, alpha) in curve.points() {
        let e = epsilon_term(alpha, lambda, ln_delta);
        if e < best.epsilon {
            best = EpsilonResult {
                epsilon: e,
                argmin_lambda: lambda,
            };
        }
    }
    Ok(best)
}

/// Coarse-to-fine ε(δ) on a curve that holds every order `1..=max`.
pub fn epsilon_from_delta_coarse(curve: &LogMomentCurve, delta: f64) -> Result<EpsilonResult> {
    check_delta(delta)?;
    let max = curve.lambdas().last().unwrap_or(0);
    let ln_delta = delta.ln();
    search_lambda(max, LambdaSearch::Coarse, |lambda| {
        curve
            .alpha(lambda)
            .map(|a| epsilon_term(a, lambda, ln_delta))
            .ok_or_else(|| Error::domain("epsilon_from_delta_coarse", format!("curve has no order {lambda}")))
    })
}

/// δ(ε) = min over the curve of `exp(alpha - lambda eps)`, capped at 1.
pub fn delta_from_epsilon(curve: &LogMomentCurve, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::domain(
            "delta_from_epsilon",
            format!("epsilon must be non-negative, got {epsilon}"),
        ));
    }
    let log_delta = curve
        .points()
        .map(|(lambda, alpha)| alpha - lambda as f64 * epsilon)
        .fold(f64::INFINITY, f64::min);
    Ok(log_delta.exp().min(1.0))
}

/// Strategy for minimizing over the integer moment orders `1..=lambda_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaSearch {
    /// Every order.
    #[default]
    Full,
    /// Powers of two (and `lambda_max`), then a refinement within one octave
    /// either side of the best power.
    Coarse,
}

/// Bracket widths up to this are scanned exhaustively during refinement;
/// wider brackets are first narrowed by integer golden-section search.
const DENSE_BRACKET: u32 = 64;

/// Minimizes `objective` over `1..=lambda_max`, returning the smallest
/// minimizing order among those evaluated.
pub fn search_lambda<F>(lambda_max: u32, search: LambdaSearch, mut objective: F) -> Result<EpsilonResult>
where
    F: FnMut(u32) -> Result<f64>,
{
    if lambda_max == 0 {
        return Err(Error::domain("search_lambda", "empty moment grid"));
    }
    let mut seen: BTreeMap<u32, f64> = BTreeMap::new();
    let mut eval = |lambda: u32, seen: &mut BTreeMap<u32, f64>| -> Result<f64> {
        if let Some(&v) = seen.get(&lambda) {
            return Ok(v);
        }
        let v = objective(lambda)?;
        seen.insert(lambda, v);
        Ok(v)
    };
    match search {
        LambdaSearch::Full => {
            for lambda in 1..=lambda_max {
                eval(lambda, &mut seen)?;
            }
        }
        LambdaSearch::Coarse => {
            let mut lambda = 1u32;
            loop {
                eval(lambda, &mut seen)?;
                match lambda.checked_mul(2) {
                    Some(next) if next <= lambda_max => lambda = next,
                    _ => break,
                }
            }
            eval(lambda_max, &mut seen)?;
            let coarse_best = argmin(&seen).argmin_lambda;
            let mut lo = (coarse_best / 2).max(1);
            let mut hi = coarse_best.saturating_mul(2).min(lambda_max);
            while hi - lo > DENSE_BRACKET {
                let width = (hi - lo) as f64;
                let c = lo + (0.381_966 * width).round() as u32;
                let d = (lo + (0.618_034 * width).round() as u32).max(c + 1);
                if eval(c, &mut seen)? <= eval(d, &mut seen)? {
                    hi = d;
                } else {
                    lo = c;
                }
            }
            for lambda in lo..=hi {
                eval(lambda, &mut seen)?;
            }
        }
    }
    Ok(argmin(&seen))
}

fn argmin(values: &BTreeMap<u32, f64>) -> EpsilonResult {
    let mut best = EpsilonResult {
        epsilon: f64::INFINITY,
        argmin_lambda: 0,
    };
    for (&lambda, &e) in values {
        if e < best.epsilon || best.argmin_lambda == 0 {
            best = EpsilonResult {
                epsilon: e,
                argmin_lambda: lambda,
            };
        }
    }
    best
}

/// Conversion result together with the per-step moment at the minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountReport {
    pub epsilon: f64,
    pub argmin_lambda: u32,
    pub per_step_alpha_at_argmin: f64,
    pub mode: SumMode,
    /// Estimated absolute error of the per-step moment at the minimizer
    /// (accelerated mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approx_error_estimate: Option<f64>,
}

/// Lazily evaluated, memoized per-step curve for one mechanism and job.
///
/// A single accountant serves any number of step counts and failure
/// probabilities, since composition only rescales the per-step moments.
#[derive(Debug, Clone)]
pub struct Accountant {
    mechanism: Mechanism,
    job: AccountingJob,
    mode: SumMode,
    alpha: BTreeMap<u32, f64>,
    error: BTreeMap<u32, f64>,
}

impl Accountant {
    /// Fails with `MgfDomainViolation` when a PLRV job's `lambda_max` is not
    /// admissible for its clip and scale.
    pub fn new(mechanism: Mechanism, job: AccountingJob, mode: SumMode) -> Result<Self> {
        if let Mechanism::Plrvo(p) = &mechanism {
            p.validate(&job)?;
        }
        Ok(Accountant {
            mechanism,
            job,
            mode,
            alpha: BTreeMap::new(),
            error: BTreeMap::new(),
        })
    }

    pub fn mechanism(&self) -> &Mechanism {
        &self.mechanism
    }

    pub fn job(&self) -> &AccountingJob {
        &self.job
    }

    pub fn mode(&self) -> SumMode {
        self.mode
    }

    /// Per-step `alpha(lambda)`, computed once and cached.
    pub fn per_step_alpha(&mut self, lambda: u32) -> Result<f64> {
        if lambda == 0 || lambda > self.job.lambda_max {
            return Err(Error::domain(
                "per_step_alpha",
                format!("order {lambda} outside 1..={}", self.job.lambda_max),
            ));
        }
        if let Some(&a) = self.alpha.get(&lambda) {
            return Ok(a);
        }
        let (a, err) = per_step_log_moment(&self.mechanism, &self.job, lambda, self.mode)?;
        self.alpha.insert(lambda, a);
        self.error.insert(lambda, err);
        Ok(a)
    }

    /// Evaluates every order `1..=lambda_max`.
    pub fn fill(&mut self) -> Result<()> {
        for lambda in 1..=self.job.lambda_max {
            self.per_step_alpha(lambda)?;
        }
        Ok(())
    }

    /// The per-step curve over the orders evaluated so far.
    pub fn curve(&self) -> Result<LogMomentCurve> {
        LogMomentCurve::new(self.mechanism, self.job, self.alpha.clone())
    }

    /// ε after `steps` compositions at failure probability `delta`.
    pub fn epsilon(&mut self, steps: u64, delta: f64, search: LambdaSearch) -> Result<AccountReport> {
        check_delta(delta)?;
        let ln_delta = delta.ln();
        let t = steps as f64;
        let lambda_max = self.job.lambda_max;
        let best = search_lambda(lambda_max, search, |lambda| {
            Ok(epsilon_term(t * self.per_step_alpha(lambda)?, lambda, ln_delta))
        })?;
        let per_step = self.alpha[&best.argmin_lambda];
        Ok(AccountReport {
            epsilon: best.epsilon,
            argmin_lambda: best.argmin_lambda,
            per_step_alpha_at_argmin: per_step,
            mode: self.mode,
            approx_error_estimate: match self.mode {
                SumMode::Exact => None,
                SumMode::Accelerated => Some(self.error[&best.argmin_lambda]),
            },
        })
    }

    /// ε for the job's own `steps_T` and `delta`.
    pub fn job_epsilon(&mut self, search: LambdaSearch) -> Result<AccountReport> {
        self.epsilon(self.job.steps_t, self.job.delta, search)
    }
}
