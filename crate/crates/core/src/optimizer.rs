//! Constrained maximization of the SNR objective `J(k, theta, C) = C (k-1) theta`.
//!
//! Constraints:
//!
//! | name | condition |
//! |------|-----------|
//! | c0 | `clip_min <= C <= clip_max` |
//! | c1 | `P(u <= 0.1) = P(k, 0.1/theta) <= gamma_cdf_tol` (scales `b >= 10` are negligible) |
//! | c2 | `epsilon(T, delta*) <= epsilon*` |
//! | c3 | `k > 1` (finite distortion) |
//! | c4 | `1/((k-1) theta) <= distortion_cap` |
//! | MGF | `lambda_max C theta < 1` |
//!
//! The search leans on monotonicity. `u ~ Gamma(k, theta)` is stochastically
//! increasing in both parameters and the Laplace moment is increasing in the
//! inverse scale, so ε is increasing in `k` and in `s = C theta` (it depends
//! on `theta` and `C` only through their product). c1, c3 and c4 are lower
//! bounds on `k`. At fixed `(theta, C)` the feasible `k` therefore form an
//! interval and `J` is maximized at its top end.
//!
//! Phase A walks a logarithmic `(k, theta)` grid over a few clip values in
//! order of increasing `s`, moving a single `k` pointer downwards (a
//! staircase), so each grid column costs about one accountant evaluation.
//! Phase B refines `theta` and `C` by coordinate-wise golden-section search,
//! with `k` set to the largest feasible value by bisection.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::accountant::{epsilon_term, per_step_log_moment, Accountant, LambdaSearch, SumMode};
use crate::distortion::plrv_distortion;
use crate::error::{Error, Result};
use crate::numerics::regularized_lower_gamma;
use crate::params::{AccountingJob, GammaPlrvParams, Mechanism, PrivacyTarget};

/// Smallest shape on the search box.
pub const K_MIN: f64 = 1.0 + 1e-3;
/// Largest shape on the search box.
pub const K_MAX: f64 = 1e6;
/// Smallest scale on the search box.
pub const THETA_MIN: f64 = 1e-7;
/// Inverse scales below this are the "unstable large-b" regime of c1.
pub const INVERSE_SCALE_FLOOR: f64 = 0.1;

const GRID_K: usize = 60;
const GRID_THETA: usize = 60;
const GRID_C: usize = 8;
const REL_IMPROVEMENT: f64 = 1e-4;
const MAX_SWEEPS: usize = 25;
const BISECT_REL: f64 = 1e-9;
const GOLDEN_REL: f64 = 1e-4;

fn default_gamma_cdf_tol() -> f64 {
    1e-6
}

fn default_distortion_cap() -> f64 {
    10.0
}

/// The accounting job without a clip: the optimizer supplies `C`, and
/// `delta` comes from the privacy target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSkeleton {
    #[serde(rename = "steps_T")]
    pub steps_t: u64,
    pub sampling_rate_zeta: f64,
    #[serde(rename = "model_dim_N")]
    pub model_dim_n: u64,
    pub lambda_max: u32,
}

impl JobSkeleton {
    pub fn from_job(job: &AccountingJob) -> Self {
        JobSkeleton {
            steps_t: job.steps_t,
            sampling_rate_zeta: job.sampling_rate_zeta,
            model_dim_n: job.model_dim_n,
            lambda_max: job.lambda_max,
        }
    }
}

/// Search box, constraint tolerances and the accounting setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", deny_unknown_fields)]
pub struct FeasibilityConfig {
    pub clip_min: f64,
    pub clip_max: f64,
    pub gamma_cdf_tol: f64,
    pub distortion_cap: f64,
    pub target: PrivacyTarget,
    pub job: JobSkeleton,
    /// Summation mode used while searching; the returned point is always
    /// re-verified in exact mode.
    pub mode: SumMode,
    /// λ search used while searching; the final check uses every order.
    pub lambda_search: LambdaSearch,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    clip_min: f64,
    clip_max: Option<f64>,
    #[serde(default = "default_gamma_cdf_tol")]
    gamma_cdf_tol: f64,
    #[serde(default = "default_distortion_cap")]
    distortion_cap: f64,
    target: PrivacyTarget,
    job: JobSkeleton,
    #[serde(default)]
    mode: SumMode,
    #[serde(default)]
    lambda_search: LambdaSearch,
}

impl TryFrom<RawConfig> for FeasibilityConfig {
    type Error = Error;
    fn try_from(r: RawConfig) -> Result<Self> {
        let mut cfg = FeasibilityConfig::new(r.clip_min, r.clip_max, r.target, r.job)?;
        cfg.gamma_cdf_tol = r.gamma_cdf_tol;
        cfg.distortion_cap = r.distortion_cap;
        cfg.mode = r.mode;
        cfg.lambda_search = r.lambda_search;
        cfg.check()?;
        Ok(cfg)
    }
}

impl FeasibilityConfig {
    /// `clip_max` defaults to `2 clip_min`.
    pub fn new(clip_min: f64, clip_max: Option<f64>, target: PrivacyTarget, job: JobSkeleton) -> Result<Self> {
        let cfg = FeasibilityConfig {
            clip_min,
            clip_max: clip_max.unwrap_or(2.0 * clip_min),
            gamma_cdf_tol: default_gamma_cdf_tol(),
            distortion_cap: default_distortion_cap(),
            target,
            job,
            mode: SumMode::Exact,
            lambda_search: LambdaSearch::Full,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let bad = |field, message: String| Err(Error::invalid(field, message));
        if !(self.clip_min > 0.0 && self.clip_min.is_finite()) {
            return bad(
                "clip_min",
                format!("must be positive and finite, got {}", self.clip_min),
            );
        }
        if !(self.clip_max >= self.clip_min && self.clip_max.is_finite()) {
            return bad(
                "clip_max",
                format!("must be finite and >= clip_min, got {}", self.clip_max),
            );
        }
        if !(self.gamma_cdf_tol > 0.0 && self.gamma_cdf_tol < 1.0) {
            return bad(
                "gamma_cdf_tol",
                format!("must lie in (0, 1), got {}", self.gamma_cdf_tol),
            );
        }
        if !(self.distortion_cap > 0.0) {
            return bad(
                "distortion_cap",
                format!("must be positive, got {}", self.distortion_cap),
            );
        }
        // Reuse the job invariants.
        self.job_for_clip(self.clip_min)?;
        Ok(())
    }

    /// The concrete accounting job at clip `C`.
    pub fn job_for_clip(&self, clip: f64) -> Result<AccountingJob> {
        AccountingJob::new(
            self.job.steps_t,
            self.job.sampling_rate_zeta,
            self.job.model_dim_n,
            clip,
            self.target.delta_star,
            self.job.lambda_max,
        )
    }

    /// Largest scale on the box at clip `C`: `(1 - 1e-6) / (C (lambda_max + 1))`.
    pub fn theta_max(&self, clip: f64) -> f64 {
        (1.0 - 1e-6) / (clip * (self.job.lambda_max as f64 + 1.0))
    }

    fn with_exact_search(&self) -> Self {
        FeasibilityConfig {
            mode: SumMode::Exact,
            lambda_search: LambdaSearch::Full,
            ..*self
        }
    }
}

/// A candidate `(k, theta, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub k: f64,
    pub theta: f64,
    #[serde(rename = "clip_C")]
    pub clip: f64,
}

impl Point {
    pub fn objective(&self) -> f64 {
        self.clip * (self.k - 1.0) * self.theta
    }
}

/// Pass/fail of one constraint with a signed margin (positive when satisfied).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub passed: bool,
    #[serde(with = "crate::io::extended_f64")]
    pub margin: f64,
}

impl ConstraintCheck {
    fn new(passed: bool, margin: f64) -> Self {
        ConstraintCheck { passed, margin }
    }
}

/// Every constraint evaluated at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// `min(C - clip_min, clip_max - C)`.
    pub c0_clip_range: ConstraintCheck,
    /// `gamma_cdf_tol - P(k, 0.1/theta)`.
    pub c1_scale_tail: ConstraintCheck,
    /// `epsilon* - epsilon`.
    pub c2_privacy: ConstraintCheck,
    /// `k - 1`.
    pub c3_finite_distortion: ConstraintCheck,
    /// `distortion_cap - 1/((k-1) theta)`.
    pub c4_distortion_cap: ConstraintCheck,
    /// `1 - lambda_max C theta`.
    pub mgf_validity: ConstraintCheck,
    /// ε at the point (absent when the MGF is undefined).
    pub epsilon: Option<f64>,
    pub argmin_lambda: Option<u32>,
}

impl ConstraintReport {
    pub fn all_passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed)
    }

    pub fn checks(&self) -> [(&'static str, ConstraintCheck); 6] {
        [
            ("c0", self.c0_clip_range),
            ("c1", self.c1_scale_tail),
            ("c2", self.c2_privacy),
            ("c3", self.c3_finite_distortion),
            ("c4", self.c4_distortion_cap),
            ("mgf", self.mgf_validity),
        ]
    }
}

fn scale_tail(k: f64, theta: f64) -> f64 {
    regularized_lower_gamma(k, INVERSE_SCALE_FLOOR / theta).unwrap_or(1.0)
}

/// Evaluates c0–c4 and MGF validity at `point`. ε is computed in exact mode
/// over every λ order, so it reproduces [`Accountant::epsilon`] bit for bit.
pub fn check_feasible(point: Point, cfg: &FeasibilityConfig) -> ConstraintReport {
    let Point { k, theta, clip } = point;
    let c0 = (clip - cfg.clip_min).min(cfg.clip_max - clip);
    let tail = if k > 0.0 && theta > 0.0 {
        scale_tail(k, theta)
    } else {
        1.0
    };
    let distortion = if k > 1.0 {
        1.0 / ((k - 1.0) * theta)
    } else {
        f64::INFINITY
    };
    let mgf = 1.0 - cfg.job.lambda_max as f64 * clip * theta;

    let mut epsilon = None;
    let mut argmin_lambda = None;
    let c2 = if mgf > 0.0 {
        match exact_epsilon(point, cfg) {
            Ok((e, l)) => {
                epsilon = Some(e);
                argmin_lambda = Some(l);
                ConstraintCheck::new(e <= cfg.target.epsilon_star, cfg.target.epsilon_star - e)
            }
            Err(_) => ConstraintCheck::new(false, f64::NEG_INFINITY),
        }
    } else {
        ConstraintCheck::new(false, f64::NEG_INFINITY)
    };

    ConstraintReport {
        c0_clip_range: ConstraintCheck::new(c0 >= 0.0, c0),
        c1_scale_tail: ConstraintCheck::new(tail <= cfg.gamma_cdf_tol, cfg.gamma_cdf_tol - tail),
        c2_privacy: c2,
        c3_finite_distortion: ConstraintCheck::new(k > 1.0, k - 1.0),
        c4_distortion_cap: ConstraintCheck::new(distortion <= cfg.distortion_cap, cfg.distortion_cap - distortion),
        mgf_validity: ConstraintCheck::new(mgf > 0.0, mgf),
        epsilon,
        argmin_lambda,
    }
}

fn exact_epsilon(point: Point, cfg: &FeasibilityConfig) -> Result<(f64, u32)> {
    let params = GammaPlrvParams::new(point.k, point.theta)?;
    let job = cfg.job_for_clip(point.clip)?;
    let mut acc = Accountant::new(Mechanism::Plrvo(params), job, SumMode::Exact)?;
    let r = acc.epsilon(job.steps_t, job.delta, LambdaSearch::Full)?;
    Ok((r.epsilon, r.argmin_lambda))
}

/// `k_{1,2} = (4L -+ sqrt(D)) / (2a)` with `L = ln(1 - C theta (eta-1))`,
/// `a = C^2 theta^2 (eta - eta^2)` and `D = 16 L^2 + 11.09375 a`: the roots
/// of `a k^2 - 4 L k - 2.7734375 = 0`. Returned in increasing order.
///
/// The constant 11.09375 is used as published; it has no derivation we
/// could reconstruct, which is why this bound only serves as an optional
/// pre-filter and never replaces [`check_feasible`].
pub fn gamma_plrv_k_bounds(clip: f64, theta: f64, eta: u32) -> Result<(f64, f64)> {
    if eta < 2 {
        return Err(Error::domain(
            "gamma_plrv_k_bounds",
            format!("eta must be at least 2, got {eta}"),
        ));
    }
    let e = eta as f64;
    let ct = clip * theta;
    let arg = ct * (e - 1.0);
    if !(arg < 1.0) || !(ct > 0.0) {
        return Err(Error::domain(
            "gamma_plrv_k_bounds",
            format!("log argument 1 - C theta (eta - 1) = {} is not positive", 1.0 - arg),
        ));
    }
    let l = (-arg).ln_1p();
    let a = ct * ct * (e - e * e);
    let disc = 16.0 * l * l + 11.09375 * a;
    if disc < 0.0 {
        return Err(Error::NegativeDiscriminant { discriminant: disc });
    }
    let r = disc.sqrt();
    let k1 = (4.0 * l - r) / (2.0 * a);
    let k2 = (4.0 * l + r) / (2.0 * a);
    Ok((k1.min(k2), k1.max(k2)))
}

/// Intersection of [`gamma_plrv_k_bounds`] over `eta = 2..=lambda_max + 1`.
pub fn k_search_interval(clip: f64, theta: f64, lambda_max: u32) -> Result<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for eta in 2..=lambda_max.saturating_add(1) {
        let (a, b) = gamma_plrv_k_bounds(clip, theta, eta)?;
        lo = lo.max(a);
        hi = hi.min(b);
    }
    Ok((lo, hi))
}

/// Output of [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub k_star: f64,
    pub theta_star: f64,
    #[serde(rename = "C_star")]
    pub c_star: f64,
    pub achieved_epsilon: f64,
    pub argmin_lambda: u32,
    /// Per-coordinate `E|z|` at the returned point.
    pub achieved_distortion: f64,
    /// Objective `J = C (k-1) theta`.
    pub snr: f64,
    /// Best objective found on the Phase A grid.
    pub grid_snr: f64,
    pub constraint_report: ConstraintReport,
    /// Number of privacy-constraint evaluations.
    pub evaluations: u64,
}

impl OptimizationResult {
    pub fn point(&self) -> Point {
        Point {
            k: self.k_star,
            theta: self.theta_star,
            clip: self.c_star,
        }
    }
}

/// Privacy-constraint oracle with the cheap constraints alongside.
struct Oracle<'a> {
    cfg: &'a FeasibilityConfig,
    ln_delta: f64,
    hint: Cell<u32>,
    evaluations: Cell<u64>,
}

impl<'a> Oracle<'a> {
    fn new(cfg: &'a FeasibilityConfig) -> Self {
        Oracle {
            cfg,
            ln_delta: cfg.target.delta_star.ln(),
            hint: Cell::new(1),
            evaluations: Cell::new(0),
        }
    }

    fn mgf_ok(&self, theta: f64, clip: f64) -> bool {
        (self.cfg.job.lambda_max as f64) * clip * theta < 1.0
    }

    /// c2 at `(k, theta, C)`. With the full λ search this is exactly
    /// `epsilon <= epsilon*`, but stops at the first order that certifies it.
    fn privacy_ok(&self, k: f64, theta: f64, clip: f64) -> Result<bool> {
        let eps_star = self.cfg.target.epsilon_star;
        if eps_star.is_infinite() {
            return Ok(true);
        }
        self.evaluations.set(self.evaluations.get() + 1);
        let mech = Mechanism::Plrvo(GammaPlrvParams::new(k, theta)?);
        let job = self.cfg.job_for_clip(clip)?;
        let t = job.steps_t as f64;
        match self.cfg.lambda_search {
            LambdaSearch::Full => {
                let hint = self.hint.get().min(job.lambda_max);
                let order = std::iter::once(hint).chain((1..=job.lambda_max).filter(|&l| l != hint));
                for lambda in order {
                    let (alpha, _) = per_step_log_moment(&mech, &job, lambda, self.cfg.mode)?;
                    if epsilon_term(t * alpha, lambda, self.ln_delta) <= eps_star {
                        self.hint.set(lambda);
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            LambdaSearch::Coarse => {
                let mut acc = Accountant::new(mech, job, self.cfg.mode)?;
                Ok(acc.epsilon(job.steps_t, job.delta, LambdaSearch::Coarse)?.epsilon <= eps_star)
            }
        }
    }

    fn cheap_ok(&self, k: f64, theta: f64) -> bool {
        k > 1.0 && (k - 1.0) * theta * self.cfg.distortion_cap >= 1.0 && scale_tail(k, theta) <= self.cfg.gamma_cdf_tol
    }

    /// Smallest `k` in the box meeting c1, c3 and c4 at `theta`.
    fn k_lower(&self, theta: f64) -> Option<f64> {
        let c4 = 1.0 + 1.0 / (self.cfg.distortion_cap * theta);
        let lo = K_MIN.max(c4);
        if lo > K_MAX {
            return None;
        }
        let c1 = |k: f64| scale_tail(k, theta) <= self.cfg.gamma_cdf_tol;
        if c1(lo) {
            return Some(lo);
        }
        if !c1(K_MAX) {
            return None;
        }
        // c1 is monotone in k; return the feasible end of the bracket.
        let (mut bad, mut good) = (lo, K_MAX);
        while good / bad - 1.0 > BISECT_REL {
            let mid = (bad * good).sqrt();
            if c1(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Some(good)
    }

    /// Largest `k` in `[k_lo, K_MAX]` meeting c2, or `None`.
    fn k_upper(&self, k_lo: f64, theta: f64, clip: f64, guess: Option<f64>) -> Result<Option<f64>> {
        if !self.privacy_ok(k_lo, theta, clip)? {
            return Ok(None);
        }
        if self.privacy_ok(K_MAX, theta, clip)? {
            return Ok(Some(K_MAX));
        }
        let (mut good, mut bad) = (k_lo, K_MAX);
        // Warm start from a nearby solution to shrink the bracket.
        if let Some(g) = guess {
            for factor in [1.0 + 1e-3, 1.02, 1.3] {
                let (down, up) = (g / factor, g * factor);
                if down > good && down < bad {
                    if self.privacy_ok(down, theta, clip)? {
                        good = down;
                    } else {
                        bad = down;
                        continue;
                    }
                }
                if up > good && up < bad {
                    if self.privacy_ok(up, theta, clip)? {
                        good = up;
                    } else {
                        bad = up;
                        break;
                    }
                }
            }
        }
        while bad / good - 1.0 > BISECT_REL {
            let mid = (good * bad).sqrt();
            if self.privacy_ok(mid, theta, clip)? {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Ok(Some(good))
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// A rectangular `(k, theta, C)` grid on the search box. The theta axis is
/// log-spaced up to the MGF limit of each clip value.
#[derive(Debug, Clone)]
pub struct SearchGrid {
    pub ks: Vec<f64>,
    pub clips: Vec<f64>,
    /// `thetas[c]` is the theta axis for `clips[c]`.
    pub thetas: Vec<Vec<f64>>,
}

impl SearchGrid {
    pub fn new(cfg: &FeasibilityConfig, n_k: usize, n_theta: usize, n_c: usize) -> Self {
        let clips = lin_space(cfg.clip_min, cfg.clip_max, n_c);
        let thetas = clips
            .iter()
            .map(|&c| {
                let top = cfg.theta_max(c);
                if top < THETA_MIN {
                    Vec::new()
                } else {
                    log_space(THETA_MIN, top, n_theta)
                }
            })
            .collect();
        SearchGrid {
            ks: log_space(K_MIN, K_MAX, n_k),
            clips,
            thetas,
        }
    }

    pub fn len(&self) -> usize {
        self.ks.len() * self.thetas.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Best feasible grid point and the grid's feasibility summary.
#[derive(Debug, Clone)]
pub struct GridScan {
    pub best: Option<Point>,
    /// Feasible `(theta, C)` columns (a column is feasible when some `k` is).
    pub feasible_columns: usize,
    pub evaluations: u64,
}

/// Maximizes `J` over every point of `grid` that passes all constraints.
///
/// Columns are visited in increasing `C theta` with one descending `k`
/// pointer; by monotonicity of ε this visits the largest c2-feasible grid
/// `k` of every column exactly.
pub fn scan_grid(cfg: &FeasibilityConfig, grid: &SearchGrid) -> Result<GridScan> {
    let oracle = Oracle::new(cfg);
    scan_with(&oracle, grid)
}

fn scan_with(oracle: &Oracle<'_>, grid: &SearchGrid) -> Result<GridScan> {
    let mut columns: Vec<(f64, f64)> = grid
        .clips
        .iter()
        .zip(&grid.thetas)
        .flat_map(|(&c, ts)| ts.iter().map(move |&t| (t, c)))
        .filter(|&(t, c)| oracle.mgf_ok(t, c))
        .collect();
    columns.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)).then(a.1.total_cmp(&b.1)));

    let ks = &grid.ks;
    let mut top = ks.len();
    let mut best: Option<Point> = None;
    let mut feasible_columns = 0;
    for (theta, clip) in columns {
        // Lowest grid index meeting the cheap lower-bound constraints.
        let Some(lo) = ks.iter().position(|&k| oracle.cheap_ok(k, theta)) else {
            continue;
        };
        while top > lo && !oracle.privacy_ok(ks[top - 1], theta, clip)? {
            top -= 1;
        }
        if top > lo {
            feasible_columns += 1;
            let p = Point {
                k: ks[top - 1],
                theta,
                clip,
            };
            if best.map_or(true, |b| p.objective() > b.objective()) {
                best = Some(p);
            }
        }
    }
    Ok(GridScan {
        best,
        feasible_columns,
        evaluations: oracle.evaluations.get(),
    })
}

/// Exhaustive grid maximum that calls [`check_feasible`] at every point.
/// Only for validating [`scan_grid`] on small grids.
pub fn brute_force_grid_max(cfg: &FeasibilityConfig, grid: &SearchGrid) -> Option<Point> {
    let mut best: Option<Point> = None;
    for (&clip, thetas) in grid.clips.iter().zip(&grid.thetas) {
        for &theta in thetas {
            for &k in &grid.ks {
                let p = Point { k, theta, clip };
                if check_feasible(p, cfg).all_passed() && best.map_or(true, |b| p.objective() > b.objective()) {
                    best = Some(p);
                }
            }
        }
    }
    best
}

/// Profiled objective at `(theta, C)`: `k` is the largest feasible shape.
struct Probe {
    point: Option<Point>,
    /// `J` when feasible, otherwise minus a normalized violation.
    phi: f64,
}

fn probe(oracle: &Oracle<'_>, theta: f64, clip: f64, guess: Option<f64>) -> Result<Probe> {
    let cfg = oracle.cfg;
    if clip < cfg.clip_min || clip > cfg.clip_max || theta < THETA_MIN {
        return Ok(Probe { point: None, phi: -1.0 });
    }
    // The box stops short of the MGF limit: theta <= theta_max(C).
    if theta > cfg.theta_max(clip) || !oracle.mgf_ok(theta, clip) {
        let excess = theta / cfg.theta_max(clip) - 1.0;
        return Ok(Probe {
            point: None,
            phi: -excess.max(f64::MIN_POSITIVE),
        });
    }
    let Some(k_lo) = oracle.k_lower(theta) else {
        return Ok(Probe { point: None, phi: -1.0 });
    };
    match oracle.k_upper(k_lo, theta, clip, guess)? {
        Some(k) => {
            let point = Point { k, theta, clip };
            Ok(Probe {
                point: Some(point),
                phi: point.objective(),
            })
        }
        None => Ok(Probe {
            point: None,
            phi: -f64::MIN_POSITIVE,
        }),
    }
}

/// Golden-section maximization of `f` over `[a, b]` down to a bracket of
/// relative width `GOLDEN_REL`, returning the best probe seen.
fn golden<F>(mut a: f64, mut b: f64, mut f: F) -> Result<()>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let width = (b - a).abs().max(f64::MIN_POSITIVE);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > GOLDEN_REL * width {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(())
}

/// Maximizes `J` subject to every constraint.
///
/// Deterministic. Fails with [`Error::Infeasible`] when no grid point is
/// feasible, with a per-clip diagnosis of the constraint that excludes it.
pub fn solve(cfg: &FeasibilityConfig) -> Result<OptimizationResult> {
    let oracle = Oracle::new(cfg);
    let grid = SearchGrid::new(cfg, GRID_K, GRID_THETA, GRID_C);
    let scan = scan_with(&oracle, &grid)?;
    let Some(start) = scan.best else {
        return Err(Error::Infeasible {
            diagnosis: diagnose(&oracle, &grid),
        });
    };
    let grid_snr = start.objective();

    // Phase B.
    let mut best = probe(&oracle, start.theta, start.clip, Some(start.k))?
        .point
        .unwrap_or(start);
    let log_step = if grid.ks.len() > 1 {
        // One theta grid cell on either side.
        let ts = &grid.thetas[grid.clips.iter().position(|&c| c == start.clip).unwrap_or(0)];
        if ts.len() > 1 {
            (ts[1] / ts[0]).ln()
        } else {
            0.0
        }
    } else {
        0.0
    };
    let clip_step = if grid.clips.len() > 1 {
        grid.clips[1] - grid.clips[0]
    } else {
        0.0
    };

    for _ in 0..MAX_SWEEPS {
        let before = best.objective();
        if log_step > 0.0 {
            let center = best.theta.ln();
            let clip = best.clip;
            let hi = cfg.theta_max(clip).ln().min(center + log_step);
            let lo = THETA_MIN.ln().max(center - log_step);
            let mut local = best;
            golden(lo, hi, |lt| {
                let p = probe(&oracle, lt.exp(), clip, Some(local.k))?;
                if let Some(pt) = p.point {
                    if pt.objective() > local.objective() {
                        local = pt;
                    }
                }
                Ok(p.phi)
            })?;
            best = local;
        }
        if clip_step > 0.0 {
            let theta = best.theta;
            let lo = cfg.clip_min.max(best.clip - clip_step);
            let hi = cfg.clip_max.min(best.clip + clip_step);
            let mut local = best;
            golden(lo, hi, |c| {
                let p = probe(&oracle, theta, c, Some(local.k))?;
                if let Some(pt) = p.point {
                    if pt.objective() > local.objective() {
                        local = pt;
                    }
                }
                Ok(p.phi)
            })?;
            best = local;
        }
        if best.objective() <= before * (1.0 + REL_IMPROVEMENT) {
            break;
        }
    }

    // Re-verify in exact mode with every λ order.
    let exact_cfg = cfg.with_exact_search();
    let mut report = check_feasible(best, &exact_cfg);
    if !report.all_passed() {
        let exact = Oracle::new(&exact_cfg);
        let k_lo = exact.k_lower(best.theta).unwrap_or(K_MIN);
        match exact.k_upper(k_lo, best.theta, best.clip, Some(best.k))? {
            Some(k) => best.k = k,
            None => best = start,
        }
        report = check_feasible(best, &exact_cfg);
        if !report.all_passed() {
            best = start;
            report = check_feasible(best, &exact_cfg);
        }
    }
    let params = GammaPlrvParams::new(best.k, best.theta)?;
    Ok(OptimizationResult {
        k_star: best.k,
        theta_star: best.theta,
        c_star: best.clip,
        achieved_epsilon: report.epsilon.unwrap_or(f64::NAN),
        argmin_lambda: report.argmin_lambda.unwrap_or(0),
        achieved_distortion: plrv_distortion(&params).per_coordinate_l1,
        snr: best.objective(),
        grid_snr,
        constraint_report: report,
        evaluations: oracle.evaluations.get(),
    })
}

fn diagnose(oracle: &Oracle<'_>, grid: &SearchGrid) -> String {
    let cfg = oracle.cfg;
    let mut parts = Vec::new();
    for (&clip, thetas) in grid.clips.iter().zip(&grid.thetas) {
        if thetas.is_empty() {
            parts.push(format!(
                "C={clip}: mgf excludes every theta >= {THETA_MIN} at lambda_max={}",
                cfg.job.lambda_max
            ));
            continue;
        }
        let mut fails = [0usize; 3];
        let mut cheap_pass = 0usize;
        for &theta in thetas {
            for &k in &grid.ks {
                let c1 = scale_tail(k, theta) <= cfg.gamma_cdf_tol;
                let c3 = k > 1.0;
                let c4 = (k - 1.0) * theta * cfg.distortion_cap >= 1.0;
                fails[0] += usize::from(!c1);
                fails[1] += usize::from(!c3);
                fails[2] += usize::from(!c4);
                cheap_pass += usize::from(c1 && c3 && c4);
            }
        }
        let total = thetas.len() * grid.ks.len();
        let tightest = if cheap_pass > 0 {
            format!(
                "c2 (epsilon* = {}) excludes all {cheap_pass} points that pass c1/c3/c4",
                cfg.target.epsilon_star
            )
        } else {
            let names = ["c1", "c3", "c4"];
            let (i, n) = fails.iter().enumerate().max_by_key(|(_, &n)| n).unwrap();
            format!("{} fails at {n}/{total} points", names[i])
        };
        parts.push(format!("C={clip}: {tightest}"));
    }
    parts.join("; ")
}
