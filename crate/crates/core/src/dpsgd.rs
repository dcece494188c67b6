//! A small DP-SGD loop: Poisson subsampling, per-example ℓ2 clipping, one
//! noise draw per step and plain SGD on logistic regression.
//!
//! The noisy gradient is `(1/B) sum_i clip(g_i) + z`, with `B` the expected
//! batch size and `z` added after the average without rescaling. Classic
//! DP-SGD instead perturbs the per-example sum at sensitivity `C`; the two
//! differ by the factor `1/B` on the noise, and the accountant's
//! sensitivity-`C` analysis matches the unscaled reading used here.
//!
//! Everything derives from the run seed through independent ChaCha streams,
//! and per-example gradients are reduced in index order, so a run is
//! bitwise reproducible for any thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{AccountReport, Accountant, LambdaSearch, SumMode};
use crate::error::{Error, Result};
use crate::optimizer::{solve, FeasibilityConfig, JobSkeleton};
use crate::params::{AccountingJob, GammaPlrvParams, GaussianParams, Mechanism, PrivacyTarget};
use crate::sampler::{sample_gaussian_noise, sample_laplace_noise, sample_plrv_noise, seeded_rng, NoiseRng};

const STREAM_DATA: u64 = 0;
const STREAM_BATCH: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Labeled points with labels in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// Two unit-variance Gaussian blobs centred at `±mu (1, ..., 1) / sqrt(dim)`,
/// balanced between the classes.
pub fn synthetic_blobs<R: Rng + ?Sized>(n: usize, dim: usize, mu: f64, rng: &mut R) -> Dataset {
    let shift = mu / (dim as f64).sqrt();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as f64;
        let sign = if label == 1.0 { 1.0 } else { -1.0 };
        let noise = sample_gaussian_noise(1.0, dim, rng);
        features.push(noise.into_iter().map(|v| v + sign * shift).collect());
        labels.push(label);
    }
    Dataset { features, labels }
}

/// Indices included independently with probability `zeta`.
pub fn poisson_subsample<R: Rng + ?Sized>(n: usize, zeta: f64, rng: &mut R) -> Vec<usize> {
    (0..n).filter(|_| rng.random::<f64>() < zeta).collect()
}

/// `g min(1, C / ||g||_2)`; the zero vector is returned unchanged.
pub fn l2_clip(g: &[f64], clip: f64) -> Vec<f64> {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= clip || norm == 0.0 {
        return g.to_vec();
    }
    let scale = clip / norm;
    g.iter().map(|v| v * scale).collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of the logistic loss of one example.
pub fn logistic_gradient(weights: &[f64], x: &[f64], y: f64) -> Vec<f64> {
    let r = sigmoid(dot(weights, x)) - y;
    x.iter().map(|v| r * v).collect()
}

pub fn accuracy(weights: &[f64], data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .features
        .iter()
        .zip(&data.labels)
        .filter(|(x, &y)| (dot(weights, x) > 0.0) == (y == 1.0))
        .count();
    correct as f64 / data.len() as f64
}

/// Step hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub learning_rate: f64,
    pub epochs: u32,
    /// Expected batch size `B`; also the averaging divisor.
    pub batch: u32,
    #[serde(rename = "clip_C")]
    pub clip: f64,
}

/// Draws one noise vector of dimension `dim` for `mechanism` at clip `C`.
/// Gaussian noise has standard deviation `C sigma`.
pub fn draw_noise(mechanism: &Mechanism, clip: f64, dim: usize, rng: &mut NoiseRng) -> Vec<f64> {
    match mechanism {
        Mechanism::Plrvo(p) => sample_plrv_noise(p, dim, rng).coords,
        Mechanism::Gaussian(p) => sample_gaussian_noise(clip * p.sigma(), dim, rng),
        Mechanism::Laplace(p) => sample_laplace_noise(p, dim, rng).coords,
    }
}

/// Clipped, averaged gradient of `batch` without noise. Per-example work
/// runs in parallel; the sum is taken in batch order.
pub fn clipped_mean_gradient(weights: &[f64], data: &Dataset, batch: &[usize], hyper: &Hyper) -> Vec<f64> {
    let clipped: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|&i| {
            l2_clip(
                &logistic_gradient(weights, &data.features[i], data.labels[i]),
                hyper.clip,
            )
        })
        .collect();
    let mut sum = vec![0.0; weights.len()];
    for g in &clipped {
        for (s, v) in sum.iter_mut().zip(g) {
            *s += v;
        }
    }
    let b = hyper.batch as f64;
    sum.into_iter().map(|s| s / b).collect()
}

/// One step `w <- w - lr ((1/B) sum clip(g_i) + z)` with the given noise.
pub fn apply_step(weights: &[f64], data: &Dataset, batch: &[usize], hyper: &Hyper, noise: &[f64]) -> Vec<f64> {
    let g = clipped_mean_gradient(weights, data, batch, hyper);
    weights
        .iter()
        .zip(g.iter().zip(noise))
        .map(|(w, (g, z))| w - hyper.learning_rate * (g + z))
        .collect()
}

/// [`apply_step`] with a fresh noise draw from `mechanism`.
pub fn noisy_step(
    weights: &[f64],
    data: &Dataset,
    batch: &[usize],
    hyper: &Hyper,
    mechanism: &Mechanism,
    rng: &mut NoiseRng,
) -> Vec<f64> {
    let noise = draw_noise(mechanism, hyper.clip, weights.len(), rng);
    apply_step(weights, data, batch, hyper, &noise)
}

/// Everything that determines a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    /// Feature dimension `d` (also the accounted model dimension).
    pub dim: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Half the distance between the blob centres.
    pub separation: f64,
    pub hyper: Hyper,
    #[serde(flatten)]
    pub mechanism: Mechanism,
    pub delta: f64,
    /// Largest moment order used by the accountant.
    pub lambda_max: u32,
    pub seed: u64,
}

impl TrainingRun {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, message: &str| Err(Error::invalid(field, message.to_string()));
        if self.dim == 0 || self.dim > 512 {
            return bad("dim", "must lie in 1..=512");
        }
        if self.train_size == 0 || self.test_size == 0 {
            return bad("train_size", "train and test sets must be non-empty");
        }
        if self.hyper.batch == 0 || self.hyper.batch as usize > self.train_size {
            return bad("batch", "expected batch size must lie in 1..=train_size");
        }
        if self.hyper.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if !(self.hyper.clip > 0.0 && self.hyper.learning_rate > 0.0) {
            return bad("clip_C", "clip and learning rate must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", "must lie in (0, 1)");
        }
        if self.lambda_max == 0 {
            return bad("lambda_max", "must be at least 1");
        }
        Ok(())
    }

    /// `zeta = B / |D|`.
    pub fn sampling_rate(&self) -> f64 {
        self.hyper.batch as f64 / self.train_size as f64
    }

    /// `T = ceil(E |D| / B)`.
    pub fn steps(&self) -> u64 {
        (self.hyper.epochs as u64 * self.train_size as u64).div_ceil(self.hyper.batch as u64)
    }

    /// The accounting job matching the loop: `(T, zeta, C, d)`.
    pub fn accounting_job(&self) -> Result<AccountingJob> {
        let clip = self.hyper.clip;
        AccountingJob::new(
            self.steps(),
            self.sampling_rate(),
            self.dim as u64,
            clip,
            self.delta,
            self.lambda_max,
        )
    }
}

/// Result of [`train`]: the run, what the loop did, and its privacy cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub run: TrainingRun,
    /// Steps actually executed and the job given to the accountant.
    pub steps_executed: u64,
    pub accounted_job: AccountingJob,
    pub epsilon_report: AccountReport,
    pub test_accuracy: f64,
    /// Mean `|z_i|` over every noise coordinate drawn.
    pub mean_abs_noise: f64,
    pub final_weights: Vec<f64>,
}

/// Runs `T` noisy steps from zero weights and accounts for them.
pub fn train(run: &TrainingRun) -> Result<RunLedger> {
    run.validate()?;
    let mut data_rng = seeded_rng(run.seed, STREAM_DATA);
    let train_set = synthetic_blobs(run.train_size, run.dim, run.separation, &mut data_rng);
    let test_set = synthetic_blobs(run.test_size, run.dim, run.separation, &mut data_rng);
    let mut batch_rng = seeded_rng(run.seed, STREAM_BATCH);
    let mut noise_rng = seeded_rng(run.seed, STREAM_NOISE);

    let zeta = run.sampling_rate();
    let steps = run.steps();
    let mut weights = vec![0.0; run.dim];
    let mut abs_noise = 0.0;
    let mut executed = 0u64;
    for _ in 0..steps {
        let batch = poisson_subsample(train_set.len(), zeta, &mut batch_rng);
        let noise = draw_noise(&run.mechanism, run.hyper.clip, run.dim, &mut noise_rng);
        abs_noise += noise.iter().map(|z| z.abs()).sum::<f64>();
        weights = apply_step(&weights, &train_set, &batch, &run.hyper, &noise);
        executed += 1;
    }

    let job = run.accounting_job()?;
    debug_assert_eq!(job.steps_t, executed);
    let mut acc = Accountant::new(run.mechanism, job, SumMode::Exact)?;
    let report = acc.job_epsilon(LambdaSearch::Full)?;
    Ok(RunLedger {
        run: *run,
        steps_executed: executed,
        accounted_job: job,
        epsilon_report: report,
        test_accuracy: accuracy(&weights, &test_set),
        mean_abs_noise: abs_noise / (executed as f64 * run.dim as f64),
        final_weights: weights,
    })
}

/// Smallest Gaussian noise multiplier meeting `epsilon* ` for `job`, to a
/// relative precision of `1e-4`.
pub fn calibrate_gaussian(job: &AccountingJob, target: &PrivacyTarget) -> Result<GaussianParams> {
    let eps = |sigma: f64| -> Result<f64> {
        let mut acc = Accountant::new(Mechanism::Gaussian(GaussianParams::new(sigma)?), *job, SumMode::Exact)?;
        Ok(acc.epsilon(job.steps_t, target.delta_star, LambdaSearch::Full)?.epsilon)
    };
    let (mut lo, mut hi) = (1e-2, 1e3);
    if eps(hi)? > target.epsilon_star {
        return Err(Error::Infeasible {
            diagnosis: format!("sigma = {hi} still exceeds epsilon* = {}", target.epsilon_star),
        });
    }
    if eps(lo)? <= target.epsilon_star {
        return GaussianParams::new(lo);
    }
    while hi / lo - 1.0 > 1e-4 {
        let mid = (lo * hi).sqrt();
        if eps(mid)? <= target.epsilon_star {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    GaussianParams::new(hi)
}

/// Highest-SNR Γ-PLRV parameters meeting the target at the job's clip.
pub fn calibrate_plrv(job: &AccountingJob, target: &PrivacyTarget) -> Result<GammaPlrvParams> {
    let cfg = FeasibilityConfig::new(job.clip_c, Some(job.clip_c), *target, JobSkeleton::from_job(job))?;
    let r = solve(&cfg)?;
    GammaPlrvParams::new(r.k_star, r.theta_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper() -> Hyper {
        Hyper {
            learning_rate: 0.5,
            epochs: 2,
            batch: 20,
            clip: 1.0,
        }
    }

    #[test]
    fn clip_cases() {
        assert_eq!(l2_clip(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
        let c = l2_clip(&[6.0, 8.0], 5.0);
        assert!((c[0] - 3.0).abs() < 1e-15 && (c[1] - 4.0).abs() < 1e-15);
        assert_eq!(l2_clip(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn full_sampling_takes_everything() {
        let mut rng = seeded_rng(1, 0);
        assert_eq!(poisson_subsample(17, 1.0, &mut rng), (0..17).collect::<Vec<_>>());
        assert!(poisson_subsample(17, 0.0, &mut rng).is_empty());
    }

    #[test]
    fn empty_batch_is_noise_only() {
        let data = synthetic_blobs(4, 2, 1.0, &mut seeded_rng(0, 0));
        let w = apply_step(&[1.0, 2.0], &data, &[], &hyper(), &[0.5, -1.0]);
        assert_eq!(w, vec![1.0 - 0.25, 2.0 + 0.5]);
    }

    #[test]
    fn noiseless_full_batch_descends() {
        let data = synthetic_blobs(200, 2, 2.0, &mut seeded_rng(5, 0));
        let h = Hyper { batch: 200, ..hyper() };
        let all: Vec<usize> = (0..200).collect();
        let loss = |w: &[f64]| -> f64 {
            data.features
                .iter()
                .zip(&data.labels)
                .map(|(x, &y)| {
                    let p = sigmoid(dot(w, x)).clamp(1e-300, 1.0 - 1e-16);
                    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                })
                .sum::<f64>()
        };
        let mut w = vec![0.0, 0.0];
        let mut prev = loss(&w);
        for _ in 0..50 {
            w = apply_step(&w, &data, &all, &h, &[0.0, 0.0]);
            let l = loss(&w);
            assert!(l <= prev + 1e-12);
            prev = l;
        }
        assert!(accuracy(&w, &data) > 0.9);
    }

    #[test]
    fn step_count_and_rate() {
        let run = TrainingRun {
            dim: 2,
            train_size: 1000,
            test_size: 100,
            separation: 2.0,
            hyper: Hyper {
                batch: 30,
                epochs: 3,
                ..hyper()
            },
            mechanism: Mechanism::Gaussian(GaussianParams::new(1.0).unwrap()),
            delta: 1e-5,
            lambda_max: 64,
            seed: 1,
        };
        assert_eq!(run.steps(), 100);
        assert!((run.sampling_rate() - 0.03).abs() < 1e-15);
    }
}
