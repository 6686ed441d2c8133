//! Synthetic jobseeker-like data: uniform features in `[0,1]^k` and a
//! Bernoulli label from a fixed logistic ground truth.

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DomainBox, EmpiricalDistribution};
use crate::util::sigmoid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub pop_n: usize,
    pub n: usize,
    #[serde(default = "default_features")]
    pub n_features: usize,
}

fn default_features() -> usize {
    28
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            pop_n: 100_000,
            n: 41_585,
            n_features: 28,
        }
    }
}

/// Ground-truth bias.
pub const TRUE_BIAS: f64 = 0.2;

/// Ground-truth weights, alternating in sign with magnitudes cycling
/// through 0.1125, 0.225, 0.3375, 0.45.
pub fn true_weights(k: usize) -> Vec<f64> {
    (0..k)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            0.45 * sign * (1 + j % 4) as f64 / 4.0
        })
        .collect()
}

/// `P(y = 1 | x) = σ(b + Σ w_j (x_j − 1/2))`.
pub fn true_probability(x: &[f64]) -> f64 {
    let w = true_weights(x.len());
    sigmoid(
        TRUE_BIAS
            + x.iter()
                .zip(&w)
                .map(|(xi, wi)| wi * (xi - 0.5))
                .sum::<f64>(),
    )
}

/// Population of `pop_n` points and a uniform subsample (without
/// replacement) of `n` of them, both reproducible from `seed`.
pub fn gen_synthetic(
    cfg: &SyntheticConfig,
    seed: u64,
) -> Result<(EmpiricalDistribution, EmpiricalDistribution)> {
    if cfg.n == 0 || cfg.n > cfg.pop_n {
        return Err(Error::InvalidArgument(format!(
            "need 1 ≤ n ≤ pop_n (n = {}, pop_n = {})",
            cfg.n, cfg.pop_n
        )));
    }
    if cfg.n_features == 0 {
        return Err(Error::InvalidArgument("need at least one feature".into()));
    }
    let k = cfg.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(cfg.pop_n);
    for _ in 0..cfg.pop_n {
        let x: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let y = Bernoulli::new(true_probability(&x))
            .expect("probability in [0, 1]")
            .sample(&mut rng);
        let mut z = Vec::with_capacity(k + 1);
        z.push(if y { 1.0 } else { 0.0 });
        z.extend(x);
        pts.push(z);
    }
    let domain = DomainBox::unit(k);
    let population = EmpiricalDistribution::from_points(&domain, pts, None)?;
    let mut idx = rand::seq::index::sample(&mut rng, cfg.pop_n, cfg.n).into_vec();
    idx.sort_unstable();
    let sample = population.subsample(&idx)?;
    Ok((population, sample))
}

/// Area under the ROC curve (Mann-Whitney, ties counted half).
pub fn auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            if labels[o] == 1.0 {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&y| y == 1.0).count() as f64;
    let neg = labels.len() as f64 - pos;
    (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}
