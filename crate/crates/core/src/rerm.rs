//! Repeated risk minimization: fit, deploy, let the data react, refit.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::{erm_fit_from, FitConfig};
use crate::model::EmpiricalDistribution;
use crate::transition::Transition;
use crate::transport::{wp_exact_with, TransportConfig};

/// `θ_1..θ_T`, `d̂_0..d̂_T` and the per-round shift counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RermTrace {
    pub thetas: Vec<Vec<f64>>,
    pub dists: Vec<EmpiricalDistribution>,
    pub shift_counts: Vec<usize>,
    pub m_max: usize,
    /// `M_T = Σ m_t`.
    pub m_total: usize,
    /// Exact `W_p(d̂_{t−1}, d̂_t)` per round, when the supports fit the caps.
    pub wasserstein_steps: Option<Vec<f64>>,
}

impl RermTrace {
    pub fn rounds(&self) -> usize {
        self.thetas.len()
    }

    pub fn n(&self) -> usize {
        self.dists[0].len()
    }

    pub fn final_theta(&self) -> &[f64] {
        self.thetas.last().expect("trace has at least one round")
    }

    pub fn final_dist(&self) -> &EmpiricalDistribution {
        self.dists.last().expect("trace has d̂_0")
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.thetas.len();
        let ok = t >= 1
            && self.dists.len() == t + 1
            && self.shift_counts.len() == t
            && self.m_max == self.shift_counts.iter().copied().max().unwrap_or(0)
            && self.m_total == self.shift_counts.iter().sum::<usize>()
            && self.wasserstein_steps.as_ref().is_none_or(|w| w.len() == t);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "inconsistent trace lengths or counts".into(),
            ))
        }
    }

    /// One JSON object per line: round 0 carries `d̂_0`, round `t ≥ 1`
    /// carries `θ_t`, `d̂_t`, `m_t` and the step distance.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let line = TraceLine {
            round: 0,
            theta: None,
            dist: self.dists[0].clone(),
            shift_count: None,
            wasserstein: None,
        };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
        for t in 0..self.rounds() {
            let line = TraceLine {
                round: t + 1,
                theta: Some(self.thetas[t].clone()),
                dist: self.dists[t + 1].clone(),
                shift_count: Some(self.shift_counts[t]),
                wasserstein: self.wasserstein_steps.as_ref().map(|s| s[t]),
            };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = Vec::new();
        for l in r.lines() {
            let l = l?;
            if !l.trim().is_empty() {
                lines.push(serde_json::from_str::<TraceLine>(&l)?);
            }
        }
        if lines.len() < 2 || lines.iter().enumerate().any(|(i, l)| l.round != i) {
            return Err(Error::InvalidArgument(
                "trace lines missing or out of order".into(),
            ));
        }
        let mut thetas = Vec::new();
        let mut counts = Vec::new();
        let mut steps = Vec::new();
        let mut dists = Vec::new();
        for (i, l) in lines.into_iter().enumerate() {
            dists.push(l.dist);
            if i == 0 {
                continue;
            }
            let missing =
                || Error::InvalidArgument(format!("round {i} lacks theta or shift_count"));
            thetas.push(l.theta.ok_or_else(missing)?);
            counts.push(l.shift_count.ok_or_else(missing)?);
            steps.push(l.wasserstein);
        }
        let wasserstein_steps = steps.iter().copied().collect::<Option<Vec<f64>>>();
        let trace = RermTrace {
            m_max: counts.iter().copied().max().unwrap_or(0),
            m_total: counts.iter().sum(),
            thetas,
            dists,
            shift_counts: counts,
            wasserstein_steps,
        };
        trace.validate()?;
        Ok(trace)
    }
}

#[derive(Serialize, Deserialize)]
struct TraceLine {
    round: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<Vec<f64>>,
    dist: EmpiricalDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shift_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wasserstein: Option<f64>,
}

/// Options beyond the fit configuration.
#[derive(Clone, Debug)]
pub struct RermOptions {
    /// Order of the recorded step distances.
    pub p: f64,
    /// Record `W_p(d̂_{t−1}, d̂_t)` when the supports fit `transport`.
    pub record_wasserstein: bool,
    pub transport: TransportConfig,
}

impl Default for RermOptions {
    fn default() -> Self {
        RermOptions {
            p: 2.0,
            record_wasserstein: true,
            transport: TransportConfig::default(),
        }
    }
}

/// `θ_{t+1} = G(d̂_t)`, `d̂_{t+1} = Tr(d̂_t, θ_{t+1})`, for `T` rounds.
pub fn run_rerm(
    dist0: &EmpiricalDistribution,
    map: &dyn Transition,
    t: usize,
    fit_cfg: &FitConfig,
) -> Result<RermTrace> {
    run_rerm_with(dist0, map, t, fit_cfg, &RermOptions::default())
}

pub fn run_rerm_with(
    dist0: &EmpiricalDistribution,
    map: &dyn Transition,
    t: usize,
    fit_cfg: &FitConfig,
    opts: &RermOptions,
) -> Result<RermTrace> {
    if t == 0 {
        return Err(Error::InvalidArgument("T must be ≥ 1".into()));
    }
    loop_rounds(dist0, map, t, fit_cfg, opts, None)
}

/// Repeated risk minimization on the population, seeded by the deployed
/// sample-trained model: `d_1 = Tr(d_0, θ_init)`, then `θ_{t+1} = G(d_t)`.
/// `thetas[0]` is `θ_init`; every later entry is a population refit.
pub fn run_rrm(
    population: &EmpiricalDistribution,
    map: &dyn Transition,
    theta_init: &[f64],
    rounds: usize,
    fit_cfg: &FitConfig,
) -> Result<RermTrace> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be ≥ 1".into()));
    }
    loop_rounds(
        population,
        map,
        rounds,
        fit_cfg,
        &RermOptions::default(),
        Some(theta_init),
    )
}

fn loop_rounds(
    dist0: &EmpiricalDistribution,
    map: &dyn Transition,
    t: usize,
    fit_cfg: &FitConfig,
    opts: &RermOptions,
    first_theta: Option<&[f64]>,
) -> Result<RermTrace> {
    let at = |round: usize| {
        move |e: Error| Error::Round {
            round,
            source: Box::new(e),
        }
    };
    let mut record = opts.record_wasserstein && opts.transport.admits(dist0, dist0);
    let mut dists = vec![dist0.clone()];
    let mut thetas: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut counts = Vec::with_capacity(t);
    let mut steps = Vec::with_capacity(t);
    for round in 1..=t {
        let cur = dists.last().expect("nonempty");
        let theta = match (round, first_theta) {
            (1, Some(th)) => th.to_vec(),
            _ => {
                let warm = thetas.last().map(Vec::as_slice);
                erm_fit_from(cur, fit_cfg, warm).map_err(at(round))?.theta.0
            }
        };
        let (next, rec) = map.apply(cur, &theta).map_err(at(round))?;
        if record {
            if opts.transport.admits(cur, &next) {
                steps.push(
                    wp_exact_with(cur, &next, opts.p, &opts.transport)
                        .map_err(at(round))?
                        .distance,
                );
            } else {
                record = false;
            }
        }
        counts.push(rec.m_changed);
        thetas.push(theta);
        dists.push(next);
    }
    Ok(RermTrace {
        m_max: counts.iter().copied().max().unwrap_or(0),
        m_total: counts.iter().sum(),
        thetas,
        dists,
        shift_counts: counts,
        wasserstein_steps: record.then_some(steps),
    })
}
