//! Worst- and best-case risk over Wasserstein balls of distributions.
//!
//! The upper side is the Lagrangian dual `min_λ λR^p + E φ_λ(Z)` with the
//! inner supremum restricted to a finite grid; the lower side applies the
//! same dual to the negated loss. Restricting to a grid that contains the
//! support keeps weak duality valid for every perturbation supported on the
//! grid, which is what [`ball_sup_enumerate`] explores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundReport;
use crate::error::{Error, Result};
use crate::logistic::{logistic_loss, mean_loss};
use crate::model::{DomainBox, EmpiricalDistribution};
use crate::transport::{wp_exact_with, TransportConfig};
use crate::util::dist;

/// Default cap on the number of grid points.
pub const MAX_GRID: usize = 10_000;

/// Finite candidate set for perturbation targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointGrid {
    pub points: Vec<Vec<f64>>,
}

impl PointGrid {
    pub fn new(domain: &DomainBox, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        // Validation through the distribution constructor checks the box.
        EmpiricalDistribution::from_points(domain, points.clone(), None)?;
        let mut g = PointGrid { points: Vec::new() };
        for p in points {
            g.push_unique(p);
        }
        Ok(g)
    }

    fn push_unique(&mut self, p: Vec<f64>) {
        if !self.points.contains(&p) {
            self.points.push(p);
        }
    }

    /// Support points of `dists`, then the box corners (when there are at
    /// most `max_points / 2` of them) and a uniform lattice filling the
    /// rest of the budget.
    pub fn default_for(dists: &[&EmpiricalDistribution], max_points: usize) -> Result<Self> {
        let first = dists
            .first()
            .ok_or_else(|| Error::InvalidArgument("no distributions".into()))?;
        let dom = first.domain();
        let mut g = PointGrid { points: Vec::new() };
        for d in dists {
            for p in d.points() {
                g.push_unique(p.to_vec());
            }
        }
        let dim = dom.dim();
        if dim < usize::BITS as usize && (1usize << dim) <= max_points / 2 {
            for mask in 0..(1usize << dim) {
                let c = (0..dim)
                    .map(|j| {
                        if mask >> j & 1 == 1 {
                            dom.upper[j]
                        } else {
                            dom.lower[j]
                        }
                    })
                    .collect();
                g.push_unique(c);
            }
        }
        let left = max_points.saturating_sub(g.points.len());
        let per_dim = (left as f64).powf(1.0 / dim as f64).floor() as usize;
        if per_dim >= 2 {
            let mut idx = vec![0usize; dim];
            'lattice: loop {
                let p = (0..dim)
                    .map(|j| {
                        dom.lower[j]
                            + (dom.upper[j] - dom.lower[j]) * idx[j] as f64 / (per_dim - 1) as f64
                    })
                    .collect();
                g.push_unique(p);
                for j in 0..dim {
                    idx[j] += 1;
                    if idx[j] < per_dim {
                        continue 'lattice;
                    }
                    idx[j] = 0;
                }
                break;
            }
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `sup_{z' ∈ grid} loss(z') − λ‖z − z'‖^p` for the unregularized
/// logistic loss.
pub fn dual_phi(z: &[f64], theta: &[f64], lambda: f64, grid: &PointGrid, p: f64) -> Result<f64> {
    let losses = grid_losses(grid, theta, 1.0)?;
    let own = logistic_loss(z, theta, 0.0)?;
    let costs: Vec<f64> = grid.points.iter().map(|g| dist(z, g).powf(p)).collect();
    Ok(phi(&losses, &costs, lambda).max(own))
}

fn grid_losses(grid: &PointGrid, theta: &[f64], sign: f64) -> Result<Vec<f64>> {
    grid.points
        .iter()
        .map(|g| logistic_loss(g, theta, 0.0).map(|v| sign * v))
        .collect()
}

fn phi(losses: &[f64], costs: &[f64], lambda: f64) -> f64 {
    losses
        .iter()
        .zip(costs)
        .map(|(l, c)| l - lambda * c)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `L R^{1−p}`: no dual minimizer lies above it when the loss is
/// `L`-Lipschitz in `z`.
pub fn lambda_cap(l_ell: f64, l_f: f64, r: f64, p: f64) -> f64 {
    l_ell * l_f * r.powf(1.0 - p)
}

/// Lipschitz constant of `z ↦ ℓ(z, θ)` on the box, with the label treated
/// as a continuous coordinate: `√(‖θ_x‖² + max|θᵀx̃|²)`.
pub fn loss_lipschitz_in_z(theta: &[f64], domain: &DomainBox) -> Result<f64> {
    let k = domain.dim_x;
    if domain.dim_y != 1 || (theta.len() != k && theta.len() != k + 1) {
        return Err(Error::DimensionMismatch {
            expected: k + 1,
            got: theta.len(),
        });
    }
    let dy = domain.dim_y;
    let mut u_max = if theta.len() == k + 1 {
        theta[k].abs()
    } else {
        0.0
    };
    for j in 0..k {
        u_max += (theta[j] * domain.lower[dy + j])
            .abs()
            .max((theta[j] * domain.upper[dy + j]).abs());
    }
    let wx: f64 = theta[..k].iter().map(|t| t * t).sum();
    Ok((wx + u_max * u_max).sqrt())
}

/// 64 geometric points from 1e−6 to `10·cap`, with `cap` itself inserted.
pub fn lambda_grid(cap: f64) -> Vec<f64> {
    let lo: f64 = 1e-6;
    let hi = (10.0 * cap).max(lo * 10.0);
    let mut g: Vec<f64> = (0..64)
        .map(|k| lo * (hi / lo).powf(k as f64 / 63.0))
        .collect();
    if cap.is_finite() && cap > 0.0 {
        g.push(cap);
    }
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualValue {
    pub value: f64,
    /// Minimizing λ; `None` when the `λ → ∞` limit (the plain risk at
    /// `R = 0`) is the smallest value.
    pub lambda_star: Option<f64>,
}

fn dual_generic(
    center: &EmpiricalDistribution,
    theta: &[f64],
    r: f64,
    p: f64,
    lambdas: &[f64],
    grid: &PointGrid,
    sign: f64,
) -> Result<DualValue> {
    if !(r >= 0.0) || lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidArgument(
            "need R ≥ 0 and a nonempty grid of λ ≥ 0".into(),
        ));
    }
    let mut losses = grid_losses(grid, theta, sign)?;
    let own: Vec<f64> = (0..center.len())
        .map(|i| logistic_loss(center.point(i), theta, 0.0).map(|v| sign * v))
        .collect::<Result<_>>()?;
    // The support always belongs to the inner maximization.
    let mut targets = grid.points.clone();
    for i in 0..center.len() {
        targets.push(center.point(i).to_vec());
        losses.push(own[i]);
    }
    let costs: Vec<Vec<f64>> = (0..center.len())
        .map(|i| {
            targets
                .iter()
                .map(|g| dist(center.point(i), g).powf(p))
                .collect()
        })
        .collect();
    let w = center.weights();
    let rp = r.powf(p);
    let values: Vec<f64> = lambdas
        .par_iter()
        .map(|&lam| {
            let e: f64 = costs
                .iter()
                .zip(w)
                .map(|(c, wi)| wi * phi(&losses, c, lam))
                .sum();
            lam * rp + e
        })
        .collect();
    let mut best = DualValue {
        value: f64::INFINITY,
        lambda_star: None,
    };
    for (lam, v) in lambdas.iter().zip(values) {
        if v < best.value {
            best = DualValue {
                value: v,
                lambda_star: Some(*lam),
            };
        }
    }
    if r == 0.0 {
        let plain: f64 = own.iter().zip(w).map(|(l, wi)| l * wi).sum();
        if plain < best.value {
            best = DualValue {
                value: plain,
                lambda_star: None,
            };
        }
    }
    Ok(best)
}

/// Upper bound on `sup_{W_p(d, center) ≤ R} R(d, θ)` over distributions
/// supported on the grid and the center's support.
pub fn dual_upper(
    center: &EmpiricalDistribution,
    theta: &[f64],
    r: f64,
    p: f64,
    lambdas: &[f64],
    grid: &PointGrid,
) -> Result<DualValue> {
    dual_generic(center, theta, r, p, lambdas, grid, 1.0)
}

/// Lower bound on `inf_{W_p(d, center) ≤ R} R(d, θ)`, by duality on `−ℓ`.
pub fn dual_lower(
    center: &EmpiricalDistribution,
    theta: &[f64],
    r: f64,
    p: f64,
    lambdas: &[f64],
    grid: &PointGrid,
) -> Result<DualValue> {
    let v = dual_generic(center, theta, r, p, lambdas, grid, -1.0)?;
    Ok(DualValue {
        value: -v.value,
        lambda_star: v.lambda_star,
    })
}

/// Default enumeration budget for [`ball_sup_enumerate`].
pub const ENUM_BUDGET: u64 = 20_000_000;

fn enumerate(
    center: &EmpiricalDistribution,
    theta: &[f64],
    r: f64,
    p: f64,
    grid: &PointGrid,
    max_moves: usize,
    sign: f64,
) -> Result<f64> {
    let n = center.len();
    if n > 12 || max_moves > 2 {
        return Err(Error::InvalidArgument(format!(
            "enumeration needs support ≤ 12 and ≤ 2 moves (got {n}, {max_moves})"
        )));
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument("R must be ≥ 0".into()));
    }
    let g = grid.len() as u64;
    let n64 = n as u64;
    let mut candidates = 1u64;
    if max_moves >= 1 {
        candidates += n64 * g;
    }
    if max_moves >= 2 {
        candidates += n64 * n64.saturating_sub(1) / 2 * g * g;
    }
    if candidates > ENUM_BUDGET {
        return Err(Error::BudgetExceeded {
            candidates,
            budget: ENUM_BUDGET,
        });
    }
    let rp = r.powf(p);
    let w = center.weights().to_vec();
    let own: Vec<f64> = (0..n)
        .map(|i| logistic_loss(center.point(i), theta, 0.0))
        .collect::<Result<_>>()?;
    let gl: Vec<f64> = grid_losses(grid, theta, 1.0)?;
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            grid.points
                .iter()
                .map(|q| dist(center.point(i), q).powf(p))
                .collect()
        })
        .collect();
    let base: f64 = own.iter().zip(&w).map(|(l, wi)| l * wi).sum();
    let tcfg = TransportConfig::default();

    let feasible = |moves: &[(usize, usize)]| -> Result<bool> {
        let direct: f64 = moves.iter().map(|&(i, k)| w[i] * cost[i][k]).sum();
        if direct <= rp {
            return Ok(true);
        }
        let moved = center.with_edited_points(|i, pt| {
            if let Some(&(_, k)) = moves.iter().find(|m| m.0 == i) {
                pt.copy_from_slice(&grid.points[k]);
            }
        })?;
        Ok(wp_exact_with(center, &moved, p, &tcfg)?.plan.cost <= rp)
    };
    let risk = |moves: &[(usize, usize)]| -> f64 {
        base + moves
            .iter()
            .map(|&(i, k)| w[i] * (gl[k] - own[i]))
            .sum::<f64>()
    };
    let better = |a: f64, b: f64| if sign > 0.0 { a.max(b) } else { a.min(b) };

    let per_first: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = base;
            if max_moves == 0 {
                return Ok(best);
            }
            for k in 0..grid.len() {
                let one = [(i, k)];
                if feasible(&one)? {
                    best = better(best, risk(&one));
                }
                if max_moves < 2 {
                    continue;
                }
                for j in i + 1..n {
                    for k2 in 0..grid.len() {
                        let two = [(i, k), (j, k2)];
                        if feasible(&two)? {
                            best = better(best, risk(&two));
                        }
                    }
                }
            }
            Ok(best)
        })
        .collect();
    let mut best = base;
    for v in per_first {
        best = better(best, v?);
    }
    Ok(best)
}

/// Largest risk among distributions reached by moving at most `max_moves`
/// support points onto grid points while staying within `W_p ≤ R`. A lower
/// bound on the ball supremum.
pub fn ball_sup_enumerate(
    center: &EmpiricalDistribution,
    theta: &[f64],
    r: f64,
    p: f64,
    grid: &PointGrid,
    max_moves: usize,
) -> Result<f64> {
    enumerate(center, theta, r, p, grid, max_moves, 1.0)
}

/// Smallest such risk; an upper bound on the ball infimum.
pub fn ball_inf_enumerate(
    center: &EmpiricalDistribution,
    theta: &[f64],
    r: f64,
    p: f64,
    grid: &PointGrid,
    max_moves: usize,
) -> Result<f64> {
    enumerate(center, theta, r, p, grid, max_moves, -1.0)
}

/// Inputs of one sandwich check: the unshifted population and sample, their
/// shifted counterparts after deployment, and the deployed model.
#[derive(Clone, Debug)]
pub struct SandwichInput<'a> {
    pub pop0: &'a EmpiricalDistribution,
    pub pop_shifted: &'a EmpiricalDistribution,
    pub sample0: &'a EmpiricalDistribution,
    pub sample_shifted: &'a EmpiricalDistribution,
    pub theta: &'a [f64],
    pub r: f64,
    pub p: f64,
    /// Extra grid points beyond the supports of all four distributions.
    pub extra_grid: Vec<Vec<f64>>,
    /// `L_ℓ L_f` for the λ grid cap.
    pub lipschitz: f64,
    /// Bound whose total `sup − inf` is compared against.
    pub bound: Option<&'a BoundReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub realized_gap: f64,
    pub sup_upper: f64,
    pub inf_lower: f64,
    pub sandwich: f64,
    pub pop_shift: f64,
    pub sample_shift: f64,
    /// Both shifted distributions lie in their balls.
    pub in_balls: bool,
    /// `realized_gap ≤ sup_upper − inf_lower`.
    pub gap_within_sandwich: bool,
    pub bound_total: Option<f64>,
    /// `sandwich ≤ bound_total`, when a bound is given.
    pub sandwich_within_bound: Option<bool>,
}

pub fn sandwich_check(input: &SandwichInput<'_>) -> Result<SandwichReport> {
    let dom = input.pop0.domain();
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for d in [
        input.pop0,
        input.pop_shifted,
        input.sample0,
        input.sample_shifted,
    ] {
        pts.extend(d.points().map(<[f64]>::to_vec));
    }
    pts.extend(input.extra_grid.iter().cloned());
    let grid = PointGrid::new(dom, pts)?;
    let tcfg = TransportConfig {
        cap_uniform: usize::MAX,
        cap_general: usize::MAX,
    };
    let pop_shift = wp_exact_with(input.pop0, input.pop_shifted, input.p, &tcfg)?.distance;
    let sample_shift = wp_exact_with(input.sample0, input.sample_shifted, input.p, &tcfg)?.distance;
    let realized_gap =
        mean_loss(input.pop_shifted, input.theta)? - mean_loss(input.sample_shifted, input.theta)?;
    let lambdas = lambda_grid(lambda_cap(input.lipschitz, 1.0, input.r, input.p));
    let sup_upper = dual_upper(input.pop0, input.theta, input.r, input.p, &lambdas, &grid)?.value;
    let inf_lower = dual_lower(
        input.sample0,
        input.theta,
        input.r,
        input.p,
        &lambdas,
        &grid,
    )?
    .value;
    let sandwich = sup_upper - inf_lower;
    let slack = 1e-9;
    let bound_total = input.bound.map(|b| b.total);
    Ok(SandwichReport {
        realized_gap,
        sup_upper,
        inf_lower,
        sandwich,
        pop_shift,
        sample_shift,
        in_balls: pop_shift <= input.r + slack && sample_shift <= input.r + slack,
        gap_within_sandwich: realized_gap <= sandwich + slack,
        bound_total,
        sandwich_within_bound: bound_total.map(|b| sandwich <= b + slack),
    })
}
