//! Exact p-Wasserstein distances between small empirical distributions.
//!
//! Equal-size uniform pairs are solved as an assignment problem; anything
//! else goes through the transportation simplex. Both return the optimal
//! coupling together with the raw `p`-th power cost.

mod assignment;
mod simplex;

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::logistic::mean_loss;
use crate::model::{ConstantsProfile, EmpiricalDistribution};
use crate::util::dist;

pub use assignment::solve as solve_assignment;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportConfig {
    /// Combined support cap for equal-size uniform pairs.
    pub cap_uniform: usize,
    /// Combined support cap otherwise.
    pub cap_general: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            cap_uniform: 2_000,
            cap_general: 500,
        }
    }
}

impl TransportConfig {
    pub fn admits(&self, a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> bool {
        let size = a.len() + b.len();
        if a.len() == b.len() && a.is_uniform() && b.is_uniform() {
            size <= self.cap_uniform
        } else {
            size <= self.cap_general
        }
    }
}

/// An optimal transport plan in sparse form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingPlan {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub mass: Vec<f64>,
    /// Total cost `Σ mass·‖z − z'‖^p`.
    pub cost: f64,
}

impl CouplingPlan {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn row_marginals(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (r, q) in self.rows.iter().zip(&self.mass) {
            out[*r] += q;
        }
        out
    }

    pub fn col_marginals(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (c, q) in self.cols.iter().zip(&self.mass) {
            out[*c] += q;
        }
        out
    }

    /// CSV with columns `src,dst,mass,cost`, where `cost` is the cell's
    /// ground cost `‖z_src − z'_dst‖^p`.
    pub fn write_csv<W: Write>(
        &self,
        writer: W,
        source: &EmpiricalDistribution,
        target: &EmpiricalDistribution,
        p: f64,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["src", "dst", "mass", "cost"])?;
        for k in 0..self.len() {
            let (i, j) = (self.rows[k], self.cols[k]);
            let c = dist(source.point(i), target.point(j)).powf(p);
            w.write_record(&[
                i.to_string(),
                j.to_string(),
                self.mass[k].to_string(),
                c.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wasserstein {
    /// `W_p = cost^{1/p}`.
    pub distance: f64,
    pub plan: CouplingPlan,
}

fn check_pair(a: &EmpiricalDistribution, b: &EmpiricalDistribution, p: f64) -> Result<()> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "Wasserstein order p = {p} outside [1, 2]"
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Ground cost matrix `‖aᵢ − bⱼ‖^p`, row-major.
pub fn cost_matrix(a: &EmpiricalDistribution, b: &EmpiricalDistribution, p: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for x in a.points() {
        for y in b.points() {
            let d = dist(x, y);
            c.push(if p == 1.0 {
                d
            } else if p == 2.0 {
                d * d
            } else {
                d.powf(p)
            });
        }
    }
    c
}

/// Exact `W_p(d, d')` with the default support caps.
pub fn wp_exact(
    d: &EmpiricalDistribution,
    d_prime: &EmpiricalDistribution,
    p: f64,
) -> Result<Wasserstein> {
    wp_exact_with(d, d_prime, p, &TransportConfig::default())
}

pub fn wp_exact_with(
    d: &EmpiricalDistribution,
    d_prime: &EmpiricalDistribution,
    p: f64,
    cfg: &TransportConfig,
) -> Result<Wasserstein> {
    check_pair(d, d_prime, p)?;
    if !cfg.admits(d, d_prime) {
        let uniform = d.len() == d_prime.len() && d.is_uniform() && d_prime.is_uniform();
        return Err(Error::SupportCapExceeded {
            size: d.len() + d_prime.len(),
            cap: if uniform {
                cfg.cap_uniform
            } else {
                cfg.cap_general
            },
        });
    }
    let cost = cost_matrix(d, d_prime, p);
    let plan = if d.len() == d_prime.len() && d.is_uniform() && d_prime.is_uniform() {
        let n = d.len();
        let perm = assignment::solve(&cost, n);
        let w = 1.0 / n as f64;
        let total: f64 = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i * n + j])
            .sum::<f64>()
            * w;
        CouplingPlan {
            rows: (0..n).collect(),
            cols: perm,
            mass: vec![w; n],
            cost: total,
        }
    } else {
        let sol = simplex::solve(d.weights(), d_prime.weights(), &cost)?;
        CouplingPlan {
            rows: sol.cells.iter().map(|c| c.0).collect(),
            cols: sol.cells.iter().map(|c| c.1).collect(),
            mass: sol.cells.iter().map(|c| c.2).collect(),
            cost: sol.cost,
        }
    };
    Ok(Wasserstein {
        distance: plan.cost.max(0.0).powf(1.0 / p),
        plan,
    })
}

/// Exact transport via the simplex route regardless of the weights; the
/// second algebraic route for the uniform case.
pub fn wp_simplex(
    d: &EmpiricalDistribution,
    d_prime: &EmpiricalDistribution,
    p: f64,
) -> Result<Wasserstein> {
    check_pair(d, d_prime, p)?;
    let cost = cost_matrix(d, d_prime, p);
    let sol = simplex::solve(d.weights(), d_prime.weights(), &cost)?;
    let plan = CouplingPlan {
        rows: sol.cells.iter().map(|c| c.0).collect(),
        cols: sol.cells.iter().map(|c| c.1).collect(),
        mass: sol.cells.iter().map(|c| c.2).collect(),
        cost: sol.cost,
    };
    Ok(Wasserstein {
        distance: plan.cost.max(0.0).powf(1.0 / p),
        plan,
    })
}

pub fn wasserstein(
    d: &EmpiricalDistribution,
    d_prime: &EmpiricalDistribution,
    p: f64,
) -> Result<f64> {
    wp_exact(d, d_prime, p).map(|w| w.distance)
}

/// `(m/n)^{1/p}·D_Z`: moving `m` of `n` unit-mass points anywhere in the box.
pub fn shift_diameter_bound(m: usize, n: usize, p: f64, d_z: f64) -> Result<f64> {
    if n == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "need 0 ≤ m ≤ n, n ≥ 1 (m = {m}, n = {n})"
        )));
    }
    Ok((m as f64 / n as f64).powf(1.0 / p) * d_z)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrGap {
    pub risk_gap: f64,
    /// `L_ℓ · W₁(d, d')`.
    pub bound: f64,
    pub ok: bool,
}

/// Compares `|R(d, θ) − R(d', θ)|` with `L_ℓ W₁(d, d')`.
pub fn kr_gap_check(
    d: &EmpiricalDistribution,
    d_prime: &EmpiricalDistribution,
    theta: &[f64],
    profile: &ConstantsProfile,
) -> Result<KrGap> {
    let gap = mean_loss(d, theta)? - mean_loss(d_prime, theta)?;
    let w1 = wasserstein(d, d_prime, 1.0)?;
    let bound = profile.l_ell * w1;
    Ok(KrGap {
        risk_gap: gap,
        bound,
        ok: gap.abs() <= bound + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DomainBox;

    fn square(points: Vec<Vec<f64>>) -> EmpiricalDistribution {
        EmpiricalDistribution::from_points(
            &DomainBox::new(vec![0.0; 2], vec![1.0; 2], 0).unwrap(),
            points,
            None,
        )
        .unwrap()
    }

    #[test]
    fn identical_distributions_have_zero_distance() {
        let d = square(vec![vec![0.1, 0.2], vec![0.7, 0.3], vec![0.5, 0.5]]);
        for p in [1.0, 1.5, 2.0] {
            assert_eq!(wasserstein(&d, &d, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_diracs() {
        let a = square(vec![vec![0.0, 0.0]]);
        let b = square(vec![vec![0.3, 0.4]]);
        for p in [1.0, 1.3, 2.0] {
            assert!((wasserstein(&a, &b, p).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn general_case_marginals() {
        let bx = DomainBox::new(vec![0.0; 2], vec![1.0; 2], 0).unwrap();
        let a = EmpiricalDistribution::from_points(
            &bx,
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            Some(vec![0.5, 0.3, 0.2]),
        )
        .unwrap();
        let b = EmpiricalDistribution::from_points(
            &bx,
            vec![vec![0.5, 0.5], vec![1.0, 1.0]],
            Some(vec![0.6, 0.4]),
        )
        .unwrap();
        let w = wp_exact(&a, &b, 2.0).unwrap();
        for (x, y) in w.plan.row_marginals(3).iter().zip(a.weights()) {
            assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in w.plan.col_marginals(2).iter().zip(b.weights()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(w.plan.mass.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn cap_exceeded_is_reported() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 6.0, 0.0]).collect();
        let a = square(pts.clone());
        let b = square(pts[..5].to_vec());
        let cfg = TransportConfig {
            cap_uniform: 10,
            cap_general: 10,
        };
        assert!(matches!(
            wp_exact_with(&a, &b, 1.0, &cfg),
            Err(Error::SupportCapExceeded { size: 11, cap: 10 })
        ));
        assert!(wp_exact(&a, &a, 2.5).is_err());
    }

    #[test]
    fn shift_bound_values() {
        assert_eq!(shift_diameter_bound(0, 10, 2.0, 3.0).unwrap(), 0.0);
        assert_eq!(shift_diameter_bound(10, 10, 1.5, 3.0).unwrap(), 3.0);
        // (1816/60147)^{1/2}·√5 = 0.388540181737889624...
        let v = shift_diameter_bound(1816, 60147, 2.0, 5f64.sqrt()).unwrap();
        assert!((v - 0.388_540_181_737_889_6).abs() < 1e-12);
        assert!(shift_diameter_bound(11, 10, 2.0, 1.0).is_err());
    }

    #[test]
    fn plan_csv_export() {
        let a = square(vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        let b = square(vec![vec![1.0, 1.0], vec![0.0, 0.0]]);
        let w = wp_exact(&a, &b, 1.0).unwrap();
        assert_eq!(w.distance, 0.0);
        let mut buf = Vec::new();
        w.plan.write_csv(&mut buf, &a, &b, 1.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "src,dst,mass,cost\n0,1,0.5,0\n1,0,0.5,0\n");
    }
}
