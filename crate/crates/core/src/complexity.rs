//! Covering-number entropy integrals for Lipschitz-in-parameter classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DomainBox, ParamSpace};

/// `{f_θ : θ ∈ Θ}` with `Θ` inside a Euclidean ball and
/// `‖f_θ − f_θ'‖_∞ ≤ param_lipschitz · ‖θ − θ'‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub param_dim: usize,
    pub param_radius: f64,
    pub param_lipschitz: f64,
    pub output_bound: f64,
}

impl ClassSpec {
    pub fn validate(&self) -> Result<()> {
        if self.param_dim == 0 {
            return Err(Error::InvalidArgument("param_dim must be ≥ 1".into()));
        }
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.param_radius) || !ok(self.param_lipschitz) || !(self.output_bound > 0.0) {
            return Err(Error::InvalidArgument(
                "class radius and Lipschitz constant must be ≥ 0, output bound > 0".into(),
            ));
        }
        Ok(())
    }

    /// Sup-norm diameter `2·L·R`.
    pub fn diameter(&self) -> f64 {
        2.0 * self.param_lipschitz * self.param_radius
    }

    /// The class `x ↦ σ(θᵀx̃)`: Lipschitz in θ with constant `max‖x̃‖/4`.
    pub fn logistic(domain: &DomainBox, space: &ParamSpace, fit_intercept: bool) -> Self {
        let dy = domain.dim_y;
        let mut sq: f64 = (dy..domain.dim())
            .map(|c| domain.lower[c].abs().max(domain.upper[c].abs()).powi(2))
            .sum();
        if fit_intercept {
            sq += 1.0;
        }
        ClassSpec {
            param_dim: space.dim(),
            param_radius: space.max_norm(),
            param_lipschitz: sq.sqrt() / 4.0,
            output_bound: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Absolute error target.
    pub tol: f64,
    pub max_depth: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            tol: 1e-10,
            max_depth: 50,
        }
    }
}

/// `dim · log(1 + 2LR/ε)`, and 0 once `ε` reaches the class diameter.
pub fn covering_log_bound(spec: &ClassSpec, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} must be > 0")));
    }
    let diam = spec.diameter();
    if eps >= diam {
        return Ok(0.0);
    }
    Ok(spec.param_dim as f64 * (1.0 + diam / eps).ln())
}

/// Left edge of the plain adaptive-Simpson range; the head below it is
/// integrated after `ε = a·e^{−u}`.
const LEFT_CAP: f64 = 1e-6;

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: usize) -> Result<f64> {
    struct Seg {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    }
    let est = |a: f64, b: f64, fa: f64, fm: f64, fb: f64| (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let mut stack = vec![Seg {
        a,
        b,
        fa,
        fm,
        fb,
        whole: est(a, b, fa, fm, fb),
        tol,
        depth: 0,
    }];
    let mut total = 0.0;
    let mut failed = false;
    while let Some(s) = stack.pop() {
        let m = 0.5 * (s.a + s.b);
        let (lm, rm) = (0.5 * (s.a + m), 0.5 * (m + s.b));
        let (flm, frm) = (f(lm), f(rm));
        let left = est(s.a, m, s.fa, flm, s.fm);
        let right = est(m, s.b, s.fm, frm, s.fb);
        let diff = left + right - s.whole;
        // Below this floor the difference is rounding noise.
        let tol = s.tol.max(64.0 * f64::EPSILON * (left.abs() + right.abs()));
        if diff.abs() <= 15.0 * tol || s.depth >= max_depth {
            if diff.abs() > 15.0 * tol {
                failed = true;
            }
            total += left + right + diff / 15.0;
            continue;
        }
        let half = 0.5 * s.tol;
        stack.push(Seg {
            a: m,
            b: s.b,
            fa: s.fm,
            fm: frm,
            fb: s.fb,
            whole: right,
            tol: half,
            depth: s.depth + 1,
        });
        stack.push(Seg {
            a: s.a,
            b: m,
            fa: s.fa,
            fm: flm,
            fb: s.fm,
            whole: left,
            tol: half,
            depth: s.depth + 1,
        });
    }
    if failed || !total.is_finite() {
        Err(Error::Quadrature { partial: total })
    } else {
        Ok(total)
    }
}

/// `∫_0^upper √(covering_log_bound(ε)) dε`.
fn entropy_integral(spec: &ClassSpec, upper: f64, q: &QuadConfig) -> Result<f64> {
    spec.validate()?;
    if !(q.tol > 0.0) {
        return Err(Error::InvalidArgument("quad tolerance must be > 0".into()));
    }
    let diam = spec.diameter();
    let b = upper.min(diam);
    if b <= 0.0 {
        return Ok(0.0);
    }
    let g = |e: f64| covering_log_bound(spec, e).map_or(0.0, f64::sqrt);
    let a = LEFT_CAP.min(0.5 * b);
    // √log N vanishes like √(b − ε) at the right end; on [b/2, b] the
    // substitution ε = b − s² smooths that out.
    let mid = 0.5 * b;
    let gs = |s: f64| 2.0 * s * g(b - s * s);
    let body = simpson(&g, a, mid, 0.25 * q.tol, q.max_depth)?
        + simpson(&gs, 0.0, (b - mid).sqrt(), 0.25 * q.tol, q.max_depth)?;
    // Head: ∫_0^a g(ε) dε = ∫_0^∞ g(a e^{−u}) a e^{−u} du; the integrand
    // decays like √u e^{−u}, so u ≤ 60 leaves a tail below 1e−24.
    let h = |u: f64| g(a * (-u).exp()) * a * (-u).exp();
    let head = simpson(&h, 0.0, 60.0, 0.5 * q.tol, q.max_depth).map_err(|e| match e {
        Error::Quadrature { partial } => Error::Quadrature {
            partial: partial + body,
        },
        other => other,
    })?;
    Ok(body + head)
}

/// Uniform-norm entropy integral, over `(0, ε_max]` where `ε_max` is the
/// class diameter (the integrand vanishes beyond it).
pub fn entropy_integral_inf(spec: &ClassSpec, q: &QuadConfig) -> Result<f64> {
    entropy_integral(spec, f64::INFINITY, q)
}

/// `L2(d)` entropy integral over `(0, 1]`, bounded uniformly in `d` through
/// `‖·‖_{L2(d)} ≤ ‖·‖_∞`.
pub fn entropy_integral_l2(spec: &ClassSpec, q: &QuadConfig) -> Result<f64> {
    entropy_integral(spec, 1.0, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(dim: usize) -> ClassSpec {
        ClassSpec {
            param_dim: dim,
            param_radius: 1.0,
            param_lipschitz: 1.0,
            output_bound: 1.0,
        }
    }

    #[test]
    fn covering_values() {
        let s = ClassSpec {
            param_lipschitz: 0.5,
            ..unit(1)
        };
        assert_abs_diff_eq!(
            covering_log_bound(&s, 0.5).unwrap(),
            3f64.ln(),
            epsilon = 1e-15
        );
        assert_eq!(covering_log_bound(&s, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            covering_log_bound(&unit(1), 1.0).unwrap(),
            3f64.ln(),
            epsilon = 1e-15
        );
        assert_eq!(covering_log_bound(&unit(1), 2.0).unwrap(), 0.0);
        assert_eq!(covering_log_bound(&unit(1), 5.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            covering_log_bound(&unit(6), 0.3).unwrap(),
            2.0 * covering_log_bound(&unit(3), 0.3).unwrap(),
            epsilon = 1e-12
        );
        assert!(covering_log_bound(&unit(1), 0.0).is_err());
    }

    #[test]
    fn integrals_match_oracle() {
        let q = QuadConfig::default();
        assert_abs_diff_eq!(
            entropy_integral_l2(&unit(1), &q).unwrap(),
            1.352581358254848,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            entropy_integral_inf(&unit(1), &q).unwrap(),
            2.279546748487849,
            epsilon = 1e-9
        );
    }

    #[test]
    fn zero_diameter_is_zero() {
        let s = ClassSpec {
            param_radius: 0.0,
            ..unit(4)
        };
        assert_eq!(
            entropy_integral_inf(&s, &QuadConfig::default()).unwrap(),
            0.0
        );
        assert_eq!(
            entropy_integral_l2(&s, &QuadConfig::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn tolerance_halving_converges() {
        let s = ClassSpec {
            param_dim: 3,
            param_radius: 2.0,
            param_lipschitz: 0.7,
            output_bound: 1.0,
        };
        let a = entropy_integral_inf(
            &s,
            &QuadConfig {
                tol: 1e-6,
                max_depth: 50,
            },
        )
        .unwrap();
        let b = entropy_integral_inf(
            &s,
            &QuadConfig {
                tol: 5e-7,
                max_depth: 50,
            },
        )
        .unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn tiny_depth_reports_partial() {
        let r = entropy_integral_inf(
            &unit(2),
            &QuadConfig {
                tol: 1e-14,
                max_depth: 2,
            },
        );
        assert!(matches!(r, Err(Error::Quadrature { partial }) if partial > 0.0));
    }

    proptest::proptest! {
        #[test]
        fn monotone_in_class_size(dim in 1usize..6, r in 0.1f64..3.0, l in 0.1f64..2.0) {
            let q = QuadConfig { tol: 1e-9, max_depth: 50 };
            let s = ClassSpec { param_dim: dim, param_radius: r, param_lipschitz: l, output_bound: 1.0 };
            let base = entropy_integral_inf(&s, &q).unwrap();
            let bigger = [
                ClassSpec { param_dim: dim + 1, ..s.clone() },
                ClassSpec { param_radius: 2.0 * r, ..s.clone() },
                ClassSpec { param_lipschitz: 2.0 * l, ..s.clone() },
            ];
            for b in &bigger {
                proptest::prop_assert!(entropy_integral_inf(b, &q).unwrap() > base);
            }
            let l2 = entropy_integral_l2(&s, &q).unwrap();
            proptest::prop_assert!(l2 <= base + 1e-9);
        }

        #[test]
        fn integrand_nonincreasing(e1 in 1e-8f64..3.0, e2 in 1e-8f64..3.0) {
            let s = unit(2);
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let a = covering_log_bound(&s, lo).unwrap();
            let b = covering_log_bound(&s, hi).unwrap();
            proptest::prop_assert!(a >= b && b >= 0.0);
        }
    }
}
