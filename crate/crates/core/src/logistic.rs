//! L2-regularized logistic regression: loss, gradient, a deterministic
//! projected gradient solver, and the closed-form Lipschitz constants of the
//! model class.
//!
//! Points are `z = (y, x)` with `y ∈ {0, 1}`. A parameter vector of length
//! `k + 1` for `k` features carries the bias as its last coordinate (an
//! appended constant-1 feature); length `k` means no intercept.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    domain_diameter, ConstantsProfile, DomainBox, EmpiricalDistribution, ParamSpace,
};
use crate::util::{dot, norm, short_hash, sigmoid, softplus};

/// Parameter vector θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// L2 strength λ, equal to the strong-convexity constant γ.
    pub reg_lambda: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Seed for the initial iterate; `0` starts at the origin.
    pub seed: u64,
    #[serde(default = "yes")]
    pub fit_intercept: bool,
    /// Θ; `None` means the cube `[-1000, 1000]^dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_space: Option<ParamSpace>,
}

fn yes() -> bool {
    true
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            reg_lambda: 1.0,
            grad_tol: 1e-8,
            max_iters: 10_000,
            seed: 0,
            fit_intercept: true,
            param_space: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg_lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "reg_lambda must be > 0, got {}",
                self.reg_lambda
            )));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grad_tol must be > 0, got {}",
                self.grad_tol
            )));
        }
        Ok(())
    }

    pub fn param_dim(&self, n_features: usize) -> usize {
        n_features + usize::from(self.fit_intercept)
    }

    pub fn space(&self, dim: usize) -> Result<ParamSpace> {
        match &self.param_space {
            Some(s) if s.dim() != dim => Err(Error::DimensionMismatch {
                expected: dim,
                got: s.dim(),
            }),
            Some(s) => Ok(s.clone()),
            None => ParamSpace::cube(dim, 1000.0),
        }
    }
}

fn check_label(y: f64) -> Result<()> {
    if y == 0.0 || y == 1.0 {
        Ok(())
    } else {
        Err(Error::NonBinaryLabel(y))
    }
}

/// `θᵀx̃` where `x̃` appends a constant 1 when θ carries a bias.
pub fn linear_score(x: &[f64], theta: &[f64]) -> Result<f64> {
    if theta.len() == x.len() {
        Ok(dot(x, theta))
    } else if theta.len() == x.len() + 1 {
        Ok(dot(x, &theta[..x.len()]) + theta[x.len()])
    } else {
        Err(Error::DimensionMismatch {
            expected: x.len() + 1,
            got: theta.len(),
        })
    }
}

/// `f_θ(x) = σ(θᵀx̃)`.
pub fn predict(x: &[f64], theta: &[f64]) -> Result<f64> {
    linear_score(x, theta).map(sigmoid)
}

/// Per-example loss `softplus(u) − y·u + λ/2‖θ‖²`.
pub fn logistic_loss(z: &[f64], theta: &[f64], reg_lambda: f64) -> Result<f64> {
    let (y, x) = split(z)?;
    check_label(y)?;
    let u = linear_score(x, theta)?;
    Ok(softplus(u) - y * u + 0.5 * reg_lambda * dot(theta, theta))
}

/// Gradient in θ of [`logistic_loss`]: `(σ(u) − y)·x̃ + λθ`.
pub fn logistic_grad(z: &[f64], theta: &[f64], reg_lambda: f64) -> Result<Vec<f64>> {
    let (y, x) = split(z)?;
    check_label(y)?;
    let r = sigmoid(linear_score(x, theta)?) - y;
    let mut g: Vec<f64> = theta.iter().map(|t| reg_lambda * t).collect();
    for (gj, xj) in g.iter_mut().zip(x) {
        *gj += r * xj;
    }
    if theta.len() == x.len() + 1 {
        g[x.len()] += r;
    }
    Ok(g)
}

fn split(z: &[f64]) -> Result<(f64, &[f64])> {
    match z.split_first() {
        Some((y, x)) => Ok((*y, x)),
        None => Err(Error::InvalidArgument("empty data point".into())),
    }
}

fn check_dist(dist: &EmpiricalDistribution, theta: &[f64]) -> Result<()> {
    if dist.domain().dim_y != 1 {
        return Err(Error::InvalidArgument(
            "logistic model needs one label coordinate".into(),
        ));
    }
    let k = dist.domain().dim_x;
    if theta.len() != k && theta.len() != k + 1 {
        return Err(Error::DimensionMismatch {
            expected: k + 1,
            got: theta.len(),
        });
    }
    for i in 0..dist.len() {
        check_label(dist.label(i))?;
    }
    Ok(())
}

/// Mean loss without the regularizer, `E_d[ℓ(z, θ)]`.
pub fn mean_loss(dist: &EmpiricalDistribution, theta: &[f64]) -> Result<f64> {
    check_dist(dist, theta)?;
    Ok(mean_loss_unchecked(dist, theta))
}

fn mean_loss_unchecked(dist: &EmpiricalDistribution, theta: &[f64]) -> f64 {
    let k = dist.domain().dim_x;
    let bias = if theta.len() == k + 1 { theta[k] } else { 0.0 };
    let w = &theta[..k];
    (0..dist.len())
        .map(|i| {
            let u = dot(dist.features(i), w) + bias;
            dist.weights()[i] * (softplus(u) - dist.label(i) * u)
        })
        .sum()
}

/// `R(d, θ) = E_d[ℓ(z, θ)] + λ/2‖θ‖²`.
pub fn empirical_risk(dist: &EmpiricalDistribution, theta: &[f64], reg_lambda: f64) -> Result<f64> {
    Ok(mean_loss(dist, theta)? + 0.5 * reg_lambda * dot(theta, theta))
}

fn risk_and_grad(dist: &EmpiricalDistribution, theta: &[f64], reg_lambda: f64) -> (f64, Vec<f64>) {
    let k = dist.domain().dim_x;
    let has_bias = theta.len() == k + 1;
    let bias = if has_bias { theta[k] } else { 0.0 };
    let w = &theta[..k];
    let mut g = vec![0.0; theta.len()];
    let mut f = 0.0;
    for i in 0..dist.len() {
        let x = dist.features(i);
        let y = dist.label(i);
        let wi = dist.weights()[i];
        let u = dot(x, w) + bias;
        f += wi * (softplus(u) - y * u);
        let r = wi * (sigmoid(u) - y);
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj += r * xj;
        }
        if has_bias {
            g[k] += r;
        }
    }
    for (gj, t) in g.iter_mut().zip(theta) {
        *gj += reg_lambda * t;
    }
    (f + 0.5 * reg_lambda * dot(theta, theta), g)
}

/// Gradient of the regularized empirical risk.
pub fn risk_gradient(
    dist: &EmpiricalDistribution,
    theta: &[f64],
    reg_lambda: f64,
) -> Result<Vec<f64>> {
    check_dist(dist, theta)?;
    Ok(risk_and_grad(dist, theta, reg_lambda).1)
}

/// Hessian of the regularized empirical risk, `Σ wᵢ σ(1−σ) x̃x̃ᵀ + λI`.
pub fn risk_hessian(
    dist: &EmpiricalDistribution,
    theta: &[f64],
    reg_lambda: f64,
) -> Result<Vec<Vec<f64>>> {
    check_dist(dist, theta)?;
    let k = dist.domain().dim_x;
    let d = theta.len();
    let mut h = vec![vec![0.0; d]; d];
    let mut xt = vec![1.0; d];
    for i in 0..dist.len() {
        xt[..k].copy_from_slice(dist.features(i));
        let s = sigmoid(linear_score(dist.features(i), theta)?);
        let c = dist.weights()[i] * s * (1.0 - s);
        for a in 0..d {
            for b in 0..d {
                h[a][b] += c * xt[a] * xt[b];
            }
        }
    }
    for (a, row) in h.iter_mut().enumerate() {
        row[a] += reg_lambda;
    }
    Ok(h)
}

/// Smallest eigenvalue of a symmetric matrix by power iteration on
/// `cI − H`, with `c` the Gershgorin upper bound. The Rayleigh quotient
/// never overshoots, so the estimate is never below the true minimum.
pub fn min_eigenvalue(h: &[Vec<f64>]) -> f64 {
    let d = h.len();
    if d == 0 {
        return 0.0;
    }
    let c = h
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let apply = |v: &[f64]| -> Vec<f64> { (0..d).map(|a| c * v[a] - dot(&h[a], v)).collect() };
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.01 * i as f64).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut rayleigh = dot(&v, &apply(&v));
    for _ in 0..20_000 {
        let w = apply(&v);
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / nw).collect();
        let r = dot(&v, &apply(&v));
        let done = (r - rayleigh).abs() <= 1e-15 * c.max(1.0);
        rayleigh = r;
        if done {
            break;
        }
    }
    c - rayleigh
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: ParamVector,
    /// Norm of the projected-gradient mapping (the plain gradient norm when
    /// the solution is interior to Θ).
    pub grad_norm: f64,
    pub iters: usize,
    pub risk: f64,
    /// Regularized risk at every iterate.
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// JSON form of a fit: `{theta, grad_norm, iters, config_hash}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub theta: Vec<f64>,
    pub grad_norm: f64,
    pub iters: usize,
    pub config_hash: String,
}

impl FitResult {
    pub fn report(&self, cfg: &FitConfig) -> FitReport {
        FitReport {
            theta: self.theta.0.clone(),
            grad_norm: self.grad_norm,
            iters: self.iters,
            config_hash: short_hash(cfg),
        }
    }
}

/// `G(d) = argmin_θ R(d, θ)`.
pub fn erm_fit(dist: &EmpiricalDistribution, cfg: &FitConfig) -> Result<FitResult> {
    erm_fit_from(dist, cfg, None)
}

/// [`erm_fit`] started from `init` (warm start) when given.
pub fn erm_fit_from(
    dist: &EmpiricalDistribution,
    cfg: &FitConfig,
    init: Option<&[f64]>,
) -> Result<FitResult> {
    cfg.validate()?;
    let k = dist.domain().dim_x;
    let dim = cfg.param_dim(k);
    let space = cfg.space(dim)?;
    let mut theta = match init {
        Some(t) if t.len() != dim => {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: t.len(),
            })
        }
        Some(t) => t.to_vec(),
        None if cfg.seed == 0 => vec![0.0; dim],
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..dim).map(|_| rng.random_range(-0.01..0.01)).collect()
        }
    };
    space.project(&mut theta);
    check_dist(dist, &theta)?;

    let lambda = cfg.reg_lambda;
    // Hessian ≤ λ + max‖x̃‖²/4, so 1/L is a guaranteed-descent step.
    let max_sq = (0..dist.len())
        .map(|i| dot(dist.features(i), dist.features(i)) + if dim > k { 1.0 } else { 0.0 })
        .fold(0.0, f64::max);
    let safe_step = 1.0 / (lambda + 0.25 * max_sq);
    let mut step = safe_step;
    let mut history = Vec::new();
    let mut cand = vec![0.0; dim];

    for iter in 0.. {
        let (f, g) = risk_and_grad(dist, &theta, lambda);
        history.push(f);
        // Projected gradient mapping at the safe step.
        for j in 0..dim {
            cand[j] = theta[j] - safe_step * g[j];
        }
        space.project(&mut cand);
        let gnorm = theta
            .iter()
            .zip(&cand)
            .map(|(a, b)| ((a - b) / safe_step).powi(2))
            .sum::<f64>()
            .sqrt();
        if gnorm <= cfg.grad_tol {
            return Ok(FitResult {
                theta: ParamVector(theta),
                grad_norm: gnorm,
                iters: iter,
                risk: f,
                history,
            });
        }
        if iter >= cfg.max_iters {
            return Err(Error::NotConverged {
                iters: iter,
                grad_norm: gnorm,
                theta,
            });
        }
        step = (2.0 * step).min(1e4 * safe_step);
        let slack = 4.0 * f64::EPSILON * (1.0 + f.abs());
        loop {
            for j in 0..dim {
                cand[j] = theta[j] - step * g[j];
            }
            space.project(&mut cand);
            if step <= safe_step {
                break;
            }
            let mut lin = 0.0;
            let mut quad = 0.0;
            for j in 0..dim {
                let dj = cand[j] - theta[j];
                lin += g[j] * dj;
                quad += dj * dj;
            }
            let fc = mean_loss_unchecked(dist, &cand) + 0.5 * lambda * dot(&cand, &cand);
            if fc <= f + lin + quad / (2.0 * step) + slack {
                break;
            }
            step = (0.5 * step).max(safe_step);
        }
        theta.copy_from_slice(&cand);
    }
    unreachable!()
}

/// `L_ℓ = D_Z / (1 + e^{−D_Z·D_Θ})`.
pub fn lipschitz_loss_constant(d_z: f64, d_theta: f64) -> f64 {
    d_z / (1.0 + (-d_z * d_theta).exp())
}

/// `(L_a, L̃_a) = (D_X/γ, 1/(1 + D_X/γ))`.
pub fn argmin_lipschitz_constant(d_x: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    let l_a = d_x / gamma;
    Ok((l_a, 1.0 / (1.0 + l_a)))
}

/// `L_f = ‖θ‖_max / 4`, from `σ' ≤ 1/4`.
pub fn prediction_lipschitz_constant(theta_radius: f64) -> f64 {
    theta_radius / 4.0
}

/// Profile derived from the data box and Θ for the logistic class, with
/// κ defaulted to `D_Z²/4 + γ`.
pub fn logistic_profile(
    domain: &DomainBox,
    space: &ParamSpace,
    gamma: f64,
    eps_sens: f64,
    p: f64,
    delta: f64,
) -> Result<ConstantsProfile> {
    let d_z = domain_diameter(domain)?;
    let d_theta = space.diameter();
    let (l_a, l_a_tilde) = argmin_lipschitz_constant(domain.feature_diameter(), gamma)?;
    let profile = ConstantsProfile {
        schema: 1,
        l_ell: lipschitz_loss_constant(d_z, d_theta),
        l_a,
        l_a_tilde,
        l_f: prediction_lipschitz_constant(space.max_norm()),
        gamma,
        kappa: d_z * d_z / 4.0 + gamma,
        eps_sens,
        p,
        nu: domain.dim() as f64,
        c_a: 1.0,
        c_b: 1.0,
        d_z,
        d_theta,
        f_bound: 1.0,
        b_const: 0.0,
        delta,
        sampling_lipschitz: None,
        complexity_inf: None,
        complexity_l2: None,
    };
    profile.validate()?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_at_origin_is_log2() {
        let z1 = [1.0, 0.3, 0.7];
        let z0 = [0.0, 0.3, 0.7];
        let t = [0.0, 0.0, 0.0];
        assert!((logistic_loss(&z1, &t, 0.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((logistic_loss(&z0, &t, 0.0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_at_margin_five() {
        // 0.00671534848911806861... from a 30-digit evaluation of log(1+e^-5).
        let l = logistic_loss(&[1.0, 1.0], &[5.0], 0.0).unwrap();
        assert!((l - 0.006_715_348_489_118_068_6).abs() < 1e-15);
    }

    #[test]
    fn loss_is_stable_for_large_margins() {
        let l = logistic_loss(&[0.0, 1.0], &[800.0], 0.0).unwrap();
        assert!((l - 800.0).abs() < 1e-9);
        let l = logistic_loss(&[1.0, 1.0], &[800.0], 0.0).unwrap();
        assert!(l >= 0.0 && l < 1e-300);
    }

    #[test]
    fn gradient_at_origin() {
        let x = [0.4, 0.9];
        let g = logistic_grad(&[1.0, x[0], x[1]], &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(g, vec![-0.2, -0.45]);
        let g = logistic_grad(&[0.0, x[0], x[1]], &[0.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(g, vec![0.2, 0.45, 0.5]);
    }

    #[test]
    fn non_binary_label_rejected() {
        assert!(matches!(
            logistic_loss(&[0.5, 1.0], &[0.0], 0.0),
            Err(Error::NonBinaryLabel(_))
        ));
        assert!(logistic_grad(&[2.0, 1.0], &[0.0], 0.0).is_err());
        assert!(logistic_loss(&[1.0, 1.0], &[0.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn lipschitz_constants() {
        let d_z = 5f64.sqrt();
        let l = lipschitz_loss_constant(d_z, 2000.0 * 5f64.sqrt());
        assert!((l - 2.236).abs() < 1e-3);
        assert!((lipschitz_loss_constant(28f64.sqrt(), 1e6) - 28f64.sqrt()).abs() < 1e-12);
        assert_eq!(lipschitz_loss_constant(3.0, 0.0), 1.5);

        let (la, lt) = argmin_lipschitz_constant(2.0, 1.0).unwrap();
        assert_eq!(la, 2.0);
        assert!((lt - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(argmin_lipschitz_constant(0.0, 1.0).unwrap(), (0.0, 1.0));
        let (la, lt) = argmin_lipschitz_constant(1.0, 2.0).unwrap();
        assert_eq!(la, 0.5);
        assert!((lt - 2.0 / 3.0).abs() < 1e-15);
        assert!(argmin_lipschitz_constant(1.0, 0.0).is_err());

        assert_eq!(prediction_lipschitz_constant(1.0), 0.25);
        assert_eq!(prediction_lipschitz_constant(0.0), 0.0);
        assert_eq!(prediction_lipschitz_constant(4.0), 1.0);
    }

    #[test]
    fn fit_config_validation() {
        let cfg = FitConfig {
            reg_lambda: 0.0,
            ..FitConfig::default()
        };
        let d = EmpiricalDistribution::from_points(&DomainBox::unit(1), vec![vec![1.0, 0.5]], None)
            .unwrap();
        assert!(erm_fit(&d, &cfg).is_err());
    }

    #[test]
    fn max_iters_error_carries_iterate() {
        let d = EmpiricalDistribution::from_points(
            &DomainBox::unit(2),
            vec![vec![1.0, 0.2, 0.9], vec![0.0, 0.8, 0.1]],
            None,
        )
        .unwrap();
        let cfg = FitConfig {
            max_iters: 2,
            grad_tol: 1e-14,
            ..FitConfig::default()
        };
        match erm_fit(&d, &cfg) {
            Err(Error::NotConverged {
                iters,
                theta,
                grad_norm,
            }) => {
                assert_eq!(iters, 2);
                assert_eq!(theta.len(), 3);
                assert!(grad_norm > 0.0);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn constrained_fit_stops_on_projected_gradient() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, (i as f64) / 20.0]).collect();
        let d = EmpiricalDistribution::from_points(&DomainBox::unit(1), pts, None).unwrap();
        let cfg = FitConfig {
            reg_lambda: 0.01,
            param_space: Some(ParamSpace::ball(2, 0.1).unwrap()),
            ..FitConfig::default()
        };
        let fit = erm_fit(&d, &cfg).unwrap();
        assert!((norm(&fit.theta.0) - 0.1).abs() < 1e-9);
        assert!(fit.grad_norm <= cfg.grad_tol);
    }

    #[test]
    fn min_eigenvalue_of_diagonal() {
        let h = vec![
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.5, 0.0],
            vec![0.0, 0.0, 7.0],
        ];
        assert!((min_eigenvalue(&h) - 1.5).abs() < 1e-9);
    }
}
