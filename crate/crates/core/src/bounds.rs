//! Closed-form risk and generalization bounds, each returned as a
//! term-decomposed [`BoundReport`].
//!
//! `terms` holds the summands (their sum is `total`); `diagnostics` holds
//! intermediate quantities such as radii and geometric factors that are
//! reported but not added.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::ConstantsProfile;
use crate::rerm::RermTrace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: String,
    pub total: f64,
    pub terms: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, f64>,
    /// Probability level the statement holds at.
    pub confidence: f64,
    pub inputs_hash: String,
}

impl BoundReport {
    fn build(
        kind: &str,
        terms: &[(&str, f64)],
        diagnostics: &[(&str, f64)],
        confidence: f64,
        profile: &ConstantsProfile,
    ) -> Result<Self> {
        if let Some((name, v)) = terms.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{kind}: term {name} = {v} is not a finite nonnegative number"
            )));
        }
        Ok(BoundReport {
            kind: kind.to_string(),
            total: terms.iter().map(|t| t.1).sum(),
            terms: terms.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            diagnostics: diagnostics
                .iter()
                .map(|&(k, v)| (k.to_string(), v))
                .collect(),
            confidence,
            inputs_hash: profile.fingerprint(),
        })
    }

    pub fn term(&self, name: &str) -> f64 {
        self.terms.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn diagnostic(&self, name: &str) -> f64 {
        self.diagnostics.get(name).copied().unwrap_or(f64::NAN)
    }

    /// Header plus one row: `kind,total,confidence,<terms>,<diagnostics>`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["kind".to_string(), "total".into(), "confidence".into()];
        header.extend(self.terms.keys().cloned());
        header.extend(self.diagnostics.keys().cloned());
        wr.write_record(&header)?;
        let mut row = vec![
            self.kind.clone(),
            self.total.to_string(),
            self.confidence.to_string(),
        ];
        row.extend(self.terms.values().map(f64::to_string));
        row.extend(self.diagnostics.values().map(f64::to_string));
        wr.write_record(&row)?;
        wr.flush()?;
        Ok(())
    }
}

/// `q(δ)`: the `1 − δ/2` quantile of the standard normal. `q(1) = 0`.
pub fn normal_quantile(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} outside (0, 1]"
        )));
    }
    if delta == 1.0 {
        return Ok(0.0);
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(1.0 - delta / 2.0))
}

/// `(ratio^T − 1)/(ratio − 1)`, replaced by the limit `T` near ratio 1.
pub fn geometric_factor(ratio: f64, t: usize) -> f64 {
    if (ratio - 1.0).abs() < 1e-9 {
        t as f64
    } else {
        (ratio.powi(t as i32) - 1.0) / (ratio - 1.0)
    }
}

fn check_mn(m: usize, n: usize) -> Result<()> {
    if n == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "need 0 ≤ m ≤ n and n ≥ 1 (m = {m}, n = {n})"
        )));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} outside (0, 1)"
        )));
    }
    Ok(())
}

/// `(log(C_a/δ)/(C_b n))^{p/ν}`: concentration of the empirical measure.
pub fn fournier_term(n: usize, delta: f64, p: f64, nu: f64, c_a: f64, c_b: f64) -> Result<f64> {
    check_delta(delta)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be ≥ 1".into()));
    }
    let ratio = c_a / delta;
    if ratio < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "C_a/δ = {ratio} < 1 makes the log negative"
        )));
    }
    Ok((ratio.ln() / (c_b * n as f64)).powf(p / nu))
}

fn fournier_for(profile: &ConstantsProfile, n: usize) -> Result<f64> {
    fournier_term(
        n,
        profile.delta,
        profile.p,
        profile.nu,
        profile.c_a,
        profile.c_b,
    )
}

/// Bound on `W_p(d̂_0, d̂_T)` after `T` rounds with at most `m` of `n`
/// units changing per round.
pub fn in_sample_shift_bound(
    eps: f64,
    t: usize,
    m: usize,
    n: usize,
    p: f64,
    d_z: f64,
    l_a_tilde: f64,
) -> Result<f64> {
    check_mn(m, n)?;
    if t == 0 || !(eps >= 0.0) {
        return Err(Error::InvalidArgument("need T ≥ 1 and ε ≥ 0".into()));
    }
    Ok(geometric_factor(eps, t) * (m as f64 / n as f64).powf(1.0 / p) * d_z * l_a_tilde)
}

fn wald(p_hat: f64, size: f64, delta: f64) -> Result<f64> {
    let q = normal_quantile(delta)?;
    Ok((p_hat + q * (p_hat * (1.0 - p_hat) / size).sqrt()).clamp(0.0, 1.0))
}

/// Upper end of the one-sided Wald interval for the response rate, in `[0, 1]`.
pub fn wald_upper(m: usize, n: usize, delta: f64) -> Result<f64> {
    check_mn(m, n)?;
    wald(m as f64 / n as f64, n as f64, delta)
}

/// Wald upper end with the rounds pooled: mean `M_T/(Tn)`, size `Tn`.
pub fn pooled_wald_upper(m_list: &[usize], n: usize, delta: f64) -> Result<f64> {
    if m_list.is_empty() {
        return Err(Error::InvalidArgument("empty m list".into()));
    }
    for &m in m_list {
        check_mn(m, n)?;
    }
    let total: usize = m_list.iter().sum();
    let size = (m_list.len() * n) as f64;
    wald(total as f64 / size, size, delta)
}

/// Excess risk of RERM trained on performative samples: sampling,
/// performative (ratio εκ/γ) and Rademacher summands.
pub fn excess_risk_bound(
    profile: &ConstantsProfile,
    t: usize,
    m: usize,
    n: usize,
    complexity_l2: f64,
) -> Result<BoundReport> {
    profile.validate()?;
    check_mn(m, n)?;
    if t == 0 || !(complexity_l2 >= 0.0) {
        return Err(Error::InvalidArgument(
            "need T ≥ 1 and a nonnegative complexity".into(),
        ));
    }
    let ratio = profile.contraction_ratio();
    let geom = geometric_factor(ratio, t);
    let sampling = profile.l_ell * fournier_for(profile, n)?;
    let performative = profile.l_ell
        * profile.l_a
        * geom
        * (m as f64 / n as f64).powf(1.0 / profile.p)
        * profile.d_z;
    let rademacher = profile.f_bound * profile.l_ell / (n as f64).sqrt()
        * (24.0 * complexity_l2 + 2.0 * (2.0 * (1.0 / profile.delta).ln()).sqrt());
    BoundReport::build(
        "excess_risk_rq1",
        &[
            ("sampling", sampling),
            ("performative", performative),
            ("rademacher", rademacher),
        ],
        &[("geometric_factor", geom), ("ratio", ratio)],
        1.0 - profile.delta / 2.0,
        profile,
    )
}

/// Generalization gap on the historical sample after `T` rounds.
pub fn gen_gap_bound_rq1(
    profile: &ConstantsProfile,
    t: usize,
    m: usize,
    n: usize,
) -> Result<BoundReport> {
    profile.validate()?;
    check_mn(m, n)?;
    if t == 0 {
        return Err(Error::InvalidArgument("T must be ≥ 1".into()));
    }
    let geom = geometric_factor(profile.eps_sens, t - 1);
    let c = fournier_for(profile, n)?;
    let sampling = profile.sampling_lipschitz.unwrap_or(profile.l_ell) * c;
    let performative = profile.l_ell
        * geom
        * (m as f64 / n as f64).powf(1.0 / profile.p)
        * profile.d_z
        * profile.l_a_tilde;
    BoundReport::build(
        "gen_gap_rq1",
        &[("sampling", sampling), ("performative", performative)],
        &[("C", c), ("geometric_factor", geom)],
        1.0 - profile.delta / 2.0,
        profile,
    )
}

/// `A(m, n) = 2 D_Z (wald_upper)^{1/p}`.
pub fn a_term(m: usize, n: usize, delta: f64, p: f64, d_z: f64) -> Result<f64> {
    Ok(2.0 * d_z * wald_upper(m, n, delta)?.powf(1.0 / p))
}

/// Performative excess risk: depends only on constants, `T`, `m` and `n`.
pub fn perf_excess_risk_bound(
    profile: &ConstantsProfile,
    t: usize,
    m: usize,
    n: usize,
    complexity_l2: f64,
) -> Result<BoundReport> {
    profile.validate()?;
    check_mn(m, n)?;
    if t == 0 || !(complexity_l2 >= 0.0) {
        return Err(Error::InvalidArgument(
            "need T ≥ 1 and a nonnegative complexity".into(),
        ));
    }
    let l = profile.l_ell;
    let a = a_term(m, n, profile.delta, profile.p, profile.d_z)?;
    let c = fournier_for(profile, n)?;
    let geom = geometric_factor(profile.contraction_ratio(), t);
    let k = geom * (m as f64 / n as f64).powf(1.0 / profile.p);
    let rademacher = 2.0 * profile.f_bound / (n as f64).sqrt()
        * (12.0 * complexity_l2 + (2.0 * (1.0 / profile.delta).ln()).sqrt());
    BoundReport::build(
        "perf_excess_rq2",
        &[
            ("population_shift", l * 2.0 * a),
            ("sampling", l * c),
            ("rademacher", l * rademacher),
            ("performative", l * profile.l_a * profile.d_z * (a + k)),
        ],
        &[("A", a), ("C", c), ("K", k), ("geometric_factor", geom)],
        1.0 - profile.delta / 4.0,
        profile,
    )
}

/// Common radius of the population and sample ambiguity balls.
pub fn radius_r(m: usize, n: usize, delta: f64, p: f64, d_z: f64, l_a_tilde: f64) -> Result<f64> {
    let population = wald_upper(m, n, delta)?.powf(1.0 / p) * d_z;
    let sample = (m as f64 / n as f64).powf(1.0 / p) * d_z * l_a_tilde;
    Ok(population.max(sample))
}

/// Which inner term the complexity summand of [`gen_gap_i`] uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityForm {
    /// `L_ℓ L_f R^{1−p} D_Z^p`.
    #[default]
    Theorem,
    /// `L_ℓ L_f R^{1−p}`, as in the labour-market case study decomposition.
    CaseStudy,
}

fn gen_gap_common(
    kind: &str,
    profile: &ConstantsProfile,
    n: usize,
    r: f64,
    complexity_inf: f64,
    inner: f64,
) -> Result<BoundReport> {
    let rn = (n as f64).sqrt();
    let complexity = 48.0 / rn * (complexity_inf + inner);
    let sampling = profile.f_bound * (2.0 * (2.0 / profile.delta).ln() / n as f64).sqrt();
    let performative = 2.0 * profile.l_ell * r;
    BoundReport::build(
        kind,
        &[
            ("complexity", complexity),
            ("sampling", sampling),
            ("performative", performative),
        ],
        &[("R", r), ("complexity_inner", inner)],
        1.0 - profile.delta,
        profile,
    )
}

fn check_gen_gap(profile: &ConstantsProfile, n: usize, r: f64, complexity_inf: f64) -> Result<()> {
    profile.validate()?;
    if n == 0 || !(r >= 0.0) || !(complexity_inf >= 0.0) {
        return Err(Error::InvalidArgument(
            "need n ≥ 1, R ≥ 0 and a nonnegative complexity".into(),
        ));
    }
    Ok(())
}

/// Performative generalization gap, Lipschitz condition on the loss.
pub fn gen_gap_i(
    profile: &ConstantsProfile,
    n: usize,
    r: f64,
    complexity_inf: f64,
    form: ComplexityForm,
) -> Result<BoundReport> {
    check_gen_gap(profile, n, r, complexity_inf)?;
    let p = profile.p;
    if r == 0.0 && p > 1.0 {
        return Err(Error::InvalidArgument(
            "R = 0 with p > 1 makes R^{1−p} singular; use a response grid starting above zero (e.g. ξ ≥ 0.01)".into(),
        ));
    }
    let mut inner = profile.l_ell * profile.l_f * r.powf(1.0 - p);
    if form == ComplexityForm::Theorem {
        inner *= profile.d_z.powf(p);
    }
    gen_gap_common("gen_gap_i", profile, n, r, complexity_inf, inner)
}

/// Performative generalization gap under the weaker growth condition with
/// constant `B`.
pub fn gen_gap_ii(
    profile: &ConstantsProfile,
    n: usize,
    r: f64,
    complexity_inf: f64,
    b: f64,
) -> Result<BoundReport> {
    check_gen_gap(profile, n, r, complexity_inf)?;
    if r == 0.0 {
        return Err(Error::InvalidArgument("R must be > 0".into()));
    }
    if !(b >= 0.0) {
        return Err(Error::InvalidArgument(format!("B = {b} must be ≥ 0")));
    }
    let p = profile.p;
    let inner = b * 2f64.powf(p - 1.0) * (1.0 + profile.d_z / r).powf(p);
    gen_gap_common("gen_gap_ii", profile, n, r, complexity_inf, inner)
}

/// Cumulative performative excess risk over rounds `T..=T̃`.
pub fn cumulative_bound(
    profile: &ConstantsProfile,
    t: usize,
    t_tilde: usize,
    m: usize,
    n: usize,
    complexity_l2: f64,
) -> Result<BoundReport> {
    if t_tilde < t {
        return Err(Error::InvalidArgument(format!("T̃ = {t_tilde} < T = {t}")));
    }
    let base = perf_excess_risk_bound(profile, t, m, n, complexity_l2)?;
    let per_round = profile.l_ell
        * profile.l_a
        * wald_upper(m, n, profile.delta)?.powf(1.0 / profile.p)
        * profile.d_z;
    let rounds = (t_tilde - t + 1) as f64;
    let mut terms: Vec<(&str, f64)> = base.terms.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    terms.push(("population_rounds", rounds * per_round));
    let mut diags: Vec<(&str, f64)> = base
        .diagnostics
        .iter()
        .map(|(k, v)| (k.as_str(), *v))
        .collect();
    diags.push(("per_round", per_round));
    diags.push(("rq2_total", base.total));
    BoundReport::build(
        "cumulative_rq3",
        &terms,
        &diags,
        1.0 - profile.delta / 5.0,
        profile,
    )
}

/// [`in_sample_shift_bound`] from a trace, with `m = m_max`.
pub fn in_sample_shift_bound_for(trace: &RermTrace, profile: &ConstantsProfile) -> Result<f64> {
    in_sample_shift_bound(
        profile.eps_sens,
        trace.rounds(),
        trace.m_max,
        trace.n(),
        profile.p,
        profile.d_z,
        profile.l_a_tilde,
    )
}

pub fn gen_gap_bound_rq1_for(trace: &RermTrace, profile: &ConstantsProfile) -> Result<BoundReport> {
    gen_gap_bound_rq1(profile, trace.rounds(), trace.m_max, trace.n())
}

pub fn excess_risk_bound_for(
    trace: &RermTrace,
    profile: &ConstantsProfile,
    complexity_l2: f64,
) -> Result<BoundReport> {
    excess_risk_bound(
        profile,
        trace.rounds(),
        trace.m_max,
        trace.n(),
        complexity_l2,
    )
}

/// Pooled response-rate estimate over the trace's rounds (uses `M_T`).
pub fn pooled_wald_upper_for(trace: &RermTrace, delta: f64) -> Result<f64> {
    pooled_wald_upper(&trace.shift_counts, trace.n(), delta)
}
