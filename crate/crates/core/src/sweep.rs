//! The response-rate sweep: for each policy ξ, the generalization-gap
//! bound with its decomposition and, optionally, the realized gap on a
//! synthetic population.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{gen_gap_i, gen_gap_ii, radius_r, BoundReport, ComplexityForm};
use crate::complexity::{entropy_integral_inf, ClassSpec, QuadConfig};
use crate::error::{Error, Result};
use crate::logistic::{erm_fit, erm_fit_from, mean_loss, FitConfig};
use crate::model::{ConstantsProfile, DomainBox, EmpiricalDistribution, ParamSpace};
use crate::synthetic::{gen_synthetic, SyntheticConfig};
use crate::transition::{selection_size, Transition, TransitionMap};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    #[serde(rename = "gen_gap_i")]
    GenGapI,
    #[default]
    #[serde(rename = "gen_gap_ii")]
    GenGapII,
}

fn default_schema() -> u32 {
    1
}

fn default_grid() -> Vec<f64> {
    (1..=50).map(|k| k as f64 / 100.0).collect()
}

fn default_features() -> usize {
    28
}

fn default_b() -> f64 {
    1e-3
}

/// Fit used for the realized gap: ridge 0.1 on `Θ = {‖θ‖ ≤ 1}`.
pub fn sweep_fit_config(n_features: usize) -> FitConfig {
    FitConfig {
        reg_lambda: 0.1,
        grad_tol: 1e-7,
        max_iters: 20_000,
        seed: 0,
        fit_intercept: true,
        param_space: Some(ParamSpace::Ball {
            radius: 1.0,
            dim: n_features + 1,
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default = "default_grid")]
    pub xi_grid: Vec<f64>,
    pub n: usize,
    pub pop_n: usize,
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    pub profile: ConstantsProfile,
    #[serde(default)]
    pub bound_variant: BoundVariant,
    /// Growth constant for [`BoundVariant::GenGapII`].
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub complexity_form: ComplexityForm,
    /// Compute the realized gap (synthetic data plus two fits per ξ).
    #[serde(default)]
    pub realized: bool,
    #[serde(default = "default_features")]
    pub n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema != 1 {
            return Err(Error::InvalidArgument(format!(
                "unsupported sweep schema {}",
                self.schema
            )));
        }
        if self.xi_grid.is_empty() || self.xi_grid.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
            return Err(Error::InvalidArgument(
                "xi values must lie in (0, 1]".into(),
            ));
        }
        if self.n == 0 || self.n > self.pop_n {
            return Err(Error::InvalidArgument(format!(
                "need 1 ≤ n ≤ pop_n (n = {}, pop_n = {})",
                self.n, self.pop_n
            )));
        }
        self.profile.clone().with_delta(self.delta).validate()
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_reader(r)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn fit_config(&self) -> FitConfig {
        self.fit
            .clone()
            .unwrap_or_else(|| sweep_fit_config(self.n_features))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub xi: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub comp: f64,
    pub samp: f64,
    pub perf: f64,
    pub total: f64,
    pub realized_gap: Option<f64>,
    pub m: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub xi: f64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
    pub complexity_inf: f64,
}

/// `𝔠_∞` from the profile override, else by quadrature for the logistic
/// class on the unit box.
pub fn complexity_for(cfg: &SweepConfig) -> Result<f64> {
    if let Some(c) = cfg.profile.complexity_inf {
        return Ok(c);
    }
    let fit = cfg.fit_config();
    let space = fit.space(fit.param_dim(cfg.n_features))?;
    let spec = ClassSpec::logistic(&DomainBox::unit(cfg.n_features), &space, fit.fit_intercept);
    entropy_integral_inf(&spec, &QuadConfig::default())
}

fn bound_at(
    cfg: &SweepConfig,
    profile: &ConstantsProfile,
    xi: f64,
    c_inf: f64,
) -> Result<(usize, BoundReport)> {
    let m = selection_size(xi, cfg.n);
    let r = radius_r(
        m,
        cfg.n,
        profile.delta,
        profile.p,
        profile.d_z,
        profile.l_a_tilde,
    )?;
    let rep = match cfg.bound_variant {
        BoundVariant::GenGapI => gen_gap_i(profile, cfg.n, r, c_inf, cfg.complexity_form)?,
        BoundVariant::GenGapII => gen_gap_ii(profile, cfg.n, r, c_inf, cfg.b)?,
    };
    Ok((m, rep))
}

/// Deploy `θ̂_1` on the sample, retrain to get `θ̂_2`, shift the
/// population with `θ̂_2`, and compare risks of `θ̂_2` on the shifted
/// population and on `Tr(d̂_1, θ̂_2)`.
fn realized_gap(
    pop: &EmpiricalDistribution,
    sample: &EmpiricalDistribution,
    theta1: &[f64],
    xi: f64,
    fit: &FitConfig,
) -> Result<f64> {
    let map = TransitionMap::flip(xi);
    let (d1, _) = map.apply(sample, theta1)?;
    let theta2 = erm_fit_from(&d1, fit, Some(theta1))?.theta.0;
    let (pop1, _) = map.apply(pop, &theta2)?;
    let (d1_eval, _) = map.apply(&d1, &theta2)?;
    Ok(mean_loss(&pop1, &theta2)? - mean_loss(&d1_eval, &theta2)?)
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let profile = cfg.profile.clone().with_delta(cfg.delta);
    let c_inf = complexity_for(cfg)?;
    let fit = cfg.fit_config();
    let data = if cfg.realized {
        let syn = SyntheticConfig {
            pop_n: cfg.pop_n,
            n: cfg.n,
            n_features: cfg.n_features,
        };
        let (pop, sample) = gen_synthetic(&syn, cfg.seed)?;
        let theta1 = erm_fit(&sample, &fit)?.theta.0;
        Some((pop, sample, theta1))
    } else {
        None
    };

    let cells: Vec<std::result::Result<SweepRow, (Option<SweepRow>, SweepFailure)>> = cfg
        .xi_grid
        .par_iter()
        .map(|&xi| {
            let fail = |row: Option<SweepRow>, e: Error| {
                (
                    row,
                    SweepFailure {
                        xi,
                        error: e.to_string(),
                    },
                )
            };
            let (m, rep) = bound_at(cfg, &profile, xi, c_inf).map_err(|e| fail(None, e))?;
            let mut row = SweepRow {
                xi,
                r: rep.diagnostic("R"),
                comp: rep.term("complexity"),
                samp: rep.term("sampling"),
                perf: rep.term("performative"),
                total: rep.total,
                realized_gap: None,
                m,
                n: cfg.n,
            };
            if let Some((pop, sample, theta1)) = &data {
                match realized_gap(pop, sample, theta1, xi, &fit) {
                    Ok(g) => row.realized_gap = Some(g),
                    Err(e) => return Err(fail(Some(row), e)),
                }
            }
            Ok(row)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for c in cells {
        match c {
            Ok(r) => rows.push(r),
            Err((r, f)) => {
                rows.extend(r);
                failures.push(f);
            }
        }
    }
    Ok(SweepOutput {
        rows,
        failures,
        complexity_inf: c_inf,
    })
}

pub const CSV_HEADER: [&str; 9] = [
    "xi",
    "R",
    "comp",
    "samp",
    "perf",
    "total",
    "realized_gap",
    "m",
    "n",
];

/// Fixed header; `realized_gap` is empty when not computed.
pub fn write_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER)?;
    for r in rows {
        wr.write_record([
            r.xi.to_string(),
            r.r.to_string(),
            r.comp.to_string(),
            r.samp.to_string(),
            r.perf.to_string(),
            r.total.to_string(),
            r.realized_gap.map(|g| g.to_string()).unwrap_or_default(),
            r.m.to_string(),
            r.n.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Static line chart of the bound and its terms against ξ.
pub fn write_svg<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    let (width, height, pad) = (640.0, 400.0, 48.0);
    let x_max = rows.iter().map(|r| r.xi).fold(0.0, f64::max).max(1e-12);
    let y_max = rows.iter().map(|r| r.total).fold(0.0, f64::max).max(1e-12);
    let px = |x: f64| pad + x / x_max * (width - 2.0 * pad);
    let py = |y: f64| height - pad - y / y_max * (height - 2.0 * pad);
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )?;
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        w,
        r#"<path d="M{pad} {pad} V{} H{}" stroke="black" fill="none"/>"#,
        height - pad,
        width - pad
    )?;
    let series: [(&str, &str, fn(&SweepRow) -> f64); 4] = [
        ("total", "#1f4e9c", |r| r.total),
        ("perf", "#c0392b", |r| r.perf),
        ("comp", "#27ae60", |r| r.comp),
        ("samp", "#8e44ad", |r| r.samp),
    ];
    for (k, (name, color, f)) in series.iter().enumerate() {
        let pts: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.xi), py(f(r))))
            .collect();
        writeln!(
            w,
            r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="2"/>"#,
            pts.join(" ")
        )?;
        writeln!(
            w,
            r#"<text x="{}" y="{}" fill="{color}" font-size="12">{name}</text>"#,
            width - pad - 40.0,
            pad + 14.0 * k as f64
        )?;
    }
    writeln!(
        w,
        r#"<text x="{}" y="{}" font-size="12">ξ (max {x_max})</text>"#,
        width / 2.0,
        height - 12.0
    )?;
    writeln!(
        w,
        r#"<text x="4" y="{}" font-size="12">{y_max:.3}</text>"#,
        pad
    )?;
    writeln!(w, "</svg>")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn case_profile() -> ConstantsProfile {
        let s28 = 28f64.sqrt();
        ConstantsProfile {
            schema: 1,
            l_ell: s28,
            l_a: 2.0,
            l_a_tilde: 1.0 / 3.0,
            l_f: 0.25,
            gamma: 1.0,
            kappa: 8.0,
            eps_sens: 0.1,
            p: 2.0,
            nu: 29.0,
            c_a: 1.0,
            c_b: 1.0,
            d_z: s28,
            d_theta: 2.0,
            f_bound: 1.0,
            b_const: 1e-3,
            delta: 0.05,
            sampling_lipschitz: None,
            complexity_inf: Some(7.3855),
            complexity_l2: None,
        }
    }

    fn cfg() -> SweepConfig {
        SweepConfig {
            schema: 1,
            xi_grid: default_grid(),
            n: 41585,
            pop_n: 100_000,
            delta: 0.05,
            seed: 0,
            profile: case_profile(),
            bound_variant: BoundVariant::GenGapII,
            b: 1e-3,
            complexity_form: ComplexityForm::CaseStudy,
            realized: false,
            n_features: 28,
            fit: None,
        }
    }

    #[test]
    fn formula_sweep_shape() {
        let out = run_sweep(&cfg()).unwrap();
        assert_eq!(out.rows.len(), 50);
        assert!(out.failures.is_empty());
        let samp0 = out.rows[0].samp;
        for w in out.rows.windows(2) {
            assert!(w[1].total > w[0].total);
            assert!(w[1].perf >= w[0].perf);
            assert_eq!(w[1].samp, samp0);
        }
        for r in &out.rows {
            let s = r.comp + r.samp + r.perf;
            assert!((s - r.total).abs() <= 1e-12 * r.total);
        }
    }

    #[test]
    fn csv_is_deterministic() {
        let a = run_sweep(&cfg()).unwrap();
        let b = run_sweep(&cfg()).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_csv(&a.rows, &mut x).unwrap();
        write_csv(&b.rows, &mut y).unwrap();
        assert_eq!(x, y);
        let text = String::from_utf8(x).unwrap();
        assert!(text.starts_with("xi,R,comp,samp,perf,total,realized_gap,m,n\n"));
        assert_eq!(text.lines().count(), 51);
    }

    #[test]
    fn bad_grid_rejected() {
        let mut c = cfg();
        c.xi_grid = vec![0.0, 0.1];
        assert!(run_sweep(&c).is_err());
        let mut c = cfg();
        c.n = c.pop_n + 1;
        assert!(run_sweep(&c).is_err());
    }

    #[test]
    fn realized_small() {
        let mut c = cfg();
        c.n = 400;
        c.pop_n = 2000;
        c.realized = true;
        c.xi_grid = vec![0.05, 0.2];
        let out = run_sweep(&c).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        for r in &out.rows {
            let g = r.realized_gap.unwrap();
            assert!(g <= r.total);
        }
    }

    #[test]
    fn svg_renders() {
        let out = run_sweep(&cfg()).unwrap();
        let mut buf = Vec::new();
        write_svg(&out.rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    }
}
