//! Domain containers: the data box, empirical distributions, the parameter
//! space and the constants profile every bound formula reads from.
//!
//! A data point is a vector `z = (y, x)` with the label coordinates first.
//! All types are immutable after construction.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Out-of-box violations up to this size are clamped back into the box.
pub const BOX_TOLERANCE: f64 = 1e-9;
/// Tolerance on the total mass after normalization.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Axis-aligned bounded set `Z = Y × X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub dim_y: usize,
    pub dim_x: usize,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, dim_y: usize) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidBox(format!(
                "lower has {} coordinates, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        if dim_y > lower.len() {
            return Err(Error::InvalidBox("dim_y exceeds total dimension".into()));
        }
        let dim_x = lower.len() - dim_y;
        let b = DomainBox {
            lower,
            upper,
            dim_y,
            dim_x,
        };
        b.validate()?;
        Ok(b)
    }

    /// Unit cube `[0,1]^(1+k)` with one binary label coordinate and `k` features.
    pub fn unit(n_features: usize) -> Self {
        let d = n_features + 1;
        DomainBox {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
            dim_y: 1,
            dim_x: n_features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.dim_y + self.dim_x != self.lower.len() {
            return Err(Error::InvalidBox("inconsistent dimensions".into()));
        }
        if self.lower.is_empty() {
            return Err(Error::InvalidBox("box has no coordinates".into()));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidBox(format!("coordinate {i} is not finite")));
            }
            if lo > hi {
                return Err(Error::InvalidBox(format!(
                    "coordinate {i}: lower {lo} > upper {hi}"
                )));
            }
        }
        Ok(())
    }

    /// ν = ν_y + ν_x.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Euclidean diameter of the feature block only.
    pub fn feature_diameter(&self) -> f64 {
        self.lower[self.dim_y..]
            .iter()
            .zip(&self.upper[self.dim_y..])
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    fn contains_or_clamp(&self, point: &mut [f64], index: usize) -> Result<()> {
        for (c, v) in point.iter_mut().enumerate() {
            let (lo, hi) = (self.lower[c], self.upper[c]);
            if !v.is_finite() || *v < lo - BOX_TOLERANCE || *v > hi + BOX_TOLERANCE {
                return Err(Error::PointOutsideBox {
                    index,
                    coord: c,
                    value: *v,
                });
            }
            *v = v.clamp(lo, hi);
        }
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let b: DomainBox = serde_json::from_reader(reader)?;
        b.validate()?;
        Ok(b)
    }
}

/// `D_Z := sup ‖z − z'‖₂` for the box.
pub fn domain_diameter(domain: &DomainBox) -> Result<f64> {
    domain.validate()?;
    let d = domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(lo, hi)| (hi - lo) * (hi - lo))
        .sum::<f64>()
        .sqrt();
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidBox("box has zero diameter".into()));
    }
    Ok(d)
}

/// Finite weighted point set on a [`DomainBox`].
///
/// Points are stored row-major in one flat buffer; `point(i)` yields
/// `(y, x)` for support point `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr", into = "DistributionRepr")]
pub struct EmpiricalDistribution {
    domain: DomainBox,
    data: Vec<f64>,
    weights: Vec<f64>,
    uniform: bool,
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    domain: DomainBox,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl From<EmpiricalDistribution> for DistributionRepr {
    fn from(d: EmpiricalDistribution) -> Self {
        DistributionRepr {
            points: d.points().map(<[f64]>::to_vec).collect(),
            domain: d.domain,
            weights: d.weights,
        }
    }
}

impl TryFrom<DistributionRepr> for EmpiricalDistribution {
    type Error = Error;

    fn try_from(r: DistributionRepr) -> Result<Self> {
        // Stored weights are already normalized; keep them bit-for-bit.
        let n = r.points.len();
        if r.weights.len() != n {
            return Err(Error::InvalidWeights(
                "weights/points length mismatch".into(),
            ));
        }
        let mut d = EmpiricalDistribution::from_points(&r.domain, r.points, None)?;
        check_weights(&r.weights)?;
        let total: f64 = r.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!(
                "stored weights sum to {total}"
            )));
        }
        d.uniform = r.weights.iter().all(|w| *w == r.weights[0]);
        d.weights = r.weights;
        Ok(d)
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    if let Some((i, v)) = w
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::InvalidWeights(format!("weight {i} is {v}")));
    }
    Ok(())
}

impl EmpiricalDistribution {
    /// Builds a validated distribution; `weights = None` means uniform `1/n`.
    pub fn from_points(
        domain: &DomainBox,
        points: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        domain.validate()?;
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty point list".into()));
        }
        let dim = domain.dim();
        let mut data = Vec::with_capacity(n * dim);
        for (i, mut p) in points.into_iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            domain.contains_or_clamp(&mut p, i)?;
            data.extend_from_slice(&p);
        }
        let (weights, uniform) = match weights {
            None => (vec![1.0 / n as f64; n], true),
            Some(w) => {
                if w.len() != n {
                    return Err(Error::InvalidWeights(format!(
                        "{} weights for {} points",
                        w.len(),
                        n
                    )));
                }
                check_weights(&w)?;
                let total: f64 = w.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::InvalidWeights("total mass is zero".into()));
                }
                let uniform = w.iter().all(|v| *v == w[0]);
                if uniform {
                    (vec![1.0 / n as f64; n], true)
                } else {
                    (w.iter().map(|v| v / total).collect(), false)
                }
            }
        };
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE * n as f64 {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(EmpiricalDistribution {
            domain: domain.clone(),
            data,
            weights,
            uniform,
        })
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every support point carries mass exactly `1/n`.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim())
    }

    /// First label coordinate of point `i`.
    pub fn label(&self, i: usize) -> f64 {
        self.point(i)[0]
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.point(i)[self.domain.dim_y..]
    }

    /// Copy with the points edited in place by `edit`; weights are kept.
    /// The edited points are clamped/validated against the box again.
    pub(crate) fn with_edited_points<F>(&self, mut edit: F) -> Result<Self>
    where
        F: FnMut(usize, &mut [f64]),
    {
        let mut out = self.clone();
        let d = self.dim();
        for (i, p) in out.data.chunks_exact_mut(d).enumerate() {
            edit(i, p);
            self.domain.contains_or_clamp(p, i)?;
        }
        Ok(out)
    }

    /// Sub-distribution on the given indices with uniform weights.
    pub fn subsample(&self, indices: &[usize]) -> Result<Self> {
        let pts = indices.iter().map(|&i| self.point(i).to_vec()).collect();
        Self::from_points(&self.domain, pts, None)
    }

    /// Indices whose coordinates differ between `self` and `other`
    /// (points tracked by index).
    pub fn changed_indices(&self, other: &Self) -> Result<Vec<usize>> {
        if self.len() != other.len() || self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok((0..self.len())
            .filter(|&i| self.point(i) != other.point(i))
            .collect())
    }

    /// Writes `y,x1,...,xk[,w]`; the weight column is omitted for uniform
    /// distributions.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        if self.domain.dim_y != 1 {
            return Err(Error::InvalidArgument(
                "CSV format needs exactly one label coordinate".into(),
            ));
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.domain.dim_x).map(|j| format!("x{j}")));
        if !self.uniform {
            header.push("w".into());
        }
        w.write_record(&header)?;
        for (i, p) in self.points().enumerate() {
            let mut rec: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            if !self.uniform {
                rec.push(self.weights[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(domain: &DomainBox, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let has_w = header.iter().next_back() == Some("w");
        let cols = header.len() - usize::from(has_w);
        if header.get(0) != Some("y") || cols != domain.dim() {
            return Err(Error::InvalidArgument(format!(
                "CSV header must be y,x1..x{}[,w]",
                domain.dim_x
            )));
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if has_w {
                weights.push(vals[cols]);
            }
            points.push(vals[..cols].to_vec());
        }
        Self::from_points(domain, points, has_w.then_some(weights))
    }
}

/// Convenience alias of [`EmpiricalDistribution::from_points`].
pub fn empirical_from_points(
    domain: &DomainBox,
    points: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::from_points(domain, points, weights)
}

/// Compact parameter set Θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ParamSpace {
    Ball { radius: f64, dim: usize },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl ParamSpace {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("ball radius {radius}")));
        }
        Ok(ParamSpace::Ball { radius, dim })
    }

    /// `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        if !(half_width >= 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cube half-width {half_width}"
            )));
        }
        Ok(ParamSpace::Box {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ParamSpace::Ball { dim, .. } => *dim,
            ParamSpace::Box { lower, .. } => lower.len(),
        }
    }

    /// `D_Θ`.
    pub fn diameter(&self) -> f64 {
        match self {
            ParamSpace::Ball { radius, .. } => 2.0 * radius,
            ParamSpace::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| (u - l) * (u - l))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Largest Euclidean norm of any member.
    pub fn max_norm(&self) -> f64 {
        match self {
            ParamSpace::Ball { radius, .. } => *radius,
            ParamSpace::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l.abs().max(u.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Euclidean projection onto Θ, in place.
    pub fn project(&self, theta: &mut [f64]) {
        match self {
            ParamSpace::Ball { radius, .. } => {
                let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > *radius {
                    let s = radius / norm;
                    theta.iter_mut().for_each(|v| *v *= s);
                }
            }
            ParamSpace::Box { lower, upper } => {
                for ((v, l), u) in theta.iter_mut().zip(lower).zip(upper) {
                    *v = v.clamp(*l, *u);
                }
            }
        }
    }
}

fn default_schema() -> u32 {
    1
}

fn one() -> f64 {
    1.0
}

/// Every constant the bound formulas consume, in one audited record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsProfile {
    #[serde(default = "default_schema")]
    pub schema: u32,
    /// Loss Lipschitz constant `L_ℓ`.
    pub l_ell: f64,
    /// Lipschitz constant of the argmin map `G`.
    pub l_a: f64,
    /// `1/(1+L_a)`.
    pub l_a_tilde: f64,
    /// Model Lipschitz constant `L_f`.
    pub l_f: f64,
    /// Strong convexity.
    pub gamma: f64,
    /// Gradient smoothness. Implementer-supplied for logistic loss.
    pub kappa: f64,
    /// Joint sensitivity ε of the transition map.
    pub eps_sens: f64,
    /// Wasserstein order, in `[1, 2]`.
    pub p: f64,
    /// Data dimension ν.
    pub nu: f64,
    #[serde(default = "one")]
    pub c_a: f64,
    #[serde(default = "one")]
    pub c_b: f64,
    pub d_z: f64,
    pub d_theta: f64,
    /// Uniform bound on model outputs.
    #[serde(default = "one")]
    pub f_bound: f64,
    /// Constant of the weaker-regularity condition.
    #[serde(default)]
    pub b_const: f64,
    pub delta: f64,
    /// Optional separate `L_ℓ` for the sampling summand of the sample-side
    /// corollary (the historical-data worked example uses the feature-norm
    /// gradient bound there).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_lipschitz: Option<f64>,
    /// Entropy integral 𝔠_∞ override; computed from the class when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity_inf: Option<f64>,
    /// Entropy integral 𝔠_{L2} override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity_l2: Option<f64>,
}

impl ConstantsProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_ell", self.l_ell),
            ("gamma", self.gamma),
            ("kappa", self.kappa),
            ("eps_sens", self.eps_sens),
            ("nu", self.nu),
            ("c_a", self.c_a),
            ("c_b", self.c_b),
            ("d_z", self.d_z),
            ("d_theta", self.d_theta),
            ("f_bound", self.f_bound),
            ("l_a_tilde", self.l_a_tilde),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidProfile(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("l_a", self.l_a),
            ("l_f", self.l_f),
            ("b_const", self.b_const),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidProfile(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !(1.0..=2.0).contains(&self.p) {
            return Err(Error::InvalidProfile(format!(
                "p = {} outside [1, 2]",
                self.p
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidProfile(format!(
                "delta = {} outside (0, 1)",
                self.delta
            )));
        }
        if (self.l_a_tilde * (1.0 + self.l_a) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProfile(format!(
                "l_a_tilde = {} is not 1/(1+l_a) for l_a = {}",
                self.l_a_tilde, self.l_a
            )));
        }
        Ok(())
    }

    /// `εκ/γ`, the ratio driving the geometric factors.
    pub fn contraction_ratio(&self) -> f64 {
        self.eps_sens * self.kappa / self.gamma
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let p: ConstantsProfile = serde_json::from_reader(reader)?;
        if p.schema != 1 {
            return Err(Error::InvalidProfile(format!(
                "unsupported schema {}",
                p.schema
            )));
        }
        p.validate()?;
        Ok(p)
    }

    /// Short content hash used as provenance in bound reports.
    pub fn fingerprint(&self) -> String {
        crate::util::short_hash(self)
    }
}

/// Non-fatal observations about a profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum AuditWarning {
    /// The Wasserstein concentration rate needs ν > 2p.
    NuNotAbove2p {
        nu: f64,
        p: f64,
    },
    /// εκ/γ ≥ 1: the sample-side bounds grow geometrically in T.
    GeometricGrowth {
        ratio: f64,
    },
    DeltaOutsideRange {
        delta: f64,
    },
}

impl fmt::Display for AuditWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditWarning::NuNotAbove2p { nu, p } => {
                write!(f, "ν ≤ 2p (ν = {nu}, p = {p}): concentration regime edge")
            }
            AuditWarning::GeometricGrowth { ratio } => {
                write!(f, "εκ/γ = {ratio} ≥ 1: bounds grow geometrically in T")
            }
            AuditWarning::DeltaOutsideRange { delta } => {
                write!(f, "δ = {delta} outside (0, 0.5]")
            }
        }
    }
}

pub fn constants_audit(profile: &ConstantsProfile) -> Vec<AuditWarning> {
    let mut out = Vec::new();
    if profile.nu <= 2.0 * profile.p {
        out.push(AuditWarning::NuNotAbove2p {
            nu: profile.nu,
            p: profile.p,
        });
    }
    let ratio = profile.contraction_ratio();
    if ratio >= 1.0 {
        out.push(AuditWarning::GeometricGrowth { ratio });
    }
    if !(profile.delta > 0.0 && profile.delta <= 0.5) {
        out.push(AuditWarning::DeltaOutsideRange {
            delta: profile.delta,
        });
    }
    out
}
