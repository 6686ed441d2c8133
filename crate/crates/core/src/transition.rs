//! Transition maps `Tr(d, θ)`: how a deployed model reshapes the data.
//!
//! Points are tracked by index. A "changed unit" is any support point whose
//! coordinates differ between the input and the output of one application.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::linear_score;
use crate::model::{domain_diameter, EmpiricalDistribution};
use crate::transport::{wp_exact_with, TransportConfig};
use crate::util::{dist, norm};

/// Which points changed in one application and by how much.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub m_changed: usize,
    pub indices: Vec<usize>,
    pub per_point_displacement: Vec<f64>,
}

impl ShiftRecord {
    pub fn between(before: &EmpiricalDistribution, after: &EmpiricalDistribution) -> Result<Self> {
        let indices = before.changed_indices(after)?;
        let per_point_displacement = indices
            .iter()
            .map(|&i| dist(before.point(i), after.point(i)))
            .collect();
        Ok(ShiftRecord {
            m_changed: indices.len(),
            indices,
            per_point_displacement,
        })
    }

    pub fn unchanged() -> Self {
        ShiftRecord {
            m_changed: 0,
            indices: Vec::new(),
            per_point_displacement: Vec::new(),
        }
    }
}

/// Anything that maps `(d, θ)` to a shifted distribution.
pub trait Transition: Sync {
    fn apply(
        &self,
        dist: &EmpiricalDistribution,
        theta: &[f64],
    ) -> Result<(EmpiricalDistribution, ShiftRecord)>;
}

fn one() -> f64 {
    1.0
}

/// The built-in maps. Serialized as `{kind, xi, effectiveness, seed, shift_vector}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionMap {
    Identity,
    /// The `⌈ξn⌉` highest-scored units have label 1 flipped to 0.
    TopXiLabelFlip {
        xi: f64,
        #[serde(default = "one")]
        effectiveness: f64,
        #[serde(default)]
        seed: u64,
    },
    /// The `⌈ξn⌉` highest-scored units move their features by
    /// `shift_vector` (clamped to the box).
    BoundedFeatureShift {
        xi: f64,
        shift_vector: Vec<f64>,
    },
    /// Sub-maps applied in declaration order.
    Composite {
        maps: Vec<TransitionMap>,
    },
}

impl TransitionMap {
    pub fn flip(xi: f64) -> Self {
        TransitionMap::TopXiLabelFlip {
            xi,
            effectiveness: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_xi = |xi: f64| {
            if (0.0..=1.0).contains(&xi) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("xi = {xi} outside [0, 1]")))
            }
        };
        match self {
            TransitionMap::Identity => Ok(()),
            TransitionMap::TopXiLabelFlip {
                xi, effectiveness, ..
            } => {
                check_xi(*xi)?;
                if !(0.0..=1.0).contains(effectiveness) {
                    return Err(Error::InvalidArgument(format!(
                        "effectiveness = {effectiveness} outside [0, 1]"
                    )));
                }
                Ok(())
            }
            TransitionMap::BoundedFeatureShift { xi, shift_vector } => {
                check_xi(*xi)?;
                if shift_vector.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite shift vector".into()));
                }
                Ok(())
            }
            TransitionMap::Composite { maps } => maps.iter().try_for_each(TransitionMap::validate),
        }
    }
}

/// Indices of the `⌈ξn⌉` units with the highest `σ(θᵀx)`; ties go to the
/// lower index.
pub fn top_xi_selection(
    dist: &EmpiricalDistribution,
    theta: &[f64],
    xi: f64,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::InvalidArgument(format!("xi = {xi} outside [0, 1]")));
    }
    let n = dist.len();
    let k = selection_size(xi, n);
    let mut scored: Vec<(f64, usize)> = (0..n)
        .map(|i| linear_score(dist.features(i), theta).map(|s| (s, i)))
        .collect::<Result<_>>()?;
    // σ is monotone, so ranking by the linear score is ranking by σ(θᵀx).
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

/// `⌈ξn⌉`, guarding against `ξ·n` landing a hair above an integer.
pub fn selection_size(xi: f64, n: usize) -> usize {
    let raw = xi * n as f64;
    let rounded = raw.round();
    let k = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    (k as usize).min(n)
}

fn thin(selected: &[usize], effectiveness: f64, seed: u64) -> Vec<usize> {
    if effectiveness >= 1.0 {
        return selected.to_vec();
    }
    let keep = (effectiveness * selected.len() as f64).round() as usize;
    let mut perm = selected.to_vec();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm.truncate(keep);
    perm.sort_unstable();
    perm
}

impl TransitionMap {
    fn apply_inner(
        &self,
        d: &EmpiricalDistribution,
        theta: &[f64],
    ) -> Result<EmpiricalDistribution> {
        match self {
            TransitionMap::Identity => Ok(d.clone()),
            TransitionMap::TopXiLabelFlip {
                xi,
                effectiveness,
                seed,
            } => {
                if d.domain().dim_y != 1 {
                    return Err(Error::InvalidArgument(
                        "label flip needs one label coordinate".into(),
                    ));
                }
                let chosen = thin(&top_xi_selection(d, theta, *xi)?, *effectiveness, *seed);
                let mut flag = vec![false; d.len()];
                chosen.iter().for_each(|&i| flag[i] = true);
                d.with_edited_points(|i, p| {
                    if flag[i] && p[0] == 1.0 {
                        p[0] = 0.0;
                    }
                })
            }
            TransitionMap::BoundedFeatureShift { xi, shift_vector } => {
                let dom = d.domain();
                if shift_vector.len() != dom.dim_x {
                    return Err(Error::DimensionMismatch {
                        expected: dom.dim_x,
                        got: shift_vector.len(),
                    });
                }
                let d_z = domain_diameter(dom)?;
                if norm(shift_vector) > d_z {
                    return Err(Error::InvalidArgument(
                        "shift vector longer than the box diameter".into(),
                    ));
                }
                let chosen = top_xi_selection(d, theta, *xi)?;
                let mut flag = vec![false; d.len()];
                chosen.iter().for_each(|&i| flag[i] = true);
                let dy = dom.dim_y;
                let (lo, hi) = (dom.lower.clone(), dom.upper.clone());
                d.with_edited_points(|i, p| {
                    if flag[i] {
                        for (j, s) in shift_vector.iter().enumerate() {
                            let c = dy + j;
                            p[c] = (p[c] + s).clamp(lo[c], hi[c]);
                        }
                    }
                })
            }
            TransitionMap::Composite { maps } => {
                let mut cur = d.clone();
                for m in maps {
                    cur = m.apply_inner(&cur, theta)?;
                }
                Ok(cur)
            }
        }
    }
}

impl Transition for TransitionMap {
    fn apply(
        &self,
        dist: &EmpiricalDistribution,
        theta: &[f64],
    ) -> Result<(EmpiricalDistribution, ShiftRecord)> {
        self.validate()?;
        let out = self.apply_inner(dist, theta)?;
        // Net start-to-end difference: a unit changed and reverted within
        // one application does not count.
        let rec = ShiftRecord::between(dist, &out)?;
        Ok((out, rec))
    }
}

/// One sensitivity probe: `(d, θ)` against `(d', θ')`.
#[derive(Clone, Debug)]
pub struct Probe {
    pub d: EmpiricalDistribution,
    pub theta: Vec<f64>,
    pub d_prime: EmpiricalDistribution,
    pub theta_prime: Vec<f64>,
}

/// `ε̂ = max W_p(Tr(d,θ), Tr(d',θ')) / (W_p(d,d') + ‖θ−θ'‖)` over probes
/// with a nonzero denominator. A lower bound on any valid ε.
pub fn estimate_sensitivity(map: &dyn Transition, probes: &[Probe], p: f64) -> Result<f64> {
    let cfg = TransportConfig::default();
    let mut best: Option<f64> = None;
    for pr in probes {
        let denom =
            wp_exact_with(&pr.d, &pr.d_prime, p, &cfg)?.distance + dist(&pr.theta, &pr.theta_prime);
        if denom <= 0.0 {
            continue;
        }
        let (a, _) = map.apply(&pr.d, &pr.theta)?;
        let (b, _) = map.apply(&pr.d_prime, &pr.theta_prime)?;
        let num = wp_exact_with(&a, &b, p, &cfg)?.distance;
        let r = num / denom;
        best = Some(best.map_or(r, |b: f64| b.max(r)));
    }
    best.ok_or_else(|| Error::InvalidArgument("every probe has a zero denominator".into()))
}

/// A map together with the sensitivity established by an exhaustive audit
/// over a finite probe family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifiedMap {
    pub map: TransitionMap,
    pub epsilon: f64,
    pub p: f64,
}

impl CertifiedMap {
    pub fn certify(map: TransitionMap, probes: &[Probe], p: f64) -> Result<Self> {
        let epsilon = estimate_sensitivity(&map, probes, p)?;
        Ok(CertifiedMap { map, epsilon, p })
    }

    /// Audit over every ordered pair drawn from `dists × thetas`.
    pub fn certify_on_family(
        map: TransitionMap,
        dists: &[EmpiricalDistribution],
        thetas: &[Vec<f64>],
        p: f64,
    ) -> Result<Self> {
        let states: Vec<(&EmpiricalDistribution, &Vec<f64>)> = dists
            .iter()
            .flat_map(|d| thetas.iter().map(move |t| (d, t)))
            .collect();
        let mut probes = Vec::new();
        for (a, &(d, t)) in states.iter().enumerate() {
            for &(d2, t2) in &states[a + 1..] {
                probes.push(Probe {
                    d: d.clone(),
                    theta: t.clone(),
                    d_prime: d2.clone(),
                    theta_prime: t2.clone(),
                });
            }
        }
        Self::certify(map, &probes, p)
    }
}

impl Transition for CertifiedMap {
    fn apply(
        &self,
        dist: &EmpiricalDistribution,
        theta: &[f64],
    ) -> Result<(EmpiricalDistribution, ShiftRecord)> {
        self.map.apply(dist, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DomainBox;

    fn dist_with_scores(scores: &[f64], labels: &[f64]) -> EmpiricalDistribution {
        let pts = scores
            .iter()
            .zip(labels)
            .map(|(s, y)| vec![*y, *s])
            .collect();
        EmpiricalDistribution::from_points(&DomainBox::unit(1), pts, None).unwrap()
    }

    #[test]
    fn selection_with_ties() {
        let d = dist_with_scores(&[0.9, 0.1, 0.8, 0.8, 0.2], &[1.0; 5]);
        assert_eq!(top_xi_selection(&d, &[1.0], 0.4).unwrap(), vec![0, 2]);
        assert_eq!(
            top_xi_selection(&d, &[1.0], 0.0).unwrap(),
            Vec::<usize>::new()
        );
        let mut all = top_xi_selection(&d, &[1.0], 1.0).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn selection_size_rounding() {
        assert_eq!(selection_size(0.1, 100), 10);
        assert_eq!(selection_size(0.07, 100), 7);
        assert_eq!(selection_size(0.01, 41585), 416);
        assert_eq!(selection_size(0.5, 3), 2);
    }

    #[test]
    fn zero_xi_is_identity() {
        let d = dist_with_scores(&[0.3, 0.6], &[1.0, 1.0]);
        let (out, rec) = TransitionMap::flip(0.0).apply(&d, &[1.0, 0.0]).unwrap();
        assert_eq!(out, d);
        assert_eq!(rec.m_changed, 0);
    }

    #[test]
    fn flip_exactly_xi_n_labels() {
        let scores: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let d = dist_with_scores(&scores, &[1.0; 100]);
        let (out, rec) = TransitionMap::flip(0.1).apply(&d, &[1.0, 0.0]).unwrap();
        assert_eq!(rec.m_changed, 10);
        assert_eq!(rec.indices, (90..100).collect::<Vec<_>>());
        assert!(rec.indices.iter().all(|&i| out.label(i) == 0.0));
        assert!(rec.per_point_displacement.iter().all(|&x| x == 1.0));
        assert_eq!(out.weights(), d.weights());

        let (again, rec2) = TransitionMap::flip(0.1).apply(&out, &[1.0, 0.0]).unwrap();
        assert_eq!(rec2.m_changed, 0);
        assert_eq!(again, out);
    }

    #[test]
    fn partial_effectiveness_is_reproducible() {
        let scores: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let d = dist_with_scores(&scores, &[1.0; 50]);
        let map = TransitionMap::TopXiLabelFlip {
            xi: 0.4,
            effectiveness: 0.5,
            seed: 7,
        };
        let (_, r1) = map.apply(&d, &[1.0, 0.0]).unwrap();
        let (_, r2) = map.apply(&d, &[1.0, 0.0]).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.m_changed, 10);
        assert!(r1.indices.iter().all(|&i| i >= 30));
    }

    #[test]
    fn malformed_params_rejected() {
        let d = dist_with_scores(&[0.3], &[1.0]);
        assert!(TransitionMap::flip(1.5).apply(&d, &[1.0]).is_err());
        let bad = TransitionMap::TopXiLabelFlip {
            xi: 0.5,
            effectiveness: -0.1,
            seed: 0,
        };
        assert!(bad.apply(&d, &[1.0]).is_err());
        let bad = TransitionMap::BoundedFeatureShift {
            xi: 0.5,
            shift_vector: vec![0.1, 0.1],
        };
        assert!(bad.apply(&d, &[1.0]).is_err());
    }

    #[test]
    fn feature_shift_clamps_and_records() {
        let d = dist_with_scores(&[0.95, 0.2], &[1.0, 0.0]);
        let map = TransitionMap::BoundedFeatureShift {
            xi: 0.5,
            shift_vector: vec![0.1],
        };
        let (out, rec) = map.apply(&d, &[1.0, 0.0]).unwrap();
        assert_eq!(out.point(0), &[1.0, 1.0]);
        assert_eq!(rec.indices, vec![0]);
        assert!((rec.per_point_displacement[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn composite_reports_net_union() {
        let d = dist_with_scores(&[0.9, 0.5, 0.1], &[1.0, 1.0, 1.0]);
        let map = TransitionMap::Composite {
            maps: vec![
                TransitionMap::flip(1.0 / 3.0),
                TransitionMap::BoundedFeatureShift {
                    xi: 2.0 / 3.0,
                    shift_vector: vec![-0.05],
                },
            ],
        };
        let (_, rec) = map.apply(&d, &[1.0, 0.0]).unwrap();
        assert_eq!(rec.indices, vec![0, 1]);
    }

    #[test]
    fn json_config_shape() {
        let m: TransitionMap = serde_json::from_str(
            r#"{"kind":"top_xi_label_flip","xi":0.1,"effectiveness":0.5,"seed":3}"#,
        )
        .unwrap();
        assert_eq!(
            m,
            TransitionMap::TopXiLabelFlip {
                xi: 0.1,
                effectiveness: 0.5,
                seed: 3
            }
        );
        let m: TransitionMap = serde_json::from_str(
            r#"{"kind":"bounded_feature_shift","xi":0.2,"shift_vector":[0.1]}"#,
        )
        .unwrap();
        assert!(matches!(m, TransitionMap::BoundedFeatureShift { .. }));
    }
}
