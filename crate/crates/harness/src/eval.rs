//! Scoring fitted models against synthetic ground truth.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use seqgc::Plane;

use crate::error::{HarnessError, HarnessResult};
use crate::pipeline::{HomographyFitOutput, PlaneFitOutput, StageTiming};
use crate::synth::Truth;

/// Angle charged for a ground-truth plane without a matching estimate.
pub const MISSED_PLANE_ANGLE_DEG: f64 = 90.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub model: usize,
    /// Matched ground-truth instance, `None` for a false positive.
    pub truth: Option<u32>,
    /// Plane models only.
    pub angle_deg: Option<f64>,
    pub offset_error: Option<f64>,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<ModelEval>,
    pub false_positives: Vec<usize>,
    pub missed: Vec<u32>,
    /// Fraction of points whose predicted instance differs from the truth,
    /// outliers counting as their own class.
    pub misclassification_rate: f64,
    /// Mean over ground-truth planes of the matched normal error, missed
    /// planes charged [`MISSED_PLANE_ANGLE_DEG`]. Plane scenes only.
    pub mean_angle_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<StageTiming>>,
}

impl EvalReport {
    /// Whitespace-separated table readable by gnuplot.
    pub fn to_table(&self) -> String {
        let mut out = String::from("# model truth angle_deg offset_error precision recall\n");
        let num = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |v| v.to_string());
        for m in &self.models {
            let truth = m.truth.map_or_else(|| "-1".to_string(), |t| t.to_string());
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                m.model,
                truth,
                num(m.angle_deg),
                num(m.offset_error),
                m.precision,
                m.recall
            );
        }
        out
    }
}

/// Estimated model reduced to what matching needs.
struct Estimate<'a> {
    plane: Option<Plane>,
    inliers: &'a [usize],
}

fn truth_sets(labels: &[Option<u32>], instances: usize) -> Vec<Vec<bool>> {
    let mut sets = vec![vec![false; labels.len()]; instances];
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            sets[*l as usize][i] = true;
        }
    }
    sets
}

fn offset_error(est: &Plane, truth: &Plane) -> f64 {
    let s = if est.normal.dot(&truth.normal) < 0.0 { -1.0 } else { 1.0 };
    (est.offset - s * truth.offset).abs()
}

fn evaluate(estimates: &[Estimate], truth_planes: Option<&[Plane]>, labels: &[Option<u32>], instances: usize) -> HarnessResult<EvalReport> {
    let n = labels.len();
    for (k, e) in estimates.iter().enumerate() {
        if let Some(&bad) = e.inliers.iter().find(|&&i| i >= n) {
            return Err(HarnessError::Data(format!("model {k} references point {bad}, truth has {n} points")));
        }
    }
    let sets = truth_sets(labels, instances);
    let sizes: Vec<usize> = sets.iter().map(|s| s.iter().filter(|b| **b).count()).collect();
    let overlap = |e: &Estimate, t: usize| e.inliers.iter().filter(|&&i| sets[t][i]).count();

    // greedy one-to-one matching: overlapping pairs first, then by normal
    // angle (planes) or by overlap (homographies)
    let mut pairs = Vec::new();
    for (k, e) in estimates.iter().enumerate() {
        for t in 0..instances {
            let ov = overlap(e, t);
            let angle = match (e.plane, truth_planes) {
                (Some(p), Some(tp)) => p.normal_angle_deg(&tp[t]),
                _ => 0.0,
            };
            pairs.push((ov == 0, angle, std::cmp::Reverse(ov), k, t));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
            .then(a.4.cmp(&b.4))
    });
    let mut est_match = vec![None; estimates.len()];
    let mut truth_match = vec![None; instances];
    for &(_, _, _, k, t) in &pairs {
        if est_match[k].is_none() && truth_match[t].is_none() {
            est_match[k] = Some(t);
            truth_match[t] = Some(k);
        }
    }

    let mut models = Vec::new();
    for (k, e) in estimates.iter().enumerate() {
        let (precision, recall) = match est_match[k] {
            Some(t) => {
                let ov = overlap(e, t) as f64;
                let p = if e.inliers.is_empty() { 0.0 } else { ov / e.inliers.len() as f64 };
                let r = if sizes[t] == 0 { 0.0 } else { ov / sizes[t] as f64 };
                (p, r)
            }
            None => (0.0, 0.0),
        };
        let geometry = match (e.plane, truth_planes, est_match[k]) {
            (Some(p), Some(tp), Some(t)) => Some((p.normal_angle_deg(&tp[t]), offset_error(&p, &tp[t]))),
            _ => None,
        };
        models.push(ModelEval {
            model: k,
            truth: est_match[k].map(|t| t as u32),
            angle_deg: geometry.map(|g| g.0),
            offset_error: geometry.map(|g| g.1),
            precision,
            recall,
        });
    }

    // predicted class per point: matched truth id, a private class per
    // unmatched model, or outlier
    #[derive(Clone, Copy, PartialEq)]
    enum Class {
        Outlier,
        Truth(usize),
        Spurious(usize),
    }
    let mut predicted = vec![Class::Outlier; n];
    for (k, e) in estimates.iter().enumerate().rev() {
        let c = est_match[k].map_or(Class::Spurious(k), Class::Truth);
        for &i in e.inliers {
            predicted[i] = c;
        }
    }
    let wrong = (0..n)
        .filter(|&i| {
            let actual = labels[i].map_or(Class::Outlier, |l| Class::Truth(l as usize));
            predicted[i] != actual
        })
        .count();

    let mean_angle_deg = truth_planes.map(|tp| {
        if tp.is_empty() {
            return 0.0;
        }
        (0..tp.len())
            .map(|t| {
                truth_match[t].map_or(MISSED_PLANE_ANGLE_DEG, |k| estimates[k].plane.map_or(MISSED_PLANE_ANGLE_DEG, |p| p.normal_angle_deg(&tp[t])))
            })
            .sum::<f64>()
            / tp.len() as f64
    });
    Ok(EvalReport {
        false_positives: (0..estimates.len()).filter(|&k| est_match[k].is_none()).collect(),
        missed: (0..instances).filter(|&t| truth_match[t].is_none()).map(|t| t as u32).collect(),
        models,
        misclassification_rate: if n == 0 { 0.0 } else { wrong as f64 / n as f64 },
        mean_angle_deg,
        stages: None,
    })
}

fn instance_count(labels: &[Option<u32>]) -> usize {
    labels.iter().flatten().map(|l| *l as usize + 1).max().unwrap_or(0)
}

pub fn evaluate_planes(output: &PlaneFitOutput, truth: &Truth) -> HarnessResult<EvalReport> {
    let Truth::Planes { planes, labels, .. } = truth else {
        return Err(HarnessError::Data("plane results need plane ground truth".into()));
    };
    let truth_planes = planes.iter().map(|p| p.to_plane()).collect::<HarnessResult<Vec<_>>>()?;
    let estimates = output
        .models
        .iter()
        .map(|m| {
            Ok(Estimate {
                plane: Some(Plane::new(Vector3::from(m.normal), m.offset)?),
                inliers: &m.inliers,
            })
        })
        .collect::<HarnessResult<Vec<_>>>()?;
    let instances = instance_count(labels).max(truth_planes.len());
    if instances > truth_planes.len() {
        return Err(HarnessError::Data("ground-truth labels reference planes that are not listed".into()));
    }
    let mut report = evaluate(&estimates, Some(&truth_planes), labels, instances)?;
    report.stages = output.stages.clone();
    Ok(report)
}

pub fn evaluate_homographies(output: &HomographyFitOutput, truth: &Truth) -> HarnessResult<EvalReport> {
    let Truth::Homographies { homographies, labels, .. } = truth else {
        return Err(HarnessError::Data("homography results need homography ground truth".into()));
    };
    let estimates: Vec<Estimate> = output
        .models
        .iter()
        .map(|m| Estimate {
            plane: None,
            inliers: &m.inliers,
        })
        .collect();
    let instances = instance_count(labels).max(homographies.len());
    let mut report = evaluate(&estimates, None, labels, instances)?;
    report.stages = output.stages.clone();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{Mode, PlaneModel};
    use crate::synth::PlaneRecord;

    fn model(id: usize, normal: [f64; 3], offset: f64, inliers: Vec<usize>) -> PlaneModel {
        PlaneModel {
            id,
            label: id as u32,
            normal,
            offset,
            support: inliers.len(),
            residual: 0.0,
            inliers,
        }
    }

    fn truth() -> Truth {
        Truth::Planes {
            planes: vec![
                PlaneRecord {
                    normal: [0.0, 0.0, 1.0],
                    offset: 0.0,
                },
                PlaneRecord {
                    normal: [0.0, 1.0, 0.0],
                    offset: 0.0,
                },
            ],
            labels: vec![Some(0), Some(0), Some(0), Some(1), Some(1), None],
            mask: Default::default(),
        }
    }

    fn output(models: Vec<PlaneModel>) -> PlaneFitOutput {
        PlaneFitOutput {
            mode: Mode::Gc,
            seed: 0,
            models,
            proposals: vec![],
            notes: vec![],
            stages: None,
        }
    }

    #[test]
    fn perfect_result() {
        let out = output(vec![model(0, [0.0, 1.0, 0.0], 0.0, vec![3, 4]), model(1, [0.0, 0.0, 1.0], 0.0, vec![0, 1, 2])]);
        let r = evaluate_planes(&out, &truth()).unwrap();
        assert_eq!(r.models[0].truth, Some(1));
        assert_eq!(r.models[1].truth, Some(0));
        assert!(r.models.iter().all(|m| m.precision == 1.0 && m.recall == 1.0));
        assert_eq!(r.misclassification_rate, 0.0);
        assert_eq!(r.mean_angle_deg, Some(0.0));
    }

    #[test]
    fn partial_and_missed() {
        let out = output(vec![model(0, [0.0, 0.0, 1.0], 0.1, vec![0, 1, 5])]);
        let r = evaluate_planes(&out, &truth()).unwrap();
        assert_eq!(r.missed, vec![1]);
        assert!((r.models[0].precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.models[0].recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.models[0].offset_error.unwrap() - 0.1).abs() < 1e-12);
        // points 2, 3, 4 unassigned and 5 claimed wrongly
        assert!((r.misclassification_rate - 4.0 / 6.0).abs() < 1e-12);
        assert!((r.mean_angle_deg.unwrap() - 45.0).abs() < 1e-12);
    }

    #[test]
    fn spurious_model_is_a_false_positive() {
        let out = output(vec![
            model(0, [0.0, 0.0, 1.0], 0.0, vec![0, 1, 2]),
            model(1, [0.0, 1.0, 0.0], 0.0, vec![3, 4]),
            model(2, [1.0, 0.0, 0.0], 0.0, vec![5]),
        ]);
        let r = evaluate_planes(&out, &truth()).unwrap();
        assert_eq!(r.false_positives, vec![2]);
        assert_eq!(r.models[2].precision, 0.0);
        assert!((r.misclassification_rate - 1.0 / 6.0).abs() < 1e-12);
        assert!(r.to_table().lines().count() == 4);
    }

    #[test]
    fn out_of_range_inliers_are_rejected() {
        let out = output(vec![model(0, [0.0, 0.0, 1.0], 0.0, vec![10])]);
        assert!(evaluate_planes(&out, &truth()).is_err());
    }
}
