//! FAR/FRR threshold sweeps, DET curves and equal error rate.
//!
//! Scores are similarities. At threshold `th` an impostor is falsely
//! accepted when its score is `>= th` and a genuine user is falsely rejected
//! when their score is `< th`, matching the device lock rule.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Points ordered by strictly increasing threshold. The last threshold is
/// `+inf`, where every impostor is rejected and every genuine user too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Validation(format!("{name} score list is empty")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation(format!("{name} scores contain NaN")));
    }
    Ok(())
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Walks every distinct observed score plus a final `+inf` threshold over
/// two ascending slices, calling `visit` with each point. Stops early when
/// `visit` returns false.
fn sweep(genuine: &[f64], impostor: &[f64], mut visit: impl FnMut(DetPoint) -> bool) {
    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
    let (mut g, mut i) = (0usize, 0usize);
    loop {
        let next = match (genuine.get(g), impostor.get(i)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => f64::INFINITY,
        };
        // Scores strictly below `next` have all been consumed.
        let point = DetPoint {
            threshold: next,
            far: (impostor.len() - i) as f64 / ni,
            frr: g as f64 / ng,
        };
        if !visit(point) || next == f64::INFINITY {
            return;
        }
        while genuine.get(g) == Some(&next) {
            g += 1;
        }
        while impostor.get(i) == Some(&next) {
            i += 1;
        }
    }
}

/// DET curve with one point per distinct observed score.
pub fn det_curve(genuine: &[f64], impostor: &[f64]) -> Result<DetCurve> {
    check_scores("genuine", genuine)?;
    check_scores("impostor", impostor)?;
    let (g, i) = (sorted(genuine), sorted(impostor));
    let mut points = Vec::with_capacity(g.len() + i.len() + 1);
    sweep(&g, &i, |p| {
        points.push(p);
        true
    });
    Ok(DetCurve { points })
}

/// FAR and FRR at an arbitrary threshold.
pub fn far_frr_at(genuine: &[f64], impostor: &[f64], threshold: f64) -> (f64, f64) {
    let far = impostor.iter().filter(|&&s| s >= threshold).count() as f64 / impostor.len() as f64;
    let frr = genuine.iter().filter(|&&s| s < threshold).count() as f64 / genuine.len() as f64;
    (far, frr)
}

/// Linear interpolation between the last point with `far > frr` and the
/// first with `far <= frr`.
fn crossing(prev: DetPoint, cur: DetPoint) -> f64 {
    let d0 = prev.far - prev.frr;
    let d1 = cur.far - cur.frr;
    let x = d0 / (d0 - d1);
    prev.far + x * (cur.far - prev.far)
}

/// Equal error rate of a curve built by [`det_curve`].
pub fn eer(curve: &DetCurve) -> f64 {
    let pts = &curve.points;
    match pts.iter().position(|p| p.far <= p.frr) {
        Some(0) => pts[0].far,
        Some(i) => crossing(pts[i - 1], pts[i]),
        None => 0.5,
    }
}

/// EER of two already ascending-sorted score lists, without building the
/// curve. Both lists must be non-empty.
pub fn eer_sorted(genuine: &[f64], impostor: &[f64]) -> f64 {
    debug_assert!(!genuine.is_empty() && !impostor.is_empty());
    let mut prev: Option<DetPoint> = None;
    let mut out = 0.5;
    sweep(genuine, impostor, |p| {
        if p.far <= p.frr {
            out = match prev {
                Some(q) => crossing(q, p),
                None => p.far,
            };
            return false;
        }
        prev = Some(p);
        true
    });
    out
}

/// EER of unsorted genuine and impostor scores.
pub fn equal_error_rate(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    check_scores("genuine", genuine)?;
    check_scores("impostor", impostor)?;
    Ok(eer_sorted(&sorted(genuine), &sorted(impostor)))
}

/// Writes `threshold,far,frr` rows.
pub fn write_det_csv<W: Write>(curve: &DetCurve, mut out: W) -> std::io::Result<()> {
    writeln!(out, "threshold,far,frr")?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.threshold, p.far, p.frr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_separated() {
        let c = det_curve(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert!(c.points.iter().any(|p| p.far == 0.0 && p.frr == 0.0));
        assert_eq!(eer(&c), 0.0);
    }

    #[test]
    fn indistinguishable() {
        let c = det_curve(&[0.5], &[0.5]).unwrap();
        assert!(!c.points.iter().any(|p| p.far == 0.0 && p.frr == 0.0));
        assert_eq!(eer(&c), 0.5);
    }

    #[test]
    fn hand_counted_example() {
        let gen = [0.8, 0.6, 0.4];
        let imp = [0.5, 0.3, 0.1];
        let (far, frr) = far_frr_at(&gen, &imp, 0.5);
        assert!((far - 1.0 / 3.0).abs() < 1e-12 && (frr - 1.0 / 3.0).abs() < 1e-12);
        // Between 0.5 and 0.6 no impostor is accepted any more.
        assert_eq!(far_frr_at(&gen, &imp, 0.55).0, 0.0);
        let c = det_curve(&gen, &imp).unwrap();
        assert!((eer(&c) - 1.0 / 3.0).abs() < 1e-12);
        assert!((equal_error_rate(&gen, &imp).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn interpolates_between_thresholds() {
        // far/frr: th=2.5 (1/2, 1/3), th=3 (0, 1/3) => crossing a third of
        // the way, at 1/3.
        let c = det_curve(&[2.0, 3.0, 4.0], &[1.0, 2.5]).unwrap();
        let e = eer(&c);
        assert!((e - 1.0 / 3.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn curve_shape() {
        let c = det_curve(&[0.3, 0.9, 0.9], &[0.1, 0.3, 0.4]).unwrap();
        let th: Vec<f64> = c.points.iter().map(|p| p.threshold).collect();
        assert_eq!(th, [0.1, 0.3, 0.4, 0.9, f64::INFINITY]);
        assert_eq!(c.points[0].far, 1.0);
        assert_eq!(c.points[0].frr, 0.0);
        let last = c.points.last().unwrap();
        assert_eq!((last.far, last.frr), (0.0, 1.0));
    }

    #[test]
    fn empty_or_nan_is_an_error() {
        assert!(det_curve(&[], &[0.1]).is_err());
        assert!(det_curve(&[0.1], &[]).is_err());
        assert!(det_curve(&[f64::NAN], &[0.1]).is_err());
    }

    #[test]
    fn absent_scores_sort_lowest() {
        let e = equal_error_rate(&[1.0, 2.0], &[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn csv_format() {
        let c = det_curve(&[1.0], &[0.0]).unwrap();
        let mut buf = Vec::new();
        write_det_csv(&c, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "threshold,far,frr\n0,1,0\n1,0,0\ninf,0,1\n"
        );
    }
}
