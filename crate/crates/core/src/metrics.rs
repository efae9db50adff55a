//! Pose accuracy: coordinate RMSE and MAE, and PCKh with the head-neck
//! distance as the per-frame scale.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{ANCHORS_CM, POSE_DIM};
use crate::sim::{Joint, NUM_JOINTS};

fn check(pred: &[Vec<f64>], gt: &[Vec<f64>]) -> Result<()> {
    if pred.is_empty() || pred.len() != gt.len() {
        return Err(Error::invalid(format!("need equally many non-zero frames, got {} and {}", pred.len(), gt.len())));
    }
    if pred.iter().chain(gt).any(|p| p.len() != POSE_DIM) {
        return Err(Error::invalid(format!("every pose must have {POSE_DIM} coordinates")));
    }
    Ok(())
}

fn coordinate_errors<'a>(pred: &'a [Vec<f64>], gt: &'a [Vec<f64>]) -> impl Iterator<Item = f64> + 'a {
    pred.iter().zip(gt).flat_map(|(p, g)| p.iter().zip(g).map(|(a, b)| a - b))
}

/// Square root of the mean squared coordinate error, meters.
pub fn rmse(pred: &[Vec<f64>], gt: &[Vec<f64>]) -> Result<f64> {
    check(pred, gt)?;
    let n = (pred.len() * POSE_DIM) as f64;
    Ok((coordinate_errors(pred, gt).map(|e| e * e).sum::<f64>() / n).sqrt())
}

/// Mean absolute coordinate error, meters.
pub fn mae(pred: &[Vec<f64>], gt: &[Vec<f64>]) -> Result<f64> {
    check(pred, gt)?;
    let n = (pred.len() * POSE_DIM) as f64;
    Ok(coordinate_errors(pred, gt).map(f64::abs).sum::<f64>() / n)
}

fn joint(p: &[f64], j: usize) -> [f64; 3] {
    [p[3 * j], p[3 * j + 1], p[3 * j + 2]]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Counts for PCKh: correct joints, judged joints, skipped frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PckCounts {
    pub correct: usize,
    pub total: usize,
    pub skipped_frames: usize,
}

pub fn pckh_counts(pred: &[Vec<f64>], gt: &[Vec<f64>], ratio: f64) -> Result<PckCounts> {
    check(pred, gt)?;
    let mut c = PckCounts::default();
    for (p, g) in pred.iter().zip(gt) {
        let h = dist(joint(g, Joint::Head.idx()), joint(g, Joint::Neck.idx()));
        if h == 0.0 {
            c.skipped_frames += 1;
            continue;
        }
        let thr = ratio * h;
        c.total += NUM_JOINTS;
        c.correct += (0..NUM_JOINTS).filter(|&j| dist(joint(p, j), joint(g, j)) <= thr).count();
    }
    Ok(c)
}

/// Fraction of joints within `ratio` head-neck distances of the truth.
/// Frames with coincident head and neck are skipped.
pub fn pckh(pred: &[Vec<f64>], gt: &[Vec<f64>], ratio: f64) -> Result<f64> {
    let c = pckh_counts(pred, gt, ratio)?;
    if c.total == 0 {
        return Err(Error::invalid("every frame has zero head-neck distance"));
    }
    Ok(c.correct as f64 / c.total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub pckh05: f64,
    pub frame_count: usize,
}

fn group_metrics(pred: &[Vec<f64>], gt: &[Vec<f64>]) -> Result<GroupMetrics> {
    let c = pckh_counts(pred, gt, 0.5)?;
    Ok(GroupMetrics {
        rmse: rmse(pred, gt)?,
        mae: mae(pred, gt)?,
        pckh05: if c.total == 0 { 0.0 } else { c.correct as f64 / c.total as f64 },
        frame_count: pred.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub pckh05: f64,
    pub frame_count: usize,
    pub skipped_frames: usize,
    /// Keyed by the nearest anchor, cm.
    pub per_distance: BTreeMap<u32, GroupMetrics>,
}

fn nearest_anchor(d: f64) -> u32 {
    ANCHORS_CM.iter().copied().min_by(|a, b| (a - d).abs().total_cmp(&(b - d).abs())).expect("anchors") as u32
}

/// Pooled metrics plus a breakdown by standing-distance anchor.
pub fn per_position_report(pred: &[Vec<f64>], gt: &[Vec<f64>], distances_cm: &[f64]) -> Result<EvalReport> {
    check(pred, gt)?;
    if distances_cm.len() != pred.len() {
        return Err(Error::invalid("need one distance per frame"));
    }
    let counts = pckh_counts(pred, gt, 0.5)?;
    if counts.total == 0 {
        return Err(Error::invalid("every frame has zero head-neck distance"));
    }
    let mut groups: BTreeMap<u32, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = BTreeMap::new();
    for ((p, g), &d) in pred.iter().zip(gt).zip(distances_cm) {
        let e = groups.entry(nearest_anchor(d)).or_default();
        e.0.push(p.clone());
        e.1.push(g.clone());
    }
    let per_distance = groups.into_iter().map(|(k, (p, g))| group_metrics(&p, &g).map(|m| (k, m))).collect::<Result<_>>()?;
    Ok(EvalReport {
        rmse: rmse(pred, gt)?,
        mae: mae(pred, gt)?,
        pckh05: counts.correct as f64 / counts.total as f64,
        frame_count: pred.len(),
        skipped_frames: counts.skipped_frames,
        per_distance,
    })
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("group,frames,rmse,mae,pckh05\n");
        let _ = writeln!(s, "all,{},{},{},{}", self.frame_count, self.rmse, self.mae, self.pckh05);
        for (d, m) in &self.per_distance {
            let _ = writeln!(s, "{d}cm,{},{},{},{}", m.frame_count, m.rmse, m.mae, m.pckh05);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames      {}", self.frame_count);
        let _ = writeln!(s, "RMSE        {:.4} m", self.rmse);
        let _ = writeln!(s, "MAE         {:.4} m", self.mae);
        let _ = writeln!(s, "PCKh@0.5    {:.4}", self.pckh05);
        if self.skipped_frames > 0 {
            let _ = writeln!(s, "warning: {} frames skipped for PCKh (zero head-neck distance)", self.skipped_frames);
        }
        let _ = writeln!(s, "\n{:>8} {:>7} {:>8} {:>8} {:>8}", "distance", "frames", "RMSE", "MAE", "PCKh");
        for (d, m) in &self.per_distance {
            let _ = writeln!(s, "{:>6}cm {:>7} {:>8.4} {:>8.4} {:>8.4}", d, m.frame_count, m.rmse, m.mae, m.pckh05);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_with_head_neck(h: f64) -> Vec<f64> {
        let mut p: Vec<f64> = (0..POSE_DIM).map(|i| i as f64 * 0.01).collect();
        let neck = joint(&p, 1);
        p[0] = neck[0];
        p[1] = neck[1];
        p[2] = neck[2] + h;
        p
    }

    #[test]
    fn constant_offsets() {
        let g = vec![frame_with_head_neck(0.2); 3];
        let p: Vec<Vec<f64>> = g.iter().map(|f| f.iter().map(|v| v + 0.1).collect()).collect();
        assert!((rmse(&p, &g).unwrap() - 0.1).abs() < 1e-12);
        let alt: Vec<Vec<f64>> = g.iter().map(|f| f.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.2 } else { -0.2 }).collect()).collect();
        assert!((mae(&alt, &g).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(rmse(&g, &g).unwrap(), 0.0);
        assert_eq!(mae(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn pckh_tie_counts_as_correct() {
        // dyadic values so the tie is exact in floating point
        let mut g = vec![0.0; POSE_DIM];
        g[2] = 0.25;
        let mut p = g.clone();
        p[3 * 5] += 0.125;
        assert_eq!(pckh(&[p], &[g.clone()], 0.5).unwrap(), 1.0);
        let mut q = g.clone();
        for j in 2..9 {
            q[3 * j + 1] += 0.15;
        }
        assert!((pckh(&[q], &[g.clone()], 0.5).unwrap() - 14.0 / 21.0).abs() < 1e-12);
        let flat = vec![0.0; POSE_DIM];
        assert!(pckh(&[flat.clone()], &[flat], 0.5).is_err());
    }

    #[test]
    fn degenerate_frames_are_skipped_and_counted() {
        let good = frame_with_head_neck(0.2);
        let bad = vec![0.0; POSE_DIM];
        let c = pckh_counts(&[good.clone(), bad.clone()], &[good, bad], 0.5).unwrap();
        assert_eq!(c, PckCounts { correct: 21, total: 21, skipped_frames: 1 });
    }

    #[test]
    fn grouping_pools_correctly() {
        let g = vec![frame_with_head_neck(0.2); 4];
        let p: Vec<Vec<f64>> = g
            .iter()
            .enumerate()
            .map(|(i, f)| f.iter().map(|v| v + if i < 2 { 0.1 } else { 0.3 }).collect())
            .collect();
        let r = per_position_report(&p, &g, &[0.0, 0.0, 100.0, 100.0]).unwrap();
        assert!((r.rmse - (0.05f64).sqrt()).abs() < 1e-12);
        assert!((r.per_distance[&0].rmse - 0.1).abs() < 1e-12);
        assert!((r.per_distance[&100].rmse - 0.3).abs() < 1e-12);
        assert_eq!(r.per_distance.values().map(|m| m.frame_count).sum::<usize>(), r.frame_count);
        let single = per_position_report(&p, &g, &[25.0; 4]).unwrap();
        let only = single.per_distance[&25];
        assert_eq!((only.rmse, only.mae, only.pckh05), (single.rmse, single.mae, single.pckh05));
        assert!(r.to_csv().starts_with("group,frames,rmse,mae,pckh05\nall,4,"));
    }
}
