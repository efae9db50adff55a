//! Dependency-free SVG diagnostics: feature-space PCA scatter, skeleton
//! strips and loss curves. Output depends only on the inputs, so plots of
//! identical data are byte-identical.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{LossReport, POSE_DIM};
use crate::sim::BONES;

const PALETTE: [&str; 8] = ["#555555", "#d62728", "#ff7f0e", "#2ca02c", "#1f77b4", "#9467bd", "#8c564b", "#e377c2"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn header(s: &mut String, w: f64, h: f64) {
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, p0: f64, p1: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        let pad = 0.05 * (hi - lo);
        Self { lo: lo - pad, hi: hi + pad, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

/// One labelled class of 2-D points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSeries {
    pub label: String,
    pub points: Vec<[f64; 2]>,
}

impl ScatterSeries {
    pub fn centroid(&self) -> Option<[f64; 2]> {
        if self.points.is_empty() {
            return None;
        }
        let n = self.points.len() as f64;
        let sx: f64 = self.points.iter().map(|p| p[0]).sum();
        let sy: f64 = self.points.iter().map(|p| p[1]).sum();
        Some([sx / n, sy / n])
    }
}

/// Scatter of projected features, one color per class, centroids ringed.
pub fn pca_svg(series: &[ScatterSeries], explained: Option<[f64; 2]>) -> Result<String> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::invalid("nothing to plot"));
    }
    let (w, h) = (640.0, 480.0);
    let all = || series.iter().flat_map(|s| s.points.iter());
    let ax = Axis::fit(all().map(|p| p[0]), 60.0, 470.0);
    let ay = Axis::fit(all().map(|p| p[1]), 440.0, 30.0);
    let mut s = String::new();
    header(&mut s, w, h);
    let _ = writeln!(s, r##"<rect x="60" y="30" width="410" height="410" fill="none" stroke="#999"/>"##);
    let (lx, ly) = match explained {
        Some([a, b]) => (format!("PC1 ({:.1}%)", 100.0 * a), format!("PC2 ({:.1}%)", 100.0 * b)),
        None => ("PC1".to_string(), "PC2".to_string()),
    };
    let _ = writeln!(s, r#"<text x="265" y="465" text-anchor="middle">{lx}</text>"#);
    let _ = writeln!(s, r#"<text x="20" y="235" text-anchor="middle" transform="rotate(-90 20 235)">{ly}</text>"#);
    for (i, ser) in series.iter().enumerate() {
        let c = color(i);
        let _ = writeln!(s, r#"<g fill="{c}" fill-opacity="0.5">"#);
        for p in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#, ax.map(p[0]), ay.map(p[1]));
        }
        s.push_str("</g>\n");
        if let Some(m) = ser.centroid() {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="7" fill="none" stroke="{c}" stroke-width="2.5"/>"#, ax.map(m[0]), ay.map(m[1]));
        }
        let y = 40.0 + 20.0 * i as f64;
        let _ = writeln!(s, r#"<circle cx="492" cy="{:.2}" r="5" fill="{c}"/>"#, y - 4.0);
        let _ = writeln!(s, r#"<text x="504" y="{y:.2}">{}</text>"#, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Colors of the two figures in a skeleton pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkeletonStyle {
    pub gt: &'static str,
    pub pred: &'static str,
}

impl Default for SkeletonStyle {
    fn default() -> Self {
        Self { gt: "#1f77b4", pred: "#d62728" }
    }
}

const PANEL: f64 = 160.0;

fn stick_figure(s: &mut String, pose: &[f64], stroke: &str, map: impl Fn(f64, f64) -> (f64, f64)) {
    let p = |j: usize| map(pose[3 * j], pose[3 * j + 2]);
    let _ = writeln!(s, r#"<g stroke="{stroke}" stroke-width="2" stroke-linecap="round" fill="{stroke}">"#);
    for (a, b) in BONES {
        let (x0, y0) = p(a.idx());
        let (x1, y1) = p(b.idx());
        let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}"/>"#);
    }
    for j in 0..POSE_DIM / 3 {
        let (x, y) = p(j);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2"/>"#);
    }
    s.push_str("</g>\n");
}

/// Ground-truth and predicted stick figures side by side, one pair per
/// column, seen along the axis perpendicular to the speaker-microphone line.
/// Both figures of a pair share the same horizontal offset, so an exact
/// prediction renders identically to its ground truth.
pub fn skeleton_svg(gt: &[Vec<f64>], pred: &[Vec<f64>], style: SkeletonStyle) -> Result<String> {
    if gt.is_empty() || gt.len() != pred.len() {
        return Err(Error::invalid("need equally many non-zero ground-truth and predicted frames"));
    }
    if gt.iter().chain(pred).any(|p| p.len() != POSE_DIM) {
        return Err(Error::invalid(format!("every pose must have {POSE_DIM} coordinates")));
    }
    let center = |p: &Vec<f64>| (0..POSE_DIM / 3).map(|j| p[3 * j]).sum::<f64>() / (POSE_DIM / 3) as f64;
    let centers: Vec<f64> = gt.iter().map(center).collect();
    // one metric scale for every panel
    let half_width = gt
        .iter()
        .chain(pred)
        .zip(centers.iter().chain(&centers))
        .flat_map(|(p, c)| (0..POSE_DIM / 3).map(move |j| (p[3 * j] - c).abs()))
        .fold(0.5f64, f64::max);
    let zs = Axis::fit(gt.iter().chain(pred).flat_map(|p| (0..POSE_DIM / 3).map(move |j| p[3 * j + 2])), PANEL - 10.0, 10.0);
    let scale = ((PANEL - 20.0) / (zs.hi - zs.lo)).min((PANEL / 2.0 - 10.0) / half_width);
    let (w, h) = (2.0 * PANEL * gt.len() as f64, PANEL + 24.0);
    let mut s = String::new();
    header(&mut s, w, h);
    for (i, ((g, p), c)) in gt.iter().zip(pred).zip(&centers).enumerate() {
        let map = |x: f64, z: f64| (PANEL / 2.0 + (x - c) * scale, PANEL - 10.0 - (z - zs.lo) * scale);
        for (k, (pose, stroke, label)) in [(g, style.gt, "gt"), (p, style.pred, "pred")].into_iter().enumerate() {
            let x0 = (2 * i + k) as f64 * PANEL;
            let _ = writeln!(s, r#"<g transform="translate({x0:.2},0)">"#);
            stick_figure(&mut s, pose, stroke, map);
            s.push_str("</g>\n");
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{label} {i}</text>"#, x0 + PANEL / 2.0, PANEL + 16.0);
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Loss terms against step, one polyline each on a shared axis.
pub fn loss_svg(losses: &[LossReport]) -> Result<String> {
    if losses.is_empty() {
        return Err(Error::invalid("no loss rows"));
    }
    type Pick = fn(&LossReport) -> f64;
    let curves: [(&str, Pick); 5] = [
        ("total", |r| r.total),
        ("pose", |r| r.l_pose),
        ("smooth", |r| r.l_smooth),
        ("std", |r| r.l_std),
        ("disc ce", |r| r.l_disc_ce),
    ];
    let (w, h) = (720.0, 420.0);
    let ax = Axis::fit(losses.iter().map(|r| r.step as f64), 60.0, 580.0);
    let ay = Axis::fit(losses.iter().flat_map(|r| curves.iter().map(move |(_, f)| f(r))).chain([0.0]), 380.0, 20.0);
    let mut s = String::new();
    header(&mut s, w, h);
    let _ = writeln!(s, r##"<rect x="60" y="20" width="520" height="360" fill="none" stroke="#999"/>"##);
    let _ = writeln!(s, r#"<text x="320" y="405" text-anchor="middle">step</text>"#);
    for (i, (name, f)) in curves.iter().enumerate() {
        let c = color(i + 1);
        s.push_str(&format!(r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" data-series="{name}" points=""#));
        for (k, r) in losses.iter().enumerate() {
            let sep = if k == 0 { "" } else { " " };
            let _ = write!(s, "{sep}{:.2},{:.2}", ax.map(r.step as f64), ay.map(f(r)));
        }
        s.push_str("\"/>\n");
        let y = 30.0 + 18.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="595" y1="{:.2}" x2="615" y2="{:.2}" stroke="{c}" stroke-width="2"/>"#, y - 4.0, y - 4.0);
        let _ = writeln!(s, r#"<text x="620" y="{y:.2}">{name}</text>"#);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(dx: f64) -> Vec<f64> {
        (0..POSE_DIM).map(|i| if i % 3 == 0 { dx + 0.01 * i as f64 } else { 0.02 * i as f64 }).collect()
    }

    #[test]
    fn centroid_is_the_mean() {
        let s = ScatterSeries { label: "a".into(), points: vec![[0.0, 0.0], [2.0, 4.0]] };
        assert_eq!(s.centroid(), Some([1.0, 2.0]));
        assert_eq!(ScatterSeries { label: "b".into(), points: vec![] }.centroid(), None);
    }

    #[test]
    fn pca_plot_lists_every_class() {
        let series: Vec<ScatterSeries> =
            ["empty", "0 cm", "100 cm"].iter().enumerate().map(|(i, l)| ScatterSeries { label: l.to_string(), points: vec![[i as f64, 1.0]] }).collect();
        let svg = pca_svg(&series, Some([0.6, 0.2])).unwrap();
        assert!(svg.contains("100 cm") && svg.contains("PC1 (60.0%)"));
        assert_eq!(svg.matches(r#"r="7""#).count(), 3);
        assert!(pca_svg(&[], None).is_err());
    }

    #[test]
    fn skeleton_rejects_bad_shapes() {
        assert!(skeleton_svg(&[], &[], SkeletonStyle::default()).is_err());
        assert!(skeleton_svg(&[pose(0.0)], &[vec![0.0; 3]], SkeletonStyle::default()).is_err());
        let svg = skeleton_svg(&[pose(0.0), pose(1.0)], &[pose(0.1), pose(1.0)], SkeletonStyle::default()).unwrap();
        assert_eq!(svg.matches("<line").count(), 4 * BONES.len());
    }

    #[test]
    fn loss_plot_has_five_series() {
        let l: Vec<LossReport> = (0..3).map(|i| LossReport { step: i, total: 3.0 - i as f64, ..Default::default() }).collect();
        let svg = loss_svg(&l).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 5);
        assert!(loss_svg(&[]).is_err());
    }
}
