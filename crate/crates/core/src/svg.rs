//! Static SVG figures. Path coordinates are the raw `(σ, t)` data written
//! with round-trip formatting; a single group transform maps them to the
//! page, so curves can be re-extracted from the file exactly.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::field::{BBox, Polyline};
use crate::numfmt::fmt_f64;

const PAGE: f64 = 640.0;
const MARGIN: f64 = 20.0;

pub struct Figure {
    bbox: BBox,
    body: String,
}

fn points_attr(points: &[Complex64]) -> String {
    let parts: Vec<String> = points
        .iter()
        .map(|p| format!("{},{}", fmt_f64(p.re), fmt_f64(p.im)))
        .collect();
    parts.join(" ")
}

/// Maps `x ∈ [0, 1]` to a blue–red ramp.
pub fn ramp(x: f64) -> String {
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    let r = (40.0 + 200.0 * x).round() as u8;
    let b = (220.0 - 180.0 * x).round() as u8;
    format!("#{r:02x}50{b:02x}")
}

impl Figure {
    pub fn new(bbox: BBox) -> Self {
        Figure {
            bbox,
            body: String::new(),
        }
    }

    fn page_size(&self) -> (f64, f64) {
        let aspect = self.bbox.height() / self.bbox.width();
        if aspect <= 1.0 {
            (PAGE, PAGE * aspect)
        } else {
            (PAGE / aspect, PAGE)
        }
    }

    /// Shaded region bounded by `rings` (even-odd fill).
    pub fn region(&mut self, rings: &[Polyline], fill: &str) {
        if rings.is_empty() {
            return;
        }
        let mut d = String::new();
        for ring in rings.iter().filter(|r| !r.points.is_empty()) {
            let _ = write!(d, "M{}Z", points_attr(&ring.points).replace(' ', "L"));
        }
        let _ = writeln!(
            self.body,
            r#"<path class="region" d="{d}" fill="{fill}" fill-opacity="0.35" fill-rule="evenodd" stroke="{fill}" vector-effect="non-scaling-stroke"/>"#
        );
    }

    pub fn polyline(&mut self, class: &str, points: &[Complex64], stroke: &str) {
        if points.len() < 2 {
            return;
        }
        let _ = writeln!(
            self.body,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="{stroke}" stroke-width="1.5" vector-effect="non-scaling-stroke"/>"#,
            points_attr(points)
        );
    }

    /// Polyline split into runs of equal colour bin. Consecutive runs share
    /// their joint point, so concatenating them without the repeated joints
    /// recovers `points`.
    pub fn graded_polyline(&mut self, class: &str, points: &[Complex64], values: &[f64], bins: usize) {
        let bin = |v: f64| ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        let mut start = 0;
        while start + 1 < points.len() {
            let b = bin(values[start]);
            let mut end = start + 1;
            while end + 1 < points.len() && bin(values[end]) == b {
                end += 1;
            }
            self.polyline(class, &points[start..=end], &ramp((b as f64 + 0.5) / bins as f64));
            start = end;
        }
    }

    pub fn marker(&mut self, class: &str, p: Complex64, label: &str) {
        let _ = writeln!(
            self.body,
            r#"<g class="{class}" transform="translate({},{})"><circle r="0" stroke="black" stroke-width="6" vector-effect="non-scaling-stroke" stroke-linecap="round"/><title>{label}</title></g>"#,
            fmt_f64(p.re),
            fmt_f64(p.im)
        );
    }

    pub fn finish(self, title: &str) -> String {
        let (w, h) = self.page_size();
        let sx = (w - 2.0 * MARGIN) / self.bbox.width();
        let sy = (h - 2.0 * MARGIN) / self.bbox.height();
        let tx = MARGIN - sx * self.bbox.sigma_min;
        let ty = MARGIN + sy * self.bbox.t_max;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
            fmt_f64(w),
            fmt_f64(h),
            fmt_f64(w),
            fmt_f64(h)
        );
        let _ = writeln!(out, "<title>{title}</title>");
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<g id="data" data-bbox="{},{},{},{}" transform="matrix({} 0 0 {} {} {})">"#,
            fmt_f64(self.bbox.sigma_min),
            fmt_f64(self.bbox.sigma_max),
            fmt_f64(self.bbox.t_min),
            fmt_f64(self.bbox.t_max),
            fmt_f64(sx),
            fmt_f64(-sy),
            fmt_f64(tx),
            fmt_f64(ty)
        );
        let _ = writeln!(
            out,
            r#"<rect class="frame" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="gray" vector-effect="non-scaling-stroke"/>"#,
            fmt_f64(self.bbox.sigma_min),
            fmt_f64(self.bbox.t_min),
            fmt_f64(self.bbox.width()),
            fmt_f64(self.bbox.height())
        );
        out.push_str(&self.body);
        out.push_str("</g>\n</svg>\n");
        out
    }
}

/// Parses every `<polyline class="{class}" points="...">` back into point
/// lists.
pub fn extract_polylines(svg: &str, class: &str) -> Vec<Vec<Complex64>> {
    let open = format!(r#"<polyline class="{class}" points=""#);
    svg.lines()
        .filter_map(|line| line.strip_prefix(&open))
        .map(|rest| {
            let data = &rest[..rest.find('"').unwrap_or(rest.len())];
            data.split(' ')
                .filter_map(|pair| {
                    let (x, y) = pair.split_once(',')?;
                    Some(Complex64::new(x.parse().ok()?, y.parse().ok()?))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_polyline_round_trips() {
        let points: Vec<Complex64> = (0..50)
            .map(|k| Complex64::from_polar(1.0, 0.1 * k as f64 + 1e-3 / 3.0))
            .collect();
        let values: Vec<f64> = (0..50).map(|k| k as f64 / 49.0).collect();
        let mut fig = Figure::new(BBox::centered(Complex64::new(0.0, 0.0), 2.0));
        fig.graded_polyline("locus", &points, &values, 8);
        let svg = fig.finish("test");
        let runs = extract_polylines(&svg, "locus");
        assert_eq!(runs.len(), 8);
        let mut joined = runs[0].clone();
        for run in &runs[1..] {
            assert_eq!(joined.last(), run.first());
            joined.extend_from_slice(&run[1..]);
        }
        assert_eq!(joined, points);
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(0.0), "#2850dc");
        assert_eq!(ramp(1.0), "#f05028");
    }
}
