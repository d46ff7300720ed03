//! Brute-force sampling of scalar fields on a rectangle, marching-squares
//! contours and 4-connected component labeling.
//!
//! Samples sit on the node lattice `x_i = σ_min + i·(σ_max − σ_min)/(nx − 1)`,
//! so both bbox edges are sampled. Values are row-major: `values[j * nx + i]`
//! is the sample at `(x_i, y_j)`.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numfmt::fmt_f64;
use crate::rational::{wrapped_residual, RationalMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl BBox {
    pub fn new(sigma_min: f64, sigma_max: f64, t_min: f64, t_max: f64) -> Self {
        BBox {
            sigma_min,
            sigma_max,
            t_min,
            t_max,
        }
    }

    /// Square of half-width `half` around `center`.
    pub fn centered(center: Complex64, half: f64) -> Self {
        BBox::new(center.re - half, center.re + half, center.im - half, center.im + half)
    }

    pub fn is_valid(&self) -> bool {
        [self.sigma_min, self.sigma_max, self.t_min, self.t_max]
            .iter()
            .all(|v| v.is_finite())
            && self.sigma_max > self.sigma_min
            && self.t_max > self.t_min
    }

    pub fn width(&self) -> f64 {
        self.sigma_max - self.sigma_min
    }

    pub fn height(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn contains(&self, s: Complex64) -> bool {
        (self.sigma_min..=self.sigma_max).contains(&s.re) && (self.t_min..=self.t_max).contains(&s.im)
    }

    /// Largest distance from the origin to a corner.
    pub fn max_corner_norm(&self) -> f64 {
        let x = self.sigma_min.abs().max(self.sigma_max.abs());
        let y = self.t_min.abs().max(self.t_max.abs());
        x.hypot(y)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let c = Complex64::new(0.5 * (self.sigma_min + self.sigma_max), 0.5 * (self.t_min + self.t_max));
        let hw = 0.5 * factor * self.width();
        let hh = 0.5 * factor * self.height();
        BBox::new(c.re - hw, c.re + hw, c.im - hh, c.im + hh)
    }
}

/// Row-major samples on the node lattice of `bbox`. Singular samples are
/// stored as `+∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub bbox: BBox,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn dx(&self) -> f64 {
        self.bbox.width() / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.bbox.height() / (self.ny - 1) as f64
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.dx().hypot(self.dy())
    }

    pub fn x(&self, i: usize) -> f64 {
        lattice(self.bbox.sigma_min, self.bbox.sigma_max, self.nx, i)
    }

    pub fn y(&self, j: usize) -> f64 {
        lattice(self.bbox.t_min, self.bbox.t_max, self.ny, j)
    }

    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.x(i), self.y(j))
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Lower-left node of the cell containing `s`, if `s` lies in the bbox.
    pub fn cell_of(&self, s: Complex64) -> Option<(usize, usize)> {
        if !self.bbox.contains(s) {
            return None;
        }
        let fi = (s.re - self.bbox.sigma_min) / self.dx();
        let fj = (s.im - self.bbox.t_min) / self.dy();
        let i = (fi.floor() as usize).min(self.nx - 2);
        let j = (fj.floor() as usize).min(self.ny - 2);
        Some((i, j))
    }

    /// Header row `sigma_min,sigma_max,t_min,t_max,nx,ny`, its values, then
    /// one row of `nx` samples per `t` level, bottom to top.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma_min,sigma_max,t_min,t_max,nx,ny\n");
        let b = &self.bbox;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(b.sigma_min),
            fmt_f64(b.sigma_max),
            fmt_f64(b.t_min),
            fmt_f64(b.t_max),
            self.nx,
            self.ny
        );
        for row in self.values.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn lattice(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

fn sample_raw<F>(f: F, bbox: BBox, nx: usize, ny: usize) -> GridField
where
    F: Fn(Complex64) -> f64 + Sync,
{
    assert!(nx >= 2 && ny >= 2, "grid needs at least 2x2 samples");
    assert!(bbox.is_valid(), "degenerate bbox {bbox:?}");
    let mut values = vec![0.0; nx * ny];
    values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        let t = lattice(bbox.t_min, bbox.t_max, ny, j);
        for (i, v) in row.iter_mut().enumerate() {
            *v = f(Complex64::new(lattice(bbox.sigma_min, bbox.sigma_max, nx, i), t));
        }
    });
    GridField { bbox, nx, ny, values }
}

/// Samples `f` at every lattice node, rows in parallel. `NaN` and infinite
/// results become `+∞`.
pub fn sample_grid<F>(f: F, bbox: BBox, nx: usize, ny: usize) -> GridField
where
    F: Fn(Complex64) -> f64 + Sync,
{
    let mut field = sample_raw(f, bbox, nx, ny);
    for v in &mut field.values {
        if !v.is_finite() {
            *v = f64::INFINITY;
        }
    }
    field
}

/// Open or closed polyline in the `(σ, t)` plane. Closed polylines repeat
/// their first point at the end. Serialized as an array of `[σ, t]` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polyline {
    pub points: Vec<Complex64>,
}

impl Polyline {
    pub fn is_closed(&self) -> bool {
        self.points.len() > 2 && self.points.first() == self.points.last()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Even-odd point-in-polygon test; only meaningful for closed polylines.
    pub fn winds_around(&self, p: Complex64) -> bool {
        let mut inside = false;
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.im > p.im) != (b.im > p.im) {
                let x = a.re + (p.im - a.im) / (b.im - a.im) * (b.re - a.re);
                if p.re < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

impl Serialize for Polyline {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.points.len()))?;
        for p in &self.points {
            seq.serialize_element(&[p.re, p.im])?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Polyline {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(deserializer)?;
        Ok(Polyline {
            points: pairs.into_iter().map(|[x, y]| Complex64::new(x, y)).collect(),
        })
    }
}

/// Edge between node `a` and its right (`vertical == false`) or upper
/// neighbour.
type EdgeKey = (usize, bool);

/// Marching squares over an `nx × ny` node lattice.
///
/// `inside[n]` classifies nodes. `crossing(a, b)` returns the interpolation
/// parameter from `a` toward `b` for an edge whose endpoints differ, or `None`
/// to suppress the crossing. Cells with four crossings are resolved by
/// `center_inside(i, j)`; cells with an odd count are skipped.
fn march_squares(
    nx: usize,
    cells: impl Iterator<Item = (usize, usize)>,
    inside: impl Fn(usize) -> bool,
    crossing: impl Fn(usize, usize) -> Option<f64>,
    center_inside: impl Fn(usize, usize) -> bool,
    position: impl Fn(usize, usize, f64) -> Complex64,
) -> Vec<Polyline> {
    let mut points: HashMap<EdgeKey, Complex64> = HashMap::new();
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for (i, j) in cells {
        let c = [j * nx + i, j * nx + i + 1, (j + 1) * nx + i + 1, (j + 1) * nx + i];
        let ins = c.map(&inside);
        // Edges 0..4: bottom, right, top, left; corner k sits between edges
        // k-1 and k.
        let edges: [(usize, usize, EdgeKey); 4] = [
            (c[0], c[1], (c[0], false)),
            (c[1], c[2], (c[1], true)),
            (c[3], c[2], (c[3], false)),
            (c[0], c[3], (c[0], true)),
        ];
        let mut hit = [false; 4];
        for (e, &(a, b, key)) in edges.iter().enumerate() {
            if ins[edges_corner(e, 0)] == ins[edges_corner(e, 1)] {
                continue;
            }
            if let Some(t) = crossing(a, b) {
                hit[e] = true;
                points.entry(key).or_insert_with(|| position(a, b, t.clamp(0.0, 1.0)));
            }
        }
        let hits: Vec<usize> = (0..4).filter(|&e| hit[e]).collect();
        match hits.len() {
            2 => segments.push((edges[hits[0]].2, edges[hits[1]].2)),
            4 => {
                let center = center_inside(i, j);
                for k in 0..4 {
                    // Isolate corners on the opposite side from the center.
                    if ins[k] != center {
                        let e_prev = (k + 3) % 4;
                        segments.push((edges[e_prev].2, edges[k].2));
                    }
                }
            }
            _ => {}
        }
    }
    link_segments(&segments, &points)
}

/// Corner indices (0..4, counter-clockwise from lower-left) at the ends of
/// cell edge `e`.
fn edges_corner(e: usize, end: usize) -> usize {
    match (e, end) {
        (0, 0) => 0,
        (0, _) => 1,
        (1, 0) => 1,
        (1, _) => 2,
        (2, 0) => 3,
        (2, _) => 2,
        (3, 0) => 0,
        _ => 3,
    }
}

fn link_segments(segments: &[(EdgeKey, EdgeKey)], points: &HashMap<EdgeKey, Complex64>) -> Vec<Polyline> {
    let mut incident: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (idx, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(idx);
        incident.entry(b).or_default().push(idx);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();

    let walk = |start_seg: usize, start_key: EdgeKey, used: &mut Vec<bool>| -> Vec<EdgeKey> {
        let mut keys = vec![start_key];
        let mut seg = start_seg;
        let mut key = start_key;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            key = if a == key { b } else { a };
            keys.push(key);
            match incident[&key].iter().find(|&&s| !used[s]) {
                Some(&next) => seg = next,
                None => break,
            }
        }
        keys
    };

    // Open chains start at edges touched by a single segment.
    let mut ends: Vec<EdgeKey> = incident
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(&k, _)| k)
        .collect();
    ends.sort_unstable();
    for key in ends {
        let seg = incident[&key][0];
        if used[seg] {
            continue;
        }
        let keys = walk(seg, key, &mut used);
        out.push(to_polyline(&keys, points));
    }
    for seg in 0..segments.len() {
        if used[seg] {
            continue;
        }
        let start = segments[seg].0.min(segments[seg].1);
        let keys = walk(seg, start, &mut used);
        out.push(to_polyline(&keys, points));
    }
    out
}

fn to_polyline(keys: &[EdgeKey], points: &HashMap<EdgeKey, Complex64>) -> Polyline {
    let mut pts: Vec<Complex64> = Vec::with_capacity(keys.len());
    for k in keys {
        let p = points[k];
        if pts.last() != Some(&p) {
            pts.push(p);
        }
    }
    if keys.len() > 2 && keys.first() == keys.last() && pts.first() != pts.last() {
        pts.push(pts[0]);
    }
    Polyline { points: pts }
}

fn node_position(field: &GridField, a: usize, b: usize, t: f64) -> Complex64 {
    let pa = field.node(a % field.nx, a / field.nx);
    let pb = field.node(b % field.nx, b / field.nx);
    pa + (pb - pa) * t
}

fn all_cells(nx: usize, ny: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..ny - 1).flat_map(move |j| (0..nx - 1).map(move |i| (i, j)))
}

/// Level-`level` contours by marching squares with linear interpolation.
/// Four-crossing cells are resolved by the mean of the corner samples.
pub fn contour_extract(field: &GridField, level: f64) -> Vec<Polyline> {
    let v = &field.values;
    let nx = field.nx;
    march_squares(
        nx,
        all_cells(nx, field.ny),
        |n| v[n] < level,
        |a, b| {
            if v[a].is_finite() && v[b].is_finite() {
                Some((level - v[a]) / (v[b] - v[a]))
            } else {
                Some(0.5)
            }
        },
        |i, j| {
            let c = [
                v[j * nx + i],
                v[j * nx + i + 1],
                v[(j + 1) * nx + i],
                v[(j + 1) * nx + i + 1],
            ];
            c.iter().sum::<f64>() / 4.0 < level
        },
        |a, b, t| node_position(field, a, b, t),
    )
}

/// Signed wrapped residual `φ(s) − α` in `[−π, π)` on the lattice; `NaN` at
/// zeros, poles and removable points.
pub fn phase_residual_field(w: &RationalMap, alpha: f64, bbox: BBox, nx: usize, ny: usize) -> GridField {
    sample_raw(
        |s| w.phase(s).map(|phi| wrapped_residual(phi, alpha)).unwrap_or(f64::NAN),
        bbox,
        nx,
        ny,
    )
}

/// The `arg W ≡ α` level set as polylines: the zero contour of the wrapped
/// residual. Edges whose endpoint residuals differ by more than `π` straddle
/// the `α + π` cut and never carry a crossing.
pub fn phase_level_scan(w: &RationalMap, alpha: f64, bbox: BBox, nx: usize, ny: usize) -> Vec<Polyline> {
    let field = phase_residual_field(w, alpha, bbox, nx, ny);
    phase_level_contours(&field)
}

/// Zero contour of a wrapped residual field, see [`phase_level_scan`].
pub fn phase_level_contours(field: &GridField) -> Vec<Polyline> {
    let v = &field.values;
    let nx = field.nx;
    march_squares(
        nx,
        all_cells(nx, field.ny),
        |n| v[n] < 0.0,
        |a, b| {
            let (ra, rb) = (v[a], v[b]);
            if ra.is_nan() || rb.is_nan() || (ra - rb).abs() > std::f64::consts::PI {
                None
            } else {
                Some(ra / (ra - rb))
            }
        },
        |i, j| {
            let c = [
                v[j * nx + i],
                v[j * nx + i + 1],
                v[(j + 1) * nx + i],
                v[(j + 1) * nx + i + 1],
            ];
            c.iter().sum::<f64>() / 4.0 < 0.0
        },
        |a, b, t| node_position(field, a, b, t),
    )
}

/// Sublevel or superlevel predicate for [`connected_components`]. The
/// threshold doubles as the boundary contour level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Below(f64),
    Above(f64),
}

impl Threshold {
    pub fn holds(&self, v: f64) -> bool {
        match *self {
            Threshold::Below(c) => v < c,
            Threshold::Above(c) => v > c,
        }
    }

    /// Positive inside, nonpositive outside.
    fn margin(&self, v: f64) -> f64 {
        match *self {
            Threshold::Below(c) => c - v,
            Threshold::Above(c) => v - c,
        }
    }
}

/// A 4-connected set of lattice nodes satisfying a threshold predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    /// Row-major node indices, ascending.
    pub cells: Vec<usize>,
    /// Closed contours separating the region from the rest of the grid; the
    /// bbox edge closes regions that touch it.
    pub boundary: Vec<Polyline>,
    /// Indices of marked points lying in the region, see [`mark_points`].
    pub contains: Vec<usize>,
}

impl Region {
    pub fn touches(&self, node: usize) -> bool {
        self.cells.binary_search(&node).is_ok()
    }
}

/// 4-connected components of the nodes satisfying `threshold`, labeled in
/// row-major order of their first node.
pub fn connected_components(field: &GridField, threshold: Threshold) -> Vec<Region> {
    let (nx, ny) = (field.nx, field.ny);
    let mut label = vec![usize::MAX; nx * ny];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..nx * ny {
        if label[start] != usize::MAX || !threshold.holds(field.values[start]) {
            continue;
        }
        let id = regions.len();
        let mut cells = Vec::new();
        label[start] = id;
        queue.push_back(start);
        while let Some(n) = queue.pop_front() {
            cells.push(n);
            let (i, j) = (n % nx, n / nx);
            let mut nbrs = [usize::MAX; 4];
            if i > 0 {
                nbrs[0] = n - 1;
            }
            if i + 1 < nx {
                nbrs[1] = n + 1;
            }
            if j > 0 {
                nbrs[2] = n - nx;
            }
            if j + 1 < ny {
                nbrs[3] = n + nx;
            }
            for m in nbrs {
                if m != usize::MAX && label[m] == usize::MAX && threshold.holds(field.values[m]) {
                    label[m] = id;
                    queue.push_back(m);
                }
            }
        }
        cells.sort_unstable();
        regions.push(Region {
            id,
            cells,
            boundary: Vec::new(),
            contains: Vec::new(),
        });
    }
    for region in &mut regions {
        region.boundary = region_boundary(field, threshold, &label, region.id, &region.cells);
    }
    regions
}

/// Boundary of one labeled region: marching squares on a lattice padded by a
/// ring of outside nodes collapsed onto the bbox edge, so every contour closes.
/// Diagonal-only contacts stay separated, matching 4-connectivity.
fn region_boundary(
    field: &GridField,
    threshold: Threshold,
    label: &[usize],
    id: usize,
    cells: &[usize],
) -> Vec<Polyline> {
    let (nx, ny) = (field.nx, field.ny);
    let px = nx + 2;
    let (mut i0, mut i1, mut j0, mut j1) = (usize::MAX, 0, usize::MAX, 0);
    for &n in cells {
        let (i, j) = (n % nx, n / nx);
        i0 = i0.min(i);
        i1 = i1.max(i);
        j0 = j0.min(j);
        j1 = j1.max(j);
    }
    // Padded coordinates shift by one; cells span one node beyond the region.
    let unpad = |p: usize| -> Option<usize> {
        let (pi, pj) = (p % px, p / px);
        if pi == 0 || pj == 0 || pi > nx || pj > ny {
            None
        } else {
            Some((pj - 1) * nx + pi - 1)
        }
    };
    let inside = |p: usize| unpad(p).is_some_and(|n| label[n] == id);
    let cells_iter = (j0..=j1 + 1).flat_map(move |pj| (i0..=i1 + 1).map(move |pi| (pi, pj)));
    let position = |a: usize, b: usize, t: f64| {
        let clamp = |p: usize| {
            let pi = (p % px).clamp(1, nx) - 1;
            let pj = (p / px).clamp(1, ny) - 1;
            field.node(pi, pj)
        };
        let (pa, pb) = (clamp(a), clamp(b));
        pa + (pb - pa) * t
    };
    march_squares(
        px,
        cells_iter,
        inside,
        |a, b| {
            let (Some(na), Some(nb)) = (unpad(a), unpad(b)) else {
                return Some(0.5);
            };
            let (ga, gb) = (threshold.margin(field.values[na]), threshold.margin(field.values[nb]));
            if ga.is_finite() && gb.is_finite() && ga != gb {
                Some(ga / (ga - gb))
            } else {
                Some(0.5)
            }
        },
        |_, _| false,
        position,
    )
}

/// Records in each region the indices of `marks` whose enclosing cell has a
/// corner in that region.
pub fn mark_points(field: &GridField, regions: &mut [Region], marks: &[Complex64]) {
    let hits = points_in_regions(field, regions, marks);
    for (region, contains) in regions.iter_mut().zip(hits) {
        region.contains = contains;
    }
}

/// For each region, the indices of `marks` whose enclosing cell has a corner
/// in it.
pub fn points_in_regions(field: &GridField, regions: &[Region], marks: &[Complex64]) -> Vec<Vec<usize>> {
    let nx = field.nx;
    let mut out = vec![Vec::new(); regions.len()];
    for (k, &m) in marks.iter().enumerate() {
        let Some((i, j)) = field.cell_of(m) else { continue };
        let corners = [j * nx + i, j * nx + i + 1, (j + 1) * nx + i, (j + 1) * nx + i + 1];
        for (r, region) in regions.iter().enumerate() {
            if corners.iter().any(|&c| region.touches(c)) {
                out[r].push(k);
            }
        }
    }
    out
}

fn segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a) * ab.conj()).re / len2;
    (p - (a + ab * t.clamp(0.0, 1.0))).norm()
}

/// Distance from `p` to the nearest point of any polyline.
pub fn distance_to_polylines(p: Complex64, lines: &[Polyline]) -> f64 {
    let mut best = f64::INFINITY;
    for line in lines {
        match line.points.len() {
            0 => {}
            1 => best = best.min((p - line.points[0]).norm()),
            _ => {
                for w in line.points.windows(2) {
                    best = best.min(segment_distance(p, w[0], w[1]));
                }
            }
        }
    }
    best
}

/// Largest distance from a vertex of `from` to the polylines `to`.
pub fn directed_hausdorff(from: &[Polyline], to: &[Polyline]) -> f64 {
    from.par_iter()
        .flat_map_iter(|l| l.points.iter().copied())
        .map(|p| distance_to_polylines(p, to))
        .reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polyline sets, measured at
/// vertices against segments.
pub fn hausdorff(a: &[Polyline], b: &[Polyline]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

/// Restricts polylines to the parts inside `bbox`, splitting where they
/// leave it. Segments crossing the edge are cut at the edge.
pub fn clip_polylines(lines: &[Polyline], bbox: &BBox) -> Vec<Polyline> {
    let mut out = Vec::new();
    for line in lines {
        let mut current: Vec<Complex64> = Vec::new();
        for (k, &p) in line.points.iter().enumerate() {
            let inside = bbox.contains(p);
            if k > 0 {
                let q = line.points[k - 1];
                let was_inside = bbox.contains(q);
                if inside != was_inside {
                    if let Some(x) = edge_crossing(q, p, bbox) {
                        current.push(x);
                    }
                    if was_inside {
                        out.push(Polyline {
                            points: std::mem::take(&mut current),
                        });
                    }
                }
            }
            if inside {
                current.push(p);
            }
        }
        if !current.is_empty() {
            out.push(Polyline { points: current });
        }
    }
    out
}

/// Point where segment `a → b` crosses the boundary of `bbox`, for a segment
/// with exactly one endpoint inside.
fn edge_crossing(a: Complex64, b: Complex64, bbox: &BBox) -> Option<Complex64> {
    let d = b - a;
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if (0.0..=1.0).contains(&t) {
            let p = a + d * t;
            let slack = 1e-12 * (1.0 + bbox.max_corner_norm());
            let on_box = p.re >= bbox.sigma_min - slack
                && p.re <= bbox.sigma_max + slack
                && p.im >= bbox.t_min - slack
                && p.im <= bbox.t_max + slack;
            if on_box {
                let inside_first = bbox.contains(a);
                best = Some(match best {
                    None => t,
                    Some(b) if inside_first => b.min(t),
                    Some(b) => b.max(t),
                });
            }
        }
    };
    if d.re != 0.0 {
        consider((bbox.sigma_min - a.re) / d.re);
        consider((bbox.sigma_max - a.re) / d.re);
    }
    if d.im != 0.0 {
        consider((bbox.t_min - a.im) / d.im);
        consider((bbox.t_max - a.im) / d.im);
    }
    best.map(|t| {
        let p = a + d * t;
        Complex64::new(
            p.re.clamp(bbox.sigma_min, bbox.sigma_max),
            p.im.clamp(bbox.t_min, bbox.t_max),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_square(half: f64) -> BBox {
        BBox::centered(c(0.0, 0.0), half)
    }

    #[test]
    fn modulus_samples_on_three_by_three() {
        let f = sample_grid(|s| s.norm(), unit_square(1.0), 3, 3);
        assert_eq!(f.value(1, 1), 0.0);
        for (i, j) in [(0, 0), (2, 0), (0, 2), (2, 2)] {
            assert!((f.value(i, j) - SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn gain_of_reciprocal_is_finite_with_minimum_at_pole() {
        let w = RationalMap::new(Polynomial::from_real(&[1.0]), Polynomial::from_real(&[0.0, 1.0])).unwrap();
        let f = sample_grid(|s| w.gain(s), unit_square(1.0), 21, 21);
        assert!(f.values.iter().all(|v| v.is_finite()));
        let (argmin, _) = f.values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(argmin, 10 * 21 + 10);
        assert_eq!(f.values[argmin], 0.0);
    }

    #[test]
    fn singular_samples_become_infinite() {
        let f = sample_grid(|s| 1.0 / s.norm(), unit_square(1.0), 3, 3);
        assert_eq!(f.value(1, 1), f64::INFINITY);
        let f = sample_grid(|s| if s.re > 0.0 { f64::NAN } else { 1.0 }, unit_square(1.0), 3, 3);
        assert_eq!(f.value(2, 0), f64::INFINITY);
    }

    #[test]
    fn unit_circle_contour() {
        let f = sample_grid(|s| s.norm(), unit_square(2.0), 81, 81);
        let lines = contour_extract(&f, 1.0);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].is_closed());
        let half_diag = 0.5 * f.cell_diagonal();
        for p in &lines[0].points {
            assert!((p.norm() - 1.0).abs() <= half_diag);
        }
    }

    #[test]
    fn constant_field_has_no_contour() {
        let f = sample_grid(|_| 2.0, unit_square(2.0), 16, 16);
        assert!(contour_extract(&f, 1.0).is_empty());
    }

    #[test]
    fn bisector_contour_is_imaginary_axis() {
        let f = sample_grid(|s| ((s - 1.0) / (s + 1.0)).norm(), unit_square(2.0), 64, 64);
        let lines = contour_extract(&f, 1.0);
        assert_eq!(lines.len(), 1);
        assert!(!lines[0].is_closed());
        for p in &lines[0].points {
            assert!(p.re.abs() <= 0.5 * f.cell_diagonal());
        }
        let ts: Vec<f64> = lines[0].points.iter().map(|p| p.im).collect();
        let (lo, hi) = (
            ts.iter().cloned().fold(f64::MAX, f64::min),
            ts.iter().cloned().fold(f64::MIN, f64::max),
        );
        assert_eq!((lo, hi), (-2.0, 2.0));
    }

    #[test]
    fn saddle_cell_follows_center_sample() {
        // Corners: 0 and 2 high, 1 and 3 low; center mean decides.
        let field = |center_high: bool| GridField {
            bbox: unit_square(1.0),
            nx: 2,
            ny: 2,
            values: if center_high {
                vec![2.0, 0.0, 0.5, 2.0]
            } else {
                vec![1.5, 0.0, 0.0, 1.5]
            },
        };
        let above = contour_extract(&field(true), 1.0);
        assert_eq!(above.len(), 2);
        let below = contour_extract(&field(false), 1.0);
        assert_eq!(below.len(), 2);
        // High center joins the two high corners, so each segment cuts off a
        // low corner, and the other way round.
        let cuts_corner = |lines: &[Polyline], corner: Complex64| {
            lines
                .iter()
                .any(|l| l.points.iter().all(|p| (p - corner).norm() < 1.0 + 1e-12))
        };
        assert!(cuts_corner(&above, c(1.0, -1.0)));
        assert!(cuts_corner(&below, c(-1.0, -1.0)));
    }

    #[test]
    fn components_of_modulus_disc() {
        let f = sample_grid(|s| s.norm(), unit_square(2.0), 41, 41);
        let mut regions = connected_components(&f, Threshold::Below(1.0));
        assert_eq!(regions.len(), 1);
        mark_points(&f, &mut regions, &[c(0.0, 0.0), c(1.9, 1.9)]);
        assert_eq!(regions[0].contains, vec![0]);
        assert_eq!(regions[0].boundary.len(), 1);
        assert!(regions[0].boundary[0].is_closed());
    }

    #[test]
    fn no_components_on_constant_field() {
        let f = sample_grid(|_| 2.0, unit_square(2.0), 16, 16);
        assert!(connected_components(&f, Threshold::Below(1.0)).is_empty());
    }

    #[test]
    fn boundary_separates_inside_from_outside_nodes() {
        // Two discs, one touching the bbox edge.
        let field_fn = |s: Complex64| (s - c(0.8, 0.0)).norm().min((s - c(-1.5, 1.5)).norm() * 1.5);
        let f = sample_grid(field_fn, unit_square(2.0), 60, 50);
        let regions = connected_components(&f, Threshold::Below(0.6));
        assert_eq!(regions.len(), 2);
        for r in &regions {
            assert!(!r.boundary.is_empty());
            assert!(r.boundary.iter().all(|b| b.is_closed()));
            for j in 0..f.ny {
                for i in 0..f.nx {
                    let n = j * f.nx + i;
                    let p = f.node(i, j);
                    // Nodes on the bbox edge are on the boundary itself.
                    if i == 0 || j == 0 || i + 1 == f.nx || j + 1 == f.ny {
                        continue;
                    }
                    let winding = r.boundary.iter().filter(|b| b.winds_around(p)).count() % 2 == 1;
                    assert_eq!(winding, r.touches(n), "node ({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn diagonal_contact_stays_separate() {
        let f = GridField {
            bbox: unit_square(1.0),
            nx: 3,
            ny: 3,
            values: vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0],
        };
        let regions = connected_components(&f, Threshold::Below(0.5));
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].cells, vec![0]);
        assert_eq!(regions[1].cells, vec![4]);
    }

    #[test]
    fn phase_scans_match_closed_forms() {
        let bbox = unit_square(2.0);
        let tol = 2.0 * 4.0 / 255.0 * SQRT_2;

        let w = RationalMap::new(Polynomial::from_real(&[0.0, 1.0]), Polynomial::from_real(&[1.0])).unwrap();
        let lines = phase_level_scan(&w, 0.0, bbox, 256, 256);
        assert!(!lines.is_empty());
        for p in lines.iter().flat_map(|l| &l.points) {
            assert!(p.im.abs() < 1e-12 && p.re >= -tol, "{p}");
        }

        let w = RationalMap::new(Polynomial::from_real(&[1.0]), Polynomial::from_real(&[0.0, 1.0])).unwrap();
        let lines = phase_level_scan(&w, PI, bbox, 256, 256);
        assert!(!lines.is_empty());
        for p in lines.iter().flat_map(|l| &l.points) {
            assert!(p.im.abs() < tol && p.re <= tol, "{p}");
        }

        let w = RationalMap::new(Polynomial::from_real(&[-1.0, 1.0]), Polynomial::from_real(&[1.0, 1.0])).unwrap();
        let lines = phase_level_scan(&w, FRAC_PI_2, bbox, 256, 256);
        assert!(!lines.is_empty());
        for p in lines.iter().flat_map(|l| &l.points) {
            assert!((p.norm() - 1.0).abs() < tol && p.im > -tol, "{p}");
        }
    }

    #[test]
    fn hausdorff_of_parallel_segments() {
        let a = vec![Polyline {
            points: vec![c(0.0, 0.0), c(1.0, 0.0)],
        }];
        let b = vec![Polyline {
            points: vec![c(0.0, 0.5), c(2.0, 0.5)],
        }];
        assert!((hausdorff(&a, &b) - 0.5f64.hypot(1.0)).abs() < 1e-15);
        assert_eq!(hausdorff(&a, &a), 0.0);
    }

    #[test]
    fn clipping_cuts_at_the_edge() {
        let line = Polyline {
            points: vec![c(-3.0, 0.0), c(0.0, 0.0), c(3.0, 0.0)],
        };
        let clipped = clip_polylines(&[line], &unit_square(1.0));
        assert_eq!(clipped.len(), 1);
        assert_eq!(clipped[0].points, vec![c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let f = sample_grid(|s| s.re, BBox::new(0.0, 1.0, 0.0, 2.0), 3, 2);
        assert_eq!(
            f.to_csv(),
            "sigma_min,sigma_max,t_min,t_max,nx,ny\n0,1,0,2,3,2\n0,0.5,1\n0,0.5,1\n"
        );
    }
}
