//! Client-side lane detection on received frames only: ROI threshold,
//! bird's-eye-view warp, sliding-window initialisation, polynomial
//! tracking, and a hit-window confidence score.
//!
//! Nothing in here sees the vehicle state or the route.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraModel, Frame, STAMP_SIZE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VisionError {
    #[error("lane estimate is not valid")]
    InvalidEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionConfig {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub cell: f64,
    pub windows: usize,
    pub margin: f64,
    pub min_pixels: usize,
    pub intensity_threshold: u8,
    /// Fraction of the image (from the top) cropped away.
    pub roi_top_fraction: f64,
    pub min_boundary_cells: usize,
    pub lane_width_range: (f64, f64),
    pub min_confidence: f64,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            x_range: (2.0, 30.0),
            y_range: (-8.0, 8.0),
            cell: 0.1,
            windows: 9,
            margin: 0.8,
            min_pixels: 30,
            intensity_threshold: 200,
            roi_top_fraction: 0.4,
            min_boundary_cells: 6,
            lane_width_range: (2.5, 4.5),
            min_confidence: 0.25,
        }
    }
}

impl VisionConfig {
    pub fn grid_dims(&self) -> (usize, usize) {
        (
            ((self.x_range.1 - self.x_range.0) / self.cell).round() as usize,
            ((self.y_range.1 - self.y_range.0) / self.cell).round() as usize,
        )
    }
}

/// Binary image mask (0 or 1 per pixel).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> u8 {
        self.data[row as usize * self.width as usize + col as usize]
    }
}

/// Metric top-down occupancy grid in the vehicle frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    /// `occupancy[i * ny + j]` is cell (x index i, y index j), 0 or 1.
    pub occupancy: Vec<u8>,
}

impl BevGrid {
    pub fn empty(cfg: &VisionConfig) -> Self {
        let (nx, ny) = cfg.grid_dims();
        BevGrid {
            x_range: cfg.x_range,
            y_range: cfg.y_range,
            cell: cfg.cell,
            nx,
            ny,
            occupancy: vec![0; nx * ny],
        }
    }

    #[inline]
    pub fn x_of(&self, i: usize) -> f64 {
        self.x_range.0 + (i as f64 + 0.5) * self.cell
    }

    #[inline]
    pub fn y_of(&self, j: usize) -> f64 {
        self.y_range.0 + (j as f64 + 0.5) * self.cell
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.occupancy[i * self.ny + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.occupancy[i * self.ny + j] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v != 0).count()
    }

    /// PGM dump: far range on top, left of the vehicle on the left.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.ny, self.nx)?;
        for i in (0..self.nx).rev() {
            let row: Vec<u8> = (0..self.ny)
                .rev()
                .map(|j| if self.get(i, j) != 0 { 255 } else { 0 })
                .collect();
            out.write_all(&row)?;
        }
        Ok(())
    }
}

/// y(x) = a x^2 + b x + c, vehicle-frame metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Poly {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Poly {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Poly { a, b, c }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }

    fn mean(&self, other: &Poly) -> Poly {
        Poly {
            a: (self.a + other.a) / 2.0,
            b: (self.b + other.b) / 2.0,
            c: (self.c + other.c) / 2.0,
        }
    }

    /// Average value over [x0, x1].
    fn mean_over(&self, x0: f64, x1: f64) -> f64 {
        self.a * (x0 * x0 + x0 * x1 + x1 * x1) / 3.0 + self.b * (x0 + x1) / 2.0 + self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LaneEstimate {
    pub left_poly: Poly,
    pub right_poly: Poly,
    pub centerline_poly: Poly,
    pub confidence: f64,
    pub valid: bool,
}

impl LaneEstimate {
    pub fn invalid() -> Self {
        LaneEstimate::default()
    }
}

/// Keep intensities at or above the threshold inside the ROI (bottom part of
/// the image, stamp block excluded).
pub fn threshold(frame: &Frame, cfg: &VisionConfig) -> Mask {
    let mut mask = Mask::empty(frame.width, frame.height);
    let first_row = roi_first_row(frame.height, cfg);
    let w = frame.width as usize;
    for row in first_row..frame.height as usize {
        let src = &frame.pixels[row * w..(row + 1) * w];
        let dst = &mut mask.data[row * w..(row + 1) * w];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s >= cfg.intensity_threshold) as u8;
        }
        if row < STAMP_SIZE {
            dst[..STAMP_SIZE.min(w)].fill(0);
        }
    }
    mask
}

fn roi_first_row(height: u32, cfg: &VisionConfig) -> usize {
    (height as f64 * cfg.roi_top_fraction).round() as usize
}

/// Precomputed BEV cell to pixel lookup for a fixed rig.
#[derive(Debug, Clone)]
pub struct BevWarper {
    cfg: VisionConfig,
    width: u32,
    height: u32,
    /// Flat pixel index sampled by each cell, if it projects into the image.
    lookup: Vec<Option<u32>>,
}

impl BevWarper {
    pub fn new(cam: &CameraModel, cfg: &VisionConfig) -> Self {
        let grid = BevGrid::empty(cfg);
        let mut lookup = Vec::with_capacity(grid.nx * grid.ny);
        for i in 0..grid.nx {
            let x = grid.x_of(i);
            for j in 0..grid.ny {
                let px = cam.ground_to_pixel(x, grid.y_of(j)).and_then(|p| {
                    let (col, row) = (p[0].floor(), p[1].floor());
                    let inside = col >= 0.0
                        && row >= 0.0
                        && col < cam.width as f64
                        && row < cam.height as f64;
                    inside.then(|| row as u32 * cam.width + col as u32)
                });
                lookup.push(px);
            }
        }
        BevWarper {
            cfg: *cfg,
            width: cam.width,
            height: cam.height,
            lookup,
        }
    }

    pub fn warp(&self, mask: &Mask) -> BevGrid {
        assert_eq!(
            (mask.width, mask.height),
            (self.width, self.height),
            "mask does not match the rig"
        );
        let mut grid = BevGrid::empty(&self.cfg);
        for (cell, px) in grid.occupancy.iter_mut().zip(&self.lookup) {
            if let Some(p) = px {
                *cell = mask.data[*p as usize];
            }
        }
        grid
    }
}

/// Inverse-project every BEV cell centre into the image and sample the mask
/// (nearest neighbour).
pub fn bev_warp(mask: &Mask, cam: &CameraModel, cfg: &VisionConfig) -> BevGrid {
    BevWarper::new(cam, cfg).warp(mask)
}

/// Cells collected for one boundary plus the number of windows that hit.
struct Collected {
    xs: Vec<f64>,
    ys: Vec<f64>,
    hits: usize,
}

fn window_bounds(nx: usize, windows: usize, w: usize) -> (usize, usize) {
    (w * nx / windows, (w + 1) * nx / windows)
}

/// Windows march away from the car. Each window's search band is a line
/// through the previous window's centroid, sloped along the direction of the
/// last two centroids, so curved boundaries stay inside the band.
fn sliding_window(bev: &BevGrid, base_y: f64, cfg: &VisionConfig) -> Collected {
    let mut out = Collected {
        xs: Vec::new(),
        ys: Vec::new(),
        hits: 0,
    };
    // Each window is centred on a curve through the cells of the windows that
    // hit so far: flat at the base first, then a line, then a quadratic. The
    // mean-y re-centring alone loses the inner boundary of tight arcs, whose
    // lateral drift across one window exceeds the margin.
    let mut guide = Poly::new(0.0, 0.0, base_y);
    let (mut hx, mut hy) = (Vec::new(), Vec::new());
    let mut hit_windows = 0;
    for w in 0..cfg.windows {
        let (i0, i1) = window_bounds(bev.nx, cfg.windows, w);
        let first = out.xs.len();
        for i in i0..i1 {
            let x = bev.x_of(i);
            let center = guide.eval(x);
            for j in 0..bev.ny {
                if bev.get(i, j) == 0 {
                    continue;
                }
                let y = bev.y_of(j);
                if (y - center).abs() <= cfg.margin {
                    out.xs.push(x);
                    out.ys.push(y);
                }
            }
        }
        if out.xs.len() - first >= cfg.min_pixels {
            out.hits += 1;
            hit_windows += 1;
            hx.extend_from_slice(&out.xs[first..]);
            hy.extend_from_slice(&out.ys[first..]);
            let next = if hit_windows == 1 {
                fit_line(&hx, &hy)
            } else {
                fit_quadratic(&hx, &hy)
            };
            if let Some(g) = next {
                guide = g;
            }
        }
    }
    out
}

fn fit_line(xs: &[f64], ys: &[f64]) -> Option<Poly> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (sxx, sxy) = xs
        .iter()
        .zip(ys)
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (x - mx), b + (x - mx) * (y - my)));
    if n == 0.0 || sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(Poly::new(0.0, slope, my - slope * mx))
}

fn track(bev: &BevGrid, prev: &Poly, cfg: &VisionConfig) -> Collected {
    let mut out = Collected {
        xs: Vec::new(),
        ys: Vec::new(),
        hits: 0,
    };
    for w in 0..cfg.windows {
        let (i0, i1) = window_bounds(bev.nx, cfg.windows, w);
        let mut n = 0usize;
        for i in i0..i1 {
            let x = bev.x_of(i);
            let yc = prev.eval(x);
            for j in 0..bev.ny {
                if bev.get(i, j) == 0 {
                    continue;
                }
                let y = bev.y_of(j);
                if (y - yc).abs() <= cfg.margin {
                    out.xs.push(x);
                    out.ys.push(y);
                    n += 1;
                }
            }
        }
        if n >= cfg.min_pixels {
            out.hits += 1;
        }
    }
    out
}

/// Least-squares quadratic through the points; falls back to lower order
/// when the x spread cannot support a quadratic.
pub fn fit_quadratic(xs: &[f64], ys: &[f64]) -> Option<Poly> {
    let n = xs.len();
    if n == 0 {
        return None;
    }
    // Centre x for conditioning, then expand back.
    let mx = xs.iter().sum::<f64>() / n as f64;
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let u = x - mx;
        let u2 = u * u;
        s1 += u;
        s2 += u2;
        s3 += u2 * u;
        s4 += u2 * u2;
        t0 += y;
        t1 += u * y;
        t2 += u2 * y;
    }
    let s0 = n as f64;
    let m = [[s4, s3, s2], [s3, s2, s1], [s2, s1, s0]];
    let rhs = [t2, t1, t0];
    let (qa, qb, qc) = match solve3(m, rhs) {
        Some(sol) if s2 / s0 > 1e-6 => (sol[0], sol[1], sol[2]),
        _ => {
            // Linear or constant fallback.
            let mean_y = t0 / s0;
            if s2 > 1e-9 {
                (0.0, (t1 - s1 * mean_y) / s2, mean_y)
            } else {
                (0.0, 0.0, mean_y)
            }
        }
    };
    // y = qa (x - mx)^2 + qb (x - mx) + qc
    Some(Poly {
        a: qa,
        b: qb - 2.0 * qa * mx,
        c: qa * mx * mx - qb * mx + qc,
    })
}

fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty");
        if m[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            let pivot_row = m[col];
            for (v, p) in m[r].iter_mut().zip(pivot_row).skip(col) {
                *v -= f * p;
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let mut acc = rhs[r];
        for k in r + 1..3 {
            acc -= m[r][k] * x[k];
        }
        x[r] = acc / m[r][r];
    }
    Some(x)
}

fn assemble(left: Collected, right: Collected, cfg: &VisionConfig) -> LaneEstimate {
    let confidence = (left.hits + right.hits) as f64 / (2 * cfg.windows) as f64;
    let enough = left.xs.len() >= cfg.min_boundary_cells && right.xs.len() >= cfg.min_boundary_cells;
    let (Some(lp), Some(rp)) = (
        fit_quadratic(&left.xs, &left.ys).filter(|_| enough),
        fit_quadratic(&right.xs, &right.ys).filter(|_| enough),
    ) else {
        return LaneEstimate {
            confidence,
            ..LaneEstimate::invalid()
        };
    };
    // Width is averaged only where both boundaries were observed: on tight
    // arcs the quadratics are extrapolated far past the visible markings.
    let (lo, hi) = (
        extent(&left.xs).0.max(extent(&right.xs).0),
        extent(&left.xs).1.min(extent(&right.xs).1),
    );
    let diff = Poly::new(lp.a - rp.a, lp.b - rp.b, lp.c - rp.c);
    let width = if hi > lo { diff.mean_over(lo, hi) } else { f64::NAN };
    let valid = (cfg.lane_width_range.0..=cfg.lane_width_range.1).contains(&width)
        && confidence >= cfg.min_confidence;
    LaneEstimate {
        left_poly: lp,
        right_poly: rp,
        centerline_poly: lp.mean(&rp),
        confidence,
        valid,
    }
}

fn extent(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn histogram_bases(bev: &BevGrid) -> (f64, f64) {
    let near = bev.nx / 3;
    let mut hist = vec![0usize; bev.ny];
    for i in 0..near {
        for (j, h) in hist.iter_mut().enumerate() {
            *h += bev.get(i, j) as usize;
        }
    }
    // Peaks are searched outward from y = 0 so ties favour the nearer column.
    let mid = (0..bev.ny).find(|&j| bev.y_of(j) > 0.0).unwrap_or(bev.ny);
    let mut left = mid;
    for j in mid..bev.ny {
        if hist[j] > hist[left] {
            left = j;
        }
    }
    let mut right = mid.saturating_sub(1);
    for j in (0..mid).rev() {
        if hist[j] > hist[right] {
            right = j;
        }
    }
    (
        bev.y_of(left.min(bev.ny - 1)),
        bev.y_of(right.min(bev.ny - 1)),
    )
}

/// Sliding-window initialisation when there is no usable previous estimate,
/// polynomial tracking around the previous boundaries otherwise. A failed
/// track falls back to a fresh sliding-window search.
pub fn fit_lanes(bev: &BevGrid, prev: Option<&LaneEstimate>, cfg: &VisionConfig) -> LaneEstimate {
    if let Some(p) = prev.filter(|p| p.valid) {
        let est = assemble(
            track(bev, &p.left_poly, cfg),
            track(bev, &p.right_poly, cfg),
            cfg,
        );
        if est.valid {
            return est;
        }
    }
    let (left_base, right_base) = histogram_bases(bev);
    assemble(
        sliding_window(bev, left_base, cfg),
        sliding_window(bev, right_base, cfg),
        cfg,
    )
}

/// Centerline lateral offset at `x` metres ahead.
pub fn lateral_offset_at(est: &LaneEstimate, x: f64) -> Result<f64, VisionError> {
    if !est.valid {
        return Err(VisionError::InvalidEstimate);
    }
    Ok(est.centerline_poly.eval(x))
}

/// Threshold, warp, and fit with lookup tables built once per rig.
#[derive(Debug, Clone)]
pub struct LanePipeline {
    cfg: VisionConfig,
    warper: BevWarper,
}

impl LanePipeline {
    pub fn new(cam: &CameraModel, cfg: VisionConfig) -> Self {
        LanePipeline {
            cfg,
            warper: BevWarper::new(cam, &cfg),
        }
    }

    pub fn config(&self) -> &VisionConfig {
        &self.cfg
    }

    pub fn bev(&self, frame: &Frame) -> BevGrid {
        self.warper.warp(&threshold(frame, &self.cfg))
    }

    pub fn process(&self, frame: &Frame, prev: Option<&LaneEstimate>) -> LaneEstimate {
        fit_lanes(&self.bev(frame), prev, &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{render, MARKING_INTENSITY};
    use crate::vehicle::VehicleState;
    use crate::world::{build_route, RouteId};
    use approx::assert_abs_diff_eq;

    fn band_grid(cfg: &VisionConfig, curve: impl Fn(f64) -> [f64; 2]) -> BevGrid {
        let mut g = BevGrid::empty(cfg);
        for i in 0..g.nx {
            let x = g.x_of(i);
            let ys = curve(x);
            for j in 0..g.ny {
                let y = g.y_of(j);
                if ys.iter().any(|c| (y - c).abs() <= 0.1) {
                    g.set(i, j, true);
                }
            }
        }
        g
    }

    #[test]
    fn grid_dimensions_exact() {
        let cfg = VisionConfig::default();
        assert_eq!(cfg.grid_dims(), (280, 160));
        let g = BevGrid::empty(&cfg);
        assert_eq!(g.occupancy.len(), 280 * 160);
    }

    #[test]
    fn dark_frame_gives_empty_mask_and_grid() {
        let cfg = VisionConfig::default();
        let cam = CameraModel::default();
        let f = Frame::filled(cam.width, cam.height, 30);
        let m = threshold(&f, &cfg);
        assert_eq!(m.count(), 0);
        assert_eq!(bev_warp(&m, &cam, &cfg).count(), 0);
    }

    #[test]
    fn stamp_block_and_top_never_in_mask() {
        let cfg = VisionConfig::default();
        let f = Frame::filled(640, 480, 255);
        let m = threshold(&f, &cfg);
        for row in 0..192 {
            for col in 0..640 {
                assert_eq!(m.get(row, col), 0);
            }
        }
        assert_eq!(m.count(), 640 * (480 - 192));
        // A tiny frame where the ROI reaches the stamp rows.
        let cfg = VisionConfig {
            roi_top_fraction: 0.0,
            ..cfg
        };
        let m = threshold(&Frame::filled(16, 16, 255), &cfg);
        for k in 0..64u32 {
            assert_eq!(m.get(k / 8, k % 8), 0);
        }
    }

    #[test]
    fn mask_support_is_marking_pixels() {
        let cfg = VisionConfig::default();
        let cam = CameraModel::default();
        let r = build_route(RouteId::A);
        let f = render(&r, &VehicleState::new(5.0, 0.0, 0.0, 8.0, 5.0), &cam);
        let m = threshold(&f, &cfg);
        assert!(m.count() > 0);
        for (i, (&mv, &pv)) in m.data.iter().zip(&f.pixels).enumerate() {
            if mv == 1 {
                assert_eq!(pv, MARKING_INTENSITY, "pixel {i}");
            } else if i / 640 >= 192 {
                assert_ne!(pv, MARKING_INTENSITY, "pixel {i}");
            }
        }
    }

    #[test]
    fn on_axis_point_samples_centre_column() {
        let cam = CameraModel::default();
        let p = cam.ground_to_pixel(10.0, 0.0).unwrap();
        // The axis falls on the boundary between the two centre columns.
        assert_abs_diff_eq!(p[0], 320.0, epsilon = 1e-9);
        let cfg = VisionConfig::default();
        let g0 = BevGrid::empty(&cfg);
        let i = ((10.0 - 2.0) / 0.1 - 0.5f64).round() as usize;
        let j = 80;
        assert!(g0.x_of(i) > 9.9 && g0.x_of(i) < 10.1);
        assert_abs_diff_eq!(g0.y_of(j), 0.05, epsilon = 1e-12);
        // A cell just left of the axis samples a pixel left of centre.
        let q = cam.ground_to_pixel(g0.x_of(i), g0.y_of(j)).unwrap();
        assert!(q[0] < 320.0 && q[0] > 316.0, "{q:?}");
        let mut m = Mask::empty(cam.width, cam.height);
        let (col, row) = (q[0].floor() as u32, q[1].floor() as u32);
        m.data[(row * cam.width + col) as usize] = 1;
        let g = bev_warp(&m, &cam, &cfg);
        assert_eq!(g.get(i, j), 1);
        assert!(g.count() >= 1 && g.count() <= 4, "{}", g.count());
    }

    #[test]
    fn straight_render_gives_bands_at_half_width() {
        let cfg = VisionConfig::default();
        let cam = CameraModel::default();
        let r = build_route(RouteId::A);
        let f = render(&r, &VehicleState::new(2.0, 0.0, 0.0, 8.0, 2.0), &cam);
        let g = bev_warp(&threshold(&f, &cfg), &cam, &cfg);
        let (mut ln, mut ls, mut rn, mut rs) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..g.nx {
            // Stay short of the turn that starts 38 m ahead.
            if g.x_of(i) > 25.0 {
                continue;
            }
            for j in 0..g.ny {
                if g.get(i, j) == 1 {
                    let y = g.y_of(j);
                    if y > 0.0 {
                        ln += 1.0;
                        ls += y;
                    } else {
                        rn += 1.0;
                        rs += y;
                    }
                }
            }
        }
        assert!(ln > 100.0 && rn > 100.0);
        assert_abs_diff_eq!(ls / ln, 1.75, epsilon = 0.15);
        assert_abs_diff_eq!(rs / rn, -1.75, epsilon = 0.15);
    }

    #[test]
    fn exact_vertical_bands_fit() {
        let cfg = VisionConfig::default();
        let g = band_grid(&cfg, |_| [1.75, -1.75]);
        let est = fit_lanes(&g, None, &cfg);
        assert!(est.valid);
        assert_eq!(est.confidence, 1.0);
        let c = est.centerline_poly;
        assert!(c.c.abs() < 0.05, "{c:?}");
        assert!(c.a.abs() < 1e-3 && c.b.abs() < 1e-3, "{c:?}");
    }

    #[test]
    fn empty_grid_is_invalid_with_zero_confidence() {
        let cfg = VisionConfig::default();
        let est = fit_lanes(&BevGrid::empty(&cfg), None, &cfg);
        assert!(!est.valid);
        assert_eq!(est.confidence, 0.0);
        assert!(lateral_offset_at(&est, 5.0).is_err());
    }

    #[test]
    fn circular_bands_recover_curvature() {
        let cfg = VisionConfig::default();
        let r = 60.0;
        let g = band_grid(&cfg, |x| {
            [
                r - ((r - 1.75f64).powi(2) - x * x).sqrt(),
                r - ((r + 1.75f64).powi(2) - x * x).sqrt(),
            ]
        });
        let est = fit_lanes(&g, None, &cfg);
        assert!(est.valid);
        let k = 2.0 * est.centerline_poly.a;
        assert!((k - 1.0 / r).abs() <= 0.2 / r, "curvature {k}");
    }

    #[test]
    fn tracking_is_a_fixed_point() {
        let cfg = VisionConfig::default();
        let g = band_grid(&cfg, |x| [1.9 + 0.01 * x, -1.6 + 0.01 * x]);
        let first = fit_lanes(&g, None, &cfg);
        let second = fit_lanes(&g, Some(&first), &cfg);
        let third = fit_lanes(&g, Some(&second), &cfg);
        for (p, q) in [
            (second.left_poly, third.left_poly),
            (second.right_poly, third.right_poly),
            (first.centerline_poly, second.centerline_poly),
        ] {
            assert!((p.a - q.a).abs() < 1e-9);
            assert!((p.b - q.b).abs() < 1e-9);
            assert!((p.c - q.c).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_cells_is_invalid() {
        let cfg = VisionConfig::default();
        let mut g = BevGrid::empty(&cfg);
        for i in 0..5 {
            g.set(i, 100, true);
            g.set(i, 60, true);
        }
        let est = fit_lanes(&g, None, &cfg);
        assert!(!est.valid);
    }

    #[test]
    fn lane_width_gate() {
        let cfg = VisionConfig::default();
        let narrow = band_grid(&cfg, |_| [1.0, -1.0]);
        assert!(!fit_lanes(&narrow, None, &cfg).valid);
        let wide = band_grid(&cfg, |_| [2.4, -2.4]);
        assert!(!fit_lanes(&wide, None, &cfg).valid);
    }

    #[test]
    fn lateral_offset_direct_evaluation() {
        let mut est = LaneEstimate {
            valid: true,
            confidence: 1.0,
            ..LaneEstimate::default()
        };
        est.centerline_poly = Poly::new(0.0, 0.0, 1.0);
        assert_eq!(lateral_offset_at(&est, 7.3).unwrap(), 1.0);
        est.centerline_poly = Poly::new(0.01, 0.0, 0.0);
        assert_abs_diff_eq!(lateral_offset_at(&est, 10.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_fit_recovers_exact_polynomial() {
        let xs: Vec<f64> = (0..50).map(|i| 2.0 + i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.02 * x * x - 0.3 * x + 1.1).collect();
        let p = fit_quadratic(&xs, &ys).unwrap();
        assert_abs_diff_eq!(p.a, 0.02, epsilon = 1e-9);
        assert_abs_diff_eq!(p.b, -0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(p.c, 1.1, epsilon = 1e-9);
        // Single x column: falls back to the mean.
        let p = fit_quadratic(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p, Poly::new(0.0, 0.0, 2.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn confidence_in_unit_interval(seed in any::<u64>(), density in 0.0f64..0.3) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let cfg = VisionConfig::default();
                let mut g = BevGrid::empty(&cfg);
                for v in g.occupancy.iter_mut() {
                    *v = rng.random_bool(density) as u8;
                }
                let est = fit_lanes(&g, None, &cfg);
                prop_assert!((0.0..=1.0).contains(&est.confidence));
                if est.valid {
                    prop_assert!(est.confidence >= 0.5);
                }
            }
        }
    }
}
