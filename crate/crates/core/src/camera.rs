//! Server-side forward camera: inverse ray casting of the lane world into an
//! 8-bit grayscale frame, plus the 64-bit send-time stamp carried in the
//! top-left 8x8 pixel block.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vehicle::VehicleState;
use crate::world::RouteGeometry;

pub const STAMP_SIZE: usize = 8;

pub const MARKING_INTENSITY: u8 = 255;
pub const ROAD_INTENSITY: u8 = 60;
pub const GRASS_INTENSITY: u8 = 40;
pub const SKY_INTENSITY: u8 = 20;

/// Half width of a painted lane marking.
pub const MARKING_HALF_WIDTH_M: f64 = 0.10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CameraError {
    #[error("frame {width}x{height} is too small for the 8x8 stamp")]
    FrameTooSmall { width: u32, height: u32 },
    #[error("pixel buffer holds {got} bytes, expected {expected}")]
    PixelCount { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub horizontal_fov: f64,
    pub mount_height: f64,
    pub pitch_down: f64,
    /// Camera position ahead of the vehicle reference point (rear axle).
    pub forward_offset: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            width: 640,
            height: 480,
            horizontal_fov: 90f64.to_radians(),
            mount_height: 1.5,
            pitch_down: 10f64.to_radians(),
            forward_offset: 1.0,
        }
    }
}

impl CameraModel {
    pub fn is_valid(&self) -> bool {
        self.width > 0
            && self.height > 0
            && self.horizontal_fov > 0.0
            && self.horizontal_fov < std::f64::consts::PI
            && self.mount_height > 0.0
    }

    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.horizontal_fov / 2.0).tan()
    }

    pub fn vertical_fov(&self) -> f64 {
        2.0 * ((self.height as f64 / 2.0) / self.focal_px()).atan()
    }

    /// First image row whose pixel centre looks below the horizon.
    pub fn horizon_row(&self) -> u32 {
        let h2 = self.height as f64 / 2.0;
        let v = h2 - h2 * self.pitch_down.tan() / (self.vertical_fov() / 2.0).tan();
        v.round().max(0.0) as u32
    }

    /// Ground intersection (vehicle frame, x forward / y left) of the ray
    /// through the centre of pixel (row, col), or `None` for sky.
    pub fn pixel_to_ground(&self, row: u32, col: u32) -> Option<[f64; 2]> {
        let f = self.focal_px();
        let xn = (col as f64 + 0.5 - self.width as f64 / 2.0) / f;
        let yn = (self.height as f64 / 2.0 - (row as f64 + 0.5)) / f;
        let (sp, cp) = self.pitch_down.sin_cos();
        let dz = -sp + yn * cp;
        if dz >= 0.0 {
            return None;
        }
        let t = self.mount_height / -dz;
        Some([self.forward_offset + t * (cp + yn * sp), -t * xn])
    }

    /// Continuous pixel coordinates (col, row) of a ground point in the
    /// vehicle frame, or `None` when it lies behind the camera.
    pub fn ground_to_pixel(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let (sp, cp) = self.pitch_down.sin_cos();
        let px = x - self.forward_offset;
        let pz = -self.mount_height;
        // Camera axes: forward (cp, 0, -sp), up (sp, 0, cp), right (0, -1, 0).
        let depth = px * cp - pz * sp;
        if depth <= 1e-9 {
            return None;
        }
        let up = px * sp + pz * cp;
        let right = -y;
        let f = self.focal_px();
        Some([
            self.width as f64 / 2.0 + f * right / depth,
            self.height as f64 / 2.0 - f * up / depth,
        ])
    }
}

/// Rasterized camera image with embedded capture timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    /// Row-major intensities.
    pub pixels: Vec<u8>,
    pub capture_ts_server_ns: u64,
    pub seq: u32,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, CameraError> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(CameraError::PixelCount {
                got: pixels.len(),
                expected,
            });
        }
        Ok(Frame {
            width,
            height,
            pixels,
            capture_ts_server_ns: 0,
            seq: 0,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Frame {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
            capture_ts_server_ns: 0,
            seq: 0,
        }
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> u8 {
        self.pixels[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, v: u8) {
        let w = self.width as usize;
        self.pixels[row as usize * w + col as usize] = v;
    }

    /// Binary PGM (P5).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }

    fn check_stamp_fits(&self) -> Result<(), CameraError> {
        if (self.width as usize) < STAMP_SIZE || (self.height as usize) < STAMP_SIZE {
            return Err(CameraError::FrameTooSmall {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

/// Write `ts_ns` into the top-left 8x8 block: bit k (k = 0 is the MSB) goes
/// to pixel (k / 8, k % 8), 255 when set and 0 otherwise.
pub fn embed_timestamp(mut frame: Frame, ts_ns: u64) -> Result<Frame, CameraError> {
    frame.check_stamp_fits()?;
    for k in 0..64u32 {
        let bit = (ts_ns >> (63 - k)) & 1;
        frame.set(k / 8, k % 8, if bit == 1 { 255 } else { 0 });
    }
    frame.capture_ts_server_ns = ts_ns;
    Ok(frame)
}

/// Decode the stamp; a pixel at or above 128 reads as a set bit.
pub fn extract_timestamp(frame: &Frame) -> Result<u64, CameraError> {
    frame.check_stamp_fits()?;
    let mut ts = 0u64;
    for k in 0..64u32 {
        ts <<= 1;
        if frame.get(k / 8, k % 8) >= 128 {
            ts |= 1;
        }
    }
    Ok(ts)
}

/// Ray caster with per-pixel ground intersections precomputed for one rig.
#[derive(Debug, Clone)]
pub struct Renderer {
    cam: CameraModel,
    first_ground_row: u32,
    /// Ground points for rows `first_ground_row..height`, row-major.
    ground: Vec<[f64; 2]>,
}

impl Renderer {
    pub fn new(cam: CameraModel) -> Self {
        assert!(cam.is_valid(), "invalid camera model");
        let first_ground_row = (0..cam.height)
            .find(|&r| cam.pixel_to_ground(r, 0).is_some())
            .unwrap_or(cam.height);
        let mut ground =
            Vec::with_capacity((cam.height - first_ground_row) as usize * cam.width as usize);
        for r in first_ground_row..cam.height {
            for c in 0..cam.width {
                ground.push(cam.pixel_to_ground(r, c).expect("below horizon"));
            }
        }
        Renderer {
            cam,
            first_ground_row,
            ground,
        }
    }

    pub fn camera(&self) -> &CameraModel {
        &self.cam
    }

    pub fn render(&self, route: &RouteGeometry, pose: &VehicleState) -> Frame {
        let w = self.cam.width as usize;
        let sky = self.first_ground_row as usize * w;
        let mut pixels = vec![SKY_INTENSITY; w * self.cam.height as usize];
        let hw = route.lane_half_width();
        let limit = hw + MARKING_HALF_WIDTH_M;
        let (sin_h, cos_h) = pose.heading.sin_cos();
        let to_world = |g: &[f64; 2]| {
            [
                pose.x + cos_h * g[0] - sin_h * g[1],
                pose.y + sin_h * g[0] + cos_h * g[1],
            ]
        };
        // A pixel row is a straight line on the ground, so segments that
        // cannot reach the row are dropped once per row.
        let mut candidates = Vec::new();
        for (row_px, row_g) in pixels[sky..].chunks_mut(w).zip(self.ground.chunks(w)) {
            route.render_candidates(to_world(&row_g[0]), to_world(&row_g[w - 1]), limit, &mut candidates);
            if candidates.is_empty() {
                row_px.fill(GRASS_INTENSITY);
                continue;
            }
            for (px, g) in row_px.iter_mut().zip(row_g) {
                *px = match route.centerline_distance_among(&candidates, to_world(g), limit) {
                    Some(d) if (d - hw).abs() <= MARKING_HALF_WIDTH_M => MARKING_INTENSITY,
                    Some(d) if d < hw => ROAD_INTENSITY,
                    _ => GRASS_INTENSITY,
                };
            }
        }
        Frame {
            width: self.cam.width,
            height: self.cam.height,
            pixels,
            capture_ts_server_ns: 0,
            seq: 0,
        }
    }
}

/// Render the view from `pose`. Builds a fresh ray table; reuse a
/// [`Renderer`] when rendering many frames with one rig.
pub fn render(route: &RouteGeometry, pose: &VehicleState, cam: &CameraModel) -> Frame {
    Renderer::new(*cam).render(route, pose)
}
