//! Orthographic software rasterizer for observations.
//!
//! Each pane looks down the -z axis at one rope. Beads are filled disks of a
//! fixed pixel radius, painted back to front by height (painter's algorithm),
//! colored from white (bead 0) through yellow to red (last bead).

use std::io;
use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::geometry::{center_of_mass, KnotConfiguration, Vec3, WorldState};

pub const PANE_SIZE: usize = 128;
pub const OBS_HEIGHT: usize = PANE_SIZE;
pub const OBS_WIDTH: usize = 2 * PANE_SIZE;
pub const CHANNELS: usize = 3;
/// Orthographic half-width of a pane, in meters.
pub const HALF_EXTENT: f64 = 0.6;
/// Bead disk radius in pixels.
pub const BEAD_RADIUS_PX: i64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub center: Vec3,
    pub half_extent: f64,
}

/// Camera tracking the rope's center of mass at a fixed scale.
pub fn camera_for(config: &KnotConfiguration) -> Camera {
    Camera {
        center: center_of_mass(config),
        half_extent: HALF_EXTENT,
    }
}

/// Channel-major RGB pixels for one pane, shape `[3, 128, 128]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pane {
    pub pixels: Vec<u8>,
}

impl Pane {
    pub fn get(&self, channel: usize, row: usize, col: usize) -> u8 {
        self.pixels[(channel * PANE_SIZE + row) * PANE_SIZE + col]
    }

    pub fn rgb(&self, row: usize, col: usize) -> [u8; 3] {
        [self.get(0, row, col), self.get(1, row, col), self.get(2, row, col)]
    }
}

/// Channel-major RGB observation of shape `[3, 128, 256]`: manipulated rope on
/// the left, goal exemplar on the right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub pixels: Vec<u8>,
}

impl Observation {
    pub const SHAPE: [usize; 3] = [CHANNELS, OBS_HEIGHT, OBS_WIDTH];

    pub fn shape(&self) -> [usize; 3] {
        Self::SHAPE
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> u8 {
        self.pixels[(channel * OBS_HEIGHT + row) * OBS_WIDTH + col]
    }

    pub fn to_image(&self) -> RgbImage {
        ImageBuffer::from_fn(OBS_WIDTH as u32, OBS_HEIGHT as u32, |x, y| {
            let (r, c) = (y as usize, x as usize);
            Rgb([self.get(0, r, c), self.get(1, r, c), self.get(2, r, c)])
        })
    }

    /// Encodes as an 8-bit RGB PNG.
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = io::Cursor::new(Vec::new());
        self.to_image()
            .write_to(&mut out, image::ImageFormat::Png)
            .expect("PNG encoding into memory cannot fail");
        out.into_inner()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> io::Result<()> {
        std::fs::write(path, self.to_png())
    }
}

/// Color of bead `index` in a rope of `beads` beads.
pub fn bead_color(index: usize, beads: usize) -> [u8; 3] {
    let span = beads.saturating_sub(1).max(1);
    let t = (index.min(span) * 510 / span) as u32;
    if t <= 255 {
        [255, 255, (255 - t) as u8]
    } else {
        [255, (510 - t) as u8, 0]
    }
}

/// Pixel cell containing a world coordinate offset (m) from the camera center.
fn to_pixel(offset: f64, half_extent: f64) -> i64 {
    let u = offset / (2.0 * half_extent) * PANE_SIZE as f64 + (PANE_SIZE / 2) as f64;
    // Saturating float-to-int cast keeps far-off beads off screen.
    u.floor() as i64
}

pub fn render_pane(config: &KnotConfiguration, camera: &Camera) -> Pane {
    let mut pixels = vec![0u8; CHANNELS * PANE_SIZE * PANE_SIZE];
    let n = config.len();
    let mut order: Vec<usize> = (0..n).collect();
    let pts = config.points();
    order.sort_by(|&a, &b| pts[a].z.total_cmp(&pts[b].z).then(a.cmp(&b)));

    let size = PANE_SIZE as i64;
    let r = BEAD_RADIUS_PX;
    for i in order {
        let p = pts[i] - camera.center;
        let col = to_pixel(p.x, camera.half_extent);
        let row = to_pixel(-p.y, camera.half_extent);
        let color = bead_color(i, n);
        for dy in -r..=r {
            let y = row.saturating_add(dy);
            if !(0..size).contains(&y) {
                continue;
            }
            for dx in -r..=r {
                let x = col.saturating_add(dx);
                if dx * dx + dy * dy > r * r || !(0..size).contains(&x) {
                    continue;
                }
                let at = y as usize * PANE_SIZE + x as usize;
                for (ch, &v) in color.iter().enumerate() {
                    pixels[ch * PANE_SIZE * PANE_SIZE + at] = v;
                }
            }
        }
    }
    Pane { pixels }
}

/// Concatenates two panes horizontally into one observation.
pub fn concat_panes(left: &Pane, right: &Pane) -> Observation {
    let mut pixels = vec![0u8; CHANNELS * OBS_HEIGHT * OBS_WIDTH];
    for ch in 0..CHANNELS {
        for row in 0..PANE_SIZE {
            let src = (ch * PANE_SIZE + row) * PANE_SIZE;
            let dst = (ch * OBS_HEIGHT + row) * OBS_WIDTH;
            pixels[dst..dst + PANE_SIZE].copy_from_slice(&left.pixels[src..src + PANE_SIZE]);
            pixels[dst + PANE_SIZE..dst + OBS_WIDTH]
                .copy_from_slice(&right.pixels[src..src + PANE_SIZE]);
        }
    }
    Observation { pixels }
}

pub fn render_observation(state: &WorldState) -> Observation {
    let left = render_pane(&state.manipulated, &camera_for(&state.manipulated));
    let right = render_pane(&state.goal, &camera_for(&state.goal));
    concat_panes(&left, &right)
}
