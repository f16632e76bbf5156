//! Flat-shaded shoebox interiors seen from eye height.
//!
//! The room spans `x in [0, width]`, `y in [0, height]` (up) and
//! `z in [0, length]`. The camera stands near the `z = 0` wall looking down
//! the room. The floor carries a 1 m checkerboard and the walls 1 m vertical
//! panels so that absolute size is visible; wall brightness and tint follow
//! absorption.

use super::image::{rotate, Image};

/// Depth maps store `distance / MAX_DEPTH_M`, clamped to 1.
pub const MAX_DEPTH_M: f64 = 80.0;
pub const EYE_HEIGHT_M: f64 = 1.6;
pub const CAMERA_SETBACK_M: f64 = 0.5;
pub const HORIZONTAL_FOV: f64 = 70.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Room {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub absorption: f64,
}

impl Room {
    /// Shoebox for relative scale `s`: 4s x 6s floor, 2 + 1.5s tall.
    pub fn from_scale(s: f64, absorption: f64) -> Self {
        Self {
            width: 4.0 * s,
            length: 6.0 * s,
            height: 2.0 + 1.5 * s,
            absorption,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub yaw: f64,
    pub pitch: f64,
    /// Multiplicative RGB tint, each near 1.
    pub tint: [f64; 3],
}

#[derive(Clone, Copy)]
enum Surface {
    Floor,
    Ceiling,
    Wall,
}

struct Hit {
    distance: f64,
    surface: Surface,
    axis: usize,
    /// Cosine between the ray and the surface normal.
    facing: f64,
    point: [f64; 3],
}

fn cast(room: &Room, origin: [f64; 3], d: [f64; 3]) -> Hit {
    let bounds = [room.width, room.height, room.length];
    let mut best = (f64::INFINITY, 0usize);
    for axis in 0..3 {
        if d[axis].abs() < 1e-12 {
            continue;
        }
        let target = if d[axis] > 0.0 { bounds[axis] } else { 0.0 };
        let t = (target - origin[axis]) / d[axis];
        if t < best.0 {
            best = (t, axis);
        }
    }
    let (t, axis) = best;
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let point = [origin[0] + t * d[0], origin[1] + t * d[1], origin[2] + t * d[2]];
    let surface = match axis {
        1 if d[1] < 0.0 => Surface::Floor,
        1 => Surface::Ceiling,
        _ => Surface::Wall,
    };
    Hit {
        distance: t * norm,
        surface,
        axis,
        facing: d[axis].abs() / norm,
        point,
    }
}

fn checker(u: f64, v: f64) -> bool {
    (u.floor() as i64 + v.floor() as i64).rem_euclid(2) == 0
}

fn shade(room: &Room, view: &View, hit: &Hit) -> [f64; 3] {
    let reflect = 1.0 - room.absorption;
    // Reflective rooms read as pale and cool, absorptive ones darker and warmer.
    let warm = room.absorption;
    let base = [0.55 + 0.25 * warm, 0.55, 0.60 - 0.25 * warm];
    let [x, y, z] = hit.point;
    let (albedo, pattern) = match hit.surface {
        Surface::Floor => (0.35 + 0.45 * reflect, if checker(x, z) { 1.0 } else { 0.7 }),
        Surface::Ceiling => (0.5 + 0.4 * reflect, 1.0),
        Surface::Wall => {
            let along = if hit.axis == 0 { z } else { x };
            let seam = along.fract() < 0.04 || y.fract() < 0.02;
            (0.3 + 0.6 * reflect, if seam { 0.6 } else { 1.0 })
        }
    };
    let light = (0.35 + 0.65 * hit.facing) * (-hit.distance / 60.0).exp();
    let mut rgb = [0.0; 3];
    for c in 0..3 {
        rgb[c] = (base[c] * albedo * pattern * light * view.tint[c] * 1.6).clamp(0.0, 1.0);
    }
    rgb
}

fn pixel_direction(i: f64, j: f64, size: usize, view: &View) -> [f64; 3] {
    let half = (HORIZONTAL_FOV / 2.0).tan();
    let x = (2.0 * i / size as f64 - 1.0) * half;
    let y = -(2.0 * j / size as f64 - 1.0) * half;
    rotate([x, y, 1.0], view.yaw, view.pitch)
}

/// Square RGB view (2x2 supersampled) and the exact ray depth at pixel
/// centers, normalized by [`MAX_DEPTH_M`].
pub fn render_room(room: &Room, view: &View, size: usize) -> (Image, Image) {
    let origin = [room.width / 2.0, EYE_HEIGHT_M.min(room.height - 0.1), CAMERA_SETBACK_M];
    let mut rgb = Image::filled(size, size, 3, 0.0);
    let mut depth = Image::filled(size, size, 1, 0.0);
    const SUB: [f64; 2] = [0.25, 0.75];
    for j in 0..size {
        for i in 0..size {
            let mut acc = [0.0; 3];
            for sy in SUB {
                for sx in SUB {
                    let d = pixel_direction(i as f64 + sx, j as f64 + sy, size, view);
                    let c = shade(room, view, &cast(room, origin, d));
                    for k in 0..3 {
                        acc[k] += c[k] / 4.0;
                    }
                }
            }
            for (k, v) in acc.iter().enumerate() {
                rgb.set(k, j, i, *v as f32);
            }
            let center = cast(room, origin, pixel_direction(i as f64 + 0.5, j as f64 + 0.5, size, view));
            depth.set(0, j, i, (center.distance / MAX_DEPTH_M).min(1.0) as f32);
        }
    }
    (rgb, depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLAT: View = View {
        yaw: 0.0,
        pitch: 0.0,
        tint: [1.0; 3],
    };

    #[test]
    fn center_depth_is_far_wall() {
        let room = Room::from_scale(2.0, 0.3);
        let (_, depth) = render_room(&room, &FLAT, 33);
        let expect = (room.length - CAMERA_SETBACK_M) / MAX_DEPTH_M;
        assert!((depth.at(0, 16, 16) as f64 - expect).abs() < 1e-6);
    }

    #[test]
    fn bottom_row_hits_floor_at_analytic_distance() {
        let room = Room::from_scale(3.0, 0.2);
        let size = 41;
        let (_, depth) = render_room(&room, &FLAT, size);
        let d = pixel_direction(20.5, 40.5, size, &FLAT);
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let expect = EYE_HEIGHT_M / (-d[1] / n);
        assert!((depth.at(0, 40, 20) as f64 - expect / MAX_DEPTH_M).abs() < 1e-6);
    }

    #[test]
    fn larger_rooms_are_deeper_and_absorptive_rooms_darker() {
        let mean = |img: &Image| img.data.iter().map(|&v| v as f64).sum::<f64>() / img.data.len() as f64;
        let (_, small) = render_room(&Room::from_scale(1.5, 0.2), &FLAT, 24);
        let (_, big) = render_room(&Room::from_scale(6.0, 0.2), &FLAT, 24);
        assert!(mean(&big) > 2.0 * mean(&small));
        let (bright, _) = render_room(&Room::from_scale(3.0, 0.1), &FLAT, 24);
        let (dark, _) = render_room(&Room::from_scale(3.0, 0.4), &FLAT, 24);
        assert!(mean(&bright) > mean(&dark));
    }

    #[test]
    fn outputs_in_unit_range() {
        let view = View {
            yaw: 0.1,
            pitch: -0.05,
            tint: [1.05, 0.95, 1.0],
        };
        let (rgb, depth) = render_room(&Room::from_scale(10.0, 0.1), &view, 16);
        assert!(rgb.data.iter().chain(&depth.data).all(|v| (0.0..=1.0).contains(v)));
        assert!(depth.data.iter().all(|&v| v < 1.0));
    }
}
