//! Occupancy rendering: one image per agent, colour-coding *when* each
//! cell is predicted to be used.
//!
//! Every cell shows only its latest relevant timestep: the largest `t`
//! whose occupancy exceeds 0.01. The hue encodes that timestep on an
//! evenly spaced blue (t = 0) to red (t = horizon) ramp, and the occupancy
//! value itself becomes the alpha against a white background. Obstacles
//! are black, never-used free cells white. Exact trajectories are one-hot,
//! so their cells render fully saturated.
//!
//! Output is either binary PPM (P6, deterministic byte-for-byte) or an
//! ASCII grid with base-36 timestep digits.

use crate::grid::Grid2;

/// Occupancy threshold below which a timestep is not displayed.
pub const DISPLAY_THRESHOLD: f64 = 0.01;

/// Evenly spaced hue ramp from blue (entry 0) to red (entry `horizon`),
/// with `horizon + 1` entries of RGB in `[0, 1]`.
pub fn colormap(horizon: usize) -> Vec<[f64; 3]> {
    let denom = horizon.max(1) as f64;
    (0..=horizon)
        .map(|t| hue_to_rgb(240.0 * (1.0 - t as f64 / denom)))
        .collect()
}

/// Fully saturated HSV to RGB for hue in degrees, S = V = 1.
fn hue_to_rgb(hue: f64) -> [f64; 3] {
    let h = (hue.rem_euclid(360.0)) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    match h as usize {
        0 => [1.0, x, 0.0],
        1 => [x, 1.0, 0.0],
        2 => [0.0, 1.0, x],
        3 => [0.0, x, 1.0],
        4 => [x, 0.0, 1.0],
        _ => [1.0, 0.0, x],
    }
}

/// Latest displayable timestep for a cell, with its occupancy.
fn latest_use(frames: &[Grid2], x: usize, y: usize) -> Option<(usize, f64)> {
    frames
        .iter()
        .enumerate()
        .rev()
        .map(|(t, f)| (t, f.get(x, y)))
        .find(|(_, occ)| *occ > DISPLAY_THRESHOLD)
}

fn shade(blocked: &[bool], frames: &[Grid2], width: usize, x: usize, y: usize) -> [f64; 3] {
    if blocked[y * width + x] {
        return [0.0, 0.0, 0.0];
    }
    let horizon = frames.len().saturating_sub(1);
    match latest_use(frames, x, y) {
        None => [1.0, 1.0, 1.0],
        Some((t, occ)) => {
            let alpha = occ.clamp(0.0, 1.0);
            let rgb = colormap(horizon)[t];
            [
                alpha * rgb[0] + (1.0 - alpha),
                alpha * rgb[1] + (1.0 - alpha),
                alpha * rgb[2] + (1.0 - alpha),
            ]
        }
    }
}

/// Binary PPM (P6) image of the occupancy frames, `scale` pixels per cell.
pub fn ppm(
    width: usize,
    height: usize,
    blocked: &[bool],
    frames: &[Grid2],
    scale: usize,
) -> Vec<u8> {
    assert!(scale > 0, "scale must be at least 1");
    assert_eq!(blocked.len(), width * height, "blocked mask shape mismatch");
    let (pw, ph) = (width * scale, height * scale);
    let mut out = format!("P6\n{pw} {ph}\n255\n").into_bytes();
    out.reserve(pw * ph * 3);
    for y in 0..height {
        let row: Vec<[u8; 3]> = (0..width)
            .map(|x| {
                let rgb = shade(blocked, frames, width, x, y);
                [to_byte(rgb[0]), to_byte(rgb[1]), to_byte(rgb[2])]
            })
            .collect();
        for _ in 0..scale {
            for px in &row {
                for _ in 0..scale {
                    out.extend_from_slice(px);
                }
            }
        }
    }
    out
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// ASCII rendering: `#` obstacle, `.` untouched cell, otherwise the latest
/// displayable timestep as a base-36 digit.
pub fn ascii(width: usize, height: usize, blocked: &[bool], frames: &[Grid2]) -> String {
    assert_eq!(blocked.len(), width * height, "blocked mask shape mismatch");
    let mut out = String::with_capacity((width + 1) * height);
    for y in 0..height {
        for x in 0..width {
            if blocked[y * width + x] {
                out.push('#');
            } else {
                out.push(match latest_use(frames, x, y) {
                    None => '.',
                    Some((t, _)) => std::char::from_digit((t % 36) as u32, 36).unwrap(),
                });
            }
        }
        out.push('\n');
    }
    out
}
