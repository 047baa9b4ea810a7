//! Binary little-endian PLY export of coloured point clouds.

use std::io::Write;

use rayalign_core::Vec3;

/// Blue for the lowest confidence through green to red for the highest.
pub fn confidence_color(t: f64) -> [u8; 3] {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let s = 2.0 * t - 1.0;
    let byte = |x: f64| (255.0 * x.clamp(0.0, 1.0)).round() as u8;
    [byte(s), byte(1.0 - s.abs()), byte(-s)]
}

/// Writes `x y z` as float32 and `red green blue` as uchar. Confidence is
/// scaled by its maximum before colouring.
pub fn write_ply<W: Write>(out: &mut W, points: &[(Vec3, f64)]) -> std::io::Result<()> {
    let max = points.iter().map(|p| p.1).fold(0.0f64, f64::max);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    )?;
    let mut buf = Vec::with_capacity(15 * points.len());
    for (p, c) in points {
        for v in p.iter() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        buf.extend_from_slice(&confidence_color(if max > 0.0 { c / max } else { 0.0 }));
    }
    out.write_all(&buf)
}
