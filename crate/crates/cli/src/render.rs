//! 8-bit grayscale rendering: R = 0 is black, R = 1 is white, rows are
//! angles (top = first angle), columns are wavelengths.

use spp_core::optics::{Grid, HeatMap};

/// `floor(255·R + 0.5)`, clamped to 0..=255 (round half up).
pub fn gray_level(r: f32) -> u8 {
    (255.0 * r as f64 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Binary PGM (P5, maxval 255).
pub fn to_pgm(map: &HeatMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.cols(), map.rows()).into_bytes();
    out.extend(map.values().iter().map(|&r| gray_level(r)));
    out
}

/// Parses a P5 file written by [`to_pgm`]; returns (width, height, pixels).
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(format!("expected P5 with maxval 255, got {} / {}", fields[0], fields[3]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| format!("bad PGM size {s:?}: {e}"));
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    let pixels = bytes.get(pos..).unwrap_or_default();
    if pixels.len() != w * h {
        return Err(format!("PGM has {} pixels, header says {w}x{h}", pixels.len()));
    }
    Ok((w, h, pixels.to_vec()))
}

/// Axis description written next to a rendered image.
pub fn axes_text(grid: &Grid) -> String {
    let first_last = |v: &[f64]| (v[0], v[v.len() - 1]);
    let (a0, a1) = first_last(&grid.angles_deg);
    let (w0, w1) = first_last(&grid.wavelengths_nm);
    format!(
        "rows: incidence angle, {} values from {a0} deg (top) to {a1} deg (bottom)\n\
         columns: wavelength, {} values from {w0} nm (left) to {w1} nm (right)\n\
         gray level: floor(255 * R + 0.5), R = 0 black, R = 1 white\n",
        grid.rows(),
        grid.cols()
    )
}
