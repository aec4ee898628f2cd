use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPPM_MAGIC: [u8; 4] = *b"SPPM";
const HEADER_LEN: usize = 16;

/// Grid definition: wavelengths span `[min, max]` inclusive, angles span
/// `[min, max)` (the p admittance diverges at exactly 90°).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub wavelength_min_nm: f64,
    pub wavelength_max_nm: f64,
    pub wavelength_count: usize,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub angle_count: usize,
}

impl GridSpec {
    /// 170 wavelengths over 300–2000 nm, 900 angles over [0°, 90°).
    pub fn paper() -> Self {
        Self {
            wavelength_min_nm: 300.0,
            wavelength_max_nm: 2000.0,
            wavelength_count: 170,
            angle_min_deg: 0.0,
            angle_max_deg: 90.0,
            angle_count: 900,
        }
    }

    pub fn desk() -> Self {
        Self {
            wavelength_count: 64,
            angle_count: 64,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.wavelength_count >= 1
            && self.angle_count >= 1
            && self.wavelength_min_nm > 0.0
            && self.wavelength_max_nm >= self.wavelength_min_nm
            && (self.wavelength_count == 1 || self.wavelength_max_nm > self.wavelength_min_nm)
            && self.angle_min_deg >= 0.0
            && self.angle_max_deg <= 90.0
            && self.angle_max_deg > self.angle_min_deg;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid grid {self:?}")))
        }
    }

    pub fn build(&self) -> Result<Grid> {
        self.validate()?;
        let wl_span = self.wavelength_max_nm - self.wavelength_min_nm;
        let wl_div = self.wavelength_count.saturating_sub(1).max(1) as f64;
        let angle_span = self.angle_max_deg - self.angle_min_deg;
        Ok(Grid {
            wavelengths_nm: (0..self.wavelength_count)
                .map(|c| self.wavelength_min_nm + wl_span * c as f64 / wl_div)
                .collect(),
            angles_deg: (0..self.angle_count)
                .map(|r| self.angle_min_deg + angle_span * r as f64 / self.angle_count as f64)
                .collect(),
        })
    }
}

/// Concrete sample points; rows of a heat map are angles, columns wavelengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub angles_deg: Vec<f64>,
    pub wavelengths_nm: Vec<f64>,
}

impl Grid {
    pub fn new(angles_deg: Vec<f64>, wavelengths_nm: Vec<f64>) -> Result<Self> {
        let ascending = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if angles_deg.is_empty() || wavelengths_nm.is_empty() {
            return Err(Error::domain("grids must be non-empty"));
        }
        if !ascending(&angles_deg) || !ascending(&wavelengths_nm) {
            return Err(Error::domain("grids must be strictly ascending"));
        }
        Ok(Self {
            angles_deg,
            wavelengths_nm,
        })
    }

    pub fn rows(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn cols(&self) -> usize {
        self.wavelengths_nm.len()
    }
}

/// Row-major reflectance grid stored as f32.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl HeatMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Shape {
                expected: format!("{rows}x{cols} with {} cells", rows * cols),
                actual: format!("{} cells", values.len()),
            });
        }
        if let Some(v) = values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0 + 1e-6)
        {
            return Err(Error::domain(format!("heat map cell {v} outside [0, 1]")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    pub fn min_value(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(&SPPM_MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    /// Parses the binary map format; `name` labels errors.
    pub fn from_bytes(bytes: &[u8], name: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(name, "truncated header"));
        }
        if bytes[..4] != SPPM_MAGIC {
            return Err(Error::format(name, "bad magic (expected SPPM)"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (rows, cols) = (word(4), word(8));
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(name, "dimensions overflow"))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() < expected {
            return Err(Error::format(
                name,
                format!("truncated data: {} of {expected} bytes", body.len()),
            ));
        }
        if body.len() > expected {
            return Err(Error::format(name, "trailing bytes after data"));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(rows, cols, values).map_err(|e| Error::format(name, e.to_string()))
    }

    pub fn read_from(mut r: impl Read, name: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(name, e))?;
        Self::from_bytes(&bytes, name)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// CSV with a wavelength header row and one angle-labelled row per angle.
    pub fn to_csv(&self, grid: &Grid) -> Result<String> {
        if grid.rows() != self.rows || grid.cols() != self.cols {
            return Err(Error::Shape {
                expected: format!("{}x{}", self.rows, self.cols),
                actual: format!("grid {}x{}", grid.rows(), grid.cols()),
            });
        }
        let mut out = String::from("theta_deg\\wavelength_nm");
        for wl in &grid.wavelengths_nm {
            out.push_str(&format!(",{wl}"));
        }
        out.push('\n');
        for (r, theta) in grid.angles_deg.iter().enumerate() {
            out.push_str(&theta.to_string());
            for v in &self.values[r * self.cols..(r + 1) * self.cols] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Overlap weights mapping `src` cells onto `dst` cells of equal total extent.
/// Each output row of weights sums to one.
fn overlap_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|i| {
                    let w = (hi.min((i + 1) as f64) - lo.max(i as f64)) / scale;
                    (w > 0.0).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted resampling: every output cell is the overlap-weighted mean
/// of the source cells it covers (works for both shrinking and enlarging).
pub fn resize_map(map: &HeatMap, rows: usize, cols: usize) -> Result<HeatMap> {
    if rows == 0 || cols == 0 {
        return Err(Error::domain("resize target dimensions must be at least 1"));
    }
    if rows == map.rows && cols == map.cols {
        return Ok(map.clone());
    }
    let wr = overlap_weights(map.rows, rows);
    let wc = overlap_weights(map.cols, cols);
    let mut out = Vec::with_capacity(rows * cols);
    for row_w in &wr {
        for col_w in &wc {
            let mut acc = 0.0f64;
            for &(i, a) in row_w {
                for &(j, b) in col_w {
                    acc += a * b * map.values[i * map.cols + j] as f64;
                }
            }
            out.push(acc.clamp(0.0, 1.0) as f32);
        }
    }
    HeatMap::new(rows, cols, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_grid_shape() {
        let g = GridSpec::paper().build().unwrap();
        assert_eq!((g.rows(), g.cols()), (900, 170));
        assert_eq!(g.rows() * g.cols(), 153_000);
        assert_eq!(g.angles_deg[0], 0.0);
        assert!((g.angles_deg[899] - 89.9).abs() < 1e-9);
        assert_eq!(g.wavelengths_nm[0], 300.0);
        assert_eq!(g.wavelengths_nm[169], 2000.0);
    }

    #[test]
    fn resize_identity_is_bitwise() {
        let m = HeatMap::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(resize_map(&m, 2, 3).unwrap(), m);
    }

    #[test]
    fn resize_mean() {
        let m = HeatMap::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let r = resize_map(&m, 1, 1).unwrap();
        assert_eq!(r.values(), &[0.5]);
    }

    #[test]
    fn resize_fractional_blocks() {
        // 3 cells onto 2: out0 = (a + b/2)/1.5, out1 = (b/2 + c)/1.5
        let m = HeatMap::new(1, 3, vec![0.0, 0.6, 0.9]).unwrap();
        let r = resize_map(&m, 1, 2).unwrap();
        assert!((r.values()[0] - 0.2).abs() < 1e-6);
        assert!((r.values()[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn resize_constant_any_size() {
        let m = HeatMap::filled(7, 5, 0.25).unwrap();
        for (r, c) in [(1, 1), (3, 2), (7, 5), (16, 11), (224, 224)] {
            let out = resize_map(&m, r, c).unwrap();
            assert!(out.values().iter().all(|&v| (v - 0.25).abs() < 1e-7), "{r}x{c}");
        }
        assert!(resize_map(&m, 0, 3).is_err());
    }

    #[test]
    fn sppm_round_trip_and_errors() {
        let m = HeatMap::new(2, 2, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"SPPM");
        assert_eq!(bytes.len(), 16 + 16);
        let p = Path::new("x.sppm");
        assert_eq!(HeatMap::from_bytes(&bytes, p).unwrap(), m);
        assert!(HeatMap::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(HeatMap::from_bytes(&bad, p).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn rejects_out_of_range_cells() {
        assert!(HeatMap::new(1, 1, vec![1.1]).is_err());
        assert!(HeatMap::new(1, 1, vec![f32::NAN]).is_err());
        assert!(HeatMap::new(1, 2, vec![0.5]).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = Grid::new(vec![0.0, 45.0], vec![500.0, 600.0]).unwrap();
        let m = HeatMap::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let csv = m.to_csv(&g).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "theta_deg\\wavelength_nm,500,600");
        assert_eq!(lines[2], "45,0.3,0.4");
    }
}
