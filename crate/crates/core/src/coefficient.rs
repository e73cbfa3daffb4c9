//! Heterogeneous diffusion coefficients and source terms.
//!
//! Synthetic coefficients are piecewise constant on an `m × m` micro-grid of
//! width `s = 1/m`. Micro-cell `k` (row-major, `k = j*m + i`) receives
//! `10^(u_k · log10(contrast))`, where `u_k` is the `k`-th draw of a
//! [`SplitMix64`] counter stream seeded with the user seed. The raster is a
//! pure function of `(seed, s, contrast)`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{MsgfemError, Result};
use crate::fem::mesh::StructuredMesh;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const RASTER_MAGIC: &str = "MSGFEM-COEF v1";

/// Counter-based SplitMix64.
///
/// Draw `k` of the stream with seed `s` is `mix(s + (k+1)·γ)` where
/// `γ = 0x9E3779B97F4A7C15` and `mix` is the finalizer
/// `z ^= z>>30; z *= 0xBF58476D1CE4E5B9; z ^= z>>27; z *= 0x94D049BB133111EB; z ^= z>>31`
/// (all arithmetic wrapping). Draws can be computed in any order, and
/// [`SplitMix64::split`] derives independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    seed: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn at(&self, k: u64) -> u64 {
        Self::mix(self.seed.wrapping_add(k.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw in `[0, 1)` from the top 53 bits.
    pub fn uniform(&self, k: u64) -> f64 {
        (self.at(k) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Independent child stream.
    pub fn split(&self, stream: u64) -> SplitMix64 {
        SplitMix64::new(Self::mix(self.seed ^ Self::mix(stream.wrapping_add(GOLDEN_GAMMA))))
    }
}

/// Positive scalar diffusion coefficient, constant on each micro-cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    cells: usize,
    values: Vec<f64>,
    a_min: f64,
    a_max: f64,
    seed: Option<u64>,
    contrast: f64,
}

impl CoefficientField {
    /// Seeded log-uniform raster with values in `[1, contrast]`.
    pub fn generate_multiscale(seed: u64, s: f64, contrast: f64) -> Result<Self> {
        let cells = micro_cells(s)?;
        if !(contrast >= 1.0) || !contrast.is_finite() {
            return Err(MsgfemError::Config(format!("contrast must be >= 1, got {contrast}")));
        }
        let rng = SplitMix64::new(seed);
        let exponent = contrast.log10();
        let values = (0..(cells * cells) as u64)
            .map(|k| 10f64.powf(rng.uniform(k) * exponent).clamp(1.0, contrast))
            .collect();
        Ok(Self { cells, values, a_min: 1.0, a_max: contrast, seed: Some(seed), contrast })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::from_values(1, vec![value])
    }

    /// Arbitrary raster, row-major with `k = j*cells + i`.
    pub fn from_values(cells: usize, values: Vec<f64>) -> Result<Self> {
        if cells == 0 || values.len() != cells * cells {
            return Err(MsgfemError::GridMismatch(format!(
                "{} values for a {cells}x{cells} raster",
                values.len()
            )));
        }
        let a_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let a_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(a_min > 0.0) || !a_max.is_finite() {
            return Err(MsgfemError::CoefficientBound(format!(
                "raster range [{a_min}, {a_max}] is not positive and finite"
            )));
        }
        Ok(Self { cells, values, a_min, a_max, seed: None, contrast: a_max / a_min })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Micro-cell width.
    pub fn s(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn a_min(&self) -> f64 {
        self.a_min
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn contrast(&self) -> f64 {
        self.contrast
    }

    /// Value of the micro-cell whose half-open box `[i s, (i+1) s)` contains
    /// the point; the right and top edges of the square belong to the last
    /// cell.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(MsgfemError::Domain(x, y));
        }
        let m = self.cells;
        let i = ((x * m as f64).floor() as usize).min(m - 1);
        let j = ((y * m as f64).floor() as usize).min(m - 1);
        Ok(self.values[j * m + i])
    }

    /// Sample at fine-cell midpoints.
    pub fn sample(&self, mesh: &StructuredMesh) -> CellCoefficients {
        let n = mesh.n();
        let mut values = Vec::with_capacity(n * n);
        for cy in 0..n {
            for cx in 0..n {
                let (x, y) = mesh.cell_center(cx, cy);
                values.push(self.eval(x, y).expect("cell centers lie inside the square"));
            }
        }
        CellCoefficients { n, values }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.values.len() * 8 + 256);
        writeln!(out, "{RASTER_MAGIC}")?;
        writeln!(out, "cells {}", self.cells)?;
        writeln!(out, "s {:?}", self.s())?;
        writeln!(out, "a_min {:?}", self.a_min)?;
        writeln!(out, "a_max {:?}", self.a_max)?;
        match self.seed {
            Some(seed) => writeln!(out, "seed {seed}")?,
            None => writeln!(out, "seed none")?,
        }
        writeln!(out, "contrast {:?}", self.contrast)?;
        writeln!(out, "data f64le")?;
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(fs::File::open(path)?);
        let mut line = String::new();
        let mut next_line = |reader: &mut BufReader<fs::File>| -> Result<String> {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(MsgfemError::Parse("truncated raster header".into()));
            }
            Ok(line.trim_end().to_string())
        };
        if next_line(&mut reader)? != RASTER_MAGIC {
            return Err(MsgfemError::Parse("missing MSGFEM-COEF v1 magic".into()));
        }
        let (mut cells, mut a_min, mut a_max, mut seed, mut contrast) = (None, None, None, None, None);
        loop {
            let l = next_line(&mut reader)?;
            let (key, value) = l
                .split_once(' ')
                .ok_or_else(|| MsgfemError::Parse(format!("bad header line {l:?}")))?;
            let float = |v: &str| {
                v.parse::<f64>().map_err(|e| MsgfemError::Parse(format!("{key}: {e}")))
            };
            match key {
                "cells" => {
                    cells = Some(value.parse::<usize>().map_err(|e| MsgfemError::Parse(e.to_string()))?)
                }
                "s" => {
                    float(value)?;
                }
                "a_min" => a_min = Some(float(value)?),
                "a_max" => a_max = Some(float(value)?),
                "contrast" => contrast = Some(float(value)?),
                "seed" => {
                    seed = match value {
                        "none" => None,
                        v => Some(v.parse::<u64>().map_err(|e| MsgfemError::Parse(e.to_string()))?),
                    }
                }
                "data" if value == "f64le" => break,
                _ => return Err(MsgfemError::Parse(format!("unknown header key {key:?}"))),
            }
        }
        let cells = cells.ok_or_else(|| MsgfemError::Parse("missing cells".into()))?;
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() != cells * cells * 8 {
            return Err(MsgfemError::Parse(format!(
                "expected {} data bytes, found {}",
                cells * cells * 8,
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut field = Self::from_values(cells, values)?;
        if let (Some(lo), Some(hi)) = (a_min, a_max) {
            if !(lo > 0.0 && lo <= field.a_min && field.a_max <= hi) {
                return Err(MsgfemError::CoefficientBound(format!(
                    "raster values outside recorded bounds [{lo}, {hi}]"
                )));
            }
            field.a_min = lo;
            field.a_max = hi;
        }
        field.seed = seed;
        if let Some(c) = contrast {
            field.contrast = c;
        }
        Ok(field)
    }
}

/// Micro-cells per axis for width `s`; `1/s` must be an integer.
pub fn micro_cells(s: f64) -> Result<usize> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(MsgfemError::GridMismatch(format!("micro-cell width {s} not in (0, 1]")));
    }
    let inv = 1.0 / s;
    let m = inv.round();
    if (inv - m).abs() > 1e-9 * m {
        return Err(MsgfemError::GridMismatch(format!("1/s = {inv} is not an integer")));
    }
    Ok(m as usize)
}

/// Coefficient sampled once per fine cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCoefficients {
    n: usize,
    values: Vec<f64>,
}

impl CellCoefficients {
    pub fn constant(mesh: &StructuredMesh, value: f64) -> Self {
        Self { n: mesh.n(), values: vec![value; mesh.cell_count()] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, cx: usize, cy: usize) -> f64 {
        self.values[cy * self.n + cx]
    }

    pub fn set(&mut self, cx: usize, cy: usize, value: f64) {
        self.values[cy * self.n + cx] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Right-hand side `f`.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceField {
    Constant(f64),
    /// `amplitude · exp(-rate((x-cx)² + (y-cy)²))`.
    Gaussian { amplitude: f64, cx: f64, cy: f64, rate: f64 },
    /// `amplitude · sin(πx) sin(πy)`.
    SineProduct { amplitude: f64 },
    /// Bilinear interpolant of nodal values on an `n × n` cell grid.
    Nodal { n: usize, values: Vec<f64> },
}

impl SourceField {
    /// `f(x) = 10 exp(-10(x₁-0.15)² - 10(x₂-0.55)²)`.
    pub fn benchmark() -> Self {
        SourceField::Gaussian { amplitude: 10.0, cx: 0.15, cy: 0.55, rate: 10.0 }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            SourceField::Constant(c) => *c,
            SourceField::Gaussian { amplitude, cx, cy, rate } => {
                amplitude * (-rate * (x - cx).powi(2) - rate * (y - cy).powi(2)).exp()
            }
            SourceField::SineProduct { amplitude } => {
                amplitude * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
            }
            SourceField::Nodal { n, values } => {
                let n = *n;
                let fx = (x * n as f64).clamp(0.0, n as f64);
                let fy = (y * n as f64).clamp(0.0, n as f64);
                let i = (fx.floor() as usize).min(n - 1);
                let j = (fy.floor() as usize).min(n - 1);
                let (sx, sy) = (fx - i as f64, fy - j as f64);
                let at = |a: usize, b: usize| values[b * (n + 1) + a];
                (1.0 - sx) * (1.0 - sy) * at(i, j)
                    + sx * (1.0 - sy) * at(i + 1, j)
                    + sx * sy * at(i + 1, j + 1)
                    + (1.0 - sx) * sy * at(i, j + 1)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SourceField::Constant(c) => *c == 0.0,
            SourceField::Gaussian { amplitude, .. } | SourceField::SineProduct { amplitude } => {
                *amplitude == 0.0
            }
            SourceField::Nodal { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_contrast_is_constant() {
        let f = CoefficientField::generate_multiscale(7, 0.25, 1.0).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = CoefficientField::generate_multiscale(42, 0.01, 1e4).unwrap();
        let b = CoefficientField::generate_multiscale(42, 0.01, 1e4).unwrap();
        assert_eq!(a.cells(), 100);
        let bits = |f: &CoefficientField| f.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = CoefficientField::generate_multiscale(43, 0.01, 1e4).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn generated_statistics() {
        let f = CoefficientField::generate_multiscale(42, 0.01, 1e4).unwrap();
        let mut v = f.values().to_vec();
        assert!(v.iter().all(|&x| (1.0..=1e4).contains(&x)));
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (v[4999] + v[5000]);
        assert!(median >= 10f64.powf(1.8) && median <= 10f64.powf(2.2), "median {median}");
    }

    #[test]
    fn bad_micro_width() {
        assert!(matches!(
            CoefficientField::generate_multiscale(1, 0.3, 10.0),
            Err(MsgfemError::GridMismatch(_))
        ));
        assert!(CoefficientField::generate_multiscale(1, 0.25, 0.5).is_err());
    }

    #[test]
    fn eval_tie_break_and_domain() {
        let f = CoefficientField::from_values(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.eval(0.5, 0.25).unwrap(), 2.0);
        assert_eq!(f.eval(0.25, 0.5).unwrap(), 3.0);
        assert_eq!(f.eval(1.0, 1.0).unwrap(), 4.0);
        assert_eq!(f.eval(0.0, 0.0).unwrap(), 1.0);
        assert!(matches!(f.eval(1.5, 0.2), Err(MsgfemError::Domain(..))));
        assert!(f.eval(f64::NAN, 0.2).is_err());
        let c = CoefficientField::constant(2.5).unwrap();
        assert_eq!(c.eval(0.77, 0.01).unwrap(), 2.5);
    }

    #[test]
    fn raster_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coef.bin");
        let f = CoefficientField::generate_multiscale(9, 1.0 / 16.0, 123.456).unwrap();
        f.save(&path).unwrap();
        let g = CoefficientField::load(&path).unwrap();
        assert_eq!(f, g);
        for &(x, y) in &[(0.1, 0.9), (0.5, 0.5), (0.999, 0.0)] {
            assert_eq!(f.eval(x, y).unwrap().to_bits(), g.eval(x, y).unwrap().to_bits());
        }
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"MSGFEM-COEF v1\n"));
    }

    #[test]
    fn corrupt_raster_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, b"MSGFEM-COEF v1\ncells 2\ndata f64le\n1234").unwrap();
        assert!(matches!(CoefficientField::load(&path), Err(MsgfemError::Parse(_))));
        fs::write(&path, b"nope\n").unwrap();
        assert!(CoefficientField::load(&path).is_err());
    }

    #[test]
    fn benchmark_source_values() {
        let f = SourceField::benchmark();
        assert_eq!(f.eval(0.15, 0.55), 10.0);
        assert!((f.eval(0.65, 0.55) - 0.820850).abs() < 1e-6);
        for t in [0.01, 0.1, 0.37] {
            assert_eq!(f.eval(0.15 + t, 0.55), f.eval(0.15 - t, 0.55));
        }
    }

    #[test]
    fn splitmix_reference_stream() {
        // first outputs of the canonical SplitMix64 with state 0
        let g = SplitMix64::new(0);
        assert_eq!(g.at(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(g.at(1), 0x6E78_9E6A_A1B9_65F4);
        assert_ne!(g.split(1).at(0), g.split(2).at(0));
    }

    #[test]
    fn nodal_source_interpolates() {
        let f = SourceField::Nodal { n: 1, values: vec![0.0, 1.0, 2.0, 3.0] };
        assert_eq!(f.eval(0.5, 0.5), 1.5);
        assert_eq!(f.eval(1.0, 0.0), 1.0);
    }
}
