//! Exact model densities, sampling, 2-d density grids and grid file output.
//!
//! Grids are evaluated at cell centers and stored row-major with `y` as the
//! outer index. Masses are midpoint sums `Σ value · cell_area`; comparisons
//! between grids renormalize each one to unit mass on the box first.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{check_dim, Error, Result};
use crate::flows::FlowStack;
use crate::math::{log_standard_gaussian, max_abs_diff, RngState};
use crate::objectives::Energy;

/// Maximum ∞-norm gap between an input and the forward image of its inverse.
pub const CONSISTENCY_TOL: f64 = 1e-6;

/// `log p(x)` by change of variables through the inverse map.
pub fn log_density(stack: &FlowStack, x: &[f64]) -> Result<f64> {
    let z0 = stack.inverse(x)?;
    let (image, total_logdet) = stack.transform(&z0)?;
    let error = max_abs_diff(&image, x);
    if !(error <= CONSISTENCY_TOL) {
        return Err(Error::Inconsistent { error, tolerance: CONSISTENCY_TOL });
    }
    Ok(log_standard_gaussian(&z0) - total_logdet)
}

/// `n` draws of `f(z0)` with `z0 ~ N(0, I)`.
pub fn sample(stack: &FlowStack, rng: &mut RngState, n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    (0..n)
        .map(|_| {
            let z0 = rng.sample_standard_gaussian(stack.dim());
            stack.transform(&z0).map(|(x, _)| x)
        })
        .collect()
}

/// Fraction of samples whose coordinate `axis` exceeds `threshold`.
pub fn mode_balance(samples: &[Vec<f64>], axis: usize, threshold: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let mut above = 0usize;
    for s in samples {
        let v = s.get(axis).ok_or_else(|| Error::invalid(format!("axis {axis} out of range")))?;
        if *v > threshold {
            above += 1;
        }
    }
    Ok(above as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { xmin: -4.0, xmax: 4.0, ymin: -4.0, ymax: 4.0, nx: 200, ny: 200 }
    }
}

impl GridSpec {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64, nx: usize, ny: usize) -> Result<Self> {
        let spec = Self { xmin, xmax, ymin, ymax, nx, ny };
        spec.validate()?;
        Ok(spec)
    }

    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(lo, hi, lo, hi, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.xmin, self.xmax, self.ymin, self.ymax].iter().all(|v| v.is_finite());
        if !finite || !(self.xmax > self.xmin) || !(self.ymax > self.ymin) {
            return Err(Error::invalid("grid bounds must be finite with max > min"));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::invalid("grid resolution must be positive"));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.xmax - self.xmin) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.ymax - self.ymin) / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Center of cell `(ix, iy)`.
    pub fn center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.xmin + (ix as f64 + 0.5) * self.dx(), self.ymin + (iy as f64 + 0.5) * self.dy()]
    }

    /// Cell centers in storage order.
    pub fn centers(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.ny).flat_map(move |iy| (0..self.nx).map(move |ix| self.center(ix, iy)))
    }

    /// Cell containing `p`, if it lies in the box (upper edges are exclusive).
    pub fn cell_of(&self, p: &[f64]) -> Option<(usize, usize)> {
        let fx = (p[0] - self.xmin) / self.dx();
        let fy = (p[1] - self.ymin) / self.dy();
        if fx >= 0.0 && fy >= 0.0 && fx < self.nx as f64 && fy < self.ny as f64 {
            Some((fx as usize, fy as usize))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        check_dim(spec.len(), values.len())?;
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("density values must be finite and non-negative"));
        }
        Ok(Self { spec, values })
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.spec.nx + ix]
    }

    /// Midpoint-rule integral over the box.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_area()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Copy scaled to unit mass on the box.
    pub fn normalized(&self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::invalid("grid has zero mass"));
        }
        Ok(Self { spec: self.spec, values: self.values.iter().map(|v| v / mass).collect() })
    }
}

/// `exp(log_density)` at every cell center.
pub fn model_density_grid(stack: &FlowStack, spec: &GridSpec) -> Result<DensityGrid> {
    spec.validate()?;
    check_dim(2, stack.dim())?;
    let values = spec.centers().map(|c| log_density(stack, &c).map(f64::exp)).collect::<Result<Vec<_>>>()?;
    DensityGrid::new(*spec, values)
}

/// `exp(-U)` at cell centers, normalized to unit mass on the box.
pub fn true_density_grid(energy: Energy, spec: &GridSpec) -> Result<DensityGrid> {
    spec.validate()?;
    let values = spec.centers().map(|c| energy.eval(&c).map(|u| (-u).exp())).collect::<Result<Vec<_>>>()?;
    DensityGrid::new(*spec, values)?.normalized()
}

/// Normalized 2-d histogram of samples on the grid's cells; samples outside the box are dropped.
pub fn histogram_grid(samples: &[Vec<f64>], spec: &GridSpec) -> Result<DensityGrid> {
    spec.validate()?;
    let mut counts = vec![0.0; spec.len()];
    for s in samples {
        check_dim(2, s.len())?;
        if let Some((ix, iy)) = spec.cell_of(s) {
            counts[iy * spec.nx + ix] += 1.0;
        }
    }
    DensityGrid::new(*spec, counts)?.normalized()
}

/// Total variation distance between two grids after normalizing each to unit mass.
pub fn tvd(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    if a.spec != b.spec {
        return Err(Error::invalid("grid specs differ"));
    }
    let (a, b) = (a.normalized()?, b.normalized()?);
    let sum: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * sum * a.spec.cell_area()).clamp(0.0, 1.0))
}

/// CSV with header `x,y,density`, one row per cell in storage order, 17 significant digits.
pub fn emit_csv(grid: &DensityGrid, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(grid.values.len() * 72);
    out.push_str("x,y,density\n");
    for (c, v) in grid.spec.centers().zip(&grid.values) {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", c[0], c[1], v).expect("writing to a String");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Plain (P2) PGM, maxval 255, pixel = round(255 · value / max). The first
/// image row is the top of the box (largest `y`).
pub fn emit_pgm(grid: &DensityGrid, path: &Path) -> Result<()> {
    let GridSpec { nx, ny, .. } = grid.spec;
    let max = grid.max();
    let mut out = format!("P2\n{nx} {ny}\n255\n");
    for iy in (0..ny).rev() {
        let row: Vec<String> = (0..nx)
            .map(|ix| {
                let v = grid.get(ix, iy);
                let px = if max > 0.0 { (255.0 * v / max).round() as u8 } else { 0 };
                px.to_string()
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a grid written by [`emit_csv`], recovering its spec from the cell centers.
pub fn read_csv(path: &Path) -> Result<DensityGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Format { path: path.to_path_buf(), message };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("x,y,density") {
        return Err(bad("missing `x,y,density` header".into()));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
        if fields.len() != 3 {
            return Err(bad(format!("line {}: expected 3 fields", n + 2)));
        }
        rows.push([fields[0], fields[1], fields[2]]);
    }
    if rows.is_empty() {
        return Err(bad("no cells".into()));
    }
    let y0 = rows[0][1];
    let nx = rows.iter().take_while(|r| r[1] == y0).count();
    if rows.len() % nx != 0 {
        return Err(bad("rows do not form a rectangular grid".into()));
    }
    let ny = rows.len() / nx;
    let step = |a: f64, b: f64, n: usize| if n > 1 { (b - a) / (n - 1) as f64 } else { f64::NAN };
    let dx = step(rows[0][0], rows[nx - 1][0], nx);
    let dy = step(y0, rows[rows.len() - 1][1], ny);
    // a single row or column carries no spacing information
    let (dx, dy) = match (dx.is_nan(), dy.is_nan()) {
        (false, false) => (dx, dy),
        (true, false) => (dy, dy),
        (false, true) => (dx, dx),
        (true, true) => return Err(bad("cannot infer cell size from a single cell".into())),
    };
    let spec = GridSpec::new(
        rows[0][0] - dx / 2.0,
        rows[nx - 1][0] + dx / 2.0,
        y0 - dy / 2.0,
        rows[rows.len() - 1][1] + dy / 2.0,
        nx,
        ny,
    )
    .map_err(|e| bad(e.to_string()))?;
    DensityGrid::new(spec, rows.iter().map(|r| r[2]).collect()).map_err(|e| bad(e.to_string()))
}
