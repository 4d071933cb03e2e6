//! Free-space magnetostatics on a uniform cubic cell grid.
//!
//! The magnetization lives at cell centres. Its discrete divergence (central
//! differences) gives a cell charge `ρ`, the potential is the convolution
//! `φ = G ⋆ ρ` with the cell-averaged Newton kernel
//! `G(d) = ∫_{cell d} dr / 4π|r|`, and the field lives on cell faces,
//! `h = −∇φ` (forward differences), so its discrete curl vanishes
//! identically. The energy is
//!
//! ```text
//! E_d = (μ0/2) c³ Σ_i φ_i ρ_i = −(μ0/2) Σ_faces h·M c³,
//! ```
//!
//! the discrete form of `(μ0/2) ∫_{ℝ³} |h_d|² = −(μ0/2) ∫ h_d·m`.
//!
//! The convolution is evaluated either with zero-padded FFTs (padding to at
//! least twice the grid per axis, so the circular convolution equals the
//! free-space one) or by literal summation over charged cells; both use the
//! same kernel table.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::fem_projection::{project, PwlField};
use crate::fields::SmoothField;
use crate::geometry::{DomainSpec, TetDecomposition};
use crate::spin_field::SpinField;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Spectral,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemagConfig {
    /// Content cells across the largest extent of Ω's bounding box.
    pub cells: usize,
    pub method: Method,
    pub mu0: f64,
    /// Largest grid (in cells) the direct method accepts.
    pub cell_budget: usize,
}

impl Default for DemagConfig {
    fn default() -> Self {
        DemagConfig {
            cells: 32,
            method: Method::Spectral,
            mu0: 1.0,
            cell_budget: 32_768,
        }
    }
}

/// Cell-centred magnetization on a grid with one empty margin cell around
/// the content region.
#[derive(Debug, Clone, PartialEq)]
pub struct MagGrid {
    dims: [usize; 3],
    cell: f64,
    origin: Vec3,
    m: Vec<Vec3>,
}

impl MagGrid {
    pub fn new(dims: [usize; 3], cell: f64, origin: Vec3) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) || !(cell.is_finite() && cell > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bad grid {dims:?} with cell {cell}"
            )));
        }
        Ok(MagGrid {
            dims,
            cell,
            origin,
            m: vec![Vec3::zeros(); dims[0] * dims[1] * dims[2]],
        })
    }

    /// Grid with `cells` cubic cells across the largest extent of the
    /// bounding box plus a one-cell margin.
    pub fn for_domain(domain: &DomainSpec, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::InvalidParameter(
                "demag grid needs at least one cell".into(),
            ));
        }
        let (lo, hi) = domain.bounding_box();
        let ext = hi - lo;
        let c = ext.max() / cells as f64;
        let dims = [0, 1, 2].map(|d| (ext[d] / c - 1e-9).ceil().max(1.0) as usize + 2);
        MagGrid::new(dims, c, lo - Vec3::repeat(c))
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    fn coords(&self, id: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [id % nx, (id / nx) % ny, id / (nx * ny)]
    }

    pub fn center(&self, id: usize) -> Vec3 {
        let [i, j, k] = self.coords(id);
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.cell
    }

    pub fn values(&self) -> &[Vec3] {
        &self.m
    }

    pub fn values_mut(&mut self) -> &mut [Vec3] {
        &mut self.m
    }

    /// `∫ |m|²` with piecewise-constant cells.
    pub fn l2_norm_squared(&self) -> f64 {
        self.m.iter().map(|v| v.norm_squared()).sum::<f64>() * self.cell.powi(3)
    }

    /// `α·self + β·other` on the same grid.
    pub fn combine(&self, alpha: f64, other: &MagGrid, beta: f64) -> Result<MagGrid> {
        self.check_same(other)?;
        let m = self
            .m
            .iter()
            .zip(&other.m)
            .map(|(a, b)| a * alpha + b * beta)
            .collect();
        Ok(MagGrid { m, ..self.clone() })
    }

    fn check_same(&self, other: &MagGrid) -> Result<()> {
        if self.dims != other.dims || self.cell != other.cell {
            return Err(Error::InvalidParameter("grids differ".into()));
        }
        Ok(())
    }

    /// Cell charge `ρ = −div m` by central differences (zero outside).
    pub fn charge(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let c = self.cell;
        (0..self.m.len())
            .into_par_iter()
            .map(|id| {
                let [i, j, k] = self.coords(id);
                let mut div = 0.0;
                let n = [nx, ny, nz];
                let idx = [i, j, k];
                for d in 0..3 {
                    let stride = [1, nx, nx * ny][d];
                    let plus = if idx[d] + 1 < n[d] {
                        self.m[id + stride][d]
                    } else {
                        0.0
                    };
                    let minus = if idx[d] > 0 {
                        self.m[id - stride][d]
                    } else {
                        0.0
                    };
                    div += (plus - minus) / (2.0 * c);
                }
                -div
            })
            .collect()
    }

    /// Plain-text dump: header `nx ny nz hx hy hz`, then one triplet per
    /// cell with x fastest.
    pub fn to_text(&self) -> String {
        grid_text(self.dims, self.cell, &self.m)
    }
}

fn grid_text(dims: [usize; 3], cell: f64, values: &[Vec3]) -> String {
    let mut out = String::with_capacity(values.len() * 40 + 64);
    let _ = writeln!(
        out,
        "{} {} {} {:e} {:e} {:e}",
        dims[0], dims[1], dims[2], cell, cell, cell
    );
    for v in values {
        let _ = writeln!(out, "{:.9e} {:.9e} {:.9e}", v[0], v[1], v[2]);
    }
    out
}

/// A parsed grid dump.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub values: Vec<Vec3>,
}

pub fn parse_grid_text(text: &str) -> Result<GridDump> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty grid dump".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 {
        return Err(Error::Parse("line 1: expected `nx ny nz hx hy hz`".into()));
    }
    let bad = |l: usize| Error::Parse(format!("line {l}: malformed number"));
    let mut dims = [0usize; 3];
    let mut spacing = [0f64; 3];
    for d in 0..3 {
        dims[d] = h[d].parse().map_err(|_| bad(1))?;
        spacing[d] = h[3 + d].parse().map_err(|_| bad(1))?;
    }
    let mut values = Vec::with_capacity(dims.iter().product());
    for (l, line) in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected a triplet", l + 1)));
        }
        let mut v = Vec3::zeros();
        for d in 0..3 {
            v[d] = parts[d].parse().map_err(|_| bad(l + 1))?;
        }
        values.push(v);
    }
    if values.len() != dims.iter().product::<usize>() {
        return Err(Error::Parse(format!(
            "{} triplets for a {}x{}x{} grid",
            values.len(),
            dims[0],
            dims[1],
            dims[2]
        )));
    }
    Ok(GridDump {
        dims,
        spacing,
        values,
    })
}

/// Sample `P_n(μ)` at cell centres (zero outside Ω_n).
pub fn rasterize(pwl: &PwlField<'_, '_, '_>, cfg: &DemagConfig) -> Result<MagGrid> {
    let lattice = pwl.field().lattice();
    let mut grid = MagGrid::for_domain(lattice.domain(), cfg.cells)?;
    let h = lattice.spacing();
    if grid.cell > h * (1.0 + 1e-9) {
        return Err(Error::Undersampled {
            cell: grid.cell,
            spacing: h,
        });
    }
    let values: Vec<Vec3> = (0..grid.len())
        .into_par_iter()
        .map(|id| {
            pwl.evaluate(&grid.center(id))
                .unwrap_or_else(|_| Vec3::zeros())
        })
        .collect();
    grid.m = values;
    Ok(grid)
}

/// Cell averages of `u·1_Ω` using `subsamples³` points per cell
/// (`subsamples = 1` samples the centre only).
pub fn rasterize_smooth(
    u: &SmoothField,
    domain: &DomainSpec,
    cells: usize,
    subsamples: usize,
) -> Result<MagGrid> {
    let mut grid = MagGrid::for_domain(domain, cells)?;
    let s = subsamples.max(1);
    let c = grid.cell;
    let values: Vec<Vec3> = (0..grid.len())
        .into_par_iter()
        .map(|id| {
            let center = grid.center(id);
            if s == 1 {
                return if domain.contains(&center) {
                    u.eval(&center)
                } else {
                    Vec3::zeros()
                };
            }
            let corner = center - Vec3::repeat(0.5 * c);
            let mut acc = Vec3::zeros();
            for a in 0..s {
                for b in 0..s {
                    for e in 0..s {
                        let p = corner
                            + Vec3::new(a as f64 + 0.5, b as f64 + 0.5, e as f64 + 0.5)
                                * (c / s as f64);
                        if domain.contains(&p) {
                            acc += u.eval(&p);
                        }
                    }
                }
            }
            acc / (s * s * s) as f64
        })
        .collect();
    grid.m = values;
    Ok(grid)
}

// ---------------------------------------------------------------- kernel

/// `ln(z + r)` without cancellation for negative `z`.
fn ln_z_plus_r(z: f64, r: f64, rho2: f64) -> f64 {
    if z >= 0.0 {
        (z + r).ln()
    } else {
        (rho2 / (r - z)).ln()
    }
}

/// Antiderivative of `1/|r|` in all three variables.
fn box_antiderivative(x: f64, y: f64, z: f64) -> f64 {
    let r = (x * x + y * y + z * z).sqrt();
    let mut f = 0.0;
    if x != 0.0 && y != 0.0 {
        f += x * y * ln_z_plus_r(z, r, x * x + y * y);
    }
    if y != 0.0 && z != 0.0 {
        f += y * z * ln_z_plus_r(x, r, y * y + z * z);
    }
    if z != 0.0 && x != 0.0 {
        f += z * x * ln_z_plus_r(y, r, z * z + x * x);
    }
    if x != 0.0 {
        f -= 0.5 * x * x * (y * z / (x * r)).atan();
    }
    if y != 0.0 {
        f -= 0.5 * y * y * (z * x / (y * r)).atan();
    }
    if z != 0.0 {
        f -= 0.5 * z * z * (x * y / (z * r)).atan();
    }
    f
}

const CLOSED_FORM_REACH: i64 = 16;

/// `(1/4π) ∫_{unit cube centred at d} dr/|r|`.
pub fn unit_cell_kernel(d: [i64; 3]) -> f64 {
    let d = d.map(|v| v.abs());
    if d.iter().all(|&v| v <= CLOSED_FORM_REACH) {
        let mut total = 0.0;
        for (sx, x) in [(-1.0, d[0] as f64 - 0.5), (1.0, d[0] as f64 + 0.5)] {
            for (sy, y) in [(-1.0, d[1] as f64 - 0.5), (1.0, d[1] as f64 + 0.5)] {
                for (sz, z) in [(-1.0, d[2] as f64 - 0.5), (1.0, d[2] as f64 + 0.5)] {
                    total += sx * sy * sz * box_antiderivative(x, y, z);
                }
            }
        }
        total / (4.0 * PI)
    } else {
        // 3-point Gauss–Legendre product rule; the integrand is smooth here
        let nodes = [-(0.6f64).sqrt() / 2.0, 0.0, (0.6f64).sqrt() / 2.0];
        let weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        let mut total = 0.0;
        for (a, wa) in nodes.iter().zip(&weights) {
            for (b, wb) in nodes.iter().zip(&weights) {
                for (c, wc) in nodes.iter().zip(&weights) {
                    let p = Vec3::new(d[0] as f64 + a, d[1] as f64 + b, d[2] as f64 + c);
                    total += wa * wb * wc / p.norm();
                }
            }
        }
        total / (4.0 * PI)
    }
}

/// Kernel values for `0 ≤ d_i ≤ reach_i` (one octant; the kernel is even in
/// every coordinate).
struct KernelTable {
    reach: [usize; 3],
    values: Vec<f64>,
}

impl KernelTable {
    fn new(reach: [usize; 3]) -> Self {
        let [rx, ry, rz] = reach.map(|r| r + 1);
        let values = (0..rx * ry * rz)
            .into_par_iter()
            .map(|id| {
                unit_cell_kernel([
                    (id % rx) as i64,
                    ((id / rx) % ry) as i64,
                    (id / (rx * ry)) as i64,
                ])
            })
            .collect();
        KernelTable { reach, values }
    }

    fn get(&self, d: [i64; 3]) -> f64 {
        let [rx, ry, _] = self.reach.map(|r| r + 1);
        let [a, b, c] = d.map(|v| v.unsigned_abs() as usize);
        self.values[a + rx * (b + ry * c)]
    }
}

// ---------------------------------------------------------------- solver

#[derive(Debug, Clone)]
pub struct DemagResult {
    dims: [usize; 3],
    cell: f64,
    mu0: f64,
    energy: f64,
    potential: Vec<f64>,
    charge: Vec<f64>,
}

impl DemagResult {
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// `h_d` along `axis` on the face between cell `(i,j,k)` and its upper
    /// neighbour; `None` on the outer grid boundary.
    pub fn face_field(&self, axis: usize, i: usize, j: usize, k: usize) -> Option<f64> {
        let mut up = [i, j, k];
        up[axis] += 1;
        if up[axis] >= self.dims[axis] {
            return None;
        }
        let a = self.potential[self.idx(i, j, k)];
        let b = self.potential[self.idx(up[0], up[1], up[2])];
        Some(-(b - a) / self.cell)
    }

    /// Face fields averaged to cell centres (one-sided on the outer layer).
    pub fn cell_field(&self) -> Vec<Vec3> {
        let [nx, ny, nz] = self.dims;
        (0..nx * ny * nz)
            .into_par_iter()
            .map(|id| {
                let ijk = [id % nx, (id / nx) % ny, id / (nx * ny)];
                let mut h = Vec3::zeros();
                for d in 0..3 {
                    let upper = self.face_field(d, ijk[0], ijk[1], ijk[2]);
                    let lower = (ijk[d] > 0).then(|| {
                        let mut lo = ijk;
                        lo[d] -= 1;
                        self.face_field(d, lo[0], lo[1], lo[2])
                            .expect("interior face")
                    });
                    h[d] = match (lower, upper) {
                        (Some(a), Some(b)) => 0.5 * (a + b),
                        (Some(a), None) | (None, Some(a)) => a,
                        (None, None) => 0.0,
                    };
                }
                h
            })
            .collect()
    }

    /// `∫ h_d(self)·m(other) = −c³ Σ φ_self ρ_other`.
    pub fn interaction(&self, other: &MagGrid) -> Result<f64> {
        if other.dims != self.dims || other.cell != self.cell {
            return Err(Error::InvalidParameter("grids differ".into()));
        }
        let rho = other.charge();
        Ok(-self.cell.powi(3)
            * self
                .potential
                .iter()
                .zip(&rho)
                .map(|(p, r)| p * r)
                .sum::<f64>())
    }

    /// `−(μ0/2) Σ_faces h·M c³` with face magnetization `M` the mean of the
    /// two adjacent cells; equals [`DemagResult::energy`] up to rounding.
    pub fn energy_from_faces(&self, grid: &MagGrid) -> f64 {
        let [nx, ny, nz] = self.dims;
        let mut s = 0.0;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    for d in 0..3 {
                        if let Some(h) = self.face_field(d, i, j, k) {
                            let mut up = [i, j, k];
                            up[d] += 1;
                            let mf = 0.5
                                * (grid.m[self.idx(i, j, k)][d]
                                    + grid.m[self.idx(up[0], up[1], up[2])][d]);
                            s += h * mf;
                        }
                    }
                }
            }
        }
        -0.5 * self.mu0 * s * self.cell.powi(3)
    }

    /// Largest staggered curl of the face field, relative to `max|h|/c`.
    pub fn max_curl_relative(&self) -> f64 {
        let [nx, ny, nz] = self.dims;
        let f = |d: usize, i: usize, j: usize, k: usize| self.face_field(d, i, j, k).unwrap_or(0.0);
        let mut hmax: f64 = 0.0;
        let mut curl: f64 = 0.0;
        for k in 0..nz.saturating_sub(1) {
            for j in 0..ny.saturating_sub(1) {
                for i in 0..nx.saturating_sub(1) {
                    hmax = hmax
                        .max(f(0, i, j, k).abs())
                        .max(f(1, i, j, k).abs())
                        .max(f(2, i, j, k).abs());
                    let cz =
                        (f(1, i + 1, j, k) - f(1, i, j, k)) - (f(0, i, j + 1, k) - f(0, i, j, k));
                    let cx =
                        (f(2, i, j + 1, k) - f(2, i, j, k)) - (f(1, i, j, k + 1) - f(1, i, j, k));
                    let cy =
                        (f(0, i, j, k + 1) - f(0, i, j, k)) - (f(2, i + 1, j, k) - f(2, i, j, k));
                    curl = curl.max(cx.abs()).max(cy.abs()).max(cz.abs());
                }
            }
        }
        if hmax == 0.0 {
            0.0
        } else {
            curl / hmax
        }
    }

    /// Grid dump of the cell-centred field.
    pub fn to_text(&self) -> String {
        grid_text(self.dims, self.cell, &self.cell_field())
    }
}

fn good_size(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut r = n;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return n;
        }
        n += 1;
    }
}

fn fft_axis(data: &mut [Complex64], dims: [usize; 3], axis: usize, fft: &dyn Fft<f64>) {
    let [nx, ny, nz] = dims;
    let scratch_len = fft.get_inplace_scratch_len();
    match axis {
        0 => data.par_chunks_mut(nx).for_each_init(
            || vec![Complex64::default(); scratch_len],
            |scratch, line| fft.process_with_scratch(line, scratch),
        ),
        1 => data.par_chunks_mut(nx * ny).for_each_init(
            || {
                (
                    vec![Complex64::default(); scratch_len],
                    vec![Complex64::default(); ny],
                )
            },
            |(scratch, line), slab| {
                for i in 0..nx {
                    for j in 0..ny {
                        line[j] = slab[i + nx * j];
                    }
                    fft.process_with_scratch(line, scratch);
                    for j in 0..ny {
                        slab[i + nx * j] = line[j];
                    }
                }
            },
        ),
        _ => {
            let plane = nx * ny;
            let src: &[Complex64] = data;
            let columns: Vec<Vec<Complex64>> = (0..plane)
                .into_par_iter()
                .map_init(
                    || vec![Complex64::default(); scratch_len],
                    |scratch, xy| {
                        let mut line: Vec<Complex64> =
                            (0..nz).map(|k| src[xy + plane * k]).collect();
                        fft.process_with_scratch(&mut line, scratch);
                        line
                    },
                )
                .collect();
            for (xy, line) in columns.into_iter().enumerate() {
                for (k, v) in line.into_iter().enumerate() {
                    data[xy + plane * k] = v;
                }
            }
        }
    }
}

fn fft3(data: &mut [Complex64], dims: [usize; 3], inverse: bool, planner: &mut FftPlanner<f64>) {
    for axis in 0..3 {
        let fft = if inverse {
            planner.plan_fft_inverse(dims[axis])
        } else {
            planner.plan_fft_forward(dims[axis])
        };
        fft_axis(data, dims, axis, fft.as_ref());
    }
}

fn potential_spectral(
    grid: &MagGrid,
    rho: &[f64],
    table: &KernelTable,
    padded: [usize; 3],
) -> Vec<f64> {
    let [px, py, pz] = padded;
    let total = px * py * pz;
    let wrap = |i: usize, p: usize| -> i64 {
        if i <= p / 2 {
            i as i64
        } else {
            i as i64 - p as i64
        }
    };
    let mut kernel: Vec<Complex64> = (0..total)
        .into_par_iter()
        .map(|id| {
            let d = [
                wrap(id % px, px),
                wrap((id / px) % py, py),
                wrap(id / (px * py), pz),
            ];
            Complex64::new(table.get(d), 0.0)
        })
        .collect();
    let [nx, ny, nz] = grid.dims;
    let mut charge = vec![Complex64::default(); total];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                charge[i + px * (j + py * k)] = Complex64::new(rho[i + nx * (j + ny * k)], 0.0);
            }
        }
    }
    let mut planner = FftPlanner::new();
    fft3(&mut kernel, padded, false, &mut planner);
    fft3(&mut charge, padded, false, &mut planner);
    charge
        .par_iter_mut()
        .zip(&kernel)
        .for_each(|(c, g)| *c *= g);
    fft3(&mut charge, padded, true, &mut planner);
    let scale = grid.cell * grid.cell / total as f64;
    let mut phi = vec![0.0; grid.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                phi[i + nx * (j + ny * k)] = charge[i + px * (j + py * k)].re * scale;
            }
        }
    }
    phi
}

fn potential_direct(grid: &MagGrid, rho: &[f64], table: &KernelTable) -> Vec<f64> {
    let sources: Vec<([i64; 3], f64)> = rho
        .iter()
        .enumerate()
        .filter(|(_, &r)| r != 0.0)
        .map(|(id, &r)| (grid.coords(id).map(|v| v as i64), r))
        .collect();
    let c2 = grid.cell * grid.cell;
    (0..grid.len())
        .into_par_iter()
        .map(|id| {
            let t = grid.coords(id).map(|v| v as i64);
            sources
                .iter()
                .map(|(s, r)| table.get([t[0] - s[0], t[1] - s[1], t[2] - s[2]]) * r)
                .sum::<f64>()
                * c2
        })
        .collect()
}

/// Potential, field and energy of the grid magnetization.
pub fn solve(grid: &MagGrid, cfg: &DemagConfig) -> Result<DemagResult> {
    if !(cfg.mu0.is_finite() && cfg.mu0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mu0 = {} must be > 0",
            cfg.mu0
        )));
    }
    let rho = grid.charge();
    let potential = match cfg.method {
        Method::Spectral => {
            let padded = grid.dims.map(|d| good_size(2 * d));
            let table = KernelTable::new(padded.map(|p| p / 2));
            potential_spectral(grid, &rho, &table, padded)
        }
        Method::Direct => {
            if grid.len() > cfg.cell_budget {
                return Err(Error::CellBudgetExceeded {
                    cells: grid.len(),
                    budget: cfg.cell_budget,
                });
            }
            let table = KernelTable::new(grid.dims.map(|d| d - 1));
            potential_direct(grid, &rho, &table)
        }
    };
    let energy = 0.5
        * cfg.mu0
        * grid.cell.powi(3)
        * potential.iter().zip(&rho).map(|(p, r)| p * r).sum::<f64>();
    Ok(DemagResult {
        dims: grid.dims,
        cell: grid.cell,
        mu0: cfg.mu0,
        energy,
        potential,
        charge: rho,
    })
}

impl DemagResult {
    pub fn charge(&self) -> &[f64] {
        &self.charge
    }
}

/// `E_{n,d}(μ)`: project, rasterize at cell centres, solve.
pub fn demag_discrete(
    field: &SpinField<'_>,
    decomp: &TetDecomposition,
    cfg: &DemagConfig,
) -> Result<f64> {
    let pwl = project(field, decomp)?;
    let grid = rasterize(&pwl, cfg)?;
    Ok(solve(&grid, cfg)?.energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_lattice, decompose};

    #[test]
    fn self_cell_integral() {
        // ∫_{[-1/2,1/2]³} dr/|r| = 2.380077...
        let g = unit_cell_kernel([0, 0, 0]) * 4.0 * PI;
        assert!((g - 2.380_077_363_979_553).abs() < 1e-12, "{g}");
    }

    #[test]
    fn kernel_matches_point_charge_far_away() {
        for d in [[5, 0, 0], [3, 4, 2], [10, 10, 10]] {
            let r = Vec3::new(d[0] as f64, d[1] as f64, d[2] as f64).norm();
            let g = unit_cell_kernel(d);
            assert!((g * 4.0 * PI * r - 1.0).abs() < 2e-3 / (r * r));
        }
    }

    #[test]
    fn closed_form_and_gauss_agree_at_the_seam() {
        let a = unit_cell_kernel([16, 3, 1]);
        let r = Vec3::new(17.0, 3.0, 1.0);
        let b = unit_cell_kernel([17, 3, 1]);
        // smooth decay across the switch
        assert!((b / a - Vec3::new(16.0, 3.0, 1.0).norm() / r.norm()).abs() < 1e-5);
    }

    #[test]
    fn zero_magnetization() {
        let g = MagGrid::new([4, 4, 4], 0.25, Vec3::zeros()).unwrap();
        let r = solve(&g, &DemagConfig::default()).unwrap();
        assert_eq!(r.energy(), 0.0);
        assert!(r.cell_field().iter().all(|h| *h == Vec3::zeros()));
    }

    #[test]
    fn single_cell_spectral_equals_direct() {
        let mut g = MagGrid::new([3, 3, 3], 0.1, Vec3::zeros()).unwrap();
        let id = g.index(1, 1, 1);
        g.values_mut()[id] = Vec3::new(0.3, -0.5, 0.8);
        let s = solve(&g, &DemagConfig::default()).unwrap();
        let d = solve(
            &g,
            &DemagConfig {
                method: Method::Direct,
                ..DemagConfig::default()
            },
        )
        .unwrap();
        assert!(s.energy() > 0.0);
        assert!((s.energy() - d.energy()).abs() <= 1e-12 * d.energy());
        assert!((s.energy() - s.energy_from_faces(&g)).abs() <= 1e-12 * s.energy());
    }

    #[test]
    fn direct_budget_is_enforced() {
        let g = MagGrid::new([10, 10, 10], 0.1, Vec3::zeros()).unwrap();
        let cfg = DemagConfig {
            method: Method::Direct,
            cell_budget: 999,
            ..DemagConfig::default()
        };
        assert_eq!(
            solve(&g, &cfg).unwrap_err(),
            Error::CellBudgetExceeded {
                cells: 1000,
                budget: 999
            }
        );
    }

    #[test]
    fn grid_text_round_trip() {
        let mut g = MagGrid::new([2, 1, 3], 0.5, Vec3::zeros()).unwrap();
        g.values_mut()[4] = Vec3::new(1.0, -2.0, 0.25);
        let dump = parse_grid_text(&g.to_text()).unwrap();
        assert_eq!(dump.dims, [2, 1, 3]);
        assert_eq!(dump.spacing, [0.5; 3]);
        assert_eq!(dump.values, g.values());
        assert!(parse_grid_text("2 2 2 1 1 1\n0 0 0\n").is_err());
    }

    #[test]
    fn rasterize_constant_box() {
        let l = build_lattice(&DomainSpec::unit_box(), 1.0, 4).unwrap();
        let dec = decompose(&l);
        let s = SpinField::uniform(&l, Vec3::z());
        let pwl = project(&s, &dec).unwrap();
        let g = rasterize(
            &pwl,
            &DemagConfig {
                cells: 8,
                ..DemagConfig::default()
            },
        )
        .unwrap();
        assert_eq!(g.dims(), [10, 10, 10]);
        for id in 0..g.len() {
            let c = g.center(id);
            let inside = c.iter().all(|v| v.abs() < 0.5);
            assert_eq!(
                g.values()[id],
                if inside { Vec3::z() } else { Vec3::zeros() }
            );
        }
        let coarse = DemagConfig {
            cells: 2,
            ..DemagConfig::default()
        };
        assert!(matches!(
            rasterize(&pwl, &coarse),
            Err(Error::Undersampled { .. })
        ));
    }

    #[test]
    fn cube_energy_is_rotation_invariant() {
        let bx = DomainSpec::unit_box();
        let gz = rasterize_smooth(&SmoothField::constant(Vec3::z()), &bx, 8, 1).unwrap();
        let gx = rasterize_smooth(&SmoothField::constant(Vec3::x()), &bx, 8, 1).unwrap();
        let cfg = DemagConfig::default();
        let (ez, ex) = (
            solve(&gz, &cfg).unwrap().energy(),
            solve(&gx, &cfg).unwrap().energy(),
        );
        assert!((ez - ex).abs() < 1e-9 * ez);
        // uniformly magnetized cube: demagnetizing factor 1/3, approached at
        // first order in the cell size
        let g16 = rasterize_smooth(&SmoothField::constant(Vec3::z()), &bx, 16, 1).unwrap();
        let e16 = solve(&g16, &cfg).unwrap().energy();
        let (err8, err16) = ((1.0 - 6.0 * ez).abs(), (1.0 - 6.0 * e16).abs());
        assert!(err16 < 0.6 * err8 && err16 < 0.11, "{ez} {e16}");
    }
}
