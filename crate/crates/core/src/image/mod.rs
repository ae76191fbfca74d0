//! Images as samples of `L^2(R^2)` functions on a uniform square grid.
//!
//! A grid of resolution `n` and half width `L` samples `[-L, L]^2` at
//! `x_i = -L + i h`, `h = 2L / (n - 1)`, stored row-major with `y` as the
//! row index. Values outside the grid read as zero.

mod io;
mod resample;
mod separable;
mod synth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupElement, LieAlgebraElement};

pub use io::{read_grid, read_grid_from, write_csv, write_grid, write_grid_to, GRID_MAGIC};
pub(crate) use resample::resample_values;
pub use resample::{act, Interpolation};
pub(crate) use separable::translation_average;
pub use synth::{synthesize, ImageSpec};

/// Values below this fraction of `max |f|` count as outside the support.
pub const SIGNIFICANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGeometry {
    pub half_width: f64,
    pub resolution: usize,
}

impl Default for GridGeometry {
    fn default() -> Self {
        Self {
            half_width: 6.0,
            resolution: 512,
        }
    }
}

impl GridGeometry {
    pub fn new(half_width: f64, resolution: usize) -> Result<Self> {
        let g = Self { half_width, resolution };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid half width must be positive, got {}",
                self.half_width
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.resolution - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn pixel_count(&self) -> usize {
        self.resolution * self.resolution
    }

    /// Quadrature weight of one sample.
    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }
}

/// Extent of the significant part of an image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Support {
    /// `[xmin, xmax, ymin, ymax]` in plane units.
    pub bbox: [f64; 4],
    /// Distance from the origin bounding every significant sample.
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    geometry: GridGeometry,
    values: Vec<f64>,
    /// Inclusive index box `[i0, i1, j0, j1]` of nonzero samples.
    nonzero: Option<[usize; 4]>,
    support: Option<Support>,
    max_abs: f64,
}

impl ImageGrid {
    pub fn zeros(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            values: vec![0.0; geometry.pixel_count()],
            nonzero: None,
            support: None,
            max_abs: 0.0,
        }
    }

    pub fn from_values(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.pixel_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                geometry.pixel_count(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!("non-finite sample {v}")));
        }
        Ok(Self::build(geometry, values))
    }

    /// Samples `f(x, y)` at every grid node.
    pub fn from_fn<F>(geometry: GridGeometry, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        geometry.validate()?;
        let n = geometry.resolution;
        let mut values = vec![0.0; geometry.pixel_count()];
        values.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            let y = geometry.coord(j);
            for (i, v) in row.iter_mut().enumerate() {
                *v = f(geometry.coord(i), y);
            }
        });
        Self::from_values(geometry, values)
    }

    fn build(geometry: GridGeometry, values: Vec<f64>) -> Self {
        let n = geometry.resolution;
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut nonzero: Option<[usize; 4]> = None;
        let mut sig: Option<[usize; 4]> = None;
        let mut r2 = 0.0f64;
        if max_abs > 0.0 {
            let thr = SIGNIFICANCE * max_abs;
            let grow = |b: &mut Option<[usize; 4]>, i0: usize, i1: usize, j: usize| {
                let b = b.get_or_insert([i0, i1, j, j]);
                b[0] = b[0].min(i0);
                b[1] = b[1].max(i1);
                b[3] = j;
            };
            for j in 0..n {
                let row = &values[j * n..(j + 1) * n];
                let Some(first) = row.iter().position(|v| *v != 0.0) else {
                    continue;
                };
                let last = row.iter().rposition(|v| *v != 0.0).unwrap_or(first);
                grow(&mut nonzero, first, last, j);
                let Some(sf) = row[first..=last].iter().position(|v| v.abs() >= thr) else {
                    continue;
                };
                let sl = row[first..=last].iter().rposition(|v| v.abs() >= thr).unwrap_or(sf);
                let (sf, sl) = (first + sf, first + sl);
                grow(&mut sig, sf, sl, j);
                // Farthest significant sample of this row from the origin.
                let y = geometry.coord(j);
                for i in [sf, sl] {
                    let x = geometry.coord(i);
                    r2 = r2.max(x * x + y * y);
                }
            }
        }
        let support = sig.map(|b| Support {
            bbox: [
                geometry.coord(b[0]),
                geometry.coord(b[1]),
                geometry.coord(b[2]),
                geometry.coord(b[3]),
            ],
            radius: r2.sqrt(),
        });
        Self {
            geometry,
            values,
            nonzero,
            support,
            max_abs,
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn resolution(&self) -> usize {
        self.geometry.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.geometry.resolution + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    pub fn support(&self) -> Option<Support> {
        self.support
    }

    pub(crate) fn nonzero_box(&self) -> Option<[usize; 4]> {
        self.nonzero
    }

    /// Distance from the significant support to the grid boundary; the full
    /// half width for an all-zero image.
    pub fn clear_margin(&self) -> f64 {
        let l = self.geometry.half_width;
        match self.support {
            None => l,
            Some(s) => (l + s.bbox[0]).min(l - s.bbox[1]).min(l + s.bbox[2]).min(l - s.bbox[3]),
        }
    }

    /// The support-margin flag: every sample within `margin` of the boundary
    /// is below `SIGNIFICANCE * max |f|`.
    pub fn margin_ok(&self, margin: f64) -> bool {
        self.clear_margin() >= margin
    }

    /// Checks that `g` keeps the significant support inside the grid.
    pub fn check_action(&self, g: &GroupElement) -> Result<()> {
        let Some(s) = self.support else {
            return Ok(());
        };
        if g.is_identity() {
            return Ok(());
        }
        let l = self.geometry.half_width;
        let corners = [
            [s.bbox[0], s.bbox[2]],
            [s.bbox[1], s.bbox[2]],
            [s.bbox[0], s.bbox[3]],
            [s.bbox[1], s.bbox[3]],
        ];
        let corner_reach = corners
            .iter()
            .map(|c| {
                let p = g.apply(*c);
                p[0].abs().max(p[1].abs())
            })
            .fold(0.0f64, f64::max);
        let mut reach = corner_reach;
        if g.group().has_rotation() || g.group() == crate::group::GroupId::Translations {
            // The support lies in a disc about the origin, moved rigidly.
            let disc_reach = g.tx().abs().max(g.ty().abs()) + s.radius;
            reach = reach.min(disc_reach);
        }
        if reach <= l {
            Ok(())
        } else {
            Err(Error::DegenerateInput(format!(
                "support-margin violation: transform pushes the support {:.4} past the grid \
                 boundary (clear margin {:.4}, half width {l})",
                reach - l,
                self.clear_margin()
            )))
        }
    }

    pub(crate) fn check_geometry(&self, other: &ImageGrid) -> Result<()> {
        if self.geometry == other.geometry {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "grid geometry mismatch: {:?} vs {:?}",
                self.geometry, other.geometry
            )))
        }
    }

    /// `h^2 * sum f_ij g_ij`.
    pub fn inner(&self, other: &ImageGrid) -> Result<f64> {
        self.check_geometry(other)?;
        Ok(self.geometry.cell_area() * pairwise_dot(&self.values, &other.values))
    }

    pub fn norm2(&self) -> f64 {
        (self.geometry.cell_area() * pairwise_dot(&self.values, &self.values)).sqrt()
    }

    pub fn scale(&self, c: f64) -> ImageGrid {
        Self::build(self.geometry, self.values.iter().map(|v| c * v).collect())
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &ImageGrid, b: f64) -> Result<ImageGrid> {
        self.check_geometry(other)?;
        Ok(Self::build(
            self.geometry,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }

    pub fn add(&self, other: &ImageGrid) -> Result<ImageGrid> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &ImageGrid) -> Result<ImageGrid> {
        self.combine(1.0, other, -1.0)
    }

    pub fn distance(&self, other: &ImageGrid) -> Result<f64> {
        self.check_geometry(other)?;
        let d: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok((self.geometry.cell_area() * pairwise_dot(&d, &d)).sqrt())
    }

    /// Sum of images with a fixed pairwise association order.
    pub(crate) fn sum_in_place(acc: &mut [f64], other: &[f64]) {
        for (a, b) in acc.iter_mut().zip(other) {
            *a += b;
        }
    }

    pub(crate) fn from_raw(geometry: GridGeometry, values: Vec<f64>) -> ImageGrid {
        Self::build(geometry, values)
    }
}

/// Inclusive index box `[i0, i1, j0, j1]` of the nonzero samples.
pub(crate) fn nonzero_box_of(values: &[f64], n: usize) -> Option<[usize; 4]> {
    let mut b: Option<[usize; 4]> = None;
    for (j, row) in values.chunks_exact(n).enumerate() {
        let Some(first) = row.iter().position(|v| *v != 0.0) else {
            continue;
        };
        let last = row.iter().rposition(|v| *v != 0.0).unwrap_or(first);
        let b = b.get_or_insert([first, last, j, j]);
        b[0] = b[0].min(first);
        b[1] = b[1].max(last);
        b[3] = j;
    }
    b
}

/// Dot product with a fixed pairwise summation tree.
pub(crate) fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    const LEAF: usize = 256;
    if a.len() <= LEAF {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// `(df/dx, df/dy)` on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneVectorField {
    pub x: ImageGrid,
    pub y: ImageGrid,
}

/// Finite-difference order for gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DifferenceOrder {
    /// Central differences inside, one-sided first order at the boundary.
    Second,
    /// Five-point central stencil inside, falling back to `Second` near the
    /// boundary. Used to estimate the truncation error of `Second`.
    Fourth,
}

pub fn gradient(f: &ImageGrid) -> PlaneVectorField {
    gradient_with(f, DifferenceOrder::Second)
}

pub fn gradient_with(f: &ImageGrid, order: DifferenceOrder) -> PlaneVectorField {
    let geom = f.geometry;
    let n = geom.resolution;
    let h = geom.spacing();
    let v = &f.values;
    let deriv = |at: &dyn Fn(usize) -> f64, k: usize| -> f64 {
        if k == 0 {
            (at(1) - at(0)) / h
        } else if k == n - 1 {
            (at(n - 1) - at(n - 2)) / h
        } else if order == DifferenceOrder::Fourth && k >= 2 && k + 2 < n {
            (at(k - 2) - 8.0 * at(k - 1) + 8.0 * at(k + 1) - at(k + 2)) / (12.0 * h)
        } else {
            (at(k + 1) - at(k - 1)) / (2.0 * h)
        }
    };
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    gx.par_chunks_mut(n)
        .zip(gy.par_chunks_mut(n))
        .enumerate()
        .for_each(|(j, (rx, ry))| {
            for i in 0..n {
                rx[i] = deriv(&|k| v[j * n + k], i);
                ry[i] = deriv(&|k| v[k * n + i], j);
            }
        });
    PlaneVectorField {
        x: ImageGrid::build(geom, gx),
        y: ImageGrid::build(geom, gy),
    }
}

/// `X_xi(f)(x) = d/dt f(exp(-t xi) x)` at `t = 0`, i.e.
/// `-<grad f(x), xi . (x, 1)>`, with the fourth-order interior stencil.
pub fn generator_field(xi: &LieAlgebraElement, f: &ImageGrid) -> ImageGrid {
    generator_field_with(xi, f, DifferenceOrder::Fourth)
}

pub fn generator_field_with(xi: &LieAlgebraElement, f: &ImageGrid, order: DifferenceOrder) -> ImageGrid {
    let geom = f.geometry;
    if xi.is_zero() {
        return ImageGrid::zeros(geom);
    }
    let grad = gradient_with(f, order);
    let n = geom.resolution;
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        let y = geom.coord(j);
        for (i, o) in row.iter_mut().enumerate() {
            let vel = xi.velocity(geom.coord(i), y);
            let k = j * n + i;
            *o = -(grad.x.values[k] * vel[0] + grad.y.values[k] * vel[1]);
        }
    });
    ImageGrid::build(geom, out)
}
