//! Released drug tracked as a cell-volume field on a uniform grid.
//!
//! Transport is explicit 5-point diffusion in flux form, so the grid total
//! only changes by deposits. Near an active focus the diffusivity is raised
//! in proportion to the local acoustic pressure, standing in for acoustic
//! streaming.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::environment::Region;
use crate::error::{OutOfDomain, UnstableStep, ValidationError};
use crate::geometry::Rect;
use crate::hifu::{focal_pressure, pressure_at, HifuConfig, HifuState};
use crate::scalar::{Scalar, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DyeParams<S: Scalar> {
    /// Cell size, m.
    pub pitch: S,
    /// m²/s
    pub diffusion_coefficient: S,
    /// Extra diffusivity per pascal of local pressure, m²/(s·Pa).
    pub streaming_gain: S,
    /// Simulated time between transport updates, s.
    pub step_interval: S,
}

impl<S: Scalar> Default for DyeParams<S> {
    fn default() -> Self {
        Self { pitch: S::lit(5.0e-4), diffusion_coefficient: S::lit(1.0e-8), streaming_gain: S::lit(4.0e-15), step_interval: S::lit(0.1) }
    }
}

impl<S: Scalar> DyeParams<S> {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.pitch > S::zero()) {
            return Err(ValidationError::new("dye.pitch", "must be > 0"));
        }
        if !(self.diffusion_coefficient >= S::zero()) {
            return Err(ValidationError::new("dye.diffusion_coefficient", "must be >= 0"));
        }
        if !(self.streaming_gain >= S::zero()) {
            return Err(ValidationError::new("dye.streaming_gain", "must be >= 0"));
        }
        if !(self.step_interval > S::zero()) {
            return Err(ValidationError::new("dye.step_interval", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyeField<S: Scalar> {
    pub params: DyeParams<S>,
    /// Lower-left corner of cell (0, 0).
    pub origin: Vec2<S>,
    pub nx: usize,
    pub ny: usize,
    /// Drug volume per cell (m³), row-major with `x` fastest.
    pub cells: Vec<S>,
    scratch: Vec<S>,
}

impl<S: Scalar> DyeField<S> {
    /// Empty field covering `domain` with square cells of `params.pitch`.
    pub fn covering(domain: Rect<S>, params: DyeParams<S>) -> Self {
        let nx = (domain.width() / params.pitch).ceil().to_usize().unwrap_or(1).max(1);
        let ny = (domain.height() / params.pitch).ceil().to_usize().unwrap_or(1).max(1);
        Self { params, origin: domain.min, nx, ny, cells: vec![S::zero(); nx * ny], scratch: Vec::new() }
    }

    pub fn domain(&self) -> Rect<S> {
        let size = Vec2::new(S::lit(self.nx as f64), S::lit(self.ny as f64)) * self.params.pitch;
        Rect::new(self.origin, self.origin + size)
    }

    pub fn cell_of(&self, p: Vec2<S>) -> Option<(usize, usize)> {
        let rel = (p - self.origin) / self.params.pitch;
        if !(rel.x >= S::zero() && rel.y >= S::zero()) {
            return None;
        }
        let (i, j) = (rel.x.floor().to_usize()?, rel.y.floor().to_usize()?);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2<S> {
        let half = S::lit(0.5);
        self.origin + Vec2::new(S::lit(i as f64) + half, S::lit(j as f64) + half) * self.params.pitch
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> S {
        self.cells[j * self.nx + i]
    }

    pub fn total(&self) -> S {
        self.cells.iter().copied().sum()
    }

    /// Largest stable explicit step for the given peak streaming pressure.
    pub fn stability_limit(&self, peak_pressure: S) -> S {
        let d_max = self.params.diffusion_coefficient + self.params.streaming_gain * peak_pressure;
        if d_max > S::zero() {
            self.params.pitch * self.params.pitch / (S::lit(4.0) * d_max)
        } else {
            S::infinity()
        }
    }

    /// Writes the grid as CSV, one row per `y` index from the bottom.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for j in 0..self.ny {
            let row: Vec<String> = (0..self.nx).map(|i| format!("{}", self.at(i, j))).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Adds `volume` to the cell containing `position`.
pub fn deposit<S: Scalar>(field: &mut DyeField<S>, position: Vec2<S>, volume: S) -> Result<(), OutOfDomain> {
    let (i, j) = field
        .cell_of(position)
        .ok_or(OutOfDomain { x: position.x.as_f64(), y: position.y.as_f64() })?;
    let nx = field.nx;
    field.cells[j * nx + i] += volume;
    Ok(())
}

/// One explicit diffusion step of length `dt` with no-flux borders.
pub fn diffuse_advect_step<S: Scalar>(
    field: &mut DyeField<S>,
    hifu: &HifuState<S>,
    hifu_cfg: &HifuConfig<S>,
    dt: S,
) -> Result<(), UnstableStep> {
    let limit = field.stability_limit(focal_pressure(hifu, hifu_cfg));
    if !(dt > S::zero()) || dt > limit {
        return Err(UnstableStep { dt: dt.as_f64(), limit: limit.as_f64() });
    }
    let (nx, ny) = (field.nx, field.ny);
    let base = field.params.diffusion_coefficient;
    let gain = field.params.streaming_gain;
    let streaming = hifu.enabled && gain > S::zero() && focal_pressure(hifu, hifu_cfg) > S::zero();
    let diffusivity: Option<Vec<S>> = streaming.then(|| {
        let mut d = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                d.push(base + gain * pressure_at(field.cell_center(i, j), hifu, hifu_cfg));
            }
        }
        d
    });
    let coeff = dt / (field.params.pitch * field.params.pitch);
    let half = S::lit(0.5);
    let face = |a: usize, b: usize| match &diffusivity {
        Some(d) => (d[a] + d[b]) * half * coeff,
        None => base * coeff,
    };

    let mut next = std::mem::take(&mut field.scratch);
    next.clear();
    next.extend_from_slice(&field.cells);
    let c = &field.cells;
    for j in 0..ny {
        for i in 0..nx {
            let a = j * nx + i;
            if i + 1 < nx {
                let b = a + 1;
                let flux = face(a, b) * (c[b] - c[a]);
                next[a] += flux;
                next[b] -= flux;
            }
            if j + 1 < ny {
                let b = a + nx;
                let flux = face(a, b) * (c[b] - c[a]);
                next[a] += flux;
                next[b] -= flux;
            }
        }
    }
    field.scratch = std::mem::replace(&mut field.cells, next);
    Ok(())
}

/// Drug volume in cells whose centres fall inside `region`.
pub fn delivered_volume<S: Scalar>(field: &DyeField<S>, region: &Region<S>) -> S {
    let mut sum = S::zero();
    for j in 0..field.ny {
        for i in 0..field.nx {
            let v = field.at(i, j);
            if v != S::zero() && region.contains(field.cell_center(i, j)) {
                sum += v;
            }
        }
    }
    sum
}
