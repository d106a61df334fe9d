//! Height fields, gradients and the orthographic Lambertian renderer.
//!
//! Light is frontal and the camera orthographic, so brightness depends on the
//! surface only through `|grad u|`:
//!
//! ```text
//! E = E_max / sqrt(1 + p^2 + q^2),   (p, q) = grad u
//! ```
//!
//! Every optical constant (aperture, focal length, albedo, source power) is
//! folded into `E_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};
use crate::grid::{Field, GridSpec, Pixel};
use crate::scenes;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    pub grid: GridSpec,
    pub z: Field<f64>,
}

impl HeightField {
    pub fn new(grid: GridSpec, z: Field<f64>) -> Result<Self> {
        grid.validate()?;
        z.check_shape(&grid)?;
        if !z.all_finite() {
            return Err(SfsError::InvalidInput(
                "height field contains non-finite values".into(),
            ));
        }
        Ok(HeightField { grid, z })
    }

    /// Samples `f(x, y)` at every pixel centre.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        grid.validate()?;
        let z = Field::from_fn(grid.height, grid.width, |r, c| f(grid.x(c), grid.y(r)));
        Self::new(grid, z)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Result<Self> {
        Self::new(grid, Field::filled(grid.height, grid.width, value))
    }

    pub fn at(&self, p: Pixel) -> f64 {
        self.z[p]
    }

    pub fn negate(&self) -> HeightField {
        HeightField {
            grid: self.grid,
            z: self.z.map(|v| -v),
        }
    }

    pub fn shifted(&self, offset: f64) -> HeightField {
        HeightField {
            grid: self.grid,
            z: self.z.map(|v| v + offset),
        }
    }

    pub fn depth_range(&self) -> f64 {
        self.z.max_value() - self.z.min_value()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub grid: GridSpec,
    pub p: Field<f64>,
    pub q: Field<f64>,
}

impl GradientField {
    pub fn magnitude(&self) -> Field<f64> {
        Field::from_fn(self.grid.height, self.grid.width, |r, c| {
            self.p[(r, c)].hypot(self.q[(r, c)])
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrradianceImage {
    pub grid: GridSpec,
    pub e: Field<f64>,
    pub e_max: f64,
}

impl IrradianceImage {
    pub fn new(grid: GridSpec, e: Field<f64>, e_max: f64) -> Result<Self> {
        grid.validate()?;
        e.check_shape(&grid)?;
        if !(e_max > 0.0 && e_max <= 1.0) {
            return Err(SfsError::InvalidInput(format!(
                "e_max must lie in (0, 1], got {e_max}"
            )));
        }
        // Loaded 8-bit images may overshoot by up to one quantisation step.
        let slack = 1.0 / 255.0;
        if let Some((p, v)) = e
            .indexed()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > e_max + slack)
        {
            return Err(SfsError::InvalidInput(format!(
                "brightness {v} at {p:?} outside [0, e_max={e_max}]"
            )));
        }
        Ok(IrradianceImage { grid, e, e_max })
    }

    /// Builds an image whose `e_max` is its own brightest pixel.
    pub fn from_observed(grid: GridSpec, e: Field<f64>) -> Result<Self> {
        let e_max = e.max_value();
        Self::new(grid, e, e_max)
    }

    pub fn at(&self, p: Pixel) -> f64 {
        self.e[p]
    }
}

/// Synthetic surface families understood by [`make_surface`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Bump,
    SiltLike,
    TwoBump,
    FaceLike,
    Chain,
    ThreeBump,
    Csv,
}

impl SurfaceKind {
    pub const ALL: [SurfaceKind; 7] = [
        SurfaceKind::Bump,
        SurfaceKind::SiltLike,
        SurfaceKind::TwoBump,
        SurfaceKind::FaceLike,
        SurfaceKind::Chain,
        SurfaceKind::ThreeBump,
        SurfaceKind::Csv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::Bump => "bump",
            SurfaceKind::SiltLike => "silt_like",
            SurfaceKind::TwoBump => "two_bump",
            SurfaceKind::FaceLike => "face_like",
            SurfaceKind::Chain => "chain",
            SurfaceKind::ThreeBump => "three_bump",
            SurfaceKind::Csv => "csv",
        }
    }

    pub fn names() -> String {
        Self::ALL
            .iter()
            .map(|k| k.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl std::str::FromStr for SurfaceKind {
    type Err = SfsError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| SfsError::UnknownKind(s.to_string(), Self::names()))
    }
}

/// Samples a synthetic surface.
///
/// `params[0]` is a vertical scale for the analytic kinds (default 1). For
/// [`SurfaceKind::Csv`] use [`crate::io::read_height_csv`] instead; this
/// function reports an error because a CSV surface is identified by a path.
pub fn make_surface(kind: SurfaceKind, params: &[f64], grid: GridSpec) -> Result<HeightField> {
    let scale = params.first().copied().unwrap_or(1.0);
    if !scale.is_finite() {
        return Err(SfsError::InvalidInput(format!("non-finite scale {scale}")));
    }
    let f: fn(f64, f64) -> f64 = match kind {
        SurfaceKind::Bump => scenes::bump,
        SurfaceKind::SiltLike => scenes::silt_like,
        SurfaceKind::TwoBump => scenes::two_bump,
        SurfaceKind::FaceLike => scenes::face_like,
        SurfaceKind::Chain => scenes::chain,
        SurfaceKind::ThreeBump => scenes::three_bump,
        SurfaceKind::Csv => {
            return Err(SfsError::InvalidInput(
                "csv surfaces are loaded with read_height_csv(path)".into(),
            ))
        }
    };
    HeightField::from_fn(grid, |x, y| scale * f(x, y))
}

/// Central differences inside, one-sided differences on the outer ring.
pub fn gradient(h: &HeightField) -> GradientField {
    let g = h.grid;
    let (rows, cols) = (g.height, g.width);
    let (hx, hy) = (g.hx(), g.hy());
    let z = &h.z;
    let p = Field::from_fn(rows, cols, |r, c| {
        if c == 0 {
            (z[(r, 1)] - z[(r, 0)]) / hx
        } else if c == cols - 1 {
            (z[(r, c)] - z[(r, c - 1)]) / hx
        } else {
            (z[(r, c + 1)] - z[(r, c - 1)]) / (2.0 * hx)
        }
    });
    let q = Field::from_fn(rows, cols, |r, c| {
        if r == 0 {
            (z[(1, c)] - z[(0, c)]) / hy
        } else if r == rows - 1 {
            (z[(r, c)] - z[(r - 1, c)]) / hy
        } else {
            (z[(r + 1, c)] - z[(r - 1, c)]) / (2.0 * hy)
        }
    });
    GradientField { grid: g, p, q }
}

pub fn render_lambertian(h: &HeightField, e_max: f64) -> Result<IrradianceImage> {
    if !(e_max > 0.0 && e_max <= 1.0) {
        return Err(SfsError::InvalidInput(format!(
            "e_max must lie in (0, 1], got {e_max}"
        )));
    }
    let grad = gradient(h);
    let e = Field::from_fn(h.grid.height, h.grid.width, |r, c| {
        let (p, q) = (grad.p[(r, c)], grad.q[(r, c)]);
        e_max / (1.0 + p * p + q * q).sqrt()
    });
    IrradianceImage::new(h.grid, e, e_max)
}

/// Rounds every pixel to the nearest 8-bit level, as a PGM round trip would.
pub fn quantize_8bit(img: &IrradianceImage) -> Result<IrradianceImage> {
    let e = img.e.map(|v| (v * 255.0).round().clamp(0.0, 255.0) / 255.0);
    IrradianceImage::from_observed(img.grid, e)
}
