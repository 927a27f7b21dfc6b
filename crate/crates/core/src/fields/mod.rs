//! Grid-field data model, LR/HR pair construction, quality metrics,
//! classical interpolation baselines, and dataset file IO.

mod interp;
mod metrics;
mod sfb;

pub use interp::{interp_baseline, InterpMethod};
pub use metrics::{mse, psnr, ssim};
pub use sfb::{read_sfb, write_sfb};

use rand::Rng;

use crate::error::{FsrError, Result};
use crate::scalar::Scalar;
use crate::spectral;
use crate::tensor::Tensor;

/// Axis-aligned domain box. Fields default to `[-1, 1]^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl DomainBox {
    pub fn unit() -> Self {
        DomainBox {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -1.0,
            y_max: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DomainBox {
            x_min: self.x_min * factor,
            x_max: self.x_max * factor,
            y_min: self.y_min * factor,
            y_max: self.y_max * factor,
        }
    }
}

impl Default for DomainBox {
    fn default() -> Self {
        Self::unit()
    }
}

/// Values of a function sampled at the cell centers of a regular grid.
/// Storage is `(channels, n_y, n_x)`; centers sit at `x_min + (i + 0.5) dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField<T> {
    values: Tensor<T>,
    domain: DomainBox,
}

impl<T: Scalar> GridField<T> {
    pub fn new(values: Tensor<T>, domain: DomainBox) -> Result<Self> {
        if values.shape().len() != 3 {
            return Err(FsrError::invalid(
                "grid-field",
                format!("expected (c, n_y, n_x) values, got {:?}", values.shape()),
            ));
        }
        if domain.width() <= 0.0 || domain.height() <= 0.0 {
            return Err(FsrError::invalid(
                "grid-field",
                "domain box must have positive extent",
            ));
        }
        Ok(GridField { values, domain })
    }

    /// Single-channel field on the unit box.
    pub fn from_slab(slab: Tensor<T>) -> Result<Self> {
        let (h, w) = match slab.shape() {
            [h, w] => (*h, *w),
            [1, h, w] => (*h, *w),
            s => {
                return Err(FsrError::invalid(
                    "grid-field",
                    format!("expected 2d slab, got {:?}", s),
                ))
            }
        };
        GridField::new(slab.reshaped(&[1, h, w])?, DomainBox::unit())
    }

    pub fn values(&self) -> &Tensor<T> {
        &self.values
    }

    pub fn into_values(self) -> Tensor<T> {
        self.values
    }

    pub fn domain(&self) -> DomainBox {
        self.domain
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    /// `(n_y, n_x)`.
    pub fn extents(&self) -> (usize, usize) {
        (self.values.shape()[1], self.values.shape()[2])
    }

    pub fn dx(&self) -> f64 {
        self.domain.width() / self.values.shape()[2] as f64
    }

    pub fn dy(&self) -> f64 {
        self.domain.height() / self.values.shape()[1] as f64
    }

    /// Center coordinate of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.domain.x_min + (col as f64 + 0.5) * self.dx(),
            self.domain.y_min + (row as f64 + 0.5) * self.dy(),
        )
    }

    pub fn channel_slab(&self, c: usize) -> Tensor<T> {
        let (ny, nx) = self.extents();
        let data = self.values.data()[c * ny * nx..(c + 1) * ny * nx].to_vec();
        Tensor::new(vec![ny, nx], data).expect("slab extraction")
    }

    pub fn cast<U: Scalar>(&self) -> GridField<U> {
        GridField {
            values: self.values.cast(),
            domain: self.domain,
        }
    }
}

/// A low/high resolution training pair over the same domain box.
#[derive(Clone, Debug)]
pub struct SRPair<T> {
    pub lr: GridField<T>,
    pub hr: GridField<T>,
    pub scale: f64,
}

/// How HR fields are degraded to LR inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degradation {
    /// Fourier truncation; exact inverse exists for band-limited fields.
    Spectral,
    /// Catmull-Rom resampling, for robustness experiments.
    Bicubic,
}

impl Degradation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Degradation::Spectral),
            "bicubic" => Ok(Degradation::Bicubic),
            other => Err(FsrError::Config(format!("unknown degradation '{}'", other))),
        }
    }
}

/// Build an LR/HR pair by downsampling `hr` by real-valued factor `s >= 1`.
/// LR extents are `round(hr / s)` and must stay at least 8.
pub fn make_pair<T: Scalar>(hr: &GridField<T>, s: f64, method: Degradation) -> Result<SRPair<T>> {
    if s < 1.0 {
        return Err(FsrError::invalid(
            "make-pair",
            format!("scale must be >= 1, got {}", s),
        ));
    }
    let (ny, nx) = hr.extents();
    let lr_ny = (ny as f64 / s).round() as usize;
    let lr_nx = (nx as f64 / s).round() as usize;
    if lr_ny < 8 || lr_nx < 8 {
        return Err(FsrError::invalid(
            "make-pair",
            format!("LR extents {}x{} below the minimum of 8", lr_ny, lr_nx),
        ));
    }
    let lr = if lr_ny == ny && lr_nx == nx {
        hr.clone()
    } else {
        match method {
            Degradation::Spectral => GridField::new(
                spectral::spectral_resize(hr.values(), lr_ny, lr_nx)?,
                hr.domain(),
            )?,
            Degradation::Bicubic => interp_baseline(hr, lr_ny, lr_nx, InterpMethod::Bicubic)?,
        }
    };
    Ok(SRPair {
        lr,
        hr: hr.clone(),
        scale: s,
    })
}

/// Axis-aligned random sub-field with its domain remapped to the unit box.
pub fn random_crop<T: Scalar>(
    field: &GridField<T>,
    crop_ny: usize,
    crop_nx: usize,
    rng: &mut impl Rng,
) -> Result<GridField<T>> {
    let (ny, nx) = field.extents();
    if crop_ny > ny || crop_nx > nx || crop_ny == 0 || crop_nx == 0 {
        return Err(FsrError::invalid(
            "random-crop",
            format!("crop {}x{} from field {}x{}", crop_ny, crop_nx, ny, nx),
        ));
    }
    let r0 = rng.gen_range(0..=ny - crop_ny);
    let c0 = rng.gen_range(0..=nx - crop_nx);
    let c = field.channels();
    let mut data = Vec::with_capacity(c * crop_ny * crop_nx);
    for ch in 0..c {
        for r in 0..crop_ny {
            let base = ch * ny * nx + (r0 + r) * nx + c0;
            data.extend_from_slice(&field.values().data()[base..base + crop_nx]);
        }
    }
    GridField::new(
        Tensor::new(vec![c, crop_ny, crop_nx], data)?,
        DomainBox::unit(),
    )
}
