//! Classical cell-center-aligned interpolation baselines.

use crate::error::Result;
use crate::fields::GridField;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpMethod {
    Nearest,
    Bilinear,
    /// Catmull-Rom (a = -0.5) with edge clamping.
    Bicubic,
}

impl InterpMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(InterpMethod::Nearest),
            "bilinear" => Ok(InterpMethod::Bilinear),
            "bicubic" => Ok(InterpMethod::Bicubic),
            other => Err(crate::error::FsrError::Config(format!(
                "unknown interpolation method '{}'",
                other
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InterpMethod::Nearest => "nearest",
            InterpMethod::Bilinear => "bilinear",
            InterpMethod::Bicubic => "bicubic",
        }
    }
}

fn catmull_rom(t: f64) -> [f64; 4] {
    // kernel weights for taps at offsets -1, 0, 1, 2 from the base index
    let a = -0.5;
    let w = |x: f64| {
        let x = x.abs();
        if x <= 1.0 {
            (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
        } else if x < 2.0 {
            a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
        } else {
            0.0
        }
    };
    [w(t + 1.0), w(t), w(1.0 - t), w(2.0 - t)]
}

/// Resample to `(ny, nx)` with the chosen method. Target cell centers are
/// mapped into source index space, matching the cell-center convention on a
/// shared domain box; identical extents reproduce the input exactly.
pub fn interp_baseline<T: Scalar>(
    field: &GridField<T>,
    ny: usize,
    nx: usize,
    method: InterpMethod,
) -> Result<GridField<T>> {
    let (sy, sx) = field.extents();
    let c = field.channels();
    let ry = sy as f64 / ny as f64;
    let rx = sx as f64 / nx as f64;
    let mut out = Tensor::zeros(&[c, ny, nx]);
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    for ch in 0..c {
        let src = &field.values().data()[ch * sy * sx..(ch + 1) * sy * sx];
        for r in 0..ny {
            let v = (r as f64 + 0.5) * ry - 0.5;
            for q in 0..nx {
                let u = (q as f64 + 0.5) * rx - 0.5;
                let val = match method {
                    InterpMethod::Nearest => {
                        let i = clamp((v + 0.5).floor() as isize, sy);
                        let j = clamp((u + 0.5).floor() as isize, sx);
                        src[i * sx + j]
                    }
                    InterpMethod::Bilinear => {
                        let i0 = v.floor() as isize;
                        let j0 = u.floor() as isize;
                        let tv = v - i0 as f64;
                        let tu = u - j0 as f64;
                        let (i0c, i1c) = (clamp(i0, sy), clamp(i0 + 1, sy));
                        let (j0c, j1c) = (clamp(j0, sx), clamp(j0 + 1, sx));
                        let w00 = T::of_f64((1.0 - tv) * (1.0 - tu));
                        let w01 = T::of_f64((1.0 - tv) * tu);
                        let w10 = T::of_f64(tv * (1.0 - tu));
                        let w11 = T::of_f64(tv * tu);
                        src[i0c * sx + j0c] * w00
                            + src[i0c * sx + j1c] * w01
                            + src[i1c * sx + j0c] * w10
                            + src[i1c * sx + j1c] * w11
                    }
                    InterpMethod::Bicubic => {
                        let i0 = v.floor() as isize;
                        let j0 = u.floor() as isize;
                        let wy = catmull_rom(v - i0 as f64);
                        let wx = catmull_rom(u - j0 as f64);
                        let mut acc = 0.0f64;
                        for (du, wv) in wy.iter().enumerate() {
                            let i = clamp(i0 - 1 + du as isize, sy);
                            for (dv, wu) in wx.iter().enumerate() {
                                let j = clamp(j0 - 1 + dv as isize, sx);
                                acc += wv * wu * src[i * sx + j].as_f64();
                            }
                        }
                        T::of_f64(acc)
                    }
                };
                out.data_mut()[ch * ny * nx + r * nx + q] = val;
            }
        }
    }
    GridField::new(out, field.domain())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [InterpMethod; 3] = [
        InterpMethod::Nearest,
        InterpMethod::Bilinear,
        InterpMethod::Bicubic,
    ];

    #[test]
    fn constant_preserved_by_all_methods() {
        let f = GridField::from_slab(Tensor::filled(&[8, 8], 4.5f64)).unwrap();
        for m in ALL {
            let g = interp_baseline(&f, 19, 13, m).unwrap();
            for &v in g.values().data() {
                assert!((v - 4.5).abs() < 1e-12, "{:?}", m);
            }
        }
    }

    #[test]
    fn same_extents_is_identity() {
        let f = GridField::from_slab(Tensor::from_fn(&[9, 7], |i| (i as f64).sin())).unwrap();
        for m in ALL {
            let g = interp_baseline(&f, 9, 7, m).unwrap();
            assert!(
                g.values().max_rel_diff(f.values(), 1e-12) < 1e-12,
                "{:?} not identity",
                m
            );
        }
    }

    #[test]
    fn bilinear_reproduces_linear_ramp_in_interior() {
        // bilinear reproduces affine functions wherever real interpolation
        // happens (inside the source cell-center hull)
        let n = 16;
        let f = GridField::from_slab(Tensor::from_fn(&[n, n], |i| {
            let q = i % n;
            (q as f64 + 0.5) / n as f64
        }))
        .unwrap();
        for &scale in &[2usize, 3, 5] {
            let m = n * scale;
            let g = interp_baseline(&f, m, m, InterpMethod::Bilinear).unwrap();
            for r in 0..m {
                for q in 0..m {
                    let x = (q as f64 + 0.5) / m as f64;
                    // skip targets outside the source center hull
                    let u = (q as f64 + 0.5) * (n as f64 / m as f64) - 0.5;
                    if u < 0.0 || u > (n - 1) as f64 {
                        continue;
                    }
                    let got = g.values().data()[r * m + q];
                    assert!(
                        (got - x).abs() < 1e-12,
                        "ramp err {} at scale {}",
                        (got - x).abs(),
                        scale
                    );
                }
            }
        }
    }
}
