//! Parameter-free rendering of a feature map at arbitrary query points.
//!
//! Each query gathers its four bracketing cell centers, scales every neighbor
//! feature by the area of the rectangle between the query and that neighbor's
//! diagonal counterpart (normalized by the cell area, i.e., the bilinear
//! weights), and packs the scaled features with relative offsets and cell
//! sizes for the decoder to fuse.

use std::sync::Arc;

use crate::error::{FsrError, Result};
use crate::fields::DomainBox;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Geometry of a feature map: `(channels, h, w)` values over a domain box.
#[derive(Clone, Copy, Debug)]
pub struct FeatureMapMeta {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub domain: DomainBox,
}

impl FeatureMapMeta {
    pub fn dx(&self) -> f64 {
        self.domain.width() / self.w as f64
    }

    pub fn dy(&self) -> f64 {
        self.domain.height() / self.h as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Query {
    pub x: f64,
    pub y: f64,
}

/// Cell-center coordinates of an `(ny, nx)` grid over `domain`, row-major.
pub fn query_grid(ny: usize, nx: usize, domain: DomainBox) -> Vec<Query> {
    let mut out = Vec::with_capacity(ny * nx);
    for r in 0..ny {
        let fy = (r as f64 + 0.5) / ny as f64;
        for q in 0..nx {
            let fx = (q as f64 + 0.5) / nx as f64;
            out.push(Query {
                x: domain.x_min + domain.width() * fx,
                y: domain.y_min + domain.height() * fy,
            });
        }
    }
    out
}

/// Four bracketing neighbors of one query: flat spatial indices in the order
/// top-left, top-right, bottom-left, bottom-right, their partition-of-unity
/// weights, offsets from each neighbor center in cell-size units, and whether
/// the query had to be clamped into the domain box.
#[derive(Clone, Copy, Debug)]
pub struct NeighborInfo {
    pub idx: [usize; 4],
    pub weights: [f64; 4],
    /// `(x* - x_i, y* - y_i)` in units of the cell size.
    pub offsets: [(f64, f64); 4],
    pub clamped: bool,
}

const SNAP: f64 = 1e-9;

/// One axis: bracketing indices and the fractional position between their
/// centers. Works in normalized coordinates so weights are invariant to
/// rescaling the domain box. Fractions within `SNAP` of a center snap to it,
/// making grid-coincident queries exact.
fn axis_bracket(coord: f64, min: f64, extent: f64, n: usize) -> (usize, usize, f64, bool) {
    let mut frac = (coord - min) / extent;
    let mut clamped = false;
    if frac < 0.0 {
        frac = 0.0;
        clamped = true;
    }
    if frac > 1.0 {
        frac = 1.0;
        clamped = true;
    }
    let u = frac * n as f64 - 0.5;
    let mut i0 = u.floor();
    let mut t = u - i0;
    if t < SNAP {
        t = 0.0;
    } else if t > 1.0 - SNAP {
        i0 += 1.0;
        t = 0.0;
    }
    let i0 = i0 as isize;
    let lo = i0.clamp(0, n as isize - 1) as usize;
    let hi = (i0 + 1).clamp(0, n as isize - 1) as usize;
    (lo, hi, t, clamped)
}

pub fn neighbor_info(meta: &FeatureMapMeta, q: Query) -> NeighborInfo {
    let (ix0, ix1, tx, cx) = axis_bracket(q.x, meta.domain.x_min, meta.domain.width(), meta.w);
    let (iy0, iy1, ty, cy) = axis_bracket(q.y, meta.domain.y_min, meta.domain.height(), meta.h);
    let idx = [
        iy0 * meta.w + ix0,
        iy0 * meta.w + ix1,
        iy1 * meta.w + ix0,
        iy1 * meta.w + ix1,
    ];
    // diagonal-counterpart rectangle areas over the cell area
    let weights = [
        (1.0 - tx) * (1.0 - ty),
        tx * (1.0 - ty),
        (1.0 - tx) * ty,
        tx * ty,
    ];
    let offsets = [
        (tx, ty),
        (tx - 1.0, ty),
        (tx, ty - 1.0),
        (tx - 1.0, ty - 1.0),
    ];
    NeighborInfo {
        idx,
        weights,
        offsets,
        clamped: cx || cy,
    }
}

/// Precomputed gather plan for a query batch.
pub struct RenderPlan<T> {
    pub idx: Arc<Vec<[usize; 4]>>,
    pub weights: Arc<Vec<[T; 4]>>,
    /// `(Q, 10)`: four (x, y) offsets then `(dx, dy)`.
    pub extras: Tensor<T>,
    pub any_clamped: bool,
}

pub fn plan_render<T: Scalar>(meta: &FeatureMapMeta, queries: &[Query]) -> Result<RenderPlan<T>> {
    if queries.is_empty() {
        return Err(FsrError::invalid("render", "queries must be non-empty"));
    }
    if meta.h == 0 || meta.w == 0 || meta.channels == 0 {
        return Err(FsrError::invalid("render", "empty feature map"));
    }
    let mut idx = Vec::with_capacity(queries.len());
    let mut weights = Vec::with_capacity(queries.len());
    let mut extras = Tensor::zeros(&[queries.len(), 10]);
    let (dx, dy) = (meta.dx(), meta.dy());
    let mut any_clamped = false;
    for (qi, &q) in queries.iter().enumerate() {
        let info = neighbor_info(meta, q);
        any_clamped |= info.clamped;
        idx.push(info.idx);
        weights.push([
            T::of_f64(info.weights[0]),
            T::of_f64(info.weights[1]),
            T::of_f64(info.weights[2]),
            T::of_f64(info.weights[3]),
        ]);
        let row = &mut extras.data_mut()[qi * 10..(qi + 1) * 10];
        for (i, &(ox, oy)) in info.offsets.iter().enumerate() {
            row[2 * i] = T::of_f64(ox);
            row[2 * i + 1] = T::of_f64(oy);
        }
        row[8] = T::of_f64(dx);
        row[9] = T::of_f64(dy);
    }
    Ok(RenderPlan {
        idx: Arc::new(idx),
        weights: Arc::new(weights),
        extras,
        any_clamped,
    })
}

/// Differentiable render: `(Q, 4*channels + 10)` ensembled features. The
/// gather is differentiable w.r.t. the map values; offsets and cell sizes
/// enter as constants.
pub fn render<T: Scalar>(
    tape: &Tape<T>,
    map_values: Var,
    meta: &FeatureMapMeta,
    queries: &[Query],
) -> Result<Var> {
    let plan = plan_render::<T>(meta, queries)?;
    let gathered = tape.gather_weighted(map_values, plan.idx, plan.weights)?;
    let extras = tape.constant(plan.extras);
    tape.concat(1, &[gathered, extras])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(h: usize, w: usize) -> FeatureMapMeta {
        FeatureMapMeta {
            channels: 1,
            h,
            w,
            domain: DomainBox::unit(),
        }
    }

    #[test]
    fn query_grid_two_by_two() {
        let qs = query_grid(2, 2, DomainBox::unit());
        let want = [(-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)];
        for (q, &(x, y)) in qs.iter().zip(&want) {
            assert!((q.x - x).abs() < 1e-15 && (q.y - y).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_queries_coincide_with_map_centers() {
        let m = meta(5, 7);
        for (k, q) in query_grid(5, 7, m.domain).iter().enumerate() {
            let info = neighbor_info(&m, *q);
            assert_eq!(info.weights[0], 1.0, "query {} weight {:?}", k, info.weights);
            assert_eq!(info.idx[0], k);
            assert_eq!(info.offsets[0], (0.0, 0.0));
        }
    }

    #[test]
    fn midpoint_query_symmetric() {
        let m = meta(4, 4);
        // midpoint of the 4 centers around the box middle
        let q = Query { x: 0.0, y: 0.0 };
        let info = neighbor_info(&m, q);
        for w in info.weights {
            assert!((w - 0.25).abs() < 1e-12);
        }
        for (ox, oy) in info.offsets {
            assert!((ox.abs() - 0.5).abs() < 1e-12);
            assert!((oy.abs() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn offsets_antisymmetric_about_center() {
        let m = meta(8, 8);
        let (cx, cy) = (-1.0 + 2.0 * (3.5 / 8.0), -1.0 + 2.0 * (2.5 / 8.0));
        let d = 0.03;
        let a = neighbor_info(&m, Query { x: cx + d, y: cy + d });
        let b = neighbor_info(&m, Query { x: cx - d, y: cy - d });
        // reflecting the query about a center negates its offset to that center
        let (oax, oay) = a.offsets[0];
        let (obx, oby) = b.offsets[3];
        assert!((oax + obx).abs() < 1e-9, "{} vs {}", oax, obx);
        assert!((oay + oby).abs() < 1e-9);
    }

    #[test]
    fn partition_of_unity_interior() {
        use rand::{Rng, SeedableRng};
        let m = meta(9, 13);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let q = Query {
                x: rng.gen_range(-1.0..1.0),
                y: rng.gen_range(-1.0..1.0),
            };
            let info = neighbor_info(&m, q);
            let s: f64 = info.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(info.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn out_of_box_query_clamped_with_flag() {
        let m = meta(4, 4);
        let info = neighbor_info(&m, Query { x: 1.5, y: 0.0 });
        assert!(info.clamped);
        let s: f64 = info.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_bit_equal_under_box_scaling() {
        // dyadic queries stay exact under scaling the box by 3
        let m1 = meta(6, 6);
        let m3 = FeatureMapMeta {
            domain: DomainBox::unit().scaled(3.0),
            ..m1
        };
        for k in 0..64 {
            let fx = (k % 8) as f64 / 8.0 + 1.0 / 16.0;
            let fy = (k / 8) as f64 / 8.0 + 1.0 / 16.0;
            let q1 = Query {
                x: -1.0 + 2.0 * fx,
                y: -1.0 + 2.0 * fy,
            };
            let q3 = Query {
                x: -3.0 + 6.0 * fx,
                y: -3.0 + 6.0 * fy,
            };
            let a = neighbor_info(&m1, q1);
            let b = neighbor_info(&m3, q3);
            assert_eq!(a.weights, b.weights, "query {}", k);
            assert_eq!(a.idx, b.idx);
        }
    }

    #[test]
    fn render_matches_bilinear_oracle() {
        use rand::{Rng, SeedableRng};
        // independent bilinear interpolation over cell centers
        let h = 7;
        let w = 9;
        let m = FeatureMapMeta {
            channels: 3,
            h,
            w,
            domain: DomainBox::unit(),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let values = Tensor::<f64>::from_fn(&[3, h, w], |_| rng.gen_range(-1.0..1.0));

        let bilinear = |c: usize, x: f64, y: f64| -> f64 {
            let u = (x + 1.0) / 2.0 * w as f64 - 0.5;
            let v = (y + 1.0) / 2.0 * h as f64 - 0.5;
            let (i0, j0) = (v.floor() as isize, u.floor() as isize);
            let (tv, tu) = (v - i0 as f64, u - j0 as f64);
            let cl = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
            let f = |i: isize, j: isize| values.data()[c * h * w + cl(i, h) * w + cl(j, w)];
            f(i0, j0) * (1.0 - tv) * (1.0 - tu)
                + f(i0, j0 + 1) * (1.0 - tv) * tu
                + f(i0 + 1, j0) * tv * (1.0 - tu)
                + f(i0 + 1, j0 + 1) * tv * tu
        };

        let mut queries = Vec::new();
        // keep queries strictly inside the cell-center hull so clamping and
        // the oracle's edge handling cannot diverge
        for _ in 0..10_000 {
            queries.push(Query {
                x: rng.gen_range(-0.7..0.7),
                y: rng.gen_range(-0.7..0.7),
            });
        }
        let tape = Tape::<f64>::new();
        let mv = tape.constant(values.clone());
        let out = render(&tape, mv, &m, &queries).unwrap();
        let ov = tape.value(out);
        assert_eq!(ov.shape(), &[queries.len(), 4 * 3 + 10]);
        for (qi, q) in queries.iter().enumerate() {
            for c in 0..3 {
                let summed: f64 = (0..4).map(|i| ov.data()[qi * 22 + i * 3 + c]).sum();
                let want = bilinear(c, q.x, q.y);
                assert!(
                    (summed - want).abs() < 1e-12,
                    "query {} chan {}: {} vs {}",
                    qi,
                    c,
                    summed,
                    want
                );
            }
        }
    }

    #[test]
    fn render_at_own_grid_returns_features_exactly() {
        let h = 4;
        let w = 5;
        let m = FeatureMapMeta {
            channels: 2,
            h,
            w,
            domain: DomainBox::unit(),
        };
        let values = Tensor::<f64>::from_fn(&[2, h, w], |i| (i as f64) * 0.17 - 1.0);
        let tape = Tape::<f64>::new();
        let mv = tape.constant(values.clone());
        let queries = query_grid(h, w, m.domain);
        let out = render(&tape, mv, &m, &queries).unwrap();
        let ov = tape.value(out);
        for (k, _) in queries.iter().enumerate() {
            for c in 0..2 {
                assert_eq!(ov.data()[k * 18 + c], values.data()[c * h * w + k]);
                for i in 1..4 {
                    assert_eq!(ov.data()[k * 18 + i * 2 + c], 0.0);
                }
            }
        }
    }

    #[test]
    fn render_gradient_passes_grad_check() {
        use rand::{Rng, SeedableRng};
        let m = FeatureMapMeta {
            channels: 2,
            h: 4,
            w: 4,
            domain: DomainBox::unit(),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let values = Tensor::<f64>::from_fn(&[2, 4, 4], |_| rng.gen_range(-1.0..1.0));
        let queries: Vec<Query> = (0..6)
            .map(|_| Query {
                x: rng.gen_range(-0.9..0.9),
                y: rng.gen_range(-0.9..0.9),
            })
            .collect();
        let weight = Tensor::<f64>::from_fn(&[6, 18], |_| rng.gen_range(-1.0..1.0));
        let err = crate::tape::grad_check_fn(&[values], 1e-5, move |tape, vars| {
            let out = render(tape, vars[0], &m, &queries)?;
            let w = tape.constant(weight.clone());
            let p = tape.mul(out, w)?;
            tape.sum(p)
        })
        .unwrap();
        assert!(err < 1e-4, "render grad err {}", err);
    }

    #[test]
    fn empty_queries_and_empty_map_error() {
        let m = meta(4, 4);
        assert!(plan_render::<f64>(&m, &[]).is_err());
        let empty = FeatureMapMeta {
            channels: 0,
            ..meta(4, 4)
        };
        assert!(plan_render::<f64>(&empty, &[Query { x: 0.0, y: 0.0 }]).is_err());
    }

    #[test]
    fn non_integer_scale_grid_has_full_coverage() {
        let qs = query_grid(23, 23, DomainBox::unit());
        assert_eq!(qs.len(), 23 * 23);
        for q in qs {
            assert!(q.x > -1.0 && q.x < 1.0 && q.y > -1.0 && q.y < 1.0);
        }
    }
}
