use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ImageGrid;
use crate::error::Result;
use crate::group::GroupElement;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Bilinear,
    /// Catmull-Rom cubic convolution.
    #[default]
    Bicubic,
}

impl Interpolation {
    fn radius(self) -> isize {
        match self {
            Interpolation::Bilinear => 1,
            Interpolation::Bicubic => 2,
        }
    }
}

#[inline]
fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Tap weights for fractional offset `t`, and how many of them are used.
pub(super) fn tap_weights(interp: Interpolation, t: f64) -> ([f64; 4], usize) {
    match interp {
        Interpolation::Bicubic => (cubic_weights(t), 4),
        Interpolation::Bilinear => ([1.0 - t, t, 0.0, 0.0], 2),
    }
}

/// Integer floor and fractional part. `f64::floor` is a libm call on
/// baseline x86-64, which dominates the resampling loop.
#[inline(always)]
pub(super) fn split_floor(x: f64) -> (isize, f64) {
    let mut k = x as isize;
    if (k as f64) > x {
        k -= 1;
    }
    (k, x - k as f64)
}

/// `(L_g f)(x) = f(g^{-1} x)`, interpolated, zero outside the grid.
pub fn act(g: &GroupElement, f: &ImageGrid, interp: Interpolation) -> Result<ImageGrid> {
    f.check_action(g)?;
    if g.is_identity() {
        return Ok(f.clone());
    }
    Ok(act_unchecked(g, f, interp))
}

pub(crate) fn act_unchecked(g: &GroupElement, f: &ImageGrid, interp: Interpolation) -> ImageGrid {
    ImageGrid::from_raw(f.geometry(), resample_values(g, f, interp))
}

/// Resampled values without support bookkeeping.
pub(crate) fn resample_values(g: &GroupElement, f: &ImageGrid, interp: Interpolation) -> Vec<f64> {
    let geom = f.geometry();
    let n = geom.resolution;
    let Some(nz) = f.nonzero_box() else {
        return vec![0.0; n * n];
    };
    let l = geom.half_width;
    let h = geom.spacing();

    // Index-space affine maps. With x = -L + h i:
    // src = A (i, j) + (b + L (1 - A 1)) / h, exact at the identity.
    let index_map = |e: &GroupElement| {
        let a = e.linear();
        let c0 = (e.tx() + l * (1.0 - a[0][0] - a[0][1])) / h;
        let c1 = (e.ty() + l * (1.0 - a[1][0] - a[1][1])) / h;
        (a, [c0, c1])
    };
    let (a, c) = index_map(&g.inverse());

    // Source window whose samples can reach a nonzero value.
    let r = interp.radius() as f64;
    let window = [
        [nz[0] as f64 - r, nz[1] as f64 + r],
        [nz[2] as f64 - r, nz[3] as f64 + r],
    ];

    let vals = f.values();
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        let jf = j as f64;
        let b = [a[0][1] * jf + c[0], a[1][1] * jf + c[1]];
        // Output pixels i with A_k0 i + b_k inside window k, widened by one
        // pixel against rounding.
        let (mut lo, mut hi) = (0.0f64, (n - 1) as f64);
        for k in 0..2 {
            let slope = a[k][0];
            let [w0, w1] = window[k];
            if slope == 0.0 {
                if b[k] < w0 || b[k] > w1 {
                    return;
                }
            } else {
                let (p, q) = ((w0 - b[k]) / slope, (w1 - b[k]) / slope);
                lo = lo.max(p.min(q) - 1.0);
                hi = hi.min(p.max(q) + 1.0);
            }
        }
        if lo > hi {
            return;
        }
        let (i_lo, i_hi) = (lo.ceil() as usize, hi.floor() as usize);
        if i_lo > i_hi {
            return;
        }
        let line = Line {
            u0: a[0][0] * i_lo as f64 + b[0],
            v0: a[1][0] * i_lo as f64 + b[1],
            du: a[0][0],
            dv: a[1][0],
        };
        let row = &mut row[i_lo..=i_hi];
        match interp {
            Interpolation::Bicubic => bicubic_row(vals, n, line, row),
            Interpolation::Bilinear => bilinear_row(vals, n, line, row),
        }
    });
    out
}

/// Source coordinates along one output row: `(u0 + k du, v0 + k dv)`.
#[derive(Clone, Copy)]
struct Line {
    u0: f64,
    v0: f64,
    du: f64,
    dv: f64,
}

#[inline(always)]
fn tap(vals: &[f64], n: isize, iu: isize, iv: isize) -> f64 {
    if iu < 0 || iv < 0 || iu >= n || iv >= n {
        0.0
    } else {
        vals[(iv * n + iu) as usize]
    }
}

fn bicubic_row(vals: &[f64], n: usize, line: Line, out: &mut [f64]) {
    let ni = n as isize;
    for (k, o) in out.iter_mut().enumerate() {
        // Recomputed per pixel rather than accumulated, so that the
        // identity and integer shifts land exactly on nodes.
        let kf = k as f64;
        let (iu, tu) = split_floor(line.u0 + kf * line.du);
        let (iv, tv) = split_floor(line.v0 + kf * line.dv);
        if iu < -2 || iv < -2 || iu > ni || iv > ni {
            continue;
        }
        let wx = cubic_weights(tu);
        let wy = cubic_weights(tv);
        if iu >= 1 && iv >= 1 && iu + 2 < ni && iv + 2 < ni {
            let base = ((iv - 1) * ni + iu - 1) as usize;
            let r = &vals[base..base + 3 * n + 4];
            let mut acc = 0.0;
            for (m, w) in wy.iter().enumerate() {
                let p = &r[m * n..m * n + 4];
                acc += w * (wx[0] * p[0] + wx[1] * p[1] + wx[2] * p[2] + wx[3] * p[3]);
            }
            *o = acc;
        } else {
            let mut acc = 0.0;
            for (m, w) in wy.iter().enumerate() {
                let y = iv - 1 + m as isize;
                let mut s = 0.0;
                for (q, wq) in wx.iter().enumerate() {
                    s += wq * tap(vals, ni, iu - 1 + q as isize, y);
                }
                acc += w * s;
            }
            *o = acc;
        }
    }
}

fn bilinear_row(vals: &[f64], n: usize, line: Line, out: &mut [f64]) {
    let ni = n as isize;
    for (k, o) in out.iter_mut().enumerate() {
        let kf = k as f64;
        let (iu, tu) = split_floor(line.u0 + kf * line.du);
        let (iv, tv) = split_floor(line.v0 + kf * line.dv);
        if iu < -1 || iv < -1 || iu > ni || iv > ni {
            continue;
        }
        let top = (1.0 - tu) * tap(vals, ni, iu, iv) + tu * tap(vals, ni, iu + 1, iv);
        let bot = (1.0 - tu) * tap(vals, ni, iu, iv + 1) + tu * tap(vals, ni, iu + 1, iv + 1);
        *o = (1.0 - tv) * top + tv * bot;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::LieAlgebraElement;
    use crate::image::{generator_field, GridGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian(g: GridGeometry, cx: f64, cy: f64, sigma: f64) -> ImageGrid {
        ImageGrid::from_fn(g, |x, y| {
            (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()
        })
        .unwrap()
    }

    #[test]
    fn split_floor_matches_floor() {
        for x in [-3.5, -3.0, -0.2, 0.0, 0.7, 4.0, 511.999, -1e-17] {
            let (k, t) = split_floor(x);
            assert_eq!(k as f64, f64::floor(x));
            assert_eq!(t, x - f64::floor(x));
        }
    }

    #[test]
    fn cubic_weights_partition_unity() {
        for t in [0.0, 0.1, 0.5, 0.77, 0.999] {
            let w = cubic_weights(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(cubic_weights(0.0), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_is_exact() {
        let g = GridGeometry::new(6.0, 64).unwrap();
        let f = gaussian(g, 0.3, -0.2, 0.7);
        for interp in [Interpolation::Bicubic, Interpolation::Bilinear] {
            let out = act_unchecked(&GroupElement::identity(crate::group::GroupId::Se2), &f, interp);
            assert_eq!(out.values(), f.values());
            assert_eq!(act(&GroupElement::se2(0.0, 0.0, 0.0), &f, interp).unwrap(), f);
        }
    }

    #[test]
    fn translated_gaussian_matches_analytic() {
        let g = GridGeometry::new(6.0, 512).unwrap();
        // sigma = 1 would leave significant mass within 1 of the boundary
        let f = gaussian(g, 0.0, 0.0, 0.7);
        let moved = act(&GroupElement::translation(1.0, 0.0), &f, Interpolation::Bicubic).unwrap();
        let exact = gaussian(g, 1.0, 0.0, 0.7);
        assert!(moved.distance(&exact).unwrap() <= 1e-3);
    }

    #[test]
    fn off_node_translation_matches_analytic() {
        let g = GridGeometry::new(6.0, 512).unwrap();
        let f = gaussian(g, 0.1, 0.2, 0.8);
        let moved = act(&GroupElement::se2(0.0, 0.3711, -0.5123), &f, Interpolation::Bicubic).unwrap();
        let exact = gaussian(g, 0.4711, -0.3123, 0.8);
        assert!(moved.distance(&exact).unwrap() <= 1e-3);
    }

    #[test]
    fn rotation_matches_analytic() {
        let g = GridGeometry::new(6.0, 256).unwrap();
        let f = gaussian(g, 1.0, 0.0, 0.6);
        let th: f64 = 0.9;
        let moved = act(&GroupElement::rotation(th), &f, Interpolation::Bicubic).unwrap();
        let exact = gaussian(g, th.cos(), th.sin(), 0.6);
        let rel = moved.distance(&exact).unwrap() / exact.norm2();
        assert!(rel < 1e-3, "rel {rel}");
    }

    #[test]
    fn random_rotations_preserve_norm() {
        let g = GridGeometry::new(6.0, 512).unwrap();
        let f = ImageGrid::from_fn(g, |x, y| {
            (-((x - 0.4).powi(2) / 0.5 + (y + 0.3).powi(2) / 1.2)).exp() * (1.0 + 0.3 * (2.0 * x).sin())
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..4 {
            let th = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let out = act(&GroupElement::rotation(th), &f, Interpolation::Bicubic).unwrap();
            assert!((out.norm2() / f.norm2() - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn bilinear_is_less_accurate_but_converges() {
        let g = GridGeometry::new(6.0, 256).unwrap();
        let f = gaussian(g, 0.0, 0.0, 0.8);
        let t = GroupElement::translation(0.2345, 0.0);
        let exact = gaussian(g, 0.2345, 0.0, 0.8);
        let e_lin = act(&t, &f, Interpolation::Bilinear).unwrap().distance(&exact).unwrap();
        let e_cub = act(&t, &f, Interpolation::Bicubic).unwrap().distance(&exact).unwrap();
        assert!(e_cub < e_lin);
        assert!(e_lin < 1e-2);
    }

    #[test]
    fn composition_within_twice_single_error() {
        let g = GridGeometry::new(6.0, 256).unwrap();
        let f = gaussian(g, 0.3, 0.1, 0.7);
        let g1 = GroupElement::se2(0.4, 0.3, -0.2);
        let g2 = GroupElement::se2(-0.7, -0.1, 0.5);
        let g12 = g1.compose(&g2).unwrap();
        let exact = ImageGrid::from_fn(g, |x, y| {
            let p = g12.inverse().apply([x, y]);
            (-((p[0] - 0.3).powi(2) + (p[1] - 0.1).powi(2)) / (2.0 * 0.49)).exp()
        })
        .unwrap();
        let once = act(&g12, &f, Interpolation::Bicubic).unwrap();
        let twice = act(
            &g1,
            &act(&g2, &f, Interpolation::Bicubic).unwrap(),
            Interpolation::Bicubic,
        )
        .unwrap();
        let single = once.distance(&exact).unwrap();
        assert!(twice.distance(&once).unwrap() <= 2.0 * single.max(act_error_floor(&f)));
    }

    // Round-trip error of a half-pixel shift: a measured single-resampling bound.
    fn act_error_floor(f: &ImageGrid) -> f64 {
        let h = f.geometry().spacing();
        let t = GroupElement::translation(0.5 * h, 0.5 * h);
        let there = act(&t, f, Interpolation::Bicubic).unwrap();
        let back = act(&t.inverse(), &there, Interpolation::Bicubic).unwrap();
        back.distance(f).unwrap() / 2.0
    }

    #[test]
    fn flow_consistency_is_first_order() {
        let g = GridGeometry::new(6.0, 256).unwrap();
        let f = gaussian(g, 0.6, -0.3, 0.8);
        let xi = LieAlgebraElement::se2(0.8, 0.5, -0.3);
        let field = generator_field(&xi, &f);
        let err = |t: f64| {
            let moved = act(&xi.exp(t), &f, Interpolation::Bicubic).unwrap();
            moved.sub(&f).unwrap().scale(1.0 / t).distance(&field).unwrap()
        };
        let (e2, e3) = (err(1e-2), err(1e-3));
        assert!(e3 < e2, "{e2} {e3}");
        assert!(e3 / field.norm2() < 1e-2);
    }

    #[test]
    fn shear_action_matches_analytic() {
        let g = GridGeometry::new(6.0, 256).unwrap();
        let f = gaussian(g, 0.0, 0.5, 0.6);
        let s = GroupElement::shear(0.4, 0.1, 0.0);
        let exact = ImageGrid::from_fn(g, |x, y| {
            let p = s.inverse().apply([x, y]);
            (-(p[0].powi(2) + (p[1] - 0.5).powi(2)) / (2.0 * 0.36)).exp()
        })
        .unwrap();
        let out = act(&s, &f, Interpolation::Bicubic).unwrap();
        assert!(out.distance(&exact).unwrap() / exact.norm2() < 1e-3);
    }
}
