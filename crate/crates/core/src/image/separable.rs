//! Averages of an image over a product grid of translations.
//!
//! The interpolation kernels are tensor products, so a translation by
//! `(a, b)` is a 1-D shift along rows followed by one along columns, and the
//! average over `{a_k} x {b_l}` is one combined 1-D kernel per axis.

use rayon::prelude::*;

use super::resample::{split_floor, tap_weights};
use super::{GridGeometry, Interpolation};

/// `out[i] = sum_d w[d - dmin] src[i + d]`, zero outside the grid.
#[derive(Debug)]
struct Kernel {
    dmin: isize,
    w: Vec<f64>,
}

impl Kernel {
    /// Mean of the shift kernels moving content by `s` pixels for each `s`.
    fn mean_shift(shifts_px: &[f64], interp: Interpolation) -> Kernel {
        let parts: Vec<(isize, [f64; 4], usize)> = shifts_px
            .iter()
            .map(|&s| {
                // source position i - s
                let (q, t) = split_floor(-s);
                let (w, len) = tap_weights(interp, t);
                let first = match interp {
                    Interpolation::Bicubic => q - 1,
                    Interpolation::Bilinear => q,
                };
                (first, w, len)
            })
            .collect();
        let dmin = parts.iter().map(|p| p.0).min().unwrap_or(0);
        let dmax = parts.iter().map(|p| p.0 + p.2 as isize - 1).max().unwrap_or(0);
        let mut w = vec![0.0; (dmax - dmin + 1) as usize];
        let scale = 1.0 / shifts_px.len() as f64;
        for (first, ws, len) in &parts {
            for (m, wm) in ws.iter().take(*len).enumerate() {
                w[(first - dmin) as usize + m] += wm * scale;
            }
        }
        // Trim exact zeros at both ends.
        let lead = w.iter().position(|v| *v != 0.0).unwrap_or(w.len());
        let trail = w.iter().rposition(|v| *v != 0.0).map_or(lead, |p| p + 1);
        Kernel {
            dmin: dmin + lead as isize,
            w: w[lead..trail].to_vec(),
        }
    }

    fn dmax(&self) -> isize {
        self.dmin + self.w.len() as isize - 1
    }
}

/// Output index range `[lo, hi]` reachable from the source range `[s0, s1]`.
fn reach(k: &Kernel, s0: usize, s1: usize, n: usize) -> Option<(usize, usize)> {
    let lo = (s0 as isize - k.dmax()).max(0);
    let hi = (s1 as isize - k.dmin).min(n as isize - 1);
    (lo <= hi && !k.w.is_empty()).then_some((lo as usize, hi as usize))
}

/// `(1 / (K_x K_y)) sum_{k,l} L_{(xs_k, ys_l)} f` for an image with nonzero
/// box `nz = [i0, i1, j0, j1]`.
pub(crate) fn translation_average(
    vals: &[f64],
    nz: [usize; 4],
    geometry: GridGeometry,
    xs: &[f64],
    ys: &[f64],
    interp: Interpolation,
) -> Vec<f64> {
    let n = geometry.resolution;
    let h = geometry.spacing();
    let px: Vec<f64> = xs.iter().map(|x| x / h).collect();
    let py: Vec<f64> = ys.iter().map(|y| y / h).collect();
    let kx = Kernel::mean_shift(&px, interp);
    let ky = Kernel::mean_shift(&py, interp);
    let mut out = vec![0.0; n * n];
    let (Some((c0, c1)), Some((r0, r1))) = (reach(&kx, nz[0], nz[1], n), reach(&ky, nz[2], nz[3], n)) else {
        return out;
    };

    // Pass along rows, only for rows holding nonzero samples.
    let rows = nz[3] - nz[2] + 1;
    let width = c1 - c0 + 1;
    let mut mid = vec![0.0; rows * width];
    mid.par_chunks_mut(width).enumerate().for_each(|(r, dst)| {
        let src = &vals[(nz[2] + r) * n..(nz[2] + r + 1) * n];
        for (m, &w) in kx.w.iter().enumerate() {
            let d = kx.dmin + m as isize;
            // output i in [c0, c1] with i + d in [nz0, nz1]
            let lo = (nz[0] as isize - d).max(c0 as isize);
            let hi = (nz[1] as isize - d).min(c1 as isize);
            if lo > hi {
                continue;
            }
            let (lo, hi) = (lo as usize, hi as usize);
            let s = &src[(lo as isize + d) as usize..=(hi as isize + d) as usize];
            for (o, v) in dst[lo - c0..=hi - c0].iter_mut().zip(s) {
                *o += w * v;
            }
        }
    });

    // Pass along columns, as row combinations.
    out.par_chunks_mut(n)
        .enumerate()
        .skip(r0)
        .take(r1 - r0 + 1)
        .for_each(|(j, dst)| {
            let dst = &mut dst[c0..=c1];
            for (m, &w) in ky.w.iter().enumerate() {
                let src_row = j as isize + ky.dmin + m as isize;
                if src_row < nz[2] as isize || src_row > nz[3] as isize {
                    continue;
                }
                let r = src_row as usize - nz[2];
                for (o, v) in dst.iter_mut().zip(&mid[r * width..(r + 1) * width]) {
                    *o += w * v;
                }
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;
    use crate::image::{act, ImageGrid};

    #[test]
    fn kernel_of_integer_shift_is_a_delta() {
        let k = Kernel::mean_shift(&[3.0], Interpolation::Bicubic);
        assert_eq!(k.dmin, -3);
        assert_eq!(k.w, vec![1.0]);
        let k = Kernel::mean_shift(&[0.0, 1.0], Interpolation::Bilinear);
        assert_eq!((k.dmin, k.w), (-1, vec![0.5, 0.5]));
    }

    #[test]
    fn matches_direct_translations() {
        let g = GridGeometry::new(6.0, 96).unwrap();
        let f = ImageGrid::from_fn(g, |x, y| {
            (-((x - 0.3).powi(2) + 2.0 * (y + 0.2).powi(2))).exp() * (1.0 + x)
        })
        .unwrap();
        let xs = [0.05, 0.35, 0.9];
        let ys = [-0.2, 0.41];
        for interp in [Interpolation::Bicubic, Interpolation::Bilinear] {
            let fast = translation_average(f.values(), f.nonzero_box().unwrap(), g, &xs, &ys, interp);
            let mut direct = vec![0.0; g.pixel_count()];
            for x in xs {
                for y in ys {
                    let moved = act(&GroupElement::translation(x, y), &f, interp).unwrap();
                    for (d, v) in direct.iter_mut().zip(moved.values()) {
                        *d += v / 6.0;
                    }
                }
            }
            let err = fast.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-14, "{interp:?} {err}");
        }
    }

    #[test]
    fn content_leaving_grid_reads_zero() {
        let g = GridGeometry::new(1.0, 16).unwrap();
        let f = ImageGrid::from_fn(g, |x, _| x + 2.0).unwrap();
        let fast = translation_average(
            f.values(),
            f.nonzero_box().unwrap(),
            g,
            &[0.55],
            &[0.0],
            Interpolation::Bicubic,
        );
        let direct = act(&GroupElement::translation(0.0, 0.0), &f, Interpolation::Bicubic).unwrap();
        let moved =
            crate::image::resample::act_unchecked(&GroupElement::translation(0.55, 0.0), &f, Interpolation::Bicubic);
        let err = fast
            .iter()
            .zip(moved.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-13, "{err}");
        assert_ne!(moved.values(), direct.values());
    }
}
