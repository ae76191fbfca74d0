//! Compact pooling regions in group-parameter coordinates and their Haar
//! measure.
//!
//! For every supported group the Haar measure is Lebesgue measure on the
//! canonical parameter box (angle x plane, or shear x plane), so measures of
//! coordinate boxes are products of interval lengths. Right translates
//! `G0 g` are not boxes in general; their measures are estimated by Monte
//! Carlo over a bounding box, with membership `h in G0 g` tested as
//! `h g^-1 in G0`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{check_same, Axis, GroupElement, GroupId, LieAlgebraElement};
use crate::rng::CounterRng;

const TWO_PI: f64 = 2.0 * PI;

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval { lo: v[0], hi: v[1] }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Midpoint-rule nodes; a zero-length interval yields its single point.
    pub fn midpoints(&self, count: usize) -> Vec<f64> {
        if self.len() == 0.0 {
            return vec![self.lo];
        }
        let step = self.len() / count as f64;
        (0..count).map(|k| self.lo + (k as f64 + 0.5) * step).collect()
    }
}

/// A coordinate box `G0` in the canonical parameters of a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolingRegion {
    group: GroupId,
    /// One interval per axis, ordered as `group.axes()`.
    bounds: Vec<Interval>,
    #[serde(default)]
    degenerate: bool,
}

impl PoolingRegion {
    pub fn new(group: GroupId, bounds: Vec<Interval>) -> Result<Self> {
        if bounds.len() != group.dim() {
            return Err(Error::InvalidArgument(format!(
                "{group} region needs {} intervals, got {}",
                group.dim(),
                bounds.len()
            )));
        }
        for (axis, iv) in group.axes().iter().zip(&bounds) {
            if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.len() <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{axis:?} interval [{}, {}] must have positive finite length",
                    iv.lo, iv.hi
                )));
            }
            if *axis == Axis::Theta && iv.len() > TWO_PI {
                return Err(Error::InvalidArgument(format!(
                    "angle interval of length {} exceeds a full turn",
                    iv.len()
                )));
            }
        }
        Ok(Self {
            group,
            bounds,
            degenerate: false,
        })
    }

    /// The single-point region `{g}`; measure zero.
    pub fn point(g: &GroupElement) -> Self {
        let c = g.coords();
        Self {
            group: g.group(),
            bounds: (0..g.group().dim()).map(|i| Interval::new(c[i], c[i])).collect(),
            degenerate: true,
        }
    }

    /// `[0, a]^2` in the translation group.
    pub fn translation_box(a: f64) -> Result<Self> {
        Self::new(
            GroupId::Translations,
            vec![Interval::new(0.0, a), Interval::new(0.0, a)],
        )
    }

    /// `[-theta, theta] x [0, a]^2` in SE(2).
    pub fn se2_box(theta: f64, a: f64) -> Result<Self> {
        Self::new(
            GroupId::Se2,
            vec![
                Interval::new(-theta, theta),
                Interval::new(0.0, a),
                Interval::new(0.0, a),
            ],
        )
    }

    /// The whole rotation group `(-pi, pi]`.
    pub fn full_circle() -> Self {
        Self {
            group: GroupId::Rotations,
            bounds: vec![Interval::new(-PI, PI)],
            degenerate: false,
        }
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn interval(&self, axis: Axis) -> Option<Interval> {
        self.group
            .axes()
            .iter()
            .position(|a| *a == axis)
            .map(|i| self.bounds[i])
    }

    /// Haar volume: the product of interval lengths.
    pub fn measure(&self) -> f64 {
        self.bounds.iter().map(Interval::len).product()
    }

    /// Membership with closed intervals; angles are compared on the circle.
    pub fn contains(&self, g: &GroupElement) -> Result<bool> {
        check_same(self.group, g.group())?;
        Ok(self.contains_unchecked(g))
    }

    fn contains_unchecked(&self, g: &GroupElement) -> bool {
        let c = g.coords();
        self.group
            .axes()
            .iter()
            .zip(&self.bounds)
            .enumerate()
            .all(|(i, (axis, iv))| match axis {
                Axis::Theta => angle_in(c[i], iv),
                _ => iv.lo <= c[i] && c[i] <= iv.hi,
            })
    }

    /// Smallest parameter box containing `G0` and `G0 g`. The angle axis is
    /// unwrapped and clipped to one full turn.
    pub fn right_translate_bbox(&self, g: &GroupElement) -> Vec<Interval> {
        let dim = self.group.dim();
        let mut lo: Vec<f64> = self.bounds.iter().map(|b| b.lo).collect();
        let mut hi: Vec<f64> = self.bounds.iter().map(|b| b.hi).collect();

        let theta_axis = self.group.axes().iter().position(|a| *a == Axis::Theta);
        let angles = match theta_axis {
            Some(i) => arc_extreme_angles(self.bounds[i], g),
            None => Vec::new(),
        };

        for corner in 0..(1usize << dim) {
            let mut coords: Vec<f64> = (0..dim)
                .map(|i| {
                    if corner >> i & 1 == 0 {
                        self.bounds[i].lo
                    } else {
                        self.bounds[i].hi
                    }
                })
                .collect();
            let mut visit = |coords: &[f64]| {
                let h = GroupElement::from_coords(self.group, coords).expect("coordinate count matches group");
                let mut c = h.compose_unchecked(g).coords();
                if let Some(i) = theta_axis {
                    c[i] = coords[i] + g.theta();
                }
                for k in 0..dim {
                    lo[k] = lo[k].min(c[k]);
                    hi[k] = hi[k].max(c[k]);
                }
            };
            visit(&coords);
            if let Some(i) = theta_axis {
                for &a in &angles {
                    coords[i] = a;
                    visit(&coords);
                }
            }
        }

        let mut out: Vec<Interval> = lo.into_iter().zip(hi).map(|(l, h)| Interval::new(l, h)).collect();
        if let Some(i) = theta_axis {
            if out[i].len() > TWO_PI {
                out[i].hi = out[i].lo + TWO_PI;
            }
        }
        out
    }
}

/// Angle membership on the circle for an interval shorter than a full turn.
fn angle_in(theta: f64, iv: &Interval) -> bool {
    if iv.len() >= TWO_PI {
        return true;
    }
    (theta - iv.lo).rem_euclid(TWO_PI) <= iv.len()
}

/// Interior angles of `[lo, hi]` at which a coordinate of `R(angle) t_g`
/// is extremal.
fn arc_extreme_angles(iv: Interval, g: &GroupElement) -> Vec<f64> {
    if g.tx() == 0.0 && g.ty() == 0.0 {
        return Vec::new();
    }
    let phase = g.ty().atan2(g.tx());
    let k_lo = ((iv.lo + phase) / FRAC_PI_2).ceil() as i64;
    let k_hi = ((iv.hi + phase) / FRAC_PI_2).floor() as i64;
    (k_lo..=k_hi)
        .map(|k| k as f64 * FRAC_PI_2 - phase)
        .filter(|a| *a > iv.lo && *a < iv.hi)
        .collect()
}

/// Monte Carlo budget. Sample `i` always uses the same random words, so
/// results do not depend on the batch size or thread count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub sample_count: u64,
    pub seed: u64,
    pub batch: u64,
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self {
            sample_count: 1_000_000,
            seed: 0x5EED,
            batch: 1 << 16,
        }
    }
}

impl MonteCarloSpec {
    pub const MIN_SAMPLES: u64 = 10_000;

    pub fn new(sample_count: u64, seed: u64) -> Self {
        Self {
            sample_count,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count < Self::MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "Monte Carlo needs at least {} samples, got {}",
                Self::MIN_SAMPLES,
                self.sample_count
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("Monte Carlo batch must be positive".into()));
        }
        Ok(())
    }
}

/// A measured quantity with its standard error (zero for exact values).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymdiffMethod {
    Exact,
    MonteCarlo,
}

/// Counts samples of the box `domain` satisfying `pred`, then scales by the
/// box volume.
fn mc_box_estimate<F>(group: GroupId, domain: &[Interval], mc: &MonteCarloSpec, pred: F) -> Result<Estimate>
where
    F: Fn(&GroupElement) -> bool + Sync,
{
    mc.validate()?;
    let dim = group.dim();
    let volume: f64 = domain.iter().map(Interval::len).product();
    let n = mc.sample_count;
    let batches = n.div_ceil(mc.batch);
    let hits: u64 = (0..batches)
        .into_par_iter()
        .map(|b| {
            let start = b * mc.batch;
            let end = (start + mc.batch).min(n);
            let mut rng = CounterRng::new(mc.seed, dim);
            rng.seek(start);
            let mut coords = [0.0; 3];
            let mut count = 0u64;
            for _ in start..end {
                for (k, iv) in domain.iter().enumerate() {
                    coords[k] = iv.lo + rng.uniform() * iv.len();
                }
                let h = GroupElement::from_coords(group, &coords[..dim]).expect("coordinate count matches group");
                if pred(&h) {
                    count += 1;
                }
            }
            count
        })
        .sum();
    let p = hits as f64 / n as f64;
    Ok(Estimate {
        value: volume * p,
        std_error: volume * (p * (1.0 - p) / n as f64).sqrt(),
    })
}

/// Haar measure of `(G0 g) Δ G0`.
pub fn symdiff_measure(
    region: &PoolingRegion,
    g: &GroupElement,
    method: SymdiffMethod,
    mc: &MonteCarloSpec,
) -> Result<Estimate> {
    check_same(region.group, g.group())?;
    match method {
        SymdiffMethod::Exact => {
            if region.group != GroupId::Translations {
                return Err(Error::UnsupportedMethod(format!(
                    "exact symmetric difference is only available for translation boxes, not {}",
                    region.group
                )));
            }
            let area = region.measure();
            let overlap: f64 = region
                .bounds
                .iter()
                .zip([g.tx(), g.ty()])
                .map(|(iv, d)| (iv.len() - d.abs()).max(0.0))
                .product();
            Ok(Estimate::exact(2.0 * (area - overlap)))
        }
        SymdiffMethod::MonteCarlo => {
            let ginv = g.inverse();
            let domain = region.right_translate_bbox(g);
            mc_box_estimate(region.group, &domain, mc, |h| {
                region.contains_unchecked(h) != region.contains_unchecked(&h.compose_unchecked(&ginv))
            })
        }
    }
}

/// Exact for translation boxes, Monte Carlo otherwise.
pub fn symdiff_measure_auto(region: &PoolingRegion, g: &GroupElement, mc: &MonteCarloSpec) -> Result<Estimate> {
    let method = if region.group == GroupId::Translations {
        SymdiffMethod::Exact
    } else {
        SymdiffMethod::MonteCarlo
    };
    symdiff_measure(region, g, method, mc)
}

/// Monte Carlo estimate of `mu(G0 g)`; equals `mu(G0)` for unimodular groups.
pub fn right_translate_measure(region: &PoolingRegion, g: &GroupElement, mc: &MonteCarloSpec) -> Result<Estimate> {
    check_same(region.group, g.group())?;
    let ginv = g.inverse();
    let domain = region.right_translate_bbox(g);
    mc_box_estimate(region.group, &domain, mc, |h| {
        region.contains_unchecked(&h.compose_unchecked(&ginv))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RateMethod {
    ClosedForm,
    /// Least-squares slope through the origin of
    /// `s -> mu((G0 exp(s xi)) Δ G0) / mu(G0)` at `s in {s0, s0/2, s0/4, s0/8}`.
    SlopeFit {
        base_step: f64,
    },
}

impl RateMethod {
    pub const DEFAULT_STEP: f64 = 0.02;

    pub fn slope_fit() -> Self {
        RateMethod::SlopeFit {
            base_step: Self::DEFAULT_STEP,
        }
    }
}

/// Derivative at zero of the normalized symmetric-difference measure along
/// a one-parameter subgroup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    /// Relative RMS residual of the slope fit; zero for closed forms.
    pub residual: f64,
    pub std_error: f64,
    pub method: RateMethod,
}

pub fn symdiff_rate(
    region: &PoolingRegion,
    xi: &LieAlgebraElement,
    method: RateMethod,
    mc: &MonteCarloSpec,
) -> Result<RateEstimate> {
    check_same(region.group, xi.group())?;
    if region.measure() <= 0.0 {
        return Err(Error::DegenerateInput(
            "symmetric-difference rate needs a region of positive measure".into(),
        ));
    }
    match method {
        RateMethod::ClosedForm => {
            let rate = closed_form_rate(region, xi)?;
            Ok(RateEstimate {
                rate,
                residual: 0.0,
                std_error: 0.0,
                method,
            })
        }
        RateMethod::SlopeFit { base_step } => slope_fit_rate(region, xi, base_step, mc),
    }
}

/// Closed form when one exists, otherwise the default slope fit.
pub fn symdiff_rate_auto(region: &PoolingRegion, xi: &LieAlgebraElement, mc: &MonteCarloSpec) -> Result<RateEstimate> {
    match symdiff_rate(region, xi, RateMethod::ClosedForm, mc) {
        Err(Error::UnsupportedMethod(_)) => symdiff_rate(region, xi, RateMethod::slope_fit(), mc),
        other => other,
    }
}

/// First-order rate for SE(2) boxes that ignores the rotation of the
/// translation by the box angles: `2 (|u| / Lx + |v| / Ly)`. It is the
/// limit of the exact closed form as the angle interval shrinks to zero.
pub fn small_angle_translation_rate(region: &PoolingRegion, xi: &LieAlgebraElement) -> Result<f64> {
    let (lx, ly) = translation_sides(region)?;
    if !xi.is_pure_translation() {
        return Err(Error::InvalidArgument("generator must be a pure translation".into()));
    }
    Ok(2.0 * (xi.vx().abs() / lx + xi.vy().abs() / ly))
}

fn translation_sides(region: &PoolingRegion) -> Result<(f64, f64)> {
    match (region.interval(Axis::Tx), region.interval(Axis::Ty)) {
        (Some(x), Some(y)) => Ok((x.len(), y.len())),
        _ => Err(Error::InvalidArgument(format!(
            "{} region has no translation box",
            region.group
        ))),
    }
}

fn closed_form_rate(region: &PoolingRegion, xi: &LieAlgebraElement) -> Result<f64> {
    if xi.is_zero() {
        return Ok(0.0);
    }
    match region.group {
        GroupId::Translations => small_angle_translation_rate(region, xi),
        GroupId::Rotations => Ok(rotation_rate(region, xi.zeta())),
        GroupId::Se2 if xi.vx() == 0.0 && xi.vy() == 0.0 => Ok(rotation_rate(region, xi.zeta())),
        GroupId::Se2 if xi.is_pure_translation() => {
            // Right multiplication by exp(s (0, u, v)) shifts the angle-phi
            // slice of the box by s R(phi) (u, v).
            let angle = region.interval(Axis::Theta).expect("se2 has an angle axis");
            let (lx, ly) = translation_sides(region)?;
            let (u, v) = (xi.vx(), xi.vy());
            let r = u.hypot(v);
            let beta = v.atan2(u);
            let gamma = u.atan2(v);
            let ix = abs_cos_integral(angle.lo + beta, angle.hi + beta);
            let iy = abs_cos_integral(angle.lo - gamma, angle.hi - gamma);
            Ok(2.0 * r * (ly * ix + lx * iy) / (angle.len() * lx * ly))
        }
        group => Err(Error::UnsupportedMethod(format!(
            "no closed-form rate for this generator in {group}"
        ))),
    }
}

fn rotation_rate(region: &PoolingRegion, zeta: f64) -> f64 {
    let angle = region.interval(Axis::Theta).expect("group has an angle axis");
    if angle.len() >= TWO_PI {
        0.0
    } else {
        2.0 * zeta.abs() / angle.len()
    }
}

/// `int_a^b |cos x| dx`.
fn abs_cos_integral(a: f64, b: f64) -> f64 {
    fn antiderivative(x: f64) -> f64 {
        let k = ((x + FRAC_PI_2) / PI).floor();
        let sign = if (k as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        2.0 * k + sign * x.sin()
    }
    antiderivative(b) - antiderivative(a)
}

fn slope_fit_rate(
    region: &PoolingRegion,
    xi: &LieAlgebraElement,
    base_step: f64,
    mc: &MonteCarloSpec,
) -> Result<RateEstimate> {
    if !(base_step > 0.0) {
        return Err(Error::InvalidArgument("slope-fit step must be positive".into()));
    }
    let mu = region.measure();
    let steps = [base_step, base_step / 2.0, base_step / 4.0, base_step / 8.0];
    let mut points = Vec::with_capacity(steps.len());
    for &s in &steps {
        let est = symdiff_measure_auto(region, &xi.exp(s), mc)?;
        points.push((s, est.value / mu, est.std_error / mu));
    }
    let sxx: f64 = points.iter().map(|(s, _, _)| s * s).sum();
    let sxy: f64 = points.iter().map(|(s, f, _)| s * f).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = points.iter().map(|(s, f, _)| (f - slope * s).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|(_, f, _)| f * f).sum();
    let residual = if ss_tot > 0.0 { (ss_res / ss_tot).sqrt() } else { 0.0 };
    let std_error = points.iter().map(|(s, _, se)| (s * se).powi(2)).sum::<f64>().sqrt() / sxx;
    Ok(RateEstimate {
        rate: slope,
        residual,
        std_error,
        method: RateMethod::SlopeFit { base_step },
    })
}
