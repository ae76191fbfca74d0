//! Numerical checks of the contraction and curvature bounds for pooled
//! orbits.
//!
//! Each check compares a measured left-hand side with an analytic right-hand
//! side and passes when `lhs <= rhs (1 + eps)`, where `eps` is the sum of
//! three measured slack terms:
//!
//! * quadrature: `|lhs(N) - lhs(N')| / rhs` with `N'` the coarsened node grid,
//! * interpolation: a first-order bound on the lhs perturbation from the
//!   measured resampling (and, for generator fields, gradient) error,
//! * Monte Carlo: three standard errors of the estimated measure or rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::group::{check_same, GroupElement, LieAlgebraElement};
use crate::haar::{symdiff_measure_auto, symdiff_rate_auto, Estimate, MonteCarloSpec, PoolingRegion, RateEstimate};
use crate::image::{act, generator_field_with, DifferenceOrder, GridGeometry, ImageGrid, ImageSpec, Interpolation};
use crate::pooling::{node_resample, pool_translated, pool_with, quadrature_nodes, PoolPlan, QuadratureSpec};

/// Sign convention of the pooled bracket field, stored in every report.
pub const BRACKET_SIGN_CONVENTION: &str = "[X~_xi, X~_xi'] = -Phi(X_[xi,xi'] f)";

/// Slack terms, each relative to the analytic right-hand side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slack {
    pub quadrature: f64,
    pub interpolation: f64,
    pub monte_carlo: f64,
    pub total: f64,
}

impl Slack {
    pub fn new(quadrature: f64, interpolation: f64, monte_carlo: f64) -> Self {
        Self {
            quadrature,
            interpolation,
            monte_carlo,
            total: quadrature + interpolation + monte_carlo,
        }
    }
}

/// Inputs needed to rerun a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub grid: GridGeometry,
    pub interpolation: Interpolation,
    pub quadrature: QuadratureSpec,
    pub coarse_quadrature: QuadratureSpec,
    pub region: PoolingRegion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_element: Option<GroupElement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generators: Vec<LieAlgebraElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_convention: Option<String>,
    /// Intermediate quantities: measures, norms, rates, standard errors.
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationReport {
    pub id: String,
    pub measured_lhs: f64,
    pub analytic_rhs: f64,
    /// `lhs / rhs`; infinite when only the rhs vanishes, zero when both do.
    #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
    pub ratio: f64,
    pub slack: Slack,
    pub pass: bool,
    pub provenance: Provenance,
}

fn ser_ratio<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_ratio<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Raw::Str(s) => Err(serde::de::Error::custom(format!("bad ratio {s:?}"))),
    }
}

pub fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs != 0.0 {
        lhs / rhs
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Relative slack `delta / rhs`; zero when the rhs vanishes, so that a zero
/// bound is only met by a zero measurement.
fn relative(delta: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        delta.abs() / rhs
    } else {
        0.0
    }
}

impl VerificationReport {
    pub fn new(id: &str, lhs: f64, rhs: f64, slack: Slack, provenance: Provenance) -> Self {
        let mut r = Self {
            id: id.to_string(),
            measured_lhs: lhs,
            analytic_rhs: rhs,
            ratio: ratio(lhs, rhs),
            slack,
            pass: false,
            provenance,
        };
        r.pass = r.recompute_pass();
        r
    }

    /// `lhs <= rhs (1 + eps)` from the stored fields.
    pub fn recompute_pass(&self) -> bool {
        self.measured_lhs <= self.analytic_rhs * (1.0 + self.slack.total)
    }

    pub fn with_image(mut self, spec: ImageSpec) -> Self {
        self.provenance.image = Some(spec);
        self
    }
}

/// The sup of `|J_g|` over the nodes of `G0`. Every supported group acts
/// by area-preserving maps, so this is 1; anything else is a bug.
fn jacobian_sup(region: &PoolingRegion, quad: &QuadratureSpec) -> Result<f64> {
    let mut lambda = 0.0f64;
    for g in quadrature_nodes(region, quad)? {
        lambda = lambda.max(g.jacobian_sup());
    }
    if (lambda - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "group action is not area preserving (sup |J| = {lambda})"
        )));
    }
    Ok(lambda)
}

/// Error estimate for one node as pooling resamples it (linear part, then
/// translation): half the round-trip error `|| L_{g^-1} L_g f - f ||` at a
/// few representative nodes.
pub fn resample_error(f: &ImageGrid, nodes: &[GroupElement], interp: Interpolation) -> Result<f64> {
    let picks = [0, nodes.len() / 2, nodes.len().saturating_sub(1)];
    let mut err = 0.0f64;
    for &k in picks.iter() {
        let Some(g) = nodes.get(k) else { continue };
        if g.is_identity() {
            continue;
        }
        let there = node_resample(g, f, interp)?;
        let back = node_resample(&g.inverse(), &there, interp)?;
        err = err.max(0.5 * back.distance(f)?);
    }
    Ok(err)
}

fn mc_slack(e: &Estimate) -> f64 {
    if e.value > 0.0 {
        3.0 * e.std_error / e.value
    } else {
        0.0
    }
}

/// Slack from the uncertainty of a rate that enters squared.
fn rate_slack(r: &RateEstimate) -> f64 {
    if r.rate > 0.0 {
        2.0 * 3.0 * r.std_error / r.rate
    } else {
        0.0
    }
}

/// Precomputed `Phi(f)` for repeated contraction checks over one region.
pub struct Theorem1Context<'a> {
    f: &'a ImageGrid,
    region: PoolingRegion,
    quad: QuadratureSpec,
    coarse: QuadratureSpec,
    interp: Interpolation,
    lambda: f64,
    norm_f: f64,
    pooled: ImageGrid,
    pooled_coarse: ImageGrid,
}

impl<'a> Theorem1Context<'a> {
    pub fn new(f: &'a ImageGrid, region: &PoolingRegion, quad: &QuadratureSpec, interp: Interpolation) -> Result<Self> {
        if !(region.measure() > 0.0) {
            return Err(Error::DegenerateInput("pooling region has zero measure".into()));
        }
        let lambda = jacobian_sup(region, quad)?;
        let coarse = quad.coarsened();
        let pooled = pool_with(f, region, quad, interp)?;
        let pooled_coarse = pool_with(f, region, &coarse, interp)?;
        Ok(Self {
            f,
            region: region.clone(),
            quad: quad.clone(),
            coarse,
            interp,
            lambda,
            norm_f: f.norm2(),
            pooled,
            pooled_coarse,
        })
    }

    pub fn pooled(&self) -> &ImageGrid {
        &self.pooled
    }

    /// `||Phi(L_g f) - Phi(f)|| <= sqrt(lambda) max(1, sqrt|J_g|) mu(G0 g Δ G0) / mu(G0) ||f||`.
    pub fn check(&self, g: &GroupElement, mc: &MonteCarloSpec) -> Result<VerificationReport> {
        check_same(self.region.group(), g.group())?;
        let measure = self.region.measure();
        let sd = symdiff_measure_auto(&self.region, g, mc)?;
        let prefactor = self.lambda.sqrt() * g.jacobian_sup().sqrt().max(1.0);
        let rhs = prefactor * sd.value / measure * self.norm_f;

        let moved = pool_translated(self.f, &self.region, &self.quad, g, self.interp)?;
        let lhs = moved.distance(&self.pooled)?;
        let moved_coarse = pool_translated(self.f, &self.region, &self.coarse, g, self.interp)?;
        let lhs_coarse = moved_coarse.distance(&self.pooled_coarse)?;

        let e_rs = if rhs > 0.0 {
            let plan = PoolPlan::new(&self.region, &self.quad, Some(g))?;
            resample_error(self.f, plan.nodes(), self.interp)?
        } else {
            0.0
        };
        let slack = Slack::new(
            relative(lhs - lhs_coarse, rhs),
            relative(2.0 * e_rs, rhs),
            if rhs > 0.0 { mc_slack(&sd) } else { 0.0 },
        );

        let mut values = BTreeMap::new();
        values.insert("lambda".into(), self.lambda);
        values.insert("prefactor".into(), prefactor);
        values.insert("region_measure".into(), measure);
        values.insert("symdiff_measure".into(), sd.value);
        values.insert("symdiff_std_error".into(), sd.std_error);
        values.insert("norm_f".into(), self.norm_f);
        values.insert("lhs_coarse".into(), lhs_coarse);
        values.insert("resample_error".into(), e_rs);
        let provenance = Provenance {
            grid: self.f.geometry(),
            interpolation: self.interp,
            quadrature: self.quad.clone(),
            coarse_quadrature: self.coarse.clone(),
            region: self.region.clone(),
            monte_carlo: (self.region.group() != crate::group::GroupId::Translations).then_some(*mc),
            group_element: Some(*g),
            generators: Vec::new(),
            image: None,
            sign_convention: None,
            values,
        };
        Ok(VerificationReport::new("theorem1", lhs, rhs, slack, provenance))
    }
}

pub fn theorem1_check(
    f: &ImageGrid,
    g: &GroupElement,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    mc: &MonteCarloSpec,
) -> Result<VerificationReport> {
    Theorem1Context::new(f, region, quad, Interpolation::Bicubic)?.check(g, mc)
}

/// Pooled bracket field `-Phi(X_[xi,xi'] f)`.
pub fn bracket_field(
    xi: &LieAlgebraElement,
    xi2: &LieAlgebraElement,
    f: &ImageGrid,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
) -> Result<ImageGrid> {
    let br = xi.bracket(xi2)?;
    Ok(pooled_field(&br, f, region, quad, Interpolation::Bicubic)?.scale(-1.0))
}

fn pooled_field(
    xi: &LieAlgebraElement,
    f: &ImageGrid,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    interp: Interpolation,
) -> Result<ImageGrid> {
    crate::pooling::pooled_generator_field_with(xi, f, region, quad, interp)
}

/// A pooled generator field at two quadrature levels with an error budget.
struct FieldBudget {
    fine: ImageGrid,
    coarse: ImageGrid,
    /// Bound on `||Phi(X f)_computed - Phi(X f)_exact||` from resampling
    /// and finite differences.
    error: f64,
}

fn field_budget(
    xi: &LieAlgebraElement,
    f: &ImageGrid,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    interp: Interpolation,
) -> Result<FieldBudget> {
    let plan = PoolPlan::new(region, quad, None)?;
    for g in plan.nodes() {
        f.check_action(g)?;
    }
    if xi.is_zero() {
        let z = ImageGrid::zeros(f.geometry());
        return Ok(FieldBudget {
            fine: z.clone(),
            coarse: z,
            error: 0.0,
        });
    }
    let x4 = generator_field_with(xi, f, DifferenceOrder::Fourth);
    let x2 = generator_field_with(xi, f, DifferenceOrder::Second);
    // Pooling is an average of isometries, so it does not amplify errors.
    let e_grad = x4.distance(&x2)?;
    let e_rs = resample_error(&x4, plan.nodes(), interp)?;
    let fine = plan.apply(&x4, interp)?;
    let coarse = pool_with(&x4, region, &quad.coarsened(), interp)?;
    Ok(FieldBudget {
        fine,
        coarse,
        error: e_grad + e_rs,
    })
}

/// `||[X~_xi, X~_xi']||^2 <= lambda rate([xi, xi'])^2 ||f||^2`.
pub fn theorem2_check(
    f: &ImageGrid,
    xi: &LieAlgebraElement,
    xi2: &LieAlgebraElement,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    mc: &MonteCarloSpec,
) -> Result<VerificationReport> {
    check_same(region.group(), xi.group())?;
    let interp = Interpolation::Bicubic;
    let lambda = jacobian_sup(region, quad)?;
    let br = xi.bracket(xi2)?;
    let rate = symdiff_rate_auto(region, &br, mc)?;
    let norm_f = f.norm2();
    let rhs = lambda * rate.rate * rate.rate * norm_f * norm_f;

    let fb = field_budget(&br, f, region, quad, interp)?;
    let bn = fb.fine.norm2();
    let lhs = bn * bn;
    let lhs_coarse = fb.coarse.norm2().powi(2);
    let d = fb.error;
    let slack = Slack::new(
        relative(lhs - lhs_coarse, rhs),
        relative(2.0 * bn * d + d * d, rhs),
        if rhs > 0.0 { rate_slack(&rate) } else { 0.0 },
    );

    let mut values = BTreeMap::new();
    values.insert("lambda".into(), lambda);
    values.insert("rate".into(), rate.rate);
    values.insert("rate_std_error".into(), rate.std_error);
    values.insert("rate_residual".into(), rate.residual);
    values.insert("norm_f".into(), norm_f);
    values.insert("bracket_norm".into(), bn);
    values.insert("lhs_coarse".into(), lhs_coarse);
    values.insert("field_error".into(), d);
    let provenance = Provenance {
        grid: f.geometry(),
        interpolation: interp,
        quadrature: quad.clone(),
        coarse_quadrature: quad.coarsened(),
        region: region.clone(),
        monte_carlo: (rate.std_error > 0.0).then_some(*mc),
        group_element: None,
        generators: vec![*xi, *xi2, br],
        image: None,
        sign_convention: Some(BRACKET_SIGN_CONVENTION.into()),
        values,
    };
    Ok(VerificationReport::new("theorem2", lhs, rhs, slack, provenance))
}

/// Sectional curvature of the pooled orbit in the plane spanned by
/// `X~_xi, X~_xi'`, normalized by the Gram determinant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureEstimate {
    pub kappa_hat: f64,
    pub bound: f64,
    pub gram: [[f64; 2]; 2],
    pub gram_det: f64,
    pub bracket_norm: f64,
    pub rate: RateEstimate,
    pub norm_f: f64,
}

/// Relative Gram-determinant threshold below which the fields are treated
/// as linearly dependent.
pub const GRAM_TOLERANCE: f64 = 1e-10;

fn gram_of(x: &ImageGrid, y: &ImageGrid) -> Result<([[f64; 2]; 2], f64)> {
    let xx = x.inner(x)?;
    let yy = y.inner(y)?;
    let xy = x.inner(y)?;
    let det = xx * yy - xy * xy;
    if !(xx > 0.0 && yy > 0.0) || det <= GRAM_TOLERANCE * xx * yy {
        return Err(Error::DegenerateBasis(format!(
            "pooled generator fields are linearly dependent (Gram determinant {det:.3e}, norms^2 {xx:.3e}, {yy:.3e})"
        )));
    }
    Ok(([[xx, xy], [xy, yy]], det))
}

pub fn sectional_curvature(
    f: &ImageGrid,
    xi: &LieAlgebraElement,
    xi2: &LieAlgebraElement,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    mc: &MonteCarloSpec,
) -> Result<CurvatureEstimate> {
    Ok(curvature_parts(f, xi, xi2, region, quad, mc)?.estimate)
}

struct CurvatureParts {
    estimate: CurvatureEstimate,
    coarse_kappa: f64,
    /// Upper perturbation of kappa from field errors.
    kappa_upper: f64,
}

fn curvature_parts(
    f: &ImageGrid,
    xi: &LieAlgebraElement,
    xi2: &LieAlgebraElement,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    mc: &MonteCarloSpec,
) -> Result<CurvatureParts> {
    check_same(region.group(), xi.group())?;
    let interp = Interpolation::Bicubic;
    jacobian_sup(region, quad)?;
    let br = xi.bracket(xi2)?;
    let fx = field_budget(xi, f, region, quad, interp)?;
    let fy = field_budget(xi2, f, region, quad, interp)?;
    let fb = field_budget(&br, f, region, quad, interp)?;
    let (gram, det) = gram_of(&fx.fine, &fy.fine)?;
    let (_, det_coarse) = gram_of(&fx.coarse, &fy.coarse)?;
    let bn = fb.fine.norm2();
    let kappa = 0.25 * bn * bn / det;
    let coarse_kappa = 0.25 * fb.coarse.norm2().powi(2) / det_coarse;

    let rate = symdiff_rate_auto(region, &br, mc)?;
    let norm_f = f.norm2();
    let bound = 0.25 * rate.rate * rate.rate * norm_f * norm_f / det;

    // First-order perturbation of det(Gram) and ||B||.
    let (nx, ny) = (gram[0][0].sqrt(), gram[1][1].sqrt());
    let (dx, dy) = (fx.error, fy.error);
    let ddet =
        2.0 * nx * ny * (ny * dx + nx * dy) + 2.0 * gram[0][1].abs() * (nx * dy + ny * dx) + 4.0 * dx * dy * nx * ny;
    let lower_det = (det - ddet).max(det * 1e-3);
    let kappa_upper = 0.25 * (bn + fb.error).powi(2) / lower_det;

    Ok(CurvatureParts {
        estimate: CurvatureEstimate {
            kappa_hat: kappa,
            bound,
            gram,
            gram_det: det,
            bracket_norm: bn,
            rate,
            norm_f,
        },
        coarse_kappa,
        kappa_upper,
    })
}

/// Curvature bound check: `kappa_hat <= bound (1 + eps)`.
pub fn corollary_check(
    f: &ImageGrid,
    xi: &LieAlgebraElement,
    xi2: &LieAlgebraElement,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    mc: &MonteCarloSpec,
) -> Result<(CurvatureEstimate, VerificationReport)> {
    let parts = curvature_parts(f, xi, xi2, region, quad, mc)?;
    let est = parts.estimate;
    let rhs = est.bound;
    let slack = Slack::new(
        relative(est.kappa_hat - parts.coarse_kappa, rhs),
        relative(parts.kappa_upper - est.kappa_hat, rhs),
        if rhs > 0.0 { rate_slack(&est.rate) } else { 0.0 },
    );
    let mut values = BTreeMap::new();
    values.insert("gram_xx".into(), est.gram[0][0]);
    values.insert("gram_xy".into(), est.gram[0][1]);
    values.insert("gram_yy".into(), est.gram[1][1]);
    values.insert("gram_det".into(), est.gram_det);
    values.insert("bracket_norm".into(), est.bracket_norm);
    values.insert("rate".into(), est.rate.rate);
    values.insert("rate_std_error".into(), est.rate.std_error);
    values.insert("norm_f".into(), est.norm_f);
    values.insert("kappa_coarse".into(), parts.coarse_kappa);
    let br = xi.bracket(xi2)?;
    let provenance = Provenance {
        grid: f.geometry(),
        interpolation: Interpolation::Bicubic,
        quadrature: quad.clone(),
        coarse_quadrature: quad.coarsened(),
        region: region.clone(),
        monte_carlo: (est.rate.std_error > 0.0).then_some(*mc),
        group_element: None,
        generators: vec![*xi, *xi2, br],
        image: None,
        sign_convention: Some(BRACKET_SIGN_CONVENTION.into()),
        values,
    };
    let report = VerificationReport::new("corollary", est.kappa_hat, rhs, slack, provenance);
    Ok((est, report))
}

/// The closed-form curvature bound `(zeta (x' - y') - zeta' (x - y))^2 / a^2`
/// stated for SE(2) generators on `[-theta, theta] x [0, a]^2` with unit
/// `||f||` and orthonormal pooled fields.
pub fn se2_curvature_closed_form(xi: &LieAlgebraElement, xi2: &LieAlgebraElement, a: f64) -> f64 {
    let v = xi.zeta() * (xi2.vx() - xi2.vy()) - xi2.zeta() * (xi.vx() - xi.vy());
    v * v / (a * a)
}

/// One row of a contraction profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    /// Region size parameter.
    pub a: f64,
    pub t: f64,
    /// `||L_g f - f||`.
    pub raw: f64,
    /// `||Phi(L_g f) - Phi(f)||`.
    pub pooled: f64,
    /// `pooled / raw`, 1 by convention when `raw = 0`.
    pub ratio: f64,
    pub theorem1_rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Sweeps regions of growing size and group elements `exp(t xi)`.
pub fn contraction_profile(
    f: &ImageGrid,
    regions: &[(f64, PoolingRegion)],
    xi: &LieAlgebraElement,
    ts: &[f64],
    quad: &QuadratureSpec,
    mc: &MonteCarloSpec,
) -> Result<Vec<ContractionRow>> {
    Ok(contraction_profile_reports(f, regions, xi, ts, quad, mc)?
        .into_iter()
        .map(|(row, _)| row)
        .collect())
}

/// As `contraction_profile`, keeping the contraction report behind each row.
pub fn contraction_profile_reports(
    f: &ImageGrid,
    regions: &[(f64, PoolingRegion)],
    xi: &LieAlgebraElement,
    ts: &[f64],
    quad: &QuadratureSpec,
    mc: &MonteCarloSpec,
) -> Result<Vec<(ContractionRow, VerificationReport)>> {
    let interp = Interpolation::Bicubic;
    let mut moved = Vec::with_capacity(ts.len());
    for &t in ts {
        let g = xi.exp(t);
        let raw = act(&g, f, interp)?.distance(f)?;
        moved.push((t, g, raw));
    }
    let mut rows = Vec::new();
    for (a, region) in regions {
        let ctx = Theorem1Context::new(f, region, quad, interp)?;
        for &(t, g, raw) in &moved {
            let rep = ctx.check(&g, mc)?;
            let row = ContractionRow {
                a: *a,
                t,
                raw,
                pooled: rep.measured_lhs,
                ratio: if raw == 0.0 { 1.0 } else { rep.measured_lhs / raw },
                theorem1_rhs: rep.analytic_rhs,
                slack: rep.slack.total,
                pass: rep.pass,
            };
            rows.push((row, rep));
        }
    }
    Ok(rows)
}

/// A unit-norm Gaussian centered at `(center, 0)` whose pooled fields for
/// `xi(1,0,0)` and `xi(0,1,0)` on an SE(2) region have unit Gram
/// determinant, found by bisection on the width at a reduced resolution.
/// Returns the spec; synthesize it at the target grid.
pub fn unit_gram_gaussian(
    geometry: GridGeometry,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    center: f64,
    sigma_range: (f64, f64),
) -> Result<ImageSpec> {
    let coarse = GridGeometry::new(geometry.half_width, geometry.resolution.min(192))?;
    let xi = LieAlgebraElement::se2(1.0, 0.0, 0.0);
    let xi2 = LieAlgebraElement::se2(0.0, 1.0, 0.0);
    let det_at = |sigma: f64| -> Result<f64> {
        let spec = unit_gaussian(center, sigma);
        let f = crate::image::synthesize(&spec, coarse, 0.0)?;
        let x = pooled_field(&xi, &f, region, quad, Interpolation::Bicubic)?;
        let y = pooled_field(&xi2, &f, region, quad, Interpolation::Bicubic)?;
        Ok(gram_of(&x, &y)?.1)
    };
    let (mut lo, mut hi) = sigma_range;
    let (d_lo, d_hi) = (det_at(lo)? - 1.0, det_at(hi)? - 1.0);
    if !(d_lo * d_hi < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "no unit Gram determinant for widths in [{lo}, {hi}] (det {:.4} .. {:.4})",
            d_lo + 1.0,
            d_hi + 1.0
        )));
    }
    for _ in 0..24 {
        let mid = (lo * hi).sqrt();
        if (det_at(mid)? - 1.0) * d_lo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(unit_gaussian(center, (lo * hi).sqrt()))
}

/// Gaussian with unit continuum L2 norm: amplitude `1 / (sigma sqrt(pi))`.
pub fn unit_gaussian(center: f64, sigma: f64) -> ImageSpec {
    ImageSpec::Gaussian {
        center: [center, 0.0],
        sigma,
        amplitude: 1.0 / (sigma * std::f64::consts::PI.sqrt()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupId;
    use crate::image::{gradient_with, synthesize};
    use crate::pooling::pool;

    fn geom(n: usize) -> GridGeometry {
        GridGeometry::new(6.0, n).unwrap()
    }

    fn gauss(g: GridGeometry, c: [f64; 2], sigma: f64) -> ImageGrid {
        synthesize(&ImageSpec::gaussian(c, sigma), g, 0.5).unwrap()
    }

    #[test]
    fn identity_gives_zero_sides() {
        let f = gauss(geom(64), [0.0, 0.0], 0.6);
        let r = PoolingRegion::se2_box(0.3, 1.0).unwrap();
        let rep = theorem1_check(
            &f,
            &GroupElement::se2(0.0, 0.0, 0.0),
            &r,
            &QuadratureSpec::uniform(3, 3).unwrap(),
            &MonteCarloSpec::new(20_000, 1),
        )
        .unwrap();
        assert_eq!(rep.measured_lhs, 0.0);
        assert_eq!(rep.analytic_rhs, 0.0);
        assert_eq!(rep.ratio, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn theorem1_translation_example() {
        let f = gauss(geom(256), [-0.5, -0.5], 0.5);
        let r = PoolingRegion::translation_box(1.0).unwrap();
        let rep = theorem1_check(
            &f,
            &GroupElement::translation(0.1, 0.0),
            &r,
            &QuadratureSpec::default_for(GroupId::Translations),
            &MonteCarloSpec::default(),
        )
        .unwrap();
        // 0.2 * sqrt(pi) * 0.5
        let expected = 0.2 * std::f64::consts::PI.sqrt() / 2.0;
        assert!((rep.analytic_rhs - expected).abs() < 1e-6, "{}", rep.analytic_rhs);
        assert!(rep.pass);
        assert!(rep.measured_lhs > 0.0);
        assert_eq!(rep.provenance.values["prefactor"], 1.0);
    }

    #[test]
    fn ratio_serialization() {
        assert_eq!(ratio(1.0, 0.0), f64::INFINITY);
        assert_eq!(ratio(0.0, 0.0), 0.0);
        let f = gauss(geom(48), [0.0, 0.0], 0.6);
        let r = PoolingRegion::translation_box(0.5).unwrap();
        let mut rep = theorem1_check(
            &f,
            &GroupElement::translation(0.05, 0.0),
            &r,
            &QuadratureSpec::uniform(2, 3).unwrap(),
            &MonteCarloSpec::default(),
        )
        .unwrap();
        let text = serde_json::to_string(&rep).unwrap();
        let back: VerificationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rep);
        assert_eq!(back.recompute_pass(), back.pass);
        rep.ratio = f64::INFINITY;
        let text = serde_json::to_string(&rep).unwrap();
        assert!(text.contains("\"ratio\":\"inf\""));
        let back: VerificationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.ratio, f64::INFINITY);
    }

    #[test]
    fn abelian_bracket_field_is_zero() {
        let f = gauss(geom(64), [0.0, 0.0], 0.6);
        let r = PoolingRegion::translation_box(1.0).unwrap();
        let b = bracket_field(
            &LieAlgebraElement::translation(1.0, 0.3),
            &LieAlgebraElement::translation(-0.2, 0.8),
            &f,
            &r,
            &QuadratureSpec::default_for(GroupId::Translations),
        )
        .unwrap();
        assert_eq!(b.max_abs(), 0.0);
    }

    #[test]
    fn se2_bracket_field_is_dy_of_pool() {
        let f = gauss(geom(192), [0.3, -0.2], 0.6);
        let r = PoolingRegion::se2_box(0.2, 0.8).unwrap();
        let q = QuadratureSpec::uniform(3, 5).unwrap();
        let xi = LieAlgebraElement::se2(1.0, 0.0, 0.0);
        let xi2 = LieAlgebraElement::se2(0.0, 1.0, 0.0);
        let b = bracket_field(&xi, &xi2, &f, &r, &q).unwrap();
        // [xi, xi'] = xi(0,0,1): -Phi(-d/dy f). With rotations in G0,
        // Phi(d/dy f) is not d/dy Phi(f), so compare to Phi(d/dy f).
        let dy = gradient_with(&f, DifferenceOrder::Fourth).y;
        let oracle = pool(&dy, &r, &q).unwrap();
        assert!(b.distance(&oracle).unwrap() / oracle.norm2() < 1e-10);
        // Bilinearity.
        let b2 = bracket_field(&xi.scale(2.0), &xi2, &f, &r, &q).unwrap();
        assert!(b2.distance(&b.scale(2.0)).unwrap() <= 1e-12 * b.norm2());
    }

    #[test]
    fn translation_bracket_matches_dy_of_pool() {
        // With a pure translation region Phi commutes with d/dy.
        let f = gauss(geom(192), [0.3, -0.2], 0.6);
        let r = PoolingRegion::se2_box(1e-9, 0.8).unwrap();
        let q = QuadratureSpec::new(vec![1, 5, 5]).unwrap();
        let b = bracket_field(
            &LieAlgebraElement::se2(1.0, 0.0, 0.0),
            &LieAlgebraElement::se2(0.0, 1.0, 0.0),
            &f,
            &r,
            &q,
        )
        .unwrap();
        let oracle = gradient_with(&pool(&f, &r, &q).unwrap(), DifferenceOrder::Fourth).y;
        assert!(b.distance(&oracle).unwrap() / oracle.norm2() < 1e-3);
    }

    #[test]
    fn theorem2_commuting_and_homogeneity() {
        let g = geom(96);
        let f = gauss(g, [0.2, 0.1], 0.6);
        let r = PoolingRegion::se2_box(0.3, 1.0).unwrap();
        let q = QuadratureSpec::uniform(3, 3).unwrap();
        let mc = MonteCarloSpec::default();
        let xi = LieAlgebraElement::se2(0.0, 1.0, 0.0);
        let rep = theorem2_check(&f, &xi, &xi.scale(2.0), &r, &q, &mc).unwrap();
        assert_eq!(rep.measured_lhs, 0.0);
        assert_eq!(rep.analytic_rhs, 0.0);
        assert!(rep.pass);

        let a = LieAlgebraElement::se2(1.0, 0.0, 0.0);
        let b = LieAlgebraElement::se2(0.0, 1.0, 0.0);
        let r1 = theorem2_check(&f, &a, &b, &r, &q, &mc).unwrap();
        let r2 = theorem2_check(&f.scale(2.0), &a, &b, &r, &q, &mc).unwrap();
        assert!(r1.pass);
        assert!((r2.measured_lhs / r1.measured_lhs - 4.0).abs() < 1e-12);
        assert!((r2.analytic_rhs / r1.analytic_rhs - 4.0).abs() < 1e-12);
        assert!((r2.ratio - r1.ratio).abs() < 1e-12 * r1.ratio);
    }

    #[test]
    fn curvature_properties() {
        let g = geom(96);
        let f = gauss(g, [0.8, 0.1], 0.5);
        let r = PoolingRegion::se2_box(0.3, 1.0).unwrap();
        let q = QuadratureSpec::uniform(3, 3).unwrap();
        let mc = MonteCarloSpec::default();
        let xi = LieAlgebraElement::se2(1.0, 0.0, 0.0);
        let xi2 = LieAlgebraElement::se2(0.0, 1.0, 0.0);
        let k = sectional_curvature(&f, &xi, &xi2, &r, &q, &mc).unwrap();
        assert!(k.kappa_hat >= 0.0);
        assert!(k.kappa_hat <= k.bound);
        let swapped = sectional_curvature(&f, &xi2, &xi, &r, &q, &mc).unwrap();
        assert!((swapped.kappa_hat - k.kappa_hat).abs() <= 1e-12 * k.kappa_hat);
        // kappa scales as c^-2; kappa / bound is scale free.
        for c in [0.5, 3.0] {
            let s = sectional_curvature(&f.scale(c), &xi, &xi2, &r, &q, &mc).unwrap();
            assert!((s.kappa_hat * c * c / k.kappa_hat - 1.0).abs() < 1e-10);
            assert!((s.kappa_hat / s.bound / (k.kappa_hat / k.bound) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn abelian_curvature_vanishes_and_dependent_fields_rejected() {
        let g = geom(96);
        let f = gauss(g, [0.2, 0.1], 0.5);
        let r = PoolingRegion::translation_box(1.0).unwrap();
        let q = QuadratureSpec::uniform(2, 5).unwrap();
        let mc = MonteCarloSpec::default();
        let k = sectional_curvature(
            &f,
            &LieAlgebraElement::translation(1.0, 0.0),
            &LieAlgebraElement::translation(0.0, 1.0),
            &r,
            &q,
            &mc,
        )
        .unwrap();
        assert!(k.kappa_hat <= 1e-8);
        let err = sectional_curvature(
            &f,
            &LieAlgebraElement::translation(1.0, 0.0),
            &LieAlgebraElement::translation(2.0, 0.0),
            &r,
            &q,
            &mc,
        );
        assert!(matches!(err, Err(Error::DegenerateBasis(_))));
    }

    #[test]
    fn closed_form_curvature_bound() {
        let a = LieAlgebraElement::se2(1.0, 0.0, 0.0);
        let b = LieAlgebraElement::se2(0.0, 1.0, 0.0);
        assert_eq!(se2_curvature_closed_form(&a, &b, 1.0), 1.0);
        assert_eq!(se2_curvature_closed_form(&a, &b, 2.0), 0.25);
    }

    #[test]
    fn contraction_profile_rows() {
        let g = geom(128);
        let f = gauss(g, [-0.5, -0.5], 0.5);
        let regions: Vec<(f64, PoolingRegion)> = [0.5, 1.0, 1.5]
            .iter()
            .map(|&a| (a, PoolingRegion::translation_box(a).unwrap()))
            .collect();
        let rows = contraction_profile(
            &f,
            &regions,
            &LieAlgebraElement::translation(1.0, 0.0),
            &[0.0, 0.05],
            &QuadratureSpec::uniform(2, 9).unwrap(),
            &MonteCarloSpec::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 6);
        for r in &rows {
            assert!(r.pass);
            if r.t == 0.0 {
                assert_eq!((r.raw, r.pooled, r.ratio), (0.0, 0.0, 1.0));
            }
        }
        let moving: Vec<f64> = rows.iter().filter(|r| r.t > 0.0).map(|r| r.ratio).collect();
        assert!(moving.windows(2).all(|w| w[1] <= w[0]), "{moving:?}");
    }

    #[test]
    fn calibrated_gaussian_has_unit_gram() {
        let g = geom(160);
        let r = PoolingRegion::se2_box(0.4, 1.0).unwrap();
        let q = QuadratureSpec::default_for(GroupId::Se2);
        let spec = unit_gram_gaussian(g, &r, &q, 2.0, (0.2, 0.4)).unwrap();
        let f = synthesize(&spec, g, 0.0).unwrap();
        assert!((f.norm2() - 1.0).abs() < 1e-6);
        let xi = LieAlgebraElement::se2(1.0, 0.0, 0.0);
        let xi2 = LieAlgebraElement::se2(0.0, 1.0, 0.0);
        let est = sectional_curvature(&f, &xi, &xi2, &r, &q, &MonteCarloSpec::default()).unwrap();
        assert!((est.gram_det - 1.0).abs() < 1e-5, "{}", est.gram_det);
        assert!(est.kappa_hat >= 0.0 && est.kappa_hat <= 1.0);
        assert!(unit_gram_gaussian(g, &r, &q, 2.0, (0.2, 0.21)).is_err());
    }
}
