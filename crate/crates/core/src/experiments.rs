//! Configured verification runs and the files they write.
//!
//! A run collects every artifact in memory and writes it afterwards, so the
//! bytes on disk depend only on the config and seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    contraction_profile_reports, corollary_check, se2_curvature_closed_form, sectional_curvature, theorem2_check,
    unit_gram_gaussian, CurvatureEstimate, Provenance, Slack, Theorem1Context, VerificationReport,
};
use crate::group::{GroupElement, GroupId, LieAlgebraElement};
use crate::haar::{Interval, MonteCarloSpec, PoolingRegion};
use crate::image::{synthesize, GridGeometry, ImageGrid, ImageSpec, Interpolation};
use crate::plot::{line_plot, Series};
use crate::pooling::QuadratureSpec;
use crate::rng::{derive_seed, CounterRng};
use crate::signatures::{
    draw_templates, l2_pooled_response, relative_difference, signature, signature_translated, Nonlinearity, Signature,
};

/// Smallest grid accepted by a run; coarser grids leave no room for a
/// support margin around any useful test image.
pub const MIN_RESOLUTION: usize = 16;

/// Tolerance on the identity between squared-response signatures and
/// L2-pooled responses.
pub const L2_IDENTITY_TOLERANCE: f64 = 1e-10;

/// Tolerance on the curvature of flat (commuting) direction pairs.
pub const ABELIAN_CURVATURE_TOLERANCE: f64 = 1e-8;

const STREAM_MC: u64 = 1;
const STREAM_IMAGE: u64 = 2;
const STREAM_DISPLACEMENT: u64 = 3;
const STREAM_GENERATORS: u64 = 4;
const STREAM_TEMPLATES: u64 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Theorem1Sweep,
    Theorem2Check,
    CurvatureSe2,
    SignatureInvariance,
    ContractionProfile,
    FullSuite,
}

impl ExperimentKind {
    /// The experiments run by `full_suite`, in order.
    pub const SUITE: [ExperimentKind; 5] = [
        ExperimentKind::Theorem1Sweep,
        ExperimentKind::Theorem2Check,
        ExperimentKind::CurvatureSe2,
        ExperimentKind::SignatureInvariance,
        ExperimentKind::ContractionProfile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Theorem1Sweep => "theorem1_sweep",
            ExperimentKind::Theorem2Check => "theorem2_check",
            ExperimentKind::CurvatureSe2 => "curvature_se2",
            ExperimentKind::SignatureInvariance => "signature_invariance",
            ExperimentKind::ContractionProfile => "contraction_profile",
            ExperimentKind::FullSuite => "full_suite",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Randomized instances per sweep.
    pub instances: usize,
    /// Largest displacement per axis as a fraction of the region side.
    pub max_fraction: f64,
    /// Region sizes `a` for the contraction profile.
    pub scales: Vec<f64>,
    /// Flow times `t` for the contraction profile.
    pub times: Vec<f64>,
    /// Profile generator `(zeta, vx, vy)`.
    pub generator: [f64; 3],
    /// Angular half-width of SE(2) profile regions.
    pub theta: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            instances: 10,
            max_fraction: 0.3,
            scales: vec![0.25, 0.5, 1.0],
            times: vec![0.05, 0.1, 0.2, 0.3],
            generator: [0.0, 1.0, 0.0],
            theta: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignatureSpec {
    pub templates: usize,
    pub nonlinearities: Vec<Nonlinearity>,
    /// Largest accepted invariance error on a full compact region.
    pub tolerance: f64,
}

impl Default for SignatureSpec {
    fn default() -> Self {
        Self {
            templates: 8,
            nonlinearities: vec![
                Nonlinearity::Sigmoid,
                Nonlinearity::Relu,
                Nonlinearity::Modulus,
                Nonlinearity::Tanh,
                Nonlinearity::AbsPower { p: 2.0 },
            ],
            tolerance: 1e-2,
        }
    }
}

/// A run description. Every field but `experiment` has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridGeometry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupId>,
    /// One `[lo, hi]` interval per group axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<Interval>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSpec>,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub signature: SignatureSpec,
    /// Output directory; the command line may override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 0,
            grid: GridGeometry::default(),
            group: None,
            region: None,
            image: None,
            quadrature: None,
            monte_carlo: None,
            sweep: SweepSpec::default(),
            signature: SignatureSpec::default(),
            output: None,
        }
    }

    /// Parses and validates JSON; syntax and schema errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(|e| Error::Config(format!("grid: {e}")))?;
        if self.grid.resolution < MIN_RESOLUTION {
            return Err(Error::DegenerateInput(format!(
                "grid.resolution {} is below the minimum {MIN_RESOLUTION}; no support margin fits",
                self.grid.resolution
            )));
        }
        if let Some(mc) = &self.monte_carlo {
            mc.validate().map_err(|e| Error::Config(format!("monte_carlo: {e}")))?;
        }
        if let Some(spec) = &self.image {
            spec.validate().map_err(|e| Error::Config(format!("image: {e}")))?;
        }
        let s = &self.sweep;
        if s.instances == 0 {
            return Err(Error::Config("sweep.instances must be at least 1".into()));
        }
        if !(s.max_fraction > 0.0 && s.max_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "sweep.max_fraction must lie in (0, 1], got {}",
                s.max_fraction
            )));
        }
        if s.scales.is_empty() || s.scales.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::Config("sweep.scales must be nonempty and positive".into()));
        }
        if s.times.is_empty() || s.times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("sweep.times must be nonempty and finite".into()));
        }
        if s.generator.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep.generator must be finite".into()));
        }
        if !(s.theta > 0.0 && s.theta <= std::f64::consts::PI) {
            return Err(Error::Config(format!(
                "sweep.theta must lie in (0, pi], got {}",
                s.theta
            )));
        }
        let sig = &self.signature;
        if sig.templates == 0 {
            return Err(Error::Config("signature.templates must be at least 1".into()));
        }
        if sig.nonlinearities.is_empty() {
            return Err(Error::Config("signature.nonlinearities must be nonempty".into()));
        }
        for eta in &sig.nonlinearities {
            eta.validate()
                .map_err(|e| Error::Config(format!("signature.nonlinearities: {e}")))?;
        }
        if !(sig.tolerance > 0.0) {
            return Err(Error::Config("signature.tolerance must be positive".into()));
        }

        match self.experiment {
            ExperimentKind::FullSuite => {
                for (field, set) in [
                    ("group", self.group.is_some()),
                    ("region", self.region.is_some()),
                    ("image", self.image.is_some()),
                    ("quadrature", self.quadrature.is_some()),
                ] {
                    if set {
                        return Err(Error::Config(format!(
                            "field `{field}` is not used by full_suite; set it per experiment"
                        )));
                    }
                }
                Ok(())
            }
            ExperimentKind::CurvatureSe2 if self.group.is_some_and(|g| g != GroupId::Se2) => {
                Err(Error::Config("curvature_se2 requires group \"se2\"".into()))
            }
            ExperimentKind::ContractionProfile => {
                if self.region.is_some() {
                    return Err(Error::Config(
                        "contraction_profile builds its regions from sweep.scales; remove `region`".into(),
                    ));
                }
                if !matches!(self.group(), GroupId::Translations | GroupId::Se2) {
                    return Err(Error::Config(
                        "contraction_profile supports groups translations and se2".into(),
                    ));
                }
                self.quadrature_for(&self.profile_regions()?[0].1)?;
                Ok(())
            }
            _ => {
                let region = self.region()?;
                self.quadrature_for(&region)?;
                Ok(())
            }
        }
    }

    fn group(&self) -> GroupId {
        self.group.unwrap_or(match self.experiment {
            ExperimentKind::SignatureInvariance => GroupId::Rotations,
            ExperimentKind::ContractionProfile => GroupId::Translations,
            _ => GroupId::Se2,
        })
    }

    fn region(&self) -> Result<PoolingRegion> {
        let group = self.group();
        let region = match (&self.region, group) {
            (Some(bounds), _) => PoolingRegion::new(group, bounds.clone()),
            (None, GroupId::Rotations) if self.experiment == ExperimentKind::SignatureInvariance => {
                Ok(PoolingRegion::full_circle())
            }
            (None, GroupId::Rotations) => PoolingRegion::new(group, vec![Interval::new(-0.5, 0.5)]),
            (None, GroupId::Translations) => PoolingRegion::translation_box(1.0),
            (None, GroupId::Se2) => PoolingRegion::se2_box(0.4, 1.0),
            (None, GroupId::Shear) => PoolingRegion::new(
                group,
                vec![
                    Interval::new(-0.3, 0.3),
                    Interval::new(0.0, 1.0),
                    Interval::new(0.0, 1.0),
                ],
            ),
        };
        region.map_err(|e| Error::Config(format!("region: {e}")))
    }

    fn profile_regions(&self) -> Result<Vec<(f64, PoolingRegion)>> {
        self.sweep
            .scales
            .iter()
            .map(|&a| {
                let r = match self.group() {
                    GroupId::Se2 => PoolingRegion::se2_box(self.sweep.theta, a),
                    _ => PoolingRegion::translation_box(a),
                };
                r.map(|r| (a, r))
                    .map_err(|e| Error::Config(format!("sweep.scales: {e}")))
            })
            .collect()
    }

    fn quadrature_for(&self, region: &PoolingRegion) -> Result<QuadratureSpec> {
        let q = match &self.quadrature {
            Some(q) => q.clone(),
            None if self.experiment == ExperimentKind::SignatureInvariance && region.group() == GroupId::Rotations => {
                QuadratureSpec::new(vec![96])?
            }
            None => QuadratureSpec::default_for(region.group()),
        };
        q.check(region).map_err(|e| Error::Config(format!("quadrature: {e}")))?;
        Ok(q)
    }

    fn monte_carlo(&self) -> MonteCarloSpec {
        self.monte_carlo.unwrap_or_else(|| MonteCarloSpec {
            seed: derive_seed(self.seed, STREAM_MC),
            ..MonteCarloSpec::default()
        })
    }

    /// The config as stored next to the results: no output path.
    fn echo(&self) -> Self {
        Self {
            output: None,
            ..self.clone()
        }
    }
}

/// A randomized test image: Gaussian, Gabor or band-limited noise, compact
/// enough that pooling over a unit box plus a displacement keeps the margin.
pub fn random_image(seed: u64, index: usize) -> ImageSpec {
    let mut rng = CounterRng::new(derive_seed(derive_seed(seed, STREAM_IMAGE), index as u64), 8);
    rng.seek(0);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.uniform();
    let center = [u(-0.8, 0.2), u(-0.8, 0.2)];
    match index % 3 {
        0 => ImageSpec::Gaussian {
            center,
            sigma: u(0.3, 0.5),
            amplitude: 1.0,
        },
        1 => ImageSpec::Gabor {
            center,
            sigma: u(0.3, 0.5),
            frequency: u(0.3, 1.0),
            orientation: u(0.0, std::f64::consts::PI),
            phase: u(0.0, std::f64::consts::TAU),
            amplitude: 1.0,
        },
        _ => ImageSpec::BandlimitedNoise {
            seed: derive_seed(seed, index as u64),
            correlation_length: 0.3,
            envelope_sigma: u(0.3, 0.45),
            center,
            amplitude: 1.0,
        },
    }
}

/// A group element with each coordinate uniform in `+-fraction` of the
/// matching region side.
pub fn random_displacement(seed: u64, index: usize, region: &PoolingRegion, fraction: f64) -> GroupElement {
    let mut rng = CounterRng::new(derive_seed(derive_seed(seed, STREAM_DISPLACEMENT), index as u64), 3);
    rng.seek(0);
    let coords: Vec<f64> = region
        .bounds()
        .iter()
        .map(|iv| (2.0 * rng.uniform() - 1.0) * fraction * iv.len())
        .collect();
    GroupElement::from_coords(region.group(), &coords).expect("one coordinate per axis")
}

/// A rotation angle uniform in `[-pi, pi)`.
pub fn random_angle(seed: u64, index: usize) -> f64 {
    let mut rng = CounterRng::new(derive_seed(derive_seed(seed, STREAM_DISPLACEMENT), index as u64), 1);
    rng.seek(0);
    (2.0 * rng.uniform() - 1.0) * std::f64::consts::PI
}

/// Generator with coordinates ordered as the group axes.
pub fn algebra_from_coords(group: GroupId, c: &[f64]) -> Result<LieAlgebraElement> {
    match (group, c) {
        (GroupId::Translations, [vx, vy]) => Ok(LieAlgebraElement::translation(*vx, *vy)),
        (GroupId::Rotations, [z]) => Ok(LieAlgebraElement::rotation(*z)),
        (GroupId::Se2 | GroupId::Shear, [z, vx, vy]) => LieAlgebraElement::new(group, *z, *vx, *vy),
        _ => Err(Error::InvalidArgument(format!(
            "{group} generators have {} coordinates, got {}",
            group.dim(),
            c.len()
        ))),
    }
}

/// A generator with coordinates uniform in `[-1, 1]`.
pub fn random_generator(seed: u64, index: usize, group: GroupId) -> LieAlgebraElement {
    let mut rng = CounterRng::new(derive_seed(derive_seed(seed, STREAM_GENERATORS), index as u64), 3);
    rng.seek(0);
    let c: Vec<f64> = (0..group.dim()).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    algebra_from_coords(group, &c).expect("one coordinate per axis")
}

fn image_kind(spec: &ImageSpec) -> &'static str {
    match spec {
        ImageSpec::Gaussian { .. } => "gaussian",
        ImageSpec::AnisotropicGaussian { .. } => "anisotropic_gaussian",
        ImageSpec::Gabor { .. } => "gabor",
        ImageSpec::BandlimitedNoise { .. } => "bandlimited_noise",
    }
}

fn default_image() -> ImageSpec {
    ImageSpec::gaussian([-0.5, -0.5], 0.5)
}

/// Off-center and anisotropic, so rotations change it.
fn default_signature_image() -> ImageSpec {
    ImageSpec::AnisotropicGaussian {
        center: [0.8, 0.3],
        sigmas: [0.6, 0.3],
        orientation: 0.4,
        amplitude: 1.0,
    }
}

/// Files of one experiment, relative to its output directory.
#[derive(Debug, Default)]
struct Artifacts {
    reports: Vec<VerificationReport>,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn add_text(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }
}

/// A report that did not meet its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    /// Reports file, relative to the run's output directory.
    pub file: String,
    pub index: usize,
    pub id: String,
    pub measured_lhs: f64,
    pub analytic_rhs: f64,
    pub slack_total: f64,
}

impl Failure {
    /// `file#index`, naming the offending report.
    pub fn location(&self) -> String {
        format!("{}#{}", self.file, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub report_count: usize,
    pub passed: bool,
    pub failures: Vec<Failure>,
    pub config: ExperimentConfig,
}

/// Runs `config`, writing its artifacts under `out`.
pub fn run(config: &ExperimentConfig, out: &Path, progress: &(dyn Fn(&str) + Sync)) -> Result<RunSummary> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let mut failures = Vec::new();
    let mut count = 0;
    let kinds: Vec<(ExperimentKind, String)> = match config.experiment {
        ExperimentKind::FullSuite => ExperimentKind::SUITE
            .iter()
            .map(|k| (*k, format!("{}/", k.name())))
            .collect(),
        k => vec![(k, String::new())],
    };
    for (kind, prefix) in kinds {
        let sub = ExperimentConfig {
            experiment: kind,
            ..config.clone()
        };
        progress(&format!("running {}", kind.name()));
        let art = run_one(&sub, progress)?;
        let dir = out.join(&prefix);
        fs::create_dir_all(&dir)?;
        for (name, bytes) in &art.files {
            fs::write(dir.join(name), bytes)?;
        }
        let mut bytes = serde_json::to_vec_pretty(&art.reports)?;
        bytes.push(b'\n');
        fs::write(dir.join("reports.json"), bytes)?;
        count += art.reports.len();
        for (index, r) in art.reports.iter().enumerate() {
            if !r.pass {
                failures.push(Failure {
                    file: format!("{prefix}reports.json"),
                    index,
                    id: r.id.clone(),
                    measured_lhs: r.measured_lhs,
                    analytic_rhs: r.analytic_rhs,
                    slack_total: r.slack.total,
                });
            }
        }
    }
    let summary = RunSummary {
        experiment: config.experiment,
        seed: config.seed,
        report_count: count,
        passed: failures.is_empty(),
        failures,
        config: config.echo(),
    };
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    fs::write(out.join("summary.json"), bytes)?;
    Ok(summary)
}

fn run_one(cfg: &ExperimentConfig, progress: &(dyn Fn(&str) + Sync)) -> Result<Artifacts> {
    match cfg.experiment {
        ExperimentKind::Theorem1Sweep => theorem1_sweep(cfg, progress),
        ExperimentKind::Theorem2Check => theorem2_suite(cfg, progress),
        ExperimentKind::CurvatureSe2 => curvature_se2(cfg),
        ExperimentKind::SignatureInvariance => signature_invariance(cfg, progress),
        ExperimentKind::ContractionProfile => contraction(cfg),
        ExperimentKind::FullSuite => unreachable!("expanded by run"),
    }
}

fn slack_columns(s: &Slack) -> String {
    format!("{},{},{},{}", s.quadrature, s.interpolation, s.monte_carlo, s.total)
}

fn theorem1_sweep(cfg: &ExperimentConfig, progress: &(dyn Fn(&str) + Sync)) -> Result<Artifacts> {
    let region = cfg.region()?;
    let quad = cfg.quadrature_for(&region)?;
    let mc = cfg.monte_carlo();
    let fixed = match &cfg.image {
        Some(spec) => Some((spec.clone(), synthesize(spec, cfg.grid, 0.0)?)),
        None => None,
    };
    let fixed_ctx = match &fixed {
        Some((_, f)) => Some(Theorem1Context::new(f, &region, &quad, Interpolation::Bicubic)?),
        None => None,
    };
    let mut art = Artifacts::default();
    let mut csv = String::from(
        "instance,image,theta,shear,tx,ty,lhs,rhs,ratio,slack_quadrature,slack_interpolation,slack_monte_carlo,slack_total,pass\n",
    );
    for i in 0..cfg.sweep.instances {
        let g = random_displacement(cfg.seed, i, &region, cfg.sweep.max_fraction);
        let (spec, rep) = match (&fixed, &fixed_ctx) {
            (Some((spec, _)), Some(ctx)) => (spec.clone(), ctx.check(&g, &mc)?),
            _ => {
                let spec = random_image(cfg.seed, i);
                let f = synthesize(&spec, cfg.grid, 0.0)?;
                let rep = Theorem1Context::new(&f, &region, &quad, Interpolation::Bicubic)?.check(&g, &mc)?;
                (spec, rep)
            }
        };
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{},{}\n",
            image_kind(&spec),
            g.theta(),
            g.shear_param(),
            g.tx(),
            g.ty(),
            rep.measured_lhs,
            rep.analytic_rhs,
            rep.ratio,
            slack_columns(&rep.slack),
            rep.pass
        ));
        progress(&format!("  theorem1 {i}: ratio {:.4} pass {}", rep.ratio, rep.pass));
        art.reports.push(rep.with_image(spec));
    }
    let lhs: Vec<(f64, f64)> = art
        .reports
        .iter()
        .enumerate()
        .map(|(i, r)| (i as f64, r.measured_lhs))
        .collect();
    let rhs: Vec<(f64, f64)> = art
        .reports
        .iter()
        .enumerate()
        .map(|(i, r)| (i as f64, r.analytic_rhs * (1.0 + r.slack.total)))
        .collect();
    art.add_text("theorem1.csv", csv);
    art.add_text(
        "theorem1.svg",
        line_plot(
            "Pooled displacement against its bound",
            "instance",
            "L2 distance",
            &[Series::new("measured", lhs), Series::new("bound with slack", rhs)],
        ),
    );
    Ok(art)
}

fn theorem2_suite(cfg: &ExperimentConfig, progress: &(dyn Fn(&str) + Sync)) -> Result<Artifacts> {
    let region = cfg.region()?;
    let group = region.group();
    let quad = cfg.quadrature_for(&region)?;
    let mc = cfg.monte_carlo();
    let base_spec = cfg.image.clone().unwrap_or_else(default_image);
    let base = synthesize(&base_spec, cfg.grid, 0.0)?;

    let dim = group.dim();
    let unit = |k: usize| -> Result<LieAlgebraElement> {
        let mut c = vec![0.0; dim];
        c[k] = 1.0;
        algebra_from_coords(group, &c)
    };
    let mut cases: Vec<(String, ImageSpec, LieAlgebraElement, LieAlgebraElement)> = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            cases.push((format!("basis_{i}{j}"), base_spec.clone(), unit(i)?, unit(j)?));
        }
    }
    for i in 0..cfg.sweep.instances {
        let spec = cfg.image.clone().unwrap_or_else(|| random_image(cfg.seed, i));
        let xi = random_generator(cfg.seed, 2 * i, group);
        let xi2 = random_generator(cfg.seed, 2 * i + 1, group);
        cases.push((format!("random_{i}"), spec, xi, xi2));
    }

    let mut art = Artifacts::default();
    let mut csv = String::from(
        "case,image,xi,xi2,lhs,rhs,ratio,slack_quadrature,slack_interpolation,slack_monte_carlo,slack_total,pass\n",
    );
    for (name, spec, xi, xi2) in cases {
        let f = if spec == base_spec {
            base.clone()
        } else {
            synthesize(&spec, cfg.grid, 0.0)?
        };
        let rep = theorem2_check(&f, &xi, &xi2, &region, &quad, &mc)?;
        let coords = |x: &LieAlgebraElement| format!("{} {} {}", x.zeta(), x.vx(), x.vy());
        csv.push_str(&format!(
            "{name},{},{},{},{},{},{},{},{}\n",
            image_kind(&spec),
            coords(&xi),
            coords(&xi2),
            rep.measured_lhs,
            rep.analytic_rhs,
            rep.ratio,
            slack_columns(&rep.slack),
            rep.pass
        ));
        progress(&format!("  theorem2 {name}: ratio {:.4} pass {}", rep.ratio, rep.pass));
        art.reports.push(rep.with_image(spec));
    }
    art.add_text("theorem2.csv", csv);
    Ok(art)
}

#[derive(Serialize)]
struct CurvatureRecord {
    pair: String,
    xi: LieAlgebraElement,
    xi2: LieAlgebraElement,
    estimate: CurvatureEstimate,
    closed_form: Option<f64>,
}

fn curvature_se2(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let region = cfg.region()?;
    let quad = cfg.quadrature_for(&region)?;
    let mc = cfg.monte_carlo();
    let spec = match &cfg.image {
        Some(s) => s.clone(),
        None => unit_gram_gaussian(cfg.grid, &region, &quad, 2.0, (0.2, 0.4))?,
    };
    let f = synthesize(&spec, cfg.grid, 0.0)?;
    let xi = LieAlgebraElement::se2(1.0, 0.0, 0.0);
    let xi2 = LieAlgebraElement::se2(0.0, 1.0, 0.0);
    let (est, corollary) = corollary_check(&f, &xi, &xi2, &region, &quad, &mc)?;

    // The closed form assumes a unit-norm image with orthonormal pooled
    // fields; for other images it is rescaled the same way as the bound.
    let a = region.bounds()[1].len();
    let closed = se2_curvature_closed_form(&xi, &xi2, a);
    let closed_rhs = closed * est.norm_f * est.norm_f / est.gram_det;
    let rescale = if closed_rhs > 0.0 {
        corollary.analytic_rhs / closed_rhs
    } else {
        0.0
    };
    let s = corollary.slack;
    let mut prov: Provenance = corollary.provenance.clone();
    prov.values.insert("closed_form_unit".into(), closed);
    prov.values.insert("side".into(), a);
    let closed_report = VerificationReport::new(
        "curvature_closed_form",
        est.kappa_hat,
        closed_rhs,
        Slack::new(s.quadrature * rescale, s.interpolation * rescale, 0.0),
        prov,
    );

    let tx = LieAlgebraElement::se2(0.0, 1.0, 0.0);
    let ty = LieAlgebraElement::se2(0.0, 0.0, 1.0);
    let flat = sectional_curvature(&f, &tx, &ty, &region, &quad, &mc)?;
    let mut flat_prov = corollary.provenance.clone();
    flat_prov.generators = vec![tx, ty, tx.bracket(&ty)?];
    flat_prov.values = BTreeMap::from([
        ("gram_det".to_string(), flat.gram_det),
        ("bound".to_string(), flat.bound),
    ]);
    let flat_report = VerificationReport::new(
        "curvature_abelian",
        flat.kappa_hat,
        ABELIAN_CURVATURE_TOLERANCE,
        Slack::default(),
        flat_prov,
    );

    let mut art = Artifacts::default();
    let mut csv = String::from("pair,kappa_hat,bound,closed_form_bound,gram_det,bracket_norm\n");
    csv.push_str(&format!(
        "rotation_translation,{},{},{},{},{}\n",
        est.kappa_hat, est.bound, closed_rhs, est.gram_det, est.bracket_norm
    ));
    csv.push_str(&format!(
        "translation_translation,{},{},,{},{}\n",
        flat.kappa_hat, flat.bound, flat.gram_det, flat.bracket_norm
    ));
    art.add_text("curvature.csv", csv);
    art.add_json(
        "curvature.json",
        &serde_json::json!({
            "image": spec,
            "pairs": [
                CurvatureRecord { pair: "rotation_translation".into(), xi, xi2, estimate: est, closed_form: Some(closed_rhs) },
                CurvatureRecord { pair: "translation_translation".into(), xi: tx, xi2: ty, estimate: flat, closed_form: None },
            ],
        }),
    )?;
    art.reports = vec![
        corollary.with_image(spec.clone()),
        closed_report.with_image(spec.clone()),
        flat_report.with_image(spec),
    ];
    Ok(art)
}

fn is_full_compact(region: &PoolingRegion) -> bool {
    region.group() == GroupId::Rotations && (region.measure() - std::f64::consts::TAU).abs() < 1e-12
}

fn signature_provenance(
    cfg: &ExperimentConfig,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    g: Option<GroupElement>,
    values: BTreeMap<String, f64>,
) -> Provenance {
    Provenance {
        grid: cfg.grid,
        interpolation: Interpolation::Bicubic,
        quadrature: quad.clone(),
        coarse_quadrature: quad.coarsened(),
        region: region.clone(),
        monte_carlo: None,
        group_element: g,
        generators: Vec::new(),
        image: None,
        sign_convention: None,
        values,
    }
}

fn signature_invariance(cfg: &ExperimentConfig, progress: &(dyn Fn(&str) + Sync)) -> Result<Artifacts> {
    let region = cfg.region()?;
    let quad = cfg.quadrature_for(&region)?;
    let spec = cfg.image.clone().unwrap_or_else(default_signature_image);
    let f = synthesize(&spec, cfg.grid, 0.0)?;
    let template_seed = derive_seed(cfg.seed, STREAM_TEMPLATES);
    let templates = draw_templates(cfg.signature.templates, cfg.grid, template_seed)?;
    let nonlins = &cfg.signature.nonlinearities;
    let base = signature(&f, &templates, nonlins, &region, &quad)?;
    let full = is_full_compact(&region);

    let mut art = Artifacts::default();
    let mut csv = String::from("instance,theta,shear,tx,ty,invariance_error\n");
    let mut errors = Vec::new();
    for i in 0..cfg.sweep.instances {
        let g = if region.group() == GroupId::Rotations {
            GroupElement::rotation(random_angle(cfg.seed, i))
        } else {
            random_displacement(cfg.seed, i, &region, cfg.sweep.max_fraction)
        };
        let moved = signature_translated(&f, &g, &templates, nonlins, &region, &quad)?;
        let err = relative_difference(&base, &moved);
        csv.push_str(&format!(
            "{i},{},{},{},{},{err}\n",
            g.theta(),
            g.shear_param(),
            g.tx(),
            g.ty()
        ));
        progress(&format!("  signature {i}: invariance error {err:.3e}"));
        errors.push(err);
        // Invariance is only claimed when the pooling region is the whole group.
        if full {
            let values = BTreeMap::from([("template_seed".to_string(), template_seed as f64)]);
            let prov = signature_provenance(cfg, &region, &quad, Some(g), values);
            let rep = VerificationReport::new(
                "signature_invariance",
                err,
                cfg.signature.tolerance,
                Slack::default(),
                prov,
            );
            art.reports.push(rep.with_image(spec.clone()));
        }
    }

    let squared = signature(&f, &templates, &[Nonlinearity::AbsPower { p: 2.0 }], &region, &quad)?;
    let l2 = l2_pooled_response(&f, &templates, &region, &quad)?;
    let mismatch = l2
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let lhs = (squared.node_count as f64 * squared.get(k, 0)).sqrt();
            (lhs - v).abs() / v.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    let values = BTreeMap::from([
        ("template_seed".to_string(), template_seed as f64),
        ("node_count".to_string(), squared.node_count as f64),
    ]);
    let prov = signature_provenance(cfg, &region, &quad, None, values);
    art.reports.push(
        VerificationReport::new(
            "l2_pooling_identity",
            mismatch,
            L2_IDENTITY_TOLERANCE,
            Slack::default(),
            prov,
        )
        .with_image(spec.clone()),
    );

    let mut sig_csv = Vec::new();
    base.write_csv(&mut sig_csv)?;
    art.files.push(("signature.csv".into(), sig_csv));
    art.add_text("invariance.csv", csv);
    #[derive(Serialize)]
    struct SignatureRecord<'a> {
        image: &'a ImageSpec,
        template_seed: u64,
        full_group: bool,
        signature: &'a Signature,
        invariance_errors: &'a [f64],
    }
    art.add_json(
        "signature.json",
        &SignatureRecord {
            image: &spec,
            template_seed,
            full_group: full,
            signature: &base,
            invariance_errors: &errors,
        },
    )?;
    Ok(art)
}

fn contraction(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let regions = cfg.profile_regions()?;
    let quad = cfg.quadrature_for(&regions[0].1)?;
    let mc = cfg.monte_carlo();
    let group = cfg.group();
    let [z, vx, vy] = cfg.sweep.generator;
    let xi = match group {
        GroupId::Translations => LieAlgebraElement::translation(vx, vy),
        _ => LieAlgebraElement::se2(z, vx, vy),
    };
    let spec = cfg.image.clone().unwrap_or_else(default_image);
    let f: ImageGrid = synthesize(&spec, cfg.grid, 0.0)?;
    let rows = contraction_profile_reports(&f, &regions, &xi, &cfg.sweep.times, &quad, &mc)?;

    let mut art = Artifacts::default();
    let mut csv = String::from("a,t,raw,pooled,ratio,theorem1_rhs,slack,pass\n");
    for (r, _) in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.a, r.t, r.raw, r.pooled, r.ratio, r.theorem1_rhs, r.slack, r.pass
        ));
    }
    let series: Vec<Series> = regions
        .iter()
        .map(|(a, _)| {
            Series::new(
                format!("a={a}"),
                rows.iter()
                    .filter(|(r, _)| r.a == *a)
                    .map(|(r, _)| (r.t, r.ratio))
                    .collect(),
            )
        })
        .collect();
    art.add_text("profile.csv", csv);
    art.add_text(
        "profile.svg",
        line_plot("Contraction of pooled displacements", "t", "pooled / raw", &series),
    );
    art.add_json("profile.json", &rows.iter().map(|(r, _)| r).collect::<Vec<_>>())?;
    art.reports = rows.into_iter().map(|(_, rep)| rep.with_image(spec.clone())).collect();
    Ok(art)
}
