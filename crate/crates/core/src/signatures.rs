//! Orbit-averaged template responses `h^k_n(f) = avg_{g in G0} eta_n(<L_g f, t_k>)`.
//!
//! Templates are unit-norm band-limited noise images; the nonlinearities are
//! pointwise moments rather than histogram bins.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::haar::PoolingRegion;
use crate::image::{pairwise_dot, resample_values, synthesize, GridGeometry, ImageGrid, ImageSpec, Interpolation};
use crate::pooling::{PoolPlan, QuadratureSpec};
use crate::rng::derive_seed;

/// Noise correlation length of the templates.
pub const TEMPLATE_CORRELATION: f64 = 0.2;
/// Width of the Gaussian envelope applied to template noise.
pub const TEMPLATE_ENVELOPE: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSet {
    templates: Vec<ImageGrid>,
    seed: u64,
}

impl TemplateSet {
    pub fn templates(&self) -> &[ImageGrid] {
        &self.templates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// The same set with template `k` negated.
    pub fn with_flipped(&self, k: usize) -> Result<Self> {
        let mut out = self.clone();
        let t = out
            .templates
            .get_mut(k)
            .ok_or_else(|| Error::InvalidArgument(format!("no template {k}")))?;
        *t = t.scale(-1.0);
        Ok(out)
    }
}

/// `k` unit-norm templates, template `i` seeded by `derive_seed(seed, i)`.
pub fn draw_templates(k: usize, geometry: GridGeometry, seed: u64) -> Result<TemplateSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("template count must be at least 1".into()));
    }
    let templates = (0..k)
        .map(|i| {
            let spec = ImageSpec::BandlimitedNoise {
                seed: derive_seed(seed, i as u64),
                correlation_length: TEMPLATE_CORRELATION,
                envelope_sigma: TEMPLATE_ENVELOPE,
                center: [0.0, 0.0],
                amplitude: 1.0,
            };
            let t = synthesize(&spec, geometry, 0.0)?;
            let norm = t.norm2();
            if !(norm > 0.0) {
                return Err(Error::DegenerateInput(format!("template {i} is zero")));
            }
            Ok(t.scale(1.0 / norm))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TemplateSet { templates, seed })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    Sigmoid,
    Relu,
    Modulus,
    Tanh,
    AbsPower { p: f64 },
}

impl Nonlinearity {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Nonlinearity::AbsPower { p } if !(p >= 1.0 && p.is_finite()) => Err(Error::InvalidArgument(format!(
                "abs_power exponent must be finite and at least 1, got {p}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Modulus => x.abs(),
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::AbsPower { p: 2.0 } => x * x,
            Nonlinearity::AbsPower { p } => x.abs().powf(p),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        !matches!(self, Nonlinearity::Tanh)
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Sigmoid => write!(f, "sigmoid"),
            Nonlinearity::Relu => write!(f, "relu"),
            Nonlinearity::Modulus => write!(f, "modulus"),
            Nonlinearity::Tanh => write!(f, "tanh"),
            Nonlinearity::AbsPower { p } => write!(f, "abs_power({p})"),
        }
    }
}

/// `entries[k][n] = h^k_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub entries: Vec<Vec<f64>>,
    pub nonlinearities: Vec<Nonlinearity>,
    pub node_count: usize,
}

impl Signature {
    pub fn get(&self, k: usize, n: usize) -> f64 {
        self.entries[k][n]
    }

    /// Rows are templates, columns nonlinearities.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "template")?;
        for eta in &self.nonlinearities {
            write!(w, ",{eta}")?;
        }
        writeln!(w)?;
        for (k, row) in self.entries.iter().enumerate() {
            write!(w, "{k}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `<L_g f, t_k>` for every node `g` (outer index) and template `k`.
pub fn responses(
    f: &ImageGrid,
    templates: &TemplateSet,
    nodes: &[GroupElement],
    interp: Interpolation,
) -> Result<Vec<Vec<f64>>> {
    for t in templates.templates() {
        f.check_geometry(t)?;
    }
    for g in nodes {
        f.check_action(g)?;
    }
    let area = f.geometry().cell_area();
    Ok(nodes
        .par_iter()
        .map(|g| {
            let moved = resample_values(g, f, interp);
            templates
                .templates()
                .iter()
                .map(|t| area * pairwise_dot(&moved, t.values()))
                .collect()
        })
        .collect())
}

fn check_nonlins(nonlins: &[Nonlinearity]) -> Result<()> {
    if nonlins.is_empty() {
        return Err(Error::InvalidArgument("no nonlinearities given".into()));
    }
    nonlins.iter().try_for_each(Nonlinearity::validate)
}

fn signature_at(
    f: &ImageGrid,
    templates: &TemplateSet,
    nonlins: &[Nonlinearity],
    nodes: &[GroupElement],
    interp: Interpolation,
) -> Result<Signature> {
    check_nonlins(nonlins)?;
    let r = responses(f, templates, nodes, interp)?;
    let inv = 1.0 / nodes.len() as f64;
    let entries = (0..templates.len())
        .map(|k| {
            nonlins
                .iter()
                .map(|eta| r.iter().map(|row| eta.apply(row[k])).sum::<f64>() * inv)
                .collect()
        })
        .collect();
    Ok(Signature {
        entries,
        nonlinearities: nonlins.to_vec(),
        node_count: nodes.len(),
    })
}

/// `h^k_n(f)` by midpoint quadrature over `G0`.
pub fn signature(
    f: &ImageGrid,
    templates: &TemplateSet,
    nonlins: &[Nonlinearity],
    region: &PoolingRegion,
    quad: &QuadratureSpec,
) -> Result<Signature> {
    let plan = PoolPlan::new(region, quad, None)?;
    signature_at(f, templates, nonlins, plan.nodes(), Interpolation::Bicubic)
}

/// `h^k_n(L_g f)`, evaluated at the nodes `h g` so `f` is resampled once.
pub fn signature_translated(
    f: &ImageGrid,
    g: &GroupElement,
    templates: &TemplateSet,
    nonlins: &[Nonlinearity],
    region: &PoolingRegion,
    quad: &QuadratureSpec,
) -> Result<Signature> {
    let plan = PoolPlan::new(region, quad, Some(g))?;
    signature_at(f, templates, nonlins, plan.nodes(), Interpolation::Bicubic)
}

/// `||(<L_h f, t_k>)_h||_2` over the nodes, one value per template.
pub fn l2_pooled_response(
    f: &ImageGrid,
    templates: &TemplateSet,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    let plan = PoolPlan::new(region, quad, None)?;
    let r = responses(f, templates, plan.nodes(), Interpolation::Bicubic)?;
    Ok((0..templates.len())
        .map(|k| r.iter().map(|row| row[k] * row[k]).sum::<f64>().sqrt())
        .collect())
}

/// Largest relative entry change between two signatures.
pub fn relative_difference(a: &Signature, b: &Signature) -> f64 {
    a.entries
        .iter()
        .flatten()
        .zip(b.entries.iter().flatten())
        .map(|(x, y)| (x - y).abs() / (x.abs() + 1e-12))
        .fold(0.0, f64::max)
}

/// `max_{k,n} |h^k_n(f) - h^k_n(L_g f)| / (|h^k_n(f)| + 1e-12)`.
pub fn invariance_error(
    f: &ImageGrid,
    g: &GroupElement,
    templates: &TemplateSet,
    nonlins: &[Nonlinearity],
    region: &PoolingRegion,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let base = signature(f, templates, nonlins, region, quad)?;
    if g.is_identity() {
        return Ok(0.0);
    }
    let moved = signature_translated(f, g, templates, nonlins, region, quad)?;
    Ok(relative_difference(&base, &moved))
}
