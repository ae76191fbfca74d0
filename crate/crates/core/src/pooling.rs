//! The averaging operator `Phi(f) = mu(G0)^{-1} \int_{G0} L_g f dg` by the
//! midpoint rule, and pooled generator fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupId, LieAlgebraElement};
use crate::haar::PoolingRegion;
use crate::image::{
    act, generator_field, nonzero_box_of, resample_values, translation_average, ImageGrid, Interpolation,
};

/// Midpoint-rule node counts, one per region axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub nodes: Vec<usize>,
}

impl QuadratureSpec {
    pub fn new(nodes: Vec<usize>) -> Result<Self> {
        let q = Self { nodes };
        if q.nodes.is_empty() || q.nodes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "quadrature node counts must be positive, got {:?}",
                q.nodes
            )));
        }
        Ok(q)
    }

    pub fn uniform(dim: usize, count: usize) -> Result<Self> {
        Self::new(vec![count; dim])
    }

    /// 9 nodes per axis.
    pub fn default_for(group: GroupId) -> Self {
        Self {
            nodes: vec![9; group.dim()],
        }
    }

    /// Roughly half the nodes per axis (`(k + 1) / 2`), for refinement deltas.
    pub fn coarsened(&self) -> Self {
        Self {
            nodes: self.nodes.iter().map(|k| k.div_ceil(2)).collect(),
        }
    }

    pub fn refined(&self) -> Self {
        Self {
            nodes: self.nodes.iter().map(|k| 2 * k).collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn check(&self, region: &PoolingRegion) -> Result<()> {
        if self.nodes.len() != region.group().dim() {
            return Err(Error::InvalidArgument(format!(
                "{} region needs {} node counts, got {}",
                region.group(),
                region.group().dim(),
                self.nodes.len()
            )));
        }
        if self.nodes.contains(&0) {
            return Err(Error::InvalidArgument("quadrature node counts must be positive".into()));
        }
        Ok(())
    }
}

/// Midpoint nodes of `region`, the last axis varying fastest.
pub fn quadrature_nodes(region: &PoolingRegion, quad: &QuadratureSpec) -> Result<Vec<GroupElement>> {
    quad.check(region)?;
    let axes: Vec<Vec<f64>> = region
        .bounds()
        .iter()
        .zip(&quad.nodes)
        .map(|(iv, &k)| iv.midpoints(k))
        .collect();
    let mut out = Vec::with_capacity(axes.iter().map(Vec::len).product());
    let mut idx = vec![0usize; axes.len()];
    let mut coords = vec![0.0; axes.len()];
    'outer: loop {
        for (d, &i) in idx.iter().enumerate() {
            coords[d] = axes[d][i];
        }
        out.push(GroupElement::from_coords(region.group(), &coords)?);
        for d in (0..axes.len()).rev() {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    Ok(out)
}

/// Equal-weight average of `L_g f` over arbitrary nodes, one resampling per
/// node, summed with a fixed pairwise tree so the result does not depend on
/// the thread schedule.
pub fn average_over(f: &ImageGrid, nodes: &[GroupElement], interp: Interpolation) -> Result<ImageGrid> {
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("no quadrature nodes".into()));
    }
    for g in nodes {
        f.check_action(g)?;
    }
    let mut sum = tree_sum(nodes.len(), &|k| resample_values(&nodes[k], f, interp));
    scale_in_place(&mut sum, 1.0 / nodes.len() as f64);
    Ok(ImageGrid::from_raw(f.geometry(), sum))
}

fn scale_in_place(v: &mut [f64], c: f64) {
    for x in v {
        *x *= c;
    }
}

/// Sum of `item(0..count)` over a fixed binary tree.
fn tree_sum(count: usize, item: &(dyn Fn(usize) -> Vec<f64> + Sync)) -> Vec<f64> {
    fn go(lo: usize, hi: usize, item: &(dyn Fn(usize) -> Vec<f64> + Sync)) -> Vec<f64> {
        if hi - lo == 1 {
            return item(lo);
        }
        let mid = lo + (hi - lo) / 2;
        let (mut a, b) = rayon::join(|| go(lo, mid, item), || go(mid, hi, item));
        ImageGrid::sum_in_place(&mut a, &b);
        a
    }
    go(0, count, item)
}

/// Splits `g` as `T_t . A` with `A` linear (rotation or shear about the
/// origin) and `t` a translation.
pub fn split_linear(g: &GroupElement) -> (GroupElement, [f64; 2]) {
    let linear = match g.group() {
        GroupId::Translations => GroupElement::identity(GroupId::Translations),
        GroupId::Rotations => *g,
        GroupId::Se2 => GroupElement::se2(g.theta(), 0.0, 0.0),
        GroupId::Shear => GroupElement::shear(g.shear_param(), 0.0, 0.0),
    };
    (linear, [g.tx(), g.ty()])
}

/// `L_g f` resampled in two steps, the linear part first, as pooling does.
pub fn node_resample(g: &GroupElement, f: &ImageGrid, interp: Interpolation) -> Result<ImageGrid> {
    let (linear, t) = split_linear(g);
    if linear.is_identity() {
        return act(g, f, interp);
    }
    let rotated = act(&linear, f, interp)?;
    if t == [0.0, 0.0] {
        return Ok(rotated);
    }
    act(&GroupElement::translation(t[0], t[1]), &rotated, interp).or_else(|_| act(g, f, interp))
}

/// Nodes sharing one linear part; their translations form a product grid.
#[derive(Clone, Debug)]
struct Stage {
    linear: GroupElement,
    xs: Vec<f64>,
    ys: Vec<f64>,
    first_node: usize,
}

/// The midpoint nodes of `G0` (or of `G0 g`), grouped by linear part.
///
/// Every node factors as `T_t . A`, so the average over a stage is the
/// translation average of `L_A f`. The translation average is separable
/// and exact for tensor-product kernels; the rotation or shear is resampled
/// once per stage.
#[derive(Clone, Debug)]
pub struct PoolPlan {
    stages: Vec<Stage>,
    nodes: Vec<GroupElement>,
}

impl PoolPlan {
    pub fn new(region: &PoolingRegion, quad: &QuadratureSpec, right: Option<&GroupElement>) -> Result<Self> {
        quad.check(region)?;
        let group = region.group();
        if let Some(g) = right {
            crate::group::check_same(group, g.group())?;
        }
        let mids: Vec<Vec<f64>> = region
            .bounds()
            .iter()
            .zip(&quad.nodes)
            .map(|(iv, &k)| iv.midpoints(k))
            .collect();
        let (linear_axis, xs, ys) = match group {
            GroupId::Translations => (None, mids[0].clone(), mids[1].clone()),
            GroupId::Rotations => (Some(&mids[0]), vec![0.0], vec![0.0]),
            GroupId::Se2 | GroupId::Shear => (Some(&mids[0]), mids[1].clone(), mids[2].clone()),
        };
        let linear_values: Vec<Option<f64>> = match linear_axis {
            None => vec![None],
            Some(v) => v.iter().copied().map(Some).collect(),
        };
        let mut stages = Vec::with_capacity(linear_values.len());
        let mut nodes = Vec::with_capacity(quad.total());
        for lv in linear_values {
            let node = |x: f64, y: f64| -> Result<GroupElement> {
                let h = match lv {
                    None => GroupElement::translation(x, y),
                    Some(l) if group == GroupId::Rotations => GroupElement::rotation(l),
                    Some(l) => GroupElement::from_coords(group, &[l, x, y])?,
                };
                Ok(match right {
                    Some(g) => h.compose_unchecked(g),
                    None => h,
                })
            };
            // A t_g, the translation picked up by the linear part of h.
            let (linear, c) = split_linear(&node(0.0, 0.0)?);
            let first_node = nodes.len();
            for &x in &xs {
                for &y in &ys {
                    nodes.push(node(x, y)?);
                }
            }
            stages.push(Stage {
                linear,
                xs: xs.iter().map(|x| x + c[0]).collect(),
                ys: ys.iter().map(|y| y + c[1]).collect(),
                first_node,
            });
        }
        Ok(Self { stages, nodes })
    }

    /// All nodes, in the order of `quadrature_nodes` (composed with `g`).
    pub fn nodes(&self) -> &[GroupElement] {
        &self.nodes
    }

    /// Average of `L_h f` over the plan's nodes.
    pub fn apply(&self, f: &ImageGrid, interp: Interpolation) -> Result<ImageGrid> {
        for g in &self.nodes {
            f.check_action(g)?;
        }
        let geom = f.geometry();
        let per_stage = self.nodes.len() / self.stages.len();
        let mut sum = tree_sum(self.stages.len(), &|k| {
            let st = &self.stages[k];
            let stage_nodes = &self.nodes[st.first_node..st.first_node + per_stage];
            let direct = || {
                let mut acc = tree_sum(stage_nodes.len(), &|m| resample_values(&stage_nodes[m], f, interp));
                scale_in_place(&mut acc, 1.0 / stage_nodes.len() as f64);
                acc
            };
            let pure_linear = st.xs == [0.0] && st.ys == [0.0];
            if st.linear.is_identity() {
                return match f.nonzero_box() {
                    None => vec![0.0; geom.pixel_count()],
                    Some(nz) => translation_average(f.values(), nz, geom, &st.xs, &st.ys, interp),
                };
            }
            if pure_linear || f.check_action(&st.linear).is_err() {
                // The intermediate image would lose mass at the boundary.
                return direct();
            }
            let base = resample_values(&st.linear, f, interp);
            match nonzero_box_of(&base, geom.resolution) {
                None => base,
                Some(nz) => translation_average(&base, nz, geom, &st.xs, &st.ys, interp),
            }
        });
        scale_in_place(&mut sum, 1.0 / self.stages.len() as f64);
        Ok(ImageGrid::from_raw(geom, sum))
    }
}

/// `Phi(f)` with bicubic resampling.
pub fn pool(f: &ImageGrid, region: &PoolingRegion, quad: &QuadratureSpec) -> Result<ImageGrid> {
    pool_with(f, region, quad, Interpolation::Bicubic)
}

pub fn pool_with(
    f: &ImageGrid,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    interp: Interpolation,
) -> Result<ImageGrid> {
    PoolPlan::new(region, quad, None)?.apply(f, interp)
}

/// `Phi(L_g f)`, pooling `f` over the nodes `h g` rather than resampling
/// `L_g f` first.
pub fn pool_translated(
    f: &ImageGrid,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    g: &GroupElement,
    interp: Interpolation,
) -> Result<ImageGrid> {
    PoolPlan::new(region, quad, Some(g))?.apply(f, interp)
}

/// `X~_xi(Phi(f)) = Phi(X_xi f)`.
pub fn pooled_generator_field(
    xi: &LieAlgebraElement,
    f: &ImageGrid,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
) -> Result<ImageGrid> {
    pooled_generator_field_with(xi, f, region, quad, Interpolation::Bicubic)
}

pub fn pooled_generator_field_with(
    xi: &LieAlgebraElement,
    f: &ImageGrid,
    region: &PoolingRegion,
    quad: &QuadratureSpec,
    interp: Interpolation,
) -> Result<ImageGrid> {
    crate::group::check_same(region.group(), xi.group())?;
    let plan = PoolPlan::new(region, quad, None)?;
    for g in plan.nodes() {
        f.check_action(g)?;
    }
    if xi.is_zero() {
        return Ok(ImageGrid::zeros(f.geometry()));
    }
    plan.apply(&generator_field(xi, f), interp)
}
