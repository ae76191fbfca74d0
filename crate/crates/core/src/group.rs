//! Planar transformation groups: translations, rotations about the origin,
//! rigid motions SE(2) and shears, together with their Lie algebras.
//!
//! Elements are stored in canonical parameters; homogeneous 3x3 matrices are
//! derived views. For the rotation family the matrix of `(theta, tx, ty)` is
//!
//! ```text
//! | cos -sin tx |
//! | sin  cos ty |
//! |  0    0   1 |
//! ```
//!
//! and a shear element `(s, tx, ty)` is `[[1, s, tx], [0, 1, ty], [0, 0, 1]]`,
//! i.e. `x -> x + s*y` followed by a translation.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

/// Threshold on `|t * zeta|` below which the SE(2) left Jacobian is evaluated
/// from its Taylor series.
const SERIES_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupId {
    Translations,
    Rotations,
    Se2,
    Shear,
}

/// A coordinate axis of a group's canonical parameter box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Theta,
    Shear,
    Tx,
    Ty,
}

impl GroupId {
    pub fn axes(self) -> &'static [Axis] {
        match self {
            GroupId::Translations => &[Axis::Tx, Axis::Ty],
            GroupId::Rotations => &[Axis::Theta],
            GroupId::Se2 => &[Axis::Theta, Axis::Tx, Axis::Ty],
            GroupId::Shear => &[Axis::Shear, Axis::Tx, Axis::Ty],
        }
    }

    pub fn dim(self) -> usize {
        self.axes().len()
    }

    pub fn has_rotation(self) -> bool {
        matches!(self, GroupId::Rotations | GroupId::Se2)
    }

    pub fn is_abelian(self) -> bool {
        matches!(self, GroupId::Translations | GroupId::Rotations)
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupId::Translations => "translations",
            GroupId::Rotations => "rotations",
            GroupId::Se2 => "se2",
            GroupId::Shear => "shear",
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn check_same(a: GroupId, b: GroupId) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("group mismatch: {a} vs {b}")))
    }
}

/// Maps an angle to `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Signed angular difference `a - b` mapped to `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    group: GroupId,
    theta: f64,
    tx: f64,
    ty: f64,
    shear: f64,
}

impl GroupElement {
    pub fn identity(group: GroupId) -> Self {
        Self {
            group,
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
            shear: 0.0,
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            tx,
            ty,
            ..Self::identity(GroupId::Translations)
        }
    }

    pub fn rotation(theta: f64) -> Self {
        Self {
            theta: normalize_angle(theta),
            ..Self::identity(GroupId::Rotations)
        }
    }

    pub fn se2(theta: f64, tx: f64, ty: f64) -> Self {
        Self {
            group: GroupId::Se2,
            theta: normalize_angle(theta),
            tx,
            ty,
            shear: 0.0,
        }
    }

    pub fn shear(s: f64, tx: f64, ty: f64) -> Self {
        Self {
            group: GroupId::Shear,
            theta: 0.0,
            tx,
            ty,
            shear: s,
        }
    }

    /// Builds an element from coordinates ordered as `group.axes()`.
    pub fn from_coords(group: GroupId, coords: &[f64]) -> Result<Self> {
        if coords.len() != group.dim() {
            return Err(Error::InvalidArgument(format!(
                "{group} expects {} coordinates, got {}",
                group.dim(),
                coords.len()
            )));
        }
        Ok(match group {
            GroupId::Translations => Self::translation(coords[0], coords[1]),
            GroupId::Rotations => Self::rotation(coords[0]),
            GroupId::Se2 => Self::se2(coords[0], coords[1], coords[2]),
            GroupId::Shear => Self::shear(coords[0], coords[1], coords[2]),
        })
    }

    /// Canonical coordinates ordered as `group.axes()`; unused slots are zero.
    pub fn coords(&self) -> [f64; 3] {
        match self.group {
            GroupId::Translations => [self.tx, self.ty, 0.0],
            GroupId::Rotations => [self.theta, 0.0, 0.0],
            GroupId::Se2 => [self.theta, self.tx, self.ty],
            GroupId::Shear => [self.shear, self.tx, self.ty],
        }
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn tx(&self) -> f64 {
        self.tx
    }

    pub fn ty(&self) -> f64 {
        self.ty
    }

    pub fn shear_param(&self) -> f64 {
        self.shear
    }

    pub fn is_identity(&self) -> bool {
        self.theta == 0.0 && self.tx == 0.0 && self.ty == 0.0 && self.shear == 0.0
    }

    /// Linear part `[[a, b], [c, d]]` of the plane action.
    pub fn linear(&self) -> [[f64; 2]; 2] {
        match self.group {
            GroupId::Shear => [[1.0, self.shear], [0.0, 1.0]],
            _ => {
                let (s, c) = self.theta.sin_cos();
                [[c, -s], [s, c]]
            }
        }
    }

    pub fn matrix(&self) -> Mat3 {
        let a = self.linear();
        [
            [a[0][0], a[0][1], self.tx],
            [a[1][0], a[1][1], self.ty],
            [0.0, 0.0, 1.0],
        ]
    }

    /// Re-expresses a homogeneous matrix in canonical parameters of `group`.
    pub fn from_matrix(group: GroupId, m: &Mat3) -> Self {
        match group {
            GroupId::Translations => Self::translation(m[0][2], m[1][2]),
            GroupId::Rotations => Self::rotation(m[1][0].atan2(m[0][0])),
            GroupId::Se2 => Self::se2(m[1][0].atan2(m[0][0]), m[0][2], m[1][2]),
            GroupId::Shear => Self::shear(m[0][1], m[0][2], m[1][2]),
        }
    }

    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        check_same(self.group, other.group)?;
        Ok(self.compose_unchecked(other))
    }

    pub(crate) fn compose_unchecked(&self, other: &GroupElement) -> GroupElement {
        match self.group {
            GroupId::Shear => GroupElement::shear(
                self.shear + other.shear,
                self.tx + self.shear * other.ty + other.tx,
                self.ty + other.ty,
            ),
            group => {
                let (s, c) = self.theta.sin_cos();
                GroupElement {
                    group,
                    theta: normalize_angle(self.theta + other.theta),
                    tx: self.tx + c * other.tx - s * other.ty,
                    ty: self.ty + s * other.tx + c * other.ty,
                    shear: 0.0,
                }
            }
        }
    }

    pub fn inverse(&self) -> GroupElement {
        match self.group {
            GroupId::Shear => GroupElement::shear(-self.shear, -self.tx + self.shear * self.ty, -self.ty),
            group => {
                let (s, c) = self.theta.sin_cos();
                GroupElement {
                    group,
                    theta: normalize_angle(-self.theta),
                    tx: -(c * self.tx + s * self.ty),
                    ty: -(-s * self.tx + c * self.ty),
                    shear: 0.0,
                }
            }
        }
    }

    /// Applies the homogeneous matrix to `(px, py, 1)`.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let a = self.linear();
        [
            a[0][0] * p[0] + a[0][1] * p[1] + self.tx,
            a[1][0] * p[0] + a[1][1] * p[1] + self.ty,
        ]
    }

    /// `sup_x |det J_g(x)|`. Every supported group acts by area-preserving
    /// affine maps, so this is identically one.
    pub fn jacobian_sup(&self) -> f64 {
        let a = self.linear();
        debug_assert!(((a[0][0] * a[1][1] - a[0][1] * a[1][0]).abs() - 1.0).abs() < 1e-12);
        1.0
    }

    /// Componentwise comparison with the angle compared on the circle.
    pub fn approx_eq(&self, other: &GroupElement, tol: f64) -> bool {
        self.group == other.group
            && angle_diff(self.theta, other.theta).abs() <= tol
            && (self.tx - other.tx).abs() <= tol
            && (self.ty - other.ty).abs() <= tol
            && (self.shear - other.shear).abs() <= tol
    }
}

/// An element of the Lie algebra. For the rotation family the matrix is
/// `[[0, -zeta, vx], [zeta, 0, vy], [0, 0, 0]]`; for shears `zeta` is the
/// shear rate and the matrix is `[[0, zeta, vx], [0, 0, vy], [0, 0, 0]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieAlgebraElement {
    group: GroupId,
    zeta: f64,
    vx: f64,
    vy: f64,
}

impl LieAlgebraElement {
    pub fn new(group: GroupId, zeta: f64, vx: f64, vy: f64) -> Result<Self> {
        match group {
            GroupId::Translations if zeta != 0.0 => Err(Error::InvalidArgument(
                "translation generators have zero rotational rate".into(),
            )),
            GroupId::Rotations if vx != 0.0 || vy != 0.0 => Err(Error::InvalidArgument(
                "rotation generators have zero translational rate".into(),
            )),
            _ => Ok(Self { group, zeta, vx, vy }),
        }
    }

    pub fn se2(zeta: f64, vx: f64, vy: f64) -> Self {
        Self {
            group: GroupId::Se2,
            zeta,
            vx,
            vy,
        }
    }

    pub fn translation(vx: f64, vy: f64) -> Self {
        Self {
            group: GroupId::Translations,
            zeta: 0.0,
            vx,
            vy,
        }
    }

    pub fn rotation(zeta: f64) -> Self {
        Self {
            group: GroupId::Rotations,
            zeta,
            vx: 0.0,
            vy: 0.0,
        }
    }

    pub fn shear(rate: f64, vx: f64, vy: f64) -> Self {
        Self {
            group: GroupId::Shear,
            zeta: rate,
            vx,
            vy,
        }
    }

    pub fn zero(group: GroupId) -> Self {
        Self {
            group,
            zeta: 0.0,
            vx: 0.0,
            vy: 0.0,
        }
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn vx(&self) -> f64 {
        self.vx
    }

    pub fn vy(&self) -> f64 {
        self.vy
    }

    pub fn is_zero(&self) -> bool {
        self.zeta == 0.0 && self.vx == 0.0 && self.vy == 0.0
    }

    /// True when the generator has no rotational (or shear) component.
    pub fn is_pure_translation(&self) -> bool {
        self.zeta == 0.0
    }

    pub fn norm(&self) -> f64 {
        (self.zeta * self.zeta + self.vx * self.vx + self.vy * self.vy).sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            zeta: c * self.zeta,
            vx: c * self.vx,
            vy: c * self.vy,
            ..*self
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same(self.group, other.group)?;
        Ok(Self {
            zeta: self.zeta + other.zeta,
            vx: self.vx + other.vx,
            vy: self.vy + other.vy,
            ..*self
        })
    }

    pub fn matrix(&self) -> Mat3 {
        match self.group {
            GroupId::Shear => [[0.0, self.zeta, self.vx], [0.0, 0.0, self.vy], [0.0, 0.0, 0.0]],
            _ => [[0.0, -self.zeta, self.vx], [self.zeta, 0.0, self.vy], [0.0, 0.0, 0.0]],
        }
    }

    /// Re-expresses an algebra matrix in the parameters of `group`.
    pub fn from_matrix(group: GroupId, m: &Mat3) -> Self {
        match group {
            GroupId::Shear => Self::shear(m[0][1], m[0][2], m[1][2]),
            _ => Self {
                group,
                zeta: m[1][0],
                vx: m[0][2],
                vy: m[1][2],
            },
        }
    }

    /// Velocity of the plane flow `x -> exp(t xi) x` at `t = 0`.
    pub fn velocity(&self, x: f64, y: f64) -> [f64; 2] {
        match self.group {
            GroupId::Shear => [self.zeta * y + self.vx, self.vy],
            _ => [self.vx - self.zeta * y, self.vy + self.zeta * x],
        }
    }

    /// Closed-form bracket, equal to the matrix commutator `AB - BA`.
    pub fn bracket(&self, other: &Self) -> Result<Self> {
        check_same(self.group, other.group)?;
        Ok(match self.group {
            GroupId::Shear => Self::shear(0.0, self.zeta * other.vy - other.zeta * self.vy, 0.0),
            group => Self {
                group,
                zeta: 0.0,
                vx: other.zeta * self.vy - self.zeta * other.vy,
                vy: self.zeta * other.vx - other.zeta * self.vx,
            },
        })
    }

    /// `exp(t * xi)` in closed form.
    pub fn exp(&self, t: f64) -> GroupElement {
        match self.group {
            GroupId::Translations => GroupElement::translation(t * self.vx, t * self.vy),
            GroupId::Rotations => GroupElement::rotation(t * self.zeta),
            GroupId::Shear => GroupElement::shear(
                t * self.zeta,
                t * self.vx + 0.5 * t * t * self.zeta * self.vy,
                t * self.vy,
            ),
            GroupId::Se2 => {
                let phi = t * self.zeta;
                let (a, b) = left_jacobian_coeffs(phi);
                let (ux, uy) = (t * self.vx, t * self.vy);
                GroupElement::se2(phi, a * ux - b * uy, b * ux + a * uy)
            }
        }
    }
}

/// Returns `(sin(phi)/phi, (1 - cos(phi))/phi)`, the entries of the SE(2)
/// left Jacobian `V(phi) = [[a, -b], [b, a]]`.
fn left_jacobian_coeffs(phi: f64) -> (f64, f64) {
    if phi.abs() < SERIES_THRESHOLD {
        let p2 = phi * phi;
        let a = 1.0 - p2 / 6.0 * (1.0 - p2 / 20.0 * (1.0 - p2 / 42.0));
        let b = phi / 2.0 * (1.0 - p2 / 12.0 * (1.0 - p2 / 30.0 * (1.0 - p2 / 56.0)));
        (a, b)
    } else {
        (phi.sin() / phi, (1.0 - phi.cos()) / phi)
    }
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}
