//! Local smoothness constants as positive set functions over norm balls.
//!
//! A [`SmoothnessModel`] maps a ball to an upper bound on the local
//! (mean-squared) smoothness constant of an objective over that ball. All
//! growth families here are pointwise maxima `F(B) = max { f(x) : x in B }`,
//! which reduce to closed forms in `||center|| + radius`. Models compose
//! under affine reparametrization, positive linear combination, max/min, and
//! product/quotient, and every public evaluation is floored at one so that
//! inverse stepsizes `beta = theta * L` never collapse.
//!
//! The module also carries the quantitative side of the relative-ratio
//! calculus: [`gamma_from_eta`] turns a mixing-spectrum constant into the
//! admissible ratio bound `gamma`, and [`SmoothnessModel::estimate_r0`]
//! produces a radius such that balls within that Hausdorff distance have
//! value ratio at most `gamma`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Certified radius returned for constant models, where any finite radius is
/// valid. Configurable through [`SmoothnessModel::estimate_r0_with_default`].
pub const R0_DEFAULT: f64 = 1.0;

/// Relative tolerance of the radius bisection in `estimate_r0`.
const BISECTION_REL_TOL: f64 = 1e-6;
/// Iteration cap for both bracketing and bisection phases.
const BISECTION_MAX_ITERS: usize = 60;

// ---------------------------------------------------------------------------
// Ball
// ---------------------------------------------------------------------------

/// A Euclidean norm ball; the only set shape the calculus evaluates on.
///
/// Matrix-valued variables are handled by flattening, so the norm is always
/// the vector 2-norm (Frobenius for matrices).
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    center: DVector<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::invalid(format!(
                "ball radius must be finite and nonnegative, got {radius}"
            )));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("ball center has non-finite components"));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center_norm(&self) -> f64 {
        self.center.norm()
    }

    /// Largest point norm over the ball: `||center|| + radius`.
    pub fn max_norm(&self) -> f64 {
        self.center_norm() + self.radius
    }

    /// Concentric ball with radius enlarged by `extra`.
    pub fn inflate(&self, extra: f64) -> Ball {
        Ball {
            center: self.center.clone(),
            radius: self.radius + extra,
        }
    }

    /// Hausdorff distance between two balls:
    /// `||c1 - c2|| + |r1 - r2|`, i.e. `max{||dc|| + r2 - r1, ||dc|| + r1 - r2}`.
    /// For equal radii this is the center distance.
    pub fn hausdorff_distance(&self, other: &Ball) -> f64 {
        let dc = (&self.center - &other.center).norm();
        dc + (self.radius - other.radius).abs()
    }

    /// Whether `other` is contained in `self`.
    pub fn contains_ball(&self, other: &Ball) -> bool {
        let dc = (&self.center - &other.center).norm();
        dc + other.radius <= self.radius + 1e-12
    }

    /// Smallest ball containing both arguments.
    pub fn circumscribing(a: &Ball, b: &Ball) -> Ball {
        if a.contains_ball(b) {
            return a.clone();
        }
        if b.contains_ball(a) {
            return b.clone();
        }
        let diff = &b.center - &a.center;
        let dc = diff.norm();
        let radius = (dc + a.radius + b.radius) / 2.0;
        // Distance from a.center to the new center along the segment.
        let shift = radius - a.radius;
        let center = if dc > 0.0 {
            &a.center + diff * (shift / dc)
        } else {
            a.center.clone()
        };
        Ball { center, radius }
    }
}

// ---------------------------------------------------------------------------
// Affine reparametrizations
// ---------------------------------------------------------------------------

/// Lipschitz maps usable in affine composition. Evaluation over-approximates
/// the image of a ball `B(c, r)` by `B(map(c), lipschitz * r)`, which only
/// ever inflates the smoothness estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum AffineMap {
    /// `x -> factor * x`.
    Scale { factor: f64 },
    /// `x -> factor * x + shift`.
    ScaleShift { factor: f64, shift: Vec<f64> },
    /// Coordinate projection `x -> x[indices]` (Lipschitz constant 1).
    SelectCoords { indices: Vec<usize> },
}

impl AffineMap {
    pub fn lipschitz(&self) -> f64 {
        match self {
            AffineMap::Scale { factor } | AffineMap::ScaleShift { factor, .. } => factor.abs(),
            AffineMap::SelectCoords { .. } => 1.0,
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            AffineMap::Scale { factor } => x * *factor,
            AffineMap::ScaleShift { factor, shift } => {
                let mut out = x * *factor;
                for (o, s) in out.iter_mut().zip(shift.iter()) {
                    *o += *s;
                }
                out
            }
            AffineMap::SelectCoords { indices } => {
                DVector::from_fn(indices.len(), |k, _| x[indices[k]])
            }
        }
    }

    fn map_ball(&self, ball: &Ball) -> Ball {
        Ball {
            center: self.apply(&ball.center),
            radius: self.lipschitz() * ball.radius,
        }
    }
}

// ---------------------------------------------------------------------------
// SmoothnessModel
// ---------------------------------------------------------------------------

/// Evaluator for user-supplied set functions.
#[derive(Clone)]
pub struct CustomEval(Arc<dyn Fn(&Ball) -> f64 + Send + Sync>);

impl fmt::Debug for CustomEval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomEval(..)")
    }
}

/// A positive set function on balls. Build through the constructor methods,
/// which validate parameter domains.
#[derive(Clone, Debug)]
pub enum SmoothnessModel {
    /// `F = L`.
    Constant { l: f64 },
    /// `f(x) = log(c + ||x||)`, `c > 1`.
    Logarithmic { c: f64 },
    /// `f(x) = L + ||x||^nu`.
    Power { l: f64, nu: f64 },
    /// `f(x) = exp(||x|| / r)`.
    Exponential { r: f64 },
    /// `A0 + A1 * max ||x||^(alpha/(1-alpha))` with `A0, A1` derived from the
    /// alpha-generalized-smoothness constants anchored at the origin.
    GenSmooth {
        l0: f64,
        l1: f64,
        alpha: f64,
        ref_grad_norm: f64,
    },
    Affine {
        map: AffineMap,
        child: Box<SmoothnessModel>,
    },
    LinearComb {
        alpha: f64,
        beta: f64,
        left: Box<SmoothnessModel>,
        right: Box<SmoothnessModel>,
    },
    Max(Vec<SmoothnessModel>),
    Min(Vec<SmoothnessModel>),
    Product(Box<SmoothnessModel>, Box<SmoothnessModel>),
    Quotient(Box<SmoothnessModel>, Box<SmoothnessModel>),
    Custom(CustomEval),
}

impl SmoothnessModel {
    pub fn constant(l: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::invalid("constant model requires L > 0"));
        }
        Ok(SmoothnessModel::Constant { l })
    }

    pub fn logarithmic(c: f64) -> Result<Self> {
        if !(c > 1.0) || !c.is_finite() {
            return Err(Error::invalid("logarithmic model requires c > 1"));
        }
        Ok(SmoothnessModel::Logarithmic { c })
    }

    /// `L` may be zero: the evaluation floor at one keeps the set function
    /// positive, which is how the benchmark estimators use a bare `||x||^2`
    /// growth term.
    pub fn power(l: f64, nu: f64) -> Result<Self> {
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::invalid("power model requires L >= 0"));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::invalid("power model requires nu > 0"));
        }
        Ok(SmoothnessModel::Power { l, nu })
    }

    pub fn exponential(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::invalid("exponential model requires r > 0"));
        }
        Ok(SmoothnessModel::Exponential { r })
    }

    pub fn gen_smooth(l0: f64, l1: f64, alpha: f64, ref_grad_norm: f64) -> Result<Self> {
        // Validates the parameter ranges.
        gen_smooth_constants(l0, l1, alpha, ref_grad_norm)?;
        Ok(SmoothnessModel::GenSmooth {
            l0,
            l1,
            alpha,
            ref_grad_norm,
        })
    }

    pub fn affine(map: AffineMap, child: SmoothnessModel) -> Result<Self> {
        if !(map.lipschitz() > 0.0) {
            return Err(Error::invalid(
                "affine composition requires a positive Lipschitz constant",
            ));
        }
        Ok(SmoothnessModel::Affine {
            map,
            child: Box::new(child),
        })
    }

    pub fn linear_comb(
        alpha: f64,
        beta: f64,
        left: SmoothnessModel,
        right: SmoothnessModel,
    ) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::invalid(
                "linear combination requires positive coefficients",
            ));
        }
        Ok(SmoothnessModel::LinearComb {
            alpha,
            beta,
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    pub fn max_of(children: Vec<SmoothnessModel>) -> Result<Self> {
        if children.is_empty() {
            return Err(Error::invalid("max requires at least one child"));
        }
        Ok(SmoothnessModel::Max(children))
    }

    pub fn min_of(children: Vec<SmoothnessModel>) -> Result<Self> {
        if children.is_empty() {
            return Err(Error::invalid("min requires at least one child"));
        }
        Ok(SmoothnessModel::Min(children))
    }

    pub fn product(left: SmoothnessModel, right: SmoothnessModel) -> Self {
        SmoothnessModel::Product(Box::new(left), Box::new(right))
    }

    pub fn quotient(num: SmoothnessModel, den: SmoothnessModel) -> Self {
        SmoothnessModel::Quotient(Box::new(num), Box::new(den))
    }

    pub fn custom(f: impl Fn(&Ball) -> f64 + Send + Sync + 'static) -> Self {
        SmoothnessModel::Custom(CustomEval(Arc::new(f)))
    }

    /// Raw set-function value, before the >= 1 floor. Composites combine the
    /// raw values of their children; the floor is applied once at the root by
    /// [`eval`](Self::eval) (the WLOG normalization of the analysis).
    fn raw_eval(&self, ball: &Ball) -> Result<f64> {
        let v = match self {
            SmoothnessModel::Constant { l } => *l,
            SmoothnessModel::Logarithmic { c } => (c + ball.max_norm()).ln(),
            SmoothnessModel::Power { l, nu } => l + ball.max_norm().powf(*nu),
            SmoothnessModel::Exponential { r } => (ball.max_norm() / r).exp(),
            SmoothnessModel::GenSmooth {
                l0,
                l1,
                alpha,
                ref_grad_norm,
            } => {
                let (a0, a1) = gen_smooth_constants(*l0, *l1, *alpha, *ref_grad_norm)?;
                a0 + a1 * ball.max_norm().powf(alpha / (1.0 - alpha))
            }
            SmoothnessModel::Affine { map, child } => child.raw_eval(&map.map_ball(ball))?,
            SmoothnessModel::LinearComb {
                alpha,
                beta,
                left,
                right,
            } => alpha * left.raw_eval(ball)? + beta * right.raw_eval(ball)?,
            SmoothnessModel::Max(children) => {
                let mut acc = f64::NEG_INFINITY;
                for c in children {
                    acc = acc.max(c.raw_eval(ball)?);
                }
                acc
            }
            SmoothnessModel::Min(children) => {
                let mut acc = f64::INFINITY;
                for c in children {
                    acc = acc.min(c.raw_eval(ball)?);
                }
                acc
            }
            SmoothnessModel::Product(l, r) => l.raw_eval(ball)? * r.raw_eval(ball)?,
            SmoothnessModel::Quotient(num, den) => {
                let d = den.raw_eval(ball)?;
                if d.abs() < f64::MIN_POSITIVE {
                    return Err(Error::Domain(
                        "quotient denominator evaluated below machine-tiny".into(),
                    ));
                }
                num.raw_eval(ball)? / d
            }
            SmoothnessModel::Custom(f) => {
                let v = (f.0)(ball);
                if !v.is_finite() {
                    return Err(Error::Numeric(
                        "custom smoothness evaluator returned a non-finite value".into(),
                    ));
                }
                v
            }
        };
        Ok(v)
    }

    /// Local smoothness constant over `ball`, floored at one.
    pub fn eval(&self, ball: &Ball) -> Result<f64> {
        Ok(self.raw_eval(ball)?.max(1.0))
    }

    /// Relative value difference `max{F(X)/F(Y), F(Y)/F(X)} - 1`; zero iff
    /// both evaluations agree, symmetric in its arguments.
    pub fn relative_difference(&self, x: &Ball, y: &Ball) -> Result<f64> {
        let fx = self.eval(x)?;
        let fy = self.eval(y)?;
        Ok((fx / fy).max(fy / fx) - 1.0)
    }

    /// Radius `r0` such that balls within Hausdorff distance `r0` of `ball`
    /// keep the value ratio within `[1/gamma, gamma]`.
    ///
    /// Power-growth models use the closed-form `anchor * (gamma^(1/nu) - 1)`
    /// with `anchor = max{||center||, 1}`; constant models have no growth and
    /// return the configured default; everything else is bracketed and
    /// bisected on the concentric-inflation ratio.
    pub fn estimate_r0(&self, ball: &Ball, gamma: f64) -> Result<f64> {
        self.estimate_r0_with_default(ball, gamma, R0_DEFAULT)
    }

    pub fn estimate_r0_with_default(
        &self,
        ball: &Ball,
        gamma: f64,
        r0_default: f64,
    ) -> Result<f64> {
        if !(gamma > 1.0) {
            return Err(Error::invalid("estimate_r0 requires gamma > 1"));
        }
        match self {
            SmoothnessModel::Constant { .. } => Ok(r0_default),
            SmoothnessModel::Power { nu, .. } => {
                let anchor = ball.center_norm().max(1.0);
                ruc_delta_power(gamma - 1.0, *nu, anchor)
            }
            _ => self.bisect_r0(ball, gamma - 1.0),
        }
    }

    fn bisect_r0(&self, ball: &Ball, epsilon: f64) -> Result<f64> {
        let rel_diff = |rho: f64| -> Result<f64> {
            self.relative_difference(ball, &ball.inflate(rho))
        };
        // Bracket: grow until the inflation ratio exceeds epsilon.
        let mut hi = (0.01 * (1.0 + ball.max_norm())).max(1e-3);
        let mut bracketed = false;
        for _ in 0..BISECTION_MAX_ITERS {
            if rel_diff(hi)? > epsilon {
                bracketed = true;
                break;
            }
            hi *= 2.0;
        }
        if !bracketed {
            return Err(Error::Numeric(format!(
                "estimate_r0 failed to bracket within {BISECTION_MAX_ITERS} doublings \
                 (model may have no growth at this anchor; last radius {hi:.3e})"
            )));
        }
        let mut lo = 0.0f64;
        for _ in 0..BISECTION_MAX_ITERS {
            if hi - lo <= BISECTION_REL_TOL * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if rel_diff(mid)? <= epsilon {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo <= 0.0 {
            return Err(Error::Numeric(
                "estimate_r0 bisection collapsed to zero radius".into(),
            ));
        }
        Ok(lo)
    }
}

// ---------------------------------------------------------------------------
// Quantitative ratio-control constants
// ---------------------------------------------------------------------------

/// RUC parameters in force for a run: the ratio bound `gamma`, the certified
/// radius `r0`, and the mixing constant `eta` they derive from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RucParams {
    pub r0: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl RucParams {
    pub fn new(eta: f64, r0: f64) -> Result<Self> {
        let (gamma, _) = gamma_from_eta(eta)?;
        if !(r0 > 0.0) {
            return Err(Error::invalid("r0 must be positive"));
        }
        Ok(RucParams { r0, gamma, eta })
    }
}

/// Ratio bound from the mixing spectrum:
/// `epsilon = min{1, (1-eta)/(2 eta)}`, `gamma = 1 + epsilon`.
/// Returns `(gamma, epsilon)`; `gamma` lies in `(1, 2]`.
pub fn gamma_from_eta(eta: f64) -> Result<(f64, f64)> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid(format!(
            "gamma_from_eta requires eta in (0, 1), got {eta}"
        )));
    }
    let epsilon = ((1.0 - eta) / (2.0 * eta)).min(1.0);
    Ok((1.0 + epsilon, epsilon))
}

/// As [`gamma_from_eta`], but treating `eta = 0` (complete-graph mixing) as
/// its continuous limit `gamma = 2`. Used by the optimizers, which must
/// accept exact-averaging networks.
pub fn gamma_for_network(eta: f64) -> Result<f64> {
    if eta == 0.0 {
        return Ok(2.0);
    }
    gamma_from_eta(eta).map(|(g, _)| g)
}

/// Admissible Hausdorff radius for power growth `L + ||x||^nu` at an anchor
/// point of norm `anchor_norm >= 1`:
/// `delta = anchor * ((1 + epsilon)^(1/nu) - 1)`.
pub fn ruc_delta_power(epsilon: f64, nu: f64, anchor_norm: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("ruc_delta_power requires epsilon > 0"));
    }
    if !(nu > 0.0) {
        return Err(Error::invalid("ruc_delta_power requires nu > 0"));
    }
    if !(anchor_norm >= 1.0) {
        return Err(Error::invalid(format!(
            "ruc_delta_power is only certified for anchor norms >= 1, got {anchor_norm}"
        )));
    }
    Ok(anchor_norm * ((1.0 + epsilon).powf(1.0 / nu) - 1.0))
}

/// Constants `(A0, A1)` of the alpha-generalized-smoothness Hessian bound
/// `||H(x)|| <= A0 + A1 ||x - xbar||^(alpha/(1-alpha))`:
///
/// `A0 = L0 + 2^(a/(1-a)) L1 g + 2^(a^2/(1-a)) L0 L1`
/// `A1 = 2^(a^2/(1-a)) L0 L1 + 2^(a^2/(1-a)) L1 ((1-a) L1)^(a/(1-a))`
///
/// where `g` is the gradient norm at the reference point.
pub fn gen_smooth_constants(
    l0: f64,
    l1: f64,
    alpha: f64,
    grad_norm_at_ref: f64,
) -> Result<(f64, f64)> {
    if !(l0 > 0.0 && l1 > 0.0) {
        return Err(Error::invalid("gen_smooth_constants requires L0, L1 > 0"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(
            "gen_smooth_constants requires alpha in (0, 1)",
        ));
    }
    if !(grad_norm_at_ref >= 0.0) {
        return Err(Error::invalid(
            "gen_smooth_constants requires a nonnegative reference gradient norm",
        ));
    }
    let e1 = alpha / (1.0 - alpha);
    let e2 = alpha * alpha / (1.0 - alpha);
    let a0 = l0 + 2f64.powf(e1) * l1 * grad_norm_at_ref + 2f64.powf(e2) * l0 * l1;
    let a1 = 2f64.powf(e2) * l0 * l1 + 2f64.powf(e2) * l1 * ((1.0 - alpha) * l1).powf(e1);
    if !(a0.is_finite() && a1.is_finite()) {
        return Err(Error::Numeric("gen_smooth constants overflowed".into()));
    }
    Ok((a0, a1))
}

// ---------------------------------------------------------------------------
// Declarative config fragment
// ---------------------------------------------------------------------------

/// Serializable description of a model: `{variant, parameters, children}`.
/// Custom evaluators are runtime-only and have no config form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SmoothnessSpec {
    Constant {
        l: f64,
    },
    Logarithmic {
        c: f64,
    },
    Power {
        l: f64,
        nu: f64,
    },
    Exponential {
        r: f64,
    },
    GenSmooth {
        l0: f64,
        l1: f64,
        alpha: f64,
        ref_grad_norm: f64,
    },
    Affine {
        map: AffineMap,
        child: Box<SmoothnessSpec>,
    },
    LinearComb {
        alpha: f64,
        beta: f64,
        left: Box<SmoothnessSpec>,
        right: Box<SmoothnessSpec>,
    },
    Max {
        children: Vec<SmoothnessSpec>,
    },
    Min {
        children: Vec<SmoothnessSpec>,
    },
    Product {
        left: Box<SmoothnessSpec>,
        right: Box<SmoothnessSpec>,
    },
    Quotient {
        num: Box<SmoothnessSpec>,
        den: Box<SmoothnessSpec>,
    },
}

impl SmoothnessSpec {
    pub fn build(&self) -> Result<SmoothnessModel> {
        Ok(match self {
            SmoothnessSpec::Constant { l } => SmoothnessModel::constant(*l)?,
            SmoothnessSpec::Logarithmic { c } => SmoothnessModel::logarithmic(*c)?,
            SmoothnessSpec::Power { l, nu } => SmoothnessModel::power(*l, *nu)?,
            SmoothnessSpec::Exponential { r } => SmoothnessModel::exponential(*r)?,
            SmoothnessSpec::GenSmooth {
                l0,
                l1,
                alpha,
                ref_grad_norm,
            } => SmoothnessModel::gen_smooth(*l0, *l1, *alpha, *ref_grad_norm)?,
            SmoothnessSpec::Affine { map, child } => {
                SmoothnessModel::affine(map.clone(), child.build()?)?
            }
            SmoothnessSpec::LinearComb {
                alpha,
                beta,
                left,
                right,
            } => SmoothnessModel::linear_comb(*alpha, *beta, left.build()?, right.build()?)?,
            SmoothnessSpec::Max { children } => {
                let built: Result<Vec<_>> = children.iter().map(|c| c.build()).collect();
                SmoothnessModel::max_of(built?)?
            }
            SmoothnessSpec::Min { children } => {
                let built: Result<Vec<_>> = children.iter().map(|c| c.build()).collect();
                SmoothnessModel::min_of(built?)?
            }
            SmoothnessSpec::Product { left, right } => {
                SmoothnessModel::product(left.build()?, right.build()?)
            }
            SmoothnessSpec::Quotient { num, den } => {
                SmoothnessModel::quotient(num.build()?, den.build()?)
            }
        })
    }
}

impl SmoothnessModel {
    /// Config form of this model; custom evaluators cannot be serialized.
    pub fn to_spec(&self) -> Result<SmoothnessSpec> {
        Ok(match self {
            SmoothnessModel::Constant { l } => SmoothnessSpec::Constant { l: *l },
            SmoothnessModel::Logarithmic { c } => SmoothnessSpec::Logarithmic { c: *c },
            SmoothnessModel::Power { l, nu } => SmoothnessSpec::Power { l: *l, nu: *nu },
            SmoothnessModel::Exponential { r } => SmoothnessSpec::Exponential { r: *r },
            SmoothnessModel::GenSmooth {
                l0,
                l1,
                alpha,
                ref_grad_norm,
            } => SmoothnessSpec::GenSmooth {
                l0: *l0,
                l1: *l1,
                alpha: *alpha,
                ref_grad_norm: *ref_grad_norm,
            },
            SmoothnessModel::Affine { map, child } => SmoothnessSpec::Affine {
                map: map.clone(),
                child: Box::new(child.to_spec()?),
            },
            SmoothnessModel::LinearComb {
                alpha,
                beta,
                left,
                right,
            } => SmoothnessSpec::LinearComb {
                alpha: *alpha,
                beta: *beta,
                left: Box::new(left.to_spec()?),
                right: Box::new(right.to_spec()?),
            },
            SmoothnessModel::Max(children) => SmoothnessSpec::Max {
                children: children.iter().map(|c| c.to_spec()).collect::<Result<_>>()?,
            },
            SmoothnessModel::Min(children) => SmoothnessSpec::Min {
                children: children.iter().map(|c| c.to_spec()).collect::<Result<_>>()?,
            },
            SmoothnessModel::Product(l, r) => SmoothnessSpec::Product {
                left: Box::new(l.to_spec()?),
                right: Box::new(r.to_spec()?),
            },
            SmoothnessModel::Quotient(n, d) => SmoothnessSpec::Quotient {
                num: Box::new(n.to_spec()?),
                den: Box::new(d.to_spec()?),
            },
            SmoothnessModel::Custom(_) => {
                return Err(Error::invalid(
                    "custom smoothness evaluators are not serializable",
                ))
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ball(center_norm: f64, radius: f64) -> Ball {
        // A ball along e1 with the requested center norm.
        let mut c = DVector::zeros(3);
        c[0] = center_norm;
        Ball::new(c, radius).unwrap()
    }

    #[test]
    fn eval_power_on_ball() {
        // max of the norm over a ball is ||c|| + r
        let m = SmoothnessModel::power(1.0, 2.0).unwrap();
        assert_relative_eq!(m.eval(&ball(2.0, 1.0)).unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn eval_constant_clamped_at_one() {
        let m = SmoothnessModel::constant(0.5).unwrap();
        assert_eq!(m.eval(&ball(3.0, 7.0)).unwrap(), 1.0);
    }

    #[test]
    fn eval_exponential_identity_case() {
        let m = SmoothnessModel::exponential(1.0).unwrap();
        assert_eq!(m.eval(&ball(0.0, 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn eval_composite_max() {
        let m = SmoothnessModel::max_of(vec![
            SmoothnessModel::constant(3.0).unwrap(),
            SmoothnessModel::power(1.0, 1.0).unwrap(),
        ])
        .unwrap();
        assert_relative_eq!(m.eval(&ball(1.0, 1.0)).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ball_rejects_bad_inputs() {
        assert!(Ball::new(DVector::zeros(2), -0.1).is_err());
        assert!(Ball::new(DVector::from_vec(vec![f64::NAN, 0.0]), 1.0).is_err());
    }

    #[test]
    fn relative_difference_examples() {
        let m = SmoothnessModel::power(1.0, 1.0).unwrap();
        let b = ball(2.0, 1.0);
        assert_eq!(m.relative_difference(&b, &b).unwrap(), 0.0);

        // values 2 and 1 -> |1 - 2| = 1
        let two = SmoothnessModel::constant(2.0).unwrap();
        let one_model = SmoothnessModel::constant(2.0).unwrap();
        let _ = one_model;
        let b1 = ball(0.0, 0.0);
        // constant(2) vs clamped floor 1 via a power model at the origin
        let floor = SmoothnessModel::power(0.0, 2.0).unwrap();
        let combined = SmoothnessModel::max_of(vec![two, floor]).unwrap();
        // eval(b1) = 2 on one side; compare against a model evaluating to 1
        let unit = SmoothnessModel::constant(1.0).unwrap();
        assert_eq!(combined.eval(&b1).unwrap(), 2.0);
        assert_eq!(unit.eval(&b1).unwrap(), 1.0);
        // direct arithmetic on the definition: max{2/1, 1/2} - 1 = 1
        let fx = combined.eval(&b1).unwrap();
        let fy = unit.eval(&b1).unwrap();
        assert_eq!((fx / fy).max(fy / fx) - 1.0, 1.0);

        // power(L=1, nu=1) on balls with ||c|| + r of 3 and 4 -> 5/4 - 1
        let d = m
            .relative_difference(&ball(2.0, 1.0), &ball(3.0, 1.0))
            .unwrap();
        assert_relative_eq!(d, 0.25, epsilon = 1e-12);
        // symmetry
        let d2 = m
            .relative_difference(&ball(3.0, 1.0), &ball(2.0, 1.0))
            .unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn hausdorff_examples() {
        let b = ball(1.0, 1.0);
        assert_eq!(b.hausdorff_distance(&b), 0.0);
        // equal radii, centers 3 apart
        assert_eq!(ball(0.0, 1.0).hausdorff_distance(&ball(3.0, 1.0)), 3.0);
        // concentric, radii 1 and 2
        assert_eq!(ball(0.0, 1.0).hausdorff_distance(&ball(0.0, 2.0)), 1.0);
    }

    #[test]
    fn gamma_from_eta_examples() {
        assert_eq!(gamma_from_eta(0.5).unwrap().0, 1.5);
        assert_eq!(gamma_from_eta(0.2).unwrap().0, 2.0);
        assert_relative_eq!(gamma_from_eta(0.9).unwrap().0, 19.0 / 18.0, epsilon = 1e-15);
        assert!(gamma_from_eta(0.0).is_err());
        assert!(gamma_from_eta(1.0).is_err());
        assert_eq!(gamma_for_network(0.0).unwrap(), 2.0);
    }

    #[test]
    fn ruc_delta_power_examples() {
        assert_relative_eq!(ruc_delta_power(0.5, 1.0, 2.0).unwrap(), 1.0, epsilon = 1e-12);
        // epsilon -> 0 drives delta -> 0
        assert!(ruc_delta_power(1e-12, 2.0, 5.0).unwrap() < 1e-11);
        // (1 + 3)^(1/2) = 2
        assert_relative_eq!(ruc_delta_power(3.0, 2.0, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(ruc_delta_power(0.5, 1.0, 0.5).is_err());
    }

    #[test]
    fn gen_smooth_examples() {
        let (a0, a1) = gen_smooth_constants(1.0, 1.0, 0.5, 0.0).unwrap();
        assert_relative_eq!(a0, 1.0 + 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(a1, 1.5 * 2f64.sqrt(), epsilon = 1e-12);

        // doubling the reference gradient norm moves A0 by exactly
        // 2 * delta(grad norm) at alpha = 1/2, and leaves A1 unchanged
        let (b0, b1) = gen_smooth_constants(1.0, 1.0, 0.5, 3.0).unwrap();
        let (c0, c1) = gen_smooth_constants(1.0, 1.0, 0.5, 6.0).unwrap();
        assert_relative_eq!(c0 - b0, 2.0 * 3.0, epsilon = 1e-12);
        assert_eq!(b1, c1);

        // alpha -> 0+: A0 -> L0 + L1 g + L0 L1, A1 -> L0 L1 + L1
        let (d0, d1) = gen_smooth_constants(2.0, 3.0, 1e-4, 7.0).unwrap();
        assert_relative_eq!(d0, 2.0 + 3.0 * 7.0 + 6.0, epsilon = 1e-2);
        assert_relative_eq!(d1, 6.0 + 3.0, epsilon = 1e-2);

        assert!(gen_smooth_constants(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn combine_examples() {
        let five = SmoothnessModel::linear_comb(
            1.0,
            1.0,
            SmoothnessModel::constant(2.0).unwrap(),
            SmoothnessModel::constant(3.0).unwrap(),
        )
        .unwrap();
        assert_eq!(five.eval(&ball(4.0, 2.0)).unwrap(), 5.0);

        let six = SmoothnessModel::product(
            SmoothnessModel::constant(2.0).unwrap(),
            SmoothnessModel::constant(3.0).unwrap(),
        );
        assert_eq!(six.eval(&ball(0.0, 1.0)).unwrap(), 6.0);

        // affine with L = 2 wrapping power(0, 1): child sees B(2c, 2r)
        let affine = SmoothnessModel::affine(
            AffineMap::Scale { factor: 2.0 },
            SmoothnessModel::power(0.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(affine.eval(&ball(1.0, 1.0)).unwrap(), 4.0, epsilon = 1e-12);

        assert!(SmoothnessModel::linear_comb(
            -1.0,
            1.0,
            SmoothnessModel::constant(1.0).unwrap(),
            SmoothnessModel::constant(1.0).unwrap()
        )
        .is_err());
    }

    #[test]
    fn quotient_domain_error() {
        // power(0, 2) evaluates to 0 (raw) on the origin ball
        let q = SmoothnessModel::quotient(
            SmoothnessModel::constant(1.0).unwrap(),
            SmoothnessModel::power(0.0, 2.0).unwrap(),
        );
        assert!(matches!(q.eval(&ball(0.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn estimate_r0_constant_default() {
        let m = SmoothnessModel::constant(5.0).unwrap();
        assert_eq!(m.estimate_r0(&ball(1.0, 0.0), 1.5).unwrap(), R0_DEFAULT);
        assert_eq!(
            m.estimate_r0_with_default(&ball(1.0, 0.0), 1.5, 2.5).unwrap(),
            2.5
        );
    }

    #[test]
    fn estimate_r0_power_closed_form() {
        let m = SmoothnessModel::power(1.0, 1.0).unwrap();
        let r0 = m.estimate_r0(&ball(2.0, 0.5), 1.5).unwrap();
        assert_relative_eq!(r0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn estimate_r0_exponential_matches_log_formula() {
        // For f = exp(||x||/r), concentric inflation by rho gives relative
        // difference exp(rho/r) - 1, so the certified radius is r ln(gamma).
        let m = SmoothnessModel::exponential(1.0).unwrap();
        let r0 = m.estimate_r0(&ball(3.0, 0.5), 1.5).unwrap();
        assert_relative_eq!(r0, 1.5f64.ln(), epsilon = 1e-5);
    }

    #[test]
    fn estimate_r0_bracket_failure_is_reported() {
        // A custom evaluator that never grows cannot be bracketed.
        let m = SmoothnessModel::custom(|_| 7.0);
        assert!(matches!(
            m.estimate_r0(&ball(1.0, 0.0), 1.5),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn circumscribing_ball_contains_both() {
        let a = ball(0.0, 1.0);
        let b = ball(4.0, 2.0);
        let c = Ball::circumscribing(&a, &b);
        assert!(c.contains_ball(&a));
        assert!(c.contains_ball(&b));
        // nested case returns the outer ball
        let outer = ball(0.0, 5.0);
        let inner = ball(1.0, 1.0);
        assert_eq!(Ball::circumscribing(&outer, &inner), outer);
    }

    #[test]
    fn spec_round_trip() {
        let m = SmoothnessModel::linear_comb(
            1.0,
            5.0,
            SmoothnessModel::constant(3.0).unwrap(),
            SmoothnessModel::power(0.0, 2.0).unwrap(),
        )
        .unwrap();
        let spec = m.to_spec().unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: SmoothnessSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let rebuilt = back.build().unwrap();
        let b = ball(1.5, 0.25);
        assert_eq!(rebuilt.eval(&b).unwrap(), m.eval(&b).unwrap());

        let custom = SmoothnessModel::custom(|b| b.max_norm());
        assert!(custom.to_spec().is_err());
    }
}
