//! Fuzzy compositions: paired t-norms and s-norms with analytic partials.
//!
//! Each [`CompositionKind`] names an (S, T) pair. Evaluations return a
//! [`NormEval`] carrying the value and both first partial derivatives so the
//! trainer can chain them through rule firing strengths.
//!
//! | kind         | T(a, b)                                   | S(a, b)                          |
//! |--------------|-------------------------------------------|----------------------------------|
//! | `minmax`     | min(a, b)                                 | max(a, b)                        |
//! | `prodsum`    | ab                                        | a + b - ab                       |
//! | `smooth1`    | 1 - cos((2/pi) acos(1-a) acos(1-b))       | 1 - T(1-a, 1-b)                  |
//! | `atan`       | (4/pi) atan(tan(pi a/4) tan(pi b/4))      | 1 - T(1-a, 1-b)                  |
//! | `acos`       | 1 - (2/pi) acos(sin(pi a/2) sin(pi b/2))  | (2/pi) acos(cos(pi a/2) cos(pi b/2)) |
//! | `smooth4`    | cos(acos a + acos b - (2/pi) acos a acos b) | cos((2/pi) acos a acos b)      |
//!
//! The smooth formulas are evaluated in algebraically equivalent forms that
//! stay accurate near the corners of the unit square (`atan2` instead of
//! `acos` close to 1, `2 sin^2(x/2)` instead of `1 - cos x`).

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Arguments this far outside `[0, 1]` are clamped instead of rejected.
pub const DOMAIN_TOLERANCE: f64 = 1e-12;

/// Where a one-sided partial diverges on the boundary it is evaluated this far
/// inside the square instead.
pub const BOUNDARY_INSET: f64 = 1e-12;

/// Default `beta` for [`CompositionKind::SmoothI`].
pub const DEFAULT_BETA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormError {
    #[error("norm argument {value} lies outside [0, 1]")]
    Domain { value: f64 },
    #[error("cannot fold an empty sequence")]
    EmptySequence,
    #[error("unknown composition `{name}` (valid: minmax, prodsum, smooth1, atan, acos, smooth4)")]
    UnknownComposition { name: String },
    #[error("smooth1 requires beta > 1, got {beta}")]
    InvalidBeta { beta: f64 },
}

/// The (s-norm, t-norm) pair used to aggregate rule antecedents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CompositionKind {
    MinMax,
    ProductSum,
    /// Smooth composition I. `beta` does not enter the t-norm; it is kept so
    /// model files carry the full parameterisation.
    SmoothI {
        beta: f64,
    },
    SmoothAtan,
    SmoothAcos,
    SmoothIV,
}

/// One evaluation of a norm together with its first partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEval {
    pub value: f64,
    pub d_da: f64,
    pub d_db: f64,
}

impl NormEval {
    fn new(value: f64, d_da: f64, d_db: f64) -> Self {
        Self { value, d_da, d_db }
    }
}

impl CompositionKind {
    /// Every kind, with `smooth1` at its default beta.
    pub const ALL: [CompositionKind; 6] = [
        CompositionKind::MinMax,
        CompositionKind::ProductSum,
        CompositionKind::SmoothI { beta: DEFAULT_BETA },
        CompositionKind::SmoothAtan,
        CompositionKind::SmoothAcos,
        CompositionKind::SmoothIV,
    ];

    pub const NAMES: [&'static str; 6] = ["minmax", "prodsum", "smooth1", "atan", "acos", "smooth4"];

    pub fn smooth_i(beta: f64) -> Result<Self, NormError> {
        if beta.is_finite() && beta > 1.0 {
            Ok(CompositionKind::SmoothI { beta })
        } else {
            Err(NormError::InvalidBeta { beta })
        }
    }

    /// Canonical lowercase name used by the CLI and model files.
    pub fn name(&self) -> &'static str {
        match self {
            CompositionKind::MinMax => "minmax",
            CompositionKind::ProductSum => "prodsum",
            CompositionKind::SmoothI { .. } => "smooth1",
            CompositionKind::SmoothAtan => "atan",
            CompositionKind::SmoothAcos => "acos",
            CompositionKind::SmoothIV => "smooth4",
        }
    }

    /// True for the continuously differentiable pairs.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, CompositionKind::MinMax | CompositionKind::ProductSum)
    }

    pub fn t_norm(&self, a: f64, b: f64) -> Result<NormEval, NormError> {
        t_norm(*self, a, b)
    }

    pub fn s_norm(&self, a: f64, b: f64) -> Result<NormEval, NormError> {
        s_norm(*self, a, b)
    }
}

impl fmt::Display for CompositionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompositionKind {
    type Err = NormError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minmax" => Ok(CompositionKind::MinMax),
            "prodsum" => Ok(CompositionKind::ProductSum),
            "smooth1" => Ok(CompositionKind::SmoothI { beta: DEFAULT_BETA }),
            "atan" => Ok(CompositionKind::SmoothAtan),
            "acos" => Ok(CompositionKind::SmoothAcos),
            "smooth4" => Ok(CompositionKind::SmoothIV),
            _ => Err(NormError::UnknownComposition { name: s.to_string() }),
        }
    }
}

impl From<CompositionKind> for String {
    fn from(kind: CompositionKind) -> Self {
        kind.name().to_string()
    }
}

impl TryFrom<String> for CompositionKind {
    type Error = NormError;

    fn try_from(name: String) -> Result<Self, Self::Error> {
        name.parse()
    }
}

fn check_unit(x: f64) -> Result<f64, NormError> {
    if (-DOMAIN_TOLERANCE..=1.0 + DOMAIN_TOLERANCE).contains(&x) {
        Ok(x.clamp(0.0, 1.0))
    } else {
        Err(NormError::Domain { value: x })
    }
}

/// Evaluate the t-norm of `kind` at `(a, b)`.
///
/// For `minmax` the partials follow the subgradient convention: 1 for the
/// strictly smaller argument, 0 for the larger, 0.5 each at a tie.
pub fn t_norm(kind: CompositionKind, a: f64, b: f64) -> Result<NormEval, NormError> {
    let (a, b) = (check_unit(a)?, check_unit(b)?);
    Ok(match kind {
        CompositionKind::MinMax => {
            let (da, db) = min_partials(a, b);
            NormEval::new(a.min(b), da, db)
        }
        CompositionKind::ProductSum => NormEval::new(a * b, b, a),
        CompositionKind::SmoothI { .. } => symmetric(smooth_i_t, a, b),
        CompositionKind::SmoothAtan => symmetric(atan_t, a, b),
        CompositionKind::SmoothAcos => symmetric(acos_t, a, b),
        CompositionKind::SmoothIV => symmetric(smooth_iv_t, a, b),
    })
}

/// Evaluate the s-norm of `kind` at `(a, b)`.
pub fn s_norm(kind: CompositionKind, a: f64, b: f64) -> Result<NormEval, NormError> {
    let (a, b) = (check_unit(a)?, check_unit(b)?);
    Ok(match kind {
        CompositionKind::MinMax => {
            let (da, db) = min_partials(b, a);
            NormEval::new(a.max(b), da, db)
        }
        CompositionKind::ProductSum => NormEval::new(a + b - a * b, 1.0 - b, 1.0 - a),
        // smooth1's s-norm is the reflected t-norm, which reduces to the same
        // closed form as smooth4's s-norm.
        CompositionKind::SmoothI { .. } | CompositionKind::SmoothIV => symmetric(cos_product_s, a, b),
        CompositionKind::SmoothAtan => symmetric(atan_s, a, b),
        CompositionKind::SmoothAcos => symmetric(acos_s, a, b),
    })
}

/// `1 - T(1 - a, 1 - b)`, with partials carried through the reflection.
pub fn dual_s_from_t(kind: CompositionKind, a: f64, b: f64) -> Result<NormEval, NormError> {
    let (a, b) = (check_unit(a)?, check_unit(b)?);
    let t = t_norm(kind, 1.0 - a, 1.0 - b)?;
    Ok(NormEval::new(1.0 - t.value, t.d_da, t.d_db))
}

/// Left fold of the t-norm over `values`.
pub fn fold_t(kind: CompositionKind, values: &[f64]) -> Result<f64, NormError> {
    let (first, rest) = values.split_first().ok_or(NormError::EmptySequence)?;
    rest.iter().try_fold(check_unit(*first)?, |acc, &v| Ok(t_norm(kind, acc, v)?.value))
}

/// Left fold of the s-norm over `values`.
pub fn fold_s(kind: CompositionKind, values: &[f64]) -> Result<f64, NormError> {
    let (first, rest) = values.split_first().ok_or(NormError::EmptySequence)?;
    rest.iter().try_fold(check_unit(*first)?, |acc, &v| Ok(s_norm(kind, acc, v)?.value))
}

/// Builds a [`NormEval`] from a kernel returning `(value, d/d first)`. The
/// value is always taken with sorted arguments so commutativity is exact.
fn symmetric(kernel: fn(f64, f64) -> (f64, f64), a: f64, b: f64) -> NormEval {
    let (value_ab, d_da) = kernel(a, b);
    let (value_ba, d_db) = kernel(b, a);
    let value = if a <= b { value_ab } else { value_ba };
    NormEval::new(value.clamp(0.0, 1.0), d_da, d_db)
}

/// Subgradient of min(a, b): (d/da, d/db).
fn min_partials(a: f64, b: f64) -> (f64, f64) {
    if a < b {
        (1.0, 0.0)
    } else if a > b {
        (0.0, 1.0)
    } else {
        (0.5, 0.5)
    }
}

// acos(1 - x) without the cancellation in 1 - x.
fn acos_one_minus(x: f64) -> f64 {
    2.0 * (0.5 * x).sqrt().asin()
}

/// Smooth I t-norm value and d/da.
fn smooth_i_t(a: f64, b: f64) -> (f64, f64) {
    let gb = FRAC_2_PI * acos_one_minus(b);
    let theta = acos_one_minus(a) * gb;
    let s = (0.5 * theta).sin();
    let value = 2.0 * s * s;
    // d/da acos(1 - a) = 1 / sqrt(a (2 - a)), singular at a = 0 where the
    // product with sin(theta) tends to gb^2.
    let d_da = if a == 0.0 { gb * gb } else { theta.sin() * gb / (a * (2.0 - a)).sqrt() };
    (value, d_da)
}

/// cos((2/pi) acos a acos b) and d/da. Shared by smooth1 and smooth4.
fn cos_product_s(a: f64, b: f64) -> (f64, f64) {
    let kb = FRAC_2_PI * b.acos();
    let psi = a.acos() * kb;
    let value = psi.cos();
    let d_da = if a >= 1.0 { kb * kb } else { psi.sin() * kb / ((1.0 - a) * (1.0 + a)).sqrt() };
    (value, d_da)
}

fn atan_t(a: f64, b: f64) -> (f64, f64) {
    let ta = (FRAC_PI_4 * a).tan();
    let tb = (FRAC_PI_4 * b).tan();
    let p = ta * tb;
    let value = (4.0 / PI) * p.atan();
    let d_da = tb * (1.0 + ta * ta) / (1.0 + p * p);
    (value, d_da)
}

fn atan_s(a: f64, b: f64) -> (f64, f64) {
    let ua = (FRAC_PI_4 * (1.0 - a)).tan();
    let ub = (FRAC_PI_4 * (1.0 - b)).tan();
    let p = ua * ub;
    let value = 1.0 - (4.0 / PI) * p.atan();
    let d_da = ub * (1.0 + ua * ua) / (1.0 + p * p);
    (value, d_da)
}

/// (sin(pi x/2), cos(pi x/2)) with the cosine exactly 0 at x = 1.
fn quarter_sin_cos(x: f64) -> (f64, f64) {
    ((FRAC_PI_2 * x).sin(), (FRAC_PI_2 * (1.0 - x)).sin())
}

fn acos_t(a: f64, b: f64) -> (f64, f64) {
    let (sa, ca) = quarter_sin_cos(a);
    let (sb, cb) = quarter_sin_cos(b);
    // sqrt(1 - (sa sb)^2) written without cancellation.
    let root = (ca * ca + sa * sa * cb * cb).sqrt();
    let value = FRAC_2_PI * (sa * sb).atan2(root);
    let d_da = if root == 0.0 { 1.0 } else { ca * sb / root };
    (value, d_da)
}

fn acos_s(a: f64, b: f64) -> (f64, f64) {
    let (sa, ca) = quarter_sin_cos(a);
    let (sb, cb) = quarter_sin_cos(b);
    // sqrt(1 - (ca cb)^2) written without cancellation.
    let root = (sa * sa + ca * ca * sb * sb).sqrt();
    let value = FRAC_2_PI * root.atan2(ca * cb);
    let d_da = if root == 0.0 { 1.0 } else { sa * cb / root };
    (value, d_da)
}

/// Smooth IV t-norm in its equivalent form sin((2/pi) asin a asin b).
fn smooth_iv_t(a: f64, b: f64) -> (f64, f64) {
    let kb = FRAC_2_PI * b.asin();
    let chi = a.asin() * kb;
    let value = chi.sin();
    let d_da = if b >= 1.0 {
        // T(a, 1) = a
        1.0
    } else {
        // The partial diverges as a -> 1 for b < 1.
        let a_in = a.min(1.0 - BOUNDARY_INSET);
        (a_in.asin() * kb).cos() * kb / ((1.0 - a_in) * (1.0 + a_in)).sqrt()
    };
    (value, d_da)
}
