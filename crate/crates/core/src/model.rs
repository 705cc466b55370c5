//! The rule-based fuzzy model.
//!
//! A model holds `r` rules over `n` inputs. Rule `i` has one Gaussian
//! antecedent per input, a crisp consequent `d_i` and a confidence `c_i`.
//! For an input `x` the model computes
//!
//! ```text
//! x'_ij = mu_ij(x_j)                      fuzzification
//! A_ij  = T(x'_ij, c_i)
//! y'_i  = S(...S(S(A_i1, A_i2), A_i3)..., A_in)   left fold, y'_i = A_i1 when n = 1
//! y     = sum_i d_i y'_i / sum_i y'_i    centroid defuzzification
//! ```
//!
//! Note that the antecedent terms are aggregated with the s-norm. With
//! `c_i = 1` this is a disjunctive firing strength, unlike the usual
//! conjunctive (t-norm) firing of Mamdani/TSK systems.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::to_json_exact;
use crate::membership::{GaussianMF, MembershipError};
use crate::norms::{s_norm, t_norm, CompositionKind, NormError, DEFAULT_BETA};

/// Model file schema version written by [`FuzzyModel::save`].
pub const FORMAT_VERSION: u32 = 1;

/// Centroid denominators at or below this are treated as degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("expected {expected} inputs, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("model needs at least one rule")]
    NoRules,
    #[error("model needs at least one input")]
    NoInputs,
    #[error("rule index {index} out of range for {rules} rules")]
    RuleIndex { index: usize, rules: usize },
    #[error("rule confidence must lie in (0, 1], got {0}")]
    InvalidConfidence(f64),
    #[error("consequent center must be finite, got {0}")]
    InvalidConsequent(f64),
    #[error("sum of rule strengths {0:e} is degenerate")]
    DegenerateDenominator(f64),
    #[error("strength and center vectors differ in length ({strengths} vs {centers})")]
    LengthMismatch { strengths: usize, centers: usize },
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Membership(#[from] MembershipError),
    #[error("model file parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("model file field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("unsupported model format_version {found} (this build reads {FORMAT_VERSION})")]
    Version { found: u32 },
}

/// One IF-THEN rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    antecedents: Vec<GaussianMF>,
    consequent_center: f64,
    confidence: f64,
}

impl Rule {
    pub fn new(antecedents: Vec<GaussianMF>, consequent_center: f64, confidence: f64) -> Result<Self, ModelError> {
        if antecedents.is_empty() {
            return Err(ModelError::NoInputs);
        }
        if !consequent_center.is_finite() {
            return Err(ModelError::InvalidConsequent(consequent_center));
        }
        if !(confidence > 0.0 && confidence <= 1.0) {
            return Err(ModelError::InvalidConfidence(confidence));
        }
        Ok(Self { antecedents, consequent_center, confidence })
    }

    pub fn antecedents(&self) -> &[GaussianMF] {
        &self.antecedents
    }

    pub fn consequent_center(&self) -> f64 {
        self.consequent_center
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub(crate) fn antecedents_mut(&mut self) -> &mut [GaussianMF] {
        &mut self.antecedents
    }

    pub(crate) fn set_consequent_center(&mut self, d: f64) {
        self.consequent_center = d;
    }
}

/// Min-max scaling between physical units and the model's unit range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    pub output_min: f64,
    pub output_max: f64,
}

fn span(lo: f64, hi: f64) -> f64 {
    let s = hi - lo;
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

impl Normalization {
    /// Fit to the observed ranges of `inputs` (rows) and `targets`.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64]) -> Self {
        let n = inputs.first().map_or(0, Vec::len);
        let mut input_min = vec![f64::INFINITY; n];
        let mut input_max = vec![f64::NEG_INFINITY; n];
        for row in inputs {
            for (j, &v) in row.iter().enumerate() {
                input_min[j] = input_min[j].min(v);
                input_max[j] = input_max[j].max(v);
            }
        }
        let output_min = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let output_max = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { input_min, input_max, output_min, output_max }
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| (v - self.input_min[j]) / span(self.input_min[j], self.input_max[j]))
            .collect()
    }

    pub fn normalize_output(&self, y: f64) -> f64 {
        (y - self.output_min) / self.output_scale()
    }

    pub fn denormalize_output(&self, y: f64) -> f64 {
        y * self.output_scale() + self.output_min
    }

    /// Physical output units per model unit.
    pub fn output_scale(&self) -> f64 {
        span(self.output_min, self.output_max)
    }
}

/// Intermediate values of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct FiringRecord {
    /// Row-major `r x n` membership table.
    memberships: Vec<f64>,
    arity: usize,
    pub strengths: Vec<f64>,
    pub output: f64,
}

impl FiringRecord {
    pub fn membership(&self, rule: usize, input: usize) -> f64 {
        self.memberships[rule * self.arity + input]
    }

    pub fn membership_row(&self, rule: usize) -> &[f64] {
        &self.memberships[rule * self.arity..(rule + 1) * self.arity]
    }

    pub fn strength_sum(&self) -> f64 {
        self.strengths.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyModel {
    input_arity: usize,
    rules: Vec<Rule>,
    composition: CompositionKind,
    normalization: Option<Normalization>,
}

impl FuzzyModel {
    pub fn new(composition: CompositionKind, rules: Vec<Rule>) -> Result<Self, ModelError> {
        let first = rules.first().ok_or(ModelError::NoRules)?;
        let input_arity = first.antecedents.len();
        if let Some(bad) = rules.iter().find(|r| r.antecedents.len() != input_arity) {
            return Err(ModelError::ArityMismatch { expected: input_arity, got: bad.antecedents.len() });
        }
        Ok(Self { input_arity, rules, composition, normalization: None })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Result<Self, ModelError> {
        for len in [normalization.input_min.len(), normalization.input_max.len()] {
            if len != self.input_arity {
                return Err(ModelError::ArityMismatch { expected: self.input_arity, got: len });
            }
        }
        self.normalization = Some(normalization);
        Ok(self)
    }

    pub fn input_arity(&self) -> usize {
        self.input_arity
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub(crate) fn rules_mut(&mut self) -> &mut [Rule] {
        &mut self.rules
    }

    pub fn composition(&self) -> CompositionKind {
        self.composition
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn consequent_centers(&self) -> Vec<f64> {
        self.rules.iter().map(|r| r.consequent_center).collect()
    }

    fn check_arity(&self, got: usize) -> Result<(), ModelError> {
        if got == self.input_arity {
            Ok(())
        } else {
            Err(ModelError::ArityMismatch { expected: self.input_arity, got })
        }
    }

    fn rule(&self, index: usize) -> Result<&Rule, ModelError> {
        self.rules.get(index).ok_or(ModelError::RuleIndex { index, rules: self.rules.len() })
    }

    /// Row-major `r x n` table of `mu_ij(x_j)`.
    pub fn fuzzify(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_arity(x.len())?;
        Ok(self.rules.iter().map(|rule| rule.antecedents.iter().zip(x).map(|(mf, &xj)| mf.mu(xj)).collect()).collect())
    }

    /// Firing strength of rule `index` for a given membership row.
    pub fn rule_strength(&self, index: usize, row: &[f64]) -> Result<f64, ModelError> {
        let rule = self.rule(index)?;
        self.check_arity(row.len())?;
        Ok(firing_strength(self.composition, rule.confidence, row)?)
    }

    /// `d y'_i / d x'_ij` for every input `j` of rule `index`.
    pub fn rule_strength_grad(&self, index: usize, row: &[f64]) -> Result<Vec<f64>, ModelError> {
        let rule = self.rule(index)?;
        self.check_arity(row.len())?;
        let mut grad = vec![0.0; row.len()];
        let mut scratch = Vec::new();
        firing_strength_grad(self.composition, rule.confidence, row, &mut grad, &mut scratch)?;
        Ok(grad)
    }

    /// Output in model units together with the intermediate values.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, FiringRecord), ModelError> {
        self.check_arity(x.len())?;
        let n = self.input_arity;
        let mut memberships = Vec::with_capacity(self.rules.len() * n);
        let mut strengths = Vec::with_capacity(self.rules.len());
        for rule in &self.rules {
            let start = memberships.len();
            memberships.extend(rule.antecedents.iter().zip(x).map(|(mf, &xj)| mf.mu(xj)));
            strengths.push(firing_strength(self.composition, rule.confidence, &memberships[start..])?);
        }
        let output = defuzzify_iter(strengths.iter().copied().zip(self.rules.iter().map(|r| r.consequent_center)))?;
        Ok((output, FiringRecord { memberships, arity: n, strengths, output }))
    }

    /// Predict from physical inputs, returning physical output. Identity when
    /// the model carries no normalization.
    pub fn predict_physical(&self, x: &[f64]) -> Result<f64, ModelError> {
        match &self.normalization {
            Some(norm) => {
                self.check_arity(x.len())?;
                let (y, _) = self.predict(&norm.normalize_input(x))?;
                Ok(norm.denormalize_output(y))
            }
            None => Ok(self.predict(x)?.0),
        }
    }

    /// Serialize to the versioned JSON model format.
    pub fn save(&self) -> String {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            composition: self.composition.name().to_string(),
            beta: match self.composition {
                CompositionKind::SmoothI { beta } => Some(beta),
                _ => None,
            },
            input_arity: self.input_arity,
            normalization: self.normalization.clone(),
            rules: self
                .rules
                .iter()
                .map(|r| RuleFile {
                    antecedents: r
                        .antecedents
                        .iter()
                        .map(|mf| MfFile { center: mf.center(), spread: mf.spread() })
                        .collect(),
                    consequent_center: r.consequent_center,
                    confidence: r.confidence,
                })
                .collect(),
        };
        to_json_exact(&file).expect("model file serialization is infallible")
    }

    /// Parse and validate a model file.
    pub fn load(text: &str) -> Result<Self, ModelError> {
        let probe: VersionProbe = serde_json::from_str(text).map_err(parse_error)?;
        if probe.format_version != FORMAT_VERSION {
            return Err(ModelError::Version { found: probe.format_version });
        }
        let file: ModelFile = serde_json::from_str(text).map_err(parse_error)?;
        file.into_model()
    }
}

/// `sum d_i s_i / sum s_i`.
pub fn defuzzify(strengths: &[f64], centers: &[f64]) -> Result<f64, ModelError> {
    if strengths.len() != centers.len() {
        return Err(ModelError::LengthMismatch { strengths: strengths.len(), centers: centers.len() });
    }
    defuzzify_iter(strengths.iter().copied().zip(centers.iter().copied()))
}

fn defuzzify_iter(pairs: impl Iterator<Item = (f64, f64)>) -> Result<f64, ModelError> {
    let (num, den) = pairs.fold((0.0, 0.0), |(num, den), (s, d)| (num + d * s, den + s));
    if den.is_nan() || den <= DEGENERATE_DENOMINATOR {
        return Err(ModelError::DegenerateDenominator(den));
    }
    Ok(num / den)
}

/// Left s-fold of `T(x'_j, confidence)` over the membership row.
pub fn firing_strength(kind: CompositionKind, confidence: f64, row: &[f64]) -> Result<f64, NormError> {
    let (first, rest) = row.split_first().ok_or(NormError::EmptySequence)?;
    let mut acc = t_norm(kind, *first, confidence)?.value;
    for &m in rest {
        let term = t_norm(kind, m, confidence)?.value;
        acc = s_norm(kind, acc, term)?.value;
    }
    Ok(acc)
}

/// Firing strength plus its exact gradient with respect to each membership.
///
/// With `acc_1 = A_1` and `acc_k = S(acc_{k-1}, A_k)`, the derivative of the
/// result with respect to `A_j` is the second-argument partial of step `j`
/// (none for `j = 1`) times the first-argument partials of all later steps.
/// `grad` must have the row's length; `scratch` is reused storage.
pub(crate) fn firing_strength_grad(
    kind: CompositionKind,
    confidence: f64,
    row: &[f64],
    grad: &mut [f64],
    scratch: &mut Vec<f64>,
) -> Result<f64, NormError> {
    let n = row.len();
    if n == 0 {
        return Err(NormError::EmptySequence);
    }
    // scratch[k] holds dS/d(acc) of fold step k (k >= 1)
    scratch.clear();
    scratch.resize(n, 0.0);
    let first = t_norm(kind, row[0], confidence)?;
    grad[0] = first.d_da;
    let mut acc = first.value;
    for k in 1..n {
        let term = t_norm(kind, row[k], confidence)?;
        let s = s_norm(kind, acc, term.value)?;
        scratch[k] = s.d_da;
        grad[k] = s.d_db * term.d_da;
        acc = s.value;
    }
    let mut tail = 1.0;
    for k in (0..n).rev() {
        grad[k] *= tail;
        if k > 0 {
            tail *= scratch[k];
        }
    }
    Ok(acc)
}

fn parse_error(e: serde_json::Error) -> ModelError {
    ModelError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    composition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    input_arity: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalization: Option<Normalization>,
    rules: Vec<RuleFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    antecedents: Vec<MfFile>,
    consequent_center: f64,
    confidence: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MfFile {
    center: f64,
    spread: f64,
}

fn field_err(field: impl Into<String>, e: impl std::fmt::Display) -> ModelError {
    ModelError::Field { field: field.into(), message: e.to_string() }
}

impl ModelFile {
    fn into_model(self) -> Result<FuzzyModel, ModelError> {
        let mut composition: CompositionKind = self.composition.parse().map_err(|e| field_err("composition", e))?;
        if let CompositionKind::SmoothI { .. } = composition {
            composition =
                CompositionKind::smooth_i(self.beta.unwrap_or(DEFAULT_BETA)).map_err(|e| field_err("beta", e))?;
        }
        if self.input_arity == 0 {
            return Err(field_err("input_arity", "must be at least 1"));
        }
        if self.rules.is_empty() {
            return Err(field_err("rules", "must contain at least one rule"));
        }
        let mut rules = Vec::with_capacity(self.rules.len());
        for (i, rule) in self.rules.into_iter().enumerate() {
            if rule.antecedents.len() != self.input_arity {
                return Err(field_err(
                    format!("rules[{i}].antecedents"),
                    format!("expected {} entries, found {}", self.input_arity, rule.antecedents.len()),
                ));
            }
            let mut antecedents = Vec::with_capacity(rule.antecedents.len());
            for (j, mf) in rule.antecedents.iter().enumerate() {
                let g = GaussianMF::new(mf.center, mf.spread)
                    .map_err(|e| field_err(format!("rules[{i}].antecedents[{j}]"), e))?;
                antecedents.push(g);
            }
            let rule = Rule::new(antecedents, rule.consequent_center, rule.confidence)
                .map_err(|e| field_err(format!("rules[{i}]"), e))?;
            rules.push(rule);
        }
        let model = FuzzyModel::new(composition, rules)?;
        match self.normalization {
            Some(norm) => model.with_normalization(norm).map_err(|e| field_err("normalization", e)),
            None => Ok(model),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXP_HALF: f64 = 0.606_530_659_712_633_4;

    fn mf(c: f64, d: f64) -> GaussianMF {
        GaussianMF::new(c, d).unwrap()
    }

    type RuleSpec<'a> = (&'a [(f64, f64)], f64, f64);

    fn model(kind: CompositionKind, rules: &[RuleSpec]) -> FuzzyModel {
        let rules = rules
            .iter()
            .map(|(ants, d, c)| Rule::new(ants.iter().map(|&(cc, dd)| mf(cc, dd)).collect(), *d, *c).unwrap())
            .collect();
        FuzzyModel::new(kind, rules).unwrap()
    }

    #[test]
    fn fuzzify_examples() {
        let m = model(CompositionKind::ProductSum, &[(&[(0.0, 1.0), (0.0, 1.0)], 0.0, 1.0)]);
        assert_eq!(m.fuzzify(&[0.0, 0.0]).unwrap(), vec![vec![1.0, 1.0]]);
        let row = &m.fuzzify(&[1.0, 1.0]).unwrap()[0];
        assert!(row.iter().all(|v| (v - EXP_HALF).abs() < 1e-15));

        let m = model(
            CompositionKind::ProductSum,
            &[(&[(0.0, 1.0), (1.0, 1.0)], 0.0, 1.0), (&[(2.0, 1.0), (3.0, 1.0)], 0.0, 1.0)],
        );
        let table = m.fuzzify(&[0.0, 1.0]).unwrap();
        assert_eq!(table[0], vec![1.0, 1.0]);
        assert!(table[1].iter().all(|&v| v < 1.0));
        assert!(matches!(m.fuzzify(&[0.0]), Err(ModelError::ArityMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn rule_strength_examples() {
        let one = |kind, conf| model(kind, &[(&[(0.0, 1.0), (0.0, 1.0)], 0.0, conf)]);
        let v = one(CompositionKind::MinMax, 1.0).rule_strength(0, &[0.3, 0.8]).unwrap();
        assert_eq!(v, 0.8);
        let v = one(CompositionKind::ProductSum, 1.0).rule_strength(0, &[0.5, 0.5]).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        let three = model(CompositionKind::ProductSum, &[(&[(0.0, 1.0); 3], 0.0, 0.5)]);
        let v = three.rule_strength(0, &[1.0, 1.0, 1.0]).unwrap();
        assert!((v - 0.875).abs() < 1e-15);
    }

    #[test]
    fn rule_strength_grad_examples() {
        let single = model(CompositionKind::ProductSum, &[(&[(0.0, 1.0)], 0.0, 1.0)]);
        assert_eq!(single.rule_strength_grad(0, &[0.42]).unwrap(), vec![1.0]);
        let two = model(CompositionKind::ProductSum, &[(&[(0.0, 1.0), (0.0, 1.0)], 0.0, 1.0)]);
        let g = two.rule_strength_grad(0, &[0.5, 0.5]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn defuzzify_examples() {
        assert!((defuzzify(&[0.2, 0.8], &[1.0, 3.0]).unwrap() - 2.6).abs() < 1e-15);
        assert_eq!(defuzzify(&[0.3, 0.1, 0.9], &[4.0, 4.0, 4.0]).unwrap(), 4.0);
        assert_eq!(defuzzify(&[1.0, 1e-320], &[5.0, -5.0]).unwrap(), 5.0);
        assert!(matches!(defuzzify(&[0.0, 0.0], &[1.0, 2.0]), Err(ModelError::DegenerateDenominator(_))));
        assert!(defuzzify(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn predict_examples() {
        let m = model(CompositionKind::SmoothAtan, &[(&[(0.3, 1.0), (-2.0, 0.5)], 7.0, 1.0)]);
        let (y, rec) = m.predict(&[0.3, -2.0]).unwrap();
        assert_eq!(y, 7.0);
        assert_eq!(rec.membership_row(0), &[1.0, 1.0]);

        let sym = model(CompositionKind::SmoothAcos, &[(&[(-1.0, 1.0)], -1.0, 1.0), (&[(1.0, 1.0)], 1.0, 1.0)]);
        assert!(sym.predict(&[0.0]).unwrap().0.abs() < 1e-15);
    }

    #[test]
    fn load_rejects_bad_files() {
        let m = model(CompositionKind::SmoothAcos, &[(&[(0.0, 1.0)], 1.0, 1.0)]);
        let text = m.save();
        assert_eq!(FuzzyModel::load(&text).unwrap(), m);

        let neg = text.replace("\"spread\": 1.0000000000000000e0", "\"spread\": -1.0");
        let err = FuzzyModel::load(&neg).unwrap_err();
        assert!(matches!(&err, ModelError::Field { field, .. } if field == "rules[0].antecedents[0]"), "{err}");

        let unknown = text.replace("\"acos\"", "\"hamacher\"");
        let err = FuzzyModel::load(&unknown).unwrap_err();
        assert!(err.to_string().contains("hamacher"), "{err}");

        let future = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert_eq!(FuzzyModel::load(&future).unwrap_err(), ModelError::Version { found: 2 });

        let broken = text.replace("\"rules\": [", "\"rules\": [[");
        assert!(matches!(FuzzyModel::load(&broken).unwrap_err(), ModelError::Parse { line, .. } if line > 1));
    }

    #[test]
    fn smooth1_beta_survives_save() {
        let m = model(CompositionKind::SmoothI { beta: 3.5 }, &[(&[(0.0, 1.0)], 1.0, 1.0)]);
        assert_eq!(FuzzyModel::load(&m.save()).unwrap().composition(), CompositionKind::SmoothI { beta: 3.5 });
    }
}
