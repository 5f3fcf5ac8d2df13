//! Mamdani fuzzy inference: linguistic variables with piecewise-linear
//! membership functions, AND = min, implication = min, aggregation = max,
//! centroid defuzzification. The tumour/normal decision ships as a rule
//! file (see [`parser`]) so the whole knowledge base stays replaceable.

pub mod parser;

use std::fmt;

use thiserror::Error;

use crate::dataset::Label;

/// Sample count used for defuzzification when none is configured.
pub const DEFAULT_RESOLUTION: usize = 1001;

/// Smallest resolution that keeps the centroid quadrature honest.
pub const MIN_RESOLUTION: usize = 101;

/// Name of the output term whose membership votes for a tumour.
pub const TUMOUR_TERM: &str = "tumour";

/// Name of the output term whose membership votes for a normal scan.
pub const NORMAL_TERM: &str = "normal";

#[derive(Debug, Error, PartialEq)]
pub enum FuzzyError {
    #[error("membership parameters invalid: {0}")]
    BadMembership(&'static str),
    #[error("universe [{lo}, {hi}] is not an increasing finite interval")]
    BadUniverse { lo: f64, hi: f64 },
    #[error("variable name '{0}' is empty or contains whitespace or '#'")]
    InvalidName(String),
    #[error("term '{term}' already defined on variable '{variable}'")]
    DuplicateTerm { variable: String, term: String },
    #[error("term '{term}' on '{variable}' has support outside the universe")]
    SupportOutsideUniverse { variable: String, term: String },
    #[error("duplicate variable name '{0}'")]
    DuplicateVariable(String),
    #[error("a rule system needs at least one input variable")]
    NoInputs,
    #[error("resolution {0} is below the minimum of {MIN_RESOLUTION}")]
    ResolutionTooSmall(usize),
    #[error("a rule needs at least one antecedent")]
    EmptyAntecedents,
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("variable '{variable}' has no term '{term}'")]
    UnknownTerm { variable: String, term: String },
    #[error("expected {expected} input values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("no feature supplies input variable '{0}'")]
    UnknownFeature(String),
    #[error("output variable has no '{0}' term to classify against")]
    MissingClassTerm(&'static str),
}

/// Piecewise-linear membership function over a variable's universe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MembershipFunction {
    Triangular { a: f64, b: f64, c: f64 },
    Trapezoidal { a: f64, b: f64, c: f64, d: f64 },
}

impl MembershipFunction {
    pub fn triangular(a: f64, b: f64, c: f64) -> Result<Self, FuzzyError> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(FuzzyError::BadMembership("parameters must be finite"));
        }
        if !(a <= b && b <= c) {
            return Err(FuzzyError::BadMembership("need a <= b <= c"));
        }
        Ok(Self::Triangular { a, b, c })
    }

    pub fn trapezoidal(a: f64, b: f64, c: f64, d: f64) -> Result<Self, FuzzyError> {
        if !(a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite()) {
            return Err(FuzzyError::BadMembership("parameters must be finite"));
        }
        if !(a <= b && b <= c && c <= d) {
            return Err(FuzzyError::BadMembership("need a <= b <= c <= d"));
        }
        Ok(Self::Trapezoidal { a, b, c, d })
    }

    /// Membership degree at `x`, always in `[0, 1]`.
    ///
    /// The peak test runs before the edge tests, so a degenerate vertical
    /// edge (equal adjacent parameters) still scores 1 at the shared point.
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Triangular { a, b, c } => {
                if x == b {
                    1.0
                } else if x > a && x < b {
                    (x - a) / (b - a)
                } else if x > b && x < c {
                    (c - x) / (c - b)
                } else {
                    0.0
                }
            }
            Self::Trapezoidal { a, b, c, d } => {
                if x >= b && x <= c {
                    1.0
                } else if x > a && x < b {
                    (x - a) / (b - a)
                } else if x > c && x < d {
                    (d - x) / (d - c)
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed interval outside which the degree is 0.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Triangular { a, c, .. } => (a, c),
            Self::Trapezoidal { a, d, .. } => (a, d),
        }
    }
}

/// A named quantity whose values are fuzzy terms over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticVariable {
    name: String,
    lo: f64,
    hi: f64,
    terms: Vec<(String, MembershipFunction)>,
}

impl LinguisticVariable {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self, FuzzyError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == '#') {
            return Err(FuzzyError::InvalidName(name));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(FuzzyError::BadUniverse { lo, hi });
        }
        Ok(Self {
            name,
            lo,
            hi,
            terms: Vec::new(),
        })
    }

    pub fn add_term(
        &mut self,
        name: impl Into<String>,
        mf: MembershipFunction,
    ) -> Result<(), FuzzyError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == '#') {
            return Err(FuzzyError::InvalidName(name));
        }
        if self.terms.iter().any(|(n, _)| *n == name) {
            return Err(FuzzyError::DuplicateTerm {
                variable: self.name.clone(),
                term: name,
            });
        }
        let (lo, hi) = mf.support();
        if lo < self.lo || hi > self.hi {
            return Err(FuzzyError::SupportOutsideUniverse {
                variable: self.name.clone(),
                term: name,
            });
        }
        self.terms.push((name, mf));
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn universe(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn terms(&self) -> &[(String, MembershipFunction)] {
        &self.terms
    }

    pub fn term_index(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|(n, _)| n == name)
    }

    /// Degree of every term at `x`, clamping `x` into the universe first.
    pub fn fuzzify(&self, x: f64) -> Vec<(&str, f64)> {
        let x = x.clamp(self.lo, self.hi);
        self.terms
            .iter()
            .map(|(n, mf)| (n.as_str(), mf.eval(x)))
            .collect()
    }

    fn degrees(&self, x: f64) -> Vec<f64> {
        let x = x.clamp(self.lo, self.hi);
        self.terms.iter().map(|(_, mf)| mf.eval(x)).collect()
    }
}

/// AND-joined antecedents implying one output term; indices resolve into
/// the owning system's variable and term lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzyRule {
    antecedents: Vec<(usize, usize)>,
    consequent: usize,
}

impl FuzzyRule {
    /// `(input variable index, term index)` pairs.
    pub fn antecedents(&self) -> &[(usize, usize)] {
        &self.antecedents
    }

    /// Output term index.
    pub fn consequent(&self) -> usize {
        self.consequent
    }
}

/// Per-image inputs to the classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    /// Tumour-region pixels over total pixels, in `[0, 1]`.
    pub size_fraction: f64,
    /// Normalized Otsu threshold of the adjusted image, in `[0, 1]`.
    pub global_threshold: f64,
}

impl FeatureVector {
    /// Value feeding the input variable called `name`, if any.
    pub fn value_for(&self, name: &str) -> Option<f64> {
        match name {
            "size" => Some(self.size_fraction),
            "threshold" => Some(self.global_threshold),
            _ => None,
        }
    }
}

/// Output fuzzy set sampled uniformly over the output universe.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFuzzySet {
    lo: f64,
    hi: f64,
    mu: Vec<f64>,
}

impl OutputFuzzySet {
    pub fn universe(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn degrees(&self) -> &[f64] {
        &self.mu
    }

    /// Sample abscissa `i` of `len()` evenly spaced points.
    pub fn x_at(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / (self.mu.len() - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Centroid of a sampled fuzzy set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defuzzified {
    pub crisp: f64,
    /// Set when the aggregate carried no mass; `crisp` is then the
    /// universe midpoint.
    pub no_rule_fired: bool,
}

/// Discrete centroid `sum(x*mu) / sum(mu)`; an all-zero set yields the
/// universe midpoint with the no-rule flag raised.
pub fn defuzzify_centroid(set: &OutputFuzzySet) -> Defuzzified {
    let mut mass = 0.0f64;
    let mut moment = 0.0f64;
    for (i, &m) in set.mu.iter().enumerate() {
        mass += m;
        moment += set.x_at(i) * m;
    }
    if mass == 0.0 {
        Defuzzified {
            crisp: (set.lo + set.hi) / 2.0,
            no_rule_fired: true,
        }
    } else {
        Defuzzified {
            crisp: (moment / mass).clamp(set.lo, set.hi),
            no_rule_fired: false,
        }
    }
}

/// Diagnostic flags carried alongside a classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InferenceFlags {
    pub no_rule_fired: bool,
}

/// Crisp output and the label it maps to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub crisp: f64,
    pub label: Label,
    pub flags: InferenceFlags,
}

/// A complete, immutable-after-construction Mamdani rule system.
#[derive(Debug, Clone, PartialEq)]
pub struct MamdaniFis {
    inputs: Vec<LinguisticVariable>,
    output: LinguisticVariable,
    rules: Vec<FuzzyRule>,
    resolution: usize,
}

impl MamdaniFis {
    pub fn new(
        inputs: Vec<LinguisticVariable>,
        output: LinguisticVariable,
        resolution: usize,
    ) -> Result<Self, FuzzyError> {
        if inputs.is_empty() {
            return Err(FuzzyError::NoInputs);
        }
        if resolution < MIN_RESOLUTION {
            return Err(FuzzyError::ResolutionTooSmall(resolution));
        }
        let mut names: Vec<&str> = inputs.iter().map(|v| v.name()).collect();
        names.push(output.name());
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(FuzzyError::DuplicateVariable(n.to_string()));
            }
        }
        Ok(Self {
            inputs,
            output,
            rules: Vec::new(),
            resolution,
        })
    }

    /// Adds `IF <var> IS <term> [AND ...] THEN <output> IS <consequent>`,
    /// resolving every name against the declared variables.
    pub fn add_rule(
        &mut self,
        antecedents: &[(&str, &str)],
        consequent: &str,
    ) -> Result<(), FuzzyError> {
        if antecedents.is_empty() {
            return Err(FuzzyError::EmptyAntecedents);
        }
        let mut resolved = Vec::with_capacity(antecedents.len());
        for &(var, term) in antecedents {
            let vi = self
                .inputs
                .iter()
                .position(|v| v.name() == var)
                .ok_or_else(|| FuzzyError::UnknownVariable(var.to_string()))?;
            let ti = self.inputs[vi].term_index(term).ok_or_else(|| {
                FuzzyError::UnknownTerm {
                    variable: var.to_string(),
                    term: term.to_string(),
                }
            })?;
            resolved.push((vi, ti));
        }
        let ci = self.output.term_index(consequent).ok_or_else(|| {
            FuzzyError::UnknownTerm {
                variable: self.output.name().to_string(),
                term: consequent.to_string(),
            }
        })?;
        self.rules.push(FuzzyRule {
            antecedents: resolved,
            consequent: ci,
        });
        Ok(())
    }

    pub fn inputs(&self) -> &[LinguisticVariable] {
        &self.inputs
    }

    pub fn output(&self) -> &LinguisticVariable {
        &self.output
    }

    pub fn rules(&self) -> &[FuzzyRule] {
        &self.rules
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn with_resolution(mut self, resolution: usize) -> Result<Self, FuzzyError> {
        if resolution < MIN_RESOLUTION {
            return Err(FuzzyError::ResolutionTooSmall(resolution));
        }
        self.resolution = resolution;
        Ok(self)
    }

    /// Runs every rule on one input value per declared variable: firing
    /// strength is the min over antecedent degrees, the consequent is
    /// clipped at that strength, and rule outputs merge by pointwise max.
    pub fn infer(&self, values: &[f64]) -> Result<OutputFuzzySet, FuzzyError> {
        if values.len() != self.inputs.len() {
            return Err(FuzzyError::ArityMismatch {
                expected: self.inputs.len(),
                got: values.len(),
            });
        }
        let degrees: Vec<Vec<f64>> = self
            .inputs
            .iter()
            .zip(values)
            .map(|(var, &x)| var.degrees(x))
            .collect();
        let (lo, hi) = self.output.universe();
        let mut set = OutputFuzzySet {
            lo,
            hi,
            mu: vec![0.0; self.resolution],
        };
        for rule in &self.rules {
            let strength = rule
                .antecedents
                .iter()
                .map(|&(vi, ti)| degrees[vi][ti])
                .fold(1.0f64, f64::min);
            if strength == 0.0 {
                continue;
            }
            let mf = &self.output.terms[rule.consequent].1;
            for i in 0..set.mu.len() {
                let clipped = strength.min(mf.eval(set.x_at(i)));
                if clipped > set.mu[i] {
                    set.mu[i] = clipped;
                }
            }
        }
        Ok(set)
    }

    /// Label implied by a crisp output: whichever of the `tumour` /
    /// `normal` output terms has the larger membership there, ties going
    /// to tumour (the conservative call for a screening pipeline).
    pub fn label_for_crisp(&self, crisp: f64) -> Result<Label, FuzzyError> {
        let tumour = self
            .output
            .term_index(TUMOUR_TERM)
            .ok_or(FuzzyError::MissingClassTerm(TUMOUR_TERM))?;
        let normal = self
            .output
            .term_index(NORMAL_TERM)
            .ok_or(FuzzyError::MissingClassTerm(NORMAL_TERM))?;
        let t = self.output.terms[tumour].1.eval(crisp);
        let n = self.output.terms[normal].1.eval(crisp);
        Ok(if t >= n { Label::Tumour } else { Label::Normal })
    }

    /// Full inference chain for one image's features.
    ///
    /// Input variables are fed by name ([`FeatureVector::value_for`]); a
    /// rule file declaring an input this pipeline does not compute is
    /// rejected here rather than silently fed a default.
    pub fn classify(&self, features: &FeatureVector) -> Result<Classification, FuzzyError> {
        let values: Vec<f64> = self
            .inputs
            .iter()
            .map(|v| {
                features
                    .value_for(v.name())
                    .ok_or_else(|| FuzzyError::UnknownFeature(v.name().to_string()))
            })
            .collect::<Result<_, _>>()?;
        let set = self.infer(&values)?;
        let out = defuzzify_centroid(&set);
        let label = self.label_for_crisp(out.crisp)?;
        Ok(Classification {
            crisp: out.crisp,
            label,
            flags: InferenceFlags {
                no_rule_fired: out.no_rule_fired,
            },
        })
    }

    /// The rule system shipped with the tool, parsed from the embedded
    /// copy of `default.fis`.
    pub fn shipped_default() -> MamdaniFis {
        parser::parse_fis(DEFAULT_FIS_TEXT).expect("embedded rule file is valid; covered by tests")
    }
}

impl fmt::Display for MamdaniFis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} input(s), {} rule(s), resolution {}",
            self.inputs.len(),
            self.rules.len(),
            self.resolution
        )
    }
}

/// Contents of the shipped `default.fis`.
pub const DEFAULT_FIS_TEXT: &str = include_str!("../../assets/default.fis");
