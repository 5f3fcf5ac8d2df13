//! Line-oriented rule-file format for [`MamdaniFis`].
//!
//! ```text
//! input  <name> <lo> <hi>
//! output <name> <lo> <hi>
//! term <var> <termname> tri  <a> <b> <c>
//! term <var> <termname> trap <a> <b> <c> <d>
//! rule IF <var> IS <term> [AND <var> IS <term>]... THEN <outvar> IS <term>
//! ```
//!
//! `#` starts a comment, keywords are case-sensitive, names must be
//! declared before use, and exactly one `output` is allowed. OR and NOT
//! are reserved: the grammar recognizes and rejects them.

use std::fmt;

use thiserror::Error;

use super::{FuzzyError, LinguisticVariable, MamdaniFis, MembershipFunction, DEFAULT_RESOLUTION};

/// Parse failure with a 1-based source position; `line == 0` marks
/// whole-file problems (nothing to point at).
#[derive(Debug, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "line {}, column {}: {}", self.line, self.column, self.kind)
        }
    }
}

impl std::error::Error for ParseError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match &self.kind {
            ParseErrorKind::Invalid(e) => Some(e),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseErrorKind {
    #[error("unknown directive '{0}' (expected input, output, term or rule)")]
    UnknownDirective(String),
    #[error("missing {0}")]
    MissingToken(&'static str),
    #[error("unexpected trailing token '{0}'")]
    TrailingToken(String),
    #[error("'{0}' is not a number")]
    InvalidNumber(String),
    #[error("expected {expected}, found '{found}'")]
    ExpectedKeyword {
        expected: &'static str,
        found: String,
    },
    #[error("connective '{0}' is reserved; only AND is supported")]
    ReservedConnective(String),
    #[error("duplicate variable '{0}'")]
    DuplicateVariable(String),
    #[error("second output variable '{0}' (exactly one output is allowed)")]
    SecondOutput(String),
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("variable '{variable}' has no term '{term}'")]
    UnknownTerm { variable: String, term: String },
    #[error("'{0}' is the output variable and cannot appear in IF")]
    OutputInAntecedent(String),
    #[error("'{0}' is an input variable and cannot follow THEN")]
    InputInConsequent(String),
    #[error("unknown membership shape '{0}' (expected tri or trap)")]
    UnknownShape(String),
    #[error("no output variable declared")]
    MissingOutput,
    #[error("no rules declared")]
    NoRules,
    #[error(transparent)]
    Invalid(#[from] FuzzyError),
}

fn err(line: usize, column: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, column, kind }
}

/// Tokens of one line with 1-based character columns; text from the
/// first `#` on is a comment.
fn tokenize(line: &str) -> Vec<(usize, &str)> {
    let cut = line.find('#').unwrap_or(line.len());
    let line = &line[..cut];
    let mut tokens = Vec::new();
    let mut start: Option<(usize, usize)> = None; // (byte, column)
    for (col, (byte, ch)) in line.char_indices().enumerate() {
        if ch.is_whitespace() {
            if let Some((sb, sc)) = start.take() {
                tokens.push((sc + 1, &line[sb..byte]));
            }
        } else if start.is_none() {
            start = Some((byte, col));
        }
    }
    if let Some((sb, sc)) = start {
        tokens.push((sc + 1, &line[sb..]));
    }
    tokens
}

struct Cursor<'a> {
    line_no: usize,
    tokens: &'a [(usize, &'a str)],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn after_last(&self) -> usize {
        self.tokens[..self.pos]
            .last()
            .map_or(1, |&(col, tok)| col + tok.chars().count())
    }

    fn next(&mut self, what: &'static str) -> Result<(usize, &'a str), ParseError> {
        match self.tokens.get(self.pos) {
            Some(&(col, tok)) => {
                self.pos += 1;
                Ok((col, tok))
            }
            None => Err(err(
                self.line_no,
                self.after_last(),
                ParseErrorKind::MissingToken(what),
            )),
        }
    }

    fn next_number(&mut self, what: &'static str) -> Result<f64, ParseError> {
        let (col, tok) = self.next(what)?;
        tok.parse::<f64>()
            .map_err(|_| err(self.line_no, col, ParseErrorKind::InvalidNumber(tok.into())))
    }

    fn keyword(&mut self, kw: &'static str) -> Result<(), ParseError> {
        let (col, tok) = self.next(kw)?;
        if tok == kw {
            Ok(())
        } else {
            Err(err(
                self.line_no,
                col,
                ParseErrorKind::ExpectedKeyword {
                    expected: kw,
                    found: tok.into(),
                },
            ))
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        match self.tokens.get(self.pos) {
            None => Ok(()),
            Some(&(col, tok)) => Err(err(
                self.line_no,
                col,
                ParseErrorKind::TrailingToken(tok.into()),
            )),
        }
    }
}

struct ParsedRule {
    antecedents: Vec<(String, String)>,
    consequent: String,
}

/// Parses rule-file text into a validated system at the default
/// resolution.
pub fn parse_fis(text: &str) -> Result<MamdaniFis, ParseError> {
    let mut inputs: Vec<LinguisticVariable> = Vec::new();
    let mut output: Option<LinguisticVariable> = None;
    let mut rules: Vec<ParsedRule> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        let tokens = tokenize(line);
        if tokens.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            line_no,
            tokens: &tokens,
            pos: 0,
        };
        let (dcol, directive) = cur.next("directive")?;
        match directive {
            "input" | "output" => {
                let (ncol, name) = cur.next("variable name")?;
                let lo = cur.next_number("universe low bound")?;
                let hi = cur.next_number("universe high bound")?;
                cur.finish()?;
                let taken = inputs.iter().any(|v| v.name() == name)
                    || output.as_ref().is_some_and(|v| v.name() == name);
                if taken {
                    return Err(err(
                        line_no,
                        ncol,
                        ParseErrorKind::DuplicateVariable(name.into()),
                    ));
                }
                let var = LinguisticVariable::new(name, lo, hi)
                    .map_err(|e| err(line_no, ncol, e.into()))?;
                if directive == "input" {
                    inputs.push(var);
                } else if output.is_some() {
                    return Err(err(line_no, ncol, ParseErrorKind::SecondOutput(name.into())));
                } else {
                    output = Some(var);
                }
            }
            "term" => {
                let (vcol, var_name) = cur.next("variable name")?;
                let (tcol, term_name) = cur.next("term name")?;
                let (scol, shape) = cur.next("membership shape (tri or trap)")?;
                let mf = match shape {
                    "tri" => {
                        let a = cur.next_number("parameter a")?;
                        let b = cur.next_number("parameter b")?;
                        let c = cur.next_number("parameter c")?;
                        MembershipFunction::triangular(a, b, c)
                            .map_err(|e| err(line_no, scol, e.into()))?
                    }
                    "trap" => {
                        let a = cur.next_number("parameter a")?;
                        let b = cur.next_number("parameter b")?;
                        let c = cur.next_number("parameter c")?;
                        let d = cur.next_number("parameter d")?;
                        MembershipFunction::trapezoidal(a, b, c, d)
                            .map_err(|e| err(line_no, scol, e.into()))?
                    }
                    other => {
                        return Err(err(line_no, scol, ParseErrorKind::UnknownShape(other.into())))
                    }
                };
                cur.finish()?;
                let var = inputs
                    .iter_mut()
                    .find(|v| v.name() == var_name)
                    .or(output.as_mut().filter(|v| v.name() == var_name));
                match var {
                    Some(v) => v
                        .add_term(term_name, mf)
                        .map_err(|e| err(line_no, tcol, e.into()))?,
                    None => {
                        return Err(err(
                            line_no,
                            vcol,
                            ParseErrorKind::UnknownVariable(var_name.into()),
                        ))
                    }
                }
            }
            "rule" => {
                if let Some(&(col, tok)) =
                    tokens.iter().find(|&&(_, t)| t == "OR" || t == "NOT")
                {
                    return Err(err(
                        line_no,
                        col,
                        ParseErrorKind::ReservedConnective(tok.into()),
                    ));
                }
                cur.keyword("IF")?;
                let mut antecedents: Vec<(String, String)> = Vec::new();
                loop {
                    let (vcol, var_name) = cur.next("input variable name")?;
                    if output.as_ref().is_some_and(|v| v.name() == var_name) {
                        return Err(err(
                            line_no,
                            vcol,
                            ParseErrorKind::OutputInAntecedent(var_name.into()),
                        ));
                    }
                    let var = inputs.iter().find(|v| v.name() == var_name).ok_or_else(|| {
                        err(line_no, vcol, ParseErrorKind::UnknownVariable(var_name.into()))
                    })?;
                    cur.keyword("IS")?;
                    let (tcol, term_name) = cur.next("term name")?;
                    if var.term_index(term_name).is_none() {
                        return Err(err(
                            line_no,
                            tcol,
                            ParseErrorKind::UnknownTerm {
                                variable: var_name.into(),
                                term: term_name.into(),
                            },
                        ));
                    }
                    antecedents.push((var_name.into(), term_name.into()));
                    let (ccol, connective) = cur.next("AND or THEN")?;
                    match connective {
                        "AND" => continue,
                        "THEN" => break,
                        other => {
                            return Err(err(
                                line_no,
                                ccol,
                                ParseErrorKind::ExpectedKeyword {
                                    expected: "AND or THEN",
                                    found: other.into(),
                                },
                            ))
                        }
                    }
                }
                let (ocol, out_name) = cur.next("output variable name")?;
                let out_var = match &output {
                    Some(v) if v.name() == out_name => v,
                    _ if inputs.iter().any(|v| v.name() == out_name) => {
                        return Err(err(
                            line_no,
                            ocol,
                            ParseErrorKind::InputInConsequent(out_name.into()),
                        ))
                    }
                    _ => {
                        return Err(err(
                            line_no,
                            ocol,
                            ParseErrorKind::UnknownVariable(out_name.into()),
                        ))
                    }
                };
                cur.keyword("IS")?;
                let (tcol, term_name) = cur.next("term name")?;
                if out_var.term_index(term_name).is_none() {
                    return Err(err(
                        line_no,
                        tcol,
                        ParseErrorKind::UnknownTerm {
                            variable: out_name.into(),
                            term: term_name.into(),
                        },
                    ));
                }
                cur.finish()?;
                rules.push(ParsedRule {
                    antecedents,
                    consequent: term_name.into(),
                });
            }
            other => {
                return Err(err(
                    line_no,
                    dcol,
                    ParseErrorKind::UnknownDirective(other.into()),
                ))
            }
        }
    }

    let output = output.ok_or_else(|| err(0, 0, ParseErrorKind::MissingOutput))?;
    if rules.is_empty() {
        return Err(err(0, 0, ParseErrorKind::NoRules));
    }
    let mut fis = MamdaniFis::new(inputs, output, DEFAULT_RESOLUTION)
        .map_err(|e| err(0, 0, e.into()))?;
    for rule in &rules {
        let antecedents: Vec<(&str, &str)> = rule
            .antecedents
            .iter()
            .map(|(v, t)| (v.as_str(), t.as_str()))
            .collect();
        fis.add_rule(&antecedents, &rule.consequent)
            .expect("rule names were validated during parsing");
    }
    Ok(fis)
}

/// Renders a system back into the rule-file grammar. Numbers print in
/// shortest round-trip form, so parse -> serialize -> parse reproduces
/// the identical system.
pub fn serialize_fis(fis: &MamdaniFis) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    let write_var = |buf: &mut String, keyword: &str, var: &LinguisticVariable| {
        let (lo, hi) = var.universe();
        writeln!(buf, "{keyword} {} {lo} {hi}", var.name()).unwrap();
        for (term, mf) in var.terms() {
            match *mf {
                MembershipFunction::Triangular { a, b, c } => {
                    writeln!(buf, "term {} {term} tri {a} {b} {c}", var.name()).unwrap();
                }
                MembershipFunction::Trapezoidal { a, b, c, d } => {
                    writeln!(buf, "term {} {term} trap {a} {b} {c} {d}", var.name()).unwrap();
                }
            }
        }
    };
    for var in fis.inputs() {
        write_var(&mut out, "input", var);
    }
    write_var(&mut out, "output", fis.output());
    for rule in fis.rules() {
        out.push_str("rule IF ");
        for (i, &(vi, ti)) in rule.antecedents().iter().enumerate() {
            if i > 0 {
                out.push_str(" AND ");
            }
            let var = &fis.inputs()[vi];
            write!(out, "{} IS {}", var.name(), var.terms()[ti].0).unwrap();
        }
        let output = fis.output();
        writeln!(
            out,
            " THEN {} IS {}",
            output.name(),
            output.terms()[rule.consequent()].0
        )
        .unwrap();
    }
    out
}
