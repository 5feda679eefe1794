//! Command-line plumbing: the function-spec parser, run configuration,
//! report assembly and canonical JSON emission.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::criteria::{
    classify, run_check as check_operands, CheckId, CheckOptions, CheckOutcome, CheckSummary, ClassifyConfig, Operands,
    Tiers, X0Variant,
};
use crate::error::{Error, Result};
use crate::funcrep::{catalog, soc_from_shifted_opconvex, Atom, RepMeasure, Representation, ScalarFunction};
use crate::hermitian::Interval;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const MAX_DIM: usize = 64;
pub const MAX_TRIALS: usize = 1_000_000;

// ---------------------------------------------------------------------------
// function-spec grammar

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn fail<T>(&self, at: usize, expected: &[&str]) -> Result<T> {
        Err(Error::Parse {
            offset: at,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            self.fail(self.pos, &[&format!("'{c}'")])
        }
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(word) {
            self.pos += word.len();
            Ok(())
        } else {
            self.fail(self.pos, &[&format!("'{word}'")])
        }
    }

    fn ident(&mut self) -> Result<(usize, &'a str)> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest
            .char_indices()
            .find(|&(i, c)| !(c == '_' || c.is_ascii_alphabetic() || (i > 0 && c.is_ascii_digit())))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return self.fail(start, &["function name"]);
        }
        self.pos += len;
        Ok((start, &rest[..len]))
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest
            .char_indices()
            .find(|&(_, c)| !(c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')))
            .map_or(rest.len(), |(i, _)| i);
        let token = &rest[..len];
        let value = match token {
            "inf" | "+inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            _ if token.is_empty() || token.chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E') => None,
            _ => token.parse::<f64>().ok(),
        };
        match value {
            Some(v) => {
                self.pos += len;
                Ok(v)
            }
            None => self.fail(start, &["number"]),
        }
    }

    fn atoms(&mut self) -> Result<Vec<Atom>> {
        let mut out = Vec::new();
        if self.peek() != Some('(') {
            return Ok(out);
        }
        loop {
            self.expect('(')?;
            let r = self.number()?;
            self.expect(',')?;
            let w = self.number()?;
            self.expect(')')?;
            out.push(Atom { r, w });
            if self.peek() == Some(',') {
                self.pos += 1;
            } else {
                return Ok(out);
            }
        }
    }

    fn spec(&mut self) -> Result<ScalarFunction> {
        let (name_at, name) = self.ident()?;
        match (name, self.peek()) {
            ("rep", Some('{')) => {
                self.pos += 1;
                self.keyword("c")?;
                self.expect('=')?;
                let c = self.number()?;
                self.expect(';')?;
                self.keyword("below")?;
                self.expect('=')?;
                self.expect('[')?;
                let below = self.atoms()?;
                self.expect(']')?;
                self.expect(';')?;
                self.keyword("above")?;
                self.expect('=')?;
                self.expect('[')?;
                let above = self.atoms()?;
                self.expect(']')?;
                self.expect('}')?;
                Ok(RepMeasure::on_natural_interval(c, below, above)?.as_scalar_function())
            }
            ("shift", Some('(')) => {
                let open = self.pos;
                self.pos += 1;
                let lambda = self.number()?;
                self.expect(',')?;
                let inner = self.spec()?;
                self.close(open)?;
                soc_from_shifted_opconvex(&inner, lambda, &Interval::real_line())
            }
            (_, Some('(')) => {
                let open = self.pos;
                self.pos += 1;
                let mut params = vec![self.number_in(open)?];
                while self.peek() == Some(',') {
                    self.pos += 1;
                    params.push(self.number()?);
                }
                self.close(open)?;
                catalog(name, &params).map_err(|e| at_name(e, name_at))
            }
            _ => catalog(name, &[]).map_err(|e| at_name(e, name_at)),
        }
    }

    /// First argument after `(`; at end of input the error points at the unclosed parenthesis.
    fn number_in(&mut self, open: usize) -> Result<f64> {
        if self.peek().is_none() {
            return self.fail(open, &["number", "')'"]);
        }
        self.number()
    }

    fn close(&mut self, open: usize) -> Result<()> {
        match self.peek() {
            Some(')') => {
                self.pos += 1;
                Ok(())
            }
            None => self.fail(open, &["')'"]),
            Some(_) => self.fail(self.pos, &["')'", "','"]),
        }
    }
}

fn at_name(e: Error, offset: usize) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("{msg} (at byte {offset})")),
        other => other,
    }
}

/// Parses `name | name(num, …) | rep{c=…;below=[…];above=[…]} | shift(num, spec)`.
///
/// Whitespace between tokens is ignored. Syntax errors carry the byte offset
/// and the set of expected tokens; unknown names are configuration errors.
pub fn parse_fn_spec(text: &str) -> Result<ScalarFunction> {
    let mut p = Parser { src: text, pos: 0 };
    if p.peek().is_none() {
        return p.fail(p.pos, &["function name"]);
    }
    let f = p.spec()?;
    if p.peek().is_some() {
        return p.fail(p.pos, &["end of input"]);
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// configuration

/// Inclusive dimension range `lo..hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimRange {
    pub lo: usize,
    pub hi: usize,
}

impl DimRange {
    pub fn to_vec(self) -> Vec<usize> {
        (self.lo..=self.hi).collect()
    }
}

impl FromStr for DimRange {
    type Err = Error;

    /// Accepts `lo..hi`, `lo..=hi` or a single dimension.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed dimension range '{s}', expected lo..hi"));
        let s = s.trim();
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
            None => (s, s),
        };
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        Ok(DimRange { lo, hi })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub fn_spec: String,
    pub interval: Interval,
    pub dims: DimRange,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    /// Checks to run; `None` runs every battery.
    pub checks: Option<Vec<CheckId>>,
    pub out_path: Option<String>,
    pub x0_variant: X0Variant,
    pub j15_literal: bool,
    /// Operand file for a single check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operands_path: Option<String>,
    /// Record wall-clock time in the report (makes reports non-reproducible).
    #[serde(default)]
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            fn_spec: String::new(),
            interval: Interval::real_line(),
            dims: DimRange { lo: 1, hi: 6 },
            trials: 200,
            seed: 0,
            tol: crate::hermitian::DEFAULT_TOL,
            checks: None,
            out_path: None,
            x0_variant: X0Variant::AsPrinted,
            j15_literal: false,
            operands_path: None,
            timing: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let DimRange { lo, hi } = self.dims;
        if lo < 1 || hi > MAX_DIM || lo > hi {
            return Err(Error::Config(format!("dims {lo}..{hi} must lie within 1..{MAX_DIM}")));
        }
        if !(1..=MAX_TRIALS).contains(&self.trials) {
            return Err(Error::Config(format!("trials must lie within 1..{MAX_TRIALS}, got {}", self.trials)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    pub fn options(&self) -> CheckOptions {
        CheckOptions {
            tol: self.tol,
            x0_variant: self.x0_variant,
            j15_literal: self.j15_literal,
        }
    }

    /// The configured function restricted to the configured interval.
    pub fn function(&self) -> Result<ScalarFunction> {
        let f = parse_fn_spec(&self.fn_spec)?;
        let j = f.domain().intersect(&self.interval)?;
        if j == *f.domain() {
            Ok(f)
        } else {
            f.restrict(&j)
        }
    }
}

/// Parses a comma-separated check list; the empty string selects no checks.
pub fn parse_check_list(s: &str) -> Result<Vec<CheckId>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(CheckId::from_str)
        .collect()
}

// ---------------------------------------------------------------------------
// reports

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Classify,
    Check,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub kind: ReportKind,
    pub config: RunConfig,
    pub function: String,
    #[serde(default)]
    pub summaries: Vec<CheckSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiers: Option<Tiers>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<CheckOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl Report {
    /// 0 when nothing failed that decides the run, 1 otherwise.
    pub fn exit_status(&self) -> i32 {
        match (&self.tiers, &self.outcome) {
            (Some(t), _) => {
                if t.strongly_operator_convex.is_clean() && t.operator_convex.is_clean() && t.convex.is_clean() {
                    0
                } else {
                    1
                }
            }
            (None, Some(o)) => i32::from(!o.pass),
            (None, None) => 0,
        }
    }

    /// Every failing outcome embedded in the report.
    pub fn witnesses(&self) -> Vec<&CheckOutcome> {
        let mut out: Vec<&CheckOutcome> = self.summaries.iter().filter_map(|s| s.first_witness.as_ref()).collect();
        if let Some(t) = &self.tiers {
            out.extend(
                [&t.convex, &t.operator_convex, &t.strongly_operator_convex]
                    .into_iter()
                    .filter_map(|v| v.witness()),
            );
        }
        out.extend(self.outcome.iter().filter(|o| !o.pass));
        out
    }

    /// Stable one-line-per-check text summary.
    pub fn text_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        if let Some(o) = &self.outcome {
            lines.push(outcome_line(o));
        }
        for s in &self.summaries {
            let worst = match (s.worst_margin, s.worst_scale) {
                (Some(m), Some(sc)) => display_margin(m, sc),
                _ => "none".to_string(),
            };
            lines.push(format!(
                "{} dim={} trials={} pass={} fail={} skipped={} worst_margin={}",
                s.check, s.dim, s.trials, s.passes, s.fails, s.skipped, worst
            ));
        }
        if let Some(t) = &self.tiers {
            for (name, v) in [
                ("convex", &t.convex),
                ("operator_convex", &t.operator_convex),
                ("strongly_operator_convex", &t.strongly_operator_convex),
            ] {
                let verdict = match v.witness() {
                    None => "no_counterexample".to_string(),
                    Some(w) => format!("counterexample check={} margin={}", w.kind, display_margin(w.margin, w.scale)),
                };
                lines.push(format!("tier {name} {verdict}"));
            }
        }
        lines
    }
}

/// `"<check-id> <pass|fail> margin=<value>"`.
pub fn outcome_line(o: &CheckOutcome) -> String {
    format!(
        "{} {} margin={}",
        o.kind,
        if o.pass { "pass" } else { "fail" },
        display_margin(o.margin, o.scale)
    )
}

/// Margin for text output: rounding noise below `1e-13·scale` prints as 0 and
/// values are rounded to 12 significant digits. Reports keep the exact value.
pub fn display_margin(margin: f64, scale: f64) -> String {
    if !margin.is_finite() {
        return margin.to_string();
    }
    if margin.abs() <= 1e-13 * scale.abs().max(1.0) {
        return "0".to_string();
    }
    let rounded: f64 = format!("{margin:.11e}").parse().unwrap_or(margin);
    format!("{rounded}")
}

/// Runs the three batteries described by `config`.
pub fn run_classify(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let started = Instant::now();
    let f = config.function()?;
    let mut cc = ClassifyConfig::new(config.interval, config.dims.to_vec(), config.trials, config.seed);
    cc.options = config.options();
    cc.checks = config.checks.clone();
    let c = classify(&f, &cc)?;
    Ok(Report {
        version: VERSION.to_string(),
        kind: ReportKind::Classify,
        config: config.clone(),
        function: f.label(),
        summaries: c.summaries,
        tiers: Some(c.tiers),
        outcome: None,
        wall_clock_seconds: config.timing.then(|| started.elapsed().as_secs_f64()),
    })
}

/// Loads operands in the report's witness format (`{"check": "<id>", …}`).
pub fn load_operands(path: &Path) -> Result<Operands> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Runs a single check on explicit operands.
///
/// When `config.checks` names exactly one check it must match the operand file.
pub fn run_check(config: &RunConfig, operands: &Operands) -> Result<Report> {
    if !(config.tol > 0.0 && config.tol.is_finite()) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", config.tol)));
    }
    if let Some(checks) = &config.checks {
        match checks.as_slice() {
            [id] if *id == operands.id() => {}
            [id] => {
                return Err(Error::Input(format!(
                    "operands are for '{}' but the check '{id}' was requested",
                    operands.id()
                )))
            }
            _ => return Err(Error::Input("run_check needs exactly one check id".into())),
        }
    }
    let started = Instant::now();
    let f = config.function()?;
    let outcome = check_operands(&f, operands, &config.options())?;
    Ok(Report {
        version: VERSION.to_string(),
        kind: ReportKind::Check,
        config: config.clone(),
        function: f.label(),
        summaries: Vec::new(),
        tiers: None,
        outcome: Some(outcome),
        wall_clock_seconds: config.timing.then(|| started.elapsed().as_secs_f64()),
    })
}

/// Canonical JSON: sorted keys, shortest round-trip floats, two-space indent.
pub fn canonical_json(report: &Report) -> Result<String> {
    // `serde_json::Value` keeps object keys in a sorted map.
    let value = serde_json::to_value(report).map_err(|e| Error::Io(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn emit_report(report: &Report, path: &Path) -> Result<()> {
    let text = canonical_json(report)?;
    let mut file = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Exit status for an error: 3 for I/O, 2 for everything else.
pub fn error_status(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 3,
        _ => 2,
    }
}

/// Replays a witness under the configuration embedded in `report`.
pub fn replay(report: &Report, witness: &CheckOutcome) -> Result<CheckOutcome> {
    let f = report.config.function()?;
    check_operands(&f, &witness.witnesses, &report.config.options())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_err(s: &str) -> (usize, Vec<String>) {
        match parse_fn_spec(s) {
            Err(Error::Parse { offset, expected }) => (offset, expected),
            other => panic!("expected a parse error for {s:?}, got {other:?}"),
        }
    }

    #[test]
    fn parses_spec_examples() {
        let f = parse_fn_spec("resolvent_above(2)").unwrap();
        assert_eq!(f.eval(1.0), 1.0);
        let f = parse_fn_spec("rep{c=0.5; below=[]; above=[(2,1)]}").unwrap();
        assert_eq!(f.eval(0.0), 1.0);
        let f = parse_fn_spec("shift(2, square)").unwrap();
        assert_eq!(f.eval(1.0), 1.0);
        let f = parse_fn_spec("  eps_over ( 0.1 ) ").unwrap();
        assert!((f.eval(0.0) - 10.0).abs() < 1e-12 || f.eval(0.0).is_finite());
    }

    #[test]
    fn unclosed_parenthesis_reports_its_offset() {
        let (offset, expected) = parse_err("nonsense(");
        assert_eq!(offset, 8);
        assert!(expected.iter().any(|e| e.contains("number")));
        assert_eq!(parse_err("square(1").0, 6);
        assert_eq!(parse_err("").0, 0);
        assert_eq!(parse_err("square)").0, 6);
        assert_eq!(parse_err("rep{c=1;below=[(1,2];above=[]}").0, 19);
    }

    #[test]
    fn unknown_names_are_config_errors() {
        assert!(matches!(parse_fn_spec("nonsense"), Err(Error::Config(_))));
        assert!(matches!(parse_fn_spec("nonsense(1)"), Err(Error::Config(_))));
        assert!(matches!(parse_fn_spec("square(1)"), Err(Error::Config(_))));
    }

    #[test]
    fn print_parse_round_trip() {
        for spec in [
            "identity",
            "affine(2,-0.5)",
            "square",
            "abs",
            "cube",
            "exp",
            "constant(3)",
            "resolvent_above(2)",
            "resolvent_below(-1.5)",
            "eps_over(0.1)",
            "rep{c=0.25;below=[(-2,0.5)];above=[(3,1),(4.5,0.125)]}",
            "shift(2,square)",
        ] {
            let f = parse_fn_spec(spec).unwrap();
            assert_eq!(f.to_string(), spec);
            let g = parse_fn_spec(&f.to_string()).unwrap();
            assert_eq!(f, g);
        }
    }

    #[test]
    fn dim_range_parsing() {
        assert_eq!("1..6".parse::<DimRange>().unwrap(), DimRange { lo: 1, hi: 6 });
        assert_eq!("2..=4".parse::<DimRange>().unwrap(), DimRange { lo: 2, hi: 4 });
        assert_eq!("3".parse::<DimRange>().unwrap(), DimRange { lo: 3, hi: 3 });
        assert!("a..b".parse::<DimRange>().is_err());
    }

    #[test]
    fn config_validation() {
        let ok = RunConfig {
            fn_spec: "square".into(),
            ..RunConfig::default()
        };
        assert!(ok.validate().is_ok());
        for bad in [
            RunConfig {
                dims: DimRange { lo: 0, hi: 2 },
                ..ok.clone()
            },
            RunConfig {
                dims: DimRange { lo: 1, hi: 65 },
                ..ok.clone()
            },
            RunConfig {
                trials: 0,
                ..ok.clone()
            },
            RunConfig {
                tol: 0.0,
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn margin_display() {
        assert_eq!(display_margin(0.0, 1.0), "0");
        assert_eq!(display_margin(-1.0000000000000002, 5.0), "-1");
        assert_eq!(display_margin(1e-17, 1.0), "0");
        assert_eq!(display_margin(-0.25, 1.0), "-0.25");
    }

    #[test]
    fn check_lines_for_spec_examples() {
        let cfg = |f: &str, check: CheckId| RunConfig {
            fn_spec: f.into(),
            checks: Some(vec![check]),
            ..RunConfig::default()
        };
        let d = |v: &[f64]| crate::hermitian::HermitianMatrix::diag(v).unwrap();
        let r = run_check(
            &cfg("resolvent_above(2)", CheckId::SocIi),
            &Operands::SocIi {
                t: d(&[0.0, 1.0]),
                p: d(&[1.0, 0.0]),
            },
        )
        .unwrap();
        assert_eq!(outcome_line(r.outcome.as_ref().unwrap()), "soc_ii pass margin=0");
        let r = run_check(
            &cfg("square", CheckId::Diff15),
            &Operands::Diff15 {
                t: d(&[1.0]),
                h: d(&[1.0]),
            },
        )
        .unwrap();
        assert_eq!(outcome_line(r.outcome.as_ref().unwrap()), "diff15 fail margin=-1");
        let mu = crate::criteria::DiscreteMeasure::uniform(vec![0.0, 1.0]).unwrap();
        let r = run_check(&cfg("resolvent_above(2)", CheckId::Jensen14), &Operands::Jensen14 { mu }).unwrap();
        assert_eq!(outcome_line(r.outcome.as_ref().unwrap()), "jensen14 pass margin=0");
    }

    #[test]
    fn check_id_mismatch_is_input_error() {
        let cfg = RunConfig {
            fn_spec: "square".into(),
            checks: Some(vec![CheckId::SocIi]),
            ..RunConfig::default()
        };
        let ops = Operands::Midpoint { x: 0.0, y: 1.0 };
        assert!(matches!(run_check(&cfg, &ops), Err(Error::Input(_))));
    }

    #[test]
    fn empty_check_list_gives_valid_empty_report() {
        let cfg = RunConfig {
            fn_spec: "square".into(),
            interval: Interval::closed(-1.0, 1.0).unwrap(),
            checks: Some(parse_check_list("").unwrap()),
            ..RunConfig::default()
        };
        let r = run_classify(&cfg).unwrap();
        assert!(r.summaries.is_empty());
        assert_eq!(r.exit_status(), 0);
        let text = canonical_json(&r).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn reports_are_canonical_and_replayable() {
        let cfg = RunConfig {
            fn_spec: "square".into(),
            interval: Interval::closed(-1.0, 1.0).unwrap(),
            dims: DimRange { lo: 1, hi: 2 },
            trials: 10,
            seed: 3,
            ..RunConfig::default()
        };
        let a = canonical_json(&run_classify(&cfg).unwrap()).unwrap();
        let b = canonical_json(&run_classify(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let report: Report = serde_json::from_str(&a).unwrap();
        assert_eq!(report.exit_status(), 1);
        let ws = report.witnesses();
        assert!(!ws.is_empty());
        for w in ws {
            let again = replay(&report, w).unwrap();
            assert!((again.margin - w.margin).abs() <= 1e-12 * (1.0 + w.margin.abs()));
        }
    }
}
