//! Family specifications and their textual form.
//!
//! Grammar: `name[:key=value,...]`. Parameters that depend on the sample
//! size are written as rate expressions in `n`:
//!
//! | expression          | meaning              |
//! |---------------------|----------------------|
//! | `2.5`               | constant             |
//! | `c*n^e`, `n^e`, `n` | power law            |
//! | `sqrt(n)`           | `n^0.5`              |
//! | `c*log(n)`          | multiple of `ln n`   |
//! | `c/log(n)`          | inverse logarithm    |
//! | `log(n)-loglog(n)`  | `ln n - ln ln n`     |
//!
//! Families:
//!
//! * `pareto:a=1,b=3`: density `a/(x+1)^b`.
//! * `exponential:a=sqrt(n)`: density `e^{-x/a}/a`.
//! * `two-step:w1=1,a1=100`: piecewise constant density; each step is given by
//!   its width `aJ` or by its occupancy `bJ = n wJ / aJ`; `w1` may be `1-1/n`.
//! * `uniform:k=100`: shorthand for `two-step:w1=1,a1=100`.
//! * `explicit:0.5/0.3/0.2`: explicit species weights.
//! * `example3-case1|case2|case3`: preset two-step regimes, see the
//!   `FamilySpec::example3_case*` constructors.

use crate::error::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// A positive quantity that may grow with the sample size `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rate {
    Const(f64),
    /// `coef * n^exponent`
    Power {
        coef: f64,
        exponent: f64,
    },
    /// `coef * ln n`
    Log {
        coef: f64,
    },
    /// `coef / ln n`
    InverseLog {
        coef: f64,
    },
    /// `ln n - ln ln n`
    LogMinusLogLog,
}

impl Rate {
    pub fn eval(&self, n: u64) -> f64 {
        let nf = n as f64;
        match *self {
            Rate::Const(c) => c,
            Rate::Power { coef, exponent } => coef * nf.powf(exponent),
            Rate::Log { coef } => coef * nf.ln(),
            Rate::InverseLog { coef } => coef / nf.ln(),
            Rate::LogMinusLogLog => nf.ln() - nf.ln().ln(),
        }
    }
}

fn fmt_coef(f: &mut fmt::Formatter<'_>, coef: f64, sep: &str) -> fmt::Result {
    if coef != 1.0 {
        write!(f, "{coef}{sep}")?;
    }
    Ok(())
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Rate::Const(c) => write!(f, "{c}"),
            Rate::Power { coef, exponent } => {
                fmt_coef(f, coef, "*")?;
                if exponent == 1.0 {
                    f.write_str("n")
                } else {
                    write!(f, "n^{exponent}")
                }
            }
            Rate::Log { coef } => {
                fmt_coef(f, coef, "*")?;
                f.write_str("log(n)")
            }
            Rate::InverseLog { coef } => write!(f, "{coef}/log(n)"),
            Rate::LogMinusLogLog => f.write_str("log(n)-loglog(n)"),
        }
    }
}

fn parse_number(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidParameter(format!("'{s}' is not a finite number")))
}

impl FromStr for Rate {
    type Err = Error;

    fn from_str(raw: &str) -> Result<Self> {
        let s: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
        if s == "log(n)-loglog(n)" {
            return Ok(Rate::LogMinusLogLog);
        }
        if let Some(coef) = s.strip_suffix("/log(n)") {
            return Ok(Rate::InverseLog {
                coef: parse_number(coef)?,
            });
        }
        let (coef, body) = match s.split_once('*') {
            Some((c, b)) => (parse_number(c)?, b),
            None => (1.0, s.as_str()),
        };
        match body {
            "n" => Ok(Rate::Power {
                coef,
                exponent: 1.0,
            }),
            "sqrt(n)" => Ok(Rate::Power {
                coef,
                exponent: 0.5,
            }),
            "log(n)" => Ok(Rate::Log { coef }),
            _ => {
                if let Some(e) = body.strip_prefix("n^") {
                    Ok(Rate::Power {
                        coef,
                        exponent: parse_number(e)?,
                    })
                } else if s.contains('*') {
                    Err(Error::InvalidParameter(format!(
                        "unrecognised rate '{raw}'"
                    )))
                } else {
                    parse_number(body)
                        .map(Rate::Const)
                        .map_err(|_| Error::InvalidParameter(format!("unrecognised rate '{raw}'")))
                }
            }
        }
    }
}

/// Weight of the first step of a two-step density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepWeight {
    Const(f64),
    /// `1 - 1/n`
    OneMinusInverseN,
}

impl StepWeight {
    pub fn eval(&self, n: u64) -> f64 {
        match *self {
            StepWeight::Const(w) => w,
            StepWeight::OneMinusInverseN => 1.0 - 1.0 / n as f64,
        }
    }
}

impl fmt::Display for StepWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepWeight::Const(w) => write!(f, "{w}"),
            StepWeight::OneMinusInverseN => f.write_str("1-1/n"),
        }
    }
}

impl FromStr for StepWeight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "1-1/n" {
            Ok(StepWeight::OneMinusInverseN)
        } else {
            parse_number(s).map(StepWeight::Const)
        }
    }
}

/// How one step of a two-step density is pinned down at sample size `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    /// Width `a_jn` of the step.
    Width(Rate),
    /// Expected per-species count `b_jn = n w_jn / a_jn` on the step.
    Occupancy(Rate),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilySpec {
    Explicit {
        weights: Vec<f64>,
    },
    Pareto {
        a: f64,
        b: f64,
    },
    Exponential {
        scale: Rate,
    },
    TwoStep {
        w1: StepWeight,
        first: Step,
        second: Option<Step>,
    },
}

/// Two-step parameters resolved at a given `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStepParams {
    pub w1: f64,
    pub w2: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl FamilySpec {
    pub fn uniform(k: u64) -> Self {
        FamilySpec::TwoStep {
            w1: StepWeight::Const(1.0),
            first: Step::Width(Rate::Const(k as f64)),
            second: None,
        }
    }

    pub fn pareto(b: f64) -> Self {
        FamilySpec::Pareto { a: 1.0, b }
    }

    pub fn exponential(scale: Rate) -> Self {
        FamilySpec::Exponential { scale }
    }

    /// Uniform with `b_1n = ln n - ln ln n`: `E F_1 / n → 0` and `s_n → ∞`, but Lindeberg fails.
    pub fn example3_case1() -> Self {
        FamilySpec::TwoStep {
            w1: StepWeight::Const(1.0),
            first: Step::Occupancy(Rate::LogMinusLogLog),
            second: None,
        }
    }

    /// Uniform with `b_1n = 1/ln n → 0`: `E F_1 / n → 1`.
    pub fn example3_case2() -> Self {
        FamilySpec::TwoStep {
            w1: StepWeight::Const(1.0),
            first: Step::Occupancy(Rate::InverseLog { coef: 1.0 }),
            second: None,
        }
    }

    /// `w_1n = 1 - 1/n`, `b_1n = 2 ln n`, `b_2n = 1/ln n`: `s_n^2` stays bounded.
    pub fn example3_case3() -> Self {
        FamilySpec::TwoStep {
            w1: StepWeight::OneMinusInverseN,
            first: Step::Occupancy(Rate::Log { coef: 2.0 }),
            second: Some(Step::Occupancy(Rate::InverseLog { coef: 1.0 })),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::Explicit { .. } => "explicit",
            FamilySpec::Pareto { .. } => "pareto",
            FamilySpec::Exponential { .. } => "exponential",
            FamilySpec::TwoStep { .. } => "two-step",
        }
    }

    /// Resolves two-step widths and occupancies at `n`, checking
    /// `w1 + w2 = 1` and `w1/a1 >= w2/a2 >= 0`.
    pub fn two_step_params(&self, n: u64) -> Result<TwoStepParams> {
        let FamilySpec::TwoStep { w1, first, second } = self else {
            return Err(Error::UnsupportedFamily(self.name().into()));
        };
        if n == 0 {
            return Err(Error::ZeroSampleSize);
        }
        let w1 = w1.eval(n);
        if !(w1 > 0.0 && w1 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "w1 must lie in (0, 1], got {w1}"
            )));
        }
        let w2 = 1.0 - w1;
        let nf = n as f64;
        let resolve = |w: f64, step: &Step, label: u8| -> Result<(f64, f64)> {
            let (a, b) = match *step {
                Step::Width(r) => {
                    let a = r.eval(n);
                    (a, nf * w / a)
                }
                Step::Occupancy(r) => {
                    let b = r.eval(n);
                    (nf * w / b, b)
                }
            };
            if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "step {label} resolves to a{label} = {a}, b{label} = {b} at n = {n}"
                )));
            }
            Ok((a, b))
        };
        let (a1, b1) = resolve(w1, first, 1)?;
        let (a2, b2) = match (second, w2 > 0.0) {
            (Some(step), true) => resolve(w2, step, 2)?,
            (None, true) => {
                return Err(Error::InvalidParameter(format!(
                    "w1 = {w1} < 1 requires a second step"
                )))
            }
            (_, false) => (0.0, 0.0),
        };
        if w2 > 0.0 && w1 / a1 < w2 / a2 {
            return Err(Error::InvalidParameter(format!(
                "two-step density must be decreasing: w1/a1 = {} < w2/a2 = {}",
                w1 / a1,
                w2 / a2
            )));
        }
        Ok(TwoStepParams {
            w1,
            w2,
            a1,
            a2,
            b1,
            b2,
        })
    }

    /// Validates parameters that do not depend on `n`.
    pub fn validate(&self) -> Result<()> {
        match self {
            FamilySpec::Explicit { weights } => {
                if weights.is_empty() {
                    return Err(Error::InvalidParameter(
                        "explicit family needs weights".into(),
                    ));
                }
                if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                    return Err(Error::InvalidParameter(format!(
                        "explicit weights must be positive and finite, got {w}"
                    )));
                }
                Ok(())
            }
            FamilySpec::Pareto { a, b } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "pareto a must be > 0, got {a}"
                    )));
                }
                if !(b.is_finite() && *b > 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "pareto b must be > 1, got {b}"
                    )));
                }
                Ok(())
            }
            FamilySpec::Exponential { .. } | FamilySpec::TwoStep { .. } => Ok(()),
        }
    }
}

fn fmt_step(f: &mut fmt::Formatter<'_>, idx: u8, step: &Step) -> fmt::Result {
    match step {
        Step::Width(r) => write!(f, ",a{idx}={r}"),
        Step::Occupancy(r) => write!(f, ",b{idx}={r}"),
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilySpec::Explicit { weights } => {
                f.write_str("explicit:")?;
                for (i, w) in weights.iter().enumerate() {
                    if i > 0 {
                        f.write_str("/")?;
                    }
                    write!(f, "{w}")?;
                }
                Ok(())
            }
            FamilySpec::Pareto { a, b } => write!(f, "pareto:a={a},b={b}"),
            FamilySpec::Exponential { scale } => write!(f, "exponential:a={scale}"),
            FamilySpec::TwoStep { w1, first, second } => {
                write!(f, "two-step:w1={w1}")?;
                fmt_step(f, 1, first)?;
                if let Some(step) = second {
                    fmt_step(f, 2, step)?;
                }
                Ok(())
            }
        }
    }
}

fn key_values(body: &str) -> Result<Vec<(&str, &str)>> {
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    body.split(',')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got '{kv}'")))
        })
        .collect()
}

fn reject_unknown(family: &str, kvs: &[(&str, &str)], allowed: &[&str]) -> Result<()> {
    match kvs.iter().find(|(k, _)| !allowed.contains(k)) {
        Some((k, _)) => Err(Error::InvalidParameter(format!(
            "unknown key '{k}' for family '{family}'"
        ))),
        None => Ok(()),
    }
}

fn lookup<'a>(kvs: &[(&str, &'a str)], key: &str) -> Option<&'a str> {
    kvs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

fn parse_step(kvs: &[(&str, &str)], idx: u8) -> Result<Option<Step>> {
    let a = lookup(kvs, &format!("a{idx}"));
    let b = lookup(kvs, &format!("b{idx}"));
    match (a, b) {
        (Some(_), Some(_)) => Err(Error::InvalidParameter(format!(
            "give either a{idx} or b{idx}, not both"
        ))),
        (Some(a), None) => Ok(Some(Step::Width(a.parse()?))),
        (None, Some(b)) => Ok(Some(Step::Occupancy(b.parse()?))),
        (None, None) => Ok(None),
    }
}

impl FromStr for FamilySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        let name = name.trim();
        let spec = match name {
            "example3-case1" => FamilySpec::example3_case1(),
            "example3-case2" => FamilySpec::example3_case2(),
            "example3-case3" => FamilySpec::example3_case3(),
            "explicit" => FamilySpec::Explicit {
                weights: body.split('/').map(parse_number).collect::<Result<_>>()?,
            },
            "pareto" => {
                let kvs = key_values(body)?;
                reject_unknown(name, &kvs, &["a", "b"])?;
                let a = lookup(&kvs, "a")
                    .map(parse_number)
                    .transpose()?
                    .unwrap_or(1.0);
                let b = lookup(&kvs, "b")
                    .ok_or_else(|| Error::InvalidParameter("pareto needs b".into()))
                    .and_then(parse_number)?;
                FamilySpec::Pareto { a, b }
            }
            "exponential" => {
                let kvs = key_values(body)?;
                reject_unknown(name, &kvs, &["a"])?;
                let scale = lookup(&kvs, "a")
                    .ok_or_else(|| Error::InvalidParameter("exponential needs a".into()))?
                    .parse()?;
                FamilySpec::Exponential { scale }
            }
            "uniform" => {
                let kvs = key_values(body)?;
                reject_unknown(name, &kvs, &["k"])?;
                let k = lookup(&kvs, "k")
                    .ok_or_else(|| Error::InvalidParameter("uniform needs k".into()))?;
                let k: u64 = k.parse().ok().filter(|&k| k > 0).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "uniform k must be a positive integer, got '{k}'"
                    ))
                })?;
                FamilySpec::uniform(k)
            }
            "two-step" => {
                let kvs = key_values(body)?;
                reject_unknown(name, &kvs, &["w1", "a1", "b1", "a2", "b2"])?;
                let w1 = lookup(&kvs, "w1")
                    .map(str::parse)
                    .transpose()?
                    .unwrap_or(StepWeight::Const(1.0));
                let first = parse_step(&kvs, 1)?
                    .ok_or_else(|| Error::InvalidParameter("two-step needs a1 or b1".into()))?;
                let second = parse_step(&kvs, 2)?;
                FamilySpec::TwoStep { w1, first, second }
            }
            other => {
                return Err(Error::InvalidParameter(format!("unknown family '{other}'")));
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for FamilySpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FamilySpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_parse_and_evaluate() {
        let n = 10_000u64;
        let ln = (n as f64).ln();
        let cases: [(&str, f64); 8] = [
            ("3.5", 3.5),
            ("n", 1e4),
            ("sqrt(n)", 100.0),
            ("0.5*n^0.5", 50.0),
            ("log(n)", ln),
            ("2*log(n)", 2.0 * ln),
            ("1/log(n)", 1.0 / ln),
            ("log(n)-loglog(n)", ln - ln.ln()),
        ];
        for (s, want) in cases {
            let r: Rate = s.parse().unwrap();
            assert!(
                (r.eval(n) - want).abs() < 1e-12 * want.abs().max(1.0),
                "{s}"
            );
        }
        assert!("n^".parse::<Rate>().is_err());
        assert!("2*foo".parse::<Rate>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "pareto:a=1,b=3",
            "exponential:a=n^0.5",
            "exponential:a=100",
            "two-step:w1=1,a1=10",
            "two-step:w1=1-1/n,b1=2*log(n),b2=1/log(n)",
            "two-step:w1=1,b1=log(n)-loglog(n)",
            "explicit:0.5/0.3/0.2",
        ] {
            let spec: FamilySpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            assert_eq!(spec.to_string().parse::<FamilySpec>().unwrap(), spec);
        }
    }

    #[test]
    fn presets_expand() {
        assert_eq!(
            "uniform:k=100".parse::<FamilySpec>().unwrap(),
            FamilySpec::uniform(100)
        );
        assert_eq!(
            "example3-case3".parse::<FamilySpec>().unwrap().to_string(),
            "two-step:w1=1-1/n,b1=2*log(n),b2=1/log(n)"
        );
    }

    #[test]
    fn rejects_invalid_parameters() {
        for s in [
            "pareto:b=1",
            "pareto:a=-1,b=2",
            "pareto:b=2,c=1",
            "exponential",
            "two-step:w1=1",
            "two-step:w1=1,a1=2,b1=3",
            "uniform:k=0",
            "explicit:0.5/-0.1",
            "lognormal:b=1",
        ] {
            assert!(s.parse::<FamilySpec>().is_err(), "{s} should not parse");
        }
    }

    #[test]
    fn two_step_resolution() {
        let p = FamilySpec::example3_case3()
            .two_step_params(100_000)
            .unwrap();
        let ln = (1e5f64).ln();
        assert!((p.w2 - 1e-5).abs() < 1e-15);
        assert!((p.b1 - 2.0 * ln).abs() < 1e-12);
        assert!((p.a2 - ln).abs() < 1e-9);
        assert!(p.w1 / p.a1 >= p.w2 / p.a2);

        // second step steeper than the first
        let bad: FamilySpec = "two-step:w1=0.5,a1=1,a2=10000".parse().unwrap();
        assert!(bad.two_step_params(100).is_ok());
        let bad: FamilySpec = "two-step:w1=0.5,a1=100,a2=1".parse().unwrap();
        assert!(bad.two_step_params(100).is_err());
        let missing: FamilySpec = "two-step:w1=0.5,a1=100".parse().unwrap();
        assert!(missing.two_step_params(100).is_err());
    }
}
