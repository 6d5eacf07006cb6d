//! Grid arguments: `0.1,0.2,0.5`, `lin:START:STOP:COUNT` or `log:START:STOP:COUNT`.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: String,
    values: Vec<f64>,
}

impl Grid {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec)
    }
}

impl Serialize for Grid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.spec)
    }
}

fn number(text: &str) -> Result<f64, String> {
    let v: f64 = text.trim().parse().map_err(|_| format!("`{text}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{text}` is not finite"))
    }
}

fn spaced(kind: &str, rest: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = rest.split(':').collect();
    let [start, stop, count] = parts[..] else {
        return Err(format!("expected {kind}:START:STOP:COUNT"));
    };
    let (start, stop) = (number(start)?, number(stop)?);
    let count: usize = count.trim().parse().map_err(|_| format!("`{count}` is not a count"))?;
    if count == 0 {
        return Err("grid count must be at least 1".into());
    }
    let at = |i: usize, a: f64, b: f64| {
        if count == 1 {
            a
        } else if i == count - 1 {
            b
        } else {
            a + (b - a) * i as f64 / (count - 1) as f64
        }
    };
    match kind {
        "lin" => Ok((0..count).map(|i| at(i, start, stop)).collect()),
        _ => {
            if start <= 0.0 || stop <= 0.0 {
                return Err("log grid bounds must be positive".into());
            }
            Ok((0..count)
                .map(|i| {
                    if i == 0 {
                        start
                    } else if i == count - 1 {
                        stop
                    } else {
                        at(i, start.ln(), stop.ln()).exp()
                    }
                })
                .collect())
        }
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let values = match s.split_once(':') {
            Some((kind @ ("lin" | "log"), rest)) => spaced(kind, rest)?,
            Some((kind, _)) => return Err(format!("unknown grid kind `{kind}` (use lin or log)")),
            None => s.split(',').map(number).collect::<Result<_, _>>()?,
        };
        if values.is_empty() {
            return Err("empty grid".into());
        }
        Ok(Grid {
            spec: s.to_string(),
            values,
        })
    }
}

/// Comma-separated list of round-trip counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Counts(pub Vec<u32>);

impl FromStr for Counts {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let out = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<u32>().map_err(|_| format!("`{t}` is not a round-trip count")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Counts(out))
    }
}

impl Serialize for Counts {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}
