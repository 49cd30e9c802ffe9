//! Key/value text format for [`Instance`].
//!
//! ```text
//! # dcafolio instance
//! n 2
//! card 1
//! R 0.0000000000000000e0
//! r 1.0000000000000001e-1 1.0000000000000001e-1
//! a ...
//! Q
//!   <row 1>
//!   <row 2>
//! ```
//!
//! Each key is followed by its whitespace-separated values, which may span
//! lines. `Q` is row-major. Floats are written with 17 significant digits so
//! a write/read cycle reproduces every value bit for bit. Lines starting with
//! `#` are comments.

use super::{Instance, InstanceParts, ModelError};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{key}` expects {expected} values, found {found}")]
    Count {
        key: String,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

const KEYS: [&str; 11] = [
    "n", "card", "R", "r", "a", "b", "c_b", "c_s", "P", "x_bar", "Q",
];

fn fmt_f64(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn write_row(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        out.push(' ');
        fmt_f64(out, *v);
    }
    out.push('\n');
}

impl Instance {
    /// Serializes to the key/value text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# dcafolio instance\n");
        let _ = writeln!(out, "n {}", self.n);
        let _ = writeln!(out, "card {}", self.card);
        write_row(&mut out, "R", &[self.required_return]);
        write_row(&mut out, "r", &self.returns);
        write_row(&mut out, "a", &self.lower);
        write_row(&mut out, "b", &self.upper);
        write_row(&mut out, "c_b", &self.buy_cost);
        write_row(&mut out, "c_s", &self.sell_cost);
        write_row(&mut out, "P", &self.holdings);
        write_row(&mut out, "x_bar", &self.benchmark);
        out.push_str("Q\n");
        for i in 0..self.n {
            let row: Vec<f64> = (0..self.n).map(|j| self.covariance[(i, j)]).collect();
            write_row(&mut out, " ", &row);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ParseError> {
        let mut values: HashMap<&str, (usize, Vec<f64>)> = HashMap::new();
        let mut current: Option<&str> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("");
            for token in line.split_whitespace() {
                let starts_alpha = token
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
                let is_number = token.parse::<f64>().is_ok();
                if starts_alpha && !is_number {
                    let key = KEYS.iter().find(|k| **k == token).ok_or_else(|| {
                        ParseError::Syntax {
                            line: line_no,
                            message: format!("unknown key `{token}`"),
                        }
                    })?;
                    if values.contains_key(key) {
                        return Err(ParseError::Syntax {
                            line: line_no,
                            message: format!("duplicate key `{token}`"),
                        });
                    }
                    values.insert(key, (line_no, Vec::new()));
                    current = Some(key);
                } else {
                    let v: f64 = token.parse().map_err(|_| ParseError::Syntax {
                        line: line_no,
                        message: format!("cannot parse `{token}` as a number"),
                    })?;
                    let key = current.ok_or_else(|| ParseError::Syntax {
                        line: line_no,
                        message: "value before any key".into(),
                    })?;
                    values.get_mut(key).expect("current key registered").1.push(v);
                }
            }
        }

        let take = |key: &'static str| -> Result<(usize, Vec<f64>), ParseError> {
            values.get(key).cloned().ok_or(ParseError::MissingKey(key))
        };
        let scalar_usize = |key: &'static str| -> Result<usize, ParseError> {
            let (line, v) = take(key)?;
            if v.len() != 1 {
                return Err(ParseError::Count {
                    key: key.into(),
                    expected: 1,
                    found: v.len(),
                });
            }
            let x = v[0];
            if x < 0.0 || x.fract() != 0.0 || x > u32::MAX as f64 {
                return Err(ParseError::Syntax {
                    line,
                    message: format!("`{key}` must be a non-negative integer"),
                });
            }
            Ok(x as usize)
        };
        let vector = |key: &'static str, len: usize| -> Result<Vec<f64>, ParseError> {
            let (_, v) = take(key)?;
            if v.len() != len {
                return Err(ParseError::Count {
                    key: key.into(),
                    expected: len,
                    found: v.len(),
                });
            }
            Ok(v)
        };

        let n = scalar_usize("n")?;
        let card = scalar_usize("card")?;
        let required_return = vector("R", 1)?[0];
        let q = vector("Q", n * n)?;
        let parts = InstanceParts {
            returns: vector("r", n)?,
            covariance: DMatrix::from_row_slice(n, n, &q),
            required_return,
            card,
            lower: vector("a", n)?,
            upper: vector("b", n)?,
            buy_cost: vector("c_b", n)?,
            sell_cost: vector("c_s", n)?,
            holdings: vector("P", n)?,
            benchmark: vector("x_bar", n)?,
        };
        Ok(Instance::from_parts(parts)?)
    }

    pub fn read_from_path(path: impl AsRef<Path>) -> Result<Self, ParseError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn write_to_path(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }
}
