//! `--sweep key=v1,v2,...` handling.

use presstopo::{Error, ProblemSpec};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

fn bad(arg: &str, message: &str) -> Error {
    Error::Config {
        path: "--sweep".into(),
        message: format!("`{arg}`: {message}"),
    }
}

pub fn parse(arg: &str) -> Result<Axis, Error> {
    let (key, values) = arg.split_once('=').ok_or_else(|| bad(arg, "expected key=v1,v2,..."))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(bad(arg, "empty key"));
    }
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if values.iter().any(String::is_empty) {
        return Err(bad(arg, "empty value"));
    }
    Ok(Axis {
        key: key.to_string(),
        values,
    })
}

/// One problem per sweep position. Several axes are zipped and must have
/// the same length.
pub fn expand(
    base: &ProblemSpec,
    axes: &[Axis],
    parse_value: impl Fn(&str) -> Value,
) -> Result<Vec<ProblemSpec>, Error> {
    let Some(first) = axes.first() else {
        return Ok(vec![base.clone()]);
    };
    let n = first.values.len();
    if let Some(a) = axes.iter().find(|a| a.values.len() != n) {
        return Err(Error::Config {
            path: "--sweep".into(),
            message: format!("`{}` has {} values but `{}` has {n}", a.key, a.values.len(), first.key),
        });
    }
    (0..n)
        .map(|i| {
            let values: Vec<Value> = axes.iter().map(|a| parse_value(&a.values[i])).collect();
            let mut spec = base.with_overrides(axes.iter().zip(&values).map(|(a, v)| (a.key.as_str(), v)))?;
            let label: Vec<String> = axes
                .iter()
                .map(|a| format!("{}{}", a.key.rsplit('.').next().unwrap_or(&a.key), a.values[i]))
                .collect();
            spec.name = format!("{}_{}", base.name, label.join("_"));
            Ok(spec)
        })
        .collect()
}
