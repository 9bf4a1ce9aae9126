//! Compact `method:parameter` flag values.

use ccl_core::constraint::FeatureSpec;
use ccl_core::data::{ConstraintSpec, PolicySpec, SystemSpec, TaskSpec};

use crate::CliError;

fn number(text: &str, what: &str) -> Result<f64, CliError> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::usage(format!("{what}: {text:?} is not a finite number")))
}

fn split(value: &str) -> (&str, Option<&str>) {
    match value.split_once(':') {
        Some((head, rest)) => (head, Some(rest)),
        None => (value, None),
    }
}

/// `toy2d` | `twolink[:l1:l2]`.
pub fn system(value: &str) -> Result<SystemSpec, CliError> {
    match split(value) {
        ("toy2d", None) => Ok(SystemSpec::Toy2d),
        ("twolink", None) => Ok(SystemSpec::twolink_default()),
        ("twolink", Some(rest)) => {
            let (l1, l2) = rest
                .split_once(':')
                .ok_or_else(|| CliError::usage("twolink takes two link lengths, e.g. twolink:1:1"))?;
            Ok(SystemSpec::Twolink {
                l1: number(l1, "l1")?,
                l2: number(l2, "l2")?,
            })
        }
        _ => Err(CliError::usage(format!("unknown system {value:?} (toy2d | twolink[:l1:l2])"))),
    }
}

/// `limit-cycle` | `linear`.
pub fn policy(value: &str) -> Result<PolicySpec, CliError> {
    match value {
        "limit-cycle" => Ok(PolicySpec::limit_cycle()),
        "linear" | "linear-attractor" => Ok(PolicySpec::linear_attractor()),
        _ => Err(CliError::usage(format!("unknown policy {value:?} (limit-cycle | linear)"))),
    }
}

/// `none` | `fixed:DEG` | `parabolic:A` | `jacobian:ROW`.
pub fn constraint(value: &str) -> Result<ConstraintSpec, CliError> {
    match split(value) {
        ("none", None) => Ok(ConstraintSpec::None),
        ("fixed", Some(deg)) => Ok(ConstraintSpec::FixedAngle {
            degrees: number(deg, "fixed angle")?,
        }),
        ("parabolic", Some(a)) => Ok(ConstraintSpec::Parabolic {
            a: number(a, "parabola coefficient")?,
        }),
        ("jacobian", Some(rows)) => {
            let rows = rows
                .split(':')
                .map(|r| r.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::usage(format!("jacobian rows {rows:?} must be integers")))?;
            Ok(ConstraintSpec::JacobianRows { rows })
        }
        _ => Err(CliError::usage(format!(
            "unknown constraint {value:?} (none | fixed:DEG | parabolic:A | jacobian:ROW)"
        ))),
    }
}

/// `zero` | `const:B1[:B2..]` | `sin:AMPLITUDE:FREQUENCY`.
pub fn task(value: &str) -> Result<TaskSpec, CliError> {
    match split(value) {
        ("zero", None) => Ok(TaskSpec::Zero),
        ("const", Some(rest)) => Ok(TaskSpec::Constant {
            value: rest.split(':').map(|v| number(v, "task value")).collect::<Result<_, _>>()?,
        }),
        ("sin", Some(rest)) => {
            let (amp, freq) = rest
                .split_once(':')
                .ok_or_else(|| CliError::usage("sin takes amplitude and frequency, e.g. sin:0.5:0.1"))?;
            Ok(TaskSpec::Sinusoid {
                amplitude: number(amp, "amplitude")?,
                frequency: number(freq, "frequency")?,
            })
        }
        _ => Err(CliError::usage(format!(
            "unknown task {value:?} (zero | const:B | sin:AMPLITUDE:FREQUENCY)"
        ))),
    }
}

/// `identity:DIM` | `twolink-jacobian[:l1:l2]`.
pub fn features(value: &str) -> Result<FeatureSpec, CliError> {
    match split(value) {
        ("identity", Some(dim)) => {
            let dim = dim
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("identity dimension {dim:?} is not an integer")))?;
            Ok(FeatureSpec::Identity { dim })
        }
        ("twolink-jacobian", None) => Ok(FeatureSpec::TwoLinkJacobian { l1: 1.0, l2: 1.0 }),
        ("twolink-jacobian", Some(rest)) => {
            let (l1, l2) = rest
                .split_once(':')
                .ok_or_else(|| CliError::usage("twolink-jacobian takes two link lengths"))?;
            Ok(FeatureSpec::TwoLinkJacobian {
                l1: number(l1, "l1")?,
                l2: number(l2, "l2")?,
            })
        }
        _ => Err(CliError::usage(format!(
            "unknown feature matrix {value:?} (identity:DIM | twolink-jacobian[:l1:l2])"
        ))),
    }
}
