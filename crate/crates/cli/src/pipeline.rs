//! Learner dispatch and model evaluation shared by `learn`, `eval` and the tutorials.

use std::fmt::Write as _;

use ccl_core::constraint::{
    learn_alpha, learn_lambda, learn_nhat, ConstraintConfig, FeatureMatrix, FeatureSpec,
};
use ccl_core::eval::{error_ncpe, error_npe, error_nupe, error_poe, error_ppe, MetricTriple};
use ccl_core::io::Model;
use ccl_core::nullspace::{learn_ncl, NullspaceComponentModel};
use ccl_core::policy::{learn_pi, learn_pi_lwl, observation_projector, LwlPolicyModel, ParametricPolicyModel};
use ccl_core::{DemonstrationSet, LearnOptions, LearnReport, ReportFlag};
use clap::ValueEnum;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Nhat,
    Alpha,
    Lambda,
    Ncl,
    Pi,
    PiLwl,
}

impl Method {
    /// Basis count used when none is given.
    pub fn default_basis(self) -> usize {
        match self {
            Method::Pi | Method::PiLwl => 10,
            _ => 16,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnSettings {
    pub method: Method,
    pub num_basis: usize,
    pub features: Option<FeatureSpec>,
    pub constraint: ConstraintConfig,
    pub options: LearnOptions,
}

pub struct Learned {
    pub model: Model,
    pub report: LearnReport,
    pub warnings: Vec<String>,
}

pub fn learn(data: &DemonstrationSet, settings: &LearnSettings) -> Result<Learned, CliError> {
    let x = data.states();
    let u = data.actions();
    let opts = &settings.options;
    let g = settings.num_basis;
    let seed = opts.rng_seed;
    let constraint = ConstraintConfig {
        num_basis: g,
        ..settings.constraint
    };
    let (model, report) = match settings.method {
        Method::Nhat => {
            let (m, r) = learn_nhat(u, &constraint, opts)?;
            (Model::Nhat(m), r)
        }
        Method::Alpha => {
            let (m, r) = learn_alpha(u, x, &constraint, opts)?;
            (Model::StateDependent(m), r)
        }
        Method::Lambda => {
            let features = settings
                .features
                .as_ref()
                .ok_or_else(|| CliError::usage("method lambda needs a feature matrix: pass --features"))?;
            if features.dim_u() != data.dim_u() {
                return Err(CliError::usage(format!(
                    "feature matrix acts on R^{}, dataset actions are R^{}",
                    features.dim_u(),
                    data.dim_u()
                )));
            }
            if matches!(features, FeatureSpec::TwoLinkJacobian { .. }) && data.dim_x() != 2 {
                return Err(CliError::usage("twolink-jacobian needs 2-D joint-angle states"));
            }
            let (m, r) = learn_lambda(u, x, features, &constraint, opts)?;
            (Model::StateDependent(m), r)
        }
        Method::Ncl => {
            let model0 = NullspaceComponentModel::from_data(x, data.dim_u(), g, seed)?;
            let (m, r) = learn_ncl(x, u, &model0, opts)?;
            (Model::Ncl(m), r)
        }
        Method::Pi => {
            let model0 = ParametricPolicyModel::rbf_from_data(x, data.dim_u(), g, seed)?;
            let (m, r) = learn_pi(x, u, &model0, opts)?;
            (Model::PiParametric(m), r)
        }
        Method::PiLwl => {
            let model0 = LwlPolicyModel::rbf_from_data(x, data.dim_u(), g, seed)?;
            let (m, r) = learn_pi_lwl(x, u, &model0, opts)?;
            (Model::PiLwl(m), r)
        }
    };

    let mut warnings = Vec::new();
    if settings.features.is_some() && settings.method != Method::Lambda {
        warnings.push(format!("--features is ignored by method {:?}", settings.method));
    }
    if matches!(settings.method, Method::Pi | Method::PiLwl) {
        if data.num_groups() == 1 {
            warnings.push(
                "all samples share one constraint group: the policy is only identified inside its null space"
                    .into(),
            );
        }
        if report.has_flag(&ReportFlag::SingleConstraintDegeneracy) && data.num_groups() > 1 {
            warnings.push("policy fit is rank deficient: some directions are unobserved".into());
        }
    }
    for flag in &report.flags {
        match flag {
            ReportFlag::NoConstraintFound => warnings.push("no constraint is consistent with the data".into()),
            ReportFlag::DroppedSamples { count } => warnings.push(format!("{count} zero actions dropped")),
            ReportFlag::DegenerateProjectors { count } => {
                warnings.push(format!("{count} samples have vanishing predictions"))
            }
            ReportFlag::SingleConstraintDegeneracy => {}
        }
    }
    Ok(Learned {
        model,
        report,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub metric: &'static str,
    pub value: Option<MetricTriple>,
    pub note: Option<String>,
}

impl MetricRow {
    fn value(metric: &'static str, t: MetricTriple) -> Self {
        Self {
            metric,
            value: Some(t),
            note: None,
        }
    }

    fn skipped(metric: &'static str) -> Self {
        Self {
            metric,
            value: None,
            note: Some("requires ground truth".into()),
        }
    }
}

fn columns(m: &DMatrix<f64>) -> impl Iterator<Item = DVector<f64>> + '_ {
    m.column_iter().map(|c| c.into_owned())
}

/// Learned null-space projectors at every sample of `data`.
pub fn projectors(model: &Model, data: &DemonstrationSet, threshold: f64) -> Result<Vec<DMatrix<f64>>, CliError> {
    match model {
        Model::Nhat(m) => Ok(vec![m.projector(threshold); data.len()]),
        Model::StateDependent(m) => Ok(m.projectors(data.states(), threshold)),
        _ => Err(CliError::usage(format!("{} models have no projector", model.kind()))),
    }
}

pub fn evaluate(model: &Model, data: &DemonstrationSet, threshold: f64) -> Result<Vec<MetricRow>, CliError> {
    if model.dim_u() != data.dim_u() || (model.dim_x() != 0 && model.dim_x() != data.dim_x()) {
        return Err(CliError::usage(format!(
            "{} model maps R^{} to R^{}, dataset is R^{} to R^{}",
            model.kind(),
            model.dim_x(),
            model.dim_u(),
            data.dim_x(),
            data.dim_u()
        )));
    }
    let x = data.states();
    let mut rows = Vec::new();
    match model {
        Model::Nhat(_) | Model::StateDependent(_) => {
            let p = projectors(model, data, threshold)?;
            rows.push(match (data.null_component(), data.policy()) {
                (Some(w), Some(pi)) => MetricRow::value("nppe", error_ppe(w, &p, pi)?),
                _ => MetricRow::skipped("nppe"),
            });
            rows.push(MetricRow::value("npoe", error_poe(data.actions(), &p, data.policy())?));
        }
        Model::Ncl(m) => {
            let pred = m.predict(x);
            match data.null_component() {
                Some(w) => {
                    rows.push(MetricRow::value("nupe", error_nupe(w, &pred)?));
                    rows.push(MetricRow::value("npe", error_npe(w, &pred)?));
                }
                None => {
                    rows.push(MetricRow::skipped("nupe"));
                    rows.push(MetricRow::skipped("npe"));
                }
            }
        }
        Model::PiParametric(_) | Model::PiLwl(_) => {
            let pred = match model {
                Model::PiParametric(m) => m.predict(x),
                Model::PiLwl(m) => m.predict(x)?,
                _ => unreachable!(),
            };
            rows.push(match data.policy() {
                Some(pi) => MetricRow::value("nupe", error_nupe(pi, &pred)?),
                None => MetricRow::skipped("nupe"),
            });
            rows.push(match (data.policy(), data.null_component()) {
                (Some(pi), Some(w)) => {
                    let p: Vec<DMatrix<f64>> = columns(w)
                        .map(|wn| observation_projector(&wn).unwrap_or_else(|| DMatrix::zeros(wn.len(), wn.len())))
                        .collect();
                    MetricRow::value("ncpe", error_ncpe(pi, &pred, &p)?)
                }
                _ => MetricRow::skipped("ncpe"),
            });
        }
    }
    Ok(rows)
}

pub const TABLE_HEADER: &str = "metric,normalized,variance,mse,note";

pub fn table_line(prefix: Option<&str>, row: &MetricRow) -> String {
    let mut line = String::new();
    if let Some(p) = prefix {
        let _ = write!(line, "{p},");
    }
    match &row.value {
        Some(t) => {
            let _ = write!(line, "{},{:e},{:e},{:e},", row.metric, t.normalized, t.variance, t.mse);
        }
        None => {
            let _ = write!(line, "{},,,,", row.metric);
        }
    }
    line.push_str(row.note.as_deref().unwrap_or(""));
    line
}

pub fn table(rows: &[MetricRow]) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for r in rows {
        out.push_str(&table_line(None, r));
        out.push('\n');
    }
    out
}
