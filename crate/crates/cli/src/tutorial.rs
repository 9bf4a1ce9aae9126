//! End-to-end examples on the toy system and the two-link arm.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ccl_core::constraint::{ConstraintConfig, FeatureSpec};
use ccl_core::data::{generate, ConstraintSpec, GeneratorConfig, PolicySpec, SystemSpec, TaskSpec};
use ccl_core::io::{save_dataset, save_model};
use ccl_core::LearnOptions;
use clap::ValueEnum;
use serde::Serialize;

use crate::manifest::{display, MetricEntry, ReportEntry, RunManifest};
use crate::pipeline::{self, LearnSettings, Method};
use crate::{CliError, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tutorial {
    /// Null-space component under a fixed constraint with a varying task.
    ToyNcl,
    /// Linear and parabolic constraints on the toy system.
    ToyConstraint,
    /// Policy from three differently constrained groups.
    ToyPi,
    /// Jacobian-row constraint and policy on a two-link arm.
    Twolink,
}

/// Offset between the training and held-out generator seeds.
const TEST_SEED_OFFSET: u64 = 1000;

#[derive(Debug, Clone, Serialize)]
struct Stage {
    name: &'static str,
    data: GeneratorConfig,
    test_samples_per_group: usize,
    learn: LearnSettings,
}

fn toy(policy: PolicySpec, constraints: Vec<ConstraintSpec>, task: TaskSpec, n: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        system: SystemSpec::Toy2d,
        policy,
        constraints,
        task,
        samples_per_group: n,
        noise_std: 0.0,
        seed,
    }
}

fn settings(method: Method, features: Option<FeatureSpec>, seed: u64) -> LearnSettings {
    let num_basis = method.default_basis();
    LearnSettings {
        method,
        num_basis,
        features,
        constraint: ConstraintConfig {
            num_basis,
            ..ConstraintConfig::default()
        },
        options: LearnOptions::default().with_seed(seed),
    }
}

fn fixed(degrees: &[f64]) -> Vec<ConstraintSpec> {
    degrees.iter().map(|&d| ConstraintSpec::FixedAngle { degrees: d }).collect()
}

fn stages(tutorial: Tutorial, seed: u64) -> Vec<Stage> {
    match tutorial {
        Tutorial::ToyNcl => vec![Stage {
            name: "ncl",
            data: toy(
                PolicySpec::limit_cycle(),
                fixed(&[30.0]),
                TaskSpec::Sinusoid {
                    amplitude: 1.0,
                    frequency: 0.1,
                },
                500,
                seed,
            ),
            test_samples_per_group: 500,
            learn: settings(Method::Ncl, None, seed),
        }],
        Tutorial::ToyConstraint => vec![
            Stage {
                name: "linear",
                data: toy(PolicySpec::limit_cycle(), fixed(&[30.0]), TaskSpec::Zero, 500, seed),
                test_samples_per_group: 500,
                learn: settings(Method::Nhat, None, seed),
            },
            Stage {
                name: "parabolic",
                data: toy(
                    PolicySpec::limit_cycle(),
                    vec![ConstraintSpec::Parabolic { a: 0.1 }],
                    TaskSpec::Zero,
                    1000,
                    seed,
                ),
                test_samples_per_group: 500,
                learn: settings(Method::Alpha, None, seed),
            },
        ],
        Tutorial::ToyPi => vec![Stage {
            name: "pi",
            data: toy(PolicySpec::limit_cycle(), fixed(&[0.0, 60.0, 120.0]), TaskSpec::Zero, 200, seed),
            test_samples_per_group: 200,
            learn: settings(Method::Pi, None, seed),
        }],
        Tutorial::Twolink => {
            let arm = SystemSpec::twolink_default();
            let SystemSpec::Twolink { l1, l2 } = arm else { unreachable!() };
            let jac = |rows: &[usize]| ConstraintSpec::JacobianRows { rows: rows.to_vec() };
            let data = |constraints, n| GeneratorConfig {
                system: arm,
                policy: PolicySpec::linear_attractor(),
                constraints,
                task: TaskSpec::Zero,
                samples_per_group: n,
                noise_std: 0.0,
                seed,
            };
            vec![
                Stage {
                    name: "lambda",
                    data: data(vec![jac(&[1])], 500),
                    test_samples_per_group: 500,
                    learn: settings(Method::Lambda, Some(FeatureSpec::TwoLinkJacobian { l1, l2 }), seed),
                },
                Stage {
                    name: "pi",
                    data: data(vec![jac(&[0]), jac(&[1])], 250),
                    test_samples_per_group: 250,
                    learn: settings(Method::Pi, None, seed),
                },
            ]
        }
    }
}

pub fn run(tutorial: Tutorial, out_dir: Option<&Path>, seed: u64) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let name = tutorial.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default();
    let dir: PathBuf = out_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(format!("tutorial-{name}")));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    let stages = stages(tutorial, seed);
    let mut manifest = RunManifest::new("tutorial", seed, serde_json::json!({ "name": name, "stages": stages }));
    let mut table = format!("stage,{}\n", pipeline::TABLE_HEADER);
    let mut converged = true;

    for stage in &stages {
        let train = generate(&stage.data)?;
        let test = generate(&GeneratorConfig {
            samples_per_group: stage.test_samples_per_group,
            seed: stage.data.seed.wrapping_add(TEST_SEED_OFFSET),
            ..stage.data.clone()
        })?;
        let train_path = dir.join(format!("{}-train.csv", stage.name));
        let test_path = dir.join(format!("{}-test.csv", stage.name));
        let model_path = dir.join(format!("{}-model.json", stage.name));
        save_dataset(&train, &train_path)?;
        save_dataset(&test, &test_path)?;

        let learned = pipeline::learn(&train, &stage.learn)?;
        save_model(&learned.model, &model_path)?;
        eprintln!("{}: {}", stage.name, learned.report.summary());
        for w in &learned.warnings {
            eprintln!("warning: {}: {w}", stage.name);
            manifest.warnings.push(format!("{}: {w}", stage.name));
        }
        converged &= learned.report.converged;

        let rows = pipeline::evaluate(&learned.model, &test, stage.learn.options.svd_threshold)?;
        for row in rows {
            table.push_str(&pipeline::table_line(Some(stage.name), &row));
            table.push('\n');
            manifest.metrics.push(MetricEntry {
                stage: stage.name.into(),
                row,
            });
        }
        manifest.reports.push(ReportEntry {
            stage: stage.name.into(),
            summary: learned.report.summary(),
            report: learned.report,
        });
        manifest.outputs.extend([display(&train_path), display(&test_path), display(&model_path)]);
    }

    print!("{table}");
    let table_path = dir.join("metrics.csv");
    std::fs::write(&table_path, &table).map_err(|e| CliError::io(&table_path, e))?;
    manifest.outputs.push(display(&table_path));
    manifest.finish(started);
    manifest.write(&dir.join("manifest.json"))?;
    Ok(Outcome { converged })
}
