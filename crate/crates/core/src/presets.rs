//! Built-in scenarios selectable with `--preset`.

use crate::config::{
    AnalysisConfig, FunctionConfig, InitialConfig, InteractionConfig, ModelConfig, PerNode,
    ScenarioConfig,
};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 7] = [
    "example2a",
    "example2b",
    "example2c",
    "example2d",
    "example3",
    "example4",
    "example5",
];

fn expr(s: &str) -> PerNode {
    PerNode::All(FunctionConfig::Expression(s.to_string()))
}

fn scenario(n: usize, interaction: InteractionConfig, analysis: AnalysisConfig) -> ScenarioConfig {
    ScenarioConfig {
        model: ModelConfig {
            n,
            gamma: 1.0,
            interaction,
        },
        initial: Some(InitialConfig {
            x: vec![0.9; n],
            y: vec![0.05; n],
        }),
        integrator: Default::default(),
        analysis,
    }
}

fn constant(rows: [[f64; 2]; 2]) -> InteractionConfig {
    InteractionConfig::Constant {
        matrix: rows.iter().map(|r| r.to_vec()).collect(),
    }
}

/// The resolved scenario registered under `name`.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let none = AnalysisConfig::default;
    let raw = match name {
        "example2a" => scenario(2, constant([[1.5, 1.5], [1.5, 1.5]]), none()),
        "example2b" => scenario(2, constant([[1.0, 2.0], [1.0, 2.0]]), none()),
        "example2c" => scenario(2, constant([[3.0, 2.0], [1.0, 2.0]]), none()),
        "example2d" => scenario(2, constant([[1.0, 2.0], [3.0, 2.0]]), none()),
        "example3" => scenario(
            2,
            InteractionConfig::Rank1Local {
                g: expr("1 + x"),
                f: expr("1 / (1 + 1.5*y)"),
            },
            AnalysisConfig {
                trials: Some(100),
                ..none()
            },
        ),
        "example4" => scenario(
            2,
            InteractionConfig::ScalarScaled {
                numerators: expr("2 - x"),
                denominator: "1 + y1 + y2".into(),
            },
            none(),
        ),
        "example5" => {
            let mut s = scenario(
                5,
                InteractionConfig::OuterProduct { scale: 0.8 },
                AnalysisConfig {
                    budget: Some(10_000),
                    ..none()
                },
            );
            s.initial = Some(InitialConfig {
                x: vec![0.6, 0.3, 0.8, 0.5, 0.9],
                y: vec![0.3, 0.01, 0.1, 0.2, 0.05],
            });
            s
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown preset '{other}', expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    raw.resolve()
}
