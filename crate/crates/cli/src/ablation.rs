//! Named ablation settings, numbered like the rows of the ablation table.

use oracle4rec::{Config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablation {
    pub row: usize,
    pub name: &'static str,
    pub description: &'static str,
    /// Configuration keys set on top of the base configuration.
    pub switches: &'static [(&'static str, &'static str)],
}

pub const ABLATIONS: &[Ablation] = &[
    Ablation {
        row: 1,
        name: "no_filter",
        description: "without the noise filtering layers",
        switches: &[("model.G", "0")],
    },
    Ablation {
        row: 2,
        name: "learnable_filter",
        description: "learnable complex filter instead of the low-pass mask",
        switches: &[("filter.learnable", "true")],
    },
    Ablation {
        row: 3,
        name: "no_future",
        description: "without the future encoder (past encoder alone, beta = 0)",
        switches: &[("train.no_future", "true")],
    },
    Ablation {
        row: 4,
        name: "no_attenuation",
        description: "equal guiding weights (gamma = 0)",
        switches: &[("guiding.gamma", "0")],
    },
    Ablation {
        row: 5,
        name: "joint",
        description: "joint training of both encoders in one pass",
        switches: &[("train.mode", "joint")],
    },
    Ablation {
        row: 6,
        name: "js",
        description: "Jensen-Shannon discrepancy",
        switches: &[("guiding.kind", "js")],
    },
    Ablation {
        row: 7,
        name: "euclidean",
        description: "Euclidean discrepancy",
        switches: &[("guiding.kind", "euclidean")],
    },
    Ablation {
        row: 8,
        name: "cosine",
        description: "cosine discrepancy",
        switches: &[("guiding.kind", "cosine")],
    },
    Ablation {
        row: 9,
        name: "future_only",
        description: "future encoder alone, also used for inference",
        switches: &[("train.future_only", "true")],
    },
    Ablation {
        row: 10,
        name: "r2l",
        description: "future encoder reads the global window right to left",
        switches: &[("train.r2l", "true")],
    },
    Ablation {
        row: 11,
        name: "full",
        description: "full model (KL discrepancy, left to right)",
        switches: &[],
    },
];

pub fn find(name: &str) -> Option<&'static Ablation> {
    ABLATIONS.iter().find(|a| a.name == name)
}

impl Ablation {
    pub fn apply(&self, cfg: &mut Config) -> Result<()> {
        for (k, v) in self.switches {
            cfg.set(k, v)?;
        }
        Ok(())
    }

    pub fn overrides(&self) -> Vec<(String, String)> {
        self.switches
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}

pub fn listing() -> String {
    ABLATIONS
        .iter()
        .map(|a| format!("({:>2}) {:<17}{}\n", a.row, a.name, a.description))
        .collect()
}
