// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Mutation applied by the control plane to a runtime table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableOp {
    Add,
    Modify,
    Delete,
}

impl FromStr for TableOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "add" => Ok(TableOp::Add),
            "mod" | "modify" => Ok(TableOp::Modify),
            "del" | "delete" => Ok(TableOp::Delete),
            other => Err(format!("unknown table operation {other:?}")),
        }
    }
}

impl fmt::Display for TableOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableOp::Add => "add",
            TableOp::Modify => "mod",
            TableOp::Delete => "del",
        })
    }
}

/// Which half of the pipeline a parser, MAU or deparser instance serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingress,
    Egress,
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ingress" | "in" => Ok(Stage::Ingress),
            "egress" | "e" => Ok(Stage::Egress),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingress => "ingress",
            Stage::Egress => "egress",
        })
    }
}
