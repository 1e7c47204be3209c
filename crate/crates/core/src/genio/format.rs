//! Versioned JSON instance files. The layout is documented in
//! `docs/instance-format.md` at the repository root.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Arc, Instance, ModelError, Network, NodeId, NodeRole, Scenario, ScenarioSet};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// Carries the line and column of the offending token.
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Deserialize)]
struct Probe {
    schema_version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    schema_version: u32,
    /// Recomputed from the data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    /// Role of node `k` at position `k`.
    nodes: Vec<NodeRole>,
    arcs: Vec<ArcRecord>,
    nsnm: Vec<NodeId>,
    scenarios: Vec<Scenario>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArcRecord {
    tail: NodeId,
    head: NodeId,
    #[serde(default)]
    lower: u64,
    /// `null` for an uncapacitated arc.
    upper: Option<u64>,
    reward: f64,
}

pub fn to_json(instance: &Instance) -> String {
    let network = &instance.network;
    let file = InstanceFile {
        schema_version: SCHEMA_VERSION,
        gamma: Some(instance.gamma),
        nodes: network.roles().to_vec(),
        arcs: network
            .arcs()
            .iter()
            .map(|a| ArcRecord {
                tail: a.tail,
                head: a.head,
                lower: a.lower,
                upper: a.upper,
                reward: a.reward,
            })
            .collect(),
        nsnm: network.nsnm_nodes().to_vec(),
        scenarios: instance.scenarios.scenarios.clone(),
    };
    let mut text =
        serde_json::to_string_pretty(&file).expect("instance data is always serializable");
    text.push('\n');
    text
}

pub fn from_json(text: &str) -> Result<Instance, FormatError> {
    let probe: Probe = serde_json::from_str(text)?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(FormatError::SchemaVersion {
            found: probe.schema_version,
        });
    }
    let file: InstanceFile = serde_json::from_str(text)?;
    let arcs = file
        .arcs
        .into_iter()
        .map(|r| Arc {
            tail: r.tail,
            head: r.head,
            lower: r.lower,
            upper: r.upper,
            reward: r.reward,
        })
        .collect();
    let network = Network::new(file.nodes, arcs, file.nsnm)?;
    let scenarios = ScenarioSet {
        scenarios: file.scenarios,
    };
    Ok(match file.gamma {
        Some(gamma) => Instance {
            network,
            scenarios,
            gamma,
        },
        None => Instance::with_computed_gamma(network, scenarios),
    })
}

pub fn read_instance(path: &Path) -> Result<Instance, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text)
}

pub fn write_instance(instance: &Instance, path: &Path) -> Result<(), FormatError> {
    std::fs::write(path, to_json(instance)).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}
