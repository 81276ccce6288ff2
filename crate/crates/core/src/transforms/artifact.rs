//! JSON container for an instrumented program. The program travels as FIR
//! text; everything else is plain data.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BlockProbe, InstrumentedProgram, PassRecord};
use crate::fir::{parse_program, ParseError};
use crate::mmio::MmioMap;

pub const ARTIFACT_FORMAT: &str = "rehost-instrumented";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("invalid artifact JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported artifact format `{format}` version {version}")]
    Format { format: String, version: u32 },
    #[error("artifact program does not parse: {0}")]
    Program(#[from] ParseError),
}

#[derive(Serialize, Deserialize)]
struct ArtifactFile {
    format: String,
    version: u32,
    passes_applied: Vec<PassRecord>,
    dispatcher_task: Option<String>,
    mmio_map: MmioMap,
    weakened_branches: BTreeSet<(String, usize)>,
    block_table: Vec<BlockProbe>,
    program: String,
}

impl InstrumentedProgram {
    pub fn to_json(&self) -> String {
        let file = ArtifactFile {
            format: ARTIFACT_FORMAT.to_string(),
            version: ARTIFACT_VERSION,
            passes_applied: self.passes_applied.clone(),
            dispatcher_task: self.dispatcher_task.clone(),
            mmio_map: self.mmio_map.clone(),
            weakened_branches: self.weakened_branches.clone(),
            block_table: self.block_table.clone(),
            program: self.program.to_source(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        let file: ArtifactFile = serde_json::from_str(text)?;
        if file.format != ARTIFACT_FORMAT || file.version != ARTIFACT_VERSION {
            return Err(ArtifactError::Format {
                format: file.format,
                version: file.version,
            });
        }
        Ok(InstrumentedProgram {
            program: parse_program(&file.program)?,
            block_table: file.block_table,
            mmio_map: file.mmio_map,
            weakened_branches: file.weakened_branches,
            dispatcher_task: file.dispatcher_task,
            passes_applied: file.passes_applied,
        })
    }
}

#[cfg(test)]
mod tests {
    use crate::fir::parse_program;
    use crate::transforms::{run_pipeline, InstrumentedProgram, PassConfig};

    #[test]
    fn round_trips_exactly() {
        let p = parse_program(
            "const R = 0x40001000; vector { irq } fn irq() { b0: return; }
             fn main() { b0: v = load16 R; branch v == 3, b1, b0; b1: return; }",
        )
        .unwrap();
        let ip = run_pipeline(&p, &PassConfig::default()).unwrap();
        let text = ip.to_json();
        let back = InstrumentedProgram::from_json(&text).unwrap();
        assert_eq!(back, ip);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn rejects_other_formats() {
        assert!(InstrumentedProgram::from_json(r#"{"format":"x","version":1,"passes_applied":[],"dispatcher_task":null,"mmio_map":{"intervals":[]},"weakened_branches":[],"block_table":[],"program":""}"#).is_err());
    }
}
