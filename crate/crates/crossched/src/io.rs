//! Versioned file formats for problems, plans and timelines.
//!
//! All three are self-describing JSON documents with a leading `version`
//! field. Writing is deterministic: the same value always serializes to the
//! same bytes, which the golden tests rely on.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::SchedulePlan;
use crate::problem::ProblemSpec;
use crate::timeline::Timeline;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    version: u32,
    #[serde(flatten)]
    body: T,
}

fn read_versioned<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let doc: Versioned<T> = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{what} file {}: {e}", path.display())))?;
    if doc.version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "{what} file {}: unsupported version {} (expected {FORMAT_VERSION})",
            path.display(),
            doc.version
        )));
    }
    Ok(doc.body)
}

fn write_versioned<T: Serialize>(path: &Path, body: &T) -> Result<()> {
    let doc = Versioned {
        version: FORMAT_VERSION,
        body,
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Parse(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Loads and validates a problem file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    let spec: ProblemSpec = read_versioned(path.as_ref(), "problem")?;
    spec.validate()?;
    Ok(spec)
}

pub fn save_problem(path: impl AsRef<Path>, spec: &ProblemSpec) -> Result<()> {
    write_versioned(path.as_ref(), spec)
}

pub fn load_schedule(path: impl AsRef<Path>) -> Result<SchedulePlan> {
    read_versioned(path.as_ref(), "schedule")
}

pub fn save_schedule(path: impl AsRef<Path>, plan: &SchedulePlan) -> Result<()> {
    write_versioned(path.as_ref(), plan)
}

pub fn load_timeline(path: impl AsRef<Path>) -> Result<Timeline> {
    read_versioned(path.as_ref(), "timeline")
}

/// Loads any versioned configuration document (sweep or study configs).
pub fn load_config<T: DeserializeOwned>(path: impl AsRef<Path>, what: &str) -> Result<T> {
    read_versioned(path.as_ref(), what)
}

/// Saves any versioned configuration document.
pub fn save_config<T: Serialize>(path: impl AsRef<Path>, config: &T) -> Result<()> {
    write_versioned(path.as_ref(), config)
}

pub fn save_timeline(path: impl AsRef<Path>, timeline: &Timeline) -> Result<()> {
    write_versioned(path.as_ref(), timeline)
}
