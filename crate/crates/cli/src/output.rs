//! Artifact persistence. Everything written here is deterministic except
//! the manifest's metadata block, which carries the generation timestamp.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::error::Result;
use crate::scenario::ScenarioOutput;

pub fn write_output(dir: &Path, out: &ScenarioOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    for artifact in &out.artifacts {
        fs::write(dir.join(&artifact.name), &artifact.bytes)?;
    }
    let mut manifest = out.manifest.clone();
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    manifest["metadata"] = json!({ "generated_unix_time": now });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Artifact;

    #[test]
    fn writes_artifacts_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = ScenarioOutput {
            artifacts: vec![Artifact { name: "a.csv".into(), bytes: b"x,y\n".to_vec() }],
            manifest: json!({"scenario": "test"}),
            flagged: false,
        };
        write_output(dir.path(), &out).unwrap();
        assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), b"x,y\n");
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["scenario"], "test");
        assert!(manifest["metadata"]["generated_unix_time"].is_u64());
    }
}
