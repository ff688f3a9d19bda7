use crate::Result;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Run metadata written next to every CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a, C: Serialize, S: Serialize> {
    pub tool_version: &'static str,
    pub command: &'a str,
    pub config: &'a C,
    pub summary: &'a S,
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`, creating it if needed.
pub fn write_report<C: Serialize, S: Serialize>(
    dir: &Path,
    stem: &str,
    csv: &str,
    command: &str,
    config: &C,
    summary: &S,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&csv_path, csv)?;
    let meta = Metadata {
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        summary,
    };
    std::fs::write(&json_path, serde_json::to_string_pretty(&meta)?)?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, json) = write_report(dir.path(), "run", "a,b\n1,2\n", "bench-ler", &serde_json::json!({"seed": 1}), &()).unwrap();
        assert_eq!(std::fs::read_to_string(csv).unwrap(), "a,b\n1,2\n");
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
        assert_eq!(meta["config"]["seed"], 1);
        assert_eq!(meta["command"], "bench-ler");
    }
}
