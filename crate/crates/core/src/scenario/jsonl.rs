//! Scenario JSONL: one scenario object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Loads and validates scenarios from a JSONL file, preserving file order.
/// `vocab`, when non-empty, restricts the allowed label strings.
pub fn load_scenarios(path: &Path, vocab: &[&str]) -> Result<Vec<Scenario>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let scenario: Scenario =
            serde_json::from_str(&line).map_err(|source| Error::Parse { line: i + 1, source })?;
        scenario.validate(vocab)?;
        out.push(scenario);
    }
    Ok(out)
}

/// Writes scenarios as JSONL, one object per line, in sequence order.
pub fn write_scenarios(path: &Path, scenarios: &[Scenario]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for s in scenarios {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
