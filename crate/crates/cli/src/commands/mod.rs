pub mod aggregate;
pub mod fit;
pub mod metrics;
pub mod plotdata;
pub mod replay;
pub mod select;
pub mod simulate;

use std::path::Path;

use anyhow::Result;

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}
