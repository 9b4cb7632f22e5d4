use std::io::Write;

use serde_json::Value;

use crate::error::{CliError, Result};
use crate::formats::{check_version, read_bytes, MANIFEST};
use crate::InspectArgs;

/// Prints the manifest of any bundle after checking it parses and carries a
/// supported `format_version`.
pub fn run(args: &InspectArgs, out: &mut impl Write) -> Result<()> {
    let path = args.path.join(MANIFEST);
    let bytes = read_bytes(&path)?;
    let value: Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::validation(format!("{}: malformed manifest: {e}", path.display())))?;
    let version = value
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| CliError::validation(format!("{}: missing format_version", path.display())))?;
    check_version(u32::try_from(version).unwrap_or(u32::MAX), &args.path)?;
    out.write_all(&bytes).map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e))
}
