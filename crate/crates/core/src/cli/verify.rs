use std::io::Write;

use super::{CliError, CliResult, Hooks, VerifyArgs, EXIT_OK, EXIT_VERIFY};
use crate::oracle::{run_check, VERIFY_CHECKS};

/// Names selected by `--checks`: all when absent, none when empty.
pub fn selection(checks: Option<&str>) -> CliResult<Vec<String>> {
    let Some(list) = checks else {
        return Ok(VERIFY_CHECKS.iter().map(|s| s.to_string()).collect());
    };
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if !VERIFY_CHECKS.contains(&name) {
            return Err(CliError::usage(format!(
                "unknown check `{name}` (expected one of {})",
                VERIFY_CHECKS.join(", ")
            )));
        }
        out.push(name.to_string());
    }
    Ok(out)
}

pub fn cmd_verify(args: &VerifyArgs, hooks: Hooks, stdout: &mut dyn Write) -> CliResult<i32> {
    let mut all_passed = true;
    for name in selection(args.checks.as_deref())? {
        let report = run_check(&name, args.seed, hooks.gradient)?;
        all_passed &= report.passed;
        let line = serde_json::to_string(&report).expect("report serializes");
        writeln!(stdout, "{line}").map_err(|e| CliError::runtime(e.to_string()))?;
    }
    Ok(if all_passed { EXIT_OK } else { EXIT_VERIFY })
}
