use std::path::PathBuf;

use super::run::write_file;
use super::{CliError, CliResult, SynthArgs, EXIT_OK};
use crate::data::{synthesize, SyntheticSpec};
use crate::kv::KvConfig;

pub fn cmd_synthesize(args: &SynthArgs) -> CliResult<i32> {
    if !args.spec.is_file() {
        return Err(CliError::usage(format!(
            "no such file: {}",
            args.spec.display()
        )));
    }
    let spec = SyntheticSpec::from_kv(&KvConfig::from_file(&args.spec)?)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let data = synthesize(&spec).map_err(|e| CliError::usage(e.to_string()))?;

    let mut csv = Vec::new();
    data.dataset.write_csv(&mut csv)?;
    write_file(&args.out, &csv)?;
    let manifest_path = args.manifest.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    let json = serde_json::to_string(&data.manifest).expect("manifest serializes");
    write_file(&manifest_path, json.as_bytes())?;
    eprintln!(
        "wrote {} rows to {} and manifest {}",
        data.dataset.len(),
        args.out.display(),
        manifest_path.display()
    );
    Ok(EXIT_OK)
}
