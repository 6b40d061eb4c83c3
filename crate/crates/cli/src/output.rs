use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;

/// A command's products, held in memory until the command succeeds.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    /// Machine-readable notes, e.g. a non-decreasing Hausdorff sequence.
    pub flags: Vec<String>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> serde_json::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    outputs: Vec<&'a str>,
    flags: &'a [String],
}

pub const MANIFEST: &str = "manifest.json";

/// Write every output plus the manifest. Each file goes to a hidden
/// temporary name first and is renamed into place, so a failure never
/// leaves a truncated artifact under its final name.
pub fn commit(dir: &Path, command: &str, config: &RunConfig, outputs: &mut Outputs) -> std::io::Result<()> {
    let mut names: Vec<&str> = outputs.files.iter().map(|(n, _)| n.as_str()).collect();
    names.sort_unstable();
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config,
        outputs: names,
        flags: &outputs.flags,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    text.push('\n');
    outputs.files.push((MANIFEST.into(), text.into_bytes()));

    fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(outputs.files.len());
    for (name, bytes) in &outputs.files {
        let tmp = dir.join(format!(".{name}.partial"));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in staged {
        fs::rename(tmp, dest)?;
    }
    Ok(())
}
