use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use contact_relax::io::RunManifest;
use serde::Serialize;

use crate::CliError;

pub const OUT_ENV: &str = "CONTACT_RELAX_OUT";

/// `--out`, else `$CONTACT_RELAX_OUT/<command>`, else `./out/<command>`.
pub fn resolve_dir(flag: Option<&Path>, command: &str) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    let base = std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"));
    base.join(command)
}

/// An output directory and the manifest that describes it.
pub struct Output {
    dir: PathBuf,
    manifest: RunManifest,
    start: Instant,
}

impl Output {
    pub fn new(dir: PathBuf, command: &str, args: &impl Serialize) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir)?;
        let mut manifest = RunManifest::new(command);
        if let serde_json::Value::Object(map) = serde_json::to_value(args)? {
            for (k, v) in map {
                manifest = manifest.param(&k, v);
            }
        }
        Ok(Self {
            dir,
            manifest,
            start: Instant::now(),
        })
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn tolerance(&mut self, key: &str, value: f64) {
        self.manifest.tolerances.insert(key.to_string(), value);
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.manifest.parameters.insert(key.to_string(), value);
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.manifest.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    /// Writes `name` with `write` and flushes it.
    pub fn write_with(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.manifest.wall_clock_seconds = self.start.elapsed().as_secs_f64();
        self.manifest.write_to_dir(&self.dir)?;
        Ok(self.dir)
    }
}
