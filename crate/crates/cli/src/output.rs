//! Run outputs are written into a staging directory and moved into the
//! output directory only when the whole command succeeds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fiberseg::volume::{write_volume, Volume, VolumeFormat};
use serde_json::{json, Value};

use crate::config::Settings;
use crate::CliError;

pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    created_out: bool,
    committed: bool,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self, CliError> {
        let created_out = !out.exists();
        fs::create_dir_all(out).map_err(|e| CliError::Domain(format!("cannot create {}: {e}", out.display())))?;
        let dir = out.join(format!(".staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self { out: out.to_path_buf(), dir, created_out, committed: false })
    }

    /// Where to write the artifact `name` before commit.
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let mut f = fs::File::create(self.path(name))?;
        f.write_all(bytes.as_ref())?;
        Ok(())
    }

    pub fn write_with(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, buf)
    }

    pub fn write_json(&self, name: &str, value: &impl serde::Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Domain(e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes a volume; `name` is a file for raw output or a directory for a
    /// slice stack.
    pub fn write_volume(&self, name: &str, vol: &Volume, format: &VolumeFormat) -> Result<(), CliError> {
        write_volume(vol, &self.path(name), format)?;
        Ok(())
    }

    /// Writes the manifest and moves every staged artifact into place.
    pub fn commit(mut self, command: &str, settings: &Settings, extra: Value) -> Result<Vec<String>, CliError> {
        let mut names: Vec<String> = fs::read_dir(&self.dir)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        self.write("resolved.conf", settings.to_conf_text())?;
        names.push("resolved.conf".into());
        let manifest = json!({
            "tool": "fiberseg",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "settings": settings.to_json(),
            "outputs": names,
            "details": extra,
        });
        self.write_json("manifest.json", &manifest)?;
        names.push("manifest.json".into());
        for name in &names {
            let dest = self.out.join(name);
            if dest.is_dir() {
                fs::remove_dir_all(&dest)?;
            }
            fs::rename(self.dir.join(name), &dest)?;
        }
        fs::remove_dir(&self.dir)?;
        self.committed = true;
        Ok(names)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
            if self.created_out {
                let _ = fs::remove_dir(&self.out);
            }
        }
    }
}
