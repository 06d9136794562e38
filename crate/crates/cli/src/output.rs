//! Output files staged in memory and written only once a run has succeeded.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

#[derive(Default)]
pub struct Outputs {
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &'static str, contents: impl Into<Vec<u8>>) {
        self.files.push((name, contents.into()));
    }

    /// Writes every file next to a temporary copy, then renames them into place.
    pub fn write(self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut staged = Vec::new();
        for (name, contents) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp"));
            if let Err(e) = fs::write(&tmp, contents) {
                for t in &staged {
                    let _ = fs::remove_file(t);
                }
                let _ = fs::remove_file(&tmp);
                return Err(e).with_context(|| format!("writing {}", tmp.display()));
            }
            staged.push(tmp);
        }
        for (tmp, (name, _)) in staged.iter().zip(&self.files) {
            let target = dir.join(name);
            fs::rename(tmp, &target).with_context(|| format!("writing {}", target.display()))?;
        }
        Ok(())
    }
}
