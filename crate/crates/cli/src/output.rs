use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::CliError;

/// Output files written to temporaries next to their targets and only moved
/// into place by [`Staged::commit`]. Dropping without committing removes them.
#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stage `target`, filled in by `fill`.
    pub fn file<F>(&mut self, target: &Path, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let dir = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir)?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut buf)?;
            buf.flush()?;
        }
        self.files.push((tmp, target.to_path_buf()));
        Ok(())
    }

    pub fn text(&mut self, target: &Path, text: &str) -> Result<(), CliError> {
        self.file(target, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub fn json<T: serde::Serialize>(&mut self, target: &Path, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(dtsurv::Error::from)?;
        text.push('\n');
        self.text(target, &text)
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::with_capacity(self.files.len());
        for (tmp, target) in self.files {
            tmp.persist(&target).map_err(|e| CliError::Io(e.error))?;
            written.push(target);
        }
        Ok(written)
    }
}

/// `dir/stem<suffix>` for an output path `dir/stem.ext`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn siblings() {
        assert_eq!(sibling(Path::new("out/coef.csv"), ".json"), PathBuf::from("out/coef.json"));
        assert_eq!(sibling(Path::new("coef"), ".model.json"), PathBuf::from("coef.model.json"));
    }

    #[test]
    fn uncommitted_files_vanish() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("a.txt");
        {
            let mut staged = Staged::new();
            staged.text(&target, "hello").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

        let mut staged = Staged::new();
        staged.text(&target, "hello").unwrap();
        staged.commit().unwrap();
        assert_eq!(std::fs::read_to_string(&target).unwrap(), "hello");
    }
}
