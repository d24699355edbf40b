//! Output bookkeeping: every file a command writes is recorded so that a
//! failing command can remove what it already produced.

use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Staged {
    /// Creates `dir` (and missing ancestors), remembering which ones are new.
    pub fn ensure_dir(&mut self, dir: &Path) -> Result<(), CliError> {
        if dir.as_os_str().is_empty() || dir.is_dir() {
            return Ok(());
        }
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
        // Deepest first so cleanup can remove them in order.
        self.dirs.extend(missing);
        Ok(())
    }

    /// Records `path` as produced by this command and returns it.
    pub fn file(&mut self, path: impl Into<PathBuf>) -> PathBuf {
        let path = path.into();
        self.files.push(path.clone());
        path
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        for d in &self.dirs {
            let _ = std::fs::remove_dir(d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rollback_removes_files_and_new_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("a/b");
        {
            let mut s = Staged::default();
            s.ensure_dir(&dir).unwrap();
            std::fs::write(s.file(dir.join("x.txt")), "x").unwrap();
        }
        assert!(!tmp.path().join("a").exists());
    }

    #[test]
    fn commit_keeps_everything() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = Staged::default();
        s.ensure_dir(tmp.path()).unwrap();
        let f = s.file(tmp.path().join("y.txt"));
        std::fs::write(&f, "y").unwrap();
        s.commit();
        assert!(f.exists());
    }
}
