//! Output-directory lock.
//!
//! Training commands (pretrain, finetune, sweep, synth) mutate their output
//! directory, so only one of them may run there at a time. The lock is a
//! `.lock` file created with `create_new`, which is atomic on every platform
//! the toolkit targets; dropping the guard removes the file. Read-only
//! commands (report, plot, evaluate, cam) never take the lock.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::{runtime, CliError, CliResult};

const LOCK_NAME: &str = ".lock";

/// Held while a training command owns an output directory.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    /// Acquire the lock, creating the directory if needed. A held lock is a
    /// runtime failure (exit 2): the directory is busy, not misconfigured.
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| runtime(format!("create {}: {e}", dir.display())))?;
        let path = dir.join(LOCK_NAME);
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    CliError::Runtime(format!(
                        "output directory {} is locked by another run (remove {} if it is stale)",
                        dir.display(),
                        path.display()
                    ))
                } else {
                    runtime(format!("lock {}: {e}", path.display()))
                }
            })?;
        // Informative only; staleness is decided by the human who removes it.
        let _ = writeln!(file, "pid {}", std::process::id());
        Ok(OutputLock { path })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        let second = OutputLock::acquire(dir.path());
        let err = second.unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("locked"), "{err}");
        drop(lock);
        let third = OutputLock::acquire(dir.path());
        assert!(third.is_ok(), "lock not released on drop");
    }

    #[test]
    fn acquire_creates_missing_directories() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("a/b/c");
        let _lock = OutputLock::acquire(&nested).unwrap();
        assert!(nested.join(".lock").exists());
    }
}
