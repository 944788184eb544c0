pub mod densify;
pub mod ensemble;
pub mod eval;
pub mod fcos;
pub mod synth;

use std::path::Path;

use crate::error::{Failure, Outcome};

/// Fails with a usage error unless `path` exists.
pub(crate) fn require_exists(flag: &str, path: &Path) -> Outcome {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{flag}: {} does not exist", path.display())))
    }
}

/// Fails with a usage error unless the directory that will hold `path` exists.
pub(crate) fn require_parent(flag: &str, path: &Path) -> Outcome {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Failure::usage(format!(
            "{flag}: directory {} does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

/// Final path component, for recording inputs without machine-specific prefixes.
pub(crate) fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}
