//! Mapping between filesystem paths and entry names. Names use `/` and are
//! always relative; extraction refuses names that would escape the output
//! directory.

use std::path::{Component, Path, PathBuf};

use walkdir::WalkDir;

use crate::CliError;

/// The entry name for `path`: its normal components joined with `/`.
/// Root, `.` and prefix components are dropped; `..` is refused.
pub fn entry_name(path: &Path) -> Option<String> {
    let mut parts = Vec::new();
    for c in path.components() {
        match c {
            Component::Normal(s) => parts.push(s.to_str()?),
            Component::CurDir | Component::RootDir | Component::Prefix(_) => {}
            Component::ParentDir => return None,
        }
    }
    (!parts.is_empty()).then(|| parts.join("/"))
}

/// Where an entry named `name` lands under `dir`, or `None` if the name is
/// absolute, empty, or climbs out.
pub fn output_path(dir: &Path, name: &str) -> Option<PathBuf> {
    let mut out = dir.to_path_buf();
    let mut any = false;
    for part in name.split('/') {
        let p = Path::new(part);
        match p.components().collect::<Vec<_>>().as_slice() {
            [Component::Normal(_)] if !part.contains('\\') => out.push(part),
            _ => return None,
        }
        any = true;
    }
    any.then_some(out)
}

/// Expands the command-line inputs into (file path, entry name) pairs.
/// Directories are walked recursively in name order.
pub fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<(PathBuf, String)>, CliError> {
    let mut files = Vec::new();
    for input in inputs {
        let meta = std::fs::metadata(input).map_err(|e| CliError::io(input, e))?;
        if !meta.is_dir() {
            files.push(input.clone());
            continue;
        }
        for item in WalkDir::new(input).sort_by_file_name() {
            let item = item.map_err(|e| {
                let path = e.path().unwrap_or(input).to_path_buf();
                CliError::io(path, e.into())
            })?;
            if item.file_type().is_file() {
                files.push(item.into_path());
            }
        }
    }
    files
        .into_iter()
        .map(|f| match entry_name(&f) {
            Some(name) => Ok((f, name)),
            None => Err(CliError::Usage(format!("{}: cannot derive an entry name", f.display()))),
        })
        .collect()
}
