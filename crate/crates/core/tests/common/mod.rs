use std::fs;
use std::path::{Path, PathBuf};

use pcplod::cli::run_from;

pub fn run(args: &[&str]) {
    let mut full = vec!["pcplod"];
    full.extend_from_slice(args);
    run_from(full).unwrap_or_else(|e| panic!("{args:?}: {e}"));
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path and bytes of every CSV below `root`, sorted by path.
pub fn csv_files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                out.push((
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

pub fn replicate_dirs(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for cell in fs::read_dir(root).unwrap() {
        let cell = cell.unwrap().path();
        if cell.is_dir() {
            for rep in fs::read_dir(&cell).unwrap() {
                out.push(rep.unwrap().path());
            }
        }
    }
    out.sort();
    out
}
