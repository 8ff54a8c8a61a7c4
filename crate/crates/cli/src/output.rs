//! Numeric formatting and file emission (CSV, JSON).

use crate::{CliError, CliResult};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// A float with 17 significant digits (round-trip safe).
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Simple CSV table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Output directory resolution: explicit flag, then `DEUL_OUT`, then the configuration file.
pub fn resolve_out_dir(flag: Option<&Path>, env: Option<&str>, config: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| config.map(Path::to_path_buf))
}

/// Writes `contents` to `dir/name`, creating the directory.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Config(format!("cannot serialize report: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_roundtrip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mant = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mant.len(), 17);
        }
    }

    #[test]
    fn out_dir_precedence() {
        let f = Path::new("flag");
        let c = Path::new("cfg");
        assert_eq!(resolve_out_dir(Some(f), Some("env"), Some(c)).unwrap(), PathBuf::from("flag"));
        assert_eq!(resolve_out_dir(None, Some("env"), Some(c)).unwrap(), PathBuf::from("env"));
        assert_eq!(resolve_out_dir(None, None, Some(c)).unwrap(), PathBuf::from("cfg"));
        assert_eq!(resolve_out_dir(None, Some(""), None), None);
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        assert_eq!(t.to_csv(), "a,b\n1,2\n");
    }
}
