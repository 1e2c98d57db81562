//! Image manifests: a CSV with a `path` column plus free-form metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::tables::TableError;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// Resolved against the manifest's directory when relative.
    pub path: PathBuf,
    pub fields: BTreeMap<String, String>,
}

impl ManifestRow {
    pub fn get(&self, column: &str) -> Option<&str> {
        self.fields.get(column).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Column names other than `path`, in file order.
    pub columns: Vec<String>,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    /// Loads a manifest and checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(std::fs::File::open(path)?, &base)
    }

    pub fn parse(input: impl std::io::Read, base: &Path) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Err(TableError::MissingHeader);
        }
        let path_col = headers
            .iter()
            .position(|h| h == "path")
            .ok_or_else(|| TableError::MissingColumn("path".into()))?;
        let columns: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != path_col)
            .map(|(_, h)| h.to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let raw = PathBuf::from(&rec[path_col]);
            let path = if raw.is_absolute() { raw } else { base.join(raw) };
            if !path.is_file() {
                return Err(TableError::Row {
                    line,
                    message: format!("referenced file {} does not exist", path.display()),
                });
            }
            let fields = headers
                .iter()
                .zip(rec.iter())
                .enumerate()
                .filter(|(i, _)| *i != path_col)
                .map(|(_, (h, v))| (h.to_string(), v.to_string()))
                .collect();
            rows.push(ManifestRow { path, fields });
        }
        Ok(Self { columns, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.pgm"), b"x").unwrap();
        let m = dir.path().join("m.csv");
        std::fs::write(&m, "path,label\na.pgm,1\n").unwrap();
        let man = Manifest::load(&m).unwrap();
        assert_eq!(man.columns, vec!["label"]);
        assert_eq!(man.rows[0].get("label"), Some("1"));
        assert_eq!(man.rows[0].path, dir.path().join("a.pgm"));

        std::fs::write(&m, "path,label\nmissing.pgm,1\n").unwrap();
        assert!(matches!(Manifest::load(&m), Err(TableError::Row { line: 2, .. })));
        std::fs::write(&m, "file,label\na.pgm,1\n").unwrap();
        assert!(matches!(Manifest::load(&m), Err(TableError::MissingColumn(_))));
    }
}
