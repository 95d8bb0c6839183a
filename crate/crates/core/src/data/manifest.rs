//! Sample lists: UTF-8, one `image<TAB>labels` pair per line, `#` comments,
//! paths relative to the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{load_sample, LoadError, Sample};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    /// Resolved (image, labels) paths.
    pub entries: Vec<(PathBuf, PathBuf)>,
}

impl Manifest {
    pub fn parse(text: &str, root: &Path, origin: &Path) -> Result<Self, LoadError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = |detail: String| LoadError::Manifest { path: origin.into(), line: i + 1, detail };
            let mut parts = line.split('\t');
            let (Some(img), Some(lbl), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected exactly two TAB-separated paths".into()));
            };
            let (img, lbl) = (root.join(img.trim()), root.join(lbl.trim()));
            for p in [&img, &lbl] {
                if !p.is_file() {
                    return Err(bad(format!("{} does not exist", p.display())));
                }
            }
            entries.push((img, lbl));
        }
        if entries.is_empty() {
            return Err(LoadError::EmptyManifest { path: origin.into() });
        }
        Ok(Manifest { root: root.into(), entries })
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &root, path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loads every sample in manifest order.
    pub fn load_all(&self, classes: usize) -> Result<Vec<Sample>, LoadError> {
        self.entries.iter().map(|(i, l)| load_sample(i, l, classes)).collect()
    }

    /// Manifest text for relative paths.
    pub fn render(pairs: &[(String, String)]) -> String {
        let mut out = String::from("# image\tlabels\n");
        for (i, l) in pairs {
            let _ = writeln!(out, "{i}\t{l}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_relative_paths_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.ppm"), b"").unwrap();
        fs::write(dir.path().join("a.pgm"), b"").unwrap();
        let text = "# header\n\na.ppm\ta.pgm\n";
        let m = Manifest::parse(text, dir.path(), Path::new("m.tsv")).unwrap();
        assert_eq!(m.entries, vec![(dir.path().join("a.ppm"), dir.path().join("a.pgm"))]);
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        let origin = Path::new("m.tsv");
        assert!(matches!(Manifest::parse("# only\n", dir.path(), origin), Err(LoadError::EmptyManifest { .. })));
        assert!(matches!(
            Manifest::parse("x.ppm\ty.pgm\n", dir.path(), origin),
            Err(LoadError::Manifest { line: 1, .. })
        ));
        assert!(matches!(Manifest::parse("only-one\n", dir.path(), origin), Err(LoadError::Manifest { .. })));
    }
}
