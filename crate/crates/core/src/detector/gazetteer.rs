use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::model::EntityClass;
use crate::text;

use super::DetectorError;

/// Known surface forms for one entity class, stored case-folded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gazetteer {
    pub class: EntityClass,
    pub entries: BTreeSet<String>,
    pub source: PathBuf,
}

impl Gazetteer {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.entries.contains(&text::fold(surface))
    }

    /// Parses newline-delimited entries; blank lines and `#` comments are skipped.
    pub fn parse(contents: &str, class: EntityClass, source: impl Into<PathBuf>) -> Result<Self, DetectorError> {
        let source = source.into();
        let mut entries = BTreeSet::new();
        for (lineno, line) in contents.lines().enumerate() {
            let entry = line.trim();
            if entry.is_empty() || entry.starts_with('#') {
                continue;
            }
            if !entry.chars().any(text::is_word_char) {
                return Err(DetectorError::MalformedGazetteer {
                    path: source,
                    line: lineno + 1,
                    reason: "entry has no letters or digits".into(),
                });
            }
            entries.insert(text::fold(entry));
        }
        if entries.is_empty() {
            return Err(DetectorError::EmptyGazetteer { path: source });
        }
        Ok(Self { class, entries, source })
    }

    pub fn from_entries<I, S>(class: EntityClass, entries: I) -> Result<Self, DetectorError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let joined: Vec<String> = entries.into_iter().map(|e| e.as_ref().to_string()).collect();
        Self::parse(&joined.join("\n"), class, "<inline>")
    }
}

/// Loads a gazetteer file. Unreadable, non-UTF-8, malformed or empty files are
/// configuration errors.
pub fn load_gazetteer(path: impl AsRef<Path>, class: EntityClass) -> Result<Gazetteer, DetectorError> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path)
        .map_err(|e| DetectorError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let gaz = Gazetteer::parse(&contents, class, path)?;
    log::debug!("loaded {} {} entries from {}", gaz.len(), gaz.class, path.display());
    Ok(gaz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents).unwrap();
        f
    }

    #[test]
    fn dedup_after_case_fold() {
        let f = write_tmp(b"Chicago\nchicago\nPalo Alto\n");
        let g = load_gazetteer(f.path(), EntityClass::Gpe).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.contains("CHICAGO"));
        assert!(g.entries.contains("palo alto"));
    }

    #[test]
    fn three_distinct_cities() {
        let f = write_tmp(b"# cities\nChicago\n\nBoston\nDenver\n");
        assert_eq!(load_gazetteer(f.path(), EntityClass::Gpe).unwrap().len(), 3);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp(b"");
        assert!(matches!(load_gazetteer(f.path(), EntityClass::Gpe), Err(DetectorError::EmptyGazetteer { .. })));
        let f = write_tmp(b"# only a comment\n\n");
        assert!(matches!(load_gazetteer(f.path(), EntityClass::Gpe), Err(DetectorError::EmptyGazetteer { .. })));
    }

    #[test]
    fn unreadable_and_malformed_files() {
        assert!(matches!(
            load_gazetteer("/nonexistent/gaz.txt", EntityClass::Gpe),
            Err(DetectorError::Io { .. })
        ));
        let f = write_tmp(b"Chicago\n\xff\xfe\n");
        assert!(matches!(load_gazetteer(f.path(), EntityClass::Gpe), Err(DetectorError::Io { .. })));
        let f = write_tmp(b"Chicago\n---\n");
        assert!(matches!(
            load_gazetteer(f.path(), EntityClass::Gpe),
            Err(DetectorError::MalformedGazetteer { line: 2, .. })
        ));
    }
}
