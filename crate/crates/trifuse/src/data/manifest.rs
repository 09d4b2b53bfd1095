//! Tab-separated dataset manifests.
//!
//! One row per sample: `id<TAB>split<TAB>label<TAB>image_path<TAB>text`.
//! The text field is last so it may itself contain tabs; `image_path`
//! is `-` for text-only samples and is interpreted relative to the
//! manifest's directory. Blank lines and lines starting with `#` are
//! skipped.

use crate::data::split::Split;
use crate::error::{Error, Result};
use crate::fusion::IntentLabel;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_HEADER: &str = "# id\tsplit\tlabel\timage_path\ttext";

/// No-image marker in the `image_path` column.
const NO_IMAGE: &str = "-";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub split: Split,
    pub label: IntentLabel,
    /// Path relative to the manifest file's directory, if the sample
    /// has an image.
    pub image_path: Option<PathBuf>,
    pub text: String,
}

/// Parses manifest text. `source` names the file in error messages.
pub fn parse_manifest(source: &str, contents: &str) -> Result<Vec<ManifestRow>> {
    let mut rows = Vec::new();
    let mut first_line_of: std::collections::HashMap<String, usize> =
        std::collections::HashMap::new();
    for (lineno, line) in contents.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.splitn(5, '\t');
        let (Some(id), Some(split), Some(label), Some(image), Some(text)) = (
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
        ) else {
            return Err(Error::parse(
                source,
                format!(
                    "line {lineno}: expected 5 tab-separated fields, got {:?}",
                    line
                ),
            ));
        };
        if id.is_empty() {
            return Err(Error::parse(
                source,
                format!("line {lineno}: empty sample id"),
            ));
        }
        if let Some(first) = first_line_of.insert(id.to_string(), lineno) {
            return Err(Error::parse(
                source,
                format!("duplicate sample id {id:?} on lines {first} and {lineno}"),
            ));
        }
        let split =
            Split::parse(split).map_err(|e| Error::parse(source, format!("line {lineno}: {e}")))?;
        let label = label
            .parse::<IntentLabel>()
            .map_err(|e| Error::parse(source, format!("line {lineno}: {e}")))?;
        let image_path = if image == NO_IMAGE {
            None
        } else {
            Some(PathBuf::from(image))
        };
        rows.push(ManifestRow {
            id: id.to_string(),
            split,
            label,
            image_path,
            text: text.to_string(),
        });
    }
    Ok(rows)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&path.display().to_string(), &contents)
}

/// Renders rows back to manifest text (with the comment header).
pub fn render_manifest(rows: &[ManifestRow]) -> String {
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for row in rows {
        let image = row
            .image_path
            .as_ref()
            .map_or_else(|| NO_IMAGE.to_string(), |p| p.display().to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            row.id,
            row.split.name(),
            row.label.name().to_lowercase(),
            image,
            row.text
        );
    }
    out
}

pub fn save_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    std::fs::write(path, render_manifest(rows)).map_err(|e| Error::io(path, e))
}

/// Checks that every referenced image exists relative to `base_dir`,
/// reporting all missing files at once.
pub fn verify_images(base_dir: &Path, rows: &[ManifestRow]) -> Result<()> {
    let missing: Vec<String> = rows
        .iter()
        .filter_map(|row| {
            let rel = row.image_path.as_ref()?;
            let full = base_dir.join(rel);
            (!full.is_file()).then(|| format!("{} (sample {})", full.display(), row.id))
        })
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::data(format!(
            "{} missing image file(s):\n{}",
            missing.len(),
            missing.join("\n")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<ManifestRow> {
        vec![
            ManifestRow {
                id: "s0".into(),
                split: Split::Train,
                label: IntentLabel::Informative,
                image_path: Some(PathBuf::from("images/s0.ppm")),
                text: "launch day photos".into(),
            },
            ManifestRow {
                id: "s1".into(),
                split: Split::Val,
                label: IntentLabel::Controversial,
                image_path: None,
                text: "text\twith a tab".into(),
            },
        ]
    }

    #[test]
    fn round_trips_through_text() {
        let rows = sample_rows();
        let text = render_manifest(&rows);
        let back = parse_manifest("mem", &text).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn text_field_may_contain_tabs() {
        let rows = parse_manifest("mem", "a\ttrain\tpromotive\t-\tx\ty\tz\n").unwrap();
        assert_eq!(rows[0].text, "x\ty\tz");
        assert_eq!(rows[0].image_path, None);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# header\n\n# more\ns0\ttest\texpressive\t-\thi\n";
        let rows = parse_manifest("mem", text).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].split, Split::Test);
    }

    #[test]
    fn duplicate_ids_name_both_lines() {
        let text = "a\ttrain\tinformative\t-\tone\n# c\na\tval\tinformative\t-\ttwo\n";
        let err = parse_manifest("m.tsv", text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lines 1 and 3"), "{msg}");
        assert!(msg.contains("m.tsv"), "{msg}");
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let err = parse_manifest("m.tsv", "a\ttrain\tinformative\t-\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");

        let err = parse_manifest("m.tsv", "a\tvalidation\tinformative\t-\tx\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        assert!(err.to_string().contains("validation"), "{err}");

        let err = parse_manifest("m.tsv", "a\ttrain\tjokey\t-\tx\n").unwrap_err();
        assert!(err.to_string().contains("jokey"), "{err}");
    }

    #[test]
    fn file_round_trip_and_image_verification() {
        let dir = std::env::temp_dir().join(format!("manifest_test_{}", std::process::id()));
        std::fs::create_dir_all(dir.join("images")).unwrap();
        let rows = sample_rows();
        let path = dir.join("manifest.tsv");
        save_manifest(&path, &rows).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(rows, back);

        let err = verify_images(&dir, &back).unwrap_err();
        assert!(err.to_string().contains("s0.ppm"), "{err}");
        std::fs::write(dir.join("images/s0.ppm"), b"placeholder").unwrap();
        verify_images(&dir, &back).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
