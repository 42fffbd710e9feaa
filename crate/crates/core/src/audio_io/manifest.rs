use std::collections::{HashMap, HashSet};
use std::io::Write;

use super::AudioError;
use crate::Label;

const BASE_HEADER: [&str; 4] = ["clip_id", "path", "subject_id", "label"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub path: String,
    pub subject_id: String,
    pub label: Label,
    pub fold: Option<usize>,
}

/// Validated clip list: unique clip ids, one label per subject.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, AudioError> {
        Self::validated(entries, None)
    }

    /// `lines` maps entries to source lines for diagnostics; without it the
    /// 1-based row number is reported.
    fn validated(entries: Vec<ManifestEntry>, lines: Option<&[usize]>) -> Result<Self, AudioError> {
        let mut seen = HashSet::new();
        let mut subject_labels: HashMap<&str, Label> = HashMap::new();
        let with_fold = entries.iter().filter(|e| e.fold.is_some()).count();
        for (i, e) in entries.iter().enumerate() {
            let line = lines.map_or(i + 1, |l| l[i]);
            if !seen.insert(e.clip_id.as_str()) {
                return Err(manifest_err(
                    line,
                    format!("duplicate clip_id {:?}", e.clip_id),
                ));
            }
            match subject_labels.get(e.subject_id.as_str()) {
                Some(&l) if l != e.label => {
                    return Err(manifest_err(
                        line,
                        format!(
                            "inconsistent subject label: subject {:?} is both {l} and {}",
                            e.subject_id, e.label
                        ),
                    ))
                }
                Some(_) => {}
                None => {
                    subject_labels.insert(&e.subject_id, e.label);
                }
            }
        }
        if with_fold != 0 && with_fold != entries.len() {
            return Err(manifest_err(
                0,
                "fold column must be filled for every row or for none".to_string(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_folds(&self) -> bool {
        self.entries.first().is_some_and(|e| e.fold.is_some())
    }

    /// Subjects in order of first appearance, with their label and clip count.
    pub fn subjects(&self) -> Vec<(String, Label, usize)> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut out: Vec<(String, Label, usize)> = Vec::new();
        for e in &self.entries {
            match index.get(e.subject_id.as_str()) {
                Some(&i) => out[i].2 += 1,
                None => {
                    index.insert(&e.subject_id, out.len());
                    out.push((e.subject_id.clone(), e.label, 1));
                }
            }
        }
        out
    }

    /// Copy in which every clip is its own subject. Used to contrast
    /// grouped with clip-level cross-validation.
    pub fn ungrouped(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| ManifestEntry {
                subject_id: e.clip_id.clone(),
                fold: None,
                ..e.clone()
            })
            .collect();
        Self { entries }
    }

    /// Copy with the fold column dropped.
    pub fn without_folds(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| ManifestEntry {
                fold: None,
                ..e.clone()
            })
            .collect();
        Self { entries }
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        let folds = self.has_folds();
        let _ = write!(out, "{}", BASE_HEADER.join(","));
        if folds {
            let _ = write!(out, ",fold");
        }
        let _ = writeln!(out);
        for e in &self.entries {
            let _ = write!(out, "{},{},{},{}", e.clip_id, e.path, e.subject_id, e.label);
            if let Some(f) = e.fold {
                let _ = write!(out, ",{f}");
            }
            let _ = writeln!(out);
        }
        String::from_utf8(out).expect("manifest fields are UTF-8")
    }
}

fn manifest_err(line: usize, message: String) -> AudioError {
    AudioError::Manifest { line, message }
}

/// Parses manifest CSV text.
///
/// The header must be exactly `clip_id,path,subject_id,label`, optionally
/// followed by `fold`. Lines starting with `#` are ignored.
pub fn load_manifest(text: &str) -> Result<Manifest, AudioError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| manifest_err(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let has_fold = match names.as_slice() {
        [a, b, c, d] if [*a, *b, *c, *d] == BASE_HEADER => false,
        [a, b, c, d, "fold"] if [*a, *b, *c, *d] == BASE_HEADER => true,
        _ => {
            return Err(manifest_err(
                1,
                format!(
                    "missing columns: header must be clip_id,path,subject_id,label[,fold], got {}",
                    names.join(",")
                ),
            ))
        }
    };
    let width = names.len();

    let mut entries = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| manifest_err(0, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(manifest_err(
                line,
                format!(
                    "missing columns: expected {width} fields, got {}",
                    record.len()
                ),
            ));
        }
        let label: Label = record[3].parse().map_err(|m| manifest_err(line, m))?;
        let fold =
            if has_fold && !record[4].is_empty() {
                Some(record[4].parse::<usize>().map_err(|_| {
                    manifest_err(line, format!("invalid fold index {:?}", &record[4]))
                })?)
            } else {
                None
            };
        for (i, field) in record.iter().take(3).enumerate() {
            if field.is_empty() {
                return Err(manifest_err(line, format!("empty {}", BASE_HEADER[i])));
            }
        }
        lines.push(line);
        entries.push(ManifestEntry {
            clip_id: record[0].to_string(),
            path: record[1].to_string(),
            subject_id: record[2].to_string(),
            label,
            fold,
        });
    }
    Manifest::validated(entries, Some(&lines))
}
