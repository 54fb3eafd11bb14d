//! CSV manifests of labeled face crops.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{DataError, Result};

use super::augment::Recipe;

/// Columns every manifest must carry, in the order they are written.
pub const COLUMNS: [&str; 6] = ["path", "video", "frame", "valence", "arousal", "expression"];
/// Optional seventh column holding an augmentation recipe.
pub const AUGMENT_COLUMN: &str = "augment";

/// Marks a sample as an augmented copy of another sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Augmentation {
    /// Index of the source sample in the same list.
    pub source: usize,
    pub recipe: Recipe,
}

/// One labeled face crop.
///
/// Augmented samples share path, video and frame with their source.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub path: PathBuf,
    pub video: String,
    pub frame: u64,
    pub valence: f32,
    pub arousal: f32,
    /// `None` when the crop has no categorical label.
    pub expression: Option<usize>,
    pub augmentation: Option<Augmentation>,
}

impl Sample {
    pub fn new(path: impl Into<PathBuf>, video: impl Into<String>, frame: u64, valence: f32, arousal: f32, expression: Option<usize>) -> Self {
        Self { path: path.into(), video: video.into(), frame, valence, arousal, expression, augmentation: None }
    }

    pub fn is_augmented(&self) -> bool {
        self.augmentation.is_some()
    }

    /// A copy of `self` that refers back to `source` and carries `recipe`.
    pub fn augmented(&self, source: usize, recipe: Recipe) -> Self {
        Self { augmentation: Some(Augmentation { source, recipe }), ..self.clone() }
    }

    fn csv_row(&self, with_augment: bool) -> String {
        let mut row = format!(
            "{},{},{},{},{},{}",
            self.path.display(),
            self.video,
            self.frame,
            self.valence,
            self.arousal,
            self.expression.map(|e| e.to_string()).unwrap_or_default()
        );
        if with_augment {
            row.push(',');
            if let Some(a) = &self.augmentation {
                row.push_str(&a.recipe.to_string());
            }
        }
        row
    }
}

/// Parse manifest text. Line numbers in errors are 1-based and count the header.
pub fn parse_manifest_str(text: &str) -> Result<Vec<Sample>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(DataError::MissingColumn(COLUMNS[0]).into());
    };
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut index = [0usize; 6];
    for (slot, col) in index.iter_mut().zip(COLUMNS) {
        *slot = names.iter().position(|n| *n == col).ok_or(DataError::MissingColumn(col))?;
    }
    let augment_index = names.iter().position(|n| *n == AUGMENT_COLUMN);

    let mut samples = Vec::new();
    let mut lines_of = Vec::new();
    let mut seen: HashMap<(String, u64), usize> = HashMap::new();
    for (i, raw) in lines {
        let line = i + 1;
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() < names.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", names.len(), fields.len())));
        }
        let get = |k: usize| fields[index[k]];
        let frame = get(2).parse::<u64>().map_err(|e| parse_err(line, format!("frame `{}`: {e}", get(2))))?;
        let number = |k: usize| -> Result<f32> {
            let v = get(k).parse::<f32>().map_err(|e| parse_err(line, format!("{} `{}`: {e}", COLUMNS[k], get(k))))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line, format!("{} is not finite", COLUMNS[k])))
            }
        };
        let valence = number(3)?;
        let arousal = number(4)?;
        let expression = match get(5) {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|e| parse_err(line, format!("expression `{s}`: {e}")))?),
        };
        let mut sample = Sample::new(get(0), get(1), frame, valence, arousal, expression);
        let key = (sample.video.clone(), frame);
        match augment_index.map(|k| fields[k]).filter(|s| !s.is_empty()) {
            Some(recipe) => {
                let recipe = recipe.parse::<Recipe>().map_err(|_| parse_err(line, format!("bad augmentation recipe `{recipe}`")))?;
                let source = *seen.get(&key).ok_or_else(|| {
                    parse_err(line, format!("augmented row has no earlier original (video `{}`, frame {frame})", key.0))
                })?;
                sample.augmentation = Some(Augmentation { source, recipe });
            }
            None => {
                if let Some(&first) = seen.get(&key) {
                    return Err(DataError::Duplicate { video: key.0, frame, first_line: lines_of[first], second_line: line }.into());
                }
                seen.insert(key, samples.len());
            }
        }
        samples.push(sample);
        lines_of.push(line);
    }
    Ok(samples)
}

fn parse_err(line: usize, message: String) -> crate::error::Error {
    DataError::Parse { line, message }.into()
}

pub fn parse_manifest(path: &Path) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.into(), source })?;
    parse_manifest_str(&text)
}

/// Render samples as manifest text. The `augment` column appears only if needed.
pub fn manifest_to_string(samples: &[Sample]) -> String {
    let with_augment = samples.iter().any(Sample::is_augmented);
    let mut out = COLUMNS.join(",");
    if with_augment {
        out.push(',');
        out.push_str(AUGMENT_COLUMN);
    }
    out.push('\n');
    for s in samples {
        let _ = writeln!(out, "{}", s.csv_row(with_augment));
    }
    out
}

pub fn write_manifest(path: &Path, samples: &[Sample]) -> Result<()> {
    std::fs::write(path, manifest_to_string(samples)).map_err(|source| DataError::Io { path: path.into(), source }.into())
}
