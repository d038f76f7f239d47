use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, GroundTruth};
use crate::model::Label;
use crate::postproc::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub label: Label,
    pub ymin: f32,
    pub xmin: f32,
    pub ymax: f32,
    pub xmax: f32,
}

impl GtBox {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.ymin, self.xmin, self.ymax, self.xmax)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            bbox: self.bbox(),
            class_id: self.label.class_id(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub image: PathBuf,
    pub boxes: Vec<GtBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: Split,
    pub entries: Vec<ManifestEntry>,
}

/// Labels are read as strings first so an unknown label gets its own error.
#[derive(Deserialize)]
struct RawBox {
    label: String,
    ymin: f32,
    xmin: f32,
    ymax: f32,
    xmax: f32,
}

#[derive(Deserialize)]
struct RawEntry {
    image: PathBuf,
    boxes: Vec<RawBox>,
}

#[derive(Deserialize)]
struct RawManifest {
    split: Split,
    entries: Vec<RawEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), EvalError> {
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !seen.insert(&e.image) {
                return Err(EvalError::DuplicateImage {
                    entry: i,
                    image: e.image.display().to_string(),
                });
            }
            for b in &e.boxes {
                let coords = [b.ymin, b.xmin, b.ymax, b.xmax];
                if !coords.iter().all(|v| v.is_finite()) || !b.bbox().is_normalized() {
                    return Err(EvalError::InvalidBox {
                        entry: i,
                        image: e.image.display().to_string(),
                        detail: format!(
                            "({}, {}, {}, {}) must satisfy 0 <= min < max <= 1",
                            b.ymin, b.xmin, b.ymax, b.xmax
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest, EvalError> {
    let raw: RawManifest = serde_json::from_str(text).map_err(|e| EvalError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut entries = Vec::with_capacity(raw.entries.len());
    for (i, e) in raw.entries.into_iter().enumerate() {
        let boxes = e
            .boxes
            .into_iter()
            .map(|b| {
                let label = Label::parse(&b.label).ok_or_else(|| EvalError::UnknownLabel {
                    entry: i,
                    label: b.label.clone(),
                })?;
                Ok(GtBox {
                    label,
                    ymin: b.ymin,
                    xmin: b.xmin,
                    ymax: b.ymax,
                    xmax: b.xmax,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        let image = if e.image.is_absolute() { e.image } else { base.join(e.image) };
        entries.push(ManifestEntry { image, boxes });
    }
    let m = DatasetManifest {
        split: raw.split,
        entries,
    };
    m.validate()?;
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, EvalError> {
    let bytes = std::fs::read(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let text = std::str::from_utf8(&bytes).map_err(|e| {
        let valid = &bytes[..e.valid_up_to()];
        let line_start = valid.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        EvalError::Parse {
            line: 1 + valid.iter().filter(|&&b| b == b'\n').count(),
            column: 1 + valid.len() - line_start,
            message: "invalid UTF-8".into(),
        }
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(text, base)
}
