use std::collections::BTreeMap;

use super::{BoxCoder, PostprocError};

/// Prior box in center form, normalized to the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub cy: f32,
    pub cx: f32,
    pub h: f32,
    pub w: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapAnchors {
    pub grid_h: usize,
    pub grid_w: usize,
    pub scale: f32,
    pub aspect_ratios: Vec<f32>,
}

impl FeatureMapAnchors {
    pub fn anchors_per_location(&self) -> usize {
        self.aspect_ratios.len()
    }

    pub fn count(&self) -> usize {
        self.grid_h * self.grid_w * self.anchors_per_location()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorConfig {
    pub feature_maps: Vec<FeatureMapAnchors>,
    pub coder: BoxCoder,
}

impl AnchorConfig {
    /// One feature map with the default box coder.
    pub fn single(grid_h: usize, grid_w: usize, scale: f32, aspect_ratios: &[f32]) -> Self {
        Self {
            feature_maps: vec![FeatureMapAnchors {
                grid_h,
                grid_w,
                scale,
                aspect_ratios: aspect_ratios.to_vec(),
            }],
            coder: BoxCoder::default(),
        }
    }

    pub fn num_anchors(&self) -> usize {
        self.feature_maps.iter().map(FeatureMapAnchors::count).sum()
    }

    pub fn validate(&self) -> Result<(), PostprocError> {
        let bad = |m: String| Err(PostprocError::InvalidAnchorConfig(m));
        if self.feature_maps.is_empty() {
            return bad("no feature maps".into());
        }
        for (i, fm) in self.feature_maps.iter().enumerate() {
            if fm.grid_h == 0 || fm.grid_w == 0 {
                return bad(format!("feature map {i} has an empty grid"));
            }
            if !(fm.scale.is_finite() && fm.scale > 0.0) {
                return bad(format!("feature map {i} scale {} must be positive", fm.scale));
            }
            if fm.aspect_ratios.is_empty() || fm.aspect_ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return bad(format!("feature map {i} aspect ratios {:?} must be positive", fm.aspect_ratios));
            }
        }
        if self.coder.scales().iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad(format!("box coder scales {:?} must be positive", self.coder.scales()));
        }
        Ok(())
    }

    /// Key/value form stored in a model's metadata section.
    ///
    /// ```text
    /// anchors.maps            = 2
    /// anchors.<i>.grid        = <h>x<w>
    /// anchors.<i>.scale       = <real>
    /// anchors.<i>.aspect_ratios = <real>,<real>,...
    /// anchors.box_coder       = <y>,<x>,<h>,<w>
    /// ```
    pub fn to_metadata(&self) -> Vec<(String, String)> {
        let mut kv = vec![("anchors.maps".to_string(), self.feature_maps.len().to_string())];
        for (i, fm) in self.feature_maps.iter().enumerate() {
            kv.push((format!("anchors.{i}.grid"), format!("{}x{}", fm.grid_h, fm.grid_w)));
            kv.push((format!("anchors.{i}.scale"), fm.scale.to_string()));
            kv.push((format!("anchors.{i}.aspect_ratios"), join(&fm.aspect_ratios)));
        }
        kv.push(("anchors.box_coder".to_string(), join(&self.coder.scales())));
        kv
    }

    pub fn from_metadata(meta: &BTreeMap<String, String>) -> Result<Self, PostprocError> {
        let get = |k: &str| {
            meta.get(k)
                .ok_or_else(|| PostprocError::InvalidAnchorConfig(format!("missing metadata key {k}")))
        };
        let maps: usize = parse(get("anchors.maps")?, "anchors.maps")?;
        let mut feature_maps = Vec::with_capacity(maps);
        for i in 0..maps {
            let grid_key = format!("anchors.{i}.grid");
            let grid = get(&grid_key)?;
            let (h, w) = grid
                .split_once('x')
                .ok_or_else(|| PostprocError::InvalidAnchorConfig(format!("{grid_key}: expected <h>x<w>, got {grid}")))?;
            let scale_key = format!("anchors.{i}.scale");
            let ratios_key = format!("anchors.{i}.aspect_ratios");
            feature_maps.push(FeatureMapAnchors {
                grid_h: parse(h, &grid_key)?,
                grid_w: parse(w, &grid_key)?,
                scale: parse(get(&scale_key)?, &scale_key)?,
                aspect_ratios: parse_list(get(&ratios_key)?, &ratios_key)?,
            });
        }
        let coder = parse_list(get("anchors.box_coder")?, "anchors.box_coder")?;
        let coder: [f32; 4] = coder
            .try_into()
            .map_err(|_| PostprocError::InvalidAnchorConfig("anchors.box_coder needs 4 values".into()))?;
        let cfg = Self {
            feature_maps,
            coder: BoxCoder::new(coder),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn join(v: &[f32]) -> String {
    v.iter().map(f32::to_string).collect::<Vec<_>>().join(",")
}

fn parse<T: std::str::FromStr>(s: &str, key: &str) -> Result<T, PostprocError> {
    s.trim()
        .parse()
        .map_err(|_| PostprocError::InvalidAnchorConfig(format!("{key}: cannot parse {s:?}")))
}

fn parse_list(s: &str, key: &str) -> Result<Vec<f32>, PostprocError> {
    s.split(',').map(|p| parse(p, key)).collect()
}

/// Anchors for every feature map in config order; within a map, row-major
/// over the grid, then one anchor per aspect ratio. Ratio `r` gives
/// `h = scale / sqrt(r)` and `w = scale * sqrt(r)`.
pub fn generate_anchors(cfg: &AnchorConfig) -> Vec<Anchor> {
    let mut out = Vec::with_capacity(cfg.num_anchors());
    for fm in &cfg.feature_maps {
        for i in 0..fm.grid_h {
            let cy = (i as f32 + 0.5) / fm.grid_h as f32;
            for j in 0..fm.grid_w {
                let cx = (j as f32 + 0.5) / fm.grid_w as f32;
                for &r in &fm.aspect_ratios {
                    let sr = r.sqrt();
                    out.push(Anchor {
                        cy,
                        cx,
                        h: fm.scale / sr,
                        w: fm.scale * sr,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_unit_case() {
        let a = generate_anchors(&AnchorConfig::single(1, 1, 0.5, &[1.0]));
        assert_eq!(a, vec![Anchor { cy: 0.5, cx: 0.5, h: 0.5, w: 0.5 }]);
    }

    #[test]
    fn two_by_two_grid_centers() {
        let a = generate_anchors(&AnchorConfig::single(2, 2, 0.3, &[1.0]));
        let centers: Vec<(f32, f32)> = a.iter().map(|a| (a.cy, a.cx)).collect();
        assert_eq!(centers, vec![(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]);
    }

    #[test]
    fn fixture_layout_count() {
        let cfg = AnchorConfig {
            feature_maps: vec![
                FeatureMapAnchors { grid_h: 4, grid_w: 4, scale: 0.3, aspect_ratios: vec![1.0, 2.0, 0.5] },
                FeatureMapAnchors { grid_h: 2, grid_w: 2, scale: 0.6, aspect_ratios: vec![1.0, 2.0, 0.5] },
            ],
            coder: BoxCoder::default(),
        };
        assert_eq!(generate_anchors(&cfg).len(), 60);
        assert_eq!(cfg.num_anchors(), 60);
        assert_eq!(generate_anchors(&cfg), generate_anchors(&cfg));
    }

    #[test]
    fn aspect_ratio_shapes() {
        let a = generate_anchors(&AnchorConfig::single(1, 1, 0.4, &[4.0]));
        assert_eq!((a[0].h, a[0].w), (0.2, 0.8));
    }

    #[test]
    fn metadata_roundtrip() {
        let cfg = AnchorConfig {
            feature_maps: vec![
                FeatureMapAnchors { grid_h: 4, grid_w: 3, scale: 0.3, aspect_ratios: vec![1.0, 2.0, 0.5] },
                FeatureMapAnchors { grid_h: 2, grid_w: 2, scale: 0.65, aspect_ratios: vec![1.0 / 3.0] },
            ],
            coder: BoxCoder::new([10.0, 10.0, 5.0, 5.0]),
        };
        let meta: BTreeMap<String, String> = cfg.to_metadata().into_iter().collect();
        assert_eq!(AnchorConfig::from_metadata(&meta).unwrap(), cfg);
    }

    #[test]
    fn metadata_errors() {
        let mut meta: BTreeMap<String, String> =
            AnchorConfig::single(2, 2, 0.3, &[1.0]).to_metadata().into_iter().collect();
        meta.insert("anchors.0.scale".into(), "-1".into());
        assert!(AnchorConfig::from_metadata(&meta).is_err());
        meta.remove("anchors.0.scale");
        assert!(AnchorConfig::from_metadata(&meta).is_err());
    }
}
