//! Tube export: one CSV per segment plus a JSON manifest.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ReachTube, SegmentSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSegment {
    pub index: usize,
    pub t0: f64,
    pub t1: f64,
    pub delta: f64,
    pub file: String,
    /// "grid" or "polyhedra".
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeManifest {
    pub dim: usize,
    pub h: f64,
    pub mode: String,
    pub status: String,
    pub times: Vec<f64>,
    pub initial: String,
    pub segments: Vec<ManifestSegment>,
}

fn segment_csv(set: &SegmentSet, index: &str, mode: &str, dim: usize) -> String {
    let mut s = String::new();
    match set {
        SegmentSet::Grid(g) => {
            s.push_str("segment,mode");
            for j in 0..dim {
                let _ = write!(s, ",x{}", j + 1);
            }
            s.push('\n');
            for c in g.cells() {
                let _ = write!(s, "{index},{mode}");
                for v in g.center(c) {
                    let _ = write!(s, ",{v}");
                }
                s.push('\n');
            }
        }
        SegmentSet::Polyhedra(ps) => {
            s.push_str("segment,piece,kind");
            for j in 0..dim {
                let _ = write!(s, ",a{}", j + 1);
            }
            s.push_str(",offset\n");
            for (k, p) in ps.iter().enumerate() {
                let rows = p
                    .inequalities
                    .iter()
                    .map(|r| ("le", r))
                    .chain(p.equalities.iter().map(|r| ("eq", r)));
                for (kind, r) in rows {
                    let _ = write!(s, "{index},{k},{kind}");
                    for v in &r.normal {
                        let _ = write!(s, ",{v}");
                    }
                    let _ = writeln!(s, ",{}", r.offset);
                }
            }
        }
    }
    s
}

fn kind(set: &SegmentSet) -> &'static str {
    match set {
        SegmentSet::Grid(_) => "grid",
        SegmentSet::Polyhedra(_) => "polyhedra",
    }
}

/// Writes `initial.csv`, `segment_NNNN.csv` and `manifest.json` into `dir`
/// (created if missing). Returns the manifest path.
pub fn write_tube(tube: &ReachTube, dir: &Path) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mode = tube.direction.as_str();
    std::fs::write(dir.join("initial.csv"), segment_csv(&tube.initial, "initial", mode, tube.dim))?;
    let mut segments = Vec::new();
    for (i, seg) in tube.segments.iter().enumerate() {
        let file = format!("segment_{i:04}.csv");
        std::fs::write(dir.join(&file), segment_csv(&seg.set, &i.to_string(), mode, tube.dim))?;
        segments.push(ManifestSegment {
            index: i,
            t0: seg.t0,
            t1: seg.t1,
            delta: seg.t1 - seg.t0,
            file,
            kind: kind(&seg.set).into(),
        });
    }
    let manifest = TubeManifest {
        dim: tube.dim,
        h: tube.h,
        mode: mode.into(),
        status: tube.status.as_str().into(),
        times: tube.times(),
        initial: "initial.csv".into(),
        segments,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
    std::fs::write(&path, json)?;
    Ok(path)
}
