//! Plot data: CSV tables and static SVG drawings of tubes and polygons.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use reachkit::facelift::TubeManifest;
use reachkit::geometry::{GeometryError, Halfspace, Polyhedron};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row tag for the bloated-hull rows of a piece.
pub const BLOAT_GROUP: &str = "bloat";

const SVG_SIZE: f64 = 800.0;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("plotting supports dimension 2 only, got {dim}")]
    DimUnsupported { dim: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed plot input: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed csv {file}: {detail}")]
    Csv { file: String, detail: String },
    #[error("unrecognised plot input {0}")]
    Unrecognised(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PlotFormat {
    Csv,
    Svg,
}

/// One assembled row with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyRow {
    pub group: String,
    pub index: usize,
    /// Bound value used by the row, if any.
    pub l: Option<f64>,
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyPiece {
    pub t0: f64,
    pub t1: f64,
    pub rows: Vec<PolyRow>,
    /// Vertices of the final polygon (2D only), counter-clockwise.
    pub vertices: Vec<Vec<f64>>,
}

/// The `polyhedron.json` file written by `polyapprox`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFile {
    pub dim: usize,
    pub mode: String,
    pub pieces: Vec<PolyPiece>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentShape {
    /// Cell centers.
    Cells(Vec<Vec<f64>>),
    /// Polygon vertex lists.
    Polygons(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubePlot {
    pub dim: usize,
    pub h: f64,
    /// `(segment id, shape)`, the initial set first.
    pub segments: Vec<(String, SegmentShape)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotInput {
    Tube(TubePlot),
    Poly(PolyFile),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSummary {
    pub files: Vec<PathBuf>,
    /// Data rows written to the CSV (header excluded).
    pub csv_rows: usize,
    /// Assembled rows drawn as candidate edges.
    pub candidate_edges: usize,
    /// Assembled rows supporting an edge of their polygon.
    pub active_edges: usize,
}

/// Reads a tube manifest (or a directory holding `manifest.json`) or a
/// `polyhedron.json` file.
pub fn load_plot_input(path: &Path) -> Result<PlotInput, PlotError> {
    let path = if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    if v.get("segments").is_some() {
        let m: TubeManifest = serde_json::from_value(v)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        load_tube(&m, dir).map(PlotInput::Tube)
    } else if v.get("pieces").is_some() {
        Ok(PlotInput::Poly(serde_json::from_value(v)?))
    } else {
        Err(PlotError::Unrecognised(path.display().to_string()))
    }
}

fn parse_csv(dir: &Path, file: &str, dim: usize) -> Result<SegmentShape, PlotError> {
    let text = std::fs::read_to_string(dir.join(file))?;
    let bad = |detail: String| PlotError::Csv {
        file: file.into(),
        detail,
    };
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}")));
    if header.starts_with("segment,mode") {
        let mut cells = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != dim + 2 {
                return Err(bad(format!("expected {} fields in `{line}`", dim + 2)));
            }
            cells.push(f[2..].iter().map(|s| num(s)).collect::<Result<Vec<_>, _>>()?);
        }
        Ok(SegmentShape::Cells(cells))
    } else if header.starts_with("segment,piece,kind") {
        let mut pieces: Vec<Polyhedron> = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != dim + 4 {
                return Err(bad(format!("expected {} fields in `{line}`", dim + 4)));
            }
            let piece: usize = f[1].parse().map_err(|_| bad(format!("piece index `{}`", f[1])))?;
            while pieces.len() <= piece {
                pieces.push(Polyhedron::universe(dim));
            }
            let vals = f[3..].iter().map(|s| num(s)).collect::<Result<Vec<_>, _>>()?;
            let h = Halfspace::new(vals[..dim].to_vec(), vals[dim]);
            match f[2] {
                "le" => pieces[piece].push_le(h),
                "eq" => pieces[piece].push_eq(h),
                k => return Err(bad(format!("row kind `{k}`"))),
            }
        }
        if dim != 2 {
            return Err(PlotError::DimUnsupported { dim });
        }
        let polys = pieces
            .iter()
            .map(|p| p.vertices_2d())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SegmentShape::Polygons(polys))
    } else {
        Err(bad(format!("unknown header `{header}`")))
    }
}

fn load_tube(m: &TubeManifest, dir: &Path) -> Result<TubePlot, PlotError> {
    let mut segments = vec![("initial".to_string(), parse_csv(dir, &m.initial, m.dim)?)];
    for s in &m.segments {
        segments.push((s.index.to_string(), parse_csv(dir, &s.file, m.dim)?));
    }
    Ok(TubePlot {
        dim: m.dim,
        h: m.h,
        segments,
    })
}

fn piece_polyhedron(rows: &[PolyRow], dim: usize, with_bloat: bool) -> Polyhedron {
    let hs = rows
        .iter()
        .filter(|r| with_bloat || r.group != BLOAT_GROUP)
        .map(|r| Halfspace::new(r.normal.clone(), r.offset))
        .collect();
    Polyhedron::from_inequalities(dim, hs)
}

/// Rows that are tight at two or more vertices of `vertices`.
pub fn active_rows(rows: &[Halfspace], vertices: &[Vec<f64>]) -> usize {
    rows.iter()
        .filter(|h| {
            let scale = 1e-7 * (1.0 + h.offset.abs());
            vertices.iter().filter(|v| h.eval(v).abs() <= scale).count() >= 2
        })
        .count()
}

fn tube_csv(t: &TubePlot) -> (String, usize) {
    let mut s = String::from("segment,kind,piece");
    for j in 0..t.dim {
        let _ = write!(s, ",x{}", j + 1);
    }
    s.push('\n');
    let mut rows = 0;
    let mut emit = |s: &mut String, id: &str, kind: &str, piece: usize, p: &[f64]| {
        let _ = write!(s, "{id},{kind},{piece}");
        for v in p {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
        rows += 1;
    };
    for (id, shape) in &t.segments {
        match shape {
            SegmentShape::Cells(cs) => {
                for c in cs {
                    emit(&mut s, id, "cell", 0, c);
                }
            }
            SegmentShape::Polygons(ps) => {
                for (k, poly) in ps.iter().enumerate() {
                    for v in poly {
                        emit(&mut s, id, "vertex", k, v);
                    }
                }
            }
        }
    }
    (s, rows)
}

fn poly_csv(p: &PolyFile) -> (String, usize) {
    let mut s = String::from("piece,vertex,x1,x2\n");
    let mut rows = 0;
    for (k, piece) in p.pieces.iter().enumerate() {
        for (j, v) in piece.vertices.iter().enumerate() {
            let _ = writeln!(s, "{k},{j},{},{}", v[0], v[1]);
            rows += 1;
        }
    }
    (s, rows)
}

/// Axis box `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy)]
struct View {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl View {
    fn around(points: impl Iterator<Item = [f64; 2]>, pad: f64) -> View {
        let mut v = View {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for [x, y] in points {
            v.x0 = v.x0.min(x);
            v.x1 = v.x1.max(x);
            v.y0 = v.y0.min(y);
            v.y1 = v.y1.max(y);
        }
        if !v.x0.is_finite() {
            return View {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            };
        }
        let span = (v.x1 - v.x0).max(v.y1 - v.y0).max(1e-9);
        let (cx, cy) = (0.5 * (v.x0 + v.x1), 0.5 * (v.y0 + v.y1));
        let half = 0.5 * span * (1.0 + 2.0 * pad);
        View {
            x0: cx - half,
            x1: cx + half,
            y0: cy - half,
            y1: cy + half,
        }
    }

    fn scale(&self) -> f64 {
        SVG_SIZE / (self.x1 - self.x0)
    }

    fn map(&self, p: &[f64]) -> (f64, f64) {
        let s = self.scale();
        ((p[0] - self.x0) * s, (self.y1 - p[1]) * s)
    }

    /// The part of the line `aᵀx = b` inside the view.
    fn clip(&self, h: &Halfspace) -> Option<([f64; 2], [f64; 2])> {
        let (a, b) = ((h.normal[0], h.normal[1]), h.offset);
        let mut pts: Vec<[f64; 2]> = Vec::new();
        if a.1.abs() > 1e-12 {
            for x in [self.x0, self.x1] {
                let y = (b - a.0 * x) / a.1;
                if y >= self.y0 - 1e-12 && y <= self.y1 + 1e-12 {
                    pts.push([x, y]);
                }
            }
        }
        if a.0.abs() > 1e-12 {
            for y in [self.y0, self.y1] {
                let x = (b - a.1 * y) / a.0;
                if x >= self.x0 - 1e-12 && x <= self.x1 + 1e-12 {
                    pts.push([x, y]);
                }
            }
        }
        let dir = [-a.1, a.0];
        let key = |p: &[f64; 2]| p[0] * dir[0] + p[1] * dir[1];
        let lo = pts.iter().copied().min_by(|p, q| key(p).total_cmp(&key(q)))?;
        let hi = pts.iter().copied().max_by(|p, q| key(p).total_cmp(&key(q)))?;
        Some((lo, hi))
    }
}

fn svg_open(s: &mut String) {
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
}

fn palette(i: usize) -> String {
    // golden-angle hue steps keep neighbouring segments apart
    format!("hsl({:.0},65%,50%)", (i as f64 * 137.508) % 360.0)
}

fn group_colour(group: &str) -> &'static str {
    match group {
        "rotated-lower" => "#1f77b4",
        "bottom-support" => "#2ca02c",
        "cap" => "#ff7f0e",
        "slab" => "#9467bd",
        "rotated-upper" => "#17becf",
        "top-support" => "#8c564b",
        "cap-prime" => "#e377c2",
        "slab-prime" => "#7f7f7f",
        BLOAT_GROUP => "#bcbd22",
        _ => "#000000",
    }
}

fn polygon_points(view: &View, poly: &[Vec<f64>]) -> String {
    poly.iter()
        .map(|v| {
            let (x, y) = view.map(v);
            format!("{x:.3},{y:.3}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn tube_svg(t: &TubePlot) -> String {
    let half = 0.5 * t.h;
    let all = t.segments.iter().flat_map(|(_, s)| -> Vec<[f64; 2]> {
        match s {
            SegmentShape::Cells(cs) => cs
                .iter()
                .flat_map(|c| [[c[0] - half, c[1] - half], [c[0] + half, c[1] + half]])
                .collect(),
            SegmentShape::Polygons(ps) => ps.iter().flatten().map(|v| [v[0], v[1]]).collect(),
        }
    });
    let view = View::around(all, 0.05);
    let side = t.h * view.scale();
    let mut s = String::new();
    svg_open(&mut s);
    // later segments are drawn first so the initial set stays on top
    for (i, (id, shape)) in t.segments.iter().enumerate().rev() {
        let colour = palette(i);
        let _ = writeln!(s, "<g id=\"segment-{id}\" fill=\"{colour}\" fill-opacity=\"0.5\" stroke=\"{colour}\">");
        match shape {
            SegmentShape::Cells(cs) => {
                for c in cs {
                    let (x, y) = view.map(&[c[0] - half, c[1] + half]);
                    let _ = writeln!(
                        s,
                        "<rect x=\"{x:.3}\" y=\"{y:.3}\" width=\"{side:.3}\" height=\"{side:.3}\" stroke=\"none\"/>"
                    );
                }
            }
            SegmentShape::Polygons(ps) => {
                for poly in ps {
                    let _ = writeln!(s, "<polygon points=\"{}\"/>", polygon_points(&view, poly));
                }
            }
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

fn poly_svg(p: &PolyFile) -> Result<(String, usize, usize), PlotError> {
    let mut candidate = 0;
    let mut active = 0;
    let mut outlines = Vec::new();
    for piece in &p.pieces {
        let asm = piece_polyhedron(&piece.rows, 2, false);
        let v = asm.vertices_2d()?;
        candidate += asm.inequalities.len();
        active += active_rows(&asm.inequalities, &v);
        outlines.push(v);
    }
    let pts = outlines.iter().chain(p.pieces.iter().map(|q| &q.vertices)).flatten();
    let view = View::around(pts.map(|v| [v[0], v[1]]), 0.3);
    let mut s = String::new();
    svg_open(&mut s);
    for (k, piece) in p.pieces.iter().enumerate() {
        let _ = writeln!(s, "<g id=\"piece-{k}\">");
        let mut groups: Vec<&str> = Vec::new();
        for r in &piece.rows {
            if !groups.contains(&r.group.as_str()) {
                groups.push(&r.group);
            }
        }
        for g in groups {
            let dash = if g == BLOAT_GROUP { "2,4" } else { "8,4" };
            let _ = writeln!(
                s,
                "<g class=\"{g}\" stroke=\"{}\" stroke-dasharray=\"{dash}\" fill=\"none\">",
                group_colour(g)
            );
            for r in piece.rows.iter().filter(|r| r.group == g) {
                let h = Halfspace::new(r.normal.clone(), r.offset);
                if let Some((a, b)) = view.clip(&h) {
                    let (x1, y1) = view.map(&a);
                    let (x2, y2) = view.map(&b);
                    let _ = writeln!(
                        s,
                        "<line data-index=\"{}\" x1=\"{x1:.3}\" y1=\"{y1:.3}\" x2=\"{x2:.3}\" y2=\"{y2:.3}\"/>",
                        r.index
                    );
                }
            }
            s.push_str("</g>\n");
        }
        let _ = writeln!(
            s,
            "<polygon class=\"assembled\" points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"3\"/>",
            polygon_points(&view, &outlines[k])
        );
        let _ = writeln!(
            s,
            "<polygon class=\"result\" points=\"{}\" fill=\"#d62728\" fill-opacity=\"0.25\" stroke=\"#d62728\"/>",
            polygon_points(&view, &piece.vertices)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok((s, candidate, active))
}

/// Writes `plot.csv` or `plot.svg` into `out_dir`.
pub fn emit_plot(input: &PlotInput, format: PlotFormat, out_dir: &Path) -> Result<PlotSummary, PlotError> {
    let dim = match input {
        PlotInput::Tube(t) => t.dim,
        PlotInput::Poly(p) => p.dim,
    };
    if dim != 2 {
        return Err(PlotError::DimUnsupported { dim });
    }
    std::fs::create_dir_all(out_dir)?;
    let mut summary = PlotSummary {
        files: Vec::new(),
        csv_rows: 0,
        candidate_edges: 0,
        active_edges: 0,
    };
    let (name, body) = match (input, format) {
        (PlotInput::Tube(t), PlotFormat::Csv) => {
            let (s, n) = tube_csv(t);
            summary.csv_rows = n;
            ("plot.csv", s)
        }
        (PlotInput::Poly(p), PlotFormat::Csv) => {
            let (s, n) = poly_csv(p);
            summary.csv_rows = n;
            ("plot.csv", s)
        }
        (PlotInput::Tube(t), PlotFormat::Svg) => ("plot.svg", tube_svg(t)),
        (PlotInput::Poly(p), PlotFormat::Svg) => {
            let (s, c, a) = poly_svg(p)?;
            summary.candidate_edges = c;
            summary.active_edges = a;
            ("plot.svg", s)
        }
    };
    let path = out_dir.join(name);
    std::fs::write(&path, body)?;
    summary.files.push(path);
    Ok(summary)
}
