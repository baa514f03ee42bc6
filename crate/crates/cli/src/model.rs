//! JSON model files.
//!
//! A polyhedron is written as explicit rows `[a₁, …, aₙ, b]` meaning
//! `aᵀx ≤ b` (key `le`) or `aᵀx = b` (key `eq`). Matrices are row-major.
//! Expressions use the flow-module grammar over `x1 … xn`.

use std::path::Path;

use nalgebra::DMatrix;
use reachkit::facelift::InitialSet;
use reachkit::flow::Dynamics;
use reachkit::geometry::{Face, Halfspace, Polyhedron};
use reachkit::hybrid::{AffineReset, Edge, Event, EventKind, HybridSystem, Location};
use reachkit::polyapprox::BoundMode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("model kind is {found}, but the command needs {expected}")]
    WrongKind { expected: &'static str, found: &'static str },
    #[error("missing section `{0}`")]
    Missing(&'static str),
    #[error("{what}: expected length {expected}, found {found}")]
    Length {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("{0}: value is not finite")]
    NotFinite(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Reach,
    ReachInv,
    Polyapprox,
    Hybrid,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Reach => "reach",
            ProblemKind::ReachInv => "reach-inv",
            ProblemKind::Polyapprox => "polyapprox",
            ProblemKind::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsDef {
    /// `ẋ = Ax`, row-major.
    Matrix(Vec<Vec<f64>>),
    /// One expression per component.
    Field(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyDef {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub le: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eq: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSetDef {
    /// `ℓ(x)`, with `ℓ ≤ 0` inside.
    pub expr: String,
    /// Search box.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDef {
    Polyhedron(PolyDef),
    LevelSet(LevelSetDef),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDef {
    /// Horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Time step Δ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Cell size h.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_spacing: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    #[serde(default)]
    pub under_approximate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_mode: Option<BoundMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyapproxDef {
    /// δ₀; defaults to half the outflow margin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    /// Bloat hull intersection in 2D (default on).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bloat: Option<bool>,
    /// Lattice size for sampled bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationDef {
    pub name: String,
    pub invariant: PolyDef,
    pub dynamics: DynamicsDef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetDef {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDef {
    pub from: String,
    pub to: String,
    pub guard: PolyDef,
    pub event: String,
    /// Controllable (Σ_c) or disturbance (Σ_d) event.
    #[serde(default)]
    pub controllable: bool,
    /// Identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset: Option<ResetDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSet {
    pub location: String,
    pub set: PolyDef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridDef {
    pub locations: Vec<LocationDef>,
    #[serde(default)]
    pub edges: Vec<EdgeDef>,
    pub init: Vec<StateSet>,
    pub target: Vec<StateSet>,
    pub max_k: usize,
    /// Per-location horizon inside Post.
    pub tau_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: u32,
    pub kind: ProblemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsDef>,
    /// X₀, or the face F₀ for `polyapprox` (one `eq` row).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<PolyDef>,
    #[serde(default)]
    pub grid: GridDef,
    #[serde(default)]
    pub flags: Flags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polyapprox: Option<PolyapproxDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid: Option<HybridDef>,
}

fn finite(what: &str, v: f64) -> Result<f64, ModelError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NotFinite(what.into()))
    }
}

fn positive(what: &str, v: Option<f64>) -> Result<(), ModelError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(ModelError::Invalid(format!("{what} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

fn check_len(what: String, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::Length { what, expected, found })
    }
}

fn row(what: &str, r: &[f64], dim: usize) -> Result<Halfspace, ModelError> {
    check_len(format!("{what} row"), dim + 1, r.len())?;
    for v in r {
        finite(what, *v)?;
    }
    Ok(Halfspace::new(r[..dim].to_vec(), r[dim]))
}

impl PolyDef {
    pub fn to_polyhedron(&self, what: &str, dim: usize) -> Result<Polyhedron, ModelError> {
        let mut p = Polyhedron::universe(dim);
        for r in &self.le {
            p.push_le(row(what, r, dim)?);
        }
        for r in &self.eq {
            p.push_eq(row(what, r, dim)?);
        }
        Ok(p)
    }

    pub fn from_polyhedron(p: &Polyhedron) -> Self {
        let rows = |hs: &[Halfspace]| {
            hs.iter()
                .map(|h| h.normal.iter().copied().chain([h.offset]).collect())
                .collect()
        };
        Self {
            le: rows(&p.inequalities),
            eq: rows(&p.equalities),
        }
    }

    /// F₀: the `le` rows are the sides, the single `eq` row is the base
    /// (its normal must point in the outflow direction).
    pub fn to_face(&self, what: &str, dim: usize) -> Result<Face, ModelError> {
        if self.eq.len() != 1 {
            return Err(ModelError::Invalid(format!(
                "{what}: a face needs exactly one `eq` row, found {}",
                self.eq.len()
            )));
        }
        let base = row(what, &self.eq[0], dim)?;
        let sides = self.le.iter().map(|r| row(what, r, dim)).collect::<Result<Vec<_>, _>>()?;
        Ok(Face::new(
            sides.iter().map(|h| h.normal.clone()).collect(),
            sides.iter().map(|h| h.offset).collect(),
            base.normal,
            base.offset,
        ))
    }
}

impl DynamicsDef {
    pub fn build(&self, dim: usize) -> Result<Dynamics, ModelError> {
        match self {
            DynamicsDef::Matrix(rows) => Dynamics::linear(matrix("dynamics matrix", rows, dim)?)
                .map_err(|e| ModelError::Invalid(format!("dynamics: {e}"))),
            DynamicsDef::Field(exprs) => {
                check_len("dynamics field".into(), dim, exprs.len())?;
                Dynamics::nonlinear(exprs).map_err(|e| ModelError::Invalid(format!("dynamics: {e}")))
            }
        }
    }
}

fn matrix(what: &str, rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>, ModelError> {
    check_len(format!("{what} rows"), dim, rows.len())?;
    let mut flat = Vec::with_capacity(dim * dim);
    for r in rows {
        check_len(format!("{what} row"), dim, r.len())?;
        for v in r {
            flat.push(finite(what, *v)?);
        }
    }
    Ok(DMatrix::from_row_slice(dim, dim, &flat))
}

impl InitialDef {
    pub fn build(&self, dim: usize) -> Result<InitialSet, ModelError> {
        match self {
            InitialDef::Polyhedron(p) => Ok(InitialSet::Poly(p.to_polyhedron("initial", dim)?)),
            InitialDef::LevelSet(l) => {
                check_len("level set lo".into(), dim, l.lo.len())?;
                check_len("level set hi".into(), dim, l.hi.len())?;
                let s = InitialSet::level_set(&l.expr, l.lo.clone(), l.hi.clone())
                    .map_err(|e| ModelError::Invalid(format!("initial level set: {e}")))?;
                if s.dim() != dim {
                    return Err(ModelError::Length {
                        what: "level set variables".into(),
                        expected: dim,
                        found: s.dim(),
                    });
                }
                Ok(s)
            }
        }
    }
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let m: ModelFile = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn require_kind(&self, expected: ProblemKind) -> Result<(), ModelError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(ModelError::WrongKind {
                expected: expected.as_str(),
                found: self.kind.as_str(),
            })
        }
    }

    pub fn dynamics(&self) -> Result<Dynamics, ModelError> {
        self.dynamics.as_ref().ok_or(ModelError::Missing("dynamics"))?.build(self.dim)
    }

    pub fn initial_set(&self) -> Result<InitialSet, ModelError> {
        self.initial.as_ref().ok_or(ModelError::Missing("initial"))?.build(self.dim)
    }

    pub fn face(&self) -> Result<Face, ModelError> {
        match self.initial.as_ref().ok_or(ModelError::Missing("initial"))? {
            InitialDef::Polyhedron(p) => p.to_face("initial", self.dim),
            InitialDef::LevelSet(_) => Err(ModelError::Invalid("polyapprox needs a polyhedral face".into())),
        }
    }

    pub fn invariant(&self) -> Result<Polyhedron, ModelError> {
        self.invariant
            .as_ref()
            .ok_or(ModelError::Missing("invariant"))?
            .to_polyhedron("invariant", self.dim)
    }

    /// Builds the hybrid system plus its initial and target sets.
    #[allow(clippy::type_complexity)]
    pub fn hybrid_system(&self) -> Result<(HybridSystem, Vec<(usize, Polyhedron)>), ModelError> {
        let h = self.hybrid.as_ref().ok_or(ModelError::Missing("hybrid"))?;
        let n = self.dim;
        let locations = h
            .locations
            .iter()
            .map(|l| {
                Ok(Location {
                    name: l.name.clone(),
                    invariant: l.invariant.to_polyhedron(&format!("invariant of {}", l.name), n)?,
                    dynamics: l.dynamics.build(n)?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let index = |name: &str| {
            h.locations
                .iter()
                .position(|l| l.name == name)
                .ok_or_else(|| ModelError::Invalid(format!("unknown location `{name}`")))
        };
        let edges = h
            .edges
            .iter()
            .map(|e| {
                let reset = match &e.reset {
                    None => AffineReset::identity(n),
                    Some(r) => {
                        check_len("reset offset".into(), n, r.offset.len())?;
                        AffineReset {
                            matrix: matrix("reset matrix", &r.matrix, n)?,
                            offset: r.offset.clone(),
                        }
                    }
                };
                Ok(Edge {
                    from: index(&e.from)?,
                    to: index(&e.to)?,
                    guard: e.guard.to_polyhedron("guard", n)?,
                    event: Event {
                        label: e.event.clone(),
                        kind: if e.controllable {
                            EventKind::Controllable
                        } else {
                            EventKind::Disturbance
                        },
                    },
                    reset,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let sets = |v: &[StateSet], what: &str| {
            v.iter()
                .map(|s| Ok((index(&s.location)?, s.set.to_polyhedron(what, n)?)))
                .collect::<Result<Vec<_>, ModelError>>()
        };
        let init = sets(&h.init, "init")?;
        let target = sets(&h.target, "target")?;
        let sys = HybridSystem::new(n, locations, edges, init).map_err(|e| ModelError::Invalid(e.to_string()))?;
        Ok((sys, target))
    }

    /// Schema version, required sections per kind, and dimensions.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ModelError::Schema(self.schema));
        }
        if self.dim == 0 {
            return Err(ModelError::Invalid("dim must be at least 1".into()));
        }
        positive("grid.dt", self.grid.dt)?;
        positive("grid.cell", self.grid.cell)?;
        positive("grid.boundary_spacing", self.grid.boundary_spacing)?;
        if let Some(t) = self.grid.tau {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(ModelError::Invalid(format!("grid.tau must be non-negative, got {t}")));
            }
        }
        match self.kind {
            ProblemKind::Reach | ProblemKind::ReachInv => {
                self.dynamics()?;
                self.initial_set()?;
                if self.kind == ProblemKind::ReachInv {
                    self.invariant()?;
                }
            }
            ProblemKind::Polyapprox => {
                self.dynamics()?;
                self.face()?;
                if let Some(p) = &self.polyapprox {
                    positive("polyapprox.delta0", p.delta0)?;
                }
            }
            ProblemKind::Hybrid => {
                let h = self.hybrid.as_ref().ok_or(ModelError::Missing("hybrid"))?;
                if !(h.tau_q > 0.0 && h.tau_q.is_finite()) {
                    return Err(ModelError::Invalid(format!("hybrid.tau_q must be positive, got {}", h.tau_q)));
                }
                let (_, target) = self.hybrid_system()?;
                if target.is_empty() {
                    return Err(ModelError::Missing("hybrid.target"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REACH: &str = r#"{
        "schema": 1, "kind": "reach", "dim": 2,
        "dynamics": {"field": ["1", "1"]},
        "initial": {"polyhedron": {"le": [[1, 0, 1], [-1, 0, 0], [0, 1, 1], [0, -1, 0]]}},
        "grid": {"tau": 1, "dt": 0.5, "cell": 0.05}
    }"#;

    #[test]
    fn parses_reach_model() {
        let m = ModelFile::parse(REACH).unwrap();
        assert_eq!(m.kind, ProblemKind::Reach);
        let s = m.initial_set().unwrap();
        assert!(s.contains(&[0.5, 0.5]));
        assert!(!s.contains(&[1.5, 0.5]));
        assert_eq!(m.dynamics().unwrap().field(&[0.0, 0.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_rows_and_schema() {
        let short = REACH.replace("[1, 0, 1],", "[1, 0],");
        assert!(matches!(ModelFile::parse(&short), Err(ModelError::Length { .. })));
        let schema = REACH.replace("\"schema\": 1", "\"schema\": 7");
        assert!(matches!(ModelFile::parse(&schema), Err(ModelError::Schema(7))));
        let inv = REACH.replace("\"reach\"", "\"reach-inv\"");
        assert!(matches!(ModelFile::parse(&inv), Err(ModelError::Missing("invariant"))));
        let extra = REACH.replace("\"dim\": 2,", "\"dim\": 2, \"colour\": 3,");
        assert!(matches!(ModelFile::parse(&extra), Err(ModelError::Json(_))));
        let bad_expr = REACH.replace("\"1\", \"1\"", "\"1 +\", \"1\"");
        assert!(matches!(ModelFile::parse(&bad_expr), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn face_needs_one_equality() {
        let p = PolyDef {
            le: vec![vec![1.0, 0.0, 2.0]],
            eq: vec![],
        };
        assert!(p.to_face("f", 2).is_err());
        let p = PolyDef {
            le: vec![vec![1.0, 0.0, 2.0], vec![-1.0, 0.0, -1.0]],
            eq: vec![vec![0.0, 1.0, 0.0]],
        };
        let f = p.to_face("f", 2).unwrap();
        assert_eq!(f.k(), 3);
        assert_eq!(f.base_normal, vec![0.0, 1.0]);
    }

    #[test]
    fn polyhedron_round_trip() {
        let p = Polyhedron::from_box(&[0.0, -1.0], &[2.0, 1.0]);
        let back = PolyDef::from_polyhedron(&p).to_polyhedron("p", 2).unwrap();
        assert_eq!(back, p);
    }
}
