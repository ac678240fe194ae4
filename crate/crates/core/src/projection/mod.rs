//! Bregman projections onto intersections of affine pieces and per-block
//! confidence cones, via Dykstra's algorithm with dual corrections.

mod affine;
mod dykstra;
mod ellipsoid;
mod euclid;
mod feasible;
pub mod potential;

pub use affine::{Halfspace, Hyperplane};
pub use dykstra::{dykstra, DykstraConfig, DykstraReport, DykstraState};
pub use ellipsoid::{BlockGeometry, EllipsoidOutcome, EllipsoidSlice, OccupancyEllipsoid};
pub use euclid::{lin_opt_ellipsoid, project_halfspace_euclid, project_hyperplane_euclid};
pub use feasible::{build_feasible_set, ConfidenceSet, FeasibleSet, MembershipReport};
pub use potential::{kl_divergence, MirrorMap, ENTROPY_FLOOR};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Solver used for KL projections onto affine pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolver {
    /// Closed forms where available, otherwise Newton on the dual.
    #[default]
    DualNewton,
    /// Projected gradient with Euclidean sub-projections.
    ProjectedGradient,
}

/// Solver used for the bound-constrained row problem of confidence pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EllipsoidSolver {
    /// Newton on the Lagrange multiplier of the ellipsoid constraint.
    #[default]
    Multiplier,
    /// Frank-Wolfe with the closed-form linear oracle.
    FrankWolfe,
}

/// Tolerances for a single-piece projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig {
    pub solver: InnerSolver,
    pub ellipsoid: EllipsoidSolver,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            solver: InnerSolver::DualNewton,
            ellipsoid: EllipsoidSolver::Multiplier,
            tol: 1e-13,
            max_iters: 100_000,
        }
    }
}

/// One convex piece of a decomposed feasible set.
#[derive(Debug, Clone)]
pub enum ConstraintPiece {
    Hyperplane(Hyperplane),
    Halfspace(Halfspace),
    OccupancyEllipsoid(OccupancyEllipsoid),
}

/// What happened during one piece projection.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PieceOutcome {
    pub iterations: usize,
    pub clipped: bool,
    pub empty: bool,
}

impl ConstraintPiece {
    pub fn coords(&self) -> &[usize] {
        match self {
            ConstraintPiece::Hyperplane(p) => p.coords(),
            ConstraintPiece::Halfspace(p) => p.coords(),
            ConstraintPiece::OccupancyEllipsoid(p) => p.coords(),
        }
    }

    /// Whether Dykstra needs to keep a correction for this piece. Corrections
    /// of affine pieces lie in their normal space and cancel.
    pub fn needs_correction(&self) -> bool {
        !matches!(self, ConstraintPiece::Hyperplane(_))
    }

    /// Constraint violation on the values at this piece's coordinates.
    pub fn residual_local(&self, x: &[f64]) -> f64 {
        match self {
            ConstraintPiece::Hyperplane(p) => p.residual_local(x),
            ConstraintPiece::Halfspace(p) => p.residual_local(x),
            ConstraintPiece::OccupancyEllipsoid(p) => p.residual_local(x),
        }
    }

    /// Constraint violation on a full vector.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let local: Vec<f64> = self.coords().iter().map(|&j| x[j]).collect();
        self.residual_local(&local)
    }

    /// Bregman projection of `target` (values at this piece's coordinates).
    pub fn project(
        &self,
        target: &[f64],
        out: &mut [f64],
        map: &MirrorMap,
        inner: &InnerConfig,
    ) -> Result<PieceOutcome> {
        match (self, map) {
            (ConstraintPiece::Hyperplane(p), MirrorMap::Entropy { .. }) => {
                let iterations = p.project_kl(target, out, inner)?;
                Ok(PieceOutcome {
                    iterations,
                    ..Default::default()
                })
            }
            (ConstraintPiece::Halfspace(p), MirrorMap::Entropy { .. }) => {
                let iterations = p.project_kl(target, out, inner)?;
                Ok(PieceOutcome {
                    iterations,
                    ..Default::default()
                })
            }
            (ConstraintPiece::OccupancyEllipsoid(p), MirrorMap::Entropy { .. }) => {
                let o = p.project_kl(target, out, inner)?;
                Ok(PieceOutcome {
                    iterations: o.iterations,
                    clipped: o.clipped,
                    empty: o.empty,
                })
            }
            (ConstraintPiece::Hyperplane(p), MirrorMap::Euclidean) => {
                p.project_euclid(target, out)?;
                Ok(PieceOutcome::default())
            }
            (ConstraintPiece::Halfspace(p), MirrorMap::Euclidean) => {
                p.project_euclid(target, out)?;
                Ok(PieceOutcome::default())
            }
            (ConstraintPiece::OccupancyEllipsoid(_), MirrorMap::Euclidean) => Err(Error::Config(
                "confidence pieces are only supported under the entropy potential".into(),
            )),
        }
    }
}
