use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{dykstra, BlockGeometry, ConstraintPiece, DykstraConfig, DykstraReport, Hyperplane};
use super::{MirrorMap, OccupancyEllipsoid};
use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_spd, quad_norm};
use crate::mdp::{LinearMixtureModel, OccupancyMeasure, SupportLayout};

/// `{theta : ||theta - center||_gram <= radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub center: DVector<f64>,
    pub gram: DMatrix<f64>,
    pub radius: f64,
}

impl ConfidenceSet {
    pub fn new(center: DVector<f64>, gram: DMatrix<f64>, radius: f64) -> Result<Self> {
        let d = center.len();
        if gram.nrows() != d || gram.ncols() != d {
            return Err(Error::ShapeMismatch("confidence set dimensions".into()));
        }
        if !(radius >= 0.0) {
            return Err(Error::param("radius", format!("must be >= 0, got {radius}")));
        }
        Ok(Self {
            center,
            gram,
            radius,
        })
    }

    /// Degenerate set `{theta}`.
    pub fn point(theta: DVector<f64>) -> Self {
        let d = theta.len();
        Self {
            center: theta,
            gram: DMatrix::identity(d, d),
            radius: 0.0,
        }
    }

    pub fn distance(&self, theta: &DVector<f64>) -> f64 {
        quad_norm(&self.gram, &(theta - &self.center))
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        self.distance(theta) <= self.radius
    }
}

/// Constraint residuals of an occupancy measure against a feasible set.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MembershipReport {
    pub normalization: f64,
    pub flow: f64,
    pub initial: f64,
    pub negativity: f64,
    pub ellipsoid: f64,
}

impl MembershipReport {
    pub fn max(&self) -> f64 {
        self.normalization
            .max(self.flow)
            .max(self.initial)
            .max(self.negativity)
            .max(self.ellipsoid)
    }
}

/// Decomposed feasible set of occupancy measures for one episode.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    layout: Arc<SupportLayout>,
    pieces: Vec<ConstraintPiece>,
    num_affine: usize,
    confidence: Option<ConfidenceSet>,
}

impl FeasibleSet {
    /// Normalization, flow and initial-state pieces only.
    pub fn affine(layout: Arc<SupportLayout>) -> Result<Self> {
        let pieces = affine_pieces(&layout)?;
        let num_affine = pieces.len();
        Ok(Self {
            layout,
            pieces,
            num_affine,
            confidence: None,
        })
    }

    pub fn layout(&self) -> &Arc<SupportLayout> {
        &self.layout
    }
    pub fn pieces(&self) -> &[ConstraintPiece] {
        &self.pieces
    }
    pub fn affine_pieces(&self) -> &[ConstraintPiece] {
        &self.pieces[..self.num_affine]
    }
    pub fn confidence_pieces(&self) -> &[ConstraintPiece] {
        &self.pieces[self.num_affine..]
    }
    pub fn confidence(&self) -> Option<&ConfidenceSet> {
        self.confidence.as_ref()
    }

    pub fn membership(&self, z: &OccupancyMeasure) -> MembershipReport {
        let r = z.residuals();
        let ellipsoid = self
            .confidence_pieces()
            .iter()
            .map(|p| p.residual(z.values()))
            .fold(0.0f64, f64::max);
        MembershipReport {
            normalization: r.normalization,
            flow: r.flow,
            initial: r.initial,
            negativity: r.negativity,
            ellipsoid,
        }
    }

    pub fn contains(&self, z: &OccupancyMeasure, tol: f64) -> bool {
        self.membership(z).max() <= tol
    }

    /// Entropic Bregman projection of `w` onto the set, renormalized per stage.
    pub fn project(
        &self,
        w: &OccupancyMeasure,
        cfg: &DykstraConfig,
    ) -> Result<(OccupancyMeasure, DykstraReport)> {
        if !Arc::ptr_eq(w.layout(), &self.layout) && **w.layout() != *self.layout {
            return Err(Error::ShapeMismatch(
                "occupancy layout differs from the feasible set".into(),
            ));
        }
        let start: Vec<f64> = w.values().iter().map(|&x| x.max(f64::MIN_POSITIVE)).collect();
        let (x, report) = dykstra(&self.pieces, &start, MirrorMap::default(), cfg)?;
        let mut z = OccupancyMeasure::new(self.layout.clone(), x)?;
        z.normalize_stages();
        Ok((z, report))
    }
}

fn affine_pieces(layout: &SupportLayout) -> Result<Vec<ConstraintPiece>> {
    let mut pieces = Vec::new();
    for h in 0..layout.horizon() {
        pieces.push(ConstraintPiece::Hyperplane(Hyperplane::sum(
            layout.stage(h).collect(),
            1.0,
        )?));
    }
    for h in 1..layout.horizon() {
        for s in 0..layout.num_states() {
            if !layout.is_reachable(h, s) {
                continue;
            }
            let out: Vec<usize> = layout.state_block(h, s).collect();
            pieces.push(ConstraintPiece::Hyperplane(Hyperplane::balance(
                &out,
                layout.inflow(h, s),
            )?));
        }
    }
    pieces.push(ConstraintPiece::Hyperplane(Hyperplane::sum(
        layout.state_block(0, layout.initial_state()).collect(),
        1.0,
    )?));
    Ok(pieces)
}

/// Pieces of the set of occupancy measures consistent with some `theta` in
/// the confidence set: normalization, flow and initial-state hyperplanes,
/// then one confidence cone per `(h, s, a)` block with two or more
/// successors (single-successor blocks are implied by normalization).
pub fn build_feasible_set(
    confidence: &ConfidenceSet,
    model: &LinearMixtureModel,
) -> Result<FeasibleSet> {
    let d = model.dim();
    if confidence.center.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "confidence set has dimension {}, model has {d}",
            confidence.center.len()
        )));
    }
    let layout = model.layout().clone();
    let mut pieces = affine_pieces(&layout)?;
    let num_affine = pieces.len();
    let (s_n, a_n) = (model.num_states(), model.num_actions());
    let sigma_inv_sqrt = inv_sqrt_spd(&confidence.gram)?;
    let mut geometry: Vec<Option<Arc<BlockGeometry>>> = vec![None; s_n * a_n];
    for s in 0..s_n {
        for a in 0..a_n {
            let succ = model.successors(s, a);
            if succ.len() <= 1 {
                continue;
            }
            let mut b = DMatrix::zeros(succ.len(), d);
            for (i, &sp) in succ.iter().enumerate() {
                b.row_mut(i).copy_from_slice(model.phi(sp, s, a));
            }
            if b.iter().all(|&x| x == 0.0) {
                return Err(Error::DegenerateFeatures {
                    state: s,
                    action: a,
                });
            }
            geometry[s * a_n + a] = Some(Arc::new(BlockGeometry::new(
                b,
                &confidence.center,
                &confidence.gram,
                &sigma_inv_sqrt,
                confidence.radius,
            )?));
        }
    }
    for h in 0..layout.horizon() {
        for s in 0..s_n {
            if !layout.is_reachable(h, s) {
                continue;
            }
            for a in 0..a_n {
                if let Some(g) = &geometry[s * a_n + a] {
                    pieces.push(ConstraintPiece::OccupancyEllipsoid(OccupancyEllipsoid::new(
                        (h, s, a),
                        layout.block(h, s, a).collect(),
                        g.clone(),
                    )?));
                }
            }
        }
    }
    Ok(FeasibleSet {
        layout,
        pieces,
        num_affine,
        confidence: Some(confidence.clone()),
    })
}
