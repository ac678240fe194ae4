use super::{ConstraintPiece, InnerConfig, MirrorMap};
use crate::error::{Error, Result};

/// Stopping rule and limits for [`dykstra`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DykstraConfig {
    /// Sweeps stop once successive iterates are within this TV distance...
    pub tol: f64,
    /// ...and every piece is satisfied to this residual.
    pub residual_tol: f64,
    pub max_sweeps: usize,
    pub inner: InnerConfig,
    /// Record `(tv, residual)` after each sweep.
    pub trace: bool,
}

impl Default for DykstraConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            residual_tol: 1e-8,
            max_sweeps: 5000,
            inner: InnerConfig::default(),
            trace: false,
        }
    }
}

/// Result summary of a Dykstra run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DykstraReport {
    pub sweeps: usize,
    /// TV distance between the last two sweep iterates.
    pub last_change: f64,
    /// Largest residual over pieces that admit a strictly positive solution.
    pub residual: f64,
    pub per_piece: Vec<f64>,
    pub converged: bool,
    /// Pieces whose admissible set had no strictly positive point.
    pub clipped_pieces: usize,
    /// Pieces whose admissible set was empty.
    pub empty_pieces: usize,
    pub trace: Vec<(f64, f64)>,
}

/// Iterate and correction memory of a Dykstra run.
#[derive(Debug, Clone)]
pub struct DykstraState {
    pub x: Vec<f64>,
    /// One correction vector per piece (empty for pieces that need none).
    pub corrections: Vec<Vec<f64>>,
    pub sweeps: usize,
    flagged: Vec<bool>,
}

impl DykstraState {
    pub fn new(pieces: &[ConstraintPiece], start: &[f64]) -> Result<Self> {
        let n = start.len();
        for p in pieces {
            if let Some(&j) = p.coords().iter().find(|&&j| j >= n) {
                return Err(Error::IndexOutOfRange {
                    what: "piece coordinate",
                    index: j,
                    limit: n,
                });
            }
        }
        let corrections = pieces
            .iter()
            .map(|p| {
                if p.needs_correction() {
                    vec![0.0; p.coords().len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        Ok(Self {
            x: start.to_vec(),
            corrections,
            sweeps: 0,
            flagged: vec![false; pieces.len()],
        })
    }

    /// One pass over all pieces in order.
    pub fn sweep(
        &mut self,
        pieces: &[ConstraintPiece],
        map: &MirrorMap,
        inner: &InnerConfig,
    ) -> Result<()> {
        let mut target = Vec::new();
        let mut dual = Vec::new();
        let mut out = Vec::new();
        for (i, piece) in pieces.iter().enumerate() {
            let coords = piece.coords();
            target.clear();
            dual.clear();
            let q = &self.corrections[i];
            if q.is_empty() {
                target.extend(coords.iter().map(|&j| self.x[j]));
            } else {
                for (k, &j) in coords.iter().enumerate() {
                    let y = map.grad(self.x[j]) + q[k];
                    dual.push(y);
                    target.push(map.grad_conj(y));
                }
            }
            out.clear();
            out.resize(coords.len(), 0.0);
            let o = piece.project(&target, &mut out, map, inner)?;
            self.flagged[i] = o.clipped || o.empty;
            let q = &mut self.corrections[i];
            if !q.is_empty() {
                for k in 0..coords.len() {
                    q[k] = dual[k] - map.grad(out[k]);
                }
            }
            for (k, &j) in coords.iter().enumerate() {
                self.x[j] = out[k];
            }
        }
        self.sweeps += 1;
        Ok(())
    }
}

/// Cyclic Bregman projections with Dykstra corrections onto the
/// intersection of `pieces`, starting from `start`.
///
/// Stops once the TV distance between successive sweeps is at most
/// `cfg.tol` and all residuals are at most `cfg.residual_tol`; otherwise
/// returns the last iterate after `cfg.max_sweeps` with `converged = false`.
pub fn dykstra(
    pieces: &[ConstraintPiece],
    start: &[f64],
    map: MirrorMap,
    cfg: &DykstraConfig,
) -> Result<(Vec<f64>, DykstraReport)> {
    if let MirrorMap::Entropy { .. } = map {
        if start.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Domain("start point must be strictly positive".into()));
        }
    }
    let mut state = DykstraState::new(pieces, start)?;
    let mut report = DykstraReport::default();
    let mut prev = state.x.clone();
    while state.sweeps < cfg.max_sweeps {
        state.sweep(pieces, &map, &cfg.inner)?;
        let tv = 0.5
            * state
                .x
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        report.last_change = tv;
        let check = tv <= cfg.tol || cfg.trace || state.sweeps == cfg.max_sweeps;
        if check {
            fill_residuals(pieces, &state, &mut report);
            if cfg.trace {
                report.trace.push((tv, report.residual));
            }
            if tv <= cfg.tol && report.residual <= cfg.residual_tol {
                report.converged = true;
                break;
            }
        }
        prev.copy_from_slice(&state.x);
    }
    report.sweeps = state.sweeps;
    Ok((state.x, report))
}

fn fill_residuals(pieces: &[ConstraintPiece], state: &DykstraState, report: &mut DykstraReport) {
    report.per_piece = pieces.iter().map(|p| p.residual(&state.x)).collect();
    report.residual = report
        .per_piece
        .iter()
        .zip(&state.flagged)
        .filter(|(_, &f)| !f)
        .fold(0.0f64, |m, (&r, _)| m.max(r));
    report.clipped_pieces = 0;
    report.empty_pieces = 0;
    for (p, &f) in pieces.iter().zip(&state.flagged) {
        if f {
            if let ConstraintPiece::OccupancyEllipsoid(e) = p {
                match e.geometry().slice {
                    super::EllipsoidSlice::Empty => report.empty_pieces += 1,
                    _ => report.clipped_pieces += 1,
                }
            }
        }
    }
}
