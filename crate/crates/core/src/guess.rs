//! Cheap octant classification from the coarse quad's absolute onsets, and
//! the gradient-descent starting point it implies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{OctantId, Vec3, DEFAULT_SOUND_SPEED};
use crate::solver::Theta;

/// A coarse pair closer than this along an axis cannot resolve that axis.
pub const MIN_AXIS_SEPARATION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuessError {
    #[error("unresolvable axis {axis}: largest coarse separation {separation} m")]
    UnresolvableAxis { axis: usize, separation: f64 },
    #[error("coarse arrival {0} is not finite")]
    NonFiniteArrival(usize),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuessParams {
    /// Initial range from the coarse centroid, meters.
    pub radius: f64,
    pub sound_speed: f64,
    /// Margins below this many sample periods are flagged low-confidence.
    pub low_confidence_samples: f64,
}

impl Default for GuessParams {
    fn default() -> Self {
        Self {
            radius: 10.0,
            sound_speed: DEFAULT_SOUND_SPEED,
            low_confidence_samples: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OctantGuess {
    pub octant: OctantId,
    pub init: Theta,
    /// Smallest |arrival difference| among the three deciding pairs, seconds.
    pub margin: f64,
    pub low_confidence: bool,
}

/// For each body axis: the coarse pair `(neg, pos)` with the largest
/// separation along it (ties go to the pair with the least off-axis spread),
/// ordered so `pos` sits on the positive side.
pub fn axis_pairs(coarse: &[Vec3; 4]) -> Result<[(usize, usize); 3], GuessError> {
    let mut out = [(0, 0); 3];
    for (axis, slot) in out.iter_mut().enumerate() {
        let mut best: Option<(f64, f64, usize, usize)> = None;
        for i in 0..4 {
            for j in i + 1..4 {
                let d = coarse[j] - coarse[i];
                let along = d.axis(axis).abs();
                let off = (d.dot(d) - along * along).max(0.0).sqrt();
                let better = match best {
                    None => true,
                    Some((ba, bo, _, _)) => along > ba + 1e-9 || ((along - ba).abs() <= 1e-9 && off < bo),
                };
                if better {
                    best = Some((along, off, i, j));
                }
            }
        }
        let (along, _, i, j) = best.unwrap();
        if along < MIN_AXIS_SEPARATION {
            return Err(GuessError::UnresolvableAxis {
                axis,
                separation: along,
            });
        }
        *slot = if coarse[i].axis(axis) < coarse[j].axis(axis) {
            (i, j)
        } else {
            (j, i)
        };
    }
    Ok(out)
}

/// Octant from arrival order per axis: the hydrophone that hears the ping
/// first is on the pinger's side. A zero difference counts as positive.
pub fn octant_guess(
    coarse_arrivals: &[f64; 4],
    coarse_positions: &[Vec3; 4],
    sample_rate: f64,
    params: &GuessParams,
) -> Result<OctantGuess, GuessError> {
    if let Some(k) = coarse_arrivals.iter().position(|t| !t.is_finite()) {
        return Err(GuessError::NonFiniteArrival(k));
    }
    let pairs = axis_pairs(coarse_positions)?;
    let mut positive = [true; 3];
    let mut margin = f64::INFINITY;
    for (axis, &(neg, pos)) in pairs.iter().enumerate() {
        let diff = coarse_arrivals[neg] - coarse_arrivals[pos];
        positive[axis] = diff >= 0.0;
        margin = margin.min(diff.abs());
    }
    let octant = OctantId { positive };
    let earliest = coarse_arrivals.iter().copied().fold(f64::INFINITY, f64::min);
    let init = initial_point(
        octant,
        params.radius,
        Vec3::centroid(coarse_positions),
        params.sound_speed,
        earliest,
    )?;
    Ok(OctantGuess {
        octant,
        init,
        margin,
        low_confidence: margin < params.low_confidence_samples / sample_rate,
    })
}

pub fn initial_point(
    octant: OctantId,
    radius: f64,
    centroid: Vec3,
    c: f64,
    earliest_arrival: f64,
) -> Result<Theta, GuessError> {
    if !(radius > 0.0) {
        return Err(GuessError::NonPositiveRadius(radius));
    }
    let dir = Vec3::from_array(octant.signs()) * (1.0 / 3f64.sqrt());
    Ok(Theta {
        position: centroid + dir * radius,
        t0: earliest_arrival - radius / c,
    })
}
