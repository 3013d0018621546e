//! Prediction ensembles: the uniform per-pixel mean of several models'
//! probability maps, taken before any thresholding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::ProbabilityMap;

/// One model's prediction, tagged with the identifier that fixes its place
/// in the reduction order.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleMember<'a> {
    pub model_id: &'a str,
    pub map: &'a ProbabilityMap,
}

#[derive(Debug, Clone)]
pub struct EnsembleSet<'a> {
    members: Vec<EnsembleMember<'a>>,
}

impl<'a> EnsembleSet<'a> {
    /// Checks that every member describes the same image, lesion and frame.
    pub fn new(members: Vec<EnsembleMember<'a>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Arity("an ensemble needs at least one member".into()))?;
        let (w, h) = (first.map.width(), first.map.height());
        for m in &members {
            if (m.map.width(), m.map.height()) != (w, h) {
                return Err(Error::Shape(format!(
                    "member `{}` is {}x{}, expected {w}x{h}",
                    m.model_id,
                    m.map.width(),
                    m.map.height()
                )));
            }
            if m.map.image_id != first.map.image_id || m.map.lesion != first.map.lesion {
                return Err(Error::Consistency(format!(
                    "member `{}` is {}/{}, expected {}/{}",
                    m.model_id, m.map.image_id, m.map.lesion, first.map.image_id, first.map.lesion
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Per-pixel arithmetic mean of the members, accumulated in member-id order.
pub fn ensemble_average(set: &EnsembleSet<'_>) -> Result<ProbabilityMap> {
    let mut ordered = set.members.clone();
    ordered.sort_by(|a, b| a.model_id.cmp(b.model_id));
    let first = ordered[0].map;
    let n = ordered.len() as f64;
    let maps: Vec<&[f64]> = ordered.iter().map(|m| m.map.probs()).collect();
    let probs: Vec<f64> = (0..first.probs().len())
        .into_par_iter()
        .map(|i| {
            let sum: f64 = maps.iter().map(|m| m[i]).sum();
            (sum / n).clamp(0.0, 1.0)
        })
        .collect();
    ProbabilityMap::new(
        first.image_id.clone(),
        first.lesion,
        first.width(),
        first.height(),
        probs,
    )
}
