//! Uniform weight averaging of checkpoints: SWA over one run's trajectory
//! and model soups over differently-configured runs, optionally restricted
//! to the encoder or decoder half of the network.

use rayon::prelude::*;

use crate::archive::{ArchiveMetadata, AveragingMode, Provenance, Scope, Tensor, TensorArchive};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AveragingRequest<'a> {
    pub inputs: Vec<&'a TensorArchive>,
    /// Supplies every tensor outside `scope`. Defaults to the first input.
    pub base: Option<&'a TensorArchive>,
    pub mode: AveragingMode,
    pub scope: Scope,
}

impl<'a> AveragingRequest<'a> {
    pub fn new(inputs: Vec<&'a TensorArchive>, mode: AveragingMode, scope: Scope) -> Self {
        Self {
            inputs,
            base: None,
            mode,
            scope,
        }
    }

    pub fn with_base(mut self, base: &'a TensorArchive) -> Self {
        self.base = Some(base);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectorySummary {
    pub n: usize,
    pub iterations: Vec<u64>,
    pub hyperparam_id: String,
}

/// Checks that `inputs` are checkpoints of a single run in increasing
/// iteration order.
pub fn validate_swa_trajectory(inputs: &[&TensorArchive]) -> Result<TrajectorySummary> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Arity("SWA needs at least one checkpoint".into()))?;
    let hyperparam_id = first.metadata.hyperparam_id.clone();
    if let Some(other) = inputs.iter().find(|a| a.metadata.hyperparam_id != hyperparam_id) {
        return Err(Error::Trajectory(format!(
            "checkpoints mix hyperparameter configurations `{hyperparam_id}` and `{}`",
            other.metadata.hyperparam_id
        )));
    }
    let iterations: Vec<u64> = inputs.iter().map(|a| a.metadata.iteration).collect();
    if let Some(w) = iterations.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Ordering(format!(
            "iterations must be strictly increasing, found {} then {}",
            w[0], w[1]
        )));
    }
    Ok(TrajectorySummary {
        n: inputs.len(),
        iterations,
        hyperparam_id,
    })
}

fn validate_soup(inputs: &[&TensorArchive]) -> Result<()> {
    let mut ids: Vec<&str> = inputs.iter().map(|a| a.metadata.hyperparam_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Mode(format!(
            "soup ingredients must come from distinct hyperparameter configurations, `{}` repeats",
            w[0]
        )));
    }
    Ok(())
}

fn check_compatible(base: &TensorArchive, other: &TensorArchive) -> Result<()> {
    for (name, t) in base.tensors() {
        match other.get(name) {
            None => {
                return Err(Error::IncompatibleArchives {
                    tensor: name.clone(),
                    reason: format!("missing from `{}`", other.metadata.model_id),
                })
            }
            Some(o) if o.shape() != t.shape() => {
                return Err(Error::IncompatibleArchives {
                    tensor: name.clone(),
                    reason: format!(
                        "shape {:?} in `{}` vs {:?} in `{}`",
                        t.shape(),
                        base.metadata.model_id,
                        o.shape(),
                        other.metadata.model_id
                    ),
                })
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = other.names().find(|n| base.get(n).is_none()) {
        return Err(Error::IncompatibleArchives {
            tensor: extra.to_string(),
            reason: format!("present in `{}` but not in the base", other.metadata.model_id),
        });
    }
    Ok(())
}

/// Averages the in-scope tensors of `request.inputs`; every other tensor is
/// copied from the base model.
///
/// Inputs are accumulated in f64 in a canonical order (sorted by model id,
/// then iteration, then hyperparameter id) and rounded to f32 once, so the
/// output does not depend on the order the inputs were given in.
pub fn average_weights(request: &AveragingRequest<'_>) -> Result<TensorArchive> {
    let first = *request
        .inputs
        .first()
        .ok_or_else(|| Error::Arity("averaging needs at least one input".into()))?;
    let base = request.base.unwrap_or(first);

    for input in &request.inputs {
        check_compatible(base, input)?;
    }
    let hyperparam_id = match request.mode {
        AveragingMode::Swa => validate_swa_trajectory(&request.inputs)?.hyperparam_id,
        AveragingMode::Soup => {
            validate_soup(&request.inputs)?;
            let mut ids: Vec<&str> = request
                .inputs
                .iter()
                .map(|a| a.metadata.hyperparam_id.as_str())
                .collect();
            ids.sort_unstable();
            ids.join("+")
        }
    };

    let in_scope = base.partition_by_role(request.scope)?;

    let mut ordered = request.inputs.clone();
    ordered.sort_by(|a, b| {
        let ka = (&a.metadata.model_id, a.metadata.iteration, &a.metadata.hyperparam_id);
        let kb = (&b.metadata.model_id, b.metadata.iteration, &b.metadata.hyperparam_id);
        ka.cmp(&kb)
    });
    let n = ordered.len() as f64;

    let averaged: Vec<(String, Tensor)> = base
        .tensors()
        .par_iter()
        .map(|(name, base_tensor)| {
            if !in_scope.contains(name) {
                return (name.clone(), base_tensor.clone());
            }
            let sources: Vec<&[f32]> = ordered
                .iter()
                .map(|a| a.get(name).expect("checked compatible").data())
                .collect();
            let data = (0..base_tensor.len())
                .map(|i| {
                    let sum: f64 = sources.iter().map(|s| s[i] as f64).sum();
                    (sum / n) as f32
                })
                .collect();
            let tensor = Tensor::new(base_tensor.shape().to_vec(), data).expect("same shape");
            (name.clone(), tensor)
        })
        .collect();

    let sources: Vec<String> = ordered.iter().map(|a| a.metadata.model_id.clone()).collect();
    let iteration = match request.mode {
        AveragingMode::Swa => ordered.iter().map(|a| a.metadata.iteration).max().unwrap_or(0),
        AveragingMode::Soup => base.metadata.iteration,
    };
    let metadata = ArchiveMetadata {
        model_id: format!("{}-{}:{}", request.mode, request.scope, sources.join("+")),
        iteration,
        hyperparam_id,
        role_prefixes: base.metadata.role_prefixes.clone(),
        provenance: Some(Provenance {
            base: base.metadata.model_id.clone(),
            mode: request.mode,
            scope: request.scope,
            sources,
        }),
        excluded_tensors: base.metadata.excluded_tensors.clone(),
        warnings: Vec::new(),
    };
    let mut out = TensorArchive::new(metadata);
    for (name, tensor) in averaged {
        out.insert(name, tensor)?;
    }
    Ok(out)
}
