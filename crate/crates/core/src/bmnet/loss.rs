//! Belief-matching objective: the Dirichlet evidence lower bound
//! `l_EB(y, α) = ψ(α_y) − ψ(α₀) − KL(Dir(α) ‖ prior)`.

use super::label::LabeledWindow;
use super::model::ChannelModel;
use crate::error::{Error, Result};
use crate::numcore::{dirichlet_kl_unchecked, elbo_and_grad, BmTargets, Graph};

/// Uniform prior Dir(1, 1).
pub const UNIFORM_PRIOR: [f64; 2] = [1.0, 1.0];

fn check_conc(a: [f64; 2], what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} concentrations must be positive, got {a:?}")))
    }
}

/// KL(Dir(α) ‖ Dir(β)) for two-component Dirichlets.
pub fn dirichlet_kl(alpha: [f64; 2], beta: [f64; 2]) -> Result<f64> {
    check_conc(alpha, "alpha")?;
    check_conc(beta, "beta")?;
    Ok(dirichlet_kl_unchecked(alpha, beta))
}

/// Evidence lower bound for class `y` under Dir(α).
pub fn elbo(y: usize, alpha: [f64; 2], prior: [f64; 2]) -> Result<f64> {
    check_conc(alpha, "alpha")?;
    check_conc(prior, "prior")?;
    if y > 1 {
        return Err(Error::Domain(format!("class index {y} outside {{0, 1}}")));
    }
    Ok(elbo_and_grad(y, alpha, prior).0)
}

/// Gradient of the ELBO with respect to α.
pub fn elbo_grad(y: usize, alpha: [f64; 2], prior: [f64; 2]) -> Result<[f64; 2]> {
    elbo(y, alpha, prior)?;
    Ok(elbo_and_grad(y, alpha, prior).1)
}

/// Loss of one sample: `−w · l_EB(y, α)`.
pub fn sample_loss(y: usize, alpha: [f64; 2], weight: f64, prior: [f64; 2]) -> Result<f64> {
    Ok(-weight * elbo(y, alpha, prior)?)
}

/// Class index used by the loss: 0 for artifact windows, 1 for background.
pub fn class_index(w: &LabeledWindow) -> usize {
    if w.is_artifact() {
        0
    } else {
        1
    }
}

/// Mean weighted belief-matching loss of `batch` under `model` in inference
/// mode (dropout off).
pub fn bm_loss(
    batch: &[LabeledWindow],
    model: &ChannelModel,
    prior: [f64; 2],
    class_weights: [f64; 2],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("bm_loss batch".into()));
    }
    let windows: Vec<&[f64]> = batch.iter().map(|w| w.samples.as_slice()).collect();
    let labels: Vec<usize> = batch.iter().map(class_index).collect();
    let weights: Vec<f64> = labels.iter().map(|&c| class_weights[c]).collect();
    let mut g = Graph::new();
    let z = model.forward_graph(&mut g, &windows, false)?;
    let loss = g.bm_loss(
        z,
        &BmTargets {
            labels: &labels,
            weights: &weights,
            prior,
        },
    )?;
    Ok(g.value(loss).data()[0])
}
