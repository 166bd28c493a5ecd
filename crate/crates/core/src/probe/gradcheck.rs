//! Central finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ProbeConfig;
use super::features::Window;
use super::model::{window_loss, window_loss_and_grad, Params, RULE_EMBEDDING};
use crate::error::{Error, Result};

pub const STEP: f64 = 1e-5;
pub const MIN_COORDS: usize = 20;
/// Denominator floor for the relative error. Coordinates whose true gradient
/// is below it are compared in absolute terms; round-off in the difference
/// quotient is around 1e-10 at this step size.
pub const REL_FLOOR: f64 = 1e-6;
pub const MAX_NOTES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckScope {
    All,
    /// Only the two output heads.
    HeadsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub coords: usize,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    /// True when the tensor is frozen; only the analytic gradient is reported.
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .filter(|t| !t.frozen)
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&TensorCheck> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn is_head(name: &str) -> bool {
    name.starts_with("class_head") || name.starts_with("correction_head")
}

/// Checks the gradient of the summed window loss at `params`.
pub fn grad_check(
    params: &Params<f64>,
    cfg: &ProbeConfig,
    window: &Window,
    scope: CheckScope,
    seed: u64,
) -> Result<GradCheckReport> {
    if window.num_notes() > MAX_NOTES {
        return Err(Error::Validation(format!(
            "gradient check takes at most {MAX_NOTES} notes, got {}",
            window.num_notes()
        )));
    }
    let mut grads = params.zeros_like();
    window_loss_and_grad(params, cfg, window, 1.0, &mut grads)?;

    let names = params.names();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut out = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        if scope == CheckScope::HeadsOnly && !is_head(name) {
            continue;
        }
        let g = &grads.tensors()[ti].data;
        let max_abs_analytic = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if name == RULE_EMBEDDING && cfg.frozen_rule_embedding() {
            out.push(TensorCheck {
                name: name.clone(),
                coords: g.len(),
                max_rel_error: 0.0,
                max_abs_analytic,
                frozen: true,
            });
            continue;
        }
        let len = g.len();
        let coords: Vec<usize> = if len <= MIN_COORDS {
            (0..len).collect()
        } else {
            sample(&mut rng, len, MIN_COORDS).into_iter().collect()
        };
        let mut worst = 0.0f64;
        for &c in &coords {
            let orig = probe.tensors()[ti].data[c];
            probe.tensors_mut()[ti].data[c] = orig + STEP;
            let plus = window_loss(&probe, cfg, window)?.total();
            probe.tensors_mut()[ti].data[c] = orig - STEP;
            let minus = window_loss(&probe, cfg, window)?.total();
            probe.tensors_mut()[ti].data[c] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(rel_error(g[c], numeric));
        }
        out.push(TensorCheck {
            name: name.clone(),
            coords: coords.len(),
            max_rel_error: worst,
            max_abs_analytic,
            frozen: false,
        });
    }
    Ok(GradCheckReport { tensors: out })
}
