//! Batch experiments: reconstruction under injected noise and solution dimensions
//! over the tensor-product family.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::analysis::{solution_dims_seeded, DimReport, EXACT_DIM_THRESHOLD};
use crate::error::{Error, Result};
use crate::generators::{add_noise, gridworld, random_cmp, random_grid24, tensor_product, GridPolicy};
use crate::linalg::Threshold;
use crate::model::{first_action_inverse, one_step_inverse, sequence_inverse, ControlledMP, MaskedInverseModel};
use crate::relaxation::{solve_relaxation, Flag, RelaxationInputs, RelaxationOptions, StateSelection};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JointKl {
    /// Mean over jointly defined `(s, s_end)`.
    pub mean: f64,
    pub compared: usize,
    /// Entries defined in exactly one of the two models.
    pub mask_mismatches: usize,
}

/// KL divergence restricted to entries defined in both models.
pub fn kl_divergence_joint(b_true: &MaskedInverseModel, b_est: &MaskedInverseModel) -> Result<JointKl> {
    if b_true.d() != b_est.d() || b_true.num_slices() != b_est.num_slices() {
        return Err(Error::Dimension("inverse models differ in shape".into()));
    }
    let d = b_true.d();
    let (mut total, mut compared, mut mismatches) = (0.0, 0, 0);
    for s in 0..d {
        for e in 0..d {
            match (b_true.is_defined(s, e), b_est.is_defined(s, e)) {
                (true, true) => {
                    compared += 1;
                    for q in 0..b_true.num_slices() {
                        let p = b_true.slice(q)[(s, e)];
                        if p > 0.0 {
                            total += p * (p / b_est.slice(q)[(s, e)].max(1e-300)).ln();
                        }
                    }
                }
                (false, false) => {}
                _ => mismatches += 1,
            }
        }
    }
    Ok(JointKl {
        mean: if compared == 0 { 0.0 } else { total / compared as f64 },
        compared,
        mask_mismatches: mismatches,
    })
}

// ---------------------------------------------------------------------------
// Noise sweep

#[derive(Clone, Debug, Serialize)]
pub struct NoiseSweepConfig {
    pub grids: usize,
    /// Noise exponents; `None` is the noise-free control.
    pub levels: Vec<Option<f64>>,
    pub horizons: Vec<usize>,
    pub seed: u64,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        let mut levels = vec![None];
        levels.extend((-7..=0).map(|c| Some(c as f64)));
        NoiseSweepConfig {
            grids: 10,
            levels,
            horizons: vec![1, 2, 3],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseRow {
    pub c: Option<f64>,
    pub grid: usize,
    pub horizon: usize,
    pub kl: f64,
    pub mask_mismatches: usize,
    pub inconsistent: bool,
    pub projected: bool,
}

/// Perturb `B¹` and `B²` of `m`, recover `W` by least-squares relaxation over all
/// states, and score the first-action models of `W` against those of `m`.
pub fn noise_cell(
    m: &ControlledMP,
    c: Option<f64>,
    horizons: &[usize],
    seed: u64,
) -> Result<Vec<(usize, JointKl, bool, bool)>> {
    let b1 = add_noise(&sequence_inverse(m, 1), c, derive_seed(seed, "noise-b1", 0));
    let b2 = add_noise(&sequence_inverse(m, 2), c, derive_seed(seed, "noise-b2", 0));
    let inputs = RelaxationInputs::new(b1.clone(), b1, b2, m.policy())?;
    let verdict = solve_relaxation(&inputs, &StateSelection::All, &RelaxationOptions::least_squares())?;
    let inconsistent = verdict.flags.contains(&Flag::Inconsistent);
    let projected = verdict.diagnostics.projected;
    let w = verdict
        .w
        .ok_or_else(|| Error::Inconsistent("least-squares relaxation produced no process".into()))?;
    horizons
        .iter()
        .map(|&h| {
            let truth = first_action_inverse(m, h)?;
            let est = first_action_inverse(&w, h)?;
            Ok((h, kl_divergence_joint(&truth, &est)?, inconsistent, projected))
        })
        .collect()
}

/// Grid `g` of the sweep family.
pub fn sweep_grid(seed: u64, g: usize) -> Result<ControlledMP> {
    gridworld(&random_grid24(derive_seed(seed, "grid", g as u64))?, &GridPolicy::Uniform)
}

pub fn noise_sweep(cfg: &NoiseSweepConfig) -> Result<Vec<NoiseRow>> {
    let grids: Vec<ControlledMP> = (0..cfg.grids).map(|g| sweep_grid(cfg.seed, g)).collect::<Result<_>>()?;
    noise_sweep_models(&grids, cfg)
}

/// As [`noise_sweep`] with the given models in place of random grids.
pub fn noise_sweep_models(models: &[ControlledMP], cfg: &NoiseSweepConfig) -> Result<Vec<NoiseRow>> {
    let cells: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|g| (0..cfg.levels.len()).map(move |l| (g, l)))
        .collect();
    let results: Vec<Result<Vec<NoiseRow>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .iter()
            .map(|&(g, l)| {
                let m = &models[g];
                let c = cfg.levels[l];
                let seed = derive_seed(cfg.seed, "noise-cell", (g * cfg.levels.len() + l) as u64);
                scope.spawn(move || {
                    noise_cell(m, c, &cfg.horizons, seed).map(|scores| {
                        scores
                            .into_iter()
                            .map(|(horizon, kl, inconsistent, projected)| NoiseRow {
                                c,
                                grid: g,
                                horizon,
                                kl: kl.mean,
                                mask_mismatches: kl.mask_mismatches,
                                inconsistent,
                                projected,
                            })
                            .collect()
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("noise cell panicked")).collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Mean KL per `(c, horizon)` in the order levels appear in `rows`.
pub fn mean_kl(rows: &[NoiseRow]) -> Vec<(Option<f64>, usize, f64)> {
    let mut keys: Vec<(Option<f64>, usize)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.c, r.horizon)) {
            keys.push((r.c, r.horizon));
        }
    }
    keys.into_iter()
        .map(|(c, h)| {
            let vals: Vec<f64> = rows.iter().filter(|r| r.c == c && r.horizon == h).map(|r| r.kl).collect();
            (c, h, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Dimension sweep

#[derive(Clone, Debug, Serialize)]
pub struct DimsSweepConfig {
    pub k: usize,
    /// Controlled-factor sizes; `d = 2 ḋ`.
    pub ddots: Vec<usize>,
    pub threshold: Threshold,
    pub seed: u64,
}

impl Default for DimsSweepConfig {
    fn default() -> Self {
        DimsSweepConfig {
            k: 5,
            ddots: (1..=16).collect(),
            threshold: EXACT_DIM_THRESHOLD,
            seed: 0,
        }
    }
}

/// `Ṁ ⊗ M̈` with random `Ṁ` (`ḋ` states, `k` actions) and `M̈` the uniform `2 x 2` chain.
pub fn tensor_family(ddot: usize, k: usize, seed: u64) -> Result<ControlledMP> {
    let mdot = random_cmp(ddot, k, seed)?;
    tensor_product(&mdot, &DMatrix::from_element(2, 2, 0.5))
}

pub fn dims_sweep(cfg: &DimsSweepConfig) -> Result<Vec<DimReport>> {
    cfg.ddots
        .iter()
        .map(|&ddot| {
            let m = tensor_family(ddot, cfg.k, derive_seed(cfg.seed, "tensor", ddot as u64))?;
            let seed = derive_seed(cfg.seed, "sketch", ddot as u64);
            solution_dims_seeded(&one_step_inverse(&m), &m.policy(), cfg.threshold, seed)
        })
        .collect()
}
