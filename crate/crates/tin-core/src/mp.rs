//! Edge-level message passing driven by the implicit transition operators.
//!
//! Two update rules over the same recurrence skeleton:
//!
//! - linear gated aggregation: U^r = P·U^{r−1} + δ·U^0
//! - gated attention unit: U^r = Lin(Γ ⊙ (P·U^{r−1} + δ·Δ)), where Γ and Δ
//!   are SiLU-activated linear maps of U^0 and Lin is shared across rounds
//!
//! The initial state folds the layer features in as U^0 = X̃ + λ·X, and the
//! finalize step maps U^R through a linear layer followed by layer
//! normalization. All steps run on the autodiff tape so gradients flow back
//! through the transition applies.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{SymmetricMap, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpVariant {
    Lga,
    Gau,
}

impl std::fmt::Display for MpVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MpVariant::Lga => "lga",
            MpVariant::Gau => "gau",
        })
    }
}

impl std::str::FromStr for MpVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lga" => Ok(MpVariant::Lga),
            "gau" => Ok(MpVariant::Gau),
            other => {
                Err(Error::Format(format!("unknown variant `{other}`, expected lga or gau")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MpConfig {
    pub variant: MpVariant,
    /// Iterations per encoder layer.
    pub rounds: usize,
    /// Residual weight on the initial state inside each iteration.
    pub delta: f64,
    /// Weight on the per-layer features when forming the initial state.
    pub lambda: f64,
}

impl MpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Contract("message passing needs at least one round".into()));
        }
        if self.delta < 0.0 || self.lambda < 0.0 {
            return Err(Error::Contract("residual weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-side GAU parameters: gate and residual projections (applied to U^0,
/// then SiLU) and the shared linear map applied after gating.
#[derive(Clone, Copy)]
pub struct GauParams<'t> {
    pub gate_w: Tensor<'t>,
    pub gate_b: Tensor<'t>,
    pub delta_w: Tensor<'t>,
    pub delta_b: Tensor<'t>,
    pub lin_w: Tensor<'t>,
    pub lin_b: Tensor<'t>,
}

/// Finalize parameters: linear map then layer norm.
#[derive(Clone, Copy)]
pub struct FinalizeParams<'t> {
    pub lin_w: Tensor<'t>,
    pub lin_b: Tensor<'t>,
    pub ln_gain: Tensor<'t>,
    pub ln_bias: Tensor<'t>,
}

/// U^0 = X̃ + λ·X.
pub fn init_state<'t>(x_tilde: Tensor<'t>, x: Tensor<'t>, lambda: f64) -> Result<Tensor<'t>> {
    x_tilde.add(x.scale(lambda))
}

/// R iterations of U^r = P·U^{r−1} + δ·U^0.
pub fn lga_run<'t>(
    p: Rc<dyn SymmetricMap>,
    u0: Tensor<'t>,
    rounds: usize,
    delta: f64,
) -> Result<Tensor<'t>> {
    let mut u = u0;
    for _ in 0..rounds {
        u = u.sym_apply(Rc::clone(&p))?.add(u0.scale(delta))?;
    }
    Ok(u)
}

/// R iterations of U^r = Lin(Γ ⊙ (P·U^{r−1} + δ·Δ)) with gates from U^0.
pub fn gau_run<'t>(
    p: Rc<dyn SymmetricMap>,
    u0: Tensor<'t>,
    rounds: usize,
    delta: f64,
    params: &GauParams<'t>,
) -> Result<Tensor<'t>> {
    let gate = u0.matmul(params.gate_w)?.add_row(params.gate_b)?.silu();
    let resid = u0.matmul(params.delta_w)?.add_row(params.delta_b)?.silu();
    let mut u = u0;
    for _ in 0..rounds {
        let aggregated = u.sym_apply(Rc::clone(&p))?.add(resid.scale(delta))?;
        u = gate.mul(aggregated)?.matmul(params.lin_w)?.add_row(params.lin_b)?;
    }
    Ok(u)
}

/// X̂ = LayerNorm(Lin(U^R)).
pub fn finalize<'t>(u: Tensor<'t>, params: &FinalizeParams<'t>) -> Result<Tensor<'t>> {
    u.matmul(params.lin_w)?
        .add_row(params.lin_b)?
        .layer_norm(params.ln_gain, params.ln_bias)
}

/// Dispatch one side's full message-passing pass.
pub fn run_side<'t>(
    p: Rc<dyn SymmetricMap>,
    u0: Tensor<'t>,
    cfg: &MpConfig,
    gau: Option<&GauParams<'t>>,
) -> Result<Tensor<'t>> {
    cfg.validate()?;
    match cfg.variant {
        MpVariant::Lga => lga_run(p, u0, cfg.rounds, cfg.delta),
        MpVariant::Gau => {
            let params = gau.ok_or_else(|| {
                Error::Contract("gau variant requires gate parameters".into())
            })?;
            gau_run(p, u0, cfg.rounds, cfg.delta, params)
        }
    }
}
