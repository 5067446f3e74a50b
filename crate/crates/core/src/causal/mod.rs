//! Treatment-effect engine: kernels, kernelized distances, control groups
//! and individual treatment effects.

mod effects;
mod kernel;

pub use crate::hparams::discretize_value as discretize_hparam;
pub use effects::{
    cross_pair_effect, effect_table, ite_binary, ite_marginalized, ite_nonbinary, select_control,
    Block, ContextWeighting, Contrast, ControlMode, ControlSpec, Design, Diagnostics, Effect,
    EffectRow, EffectTable, Gram, Groups, Marginalization, MarginalizeConfig, OutcomeTable,
    Outcomes, Repaired, Scope, TreatmentQuery, Unit,
};
pub use kernel::{kernel_eval, kte_distance, kte_distance_checked, Kernel, POLYNOMIAL_DEGREE};
