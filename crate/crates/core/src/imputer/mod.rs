//! Bidirectional message-passing recurrent imputer.
//!
//! Each direction runs, per step: a readout of the previous state (first
//! stage), a filter that keeps observed inputs, a spatial encoder over the
//! adapted graph, a second readout, another filter, and a GRU update whose
//! gates are message-passing layers. A small MLP fuses both directions.

pub mod cell;
pub mod checkpoint;
pub mod inference;
pub mod model;
pub mod params;


pub use cell::{mpgru_step, mpnn, Diffusion, GateParams, MpnnParams};
pub use inference::{impute_split, SplitImputation};
pub use model::{
    multi_stage_loss, training_loss, unidirectional_pass, DirectionParams, DirectionTrace,
    ForwardGraph, ImputationOutput, Model,
};
pub use params::{count_parameters, Layout, ModelConfig, ParamId, ParamSpec, ParamStore, ParameterCount};
