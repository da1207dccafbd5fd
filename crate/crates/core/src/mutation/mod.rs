//! Mutation operators, stacked havoc mutation and the deterministic stage.

mod deterministic;
mod dictionary;
mod edit;
mod havoc;
mod operator;

pub use deterministic::{deterministic_stage, deterministic_stage_len, DeterministicStage};
pub use dictionary::Dictionary;
pub use edit::{Edit, Endian};
pub use havoc::{
    apply_mutation, choose_block_len, mutate_child, resolve_mutation, sample_mutation_site,
    sample_num_mutations, MutationRecord, MutationStep, StackMode, ARITH_MAX, INTERESTING_16,
    INTERESTING_32, INTERESTING_8, MAX_BLOCK, MAX_INPUT,
};
pub use operator::{LengthEffect, MutationOperator};
