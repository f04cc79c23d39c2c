//! Tasks, steps, auditors and the plugin contract.

mod answer;
mod order;
mod registry;
mod task;

pub use answer::{decode_answer, AnswerError, AnswerValue, MAX_TEXT_ANSWER_BYTES};
pub use order::{fnv1a_64, instantiate_step_order, shuffle_in_place, SplitMix64, StepOrder};
pub use registry::{
    default_model_label, Aggregation, AuditorDescriptor, FieldSpec, PluginDescriptor, PluginRegistry, RegistryError,
    Scalar, ScalarType, StepPluginDescriptor, BUILTIN_AUDITORS, BUILTIN_STEP_KINDS, MODEL_PREFIX,
};
pub use task::{
    close_task, create_task, publish_task, validate_step, DomainError, OrderingMode, StepDefinition, StepId, StepKind,
    StepSpec, StepViolation, TaskDefinition, TaskId, TaskSpec, TaskStatus,
};
