//! XML export of a task and its responses.
//!
//! Each response carries its answers under `steps` and its auditor data under
//! `auditors`. Auditor data follows this shape, one block per auditor kind:
//!
//! ```xml
//! <auditors>
//!   <clicks_total>
//!     <list_item>
//!       <model>survey.auditorclickstotaldata</model>
//!       <pk>1</pk>
//!       <fields>
//!         <general_model>1</general_model>
//!         <count>4</count>
//!       </fields>
//!     </list_item>
//!   </clicks_total>
//! </auditors>
//! ```
//!
//! `general_model` is the primary key of the owning response. The surrounding
//! envelope (`export` → `task` → `responses` → `response`) also records the
//! task's step and auditor definitions so the file can be parsed without the
//! plugin registry that produced it.

mod csv;
mod model;
mod read;
mod write;

pub use self::csv::write_fingerprint_csv;
pub use model::{
    AuditorRow, AuditorSchema, ExportDocument, ExportedResponse, ExportedStep, ExportedTask, ResponseRecord,
    StepAnswerRow, EXPORT_VERSION, RESPONSE_MODEL, STEP_ANSWER_MODEL,
};
pub use read::{parse_export, ExportError};
pub use write::{escape_text, serialize_document};
