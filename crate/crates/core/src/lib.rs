//! Data model, ingestion, clip sampling, trajectory text grammar, conversation
//! building and evaluation for a video-language training corpus pipeline.

pub mod convbuilder;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod sampler;
pub mod seeding;
pub mod trajgrammar;

pub use model::{
    denormalize_box, iou, normalize_box, BoundingBox, ClipSample, ConversationRecord, FrameRef, MetricReport,
    ModelError, NormBox, Observation, ObservationKind, Task, Tracklet,
};
