//! Algorithmic core of the skelsql text-to-SQL pipeline.
//!
//! Everything in this crate is pure computation over in-memory data: question
//! tokenization, the hyperbolic relevance probe that turns a question into an
//! intention skeleton, the skeleton index, prompt rendering and the bounded
//! fallback-revision loop. IO (SQLite, HTTP, files) lives in the `skelsql`
//! crate, which plugs into the traits defined here.
//!
//! The crate is `no_std` when built without the default `std` feature; it only
//! needs `alloc`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod encoder;
pub mod exec;
pub mod hyperbolic;
pub mod index;
pub mod llm;
pub mod matrix;
pub mod prompt;
pub mod relevance;
pub mod schema;
pub mod sql;
pub mod tokenize;

pub use encoder::{EncodeRequest, EncoderBackend, EncoderError, PosTag, ReferenceBackend, SchemaRepresentations};
pub use exec::{Cell, ExecStatus, ExecutionResult, GenerationOutcome, SqlRunner};
pub use index::{IndexEntry, IndexError, Neighbor, SkeletonIndex};
pub use llm::{Completer, CompletionParams, CompletionResult, LlmError};
pub use matrix::Matrix;
pub use prompt::{FilteredSchema, Prompt};
pub use relevance::{QuestionSkeleton, RelevanceBundle, RelevanceParams};
pub use schema::{ColumnType, DatabaseSchema, DemonstrationExample, Example, ItemKind, SchemaItem, ValueStore};
