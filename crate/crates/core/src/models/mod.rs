//! Student (BiLSTM or small transformer) and teacher (transformer encoder)
//! models with their forward passes.

mod config;
pub mod layers;
mod student;
mod teacher;

pub use config::{Arch, HeadInput, Pooling, StudentConfig, TeacherConfig};
pub use student::{init_embeddings, student_forward, EmbeddingInit, Layer, StudentModel, StudentOutputs};
pub use teacher::{teacher_forward, TeacherModel, TeacherOutputs};
