//! On-disk conversation schema.

use forge_core::{ConversationRecord, FrameRef, Observation, Task};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Human,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: Role,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusMeta {
    pub variant: String,
    pub dataset: String,
    pub source: String,
    pub is_negative: bool,
    pub seed_trace: u64,
    pub frames: Vec<FrameRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub future_text: Option<String>,
}

/// One corpus line: `{id, task, images, conversations, meta}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub task: Task,
    pub images: Vec<String>,
    pub conversations: Vec<Turn>,
    pub meta: CorpusMeta,
}

impl CorpusRecord {
    pub fn new(id: String, rec: ConversationRecord, dataset: &str, source: &str) -> Self {
        Self {
            id,
            task: rec.task,
            images: rec.frames.iter().map(|f| f.image_path.clone()).collect(),
            conversations: vec![
                Turn { from: Role::Human, value: rec.question },
                Turn { from: Role::Assistant, value: rec.answer },
            ],
            meta: CorpusMeta {
                variant: rec.variant,
                dataset: dataset.to_string(),
                source: source.to_string(),
                is_negative: rec.is_negative,
                seed_trace: rec.seed_trace,
                frames: rec.frames,
                observation: rec.observation,
                future_text: rec.future_text,
            },
        }
    }

    pub fn question(&self) -> Option<&str> {
        self.conversations.first().map(|t| t.value.as_str())
    }

    pub fn answer(&self) -> Option<&str> {
        self.conversations.get(1).map(|t| t.value.as_str())
    }

    pub fn to_record(&self) -> Result<ConversationRecord, String> {
        let (question, answer) = match self.conversations.as_slice() {
            [Turn { from: Role::Human, value: q }, Turn { from: Role::Assistant, value: a }] => (q.clone(), a.clone()),
            _ => return Err("conversations must be one human turn followed by one assistant turn".into()),
        };
        let paths: Vec<&str> = self.meta.frames.iter().map(|f| f.image_path.as_str()).collect();
        if paths != self.images.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err("images differ from meta.frames".into());
        }
        Ok(ConversationRecord {
            task: self.task,
            variant: self.meta.variant.clone(),
            frames: self.meta.frames.clone(),
            question,
            answer,
            observation: self.meta.observation.clone(),
            future_text: self.meta.future_text.clone(),
            is_negative: self.meta.is_negative,
            seed_trace: self.meta.seed_trace,
        })
    }
}
