use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::CaseDocument;
use crate::error::AnnotationError;

/// Instruction text sent as the system message. Bump
/// [`PROMPT_TEMPLATE_VERSION`] whenever the resource changes.
pub const PROMPT_TEMPLATE: &str = include_str!("../../resources/prompt_v1.txt");
pub const PROMPT_TEMPLATE_VERSION: &str = "v1";

const DOCUMENT_HEADER: &str = "Document:";
const CHUNKS_HEADER: &str = "Chunks:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub document: String,
    pub chunk_list: Vec<String>,
    /// User message: the document followed by the numbered chunk list.
    pub user_text: String,
    /// System and user text together; the unit that replay fixtures hash.
    pub rendered: String,
}

impl PromptBundle {
    /// Hex SHA-256 of `rendered`.
    pub fn content_hash(&self) -> String {
        hex(&Sha256::digest(self.rendered.as_bytes()))
    }

    /// The numbered chunk list section of the user message.
    pub fn chunk_section(&self) -> &str {
        self.user_text
            .rsplit_once(CHUNKS_HEADER)
            .map(|(_, tail)| tail)
            .unwrap_or("")
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn build_prompt<S: AsRef<str>>(doc: &CaseDocument, chunks: &[S]) -> Result<PromptBundle, AnnotationError> {
    if chunks.is_empty() {
        return Err(AnnotationError::NoChunks);
    }
    let chunk_list: Vec<String> = chunks
        .iter()
        .map(|c| c.as_ref().split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    let mut user_text = format!("{DOCUMENT_HEADER}\n{}\n\n{CHUNKS_HEADER}\n", doc.note.text.trim_end());
    for (i, c) in chunk_list.iter().enumerate() {
        user_text.push_str(&format!("{}. {}\n", i + 1, c));
    }
    let system_text = PROMPT_TEMPLATE.to_string();
    let rendered = format!("{system_text}\n{user_text}");
    Ok(PromptBundle {
        system_text,
        document: doc.note.text.clone(),
        chunk_list,
        user_text,
        rendered,
    })
}
