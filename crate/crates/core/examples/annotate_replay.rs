//! Build the annotation prompt for a note and send it through a provider
//! with retries. A flaky wrapper around the replay LLM shows the backoff.

use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;

use clinical_ts::annotation::{
    annotate, build_prompt, parse_response, ChatRequest, LlmProvider, LlmSettings, ReplayLlm, RetryPolicy,
};
use clinical_ts::corpus::{CaseDocument, NoteText, QueryText};
use clinical_ts::error::ProviderError;

struct Flaky {
    inner: ReplayLlm,
    failures_left: AtomicU32,
}

impl LlmProvider for Flaky {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        if self.failures_left.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok() {
            return Err(ProviderError::Status {
                status: 503,
                body: "overloaded".into(),
            });
        }
        self.inner.complete(request)
    }
}

fn main() -> clinical_ts::Result<()> {
    let doc = CaseDocument {
        note: NoteText {
            note_id: "n7".into(),
            hadm_id: "30007".into(),
            text: "Seizure at home the morning of admission. Loaded with levetiracetam in the ED.".into(),
        },
        query: QueryText {
            note_id: "n7".into(),
            text: "New onset seizure, started levetiracetam.".into(),
        },
    };
    let prompt = build_prompt(&doc, &["Seizure at home the morning", "Loaded with levetiracetam in"])?;
    println!("{}\n...", prompt.user_text);

    let mut replay = ReplayLlm::new();
    replay.insert(prompt.content_hash(), "seizure | -6\nlevetiracetam loading | 0\n");
    let provider = Flaky {
        inner: replay,
        failures_left: AtomicU32::new(2),
    };
    let policy = RetryPolicy {
        base_delay: Duration::from_millis(10),
        ..RetryPolicy::default()
    };
    let out = annotate(&provider, &prompt, &LlmSettings::default(), &policy)?;
    println!("answered after {} attempts:\n{}", out.attempts, out.raw);
    for ev in parse_response(&out.raw).accepted {
        println!("{:<24} {:>6}", ev.event, ev.time_hours);
    }
    Ok(())
}
