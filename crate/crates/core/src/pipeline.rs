//! Command handling end to end: record, classify, generate, validate,
//! schedule.

use serde::Serialize;

use crate::llm::{CompletionRequest, LlmGateway, DEFAULT_RETRIES, DEFAULT_TIMEOUT_S};
use crate::matcher::{InterventionType, SqlEvent};
use crate::prompt::{self, PromptBuilder};
use crate::reflection::{Origin, Reflection};
use crate::scheduler::SchedulerConfig;
use crate::session::{LoadError, LogKind, LogRecord, RecordedTrigger, SessionError, SessionState};
use crate::validator::{self, ValidationOutcome, Verdict};

/// What happened to one trigger of a submitted command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerOutcome {
    pub classification: InterventionType,
    pub decision: &'static str,
    pub origin: Origin,
    pub reflection_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    /// Set when this decision delivered a reflection (possibly an older,
    /// queued one).
    pub reflection: Option<Reflection>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandOutcome {
    pub ts: f64,
    pub triggers: Vec<TriggerOutcome>,
}

impl CommandOutcome {
    pub fn classification(&self) -> Option<InterventionType> {
        self.triggers.first().map(|t| t.classification)
    }

    /// Decision label of the first trigger, `none` when nothing matched.
    pub fn decision(&self) -> &'static str {
        self.triggers.first().map_or("none", |t| t.decision)
    }

    pub fn shown(&self) -> impl Iterator<Item = &Reflection> {
        self.triggers.iter().filter_map(|t| t.reflection.as_ref())
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub builder: PromptBuilder,
    pub gateway: LlmGateway,
    pub timeout_s: f64,
    pub retries: u32,
}

impl Pipeline {
    pub fn new(gateway: LlmGateway) -> Self {
        Pipeline {
            builder: PromptBuilder::default(),
            gateway,
            timeout_s: DEFAULT_TIMEOUT_S,
            retries: DEFAULT_RETRIES,
        }
    }

    pub fn mock() -> Self {
        Pipeline::new(LlmGateway::mock())
    }

    /// Build the reflection for `trigger`. Any generation or validation
    /// failure degrades to the static message.
    pub async fn generate(
        &self,
        state: &mut SessionState,
        trigger: &RecordedTrigger,
    ) -> (Reflection, Option<ValidationOutcome>) {
        let ev = &state.events()[trigger.event_index];
        let sql = ev.raw_sql.clone();
        let m = &trigger.matched;

        let Some(llm_prompt) = self.builder.build(m, &sql, state) else {
            // datatype reflections are personalized without the model
            let mut r = state.static_reflection(trigger);
            r.message = prompt::render_message(m, &[], state);
            r.origin = Origin::Dynamic;
            return (r, None);
        };
        let req = CompletionRequest::from_prompt(&llm_prompt).with_limits(self.timeout_s, self.retries);
        let outcome = match self.gateway.complete(&req).await {
            Ok(result) => Some(validator::validate_alternatives(&result.text, &llm_prompt, state.registry())),
            Err(e) => {
                tracing::warn!(error = %e, intervention = %m.intervention_type(), "completion failed, using static reflection");
                None
            }
        };
        let mut r = state.static_reflection(trigger);
        if let Some(o) = outcome.as_ref().filter(|o| o.verdict == Verdict::Accept) {
            r.message = prompt::render_message(m, &o.accepted, state);
            r.alternatives = o.accepted.clone();
            r.origin = Origin::Dynamic;
        }
        (r, outcome)
    }

    /// Record `ev` and run every trigger it produced through generation
    /// and the scheduler, in statement order.
    pub async fn submit(&self, state: &mut SessionState, ev: SqlEvent) -> Result<CommandOutcome, SessionError> {
        let ts = ev.timestamp;
        let triggers = state.record_command(ev)?;
        let mut out = Vec::with_capacity(triggers.len());
        for trigger in &triggers {
            let (r, validation) = self.generate(state, trigger).await;
            let (classification, origin, reflection_id) = (r.intervention, r.origin, r.id.clone());
            let decision = state.offer(r, ts);
            out.push(TriggerOutcome {
                classification,
                decision: decision.label(),
                origin,
                reflection_id,
                verdict: validation.map(|v| v.verdict),
                reflection: decision.into_shown(),
            });
        }
        Ok(CommandOutcome { ts, triggers: out })
    }

    /// Rebuild a session by running its log back through the pipeline.
    /// With a deterministic backend the result equals the live session.
    pub async fn rebuild(
        &self,
        session_id: &str,
        records: &[LogRecord],
        config: SchedulerConfig,
    ) -> Result<SessionState, LoadError> {
        let mut state = SessionState::new(session_id, config).map_err(|source| LoadError::Replay { line: 0, source })?;
        for (i, record) in records.iter().enumerate() {
            let line = i + 1;
            if record.session != session_id {
                return Err(LoadError::ForeignSession {
                    line,
                    expected: session_id.to_string(),
                    found: record.session.clone(),
                });
            }
            let replay = |source| LoadError::Replay { line, source };
            match record.kind {
                LogKind::TaskAdvance => {
                    state.advance_task(record.task, record.ts).map_err(replay)?;
                }
                LogKind::Command => {
                    self.submit(&mut state, record.to_event()).await.map_err(replay)?;
                }
            }
        }
        Ok(state)
    }
}
