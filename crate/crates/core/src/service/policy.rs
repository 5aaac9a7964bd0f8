//! Policies that play episodes in-process.

use std::sync::Arc;

use thiserror::Error;

use super::{Episode, EpisodeLimits, EpisodeStatus, ServiceError};
use crate::reward::accuracy_reward;
use crate::synthesis::{
    sketch_data_url, ChatMessage, ChatRequest, ContentPart, HttpChatProvider, ImageUrl, ProviderError, RolloutRunner,
    RunnerError,
};
use crate::taskgen::TaskInstance;
use crate::trajectory::{default_system_prompt, render_turn, Observation, StepAction};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

/// Produces the next raw assistant turn for an episode.
pub trait Policy {
    fn next_turn(&self, episode: &Episode) -> Result<String, PolicyError>;
}

/// Plays until the episode leaves the active state.
pub fn run_episode(episode: &mut Episode, policy: &dyn Policy) -> Result<EpisodeStatus, PolicyError> {
    while episode.status == EpisodeStatus::Active {
        let raw = policy.next_turn(episode)?;
        episode.submit(&raw)?;
    }
    Ok(episode.status)
}

/// Follows the task's stored plan, then answers. Answers the ground truth
/// unless `answer` is set.
#[derive(Debug, Clone, Default)]
pub struct PlanPolicy {
    pub answer: Option<String>,
}

impl Policy for PlanPolicy {
    fn next_turn(&self, episode: &Episode) -> Result<String, PolicyError> {
        let task = episode.task();
        let i = episode.transcript.steps.len();
        Ok(match task.plan.get(i) {
            Some(call) => format!("<think>Step {} of the plan.</think><tool_call>{}</tool_call>", i + 1, call.to_json()),
            None => {
                let answer = self.answer.clone().unwrap_or_else(|| task.truth.answer_text());
                format!("<think>The plan is done.</think><answer>{answer}</answer>")
            }
        })
    }
}

/// Drives a chat model: system prompt, question and `I_0`, then the
/// transcript as alternating assistant turns and observations.
pub struct ChatPolicy {
    pub provider: Arc<HttpChatProvider>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatPolicy {
    pub fn new(provider: Arc<HttpChatProvider>) -> Self {
        Self {
            provider,
            temperature: 1.0,
            max_tokens: 1024,
        }
    }

    pub fn messages(episode: &Episode) -> Vec<ChatMessage> {
        let text = |t: String| ContentPart::Text { text: t };
        let image = |s| ContentPart::ImageUrl {
            image_url: ImageUrl { url: sketch_data_url(s) },
        };
        let msg = |role: &str, content| ChatMessage {
            role: role.into(),
            content,
        };
        let task = episode.task();
        let mut out = vec![
            msg("system", vec![text(default_system_prompt())]),
            msg("user", vec![text(task.question.clone()), image(&task.initial)]),
        ];
        for step in &episode.transcript.steps {
            out.push(msg("assistant", vec![text(render_turn(step))]));
            if let StepAction::Tool { observation, .. } = &step.action {
                let content = match observation {
                    Observation::Sketch(s) => vec![text("Tool result:".into()), image(s)],
                    Observation::Error(e) => vec![text(format!("Tool error: {e}. The image is unchanged."))],
                };
                out.push(msg("user", content));
            }
        }
        out
    }
}

impl Policy for ChatPolicy {
    fn next_turn(&self, episode: &Episode) -> Result<String, PolicyError> {
        let request = ChatRequest {
            model: self.provider.config().model.clone(),
            messages: Self::messages(episode),
            temperature: self.temperature,
            max_tokens: Some(self.max_tokens),
            logprobs: false,
            top_logprobs: None,
        };
        Ok(self.provider.send(&request)?.text)
    }
}

/// Rollout runner for the RL filter backed by a chat policy.
pub struct ChatPolicyRunner {
    pub policy: ChatPolicy,
    pub limits: EpisodeLimits,
}

impl RolloutRunner for ChatPolicyRunner {
    fn run(&self, instance: &TaskInstance, rollout: usize) -> Result<f64, RunnerError> {
        let mut ep = Episode::new(format!("{}-rollout{rollout}", instance.id), instance.clone(), self.limits);
        run_episode(&mut ep, &self.policy).map_err(|e| RunnerError(e.to_string()))?;
        Ok(accuracy_reward(&ep.transcript).value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{filter_rl_pool, ChatConfig, ChatReply, FilterConfig, TransportError};
    use crate::taskgen::{generate, GenParams, TaskKind};

    fn task(kind: TaskKind, seed: u64) -> TaskInstance {
        generate(kind, &GenParams { resolution: 128, ..GenParams::default() }, seed).unwrap()
    }

    #[test]
    fn plan_policy_answers_correctly() {
        for kind in TaskKind::ALL {
            let t = task(kind, 4);
            let mut ep = Episode::new("e", t.clone(), EpisodeLimits::default());
            assert_eq!(run_episode(&mut ep, &PlanPolicy::default()).unwrap(), EpisodeStatus::Answered);
            assert_eq!(ep.transcript.tool_steps(), t.plan.len());
            assert_eq!(accuracy_reward(&ep.transcript).value, 1.0);
            ep.transcript.validate().unwrap();
        }
    }

    #[test]
    fn chat_policy_sees_observations() {
        let t = task(TaskKind::Rotation, 1);
        let plan = t.plan.clone();
        let answer = t.truth.answer_text();
        let transport = move |req: &ChatRequest| -> Result<ChatReply, TransportError> {
            let assistant = req.messages.iter().filter(|m| m.role == "assistant").count();
            let images = req
                .messages
                .iter()
                .flat_map(|m| &m.content)
                .filter(|c| matches!(c, ContentPart::ImageUrl { .. }))
                .count();
            assert_eq!(images, assistant + 1);
            Ok(ChatReply::text(match plan.get(assistant) {
                Some(c) => format!("<think>go</think><tool_call>{}</tool_call>", c.to_json()),
                None => format!("<think>done</think><answer>{answer}</answer>"),
            }))
        };
        let provider = Arc::new(HttpChatProvider::with_transport(ChatConfig::default(), transport));
        let runner = ChatPolicyRunner {
            policy: ChatPolicy::new(provider),
            limits: EpisodeLimits::default(),
        };
        assert_eq!(runner.run(&t, 0).unwrap(), 1.0);
        let report = filter_rl_pool(&[t], &runner, FilterConfig::default()).unwrap();
        assert_eq!(report.outcomes[0].successes, 8);
        assert!(report.kept.is_empty());
    }
}
