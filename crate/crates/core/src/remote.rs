//! Client-side decoding against an OpenAI-compatible completions endpoint.
//!
//! The endpoint only exposes per-step top-n log-probabilities, so the
//! adapter renormalizes that head, applies the truncation strategy
//! client-side, samples locally, and re-submits the grown prompt one token
//! at a time. True tail mass is unobservable through such APIs; whenever a
//! strategy could have reached past the returned head, the step record
//! carries an explicit coverage warning. Requests are issued strictly one
//! at a time.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strategy::{sample_token, step_distribution, Strategy, StrategySpec};
use crate::vocab::ProbVector;

/// Errors from the remote adapter, separated by failure class.
#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("http status {status}")]
    Http { status: u16 },

    #[error("authentication rejected (status {status})")]
    Auth { status: u16 },

    #[error("auth token variable {var} is not set")]
    MissingAuth { var: String },

    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },

    #[error("malformed response: {0}")]
    BadResponse(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

type RemoteResult<T> = std::result::Result<T, RemoteError>;

/// A completions endpoint returning per-position top log-probabilities.
#[derive(Debug, Clone)]
pub struct RemoteEndpoint {
    /// Full URL of the completions route.
    pub url: String,
    /// Optional model name forwarded in the request body.
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: Option<String>,
    /// How many alternatives to request per position (>= 1).
    pub top_logprobs: usize,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Sampling stops when this token text is produced.
    pub stop_token: String,
}

impl RemoteEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: None,
            auth_env: None,
            top_logprobs: 5,
            timeout: Duration::from_secs(30),
            max_retries: 3,
            stop_token: "<|endoftext|>".to_string(),
        }
    }
}

/// One decoding step against the endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// Returned alternatives, highest log-probability first.
    pub top: Vec<(String, f64)>,
    /// Probability mass the returned head covers before renormalization.
    pub covered_mass: f64,
    /// True when the strategy could have needed tokens beyond the head.
    pub coverage_warning: bool,
    pub chosen: String,
}

/// A remote rollout: chosen tokens plus per-step top-logprob records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemoteRollout {
    pub tokens: Vec<String>,
    pub text: String,
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    logprobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    logprobs: Option<LogprobData>,
}

#[derive(Deserialize)]
struct LogprobData {
    top_logprobs: Vec<BTreeMap<String, f64>>,
}

fn bearer_token(endpoint: &RemoteEndpoint) -> RemoteResult<Option<String>> {
    match &endpoint.auth_env {
        None => Ok(None),
        Some(var) => std::env::var(var)
            .map(Some)
            .map_err(|_| RemoteError::MissingAuth { var: var.clone() }),
    }
}

fn post_step(
    agent: &ureq::Agent,
    endpoint: &RemoteEndpoint,
    token: &Option<String>,
    prompt: &str,
) -> RemoteResult<CompletionResponse> {
    let body = CompletionRequest {
        prompt,
        max_tokens: 1,
        logprobs: endpoint.top_logprobs,
        model: endpoint.model.as_deref(),
    };
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        let mut req = agent.post(&endpoint.url);
        if let Some(tok) = token {
            req = req.header("Authorization", &format!("Bearer {tok}"));
        }
        match req.send_json(&body) {
            Ok(mut resp) => {
                return resp
                    .body_mut()
                    .read_json::<CompletionResponse>()
                    .map_err(|e| RemoteError::BadResponse(e.to_string()));
            }
            Err(ureq::Error::StatusCode(status)) => {
                if status == 401 || status == 403 {
                    return Err(RemoteError::Auth { status });
                }
                let retryable = status == 429 || status >= 500;
                if !retryable || attempt > endpoint.max_retries {
                    return Err(RemoteError::Http { status });
                }
            }
            Err(ureq::Error::Timeout(_)) => {
                if attempt > endpoint.max_retries {
                    return Err(RemoteError::Timeout { attempts: attempt });
                }
            }
            Err(other) => {
                if attempt > endpoint.max_retries {
                    return Err(RemoteError::Transport {
                        attempts: attempt,
                        message: other.to_string(),
                    });
                }
            }
        }
        // capped exponential backoff; requests are idempotent reads
        let backoff = Duration::from_millis(100)
            .saturating_mul(1u32 << attempt.min(5))
            .min(Duration::from_secs(2));
        std::thread::sleep(backoff);
    }
}

/// True when the strategy might have selected tokens the endpoint did not
/// return.
fn coverage_warning(spec: &StrategySpec, sorted: &[(String, f64)], covered: f64) -> bool {
    let max_p = sorted.first().map(|(_, lp)| lp.exp()).unwrap_or(0.0);
    let min_p = sorted.last().map(|(_, lp)| lp.exp()).unwrap_or(0.0);
    let tail_exists = covered < 1.0 - 1e-9;
    match spec.strategy() {
        Strategy::Greedy => false,
        Strategy::TopK { k } => k > sorted.len() && tail_exists,
        Strategy::TopP { p } => covered < p,
        // unobserved tokens are no more probable than the smallest returned
        Strategy::MinP { p_base } => tail_exists && min_p >= p_base * max_p,
        Strategy::Epsilon { eps } => tail_exists && min_p >= eps,
        Strategy::Eta { .. } | Strategy::TemperatureOnly => covered < 0.999,
        Strategy::Beam { .. } => true,
    }
}

/// Rolls out up to `max_len` tokens against the endpoint, applying the
/// strategy client-side over each step's renormalized top-n head.
pub fn remote_rollout<R: Rng + ?Sized>(
    endpoint: &RemoteEndpoint,
    prompt: &str,
    spec: &StrategySpec,
    rng: &mut R,
    max_len: usize,
) -> RemoteResult<RemoteRollout> {
    if spec.is_beam() {
        return Err(RemoteError::Unsupported(
            "beam search needs full-path rescoring; use a sampling strategy".into(),
        ));
    }
    if endpoint.top_logprobs < 1 {
        return Err(RemoteError::Unsupported(
            "top_logprobs depth must be >= 1".into(),
        ));
    }
    let token = bearer_token(endpoint)?;
    let config = ureq::Agent::config_builder()
        .timeout_global(Some(endpoint.timeout))
        .build();
    let agent: ureq::Agent = config.into();

    let mut current = prompt.to_string();
    let mut tokens = Vec::new();
    let mut steps = Vec::new();
    for _ in 0..max_len {
        let resp = post_step(&agent, endpoint, &token, &current)?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| RemoteError::BadResponse("no choices in response".into()))?;
        let logprobs = choice
            .logprobs
            .ok_or_else(|| RemoteError::BadResponse("response carries no logprobs".into()))?;
        let position = logprobs
            .top_logprobs
            .into_iter()
            .next()
            .ok_or_else(|| RemoteError::BadResponse("empty top_logprobs".into()))?;
        if position.is_empty() {
            return Err(RemoteError::BadResponse("empty logprob map".into()));
        }

        // highest probability first, ties by token text
        let mut sorted: Vec<(String, f64)> = position.into_iter().collect();
        sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let covered: f64 = sorted.iter().map(|(_, lp)| lp.exp()).sum();
        let warning = coverage_warning(spec, &sorted, covered);

        // renormalize the head and clamp top_k to the visible depth
        let head =
            ProbVector::new(sorted.iter().map(|(_, lp)| lp.exp() / covered).collect())
                .map_err(|e| RemoteError::BadResponse(e.to_string()))?;
        let effective = match spec.strategy() {
            Strategy::TopK { k } if k > head.len() => {
                StrategySpec::top_k(head.len(), spec.tau())
                    .expect("clamped top_k is valid")
            }
            _ => *spec,
        };
        let step = step_distribution(&head, &effective)
            .map_err(|e| RemoteError::BadResponse(e.to_string()))?;
        let idx = if effective.is_greedy() {
            step.argmax()
        } else {
            sample_token(&step, rng)
        };
        let chosen = sorted[idx.index()].0.clone();

        steps.push(StepRecord {
            top: sorted,
            covered_mass: covered,
            coverage_warning: warning,
            chosen: chosen.clone(),
        });
        if chosen == endpoint.stop_token {
            break;
        }
        current.push_str(&chosen);
        tokens.push(chosen);
    }
    let text = current[prompt.len()..].to_string();
    Ok(RemoteRollout {
        tokens,
        text,
        steps,
    })
}
