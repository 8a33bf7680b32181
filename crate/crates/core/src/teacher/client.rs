//! Bounded-concurrency, rate-limited teacher requests with retry.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, Semaphore};
use tokio::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientPolicy {
    pub max_in_flight: usize,
    pub requests_per_minute: usize,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_initial_ms: u64,
    pub backoff_factor: f64,
    pub backoff_max_ms: u64,
}

impl Default for ClientPolicy {
    fn default() -> Self {
        ClientPolicy {
            max_in_flight: 200,
            requests_per_minute: 200,
            max_retries: 2,
            backoff_initial_ms: 1_000,
            backoff_factor: 2.0,
            backoff_max_ms: 60_000,
        }
    }
}

impl ClientPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.backoff_initial_ms as f64 * self.backoff_factor.powi(retry.saturating_sub(1) as i32);
        Duration::from_millis(ms.min(self.backoff_max_ms as f64) as u64)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        if self.requests_per_minute == 0 {
            return Err("requests_per_minute must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeacherRequest {
    pub pair_id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[async_trait]
pub trait TeacherClient: Send + Sync {
    async fn complete(&self, request: &TeacherRequest) -> Result<String, RequestError>;
}

/// OpenAI-compatible chat-completions endpoint.
pub struct HttpTeacher {
    client: reqwest::Client,
    url: String,
    model: String,
    api_key: String,
}

impl HttpTeacher {
    pub fn new(endpoint: &str, model: &str, api_key: String, timeout: Duration) -> Result<Self, RequestError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RequestError::Transport(e.to_string()))?;
        Ok(HttpTeacher {
            client,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
        })
    }
}

#[async_trait]
impl TeacherClient for HttpTeacher {
    async fn complete(&self, request: &TeacherRequest) -> Result<String, RequestError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "stream": false,
        });
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| RequestError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .await
            .map_err(|e| RequestError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(RequestError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| RequestError::Malformed(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| RequestError::Malformed("missing choices[0].message.content".into()))
    }
}

/// Sliding one-minute window over request start times.
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    starts: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(limit: usize) -> Self {
        Self::new(limit, Duration::from_secs(60))
    }

    pub fn new(limit: usize, window: Duration) -> Self {
        RateLimiter {
            limit: limit.max(1),
            window,
            starts: Mutex::new(VecDeque::new()),
        }
    }

    pub async fn acquire(&self) {
        loop {
            let wait_until = {
                let mut starts = self.starts.lock().await;
                let now = Instant::now();
                while starts.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
                    starts.pop_front();
                }
                if starts.len() < self.limit {
                    starts.push_back(now);
                    return;
                }
                starts[0] + self.window
            };
            tokio::time::sleep_until(wait_until).await;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryOutcome {
    pub pair_id: String,
    pub result: Result<String, RequestError>,
    pub attempts: u32,
}

/// Issues one request with retries. Failures are returned, never raised.
pub async fn query_teacher(
    client: &dyn TeacherClient,
    request: &TeacherRequest,
    policy: &ClientPolicy,
    gate: &Semaphore,
    limiter: &RateLimiter,
) -> QueryOutcome {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let result = {
            let _permit = gate.acquire().await.expect("semaphore never closed");
            limiter.acquire().await;
            client.complete(request).await
        };
        match result {
            Ok(text) => {
                return QueryOutcome {
                    pair_id: request.pair_id.clone(),
                    result: Ok(text),
                    attempts,
                }
            }
            Err(err) if attempts > policy.max_retries => {
                log::warn!("teacher request for {} failed after {attempts} attempts: {err}", request.pair_id);
                return QueryOutcome {
                    pair_id: request.pair_id.clone(),
                    result: Err(err),
                    attempts,
                };
            }
            Err(err) => {
                log::debug!("retrying {} after attempt {attempts}: {err}", request.pair_id);
                tokio::time::sleep(policy.backoff(attempts)).await;
            }
        }
    }
}

/// Runs every request under the policy, handing each outcome to `on_outcome`
/// as it completes. Returns outcomes in request order.
pub async fn run_queries<F>(
    client: Arc<dyn TeacherClient>,
    requests: Vec<TeacherRequest>,
    policy: &ClientPolicy,
    on_outcome: F,
) -> Vec<QueryOutcome>
where
    F: Fn(&QueryOutcome) + Send + Sync + 'static,
{
    let gate = Arc::new(Semaphore::new(policy.max_in_flight.max(1)));
    let limiter = Arc::new(RateLimiter::per_minute(policy.requests_per_minute));
    let on_outcome = Arc::new(on_outcome);
    let mut handles = Vec::with_capacity(requests.len());
    for request in requests {
        let client = Arc::clone(&client);
        let gate = Arc::clone(&gate);
        let limiter = Arc::clone(&limiter);
        let policy = policy.clone();
        let on_outcome = Arc::clone(&on_outcome);
        handles.push(tokio::spawn(async move {
            let outcome = query_teacher(client.as_ref(), &request, &policy, &gate, &limiter).await;
            on_outcome(&outcome);
            outcome
        }));
    }
    let mut outcomes = Vec::with_capacity(handles.len());
    for handle in handles {
        outcomes.push(handle.await.expect("teacher task panicked"));
    }
    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Fixed(&'static str);

    #[async_trait]
    impl TeacherClient for Fixed {
        async fn complete(&self, _: &TeacherRequest) -> Result<String, RequestError> {
            Ok(self.0.to_string())
        }
    }

    /// Fails the first `failures` calls, then succeeds.
    struct Flaky {
        failures: usize,
        calls: AtomicUsize,
    }

    #[async_trait]
    impl TeacherClient for Flaky {
        async fn complete(&self, _: &TeacherRequest) -> Result<String, RequestError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(RequestError::Status { status: 503, body: "busy".into() })
            } else {
                Ok("ok".into())
            }
        }
    }

    fn request(id: &str) -> TeacherRequest {
        TeacherRequest { pair_id: id.into(), prompt: "p".into() }
    }

    fn run_one(client: &dyn TeacherClient, policy: &ClientPolicy) -> QueryOutcome {
        let gate = Semaphore::new(1);
        let limiter = RateLimiter::per_minute(100);
        tokio::runtime::Builder::new_current_thread()
            .enable_time()
            .start_paused(true)
            .build()
            .unwrap()
            .block_on(query_teacher(client, &request("a"), policy, &gate, &limiter))
    }

    #[test]
    fn pass_through() {
        let out = run_one(&Fixed("hello"), &ClientPolicy::default());
        assert_eq!(out.result.unwrap(), "hello");
        assert_eq!(out.attempts, 1);
    }

    #[test]
    fn retries_until_success() {
        let flaky = Flaky { failures: 2, calls: AtomicUsize::new(0) };
        let policy = ClientPolicy { max_retries: 3, ..Default::default() };
        let out = run_one(&flaky, &policy);
        assert_eq!(out.result.unwrap(), "ok");
        assert_eq!(out.attempts, 3);
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhaustion_is_a_record_not_a_panic() {
        let flaky = Flaky { failures: usize::MAX, calls: AtomicUsize::new(0) };
        let policy = ClientPolicy { max_retries: 2, ..Default::default() };
        let out = run_one(&flaky, &policy);
        assert!(out.result.is_err());
        assert_eq!(out.attempts, 3);
    }

    #[test]
    fn backoff_schedule() {
        let p = ClientPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_secs(1));
        assert_eq!(p.backoff(2), Duration::from_secs(2));
        assert_eq!(p.backoff(3), Duration::from_secs(4));
        let capped = ClientPolicy { backoff_max_ms: 1500, ..p };
        assert_eq!(capped.backoff(3), Duration::from_millis(1500));
    }

    #[test]
    fn policy_validation() {
        assert!(ClientPolicy::default().validate().is_ok());
        assert!(ClientPolicy { max_in_flight: 0, ..Default::default() }.validate().is_err());
    }
}
