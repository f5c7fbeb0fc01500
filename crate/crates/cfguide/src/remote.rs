//! HTTP client for external classifiers.
//!
//! The wire contract is a single POST of `{"text": …, "text_pair": …}`
//! answered with `{"label": …, "probs": {class: number}}`. Any non-200
//! status is an error; transport failures and 5xx responses are retried a
//! configurable number of times.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, ClassifyError, Prediction};
use crate::dataset::Document;
use crate::parallel::map_indexed;

/// Builds the shared HTTP agent: status codes are handled by the caller and
/// one global timeout covers connect + transfer.
pub(crate) fn build_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .new_agent()
}

pub(crate) fn describe_transport_error(err: &ureq::Error) -> String {
    match err {
        ureq::Error::Timeout(_) => "request timed out".to_string(),
        other => other.to_string(),
    }
}

/// Client for a remote classifier endpoint.
#[derive(Debug, Clone)]
pub struct RemoteClassifier {
    endpoint: String,
    class_names: Vec<String>,
    retries: usize,
    timeout: Duration,
    max_parallel: usize,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    text: &'a str,
    text_pair: Option<&'a str>,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    label: String,
    probs: BTreeMap<String, f64>,
}

impl RemoteClassifier {
    /// `class_names` is the label set the caller expects; responses naming
    /// anything else are rejected.
    pub fn new(endpoint: impl Into<String>, class_names: Vec<String>) -> Self {
        let timeout = Duration::from_secs(30);
        Self {
            endpoint: endpoint.into(),
            class_names,
            retries: 2,
            timeout,
            max_parallel: 4,
            agent: build_agent(timeout),
        }
    }

    /// Number of retries after the first attempt (transport errors and 5xx).
    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self.agent = build_agent(timeout);
        self
    }

    pub fn with_max_parallel(mut self, max_parallel: usize) -> Self {
        self.max_parallel = max_parallel.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, doc: &Document) -> Result<Prediction, RetryableError> {
        let body = ClassifyRequest {
            text: &doc.text,
            text_pair: doc.text_pair.as_deref(),
        };
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| RetryableError {
                retryable: true,
                error: ClassifyError::Network(describe_transport_error(&e)),
            })?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(RetryableError {
                retryable: status >= 500,
                error: ClassifyError::Network(format!("classifier returned HTTP {status}")),
            });
        }
        let parsed: ClassifyResponse =
            response
                .body_mut()
                .read_json()
                .map_err(|e| RetryableError {
                    retryable: false,
                    error: ClassifyError::Malformed(e.to_string()),
                })?;
        validate_response(parsed, &self.class_names).map_err(|error| RetryableError {
            retryable: false,
            error,
        })
    }

    /// Classifies all documents with bounded parallel fan-out, preserving
    /// input order; each document fails or succeeds independently.
    pub fn classify_batch(&self, docs: &[Document]) -> Vec<Result<Prediction, ClassifyError>> {
        map_indexed(docs.len(), self.max_parallel, |i| self.classify(&docs[i]))
    }
}

struct RetryableError {
    retryable: bool,
    error: ClassifyError,
}

impl Classifier for RemoteClassifier {
    fn classify(&self, doc: &Document) -> Result<Prediction, ClassifyError> {
        let mut last;
        let mut attempt = 0;
        loop {
            match self.attempt(doc) {
                Ok(pred) => return Ok(pred),
                Err(e) => {
                    if !e.retryable || attempt >= self.retries {
                        return Err(e.error);
                    }
                    last = e.error;
                    log::warn!(
                        "classify attempt {} for {:?} failed ({last}), retrying",
                        attempt + 1,
                        doc.id
                    );
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(25 * attempt as u64));
                }
            }
        }
    }

    fn class_names(&self) -> &[String] {
        &self.class_names
    }
}

fn validate_response(
    resp: ClassifyResponse,
    expected: &[String],
) -> Result<Prediction, ClassifyError> {
    if resp.probs.is_empty() {
        return Err(ClassifyError::Malformed("probs map is empty".into()));
    }
    let mut total = 0.0;
    for (class, p) in &resp.probs {
        if !p.is_finite() || *p < 0.0 {
            return Err(ClassifyError::Malformed(format!(
                "probability of {class:?} is {p}"
            )));
        }
        if !expected.is_empty() && !expected.iter().any(|c| c == class) {
            return Err(ClassifyError::UnknownClass(class.clone()));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-3 {
        return Err(ClassifyError::Malformed(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    if !resp.probs.contains_key(&resp.label) {
        return Err(ClassifyError::UnknownClass(resp.label));
    }
    Ok(Prediction {
        label: resp.label,
        probs: resp.probs,
    })
}

/// One-shot convenience wrapper: classify a single document against an
/// endpoint with default settings and no expected label set.
pub fn classify_remote(endpoint: &str, doc: &Document) -> Result<Prediction, ClassifyError> {
    RemoteClassifier::new(endpoint, Vec::new()).classify(doc)
}
