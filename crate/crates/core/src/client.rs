//! Live outcome collection against an OpenAI-compatible chat-completions
//! endpoint: prompt rendering, retried requests, bounded-concurrency batch
//! runs mapped to ternary outcomes.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{parse_choice_answer, parse_judge_verdict, OutcomeRecord};

/// Connection settings for one served model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// Backoff base in milliseconds (1s unless overridden; tests shrink it).
    #[serde(default = "default_backoff_ms")]
    pub retry_base_ms: u64,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    1000
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if self.max_concurrency < 1 {
            return Err(Error::Config("max_concurrency must be >= 1".into()));
        }
        if self.timeout_s <= 0.0 {
            return Err(Error::Config("timeout_s must be positive".into()));
        }
        Ok(())
    }

    fn api_key(&self) -> Result<String> {
        std::env::var(&self.api_key_env).map_err(|_| {
            Error::Config(format!(
                "API key environment variable '{}' not set",
                self.api_key_env
            ))
        })
    }
}

/// Prompt shapes: single-letter multiple choice, or True/False solution
/// judging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    MultipleChoice,
    MathJudge,
}

impl TemplateKind {
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateKind::MultipleChoice => &["ques_desc", "options_text"],
            TemplateKind::MathJudge => {
                &["ques_desc", "stu_solution", "std_solution", "answer"]
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: TemplateKind,
    pub template_text: String,
}

pub const MULTIPLE_CHOICE_TEMPLATE: &str = "There is a multiple-choice question with several options, and only one of the options is the correct answer. Please select the single correct option. The question is as follows. question: {ques_desc}; options: {options_text}. Please list the letter of your choice (e.g. A) in JSON format and output it with key 'answer' as the value. Do not explain your reasoning. Output JSON format: {'answer': ''}";

pub const MATH_JUDGE_TEMPLATE: &str = "Here is a math problem with a standard answer and a student's solution. Please help me determine if the student's solution is correct. question: {ques_desc}; student solution: {stu_solution}; standard solution: {std_solution}; answer: {answer}. If the student's answer is correct, just output True; otherwise, just output False. No explanation is required. Please list your correct result (e.g. True or False) in JSON format and output it with key \"result\" as the value. Output JSON format: {'result': ''}";

impl PromptTemplate {
    pub fn multiple_choice() -> PromptTemplate {
        PromptTemplate {
            kind: TemplateKind::MultipleChoice,
            template_text: MULTIPLE_CHOICE_TEMPLATE.into(),
        }
    }

    pub fn math_judge() -> PromptTemplate {
        PromptTemplate {
            kind: TemplateKind::MathJudge,
            template_text: MATH_JUDGE_TEMPLATE.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for name in self.kind.placeholders() {
            let marker = format!("{{{name}}}");
            let count = self.template_text.matches(&marker).count();
            if count != 1 {
                return Err(Error::Config(format!(
                    "placeholder '{name}' must appear exactly once, found {count}"
                )));
            }
        }
        Ok(())
    }
}

/// Byte-exact placeholder substitution, no other mutation.
pub fn render_prompt(
    template: &PromptTemplate,
    fields: &BTreeMap<String, String>,
) -> Result<String> {
    let mut out = template.template_text.clone();
    for name in template.kind.placeholders() {
        let value = fields
            .get(*name)
            .ok_or_else(|| Error::Argument(format!("missing placeholder field '{name}'")))?;
        out = out.replacen(&format!("{{{name}}}"), value, 1);
    }
    Ok(out)
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

fn backoff_delay(config: &EndpointConfig, attempt: u32) -> Duration {
    let base = config.retry_base_ms.saturating_mul(1u64 << attempt.min(16));
    let jitter = (rand::random::<u64>() % (base / 2 + 1)).min(base);
    Duration::from_millis(base + jitter)
}

/// Single chat-completion call with retries on transport errors and 5xx.
pub fn infer_sample(config: &EndpointConfig, prompt: &str) -> Result<String> {
    config.validate()?;
    let api_key = config.api_key()?;
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(config.timeout_s))
        .build()
        .map_err(|e| Error::Transport(e.to_string()))?;
    let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
    let body = ChatRequest {
        model: &config.model_name,
        messages: vec![ChatMessage {
            role: "user",
            content: prompt,
        }],
        temperature: config.temperature,
    };
    let mut last_err = None;
    for attempt in 0..=config.max_retries {
        if attempt > 0 {
            std::thread::sleep(backoff_delay(config, attempt - 1));
        }
        let response = client
            .post(&url)
            .bearer_auth(&api_key)
            .json(&body)
            .send();
        match response {
            Err(e) => last_err = Some(Error::Transport(e.to_string())),
            Ok(resp) => {
                let status = resp.status();
                if status.is_server_error() {
                    last_err = Some(Error::Request {
                        status: status.as_u16(),
                        body: resp.text().unwrap_or_default(),
                    });
                    continue;
                }
                if !status.is_success() {
                    return Err(Error::Request {
                        status: status.as_u16(),
                        body: resp.text().unwrap_or_default(),
                    });
                }
                let parsed: ChatResponse = resp
                    .json()
                    .map_err(|e| Error::Transport(format!("bad response body: {e}")))?;
                return parsed
                    .choices
                    .first()
                    .map(|c| c.message.content.clone())
                    .ok_or_else(|| Error::Transport("response has no choices".into()));
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Transport("retries exhausted".into())))
}

/// One unit of work for a batch run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSample {
    pub sample_id: String,
    pub benchmark_id: String,
    /// Placeholder values for the template.
    pub fields: BTreeMap<String, String>,
}

fn outcome_of(kind: TemplateKind, raw: &str, gold: Option<&str>) -> i8 {
    match kind {
        TemplateKind::MultipleChoice => {
            let gold_letter = gold.and_then(|g| g.trim().chars().next());
            match gold_letter {
                Some(letter) => parse_choice_answer(raw, letter).1,
                None => -1,
            }
        }
        TemplateKind::MathJudge => parse_judge_verdict(raw).1,
    }
}

/// Runs a batch with at most max_concurrency requests in flight. Every input
/// yields exactly one record, ordered by input order; per-sample failures
/// are encoded as outcome -1 with any received text preserved.
pub fn run_batch(
    config: &EndpointConfig,
    samples: &[BatchSample],
    template: &PromptTemplate,
    gold: &BTreeMap<String, String>,
) -> Result<Vec<OutcomeRecord>> {
    config.validate()?;
    template.validate()?;
    config.api_key()?; // fail before any network call
    if template.kind == TemplateKind::MultipleChoice {
        for s in samples {
            if !gold.contains_key(&s.sample_id) {
                return Err(Error::Argument(format!(
                    "gold letter missing for sample '{}'",
                    s.sample_id
                )));
            }
        }
    }

    let results: Mutex<Vec<Option<OutcomeRecord>>> =
        Mutex::new((0..samples.len()).map(|_| None).collect());
    let next: AtomicUsize = AtomicUsize::new(0);
    let workers = config.max_concurrency.min(samples.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= samples.len() {
                    break;
                }
                let sample = &samples[idx];
                let record = process_sample(config, template, sample, gold);
                results.lock().unwrap()[idx] = Some(record);
            });
        }
    });

    Ok(results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every index processed"))
        .collect())
}

fn process_sample(
    config: &EndpointConfig,
    template: &PromptTemplate,
    sample: &BatchSample,
    gold: &BTreeMap<String, String>,
) -> OutcomeRecord {
    let base = OutcomeRecord {
        sample_id: sample.sample_id.clone(),
        benchmark_id: sample.benchmark_id.clone(),
        model_id: config.model_name.clone(),
        outcome: -1,
        raw_response: None,
    };
    let prompt = match render_prompt(template, &sample.fields) {
        Ok(p) => p,
        Err(_) => return base,
    };
    match infer_sample(config, &prompt) {
        Ok(raw) => {
            let outcome = outcome_of(
                template.kind,
                &raw,
                gold.get(&sample.sample_id).map(String::as_str),
            );
            OutcomeRecord {
                outcome,
                raw_response: Some(raw),
                ..base
            }
        }
        Err(_) => base,
    }
}

/// Renders the judge prompt for one solution, calls the endpoint and maps
/// the verdict to a ternary outcome.
pub fn judge_solution(
    config: &EndpointConfig,
    ques_desc: &str,
    stu_solution: &str,
    std_solution: &str,
    answer: &str,
) -> Result<i8> {
    for (name, value) in [
        ("ques_desc", ques_desc),
        ("stu_solution", stu_solution),
        ("std_solution", std_solution),
        ("answer", answer),
    ] {
        if value.is_empty() {
            return Err(Error::Argument(format!("empty field '{name}'")));
        }
    }
    let template = PromptTemplate::math_judge();
    let fields: BTreeMap<String, String> = [
        ("ques_desc".to_string(), ques_desc.to_string()),
        ("stu_solution".to_string(), stu_solution.to_string()),
        ("std_solution".to_string(), std_solution.to_string()),
        ("answer".to_string(), answer.to_string()),
    ]
    .into();
    let prompt = render_prompt(&template, &fields)?;
    let raw = infer_sample(config, &prompt)?;
    Ok(parse_judge_verdict(&raw).1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_verbatim() {
        let template = PromptTemplate::multiple_choice();
        template.validate().unwrap();
        let fields: BTreeMap<String, String> = [
            ("ques_desc".to_string(), "2+2?".to_string()),
            ("options_text".to_string(), "A) 4 B) 5".to_string()),
        ]
        .into();
        let prompt = render_prompt(&template, &fields).unwrap();
        assert!(prompt.contains("question: 2+2?;"));
        assert!(prompt.contains("options: A) 4 B) 5."));
        // untouched schema tail
        assert!(prompt.ends_with("Output JSON format: {'answer': ''}"));
    }

    #[test]
    fn render_missing_field_named() {
        let template = PromptTemplate::multiple_choice();
        let fields: BTreeMap<String, String> =
            [("ques_desc".to_string(), "q".to_string())].into();
        let err = render_prompt(&template, &fields).unwrap_err();
        assert!(err.to_string().contains("options_text"));
    }

    #[test]
    fn judge_template_carries_all_fields() {
        let template = PromptTemplate::math_judge();
        template.validate().unwrap();
        let fields: BTreeMap<String, String> = [
            ("ques_desc".to_string(), "Q1".to_string()),
            ("stu_solution".to_string(), "S1".to_string()),
            ("std_solution".to_string(), "S2".to_string()),
            ("answer".to_string(), "42".to_string()),
        ]
        .into();
        let prompt = render_prompt(&template, &fields).unwrap();
        for v in ["Q1", "S1", "S2", "42"] {
            assert!(prompt.contains(v));
        }
    }

    #[test]
    fn malformed_template_rejected() {
        let template = PromptTemplate {
            kind: TemplateKind::MultipleChoice,
            template_text: "only {ques_desc} here".into(),
        };
        let err = template.validate().unwrap_err();
        assert!(err.to_string().contains("options_text"));
    }

    #[test]
    fn missing_api_key_is_config_error() {
        let config = EndpointConfig {
            base_url: "http://127.0.0.1:1".into(),
            api_key_env: "STEM_TEST_NO_SUCH_KEY_VAR".into(),
            model_name: "m".into(),
            temperature: 0.0,
            timeout_s: 1.0,
            max_retries: 0,
            max_concurrency: 1,
            retry_base_ms: 1,
        };
        let err = infer_sample(&config, "hi").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn outcome_mapping() {
        assert_eq!(
            outcome_of(TemplateKind::MultipleChoice, r#"{"answer":"A"}"#, Some("A")),
            1
        );
        assert_eq!(
            outcome_of(TemplateKind::MultipleChoice, r#"{"answer":"B"}"#, Some("A")),
            0
        );
        assert_eq!(outcome_of(TemplateKind::MultipleChoice, "prose", Some("A")), -1);
        assert_eq!(outcome_of(TemplateKind::MathJudge, r#"{"result":"True"}"#, None), 1);
    }
}
