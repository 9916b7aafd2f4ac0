//! Activity classes, prompts, answer parsing and the classifier port.

use std::time::Duration;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{overlap_score, Annotation};
use crate::pipeline::ActivityInterval;
use crate::rng::{mix, stream_rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("unknown prompt template {0}; valid ids are 1, 2 and 3")]
    UnknownTemplate(u8),
    #[error("unknown activity class {0}; valid ids are 1 to 16")]
    UnknownClass(u8),
    #[error("classifier request failed: {0}")]
    Transport(String),
    #[error("classifier response malformed: {0}")]
    Response(String),
}

pub const NUM_CLASSES: u8 = 16;

/// Class names, indexed by id - 1.
pub const CLASS_NAMES: [&str; NUM_CLASSES as usize] = [
    "Normal Forward Driving",
    "Drinking",
    "Phone Call(right)",
    "Phone Call(left)",
    "Eating",
    "Text (Right)",
    "Text (Left)",
    "Reaching behind",
    "Adjust control panel",
    "Pick up from floor (Driver)",
    "Pick up from floor (Passenger)",
    "Talk to passenger at the right",
    "Talk to passenger at backseat",
    "Yawning",
    "Hand on head",
    "Singing and dancing with music",
];

/// Wording used in the list-style prompts, indexed by id - 1.
pub const PROMPT_PARAPHRASES: [&str; NUM_CLASSES as usize] = [
    "Normal Forward Driving",
    "Pretending to drink a beverage",
    "Simulating a phone call with the right hand",
    "Simulating a phone call with the left hand",
    "Pretending to eat food",
    "Simulating texting with the right hand",
    "Simulating texting with the left hand",
    "Pretending to reach behind the seat",
    "Simulating adjusting the control panel",
    "Pretending to pick up an object from the floor on the driver's side",
    "Pretending to pick up an object from the floor on the passenger's side",
    "Simulating talking to a passenger seated on the right side",
    "Simulating talking to a passenger seated in the backseat",
    "Simulating yawning",
    "Pretending to place a hand on the head",
    "Simulating singing or dancing to music",
];

/// Further spellings from the first prompt's activity list.
const EXTRA_ALIASES: [(u8, &str); 2] = [(9, "Adjusting control panel"), (16, "Singing or dancing with music")];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ActivityClass(u8);

impl ActivityClass {
    pub fn from_id(id: u8) -> Result<Self, ClassifyError> {
        if (1..=NUM_CLASSES).contains(&id) {
            Ok(Self(id))
        } else {
            Err(ClassifyError::UnknownClass(id))
        }
    }

    pub fn all() -> impl Iterator<Item = ActivityClass> {
        (1..=NUM_CLASSES).map(ActivityClass)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.0 as usize - 1]
    }
}

impl TryFrom<u8> for ActivityClass {
    type Error = ClassifyError;
    fn try_from(id: u8) -> Result<Self, Self::Error> {
        Self::from_id(id)
    }
}

impl From<ActivityClass> for u8 {
    fn from(c: ActivityClass) -> u8 {
        c.0
    }
}

const PROMPT_1: &str = "Based on the following activities: Normal Forward Driving, Drinking, Phone Call (right), Phone Call (left), Eating, Text (Right), Text (Left), Reaching behind, Adjusting control panel, Pick up from floor (Driver), Pick up from floor (Passenger), Talk to passenger at the right, Talk to passenger at backseat, Yawning, Hand on head, and Singing or dancing with music, which activity is being performed in the video?";

const PROMPT_LIST: &str = "Is the driver simulating any of the following activities? 1. Normal Forward Driving, 2. Pretending to drink a beverage, 3. Simulating a phone call with the right hand, 4. Simulating a phone call with the left hand, 5. Pretending to eat food, 6. Simulating texting with the right hand, 7. Simulating texting with the left hand, 8. Pretending to reach behind the seat, 9. Simulating adjusting the control panel, 10. Pretending to pick up an object from the floor on the driver's side, 11. Pretending to pick up an object from the floor on the passenger's side, 12. Simulating talking to a passenger seated on the right side, 13. Simulating talking to a passenger seated in the backseat, 14. Simulating yawning, 15. Pretending to place a hand on the head, 16. Simulating singing or dancing to music.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PromptTemplate(u8);

impl PromptTemplate {
    pub fn from_id(id: u8) -> Result<Self, ClassifyError> {
        if (1..=3).contains(&id) {
            Ok(Self(id))
        } else {
            Err(ClassifyError::UnknownTemplate(id))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn text(self) -> String {
        match self.0 {
            1 => PROMPT_1.to_string(),
            2 => format!("{PROMPT_LIST} Please provide a 'yes' or 'no' response for each activity."),
            _ => format!("{PROMPT_LIST} Please provide the activity the driver is doing."),
        }
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self(3)
    }
}

impl TryFrom<u8> for PromptTemplate {
    type Error = ClassifyError;
    fn try_from(id: u8) -> Result<Self, Self::Error> {
        Self::from_id(id)
    }
}

impl From<PromptTemplate> for u8 {
    fn from(t: PromptTemplate) -> u8 {
        t.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassOutcome {
    Class(ActivityClass),
    NoActivity,
}

impl ClassOutcome {
    pub fn class_id(self) -> Option<u8> {
        match self {
            ClassOutcome::Class(c) => Some(c.id()),
            ClassOutcome::NoActivity => None,
        }
    }

    /// Class name, or `"no"`.
    pub fn answer_text(self) -> &'static str {
        match self {
            ClassOutcome::Class(c) => c.name(),
            ClassOutcome::NoActivity => "no",
        }
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Every recognized phrase with its class, as lowercase word sequences.
pub fn alias_table() -> Vec<(ActivityClass, &'static str)> {
    let mut out = Vec::new();
    for c in ActivityClass::all() {
        out.push((c, c.name()));
        out.push((c, PROMPT_PARAPHRASES[c.id() as usize - 1]));
    }
    for (id, alias) in EXTRA_ALIASES {
        out.push((ActivityClass(id), alias));
    }
    out
}

/// Map free text to a class.
///
/// Matching works on lowercase alphanumeric words, so spacing and
/// punctuation differences ("Phone Call(right)" vs "Phone Call (right)")
/// do not matter. The earliest mention wins; at the same position the
/// longest phrase wins. No mention at all, including a plain "no", gives
/// [`ClassOutcome::NoActivity`].
pub fn parse_answer(text: &str) -> ClassOutcome {
    let words = tokens(text);
    let mut best: Option<(usize, usize, ActivityClass)> = None;
    for (class, alias) in alias_table() {
        let needle = tokens(alias);
        if needle.is_empty() || needle.len() > words.len() {
            continue;
        }
        if let Some(pos) = words.windows(needle.len()).position(|w| w == needle.as_slice()) {
            let better = match best {
                None => true,
                Some((p, len, _)) => pos < p || (pos == p && needle.len() > len),
            };
            if better {
                best = Some((pos, needle.len(), class));
            }
        }
    }
    best.map_or(ClassOutcome::NoActivity, |(_, _, c)| ClassOutcome::Class(c))
}

/// Body sent to an external classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRequest {
    pub clip: String,
    pub start_s: f64,
    pub end_s: f64,
    pub prompt: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResponse {
    pub answer: String,
}

pub fn build_request(clip: &str, interval: &ActivityInterval, template: PromptTemplate) -> ClassificationRequest {
    ClassificationRequest {
        clip: clip.to_string(),
        start_s: interval.start_s,
        end_s: interval.end_s,
        prompt: template.text(),
    }
}

/// Anything that answers a request with free text.
pub trait Classifier: Sync {
    fn answer(&self, req: &ClassificationRequest) -> Result<String, ClassifyError>;
}

/// Ground-truth oracle with a configurable error rate.
///
/// Returns the class of the annotation that overlaps the interval most.
/// With probability `error_rate` the answer is a uniformly chosen wrong
/// class instead. The draw depends only on `seed` and the interval bounds.
pub fn mock_classify(
    start_s: f64,
    end_s: f64,
    ground_truth: &[Annotation],
    error_rate: f64,
    seed: u64,
) -> ClassOutcome {
    let best = ground_truth
        .iter()
        .map(|a| (a.class_id, overlap_score(a.span(), (start_s, end_s))))
        .filter(|&(_, os)| os > 0.0)
        .fold(None::<(u8, f64)>, |acc, cur| match acc {
            Some(a) if a.1 >= cur.1 => Some(a),
            _ => Some(cur),
        });
    let Some((truth, _)) = best else {
        return ClassOutcome::NoActivity;
    };
    let mut rng = stream_rng(mix(mix(seed, start_s.to_bits()), end_s.to_bits()), 0);
    let flip = rng.random::<f64>() < error_rate;
    let class = if flip {
        let k = rng.random_range(1..NUM_CLASSES);
        if k >= truth {
            k + 1
        } else {
            k
        }
    } else {
        truth
    };
    ActivityClass::from_id(class).map_or(ClassOutcome::NoActivity, ClassOutcome::Class)
}

#[derive(Clone, Debug)]
pub struct MockClassifier {
    pub ground_truth: Vec<Annotation>,
    pub error_rate: f64,
    pub seed: u64,
}

impl Classifier for MockClassifier {
    fn answer(&self, req: &ClassificationRequest) -> Result<String, ClassifyError> {
        let outcome = mock_classify(req.start_s, req.end_s, &self.ground_truth, self.error_rate, self.seed);
        Ok(outcome.answer_text().to_string())
    }
}

/// JSON-over-HTTP client for an external video question answering service.
pub struct HttpClassifier {
    agent: ureq::Agent,
    endpoint: String,
    retries: u32,
}

impl HttpClassifier {
    pub fn new(endpoint: &str, timeout_s: f64, retries: u32) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs_f64(timeout_s))).build().into();
        Self { agent, endpoint: endpoint.to_string(), retries }
    }

    fn attempt(&self, req: &ClassificationRequest) -> Result<String, ClassifyError> {
        let mut resp =
            self.agent.post(&self.endpoint).send_json(req).map_err(|e| ClassifyError::Transport(e.to_string()))?;
        let body: ClassificationResponse =
            resp.body_mut().read_json().map_err(|e| ClassifyError::Response(e.to_string()))?;
        Ok(body.answer)
    }
}

impl Classifier for HttpClassifier {
    fn answer(&self, req: &ClassificationRequest) -> Result<String, ClassifyError> {
        let mut last = None;
        for attempt in 0..=self.retries {
            match self.attempt(req) {
                Ok(a) => return Ok(a),
                Err(e) => {
                    log::warn!("classifier attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Classify every interval; output is sorted by start time.
///
/// `class_id` and `label` are filled in. Classifier failures become
/// no-activity results labelled `error: ...`.
pub fn classify_intervals(
    intervals: &[ActivityInterval],
    classifier: &dyn Classifier,
    clip: Option<&str>,
    template: PromptTemplate,
) -> Vec<ActivityInterval> {
    let mut out: Vec<ActivityInterval> = intervals
        .par_iter()
        .map(|iv| {
            let req = build_request(clip.unwrap_or(&iv.video_id), iv, template);
            let mut res = iv.clone();
            match classifier.answer(&req) {
                Ok(text) => {
                    let outcome = parse_answer(&text);
                    res.class_id = outcome.class_id();
                    res.label = Some(outcome.answer_text().to_string());
                }
                Err(e) => {
                    res.class_id = None;
                    res.label = Some(format!("error: {e}"));
                }
            }
            res
        })
        .collect();
    out.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.end_s.total_cmp(&b.end_s)));
    out
}
