//! Task definitions and instruction templates.
//!
//! Each [`TaskSpec`] names a builder ([`TaskKind`]); further tasks can be
//! registered from configuration by reusing a builder under a new id with
//! their own templates.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Placeholders a template may use.
pub const PLACEHOLDERS: [&str; 5] = ["options", "phrase", "finding", "findings_section", "question"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskCategory {
    CoarsePerception,
    FinePerception,
    TextGeneration,
    QuestionAnswering,
    Misc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum AnswerFormat {
    Mcq { k: usize },
    OpenText,
    Box,
    TextOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    View,
    Labels,
    Boxes,
    Findings,
    Impression,
    Prior,
    Qa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ViewClassification,
    DiseaseBinary,
    DiseaseSingle,
    DiseaseMulti,
    FineGrained,
    Grounding,
    Temporal,
    Vqa,
    FindingsGeneration,
    FindingsSummarization,
}

impl TaskKind {
    pub const ALL: [TaskKind; 10] = [
        TaskKind::ViewClassification,
        TaskKind::DiseaseBinary,
        TaskKind::DiseaseSingle,
        TaskKind::DiseaseMulti,
        TaskKind::FineGrained,
        TaskKind::Grounding,
        TaskKind::Temporal,
        TaskKind::Vqa,
        TaskKind::FindingsGeneration,
        TaskKind::FindingsSummarization,
    ];

    pub fn default_id(self) -> &'static str {
        match self {
            TaskKind::ViewClassification => "view_classification",
            TaskKind::DiseaseBinary => "disease_binary",
            TaskKind::DiseaseSingle => "disease_single",
            TaskKind::DiseaseMulti => "disease_multi",
            TaskKind::FineGrained => "finegrained",
            TaskKind::Grounding => "grounding",
            TaskKind::Temporal => "temporal",
            TaskKind::Vqa => "vqa",
            TaskKind::FindingsGeneration => "findings_generation",
            TaskKind::FindingsSummarization => "findings_summarization",
        }
    }

    pub fn category(self) -> TaskCategory {
        match self {
            TaskKind::ViewClassification
            | TaskKind::DiseaseBinary
            | TaskKind::DiseaseSingle
            | TaskKind::DiseaseMulti => TaskCategory::CoarsePerception,
            TaskKind::FineGrained | TaskKind::Grounding => TaskCategory::FinePerception,
            TaskKind::FindingsGeneration | TaskKind::FindingsSummarization => {
                TaskCategory::TextGeneration
            }
            TaskKind::Vqa => TaskCategory::QuestionAnswering,
            TaskKind::Temporal => TaskCategory::Misc,
        }
    }

    pub fn answer_format(self) -> AnswerFormat {
        match self {
            TaskKind::ViewClassification | TaskKind::Temporal => AnswerFormat::Mcq { k: 3 },
            TaskKind::DiseaseSingle | TaskKind::DiseaseMulti => AnswerFormat::Mcq { k: 4 },
            TaskKind::DiseaseBinary | TaskKind::FineGrained | TaskKind::Vqa => {
                AnswerFormat::Mcq { k: 2 }
            }
            TaskKind::Grounding => AnswerFormat::Box,
            TaskKind::FindingsGeneration => AnswerFormat::OpenText,
            TaskKind::FindingsSummarization => AnswerFormat::TextOnly,
        }
    }

    pub fn required_annotations(self) -> BTreeSet<AnnotationKind> {
        use AnnotationKind::*;
        let kinds: &[AnnotationKind] = match self {
            TaskKind::ViewClassification => &[View],
            TaskKind::DiseaseBinary | TaskKind::DiseaseSingle | TaskKind::DiseaseMulti => &[Labels],
            TaskKind::FineGrained => &[Labels, Findings],
            TaskKind::Grounding => &[Boxes],
            TaskKind::Temporal => &[Prior],
            TaskKind::Vqa => &[Qa],
            TaskKind::FindingsGeneration => &[Findings],
            TaskKind::FindingsSummarization => &[Findings, Impression],
        };
        kinds.iter().copied().collect()
    }

    /// Placeholders every template of this task must use, and no others.
    pub fn required_placeholders(self) -> BTreeSet<&'static str> {
        let names: &[&str] = match self {
            TaskKind::ViewClassification
            | TaskKind::DiseaseSingle
            | TaskKind::DiseaseMulti
            | TaskKind::FineGrained => &["options"],
            TaskKind::DiseaseBinary | TaskKind::Temporal => &["finding", "options"],
            TaskKind::Vqa => &["question", "options"],
            TaskKind::Grounding => &["phrase"],
            TaskKind::FindingsGeneration => &[],
            TaskKind::FindingsSummarization => &["findings_section"],
        };
        names.iter().copied().collect()
    }

    /// Number of images placed in each triplet.
    pub fn image_count(self) -> usize {
        match self {
            TaskKind::Temporal => 2,
            TaskKind::FindingsSummarization => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub kind: TaskKind,
    pub category: TaskCategory,
    pub required_annotations: BTreeSet<AnnotationKind>,
    pub answer_format: AnswerFormat,
}

impl TaskSpec {
    pub fn from_kind(kind: TaskKind) -> Self {
        Self::with_id(kind.default_id(), kind)
    }

    pub fn with_id(task_id: impl Into<String>, kind: TaskKind) -> Self {
        Self {
            task_id: task_id.into(),
            kind,
            category: kind.category(),
            required_annotations: kind.required_annotations(),
            answer_format: kind.answer_format(),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |reason: &str| CorpusError::InvalidTemplate {
            task: self.task_id.clone(),
            reason: reason.into(),
        };
        match self.answer_format {
            AnswerFormat::Mcq { k } if k < 2 => return Err(bad("mcq needs k >= 2")),
            AnswerFormat::TextOnly if self.kind.image_count() != 0 => {
                return Err(bad("text-only tasks take no images"))
            }
            _ => {}
        }
        if self.answer_format != self.kind.answer_format() {
            return Err(bad("answer format does not match the task builder"));
        }
        if !self.kind.required_annotations().is_subset(&self.required_annotations) {
            return Err(bad("required annotations omit what the builder reads"));
        }
        Ok(())
    }
}

fn placeholder_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub task_id: String,
    pub template: String,
}

impl InstructionTemplate {
    pub fn new(task_id: impl Into<String>, template: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            template: template.into(),
        }
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        placeholder_pattern()
            .captures_iter(&self.template)
            .map(|c| c[1].to_string())
            .collect()
    }

    pub fn validate_for(&self, spec: &TaskSpec) -> Result<(), CorpusError> {
        let found = self.placeholders();
        let required: BTreeSet<String> = spec
            .kind
            .required_placeholders()
            .into_iter()
            .map(str::to_owned)
            .collect();
        if found != required {
            return Err(CorpusError::InvalidTemplate {
                task: spec.task_id.clone(),
                reason: format!("template {:?} uses {found:?}, expected {required:?}", self.template),
            });
        }
        Ok(())
    }

    /// Substitutes placeholders; unknown keys are left untouched.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        placeholder_pattern()
            .replace_all(&self.template, |caps: &regex::Captures| {
                values
                    .iter()
                    .find(|(k, _)| *k == &caps[1])
                    .map_or_else(|| caps[0].to_string(), |(_, v)| v.to_string())
            })
            .into_owned()
    }
}

fn template_texts(kind: TaskKind) -> [&'static str; 10] {
    match kind {
        TaskKind::ViewClassification => [
            "What is the view of this chest X-ray? {options}",
            "Identify the projection of this radiograph. {options}",
            "Which view is shown? {options}",
            "Classify the imaging view. {options}",
            "From which view was this chest film taken? {options}",
            "Determine the radiographic view. {options}",
            "Select the view of this image. {options}",
            "What projection is this? {options}",
            "Name the view of this chest radiograph. {options}",
            "Choose the acquisition view. {options}",
        ],
        TaskKind::DiseaseBinary => [
            "Is there {finding}? {options}",
            "Does this chest X-ray show {finding}? {options}",
            "Is {finding} present? {options}",
            "Any evidence of {finding}? {options}",
            "Can you see {finding} here? {options}",
            "Does the image contain {finding}? {options}",
            "Is {finding} seen on this radiograph? {options}",
            "Check for {finding}. Is it present? {options}",
            "Is this image positive for {finding}? {options}",
            "Do you find {finding}? {options}",
        ],
        TaskKind::DiseaseSingle => [
            "Which finding is present? {options}",
            "Identify the finding in this image. {options}",
            "What abnormality is shown? {options}",
            "Select the finding seen here. {options}",
            "Which of these is present? {options}",
            "Name the finding on this chest X-ray. {options}",
            "What does this radiograph show? {options}",
            "Pick the finding present in the image. {options}",
            "Which disease is visible? {options}",
            "Choose the observed finding. {options}",
        ],
        TaskKind::DiseaseMulti => [
            "Which set of findings is present? {options}",
            "Identify all findings in this image. {options}",
            "What findings are shown? {options}",
            "Select the findings seen here. {options}",
            "Which combination is present? {options}",
            "Name the findings on this chest X-ray. {options}",
            "What does this radiograph show? {options}",
            "Pick the findings present in the image. {options}",
            "Which diseases are visible? {options}",
            "Choose the observed findings. {options}",
        ],
        TaskKind::FineGrained => [
            "Which description fits best? {options}",
            "Select the precise finding. {options}",
            "Which is shown? {options}",
            "Choose the correct description. {options}",
            "What exactly is seen? {options}",
            "Pick the accurate finding. {options}",
            "Which statement matches the image? {options}",
            "Distinguish the finding. {options}",
            "Which finding is present here? {options}",
            "Select the matching finding. {options}",
        ],
        TaskKind::Grounding => [
            "Locate {phrase}.",
            "Where is {phrase}? Give a box.",
            "Find {phrase} in the image.",
            "Box the {phrase}.",
            "Ground the phrase: {phrase}.",
            "Give the bounding box of {phrase}.",
            "Mark {phrase}.",
            "Show where {phrase} is.",
            "Region of {phrase}?",
            "Localize {phrase}.",
        ],
        TaskKind::Temporal => [
            "How has {finding} changed? {options}",
            "Compare with the prior: {finding}? {options}",
            "What is the progression of {finding}? {options}",
            "Has {finding} changed since the prior study? {options}",
            "Assess the change in {finding}. {options}",
            "Given both images, how is {finding}? {options}",
            "Describe {finding} over time. {options}",
            "Is {finding} better or worse? {options}",
            "Track {finding} between studies. {options}",
            "Interval change in {finding}? {options}",
        ],
        TaskKind::Vqa => [
            "{question} {options}",
            "Answer: {question} {options}",
            "Question: {question} {options}",
            "Look at the image. {question} {options}",
            "{question} Choose one. {options}",
            "Please answer. {question} {options}",
            "Q: {question} {options}",
            "Based on the image, {question} {options}",
            "{question} Reply with an option. {options}",
            "Consider the X-ray. {question} {options}",
        ],
        TaskKind::FindingsGeneration => [
            "Write the findings.",
            "Describe the findings.",
            "Generate the findings section.",
            "What are the findings?",
            "Report the findings.",
            "Give the findings of this X-ray.",
            "Findings?",
            "Draft the findings.",
            "List the findings.",
            "Write a findings section.",
        ],
        TaskKind::FindingsSummarization => [
            "Summarize: {findings_section}",
            "Write the impression for: {findings_section}",
            "Findings: {findings_section} Impression?",
            "Condense these findings: {findings_section}",
            "Give an impression. {findings_section}",
            "Summarize the findings. {findings_section}",
            "Impression for the findings: {findings_section}",
            "Write a summary: {findings_section}",
            "{findings_section} Summarize.",
            "Key observations of: {findings_section}",
        ],
    }
}

/// The shipped template set: ten per task.
pub fn default_templates(kind: TaskKind, task_id: &str) -> Vec<InstructionTemplate> {
    template_texts(kind)
        .into_iter()
        .map(|t| InstructionTemplate::new(task_id, t))
        .collect()
}

/// Task specs and their templates, keyed by task id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRegistry {
    specs: BTreeMap<String, TaskSpec>,
    templates: BTreeMap<String, Vec<InstructionTemplate>>,
}

pub const MAX_TEMPLATES: usize = 10;

impl TaskRegistry {
    pub fn register(
        &mut self,
        spec: TaskSpec,
        templates: Vec<InstructionTemplate>,
    ) -> Result<(), CorpusError> {
        spec.validate()?;
        if templates.is_empty() || templates.len() > MAX_TEMPLATES {
            return Err(CorpusError::InvalidTemplate {
                task: spec.task_id.clone(),
                reason: format!("need 1..={MAX_TEMPLATES} templates, got {}", templates.len()),
            });
        }
        for t in &templates {
            t.validate_for(&spec)?;
        }
        self.templates.insert(spec.task_id.clone(), templates);
        self.specs.insert(spec.task_id.clone(), spec);
        Ok(())
    }

    pub fn spec(&self, task_id: &str) -> Result<&TaskSpec, CorpusError> {
        self.specs
            .get(task_id)
            .ok_or_else(|| CorpusError::UnknownTask(task_id.to_string()))
    }

    pub fn templates(&self, task_id: &str) -> Result<&[InstructionTemplate], CorpusError> {
        self.templates
            .get(task_id)
            .map(Vec::as_slice)
            .ok_or_else(|| CorpusError::UnknownTask(task_id.to_string()))
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }
}

pub fn default_registry() -> TaskRegistry {
    let mut reg = TaskRegistry::default();
    for kind in TaskKind::ALL {
        reg.register(TaskSpec::from_kind(kind), default_templates(kind, kind.default_id()))
            .expect("shipped templates are valid");
    }
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_set_has_ten_valid_templates_per_task() {
        let reg = default_registry();
        assert_eq!(reg.task_ids().count(), 10);
        for id in reg.task_ids() {
            assert_eq!(reg.templates(id).unwrap().len(), 10, "{id}");
        }
        let categories: BTreeSet<_> = TaskKind::ALL.iter().map(|k| k.category()).collect();
        assert_eq!(categories.len(), 5);
    }

    #[test]
    fn template_placeholder_checks() {
        let spec = TaskSpec::from_kind(TaskKind::DiseaseBinary);
        assert!(InstructionTemplate::new("disease_binary", "Is there {finding}? {options}")
            .validate_for(&spec)
            .is_ok());
        assert!(InstructionTemplate::new("disease_binary", "Is there {finding}?")
            .validate_for(&spec)
            .is_err());
        assert!(InstructionTemplate::new("disease_binary", "{finding} {options} {phrase}")
            .validate_for(&spec)
            .is_err());
    }

    #[test]
    fn registry_rejects_too_many_templates_and_bad_specs() {
        let mut reg = TaskRegistry::default();
        let mut t = default_templates(TaskKind::Grounding, "grounding");
        t.push(t[0].clone());
        assert!(reg.register(TaskSpec::from_kind(TaskKind::Grounding), t).is_err());
        let mut spec = TaskSpec::from_kind(TaskKind::DiseaseBinary);
        spec.answer_format = AnswerFormat::Mcq { k: 1 };
        assert!(spec.validate().is_err());
        assert!(matches!(reg.spec("nope"), Err(CorpusError::UnknownTask(_))));
    }

    #[test]
    fn extension_under_new_id() {
        let mut reg = default_registry();
        let spec = TaskSpec::with_id("pneumothorax_binary", TaskKind::DiseaseBinary);
        let templates = vec![InstructionTemplate::new("pneumothorax_binary", "{finding}? {options}")];
        reg.register(spec, templates).unwrap();
        assert_eq!(reg.task_ids().count(), 11);
    }

    #[test]
    fn render_substitutes() {
        let t = InstructionTemplate::new("x", "Is there {finding}? {options}");
        assert_eq!(
            t.render(&[("finding", "edema"), ("options", "(A) Yes (B) No")]),
            "Is there edema? (A) Yes (B) No"
        );
    }
}
