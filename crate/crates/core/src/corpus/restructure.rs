//! Deterministic report restructuring by header matching.

use std::sync::OnceLock;

use regex::Regex;

use super::types::{Section, Sections};
use super::CorpusError;

/// Header synonyms, longest first so multi-word headers win.
const HEADERS: &[(&str, Section)] = &[
    ("reason for examination", Section::Indication),
    ("reason for exam", Section::Indication),
    ("reason for study", Section::Indication),
    ("clinical history", Section::Indication),
    ("indication", Section::Indication),
    ("history", Section::Indication),
    ("reason", Section::Indication),
    ("findings", Section::Findings),
    ("report", Section::Findings),
    ("impression", Section::Impression),
    ("conclusion", Section::Impression),
];

fn header_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let alts: Vec<String> = HEADERS
            .iter()
            .map(|(h, _)| h.replace(' ', r"\s+"))
            .collect();
        Regex::new(&format!(r"(?i)\b({})\s*:", alts.join("|"))).unwrap()
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestructuredReport {
    pub sections: Sections,
    /// Sections that came out empty.
    pub missing: Vec<Section>,
}

fn section_for(header: &str) -> Section {
    let norm = header.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    HEADERS
        .iter()
        .find(|(h, _)| *h == norm)
        .map(|(_, s)| *s)
        .expect("regex only matches table headers")
}

fn append(target: &mut String, text: &str) {
    let text = text.trim();
    if text.is_empty() {
        return;
    }
    if !target.is_empty() {
        target.push(' ');
    }
    target.push_str(text);
}

/// Splits a free-text report into indication / findings / impression.
///
/// Text before the first header becomes the indication unless an explicit
/// indication header exists, in which case it is dropped. Repeated headers
/// are concatenated.
pub fn restructure_report(raw: &str) -> Result<RestructuredReport, CorpusError> {
    if raw.trim().is_empty() {
        return Err(CorpusError::EmptyReport);
    }
    let matches: Vec<_> = header_pattern().captures_iter(raw).collect();
    let mut sections = Sections::default();
    let preamble_end = matches.first().map_or(raw.len(), |c| c.get(0).unwrap().start());
    let has_indication = matches
        .iter()
        .any(|c| section_for(&c[1]) == Section::Indication);
    if !has_indication {
        append(&mut sections.indication, &raw[..preamble_end]);
    }
    for (i, caps) in matches.iter().enumerate() {
        let body_start = caps.get(0).unwrap().end();
        let body_end = matches
            .get(i + 1)
            .map_or(raw.len(), |next| next.get(0).unwrap().start());
        append(sections.get_mut(section_for(&caps[1])), &raw[body_start..body_end]);
    }
    let missing = [Section::Indication, Section::Findings, Section::Impression]
        .into_iter()
        .filter(|s| sections.get(*s).is_empty())
        .collect();
    Ok(RestructuredReport { sections, missing })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_sections() {
        let r = restructure_report(
            "INDICATION: cough. FINDINGS: clear lungs. IMPRESSION: no acute disease.",
        )
        .unwrap();
        assert_eq!(r.sections.indication, "cough.");
        assert_eq!(r.sections.findings, "clear lungs.");
        assert_eq!(r.sections.impression, "no acute disease.");
        assert!(r.missing.is_empty());
    }

    #[test]
    fn absent_section_is_flagged() {
        let r = restructure_report("FINDINGS: x.").unwrap();
        assert_eq!(r.sections.findings, "x.");
        assert_eq!(r.sections.impression, "");
        assert!(r.missing.contains(&Section::Impression));
        assert!(r.missing.contains(&Section::Indication));
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(restructure_report(""), Err(CorpusError::EmptyReport)));
        assert!(matches!(restructure_report("  \n"), Err(CorpusError::EmptyReport)));
    }

    #[test]
    fn synonyms_and_preamble() {
        let r = restructure_report("Chest pain. Report: Heart normal.\nConclusion: Normal.").unwrap();
        assert_eq!(r.sections.indication, "Chest pain.");
        assert_eq!(r.sections.findings, "Heart normal.");
        assert_eq!(r.sections.impression, "Normal.");

        let r = restructure_report("Exam 1. clinical   HISTORY: fever. findings: ok").unwrap();
        assert_eq!(r.sections.indication, "fever.");
        assert_eq!(r.sections.findings, "ok");
    }

    #[test]
    fn no_headers_is_all_indication() {
        let r = restructure_report("just text").unwrap();
        assert_eq!(r.sections.indication, "just text");
        assert_eq!(r.missing, vec![Section::Findings, Section::Impression]);
    }
}
