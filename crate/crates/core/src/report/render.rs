use serde::{Deserialize, Serialize};

use super::{FeatureSummary, SummaryValue};
use crate::ehr::{Category, Comorbidity, FeatureDictionary, StaticField, StaticProfile, StayId};

pub const SEP_TEXT: &str = "[SEP]";
pub const CLS_TEXT: &str = "[CLS]";

/// Three significant digits, no trailing zeros. Uses the correctly rounded
/// scientific formatter so output is identical on every platform.
pub fn numeric_format(value: f64) -> String {
    debug_assert!(value.is_finite());
    if value == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.2e}", value.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let mut s = if exp >= 2 {
        let mut s = digits;
        s.extend(std::iter::repeat_n('0', (exp - 2) as usize));
        s
    } else if exp >= 0 {
        let split = exp as usize + 1;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if value < 0.0 {
        s.insert(0, '-');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionKind {
    Static,
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    /// The dictionary `variable_id` this section renders.
    pub label: String,
    pub body: String,
    pub kind: SectionKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextReport {
    pub stay_id: StayId,
    pub sections: Vec<Section>,
    pub serialized: String,
}

impl TextReport {
    pub fn from_sections(stay_id: StayId, sections: Vec<Section>) -> Self {
        let serialized = serialize(&sections);
        Self {
            stay_id,
            sections,
            serialized,
        }
    }

    /// Section bodies recovered from serialized text.
    pub fn parse_bodies(serialized: &str) -> Vec<String> {
        let rest = serialized
            .strip_prefix(CLS_TEXT)
            .unwrap_or(serialized)
            .trim_start();
        if rest.is_empty() {
            return Vec::new();
        }
        rest.split(SEP_TEXT).map(|b| b.trim().to_owned()).collect()
    }
}

fn serialize(sections: &[Section]) -> String {
    let mut s = String::from(CLS_TEXT);
    for (i, sec) in sections.iter().enumerate() {
        s.push_str(if i == 0 { " " } else { " [SEP] " });
        s.push_str(&sec.body);
    }
    s
}

fn static_value(field: StaticField, p: &StaticProfile) -> String {
    match field {
        StaticField::Age => numeric_format(p.age_years),
        StaticField::Sex => p.sex.as_str().into(),
        StaticField::Race => p.race.as_str().into(),
        StaticField::Bmi => p.bmi.map_or_else(|| "na".into(), numeric_format),
        StaticField::Cci => p.cci.to_string(),
        StaticField::Comorbidities => {
            let names: Vec<_> = Comorbidity::ALL
                .iter()
                .filter(|&&c| p.has(c))
                .map(|c| c.as_str())
                .collect();
            if names.is_empty() {
                "none".into()
            } else {
                names.join(" ")
            }
        }
    }
}

/// Renders one `name: value` section per dictionary entry, static entries
/// first. Unmeasured variables render as `na`, unadministered drugs as `none`.
pub fn render_report(
    profile: &StaticProfile,
    summary: &FeatureSummary,
    dictionary: &FeatureDictionary,
) -> TextReport {
    debug_assert_eq!(profile.stay_id, summary.stay_id);
    let sections = dictionary
        .report_order()
        .map(|entry| {
            let value = match entry.category {
                Category::Static => static_value(
                    StaticField::from_id(&entry.variable_id).expect("validated by dictionary"),
                    profile,
                ),
                Category::Medication => match summary.get(&entry.variable_id) {
                    Some(SummaryValue::TotalDose { total, unit }) => {
                        format!("total dose {} {unit}", numeric_format(*total))
                    }
                    _ => "none".into(),
                },
                _ => match summary.get(&entry.variable_id) {
                    Some(SummaryValue::Range { min, max }) => {
                        format!("min {} max {}", numeric_format(*min), numeric_format(*max))
                    }
                    _ => "na".into(),
                },
            };
            Section {
                label: entry.variable_id.clone(),
                body: format!("{}: {value}", entry.display_name.to_lowercase()),
                kind: if entry.category == Category::Static {
                    SectionKind::Static
                } else {
                    SectionKind::Temporal
                },
            }
        })
        .collect();
    TextReport::from_sections(profile.stay_id.clone(), sections)
}
