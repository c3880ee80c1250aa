use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AssessmentKind, EhrError};

const DEFAULT_FEATURES: &str = include_str!("../../data/features.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Vital,
    Lab,
    Medication,
    Assessment,
    Static,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Vital => "vital",
            Category::Lab => "lab",
            Category::Medication => "medication",
            Category::Assessment => "assessment",
            Category::Static => "static",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Category::Vital,
            Category::Lab,
            Category::Medication,
            Category::Assessment,
            Category::Static,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }

    /// Categories summarised as a (min, max) range.
    pub fn is_ranged(self) -> bool {
        matches!(self, Category::Vital | Category::Lab | Category::Assessment)
    }
}

/// Static entries must name one of these fields of the profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StaticField {
    Age,
    Sex,
    Race,
    Bmi,
    Cci,
    Comorbidities,
}

impl StaticField {
    pub fn from_id(id: &str) -> Option<Self> {
        Some(match id {
            "age" => StaticField::Age,
            "sex" => StaticField::Sex,
            "race" => StaticField::Race,
            "bmi" => StaticField::Bmi,
            "cci" => StaticField::Cci,
            "comorbidities" => StaticField::Comorbidities,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub variable_id: String,
    pub display_name: String,
    pub category: Category,
    pub canonical_priority: i64,
}

/// Ordered set of predictive variables. Entries are kept sorted by
/// `canonical_priority`, which is unique.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDictionary {
    entries: Vec<FeatureEntry>,
    index: HashMap<String, usize>,
}

impl FeatureDictionary {
    pub fn new(mut entries: Vec<FeatureEntry>) -> Result<Self, EhrError> {
        let err = |m: String| Err(EhrError::Dictionary(m));
        if entries.is_empty() {
            return err("no entries".into());
        }
        let mut priorities = BTreeSet::new();
        for e in &entries {
            if e.variable_id.is_empty() || e.variable_id.contains(char::is_whitespace) {
                return err(format!("invalid variable_id `{}`", e.variable_id));
            }
            if e.display_name.trim().is_empty() {
                return err(format!("`{}` has an empty display_name", e.variable_id));
            }
            if !priorities.insert(e.canonical_priority) {
                return err(format!(
                    "duplicate canonical_priority {}",
                    e.canonical_priority
                ));
            }
            match e.category {
                Category::Static if StaticField::from_id(&e.variable_id).is_none() => {
                    return err(format!("unknown static field `{}`", e.variable_id));
                }
                Category::Assessment
                    if !AssessmentKind::ALL
                        .iter()
                        .any(|k| k.variable_id() == e.variable_id) =>
                {
                    return err(format!("unknown assessment `{}`", e.variable_id));
                }
                _ => {}
            }
        }
        entries.sort_by_key(|e| e.canonical_priority);
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.variable_id.clone(), i).is_some() {
                return err(format!("duplicate variable_id `{}`", e.variable_id));
            }
        }
        Ok(Self { entries, index })
    }

    /// The bundled dictionary of features named in the delirium literature.
    pub fn default_clinical() -> Self {
        Self::from_reader(DEFAULT_FEATURES.as_bytes()).expect("bundled features.csv is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self, EhrError> {
        let f = std::fs::File::open(path).map_err(|source| EhrError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(f)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, EhrError> {
        let csv_err = |source| EhrError::Csv {
            table: "features".into(),
            source,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| EhrError::MissingColumn {
                    table: "features".into(),
                    column: name.into(),
                })
        };
        let (c_id, c_name, c_cat, c_pri) = (
            col("variable_id")?,
            col("display_name")?,
            col("category")?,
            col("canonical_priority")?,
        );
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize| rec.get(i).unwrap_or("");
            let category = Category::parse(field(c_cat)).ok_or_else(|| {
                EhrError::Dictionary(format!("line {line}: unknown category `{}`", field(c_cat)))
            })?;
            let canonical_priority = field(c_pri).parse().map_err(|_| {
                EhrError::Dictionary(format!("line {line}: bad canonical_priority"))
            })?;
            entries.push(FeatureEntry {
                variable_id: field(c_id).to_owned(),
                display_name: field(c_name).to_owned(),
                category,
                canonical_priority,
            });
        }
        Self::new(entries)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "variable_id",
            "display_name",
            "category",
            "canonical_priority",
        ])?;
        for e in &self.entries {
            w.write_record([
                e.variable_id.as_str(),
                e.display_name.as_str(),
                e.category.as_str(),
                &e.canonical_priority.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn entries(&self) -> &[FeatureEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, variable_id: &str) -> Option<&FeatureEntry> {
        self.index.get(variable_id).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, variable_id: &str) -> bool {
        self.index.contains_key(variable_id)
    }

    /// Static entries first, then everything else; each group by priority.
    /// This is the section order of a rendered report.
    pub fn report_order(&self) -> impl Iterator<Item = &FeatureEntry> {
        let statics = self
            .entries
            .iter()
            .filter(|e| e.category == Category::Static);
        let temporal = self
            .entries
            .iter()
            .filter(|e| e.category != Category::Static);
        statics.chain(temporal)
    }

    /// Dictionary with only the entries accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(&FeatureEntry) -> bool) -> Result<Self, EhrError> {
        Self::new(self.entries.iter().filter(|e| keep(e)).cloned().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_dictionary_loads() {
        let d = FeatureDictionary::default_clinical();
        assert!(d.len() >= 30);
        assert_eq!(d.get("lactic_acid").unwrap().category, Category::Lab);
        let first: Vec<_> = d
            .report_order()
            .take(6)
            .map(|e| e.variable_id.as_str())
            .collect();
        assert_eq!(first, ["age", "sex", "race", "bmi", "cci", "comorbidities"]);
    }

    #[test]
    fn duplicate_ids_and_priorities_rejected() {
        let e = |id: &str, p| FeatureEntry {
            variable_id: id.into(),
            display_name: id.into(),
            category: Category::Lab,
            canonical_priority: p,
        };
        assert!(FeatureDictionary::new(vec![e("a", 1), e("a", 2)]).is_err());
        assert!(FeatureDictionary::new(vec![e("a", 1), e("b", 1)]).is_err());
        assert!(FeatureDictionary::new(vec![e("b", 2), e("a", 1)]).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let d = FeatureDictionary::default_clinical();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(FeatureDictionary::from_reader(buf.as_slice()).unwrap(), d);
    }
}
