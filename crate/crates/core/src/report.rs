//! Check reports shared by the verification passes. Failures and warnings are
//! report entries, not errors: callers decide what is fatal.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

/// One named check with its evidence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub status: CheckStatus,
    /// Headline number backing the verdict (worst violation, limit value, ...).
    pub value: f64,
    /// Threshold the value was compared against, when applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// State-space location of the worst case, when applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<f64>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
}

impl CheckItem {
    pub fn new(name: impl Into<String>, status: CheckStatus, value: f64) -> Self {
        Self { name: name.into(), status, value, threshold: None, location: None, note: String::new() }
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        self.threshold = Some(t);
        self
    }

    pub fn with_location(mut self, x: f64) -> Self {
        self.location = Some(x);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// A bundle of check items under one heading.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CheckReport {
    pub title: String,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), items: Vec::new() }
    }

    pub fn push(&mut self, item: CheckItem) {
        self.items.push(item);
    }

    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.status == CheckStatus::Pass)
    }

    /// True when nothing failed (warnings allowed).
    pub fn no_failures(&self) -> bool {
        self.items.iter().all(|i| i.status != CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }
}
