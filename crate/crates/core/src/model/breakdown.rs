use serde::{Deserialize, Serialize};

use super::block::{BlockArgs, BlockKind, StyleOverrides};

/// One plain-language animation guide produced by the breakdown agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBreakdownItem {
    pub id: String,
    pub kind: BlockKind,
    pub short_description: String,
    pub long_description: String,
    #[serde(default)]
    pub resolved: bool,
    #[serde(default)]
    pub user_notes: String,
    /// Block arguments attached by the researcher once resolved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<BlockArgs>,
    #[serde(default)]
    pub style: StyleOverrides,
}

impl SceneBreakdownItem {
    pub fn new(
        id: impl Into<String>,
        kind: BlockKind,
        short_description: impl Into<String>,
        long_description: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            kind,
            short_description: short_description.into(),
            long_description: long_description.into(),
            resolved: false,
            user_notes: String::new(),
            args: None,
            style: StyleOverrides::default(),
        }
    }

    /// Attaches researched arguments and marks the item resolved.
    pub fn resolve(&mut self, args: BlockArgs) {
        debug_assert_eq!(args.kind(), self.kind);
        self.args = Some(args);
        self.resolved = true;
    }

    pub fn check(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.short_description.trim().is_empty() {
            errs.push(format!("item `{}` has an empty short description", self.id));
        }
        if self.resolved && self.args.is_none() {
            errs.push(format!("item `{}` is resolved without arguments", self.id));
        }
        if let Some(args) = &self.args {
            if args.kind() != self.kind {
                errs.push(format!(
                    "item `{}` is {} but carries {} arguments",
                    self.id,
                    self.kind,
                    args.kind()
                ));
            }
        }
        errs
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneBreakdown {
    pub items: Vec<SceneBreakdownItem>,
    /// Hash of the script the items were planned from.
    pub source_script_hash: String,
}

impl SceneBreakdown {
    pub fn item(&self, id: &str) -> Option<&SceneBreakdownItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn item_mut(&mut self, id: &str) -> Option<&mut SceneBreakdownItem> {
        self.items.iter_mut().find(|i| i.id == id)
    }
}

/// Hash used to tie a breakdown to its script.
pub fn script_hash(script: &str) -> String {
    crate::canonical::sha256_hex(script.as_bytes())
}
