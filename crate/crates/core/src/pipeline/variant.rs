use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How stage-2 tiles are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    BlueRatio,
    AttTopk,
    AttCluster,
}

impl SelectionMethod {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMethod::BlueRatio => "blue-ratio",
            SelectionMethod::AttTopk => "att-topk",
            SelectionMethod::AttCluster => "att-cluster",
        }
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SelectionMethod::BlueRatio, SelectionMethod::AttTopk, SelectionMethod::AttCluster]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown selection method {s:?}; expected blue-ratio, att-topk or att-cluster")))
    }
}

/// The ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    OneStage,
    BrTwoStage,
    AttTwoStage,
    AttNoDropout,
    NoTransfer,
    AttClusterTwoStage,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::OneStage,
        Variant::BrTwoStage,
        Variant::AttTwoStage,
        Variant::AttNoDropout,
        Variant::NoTransfer,
        Variant::AttClusterTwoStage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::OneStage => "one-stage",
            Variant::BrTwoStage => "br-two-stage",
            Variant::AttTwoStage => "att-two-stage",
            Variant::AttNoDropout => "att-no-dropout",
            Variant::NoTransfer => "no-transfer",
            Variant::AttClusterTwoStage => "att-cluster-two-stage",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|v| v.name()).collect()
    }

    pub fn spec(self) -> VariantSpec {
        let base = VariantSpec {
            variant: self,
            two_stage: true,
            stage1_dropout: true,
            pretrain: true,
            selection: Some(SelectionMethod::AttCluster),
        };
        match self {
            Variant::OneStage => VariantSpec { two_stage: false, selection: None, ..base },
            Variant::BrTwoStage => VariantSpec { selection: Some(SelectionMethod::BlueRatio), ..base },
            Variant::AttTwoStage => VariantSpec { selection: Some(SelectionMethod::AttTopk), ..base },
            Variant::AttNoDropout => VariantSpec { stage1_dropout: false, selection: Some(SelectionMethod::AttTopk), ..base },
            Variant::NoTransfer => VariantSpec { pretrain: false, ..base },
            Variant::AttClusterTwoStage => base,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}; valid variants: {}", Self::names().join(", "))))
    }
}

/// Toggles implied by a variant name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub variant: Variant,
    pub two_stage: bool,
    /// Instance dropout during stage-1 training. Stage 2 always uses the
    /// configured rate.
    pub stage1_dropout: bool,
    pub pretrain: bool,
    pub selection: Option<SelectionMethod>,
}
