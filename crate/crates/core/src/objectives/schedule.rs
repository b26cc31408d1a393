use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SaniError};
use crate::model::Variant;

/// Language-modeling objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    Mlm,
    Ppmlm,
    Clm,
    Ppclm,
}

impl Scheme {
    pub fn variant(self) -> Variant {
        match self {
            Scheme::Mlm | Scheme::Ppmlm => Variant::Mlm,
            Scheme::Clm | Scheme::Ppclm => Variant::Clm,
        }
    }

    pub fn is_private(self) -> bool {
        matches!(self, Scheme::Ppmlm | Scheme::Ppclm)
    }

    /// Privacy-preserving scheme for the given variant.
    pub fn private_for(variant: Variant) -> Self {
        match variant {
            Variant::Mlm => Scheme::Ppmlm,
            Variant::Clm => Scheme::Ppclm,
        }
    }

    pub fn standard_for(variant: Variant) -> Self {
        match variant {
            Variant::Mlm => Scheme::Mlm,
            Variant::Clm => Scheme::Clm,
        }
    }

    pub fn check(self, variant: Variant) -> Result<()> {
        if self.variant() != variant {
            return Err(SaniError::SchemeVariantMismatch {
                scheme: self.to_string(),
                variant: variant.to_string(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Mlm => "MLM",
            Scheme::Ppmlm => "PPMLM",
            Scheme::Clm => "CLM",
            Scheme::Ppclm => "PPCLM",
        })
    }
}

/// Linear-to-zero learning-rate schedule over `total_epochs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub total_epochs: usize,
    pub lr_start: f64,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    pub mask_rate: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            total_epochs: 64,
            lr_start: 1e-4,
            batch_size: 8,
            mask_rate: super::MASK_RATE,
        }
    }
}

impl TrainSchedule {
    /// Learning rate at training-progress fraction `f` in [0, 1].
    pub fn lr(&self, f: f64) -> f64 {
        self.lr_start * (1.0 - f.clamp(0.0, 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 || self.batch_size == 0 {
            return Err(SaniError::Config("total_epochs and batch_size must be positive".into()));
        }
        if !(self.lr_start.is_finite() && self.lr_start > 0.0) {
            return Err(SaniError::Config(format!("lr_start {} must be positive", self.lr_start)));
        }
        if !(self.mask_rate > 0.0 && self.mask_rate <= 1.0) {
            return Err(SaniError::Config(format!("mask_rate {} outside (0, 1]", self.mask_rate)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_decay() {
        let s = TrainSchedule::default();
        assert_eq!(s.lr(0.0), 1e-4);
        assert!((s.lr(0.25) - 7.5e-5).abs() < 1e-18);
        assert_eq!(s.lr(1.0), 0.0);
        assert_eq!(s.lr(1.5), 0.0);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [Scheme::Mlm, Scheme::Ppmlm, Scheme::Clm, Scheme::Ppclm] {
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(j, format!("\"{s}\""));
            assert_eq!(serde_json::from_str::<Scheme>(&j).unwrap(), s);
        }
    }

    #[test]
    fn mismatch_is_reported() {
        assert!(Scheme::Ppclm.check(Variant::Clm).is_ok());
        assert!(matches!(
            Scheme::Mlm.check(Variant::Clm),
            Err(SaniError::SchemeVariantMismatch { .. })
        ));
    }
}
