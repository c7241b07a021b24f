use crate::error::{AncError, Result};

/// Hard symmetric clipper standing in for a power amplifier with a rated
/// output power. A sinusoid of power `rated_power` just reaches the clip level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturatingAmplifier {
    clip_level: f64,
}

impl SaturatingAmplifier {
    pub fn from_rated_power(rated_power: f64) -> Result<Self> {
        if !(rated_power.is_finite() && rated_power > 0.0) {
            return Err(AncError::invalid(
                "rated_power",
                format!("must be positive and finite, got {rated_power}"),
            ));
        }
        Ok(Self {
            clip_level: (2.0 * rated_power).sqrt(),
        })
    }

    pub fn with_clip_level(clip_level: f64) -> Result<Self> {
        if !(clip_level.is_finite() && clip_level > 0.0) {
            return Err(AncError::invalid(
                "clip_level",
                format!("must be positive and finite, got {clip_level}"),
            ));
        }
        Ok(Self { clip_level })
    }

    pub fn clip_level(&self) -> f64 {
        self.clip_level
    }

    #[inline]
    pub fn saturate(&self, sample: f64) -> f64 {
        sample.clamp(-self.clip_level, self.clip_level)
    }

    #[inline]
    pub fn clips(&self, sample: f64) -> bool {
        sample.abs() > self.clip_level
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> SaturatingAmplifier {
        SaturatingAmplifier::from_rated_power(1.0).unwrap()
    }

    #[test]
    fn unit_rated_power_clips_at_sqrt2() {
        let amp = unit();
        assert_eq!(amp.clip_level(), 2f64.sqrt());
        assert!((amp.saturate(2.0) - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(amp.saturate(0.5), 0.5);
        assert!((amp.saturate(-3.0) + std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_power() {
        assert!(SaturatingAmplifier::from_rated_power(0.0).is_err());
        assert!(SaturatingAmplifier::from_rated_power(-1.0).is_err());
        assert!(SaturatingAmplifier::with_clip_level(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn idempotent(x in -1e6f64..1e6) {
            let amp = unit();
            let once = amp.saturate(x);
            prop_assert_eq!(amp.saturate(once), once);
            prop_assert!(once.abs() <= amp.clip_level());
        }

        #[test]
        fn passes_through_in_range(xs in prop::collection::vec(-1.0f64..1.0, 1..64)) {
            let amp = unit();
            let peak = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let scaled: Vec<f64> = xs.iter().map(|x| x / peak.max(1e-300) * amp.clip_level()).collect();
            for x in scaled {
                prop_assert_eq!(amp.saturate(x), x);
            }
        }
    }
}
