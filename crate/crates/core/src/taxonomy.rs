//! The fixed ten-category place taxonomy and soft category labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of place categories.
pub const N_CATEGORIES: usize = 10;
/// Number of hours in a day.
pub const N_HOURS: usize = 24;

/// MID10 place category. The discriminant is the canonical index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mid10 {
    Accommodation = 0,
    Transit = 1,
    Retail = 2,
    Services = 3,
    Parking = 4,
    SpaOnsen = 5,
    FoodDrink = 6,
    Culture = 7,
    Sightseeing = 8,
    NaturePark = 9,
}

impl Mid10 {
    pub const ALL: [Mid10; N_CATEGORIES] = [
        Mid10::Accommodation,
        Mid10::Transit,
        Mid10::Retail,
        Mid10::Services,
        Mid10::Parking,
        Mid10::SpaOnsen,
        Mid10::FoodDrink,
        Mid10::Culture,
        Mid10::Sightseeing,
        Mid10::NaturePark,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Mid10> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Mid10::Accommodation => "Accommodation",
            Mid10::Transit => "Transit",
            Mid10::Retail => "Retail",
            Mid10::Services => "Services",
            Mid10::Parking => "Parking",
            Mid10::SpaOnsen => "SpaOnsen",
            Mid10::FoodDrink => "FoodDrink",
            Mid10::Culture => "Culture",
            Mid10::Sightseeing => "Sightseeing",
            Mid10::NaturePark => "NaturePark",
        }
    }
}

impl fmt::Display for Mid10 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mid10 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mid10::ALL
            .iter()
            .copied()
            .find(|c| c.label() == s)
            .ok_or_else(|| invalid(format!("unknown MID10 category `{s}`")))
    }
}

/// Tolerance on the sum of a soft label.
pub const SOFT_LABEL_TOL: f64 = 1e-9;

/// Probability vector over the ten categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SoftLabel([f64; N_CATEGORIES]);

impl SoftLabel {
    /// Accepts an already-normalized vector (sum within 1e-9 of one).
    pub fn new(p: [f64; N_CATEGORIES]) -> Result<Self> {
        check_non_negative(&p)?;
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SOFT_LABEL_TOL {
            return Err(invalid(format!("soft label sums to {sum}, expected 1")));
        }
        Ok(SoftLabel(p))
    }

    /// Normalizes arbitrary non-negative weights. All-zero input is rejected.
    pub fn from_weights(w: [f64; N_CATEGORIES]) -> Result<Self> {
        check_non_negative(&w)?;
        let sum: f64 = w.iter().sum();
        if sum <= 0.0 {
            return Err(invalid("soft label weights are all zero"));
        }
        Ok(SoftLabel(w.map(|x| x / sum)))
    }

    pub fn one_hot(c: Mid10) -> Self {
        let mut p = [0.0; N_CATEGORIES];
        p[c.index()] = 1.0;
        SoftLabel(p)
    }

    #[inline]
    pub fn get(&self, c: Mid10) -> f64 {
        self.0[c.index()]
    }

    #[inline]
    pub fn probs(&self) -> &[f64; N_CATEGORIES] {
        &self.0
    }

    /// Most probable category; ties resolve to the lowest index.
    pub fn argmax(&self) -> Mid10 {
        let mut best = 0;
        for i in 1..N_CATEGORIES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Mid10::ALL[best]
    }

    pub fn is_one_hot(&self) -> bool {
        self.0.iter().filter(|&&x| x == 1.0).count() == 1
            && self.0.iter().all(|&x| x == 0.0 || x == 1.0)
    }
}

impl<'de> Deserialize<'de> for SoftLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let p = <[f64; N_CATEGORIES]>::deserialize(d)?;
        SoftLabel::new(p).map_err(serde::de::Error::custom)
    }
}

fn check_non_negative(p: &[f64; N_CATEGORIES]) -> Result<()> {
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(invalid(format!("soft label entry {x} is not a finite non-negative number")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_index_bijection() {
        for (i, c) in Mid10::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(Mid10::from_index(i), Some(*c));
            assert_eq!(c.label().parse::<Mid10>().unwrap(), *c);
        }
        assert!(Mid10::from_index(10).is_none());
        assert!("Onsen".parse::<Mid10>().is_err());
    }

    #[test]
    fn serde_uses_labels() {
        let s = serde_json::to_string(&Mid10::SpaOnsen).unwrap();
        assert_eq!(s, "\"SpaOnsen\"");
        assert_eq!(serde_json::from_str::<Mid10>(&s).unwrap(), Mid10::SpaOnsen);
    }

    #[test]
    fn soft_label_normalization() {
        let l = SoftLabel::from_weights([3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0]).unwrap();
        let sum: f64 = l.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(l.get(Mid10::Accommodation), 3.0 / 8.0);
        assert!(SoftLabel::from_weights([0.0; 10]).is_err());
        assert!(SoftLabel::from_weights([-1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(SoftLabel::new([0.1; 10]).is_ok());
        assert!(SoftLabel::new([0.2; 10]).is_err());
    }

    #[test]
    fn one_hot_and_argmax() {
        let l = SoftLabel::one_hot(Mid10::Culture);
        assert!(l.is_one_hot());
        assert_eq!(l.argmax(), Mid10::Culture);
        assert!(!SoftLabel::new([0.1; 10]).unwrap().is_one_hot());
        assert_eq!(SoftLabel::new([0.1; 10]).unwrap().argmax(), Mid10::Accommodation);
    }

    #[test]
    fn soft_label_deserialize_validates() {
        assert!(serde_json::from_str::<SoftLabel>("[1,0,0,0,0,0,0,0,0,0]").is_ok());
        assert!(serde_json::from_str::<SoftLabel>("[0.5,0,0,0,0,0,0,0,0,0]").is_err());
    }
}
