use std::collections::HashMap;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::annotparse::{term_key, ParentheticalAnnotation};
use crate::scalar::Scalar;

/// W_terms as an exact fraction in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermWeight(Ratio<u64>);

impl TermWeight {
    pub const ONE: TermWeight = TermWeight(Ratio::new_raw(1, 1));

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn is_one(&self) -> bool {
        self.numer() == self.denom()
    }

    pub fn as_ratio(&self) -> Ratio<u64> {
        self.0
    }

    pub fn to_scalar<S: Scalar>(&self) -> S {
        S::from_u64(self.numer()).unwrap() / S::from_u64(self.denom()).unwrap()
    }
}

impl fmt::Display for TermWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl Serialize for TermWeight {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.numer(), self.denom()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TermWeight {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (n, den) = <(u64, u64)>::deserialize(d)?;
        if den == 0 || n > den {
            return Err(serde::de::Error::custom("term weight must be a fraction in [0, 1]"));
        }
        Ok(TermWeight(Ratio::new(n, den)))
    }
}

/// `min(n_kor / n_eng, 1)`; a sentence without terms gets weight 1.
pub fn compute_weight(n_kor: usize, n_eng: usize) -> TermWeight {
    if n_eng == 0 || n_kor >= n_eng {
        return TermWeight::ONE;
    }
    TermWeight(Ratio::new(n_kor as u64, n_eng as u64))
}

/// Size of the multiset intersection between annotated terms and `terms`.
///
/// Each annotation can account for at most one term occurrence.
pub fn count_matched<T: AsRef<str>>(annotations: &[ParentheticalAnnotation], terms: &[T]) -> usize {
    let mut wanted: HashMap<String, usize> = HashMap::new();
    for t in terms {
        *wanted.entry(term_key(t.as_ref())).or_default() += 1;
    }
    let mut matched = 0;
    for a in annotations {
        if let Some(left) = wanted.get_mut(&term_key(&a.inner_text)) {
            if *left > 0 {
                *left -= 1;
                matched += 1;
            }
        }
    }
    matched
}
