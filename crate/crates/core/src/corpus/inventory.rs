use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 39 ARPABET phones (stress markers removed).
pub const ARPABET: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH",
];

/// Ordered set of phone labels with a bijective label/index map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PhoneInventory {
    phones: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhoneInventory {
    pub fn new<S: Into<String>>(phones: impl IntoIterator<Item = S>) -> Result<Self> {
        let phones: Vec<String> = phones.into_iter().map(Into::into).collect();
        if phones.is_empty() {
            return Err(Error::Validation("phone inventory is empty".into()));
        }
        let mut index = HashMap::with_capacity(phones.len());
        for (i, p) in phones.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate phone label {p:?}")));
            }
        }
        Ok(Self { phones, index })
    }

    pub fn arpabet() -> Self {
        Self::new(ARPABET).expect("ARPABET labels are unique")
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn phones(&self) -> &[String] {
        &self.phones
    }

    pub fn label(&self, index: usize) -> &str {
        &self.phones[index]
    }

    /// Index of a label. Trailing stress digits (`AH0`, `IY1`) are ignored.
    pub fn index_of(&self, label: &str) -> Result<usize> {
        if let Some(&i) = self.index.get(label) {
            return Ok(i);
        }
        let stripped = label.trim_end_matches(|c: char| c.is_ascii_digit());
        self.index
            .get(stripped)
            .copied()
            .ok_or_else(|| Error::UnknownPhone(label.to_string()))
    }

    pub fn indices<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.index_of(l.as_ref())).collect()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_ok()
    }
}

impl TryFrom<Vec<String>> for PhoneInventory {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PhoneInventory> for Vec<String> {
    fn from(inv: PhoneInventory) -> Self {
        inv.phones
    }
}

impl Default for PhoneInventory {
    fn default() -> Self {
        Self::arpabet()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inventory_has_39_unique_phones() {
        let inv = PhoneInventory::default();
        assert_eq!(inv.len(), 39);
        for (i, p) in inv.phones().iter().enumerate() {
            assert_eq!(inv.index_of(p).unwrap(), i);
        }
    }

    #[test]
    fn stress_markers_are_ignored() {
        let inv = PhoneInventory::arpabet();
        assert_eq!(inv.index_of("AH0").unwrap(), inv.index_of("AH").unwrap());
        assert!(matches!(inv.index_of("XX"), Err(Error::UnknownPhone(_))));
    }

    #[test]
    fn duplicates_rejected() {
        assert!(PhoneInventory::new(["A", "B", "A"]).is_err());
    }
}
