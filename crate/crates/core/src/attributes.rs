//! The CelebA attribute vocabulary and named attribute subsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CelebA's 40 attribute labels in file-column order.
pub const CELEBA_ATTRIBUTES: [&str; 40] = [
    "5_o_Clock_Shadow",
    "Arched_Eyebrows",
    "Attractive",
    "Bags_Under_Eyes",
    "Bald",
    "Bangs",
    "Big_Lips",
    "Big_Nose",
    "Black_Hair",
    "Blond_Hair",
    "Blurry",
    "Brown_Hair",
    "Bushy_Eyebrows",
    "Chubby",
    "Double_Chin",
    "Eyeglasses",
    "Goatee",
    "Gray_Hair",
    "Heavy_Makeup",
    "High_Cheekbones",
    "Male",
    "Mouth_Slightly_Open",
    "Mustache",
    "Narrow_Eyes",
    "No_Beard",
    "Oval_Face",
    "Pale_Skin",
    "Pointy_Nose",
    "Receding_Hairline",
    "Rosy_Cheeks",
    "Sideburns",
    "Smiling",
    "Straight_Hair",
    "Wavy_Hair",
    "Wearing_Earrings",
    "Wearing_Hat",
    "Wearing_Lipstick",
    "Wearing_Necklace",
    "Wearing_Necktie",
    "Young",
];

pub fn celeba_index(name: &str) -> Option<usize> {
    CELEBA_ATTRIBUTES.iter().position(|n| *n == name)
}

/// Ordered list of CelebA attributes a world or axis file is defined over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeSet(Vec<String>);

impl AttributeSet {
    pub fn celeba() -> Self {
        Self(CELEBA_ATTRIBUTES.iter().map(|s| s.to_string()).collect())
    }

    /// First `n` CelebA attributes.
    pub fn celeba_prefix(n: usize) -> Result<Self> {
        if n == 0 || n > CELEBA_ATTRIBUTES.len() {
            return Err(Error::InvalidConfig(format!(
                "attribute count must be in 1..=40 without explicit names, got {n}"
            )));
        }
        Ok(Self(CELEBA_ATTRIBUTES[..n].iter().map(|s| s.to_string()).collect()))
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut out: Vec<String> = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref().trim();
            if celeba_index(n).is_none() {
                return Err(Error::UnknownAttributeName(n.to_string()));
            }
            if out.iter().any(|o| o == n) {
                return Err(Error::InvalidConfig(format!("attribute `{n}` listed twice")));
            }
            out.push(n.to_string());
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("empty attribute list".into()));
        }
        Ok(Self(out))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    /// CelebA column index for each member.
    pub fn celeba_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .map(|n| celeba_index(n).expect("validated at construction"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_forty_unique_names() {
        let mut v = CELEBA_ATTRIBUTES.to_vec();
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), 40);
        assert_eq!(celeba_index("Male"), Some(20));
        assert_eq!(celeba_index("Young"), Some(39));
        assert_eq!(celeba_index("Blond_Hair"), Some(9));
    }

    #[test]
    fn subsets_validate_names() {
        let s = AttributeSet::from_names(&["Male", "Smiling", "Young"]).unwrap();
        assert_eq!(s.celeba_indices(), vec![20, 31, 39]);
        assert!(matches!(
            AttributeSet::from_names(&["Male", "Beard"]),
            Err(Error::UnknownAttributeName(_))
        ));
        assert!(AttributeSet::from_names(&["Male", "Male"]).is_err());
        assert!(AttributeSet::celeba_prefix(41).is_err());
        assert_eq!(AttributeSet::celeba_prefix(3).unwrap().names()[2], "Attractive");
    }
}
