//! The 19 facial-attribute classes and the tables that group them into
//! color-map segments, palette rows and discriminator regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::NUM_CLASSES;

/// Class names in label-id order (CelebAMask-HQ convention).
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "background", "skin", "l_brow", "r_brow", "l_eye", "r_eye", "eye_g", "l_ear", "r_ear", "ear_r",
    "nose", "mouth", "u_lip", "l_lip", "neck", "neck_l", "cloth", "hair", "hat",
];

pub mod class {
    pub const BACKGROUND: u8 = 0;
    pub const SKIN: u8 = 1;
    pub const L_BROW: u8 = 2;
    pub const R_BROW: u8 = 3;
    pub const L_EYE: u8 = 4;
    pub const R_EYE: u8 = 5;
    pub const EYE_G: u8 = 6;
    pub const L_EAR: u8 = 7;
    pub const R_EAR: u8 = 8;
    pub const EAR_R: u8 = 9;
    pub const NOSE: u8 = 10;
    pub const MOUTH: u8 = 11;
    pub const U_LIP: u8 = 12;
    pub const L_LIP: u8 = 13;
    pub const NECK: u8 = 14;
    pub const NECK_L: u8 = 15;
    pub const CLOTH: u8 = 16;
    pub const HAIR: u8 = 17;
    pub const HAT: u8 = 18;
}

pub fn class_id(name: &str) -> Option<u8> {
    CLASS_NAMES.iter().position(|&n| n == name).map(|i| i as u8)
}

/// The five palette rows, top to bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Hair,
    Skin,
    Eyes,
    Lip,
    Background,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::Hair,
        Component::Skin,
        Component::Eyes,
        Component::Lip,
        Component::Background,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Hair => "hair",
            Component::Skin => "skin",
            Component::Eyes => "eyes",
            Component::Lip => "lip",
            Component::Background => "background",
        }
    }
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Param(format!("unknown palette row '{s}'")))
    }
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedGroup {
    pub name: String,
    pub classes: Vec<u8>,
}

/// Class groupings used by extraction. Shipped as config with documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTable {
    /// Color-map segments; every class must belong to exactly one.
    pub color_map_segments: Vec<NamedGroup>,
    /// Classes per palette row, indexed by [`Component::index`].
    pub palette_rows: [Vec<u8>; 5],
    pub face_classes: Vec<u8>,
    pub eye_classes: Vec<u8>,
    /// Merge priority for overlapping per-class mask files, highest first.
    pub merge_priority: Vec<u8>,
}

impl Default for ClassTable {
    fn default() -> Self {
        use class::*;
        let group = |name: &str, classes: &[u8]| NamedGroup {
            name: name.to_string(),
            classes: classes.to_vec(),
        };
        ClassTable {
            color_map_segments: vec![
                group("hair", &[HAIR, HAT]),
                group("face_skin", &[SKIN, L_EAR, R_EAR, EAR_R]),
                group("eyebrows", &[L_BROW, R_BROW]),
                group("eyes", &[L_EYE, R_EYE, EYE_G]),
                group("nose", &[NOSE]),
                group("mouth", &[MOUTH, U_LIP, L_LIP]),
                group("neck", &[NECK, NECK_L]),
                group("background", &[BACKGROUND, CLOTH]),
            ],
            palette_rows: [
                vec![HAIR],
                vec![SKIN],
                vec![L_EYE, R_EYE],
                vec![U_LIP, L_LIP],
                vec![BACKGROUND],
            ],
            face_classes: vec![SKIN, NOSE, MOUTH, U_LIP, L_LIP, L_BROW, R_BROW],
            eye_classes: vec![L_EYE, R_EYE],
            merge_priority: vec![
                L_EYE, R_EYE, L_BROW, R_BROW, U_LIP, L_LIP, MOUTH, NOSE, EYE_G, EAR_R, L_EAR, R_EAR,
                SKIN, HAT, HAIR, NECK_L, NECK, CLOTH,
            ],
        }
    }
}

impl ClassTable {
    pub fn validate(&self) -> Result<()> {
        let mut seen = [0usize; NUM_CLASSES];
        for g in &self.color_map_segments {
            for &c in &g.classes {
                check_class(c)?;
                seen[c as usize] += 1;
            }
        }
        if let Some(c) = seen.iter().position(|&n| n != 1) {
            return Err(Error::Config(format!(
                "class '{}' must belong to exactly one color-map segment",
                CLASS_NAMES[c]
            )));
        }
        for &c in self
            .palette_rows
            .iter()
            .flatten()
            .chain(&self.face_classes)
            .chain(&self.eye_classes)
            .chain(&self.merge_priority)
        {
            check_class(c)?;
        }
        Ok(())
    }

    pub fn row_classes(&self, row: Component) -> &[u8] {
        &self.palette_rows[row.index()]
    }

    /// Rank of a class in the merge order; lower wins. Unlisted classes lose to listed ones.
    pub fn priority_rank(&self, class: u8) -> usize {
        self.merge_priority
            .iter()
            .position(|&c| c == class)
            .unwrap_or(self.merge_priority.len())
    }
}

fn check_class(c: u8) -> Result<()> {
    if c as usize >= NUM_CLASSES {
        return Err(Error::Config(format!("class id {c} out of range")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_is_valid() {
        ClassTable::default().validate().unwrap();
    }

    #[test]
    fn priority_orders_fine_parts_first() {
        let t = ClassTable::default();
        use class::*;
        let order = [L_EYE, L_BROW, U_LIP, NOSE, SKIN, HAIR, NECK, BACKGROUND];
        for pair in order.windows(2) {
            assert!(t.priority_rank(pair[0]) < t.priority_rank(pair[1]));
        }
    }

    #[test]
    fn component_names_round_trip() {
        for c in Component::ALL {
            assert_eq!(c.name().parse::<Component>().unwrap(), c);
        }
        assert!("nose".parse::<Component>().is_err());
    }

    #[test]
    fn class_lookup() {
        assert_eq!(class_id("hair"), Some(class::HAIR));
        assert_eq!(class_id("neck_l"), Some(class::NECK_L));
        assert_eq!(class_id("beard"), None);
    }
}
