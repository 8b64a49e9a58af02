use core::fmt;
use core::str::FromStr;

use crate::error::Error;

/// Entity classes shared by every language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityType {
    Per,
    Org,
    Loc,
}

impl EntityType {
    pub const ALL: [EntityType; 3] = [EntityType::Per, EntityType::Org, EntityType::Loc];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Org => "ORG",
            EntityType::Loc => "LOC",
        }
    }
}

/// The eleven piece-level tags: IOB2 entity tags, `O`, the continuation
/// marker `X` and the three structural markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Tag {
    BPer = 0,
    IPer,
    BOrg,
    IOrg,
    BLoc,
    ILoc,
    O,
    X,
    Cls,
    Sep,
    Pad,
}

pub const NUM_TAGS: usize = 11;

impl Tag {
    pub const ALL: [Tag; NUM_TAGS] = [
        Tag::BPer,
        Tag::IPer,
        Tag::BOrg,
        Tag::IOrg,
        Tag::BLoc,
        Tag::ILoc,
        Tag::O,
        Tag::X,
        Tag::Cls,
        Tag::Sep,
        Tag::Pad,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Tag> {
        Tag::ALL.get(id).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::BPer => "B-PER",
            Tag::IPer => "I-PER",
            Tag::BOrg => "B-ORG",
            Tag::IOrg => "I-ORG",
            Tag::BLoc => "B-LOC",
            Tag::ILoc => "I-LOC",
            Tag::O => "O",
            Tag::X => "X",
            Tag::Cls => "CLS",
            Tag::Sep => "SEP",
            Tag::Pad => "PAD",
        }
    }

    /// True for the seven word-level IOB2 tags.
    pub fn is_iob2(self) -> bool {
        (self as u8) <= Tag::O as u8
    }

    pub fn entity(self) -> Option<EntityType> {
        match self {
            Tag::BPer | Tag::IPer => Some(EntityType::Per),
            Tag::BOrg | Tag::IOrg => Some(EntityType::Org),
            Tag::BLoc | Tag::ILoc => Some(EntityType::Loc),
            _ => None,
        }
    }

    pub fn is_begin(self) -> bool {
        matches!(self, Tag::BPer | Tag::BOrg | Tag::BLoc)
    }

    pub fn is_inside(self) -> bool {
        matches!(self, Tag::IPer | Tag::IOrg | Tag::ILoc)
    }

    pub fn begin(kind: EntityType) -> Tag {
        match kind {
            EntityType::Per => Tag::BPer,
            EntityType::Org => Tag::BOrg,
            EntityType::Loc => Tag::BLoc,
        }
    }

    pub fn inside(kind: EntityType) -> Tag {
        match kind {
            EntityType::Per => Tag::IPer,
            EntityType::Org => Tag::IOrg,
            EntityType::Loc => Tag::ILoc,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Data(alloc::format!("unknown tag '{s}'")))
    }
}

/// Rewrites stray `I-X` tags (not preceded by `B-X`/`I-X`) as `B-X`.
/// Returns the number of repaired positions.
pub fn repair_iob2(tags: &mut [Tag]) -> usize {
    let mut fixed = 0;
    let mut prev: Option<EntityType> = None;
    for t in tags.iter_mut() {
        if t.is_inside() && prev != t.entity() {
            *t = Tag::begin(t.entity().expect("inside tags carry a type"));
            fixed += 1;
        }
        prev = t.entity();
    }
    fixed
}

/// Valid IOB2: only word-level tags, and every `I-X` continues an `X` span.
pub fn is_valid_iob2(tags: &[Tag]) -> bool {
    let mut prev: Option<EntityType> = None;
    for &t in tags {
        if !t.is_iob2() || (t.is_inside() && prev != t.entity()) {
            return false;
        }
        prev = t.entity();
    }
    true
}
