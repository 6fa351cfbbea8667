use std::fmt;

use serde::{Deserialize, Serialize};

/// Bucketed database match count fed to the policy as its first input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DbBucket {
    Zero,
    One,
    Two,
    Three,
    Many,
    /// The domain has no database.
    NoDb,
}

impl DbBucket {
    pub const ALL: [DbBucket; 6] = [
        DbBucket::Zero,
        DbBucket::One,
        DbBucket::Two,
        DbBucket::Three,
        DbBucket::Many,
        DbBucket::NoDb,
    ];

    pub fn from_count(count: usize) -> Self {
        match count {
            0 => DbBucket::Zero,
            1 => DbBucket::One,
            2 => DbBucket::Two,
            3 => DbBucket::Three,
            _ => DbBucket::Many,
        }
    }

    /// `None` means the domain has no database.
    pub fn from_optional(count: Option<usize>) -> Self {
        count.map_or(DbBucket::NoDb, DbBucket::from_count)
    }

    /// Row in the policy's bucket embedding table.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Vocabulary token used when the bucket is part of a text context.
    pub fn token(self) -> &'static str {
        match self {
            DbBucket::Zero => "<db_0>",
            DbBucket::One => "<db_1>",
            DbBucket::Two => "<db_2>",
            DbBucket::Three => "<db_3>",
            DbBucket::Many => "<db_many>",
            DbBucket::NoDb => "<db_nodb>",
        }
    }
}

impl fmt::Display for DbBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Bucket for a match count.
pub fn db_bucket_token(count: usize) -> DbBucket {
    DbBucket::from_count(count)
}
