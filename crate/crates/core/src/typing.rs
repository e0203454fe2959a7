//! Cell type detection and the integer type encoding.
//!
//! Fine-grained types collapse onto five codes: every numeric format is 0,
//! dates and times are 1, emails 2, unmatched non-text 3 and text 4.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CellType {
    Integer,
    Float,
    Percentage,
    ScientificNotation,
    Currency,
    Date,
    Time,
    Email,
    Other,
    String,
}

impl CellType {
    pub const ALL: [CellType; 10] = [
        CellType::Integer,
        CellType::Float,
        CellType::Percentage,
        CellType::ScientificNotation,
        CellType::Currency,
        CellType::Date,
        CellType::Time,
        CellType::Email,
        CellType::Other,
        CellType::String,
    ];

    pub const fn code(self) -> u8 {
        match self {
            CellType::Integer
            | CellType::Float
            | CellType::Percentage
            | CellType::ScientificNotation
            | CellType::Currency => 0,
            CellType::Date | CellType::Time => 1,
            CellType::Email => 2,
            CellType::Other => 3,
            CellType::String => 4,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            CellType::Integer => "Integer",
            CellType::Float => "Float",
            CellType::Percentage => "Percentage",
            CellType::ScientificNotation => "ScientificNotation",
            CellType::Currency => "Currency",
            CellType::Date => "Date",
            CellType::Time => "Time",
            CellType::Email => "Email",
            CellType::Other => "Other",
            CellType::String => "String",
        }
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CellType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown cell type `{s}`"))
    }
}

/// What the type component compares: the collapsed code (default) or the
/// fine-grained type name.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeGranularity {
    #[default]
    Code,
    Name,
}

impl TypeGranularity {
    pub fn mismatch(self, a: CellType, b: CellType) -> bool {
        match self {
            TypeGranularity::Code => a.code() != b.code(),
            TypeGranularity::Name => a != b,
        }
    }
}

impl FromStr for TypeGranularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "code" => Ok(TypeGranularity::Code),
            "name" => Ok(TypeGranularity::Name),
            _ => Err(format!("type granularity must be `code` or `name`, got `{s}`")),
        }
    }
}

// Unsigned magnitude: grouped thousands, plain digits with an optional
// point or comma decimal, or a bare fraction.
const NUM: &str = r"(?:\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:[.,]\d+)?|[.,]\d+)";

static SCIENTIFIC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?(?:\d+\.?\d*|\.\d+)[eE][+-]?\d+$").unwrap());
static PERCENTAGE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"^[+-]?{NUM}\s?%$")).unwrap());
static CURRENCY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^(?:[+-]?[$€£¥]\s?[+-]?{NUM}|[+-]?{NUM}\s?[$€£¥])$"
    ))
    .unwrap()
});
static INTEGER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)$").unwrap());
static FLOAT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[+-]?(?:\d{1,3}(?:,\d{3})+\.\d+|\d+\.\d*|\.\d+|\d+,\d+)$").unwrap()
});
static ISO_DATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{4})-(\d{2})-(\d{2})$").unwrap());
static SLASH_DATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{1,2})/(\d{1,2})/(\d{4})$").unwrap());
static MON_DATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{1,2})-([A-Za-z]{3})-(\d{4})$").unwrap());
static TIME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{1,2}):(\d{2})(?::(\d{2}))?(?:\s?([aApP][mM]))?$").unwrap()
});

const MONTHS: [&str; 12] = [
    "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
];

/// Classifies a cell's text. Rules are tried most-specific first and the
/// first match wins; surrounding whitespace is ignored.
pub fn detect_type(text: &str) -> CellType {
    let t = text.trim();
    if SCIENTIFIC.is_match(t) {
        CellType::ScientificNotation
    } else if PERCENTAGE.is_match(t) {
        CellType::Percentage
    } else if CURRENCY.is_match(t) {
        CellType::Currency
    } else if INTEGER.is_match(t) {
        CellType::Integer
    } else if FLOAT.is_match(t) {
        CellType::Float
    } else if is_date(t) {
        CellType::Date
    } else if is_time(t) {
        CellType::Time
    } else if is_email(t) {
        CellType::Email
    } else if t.chars().any(char::is_alphabetic) {
        CellType::String
    } else {
        CellType::Other
    }
}

fn num(s: &str) -> u32 {
    s.parse().unwrap_or(u32::MAX)
}

fn is_date(t: &str) -> bool {
    if let Some(c) = ISO_DATE.captures(t) {
        return (1..=12).contains(&num(&c[2])) && (1..=31).contains(&num(&c[3]));
    }
    if let Some(c) = SLASH_DATE.captures(t) {
        // DD/MM/YYYY or MM/DD/YYYY: either reading must be a valid day/month.
        let (a, b) = (num(&c[1]), num(&c[2]));
        let valid = |day: u32, month: u32| (1..=31).contains(&day) && (1..=12).contains(&month);
        return valid(a, b) || valid(b, a);
    }
    if let Some(c) = MON_DATE.captures(t) {
        let mon = c[2].to_ascii_lowercase();
        return (1..=31).contains(&num(&c[1])) && MONTHS.contains(&mon.as_str());
    }
    false
}

fn is_time(t: &str) -> bool {
    let Some(c) = TIME.captures(t) else {
        return false;
    };
    let hour = num(&c[1]);
    let hour_ok = if c.get(4).is_some() {
        (1..=12).contains(&hour)
    } else {
        hour <= 23
    };
    hour_ok && num(&c[2]) <= 59 && c.get(3).is_none_or(|s| num(s.as_str()) <= 59)
}

fn is_email(t: &str) -> bool {
    let mut parts = t.split('@');
    let (Some(local), Some(domain), None) = (parts.next(), parts.next(), parts.next()) else {
        return false;
    };
    !local.is_empty()
        && !domain.is_empty()
        && domain.contains('.')
        && !t.chars().any(char::is_whitespace)
}
