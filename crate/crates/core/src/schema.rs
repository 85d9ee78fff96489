//! Field identifiers and the three-level schema that splits them.
//!
//! A full identifier such as `class=od,stream=oper,...,param=v` is split into
//! a *dataset* key (which container/directory the field lives in), a
//! *collocation* key (which index groups it) and an *element* key (the entry
//! inside that index). Keys are stringified for indexing by joining their
//! values with `:`; given the keyword list of a level the string parses back.
//!
//! Schema source format, one level per line:
//!
//! ```text
//! # comment
//! dataset: class, stream, expver, date, time
//! collocation: type, levtype, number, levelist
//! element: step, param
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("schema syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("keyword `{0}` appears more than once in the schema")]
    DuplicateKeyword(String),
    #[error("schema level `{0}` has no keywords")]
    EmptyLevel(Level),
    #[error("identifier is missing keyword `{0}`")]
    MissingKeyword(String),
    #[error("identifier has keyword `{0}` which the schema does not define")]
    UnknownKeyword(String),
    #[error("keyword `{0}` repeated in key")]
    RepeatedKeyword(String),
    #[error("invalid key component `{0}`: must be non-empty and contain no ':', '=' or ','")]
    InvalidToken(String),
    #[error("cannot parse `{text}` as a {level} key: {reason}")]
    BadKeyString {
        level: Level,
        text: String,
        reason: String,
    },
    #[error("request span for `{0}` is empty")]
    EmptySpan(String),
}

/// One of the three levels an identifier is split into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Dataset,
    Collocation,
    Element,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Dataset, Level::Collocation, Level::Element];

    pub fn name(self) -> &'static str {
        match self {
            Level::Dataset => "dataset",
            Level::Collocation => "collocation",
            Level::Element => "element",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.contains([':', '=', ','])
}

/// Ordered keyword → value mapping.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Key {
    pairs: Vec<(String, String)>,
}

impl Key {
    pub fn new<I, K, V>(pairs: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut key = Key::default();
        for (k, v) in pairs {
            key.push(k, v)?;
        }
        Ok(key)
    }

    /// Parses `k1=v1,k2=v2`. Whitespace around items is ignored.
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut key = Key::default();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| SchemaError::InvalidToken(item.to_string()))?;
            key.push(k.trim(), v.trim())?;
        }
        Ok(key)
    }

    pub fn push(&mut self, keyword: impl Into<String>, value: impl Into<String>) -> Result<(), SchemaError> {
        let (keyword, value) = (keyword.into(), value.into());
        if !valid_token(&keyword) {
            return Err(SchemaError::InvalidToken(keyword));
        }
        if !valid_token(&value) {
            return Err(SchemaError::InvalidToken(value));
        }
        if self.get(&keyword).is_some() {
            return Err(SchemaError::RepeatedKeyword(keyword));
        }
        self.pairs.push((keyword, value));
        Ok(())
    }

    pub fn get(&self, keyword: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == keyword)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn keywords(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(k, _)| k.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Values joined with `:` in key order.
    pub fn stringify(&self) -> String {
        stringify(self)
    }

    /// Inverse of [`stringify`] given the keyword list of the level.
    pub fn from_stringified(level: Level, keywords: &[String], text: &str) -> Result<Self, SchemaError> {
        let bad = |reason: &str| SchemaError::BadKeyString {
            level,
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let values: Vec<&str> = text.split(':').collect();
        if values.len() != keywords.len() {
            return Err(bad(&format!(
                "expected {} values, found {}",
                keywords.len(),
                values.len()
            )));
        }
        Key::new(keywords.iter().cloned().zip(values.into_iter().map(str::to_string)))
            .map_err(|e| bad(&e.to_string()))
    }

    /// Same pairs, sorted by keyword. Used where order must not matter.
    pub fn canonical(&self) -> Key {
        let mut pairs = self.pairs.clone();
        pairs.sort();
        Key { pairs }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.pairs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub fn stringify(key: &Key) -> String {
    key.values().collect::<Vec<_>>().join(":")
}

/// Keyword lists for the three levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    dataset: Vec<String>,
    collocation: Vec<String>,
    element: Vec<String>,
}

impl Schema {
    pub fn new(
        dataset: Vec<String>,
        collocation: Vec<String>,
        element: Vec<String>,
    ) -> Result<Self, SchemaError> {
        let schema = Schema {
            dataset,
            collocation,
            element,
        };
        let mut seen = HashSet::new();
        for level in Level::ALL {
            let kws = schema.keywords(level);
            if kws.is_empty() {
                return Err(SchemaError::EmptyLevel(level));
            }
            for kw in kws {
                if !valid_token(kw) || kw.chars().any(char::is_whitespace) {
                    return Err(SchemaError::InvalidToken(kw.clone()));
                }
                if !seen.insert(kw.as_str()) {
                    return Err(SchemaError::DuplicateKeyword(kw.clone()));
                }
            }
        }
        Ok(schema)
    }

    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut levels: [Option<Vec<String>>; 3] = [None, None, None];
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let trimmed = raw.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let indent = raw.len() - trimmed.len();
            let syntax = |column: usize, message: String| SchemaError::Syntax {
                line,
                column,
                message,
            };
            let (name, rest) = trimmed
                .split_once(':')
                .ok_or_else(|| syntax(raw.trim_end().len() + 1, "expected `level: keyword, ...`".into()))?;
            let level = match name.trim() {
                "dataset" => Level::Dataset,
                "collocation" => Level::Collocation,
                "element" => Level::Element,
                other => {
                    return Err(syntax(
                        indent + 1,
                        format!("unknown level `{other}` (expected dataset, collocation or element)"),
                    ))
                }
            };
            let slot = &mut levels[level as usize];
            if slot.is_some() {
                return Err(syntax(indent + 1, format!("level `{level}` defined twice")));
            }
            let mut keywords = Vec::new();
            let mut column = indent + name.len() + 2;
            if !rest.trim().is_empty() {
                for item in rest.split(',') {
                    let kw = item.trim();
                    let at = column + (item.len() - item.trim_start().len());
                    if kw.is_empty() {
                        return Err(syntax(at, "empty keyword".into()));
                    }
                    if !valid_token(kw) || kw.chars().any(char::is_whitespace) {
                        return Err(syntax(at, format!("invalid keyword `{kw}`")));
                    }
                    keywords.push(kw.to_string());
                    column += item.len() + 1;
                }
            }
            *slot = Some(keywords);
        }
        let [d, c, e] = levels;
        Schema::new(
            d.unwrap_or_default(),
            c.unwrap_or_default(),
            e.unwrap_or_default(),
        )
    }

    pub fn keywords(&self, level: Level) -> &[String] {
        match level {
            Level::Dataset => &self.dataset,
            Level::Collocation => &self.collocation,
            Level::Element => &self.element,
        }
    }

    pub fn dataset_keywords(&self) -> &[String] {
        &self.dataset
    }

    pub fn collocation_keywords(&self) -> &[String] {
        &self.collocation
    }

    pub fn element_keywords(&self) -> &[String] {
        &self.element
    }

    pub fn all_keywords(&self) -> impl Iterator<Item = &str> {
        Level::ALL
            .into_iter()
            .flat_map(|l| self.keywords(l).iter().map(String::as_str))
    }

    /// Splits a full identifier into (dataset, collocation, element) keys, each
    /// in schema order.
    pub fn split(&self, full: &Key) -> Result<(Key, Key, Key), SchemaError> {
        for kw in full.keywords() {
            if !self.all_keywords().any(|k| k == kw) {
                return Err(SchemaError::UnknownKeyword(kw.to_string()));
            }
        }
        let level_key = |level: Level| -> Result<Key, SchemaError> {
            let mut key = Key::default();
            for kw in self.keywords(level) {
                let v = full
                    .get(kw)
                    .ok_or_else(|| SchemaError::MissingKeyword(kw.clone()))?;
                key.pairs.push((kw.clone(), v.to_string()));
            }
            Ok(key)
        };
        Ok((
            level_key(Level::Dataset)?,
            level_key(Level::Collocation)?,
            level_key(Level::Element)?,
        ))
    }

    /// Concatenates the three level keys into a full identifier in schema order.
    pub fn merge(&self, dataset: &Key, collocation: &Key, element: &Key) -> Result<Key, SchemaError> {
        let mut full = Key::default();
        for key in [dataset, collocation, element] {
            for (k, v) in key.iter() {
                full.push(k, v)?;
            }
        }
        // validates completeness and rejects foreign keywords
        self.split(&full)?;
        Ok(full)
    }

    pub fn parse_level(&self, level: Level, text: &str) -> Result<Key, SchemaError> {
        Key::from_stringified(level, self.keywords(level), text)
    }

    /// Canonical source text; two schemas are equal iff their canonical texts are.
    pub fn canonical_text(&self) -> String {
        Level::ALL
            .iter()
            .map(|&l| format!("{}: {}\n", l, self.keywords(l).join(", ")))
            .collect()
    }

    /// Hex SHA-256 of the canonical text, stored alongside catalogues to reject
    /// sessions opened with a different schema.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A partial request: per keyword, the set of accepted values. Keywords not
/// mentioned match anything.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Request {
    spans: BTreeMap<String, BTreeSet<String>>,
}

impl Request {
    pub fn all() -> Self {
        Request::default()
    }

    pub fn with<I, S>(mut self, keyword: impl Into<String>, values: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let keyword = keyword.into();
        let values: BTreeSet<String> = values.into_iter().map(Into::into).collect();
        if values.is_empty() {
            return Err(SchemaError::EmptySpan(keyword));
        }
        self.spans.insert(keyword, values);
        Ok(self)
    }

    /// Parses `step=0/1/2,param=v`.
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut req = Request::default();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, vs) = item
                .split_once('=')
                .ok_or_else(|| SchemaError::InvalidToken(item.to_string()))?;
            let values: Vec<&str> = vs.split('/').map(str::trim).filter(|v| !v.is_empty()).collect();
            req = req.with(k.trim(), values)?;
        }
        Ok(req)
    }

    pub fn span(&self, keyword: &str) -> Option<&BTreeSet<String>> {
        self.spans.get(keyword)
    }

    pub fn spans(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.spans.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// True iff every keyword of `key` that the request constrains has an
    /// accepted value.
    pub fn matches(&self, key: &Key) -> bool {
        key.iter().all(|(k, v)| match self.spans.get(k) {
            Some(span) => span.contains(v),
            None => true,
        })
    }

    /// Whether a keyword's value set (e.g. an axis) could satisfy the request.
    pub fn admits_any<'a>(&self, keyword: &str, mut values: impl Iterator<Item = &'a str>) -> bool {
        match self.spans.get(keyword) {
            Some(span) => values.any(|v| span.contains(v)),
            None => true,
        }
    }
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, vs)) in self.spans.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}=")?;
            for (j, v) in vs.iter().enumerate() {
                if j > 0 {
                    f.write_str("/")?;
                }
                f.write_str(v)?;
            }
        }
        Ok(())
    }
}
