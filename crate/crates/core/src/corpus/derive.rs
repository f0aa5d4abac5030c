use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{Attribute, AttributeTable, OTHER_CATEGORY};
use crate::error::{Error, Result};

const ZIP3_STATE: &str = include_str!("../../data/lookup/zip3_state.tsv");
const COUNTRY_CONTINENT: &str = include_str!("../../data/lookup/country_continent.tsv");
const COUNTRY_EU_REST: &str = include_str!("../../data/lookup/country_eu_rest.tsv");

/// Rules producing a derived categorical attribute from a raw one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeriveRule {
    /// `zipcode` -> `state` via the 3-digit ZIP prefix.
    ZipToState,
    /// `country` -> `continent`.
    CountryToContinent,
    /// `country` -> `eu_vs_rest`.
    CountryToEuRest,
    /// `age_years` -> `age`, bucketed into the ML-1M brackets
    /// (1: <18, 18: 18-24, 25: 25-34, 35: 35-44, 45: 45-49, 50: 50-55, 56: 56+).
    AgeToBracket,
}

impl DeriveRule {
    pub fn source(self) -> &'static str {
        match self {
            DeriveRule::ZipToState => "zipcode",
            DeriveRule::CountryToContinent | DeriveRule::CountryToEuRest => "country",
            DeriveRule::AgeToBracket => "age_years",
        }
    }

    pub fn target(self) -> &'static str {
        match self {
            DeriveRule::ZipToState => "state",
            DeriveRule::CountryToContinent => "continent",
            DeriveRule::CountryToEuRest => "eu_vs_rest",
            DeriveRule::AgeToBracket => "age",
        }
    }

    pub fn needs_lookup(self) -> bool {
        !matches!(self, DeriveRule::AgeToBracket)
    }
}

impl FromStr for DeriveRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zip_to_state" => Ok(DeriveRule::ZipToState),
            "country_to_continent" => Ok(DeriveRule::CountryToContinent),
            "country_to_eu_rest" => Ok(DeriveRule::CountryToEuRest),
            "age_to_bracket" => Ok(DeriveRule::AgeToBracket),
            other => Err(Error::Config(format!("unknown derivation rule `{other}`"))),
        }
    }
}

/// Two-column (key, category) lookup table. Lines starting with `#` are
/// comments; columns are separated by a tab or a comma.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lookup {
    map: HashMap<String, String>,
}

impl Lookup {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('\t')
                .or_else(|| line.split_once(','))
                .ok_or_else(|| {
                    Error::Config(format!("lookup line {}: expected two columns", lineno + 1))
                })?;
            map.insert(key.trim().to_owned(), value.trim().to_owned());
        }
        Ok(Lookup { map })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("lookup file {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// The lookup table shipped with the crate for `rule`.
    pub fn bundled(rule: DeriveRule) -> Option<Self> {
        let text = match rule {
            DeriveRule::ZipToState => ZIP3_STATE,
            DeriveRule::CountryToContinent => COUNTRY_CONTINENT,
            DeriveRule::CountryToEuRest => COUNTRY_EU_REST,
            DeriveRule::AgeToBracket => return None,
        };
        Some(Self::parse(text).expect("bundled lookup parses"))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn age_bracket(raw: &str) -> &'static str {
    match raw.trim().parse::<u32>() {
        Ok(a) if a < 18 => "1",
        Ok(a) if a < 25 => "18",
        Ok(a) if a < 35 => "25",
        Ok(a) if a < 45 => "35",
        Ok(a) if a < 50 => "45",
        Ok(a) if a < 56 => "50",
        Ok(_) => "56",
        Err(_) => OTHER_CATEGORY,
    }
}

fn map_value(rule: DeriveRule, lookup: Option<&Lookup>, raw: &str) -> String {
    match rule {
        DeriveRule::AgeToBracket => age_bracket(raw).to_owned(),
        DeriveRule::ZipToState => {
            let prefix: String = raw.trim().chars().take(3).collect();
            if prefix.len() == 3 && prefix.chars().all(|c| c.is_ascii_digit()) {
                lookup
                    .and_then(|l| l.get(&prefix))
                    .unwrap_or(OTHER_CATEGORY)
                    .to_owned()
            } else {
                OTHER_CATEGORY.to_owned()
            }
        }
        DeriveRule::CountryToContinent | DeriveRule::CountryToEuRest => lookup
            .and_then(|l| l.get(raw.trim()))
            .unwrap_or(OTHER_CATEGORY)
            .to_owned(),
    }
}

/// Adds `rule.target()` to a copy of `table`. Unmappable source values land
/// in [`OTHER_CATEGORY`]; users without a source value get no entry (and
/// become `unknown` once restricted to a dataset).
pub fn derive_attribute(
    table: &AttributeTable,
    rule: DeriveRule,
    lookup: Option<&Lookup>,
) -> Result<AttributeTable> {
    let source = table.get(rule.source()).ok_or_else(|| {
        Error::InvalidInput(format!(
            "attribute `{}` required by {rule:?} is missing",
            rule.source()
        ))
    })?;
    if rule.needs_lookup() && lookup.is_none() {
        return Err(Error::Config(format!("{rule:?} requires a lookup table")));
    }
    let derived = Attribute::from_values(
        source
            .values()
            .map(|(user, raw)| (user.to_owned(), map_value(rule, lookup, raw))),
    );
    let mut out = table.clone();
    out.insert(rule.target(), derived);
    Ok(out)
}
