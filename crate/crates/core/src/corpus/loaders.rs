use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::DateTime;

use super::{Attribute, AttributeTable, FeedbackKind, Interaction, InteractionLog};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingFormat {
    /// `u.data` (tab separated) with `u.user` (pipe separated).
    MovieLens100k,
    /// `ratings.dat` with `users.dat`, both `::` separated.
    MovieLens1m,
}

impl RatingFormat {
    fn separator(self) -> &'static str {
        match self {
            RatingFormat::MovieLens100k => "\t",
            RatingFormat::MovieLens1m => "::",
        }
    }

    fn user_file(self) -> &'static str {
        match self {
            RatingFormat::MovieLens100k => "u.user",
            RatingFormat::MovieLens1m => "users.dat",
        }
    }
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "movielens-100k" | "ml100k" | "ml-100k" => Ok(RatingFormat::MovieLens100k),
            "movielens-1m" | "ml1m" | "ml-1m" => Ok(RatingFormat::MovieLens1m),
            other => Err(Error::Config(format!("unknown rating log format `{other}`"))),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_timestamp(raw: &str, path: &Path, line: usize) -> Result<i64> {
    let ts: i64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("bad timestamp `{raw}`")))?;
    if ts < 0 {
        return Err(Error::parse(path, line, format!("negative timestamp {ts}")));
    }
    Ok(ts)
}

/// Reads a MovieLens rating file. The user profile file (`u.user` or
/// `users.dat`) is picked up from the same directory when present; without
/// it the attribute table is empty.
pub fn load_rating_log(path: &Path, format: RatingFormat) -> Result<(InteractionLog, AttributeTable)> {
    let text = read(path)?;
    let sep = format.separator();
    let mut interactions = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let value: u32 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad rating `{}`", fields[2])))?;
        if !(1..=5).contains(&value) {
            return Err(Error::parse(path, lineno, format!("rating {value} outside 1..=5")));
        }
        interactions.push(Interaction {
            user: fields[0].trim().to_owned(),
            item: fields[1].trim().to_owned(),
            timestamp: parse_timestamp(fields[3], path, lineno)?,
            value,
        });
    }

    let user_path = path
        .parent()
        .map(|dir| dir.join(format.user_file()))
        .unwrap_or_else(|| PathBuf::from(format.user_file()));
    let table = if user_path.exists() {
        load_movielens_users(&user_path, format)?
    } else {
        log::warn!("no user profile file at {}", user_path.display());
        AttributeTable::default()
    };
    Ok((
        InteractionLog {
            kind: FeedbackKind::Rating,
            interactions,
        },
        table,
    ))
}

/// Raw attributes `gender`, `occupation`, `zipcode` plus the age column:
/// ML-100K ages are years (`age_years`), ML-1M ages are already bracket codes
/// (`age`).
fn load_movielens_users(path: &Path, format: RatingFormat) -> Result<AttributeTable> {
    let text = read(path)?;
    let mut columns: BTreeMap<&'static str, Vec<(String, String)>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (user, age, gender, occupation, zip) = match format {
            RatingFormat::MovieLens100k => {
                let f: Vec<&str> = line.split('|').collect();
                if f.len() != 5 {
                    return Err(Error::parse(path, lineno, "expected user|age|gender|occupation|zip"));
                }
                (f[0], f[1], f[2], f[3], f[4])
            }
            RatingFormat::MovieLens1m => {
                let f: Vec<&str> = line.split("::").collect();
                if f.len() != 5 {
                    return Err(Error::parse(path, lineno, "expected user::gender::age::occupation::zip"));
                }
                (f[0], f[2], f[1], f[3], f[4])
            }
        };
        let user = user.trim().to_owned();
        let age_key = match format {
            RatingFormat::MovieLens100k => "age_years",
            RatingFormat::MovieLens1m => "age",
        };
        for (key, value) in [
            (age_key, age),
            ("gender", gender),
            ("occupation", occupation),
            ("zipcode", zip),
        ] {
            let value = value.trim();
            if !value.is_empty() {
                columns
                    .entry(key)
                    .or_default()
                    .push((user.clone(), value.to_owned()));
            }
        }
    }
    let mut table = AttributeTable::default();
    for (name, values) in columns {
        table.insert(name, Attribute::from_values(values));
    }
    Ok(table)
}

/// Reads a listening log and its user profile file.
///
/// Two row layouts are accepted: the Last.fm-1K dump
/// (`user \t ISO-8601 time \t artist-id \t artist-name \t track-id \t track-name`)
/// and a compact `user \t artist \t unix-seconds [\t plays]`. Events collapse
/// to one interaction per (user, artist) carrying the latest timestamp and the
/// summed play count.
///
/// The profile file (`#id \t gender \t age \t country \t registered`) yields
/// the raw attributes `gender` and `country`.
pub fn load_listening_log(path: &Path, profile: &Path) -> Result<(InteractionLog, AttributeTable)> {
    if !profile.exists() {
        return Err(Error::Config(format!(
            "listening profile file {} not found",
            profile.display()
        )));
    }
    let text = read(path)?;
    let mut pairs: HashMap<(String, String), (i64, u32)> = HashMap::new();
    let mut order: Vec<(String, String)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let (user, artist, ts, plays) = match f.len() {
            6 => {
                let ts = DateTime::parse_from_rfc3339(f[1].trim())
                    .map_err(|e| Error::parse(path, lineno, format!("bad time `{}`: {e}", f[1])))?
                    .timestamp();
                if ts < 0 {
                    return Err(Error::parse(path, lineno, "event before the epoch"));
                }
                let artist = if f[2].trim().is_empty() { f[3] } else { f[2] };
                (f[0], artist, ts, 1)
            }
            3 | 4 => {
                let plays = match f.get(3) {
                    Some(p) => p
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(path, lineno, format!("bad play count `{p}`")))?,
                    None => 1,
                };
                (f[0], f[1], parse_timestamp(f[2], path, lineno)?, plays)
            }
            n => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected 3, 4 or 6 fields, found {n}"),
                ))
            }
        };
        let artist = artist.trim();
        if artist.is_empty() {
            return Err(Error::parse(path, lineno, "empty artist"));
        }
        let key = (user.trim().to_owned(), artist.to_owned());
        match pairs.get_mut(&key) {
            Some((latest, total)) => {
                *latest = (*latest).max(ts);
                *total += plays;
            }
            None => {
                order.push(key.clone());
                pairs.insert(key, (ts, plays));
            }
        }
    }
    let interactions = order
        .into_iter()
        .map(|key| {
            let (timestamp, value) = pairs[&key];
            Interaction {
                user: key.0,
                item: key.1,
                timestamp,
                value,
            }
        })
        .collect();

    let table = load_listening_profiles(profile)?;
    Ok((
        InteractionLog {
            kind: FeedbackKind::Listening,
            interactions,
        },
        table,
    ))
}

fn load_listening_profiles(path: &Path) -> Result<AttributeTable> {
    let text = read(path)?;
    let mut gender = Vec::new();
    let mut country = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 4 {
            return Err(Error::parse(path, lineno + 1, "expected id, gender, age, country"));
        }
        let user = f[0].trim();
        let g = f[1].trim();
        if !g.is_empty() {
            gender.push((user.to_owned(), g.to_ascii_lowercase()));
        }
        let c = f[3].trim();
        if !c.is_empty() {
            country.push((user.to_owned(), c.to_owned()));
        }
    }
    let mut table = AttributeTable::default();
    table.insert("gender", Attribute::from_values(gender));
    table.insert("country", Attribute::from_values(country));
    Ok(table)
}
