//! Canonical JSONL dataset format.
//!
//! Instances file, one object per line:
//! `{"tweet_id", "label": "N|F|T|U", "text", "comments": [{"id","parent","text","delay_min"}],
//! "users": [{"id","action","comment"?}]}`. `parent` is the tweet id or an
//! earlier comment id; the optional `comment` on a user entry ties the
//! interaction to the comment it authored.
//!
//! Users file, one object per line: `{"id", "follower_count", "friend_count",
//! "account_age_days", "tweet_count", "verified", "has_description"}`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::encoders::UserProfile;
use crate::graphs::Interaction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    /// Non-rumor.
    N,
    /// False rumor.
    F,
    /// True rumor.
    T,
    /// Unverified rumor.
    U,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::N, Label::F, Label::T, Label::U];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::N => "N",
            Label::F => "F",
            Label::T => "T",
            Label::U => "U",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N" => Ok(Label::N),
            "F" => Ok(Label::F),
            "T" => Ok(Label::T),
            "U" => Ok(Label::U),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub parent: String,
    pub text: String,
    pub delay_min: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAction {
    pub id: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub tweet_id: String,
    pub label: Label,
    pub source_text: String,
    pub comments: Vec<Comment>,
    pub users: Vec<UserAction>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    tweet_id: String,
    label: String,
    text: String,
    #[serde(default)]
    comments: Vec<Comment>,
    #[serde(default)]
    users: Vec<UserAction>,
}

#[derive(Serialize, Deserialize)]
struct UserRecord {
    id: String,
    #[serde(flatten)]
    profile: UserProfile,
}

impl Instance {
    /// Checks the tree and delay invariants; `line` is used in errors.
    pub fn validate(&self, line: usize) -> Result<(), DataError> {
        let mut delay_of: HashMap<&str, f64> = HashMap::new();
        delay_of.insert(&self.tweet_id, 0.0);
        for c in &self.comments {
            if !c.delay_min.is_finite() || c.delay_min < 0.0 {
                return Err(DataError::Schema {
                    line,
                    message: format!("comment {} has invalid delay {}", c.id, c.delay_min),
                });
            }
            let Some(&parent_delay) = delay_of.get(c.parent.as_str()) else {
                return Err(DataError::OrphanParent {
                    line,
                    comment: c.id.clone(),
                    parent: c.parent.clone(),
                });
            };
            if c.delay_min < parent_delay {
                return Err(DataError::Schema {
                    line,
                    message: format!(
                        "comment {} posted before its parent {}",
                        c.id, c.parent
                    ),
                });
            }
            if delay_of.insert(&c.id, c.delay_min).is_some() {
                return Err(DataError::Schema {
                    line,
                    message: format!("duplicate node id {}", c.id),
                });
            }
        }
        for u in &self.users {
            if let Some(cid) = &u.comment {
                if cid == &self.tweet_id || !delay_of.contains_key(cid.as_str()) {
                    return Err(DataError::Schema {
                        line,
                        message: format!("user {} references unknown comment {cid}", u.id),
                    });
                }
            }
        }
        Ok(())
    }

    /// Parent index per tree node; node 0 is the source, node `i+1` is
    /// `comments[i]`.
    pub fn tree_parents(&self) -> Vec<Option<usize>> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        index.insert(&self.tweet_id, 0);
        let mut parents = vec![None];
        for (i, c) in self.comments.iter().enumerate() {
            parents.push(index.get(c.parent.as_str()).copied());
            index.insert(&c.id, i + 1);
        }
        parents
    }

    pub fn interactions(&self) -> impl Iterator<Item = Interaction> + '_ {
        self.users.iter().map(|u| Interaction {
            user_id: u.id.clone(),
            tweet_id: self.tweet_id.clone(),
            action: u.action.clone(),
        })
    }

    fn to_record(&self) -> InstanceRecord {
        InstanceRecord {
            tweet_id: self.tweet_id.clone(),
            label: self.label.to_string(),
            text: self.source_text.clone(),
            comments: self.comments.clone(),
            users: self.users.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Twitter15,
    Twitter16,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub users: BTreeMap<String, UserProfile>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn empty(provenance: Provenance) -> Self {
        Self {
            instances: Vec::new(),
            users: BTreeMap::new(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.instances.iter().map(|i| i.label).collect()
    }

    /// Indices of instances with no interacting users left.
    pub fn flagged(&self) -> Vec<usize> {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, i)| i.users.is_empty())
            .map(|(k, _)| k)
            .collect()
    }

    pub fn interactions(&self) -> Vec<Interaction> {
        self.instances.iter().flat_map(Instance::interactions).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            users: self.users.clone(),
            provenance: self.provenance,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut ids = HashSet::new();
        for (k, inst) in self.instances.iter().enumerate() {
            inst.validate(k + 1)?;
            if !ids.insert(inst.tweet_id.as_str()) {
                return Err(DataError::Schema {
                    line: k + 1,
                    message: format!("duplicate tweet_id {}", inst.tweet_id),
                });
            }
            for u in &inst.users {
                if !self.users.contains_key(&u.id) {
                    return Err(DataError::MissingProfile {
                        line: k + 1,
                        user: u.id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn json_err(line: usize, e: serde_json::Error) -> DataError {
    DataError::Schema {
        line,
        message: e.to_string(),
    }
}

/// Parses an instances JSONL stream; blank lines are skipped.
pub fn parse_instances<R: BufRead>(reader: R) -> Result<Vec<Instance>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord = serde_json::from_str(&line).map_err(|e| json_err(lineno, e))?;
        let label = rec.label.parse().map_err(|label| DataError::UnknownLabel {
            line: lineno,
            label,
        })?;
        let inst = Instance {
            tweet_id: rec.tweet_id,
            label,
            source_text: rec.text,
            comments: rec.comments,
            users: rec.users,
        };
        inst.validate(lineno)?;
        out.push(inst);
    }
    Ok(out)
}

pub fn parse_users<R: BufRead>(reader: R) -> Result<BTreeMap<String, UserProfile>, DataError> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UserRecord = serde_json::from_str(&line).map_err(|e| json_err(lineno, e))?;
        rec.profile.validate().map_err(|e| DataError::Schema {
            line: lineno,
            message: e.to_string(),
        })?;
        if out.insert(rec.id.clone(), rec.profile).is_some() {
            return Err(DataError::Schema {
                line: lineno,
                message: format!("duplicate user {}", rec.id),
            });
        }
    }
    Ok(out)
}

/// Reads and validates an instances file plus its users file.
pub fn load_dataset(
    instances: impl AsRef<Path>,
    users: impl AsRef<Path>,
    provenance: Provenance,
) -> Result<Dataset, DataError> {
    let instances = parse_instances(BufReader::new(File::open(instances)?))?;
    let users = parse_users(BufReader::new(File::open(users)?))?;
    let ds = Dataset {
        instances,
        users,
        provenance,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn write_instances<W: Write>(mut w: W, instances: &[Instance]) -> Result<(), DataError> {
    for inst in instances {
        serde_json::to_writer(&mut w, &inst.to_record()).map_err(|e| json_err(0, e))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_users<W: Write>(
    mut w: W,
    users: &BTreeMap<String, UserProfile>,
) -> Result<(), DataError> {
    for (id, profile) in users {
        let rec = UserRecord {
            id: id.clone(),
            profile: profile.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| json_err(0, e))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_dataset(
    dataset: &Dataset,
    instances: impl AsRef<Path>,
    users: impl AsRef<Path>,
) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(instances)?);
    write_instances(&mut w, &dataset.instances)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(users)?);
    write_users(&mut w, &dataset.users)?;
    w.flush()?;
    Ok(())
}
