//! Filtering, splitting and early-detection cutoffs.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Label};

/// Keeps users who interact with at least two distinct source tweets.
pub fn filter_connected_users(dataset: &Dataset) -> Dataset {
    let mut touched: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for inst in &dataset.instances {
        for u in &inst.users {
            touched
                .entry(u.id.as_str())
                .or_default()
                .insert(inst.tweet_id.as_str());
        }
    }
    let keep: HashSet<String> = touched
        .into_iter()
        .filter(|(_, tweets)| tweets.len() >= 2)
        .map(|(u, _)| u.to_string())
        .collect();
    let mut out = dataset.clone();
    for inst in &mut out.instances {
        inst.users.retain(|u| keep.contains(&u.id));
    }
    out.users.retain(|id, _| keep.contains(id));
    out
}

fn class_members(labels: &[Label], seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = vec![Vec::new(); Label::COUNT];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    by_class
}

/// Stratified `(train, test)` split with `round(ratio · n_c)` of each class in
/// train. Both halves are returned in ascending order.
pub fn split(labels: &[Label], ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let ratio = ratio.clamp(0.0, 1.0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in class_members(labels, seed) {
        let n_train = (ratio * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Folds {
    pub folds: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

impl Folds {
    /// `(train, test)` indices for fold `i`.
    pub fn train_test(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let test = self.folds[i].clone();
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        (train, test)
    }
}

/// Stratified k-fold assignment. Each class is shuffled and dealt round-robin
/// with a cursor carried across classes, so per-class counts differ by at
/// most one between folds and fold sizes stay balanced overall.
pub fn kfold_split(labels: &[Label], k: usize, seed: u64) -> Folds {
    let k = k.max(2);
    let mut folds = vec![Vec::new(); k];
    let mut warnings = Vec::new();
    let mut cursor = 0;
    for (c, members) in class_members(labels, seed).into_iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            let msg = format!(
                "class {} has {} members for {k} folds; some folds will not contain it",
                Label::ALL[c],
                members.len()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        for i in members {
            folds[cursor % k].push(i);
            cursor += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Folds { folds, warnings }
}

/// Drops comments posted after `deadline_minutes` together with the user
/// interactions attached to them. Source tweets are always kept.
pub fn early_cutoff(dataset: &Dataset, deadline_minutes: f64) -> Dataset {
    let mut out = dataset.clone();
    for inst in &mut out.instances {
        let dropped: HashSet<String> = inst
            .comments
            .iter()
            .filter(|c| c.delay_min > deadline_minutes)
            .map(|c| c.id.clone())
            .collect();
        if dropped.is_empty() {
            continue;
        }
        inst.comments.retain(|c| !dropped.contains(&c.id));
        inst.users
            .retain(|u| u.comment.as_ref().is_none_or(|c| !dropped.contains(c)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Comment, Instance, Provenance, UserAction};
    use crate::encoders::UserProfile;

    fn profile() -> UserProfile {
        UserProfile {
            follower_count: 1,
            friend_count: 1,
            account_age_days: 1.0,
            tweet_count: 1,
            verified: 0,
            has_description: 0,
        }
    }

    fn inst(id: &str, users: &[&str]) -> Instance {
        Instance {
            tweet_id: id.into(),
            label: Label::N,
            source_text: "x".into(),
            comments: vec![],
            users: users
                .iter()
                .map(|u| UserAction {
                    id: u.to_string(),
                    action: "post".into(),
                    comment: None,
                })
                .collect(),
        }
    }

    fn dataset(instances: Vec<Instance>) -> Dataset {
        let users = instances
            .iter()
            .flat_map(|i| i.users.iter().map(|u| (u.id.clone(), profile())))
            .collect();
        Dataset {
            instances,
            users,
            provenance: Provenance::Synthetic,
        }
    }

    #[test]
    fn filter_boundary() {
        let ds = dataset(vec![inst("t1", &["a", "b"]), inst("t2", &["b"])]);
        let f = filter_connected_users(&ds);
        assert!(f.instances[0].users.iter().all(|u| u.id == "b"));
        assert_eq!(f.instances[1].users.len(), 1);
        assert!(!f.users.contains_key("a"));
        assert_eq!(filter_connected_users(&f), f);
    }

    #[test]
    fn filter_everyone_single_tweet() {
        let ds = dataset(vec![inst("t1", &["a"]), inst("t2", &["b"]), inst("t3", &["c", "d"])]);
        let f = filter_connected_users(&ds);
        assert_eq!(f.flagged(), vec![0, 1, 2]);
        assert!(f.users.is_empty());
    }

    fn balanced(n_per: usize) -> Vec<Label> {
        (0..n_per * 4).map(|i| Label::ALL[i % 4]).collect()
    }

    #[test]
    fn five_fold_arithmetic() {
        let labels = balanced(25);
        let folds = kfold_split(&labels, 5, 7);
        for f in &folds.folds {
            assert_eq!(f.len(), 20);
            for l in Label::ALL {
                assert_eq!(f.iter().filter(|&&i| labels[i] == l).count(), 5);
            }
        }
        assert_eq!(folds, kfold_split(&labels, 5, 7));
        assert!(folds.warnings.is_empty());
        let (train, test) = folds.train_test(0);
        assert_eq!(train.len() + test.len(), 100);
    }

    #[test]
    fn small_class_warns() {
        let mut labels = balanced(10);
        labels.push(Label::U);
        labels.retain(|&l| l != Label::T);
        labels.extend([Label::T, Label::T]);
        let folds = kfold_split(&labels, 5, 1);
        assert_eq!(folds.warnings.len(), 1);
        let all: BTreeSet<usize> = folds.folds.iter().flatten().copied().collect();
        assert_eq!(all.len(), labels.len());
    }

    #[test]
    fn holdout_ratio() {
        let labels = balanced(10);
        let (train, test) = split(&labels, 0.8, 3);
        assert_eq!((train.len(), test.len()), (32, 8));
        let (t2, _) = split(&labels, 0.8, 3);
        assert_eq!(train, t2);
    }

    fn with_delays(delays: &[f64]) -> Dataset {
        let mut i = inst("t1", &["poster"]);
        for (k, &d) in delays.iter().enumerate() {
            let id = format!("c{k}");
            i.comments.push(Comment {
                id: id.clone(),
                parent: "t1".into(),
                text: "r".into(),
                delay_min: d,
            });
            i.users.push(UserAction {
                id: format!("u{k}"),
                action: "comment".into(),
                comment: Some(id),
            });
        }
        dataset(vec![i])
    }

    #[test]
    fn cutoff_threshold() {
        let ds = with_delays(&[10.0, 50.0, 120.0]);
        let cut = early_cutoff(&ds, 60.0);
        assert_eq!(cut.instances[0].comments.len(), 2);
        assert_eq!(cut.instances[0].users.len(), 3);
        let zero = early_cutoff(&ds, 0.0);
        assert!(zero.instances[0].comments.is_empty());
        assert_eq!(zero.instances[0].users.len(), 1);
        assert_eq!(early_cutoff(&ds, f64::INFINITY), ds);
    }
}
