//! Synthetic 4-class rumor data with controllable user-coordination and
//! text signals.
//!
//! Every class has a pool of coordinated accounts with a class-specific
//! profile archetype. Each interaction on a tweet of a coordinated class
//! comes from that class's pool with probability `coordination`, otherwise
//! from the whole user population uniformly. Texts mix class keywords
//! (probability `source_signal` / `comment_signal` per token) with shared
//! background words. Reply trees are random recursive trees whose delays
//! accumulate exponential gaps.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{Comment, DataError, Dataset, Instance, Label, Provenance, UserAction};
use crate::encoders::UserProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_instances: usize,
    pub n_background_users: usize,
    pub class_priors: [f64; 4],
    /// Probability that an interaction on a coordinated-class tweet comes
    /// from that class's pool.
    pub coordination: f64,
    pub coordinated_classes: Vec<Label>,
    pub pool_size: usize,
    /// Inclusive range.
    pub users_per_instance: (usize, usize),
    /// Inclusive range.
    pub comments_per_instance: (usize, usize),
    /// Inclusive range.
    pub tokens_per_text: (usize, usize),
    pub keywords_per_class: usize,
    pub background_words: usize,
    pub source_signal: f64,
    pub comment_signal: f64,
    pub mean_delay_min: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_instances: 80,
            n_background_users: 200,
            class_priors: [0.25; 4],
            coordination: 0.5,
            coordinated_classes: vec![Label::F, Label::U],
            pool_size: 15,
            users_per_instance: (3, 8),
            comments_per_instance: (2, 6),
            tokens_per_text: (4, 8),
            keywords_per_class: 8,
            background_words: 60,
            source_signal: 0.5,
            comment_signal: 0.5,
            mean_delay_min: 30.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Config(m.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_instances == 0 {
            return bad("n_instances must be positive");
        }
        if self.class_priors.iter().any(|p| !p.is_finite() || *p < 0.0)
            || self.class_priors.iter().sum::<f64>() <= 0.0
        {
            return bad("class_priors must be non-negative with a positive sum");
        }
        if !prob(self.coordination) || !prob(self.source_signal) || !prob(self.comment_signal) {
            return bad("coordination and signal strengths must lie in [0, 1]");
        }
        if self.n_background_users == 0 && self.pool_size == 0 {
            return bad("no users to draw from");
        }
        if !self.coordinated_classes.is_empty() && self.pool_size == 0 {
            return bad("coordinated classes need a positive pool_size");
        }
        for (name, (lo, hi)) in [
            ("users_per_instance", self.users_per_instance),
            ("comments_per_instance", self.comments_per_instance),
            ("tokens_per_text", self.tokens_per_text),
        ] {
            if lo > hi {
                return Err(DataError::Config(format!("{name}: min exceeds max")));
            }
        }
        if self.users_per_instance.0 == 0 || self.tokens_per_text.0 == 0 {
            return bad("every instance needs at least one user and one token");
        }
        if self.keywords_per_class == 0 || self.background_words == 0 {
            return bad("word lists must be nonempty");
        }
        if !(self.mean_delay_min.is_finite() && self.mean_delay_min > 0.0) {
            return bad("mean_delay_min must be positive");
        }
        Ok(())
    }

    /// Per-class instance counts by largest remainder.
    fn class_counts(&self) -> [usize; 4] {
        let total: f64 = self.class_priors.iter().sum();
        let exact: Vec<f64> = self
            .class_priors
            .iter()
            .map(|p| p / total * self.n_instances as f64)
            .collect();
        let mut counts = [0usize; 4];
        for (c, e) in exact.iter().enumerate() {
            counts[c] = e.floor() as usize;
        }
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut left = self.n_instances - counts.iter().sum::<usize>();
        for c in order {
            if left == 0 {
                break;
            }
            counts[c] += 1;
            left -= 1;
        }
        counts
    }
}

/// Generator parameters that produced a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub seed: u64,
    /// Keyword list per class, indexed by `Label::index`.
    pub keywords: Vec<Vec<String>>,
    pub background_words: Vec<String>,
    /// Coordinated accounts and the class pool each belongs to.
    pub pool_of: BTreeMap<String, Label>,
}

impl SynthTruth {
    /// `per_class` keyword-only comment texts per class, in class order.
    pub fn template_bank(&self, per_class: usize, len: usize) -> Vec<(Label, String)> {
        let mut out = Vec::new();
        for label in Label::ALL {
            let kw = &self.keywords[label.index()];
            for j in 0..per_class {
                let words: Vec<&str> = (0..len)
                    .map(|t| kw[(j * len + t) % kw.len()].as_str())
                    .collect();
                out.push((label, words.join(" ")));
            }
        }
        out
    }

    /// Plug-in estimate (nats) of the mutual information between an
    /// interaction's tweet label and the pool of the interacting user
    /// (background counts as its own value).
    pub fn pool_label_mutual_information(&self, dataset: &Dataset) -> f64 {
        let mut joint = [[0.0f64; 5]; 4];
        let mut n = 0.0;
        for inst in &dataset.instances {
            for u in &inst.users {
                let pool = self.pool_of.get(&u.id).map_or(4, |l| l.index());
                joint[inst.label.index()][pool] += 1.0;
                n += 1.0;
            }
        }
        if n == 0.0 {
            return 0.0;
        }
        let row: Vec<f64> = joint.iter().map(|r| r.iter().sum::<f64>() / n).collect();
        let col: Vec<f64> = (0..5)
            .map(|j| joint.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let mut mi = 0.0;
        for (i, r) in joint.iter().enumerate() {
            for (j, &c) in r.iter().enumerate() {
                if c > 0.0 {
                    let p = c / n;
                    mi += p * (p / (row[i] * col[j])).ln();
                }
            }
        }
        mi
    }
}

struct Archetype {
    followers: (f64, f64),
    friends: (f64, f64),
    age_days: (f64, f64),
    tweets: (f64, f64),
    verified: f64,
    description: f64,
}

// Log-normal (mean, sd) pairs for counts and age; probabilities for flags.
const BACKGROUND: Archetype = Archetype {
    followers: (4.5, 1.5),
    friends: (5.0, 1.2),
    age_days: (6.5, 1.0),
    tweets: (6.5, 1.5),
    verified: 0.05,
    description: 0.7,
};

const POOL_ARCHETYPES: [Archetype; 4] = [
    Archetype {
        followers: (8.5, 0.3),
        friends: (6.0, 0.3),
        age_days: (8.0, 0.2),
        tweets: (9.0, 0.3),
        verified: 0.6,
        description: 1.0,
    },
    Archetype {
        followers: (1.0, 0.3),
        friends: (7.0, 0.3),
        age_days: (2.5, 0.3),
        tweets: (2.0, 0.3),
        verified: 0.0,
        description: 0.1,
    },
    Archetype {
        followers: (6.0, 0.3),
        friends: (2.5, 0.3),
        age_days: (7.0, 0.2),
        tweets: (7.5, 0.3),
        verified: 0.3,
        description: 0.9,
    },
    Archetype {
        followers: (3.0, 0.3),
        friends: (3.5, 0.3),
        age_days: (5.0, 0.3),
        tweets: (4.0, 0.3),
        verified: 0.0,
        description: 0.4,
    },
];

fn lognormal<R: Rng>(rng: &mut R, (mu, sd): (f64, f64)) -> f64 {
    let n = Normal::new(mu, sd).expect("finite archetype parameters");
    n.sample(rng).exp()
}

fn sample_profile<R: Rng>(rng: &mut R, a: &Archetype) -> UserProfile {
    UserProfile {
        follower_count: lognormal(rng, a.followers).round() as i64,
        friend_count: lognormal(rng, a.friends).round() as i64,
        account_age_days: lognormal(rng, a.age_days).max(1.0),
        tweet_count: lognormal(rng, a.tweets).round() as i64,
        verified: u8::from(rng.gen_bool(a.verified)),
        has_description: u8::from(rng.gen_bool(a.description)),
    }
}

fn text<R: Rng>(rng: &mut R, cfg: &SynthConfig, keywords: &[String], bg: &[String], signal: f64) -> String {
    let len = rng.gen_range(cfg.tokens_per_text.0..=cfg.tokens_per_text.1);
    let words: Vec<&str> = (0..len)
        .map(|_| {
            if rng.gen_bool(signal) {
                keywords[rng.gen_range(0..keywords.len())].as_str()
            } else {
                bg[rng.gen_range(0..bg.len())].as_str()
            }
        })
        .collect();
    words.join(" ")
}

/// Builds a dataset plus the parameters that generated it. Deterministic in
/// `(config, seed)`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<(Dataset, SynthTruth), DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let keywords: Vec<Vec<String>> = Label::ALL
        .iter()
        .map(|l| {
            (0..config.keywords_per_class)
                .map(|k| format!("{}kw{k}", l.as_str().to_lowercase()))
                .collect()
        })
        .collect();
    let background_words: Vec<String> = (0..config.background_words).map(|k| format!("w{k}")).collect();

    let mut users = BTreeMap::new();
    let mut everyone = Vec::new();
    for i in 0..config.n_background_users {
        let id = format!("u{i:04}");
        users.insert(id.clone(), sample_profile(&mut rng, &BACKGROUND));
        everyone.push(id);
    }
    let mut pools: Vec<Vec<String>> = vec![Vec::new(); 4];
    let mut pool_of = BTreeMap::new();
    for label in Label::ALL {
        if !config.coordinated_classes.contains(&label) {
            continue;
        }
        for i in 0..config.pool_size {
            let id = format!("p{}{i:03}", label.as_str());
            users.insert(id.clone(), sample_profile(&mut rng, &POOL_ARCHETYPES[label.index()]));
            pool_of.insert(id.clone(), label);
            pools[label.index()].push(id.clone());
            everyone.push(id);
        }
    }

    let mut labels: Vec<Label> = config
        .class_counts()
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(Label::ALL[c], n))
        .collect();
    labels.shuffle(&mut rng);

    let delay = Exp::new(1.0 / config.mean_delay_min).expect("positive mean delay");
    let mut instances = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        let tweet_id = format!("t{i:04}");
        let kw = &keywords[label.index()];
        let source_text = text(&mut rng, config, kw, &background_words, config.source_signal);

        let n_comments = rng.gen_range(config.comments_per_instance.0..=config.comments_per_instance.1);
        let mut comments: Vec<Comment> = Vec::with_capacity(n_comments);
        for k in 0..n_comments {
            let parent = rng.gen_range(0..=k);
            let (parent_id, parent_delay) = if parent == 0 {
                (tweet_id.clone(), 0.0)
            } else {
                let p = &comments[parent - 1];
                (p.id.clone(), p.delay_min)
            };
            comments.push(Comment {
                id: format!("{tweet_id}-c{k}"),
                parent: parent_id,
                text: text(&mut rng, config, kw, &background_words, config.comment_signal),
                delay_min: parent_delay + delay.sample(&mut rng),
            });
        }

        let n_users = rng.gen_range(config.users_per_instance.0..=config.users_per_instance.1);
        let pool = &pools[label.index()];
        let mut actions = Vec::with_capacity(n_users);
        for k in 0..n_users {
            let id = if !pool.is_empty() && rng.gen_bool(config.coordination) {
                pool[rng.gen_range(0..pool.len())].clone()
            } else {
                everyone[rng.gen_range(0..everyone.len())].clone()
            };
            let (action, comment) = match k {
                0 => ("post", None),
                k if k <= n_comments => ("comment", Some(comments[k - 1].id.clone())),
                _ => ("retweet", None),
            };
            actions.push(UserAction {
                id,
                action: action.to_string(),
                comment,
            });
        }

        instances.push(Instance {
            tweet_id,
            label,
            source_text,
            comments,
            users: actions,
        });
    }

    let dataset = Dataset {
        instances,
        users,
        provenance: Provenance::Synthetic,
    };
    let truth = SynthTruth {
        config: config.clone(),
        seed,
        keywords,
        background_words,
        pool_of,
    };
    Ok((dataset, truth))
}
