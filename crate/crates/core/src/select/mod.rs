//! Microphone subset selection from envelope variance and C50 rankings.
//!
//! Channels are ranked twice (by EV and by C50, best first). With
//! `K = ceil(k_pct * M)` the top-K sets `I_EV` and `I_C50` are intersected and
//! the selection follows a four-way rule:
//!
//! | condition                                  | branch       | selected     |
//! |--------------------------------------------|--------------|--------------|
//! | `M < min_mics`                             | `all`        | every channel|
//! | `|I| >= min_mics`                          | `intersection` | `I`        |
//! | `|I| < min_mics`, `|I_EV| >= min_mics`     | `ev_set`     | `I_EV`       |
//! | otherwise                                  | `top15_ev`   | best `min_mics` by EV |
//!
//! Ties in either ranking are broken by channel id (lexicographic, ascending).

mod c50;
mod ev;

pub use c50::{c50_from_rir, c50_from_samples, onset_index, EARLY_WINDOW_S};
pub use ev::{envelope_variance, envelope_variance_samples, EvConfig};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("degenerate signal (rms {rms:.3e}); refusing to score a silent channel")]
    DegenerateSignal { rms: f64 },
    #[error("signal lasts {duration_s:.2} s, at least {min_s} s required")]
    TooShort { duration_s: f64, min_s: f64 },
    #[error("impulse response is all zeros")]
    SilentRir,
    #[error("duplicate channel id `{0}`")]
    DuplicateChannel(String),
    #[error("no channels to select from")]
    Empty,
    #[error("invalid selection policy: {0}")]
    InvalidPolicy(String),
    #[error("channel `{0}` has an invalid score")]
    InvalidScore(String),
    #[error("C50 file: {0}")]
    ScoreFile(String),
}

/// Serde adapter for decibel values that may be `+inf`.
pub mod db_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "+inf" | "Infinity") => Ok(f64::INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("not a dB value: {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScore {
    pub channel_id: String,
    pub ev: f64,
    /// `+inf` for a channel without late reverberation.
    #[serde(with = "db_serde")]
    pub c50_db: f64,
}

impl ChannelScore {
    fn validate(&self) -> Result<(), SelectError> {
        let ev_ok = self.ev.is_finite() && self.ev >= 0.0;
        let c50_ok = self.c50_db.is_finite() || self.c50_db == f64::INFINITY;
        if ev_ok && c50_ok {
            Ok(())
        } else {
            Err(SelectError::InvalidScore(self.channel_id.clone()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionPolicy {
    pub k_pct: f64,
    pub min_mics: usize,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            k_pct: 0.65,
            min_mics: 15,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<(), SelectError> {
        if !(self.k_pct > 0.0 && self.k_pct <= 1.0) {
            return Err(SelectError::InvalidPolicy(format!(
                "k_pct {} outside (0, 1]",
                self.k_pct
            )));
        }
        if self.min_mics == 0 {
            return Err(SelectError::InvalidPolicy("min_mics must be >= 1".into()));
        }
        Ok(())
    }

    /// Size of each top-K set, `ceil(k_pct * M)`. The small epsilon keeps
    /// products such as `0.65 * 20` from rounding up past the integer.
    pub fn top_k(&self, m: usize) -> usize {
        ((self.k_pct * m as f64 - 1e-9).ceil() as usize).clamp(1, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleBranch {
    Intersection,
    EvSet,
    Top15Ev,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: BTreeSet<String>,
    pub rule_branch: RuleBranch,
    pub i_ev: BTreeSet<String>,
    pub i_c50: BTreeSet<String>,
    pub i_cap: BTreeSet<String>,
    /// All channel ids ranked by EV, best first.
    pub ev_ranking: Vec<String>,
    pub policy: SelectionPolicy,
}

fn rank_by(scores: &[ChannelScore], key: impl Fn(&ChannelScore) -> f64) -> Vec<String> {
    let mut order: Vec<&ChannelScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.channel_id.cmp(&b.channel_id))
    });
    order.into_iter().map(|s| s.channel_id.clone()).collect()
}

pub fn select_subset(
    scores: &[ChannelScore],
    policy: &SelectionPolicy,
) -> Result<SelectionResult, SelectError> {
    policy.validate()?;
    if scores.is_empty() {
        return Err(SelectError::Empty);
    }
    let mut seen = BTreeSet::new();
    for s in scores {
        s.validate()?;
        if !seen.insert(s.channel_id.as_str()) {
            return Err(SelectError::DuplicateChannel(s.channel_id.clone()));
        }
    }
    let m = scores.len();
    let k = policy.top_k(m);
    let ev_ranking = rank_by(scores, |s| s.ev);
    let c50_ranking = rank_by(scores, |s| s.c50_db);
    let i_ev: BTreeSet<String> = ev_ranking[..k].iter().cloned().collect();
    let i_c50: BTreeSet<String> = c50_ranking[..k].iter().cloned().collect();
    let i_cap: BTreeSet<String> = i_ev.intersection(&i_c50).cloned().collect();

    let (rule_branch, selected) = apply_rule(m, &i_ev, &i_cap, &ev_ranking, policy);
    Ok(SelectionResult {
        selected,
        rule_branch,
        i_ev,
        i_c50,
        i_cap,
        ev_ranking,
        policy: *policy,
    })
}

fn apply_rule(
    m: usize,
    i_ev: &BTreeSet<String>,
    i_cap: &BTreeSet<String>,
    ev_ranking: &[String],
    policy: &SelectionPolicy,
) -> (RuleBranch, BTreeSet<String>) {
    let floor = policy.min_mics;
    if m < floor {
        (RuleBranch::All, ev_ranking.iter().cloned().collect())
    } else if i_cap.len() >= floor {
        (RuleBranch::Intersection, i_cap.clone())
    } else if i_ev.len() >= floor {
        (RuleBranch::EvSet, i_ev.clone())
    } else {
        (
            RuleBranch::Top15Ev,
            ev_ranking[..floor].iter().cloned().collect(),
        )
    }
}

impl SelectionResult {
    /// Re-derives branch and selection from the audit trail.
    pub fn replay(&self) -> (RuleBranch, BTreeSet<String>) {
        apply_rule(
            self.ev_ranking.len(),
            &self.i_ev,
            &self.i_cap,
            &self.ev_ranking,
            &self.policy,
        )
    }
}

/// Reads `{channel_id: c50_db, ...}`; `"inf"` is accepted for `+inf`.
pub fn read_c50_scores(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>, SelectError> {
    #[derive(Deserialize)]
    struct Db(#[serde(with = "db_serde")] f64);
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| SelectError::ScoreFile(format!("{}: {e}", path.as_ref().display())))?;
    let raw: BTreeMap<String, Db> =
        serde_json::from_str(&text).map_err(|e| SelectError::ScoreFile(e.to_string()))?;
    Ok(raw.into_iter().map(|(k, Db(v))| (k, v)).collect())
}

pub fn write_c50_scores(
    path: impl AsRef<Path>,
    scores: &BTreeMap<String, f64>,
) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Db(#[serde(with = "db_serde")] f64);
    let map: BTreeMap<&String, Db> = scores.iter().map(|(k, v)| (k, Db(*v))).collect();
    std::fs::write(path, serde_json::to_string_pretty(&map)? + "\n")
}
