//! Rollout collection, episode-level splitting, and the `.rjsonl` dataset
//! file format.
//!
//! A dataset file is a JSON manifest line, one JSON object per transition,
//! and a trailing checksum line holding the CRC-64 (XZ polynomial) of all
//! preceding bytes in hex. The format is line-oriented so other tooling can
//! stream it.

use std::fs;
use std::io::Write;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bouncing_balls::{BallWorld, BallWorldConfig, Policy};
use crate::rng::{fnv1a, fnv1a_extend_f64, Rng};
use crate::types::{ActionBounds, ActionVec, CoreError, SchemaId, StateVec, Transition};

pub const FORMAT_VERSION: u32 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Error, Debug)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt dataset file: {0}")]
    ChecksumMismatch(String),
    #[error("unsupported dataset format version {found} (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("malformed dataset file: {0}")]
    Parse(String),
    #[error("manifest does not match file contents: {0}")]
    ManifestMismatch(String),
    #[error("cannot split {episodes} episodes into {required} non-empty parts")]
    InsufficientEpisodes { episodes: usize, required: usize },
    #[error("invalid split fractions {0:?}: must be non-negative and sum to 1")]
    BadFractions([f64; 3]),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Env(#[from] crate::bouncing_balls::BallWorldError),
    #[error("collect requires n_steps >= 1")]
    EmptyCollect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaInfo {
    pub name: String,
    pub id: SchemaId,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_bounds: ActionBounds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub env: String,
    /// Environment configuration, embedded so a dataset file is
    /// self-contained.
    pub env_config: serde_json::Value,
    pub env_config_hash: String,
    pub policy: String,
    pub seed: u64,
    pub n_transitions: usize,
    pub n_episodes: usize,
    pub schema: SchemaInfo,
}

/// Ordered transitions with episode structure and a provenance manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionDataset {
    pub manifest: DatasetManifest,
    pub transitions: Vec<Transition>,
}

#[derive(Serialize, Deserialize)]
struct TransitionRecord {
    s: Vec<f64>,
    a: Vec<f64>,
    s_next: Vec<f64>,
    r_gt: f64,
    episode: u64,
    t: u64,
    done: bool,
}

impl TransitionDataset {
    /// Wrap transitions that were produced outside `collect` (oracle
    /// sampling, tests). The manifest records the given env name and a
    /// schema inferred from the first transition.
    pub fn from_transitions(env: &str, transitions: Vec<Transition>) -> Self {
        let (schema, n_episodes) = match transitions.first() {
            Some(t) => (
                SchemaInfo {
                    name: env.to_string(),
                    id: t.s.schema_id(),
                    state_dim: t.s.dim(),
                    action_dim: t.a.dim(),
                    action_bounds: t.a.bounds().to_vec(),
                },
                count_episodes(&transitions),
            ),
            None => (
                SchemaInfo {
                    name: env.to_string(),
                    id: SchemaId::from_name(env),
                    state_dim: 0,
                    action_dim: 0,
                    action_bounds: vec![],
                },
                0,
            ),
        };
        let manifest = DatasetManifest {
            format_version: FORMAT_VERSION,
            env: env.to_string(),
            env_config: serde_json::Value::Null,
            env_config_hash: String::new(),
            policy: "external".to_string(),
            seed: 0,
            n_transitions: transitions.len(),
            n_episodes,
            schema,
        };
        Self {
            manifest,
            transitions,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Stable content hash over all transitions (used in training manifests).
    pub fn content_hash(&self) -> u64 {
        let mut h = fnv1a(self.manifest.env.as_bytes());
        for tr in &self.transitions {
            h = fnv1a_extend_f64(h, tr.s.values());
            h = fnv1a_extend_f64(h, tr.a.values());
            h = fnv1a_extend_f64(h, tr.s_next.values());
            h = fnv1a_extend_f64(h, &[tr.r_gt, tr.episode as f64, tr.t as f64]);
        }
        h
    }

    pub fn episode_ids(&self) -> Vec<u64> {
        let mut ids = Vec::new();
        for tr in &self.transitions {
            if ids.last() != Some(&tr.episode) {
                ids.push(tr.episode);
            }
        }
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn count_episodes(transitions: &[Transition]) -> usize {
    let mut ids: Vec<u64> = transitions.iter().map(|t| t.episode).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

/// Roll out `n_steps` seeded environment steps under a policy, recording the
/// ground-truth reward at every step. Episodes have the configured horizon;
/// the last may be truncated.
pub fn collect(
    config: &BallWorldConfig,
    policy: Policy,
    n_steps: usize,
    seed: u64,
) -> Result<TransitionDataset, DatasetError> {
    if n_steps == 0 {
        return Err(DatasetError::EmptyCollect);
    }
    config.validate()?;
    let root = Rng::new(seed);
    let mut transitions = Vec::with_capacity(n_steps);
    let mut episode: u64 = 0;
    let mut remaining = n_steps;
    while remaining > 0 {
        let mut ep_rng = root.child_idx("episode", episode);
        let mut world = BallWorld::new(config.clone(), &mut ep_rng);
        let steps = remaining.min(config.horizon);
        for t in 0..steps {
            let s = world.observed_state();
            let action = policy.act(config, world.state(), &mut ep_rng);
            let outcome = world.step(&action, &mut ep_rng)?;
            transitions.push(Transition::new(
                s,
                action,
                outcome.s_next,
                episode,
                t as u64,
                outcome.reward_gt,
                false,
            )?);
        }
        remaining -= steps;
        episode += 1;
    }

    let env_config = serde_json::to_value(config).expect("config serializes");
    let config_json = serde_json::to_string(&env_config).expect("config serializes");
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        env: "bouncing_balls".to_string(),
        env_config_hash: format!("{:016x}", fnv1a(config_json.as_bytes())),
        env_config,
        policy: policy.name().to_string(),
        seed,
        n_transitions: transitions.len(),
        n_episodes: episode as usize,
        schema: SchemaInfo {
            name: config.schema_name(),
            id: config.schema_id(),
            state_dim: config.state_dim(),
            action_dim: 2,
            action_bounds: config.action_bounds(),
        },
    };
    Ok(TransitionDataset {
        manifest,
        transitions,
    })
}

/// Serialize to the `.rjsonl` format. Byte-stable: the same dataset always
/// produces the same file.
pub fn save(dataset: &TransitionDataset, path: &Path) -> Result<(), DatasetError> {
    let mut body = String::new();
    body.push_str(&serde_json::to_string(&dataset.manifest).expect("manifest serializes"));
    body.push('\n');
    for tr in &dataset.transitions {
        let record = TransitionRecord {
            s: tr.s.values().to_vec(),
            a: tr.a.values().to_vec(),
            s_next: tr.s_next.values().to_vec(),
            r_gt: tr.r_gt,
            episode: tr.episode,
            t: tr.t,
            done: tr.done,
        };
        body.push_str(&serde_json::to_string(&record).expect("record serializes"));
        body.push('\n');
    }
    let checksum = CRC64.checksum(body.as_bytes());
    let mut file = fs::File::create(path)?;
    file.write_all(body.as_bytes())?;
    writeln!(file, "{checksum:016x}")?;
    Ok(())
}

/// Load and verify a `.rjsonl` file. Fails on checksum mismatch, unsupported
/// format version, or manifest/content disagreement.
pub fn load(path: &Path) -> Result<TransitionDataset, DatasetError> {
    let raw = fs::read_to_string(path)?;
    let trimmed = raw.strip_suffix('\n').unwrap_or(&raw);
    let (body_end, checksum_line) = match trimmed.rfind('\n') {
        Some(pos) => (pos + 1, &trimmed[pos + 1..]),
        None => return Err(DatasetError::ChecksumMismatch("missing checksum line".into())),
    };
    let body = &raw[..body_end];
    let expected = u64::from_str_radix(checksum_line.trim(), 16)
        .map_err(|_| DatasetError::ChecksumMismatch("unparseable checksum line".into()))?;
    let actual = CRC64.checksum(body.as_bytes());
    if actual != expected {
        return Err(DatasetError::ChecksumMismatch(format!(
            "expected {expected:016x}, computed {actual:016x}"
        )));
    }

    let mut lines = body.lines();
    let manifest_line = lines
        .next()
        .ok_or_else(|| DatasetError::Parse("empty file".into()))?;
    let manifest: DatasetManifest = serde_json::from_str(manifest_line)
        .map_err(|e| DatasetError::Parse(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DatasetError::SchemaVersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }

    let schema = &manifest.schema;
    let mut transitions = Vec::with_capacity(manifest.n_transitions);
    for (i, line) in lines.enumerate() {
        let record: TransitionRecord = serde_json::from_str(line)
            .map_err(|e| DatasetError::Parse(format!("record {i}: {e}")))?;
        let s = StateVec::new(record.s, schema.id)?;
        let s_next = StateVec::new(record.s_next, schema.id)?;
        let a = ActionVec::new(record.a, schema.action_bounds.clone())?;
        transitions.push(Transition::new(
            s,
            a,
            s_next,
            record.episode,
            record.t,
            record.r_gt,
            record.done,
        )?);
    }
    if transitions.len() != manifest.n_transitions {
        return Err(DatasetError::ManifestMismatch(format!(
            "manifest lists {} transitions, file holds {}",
            manifest.n_transitions,
            transitions.len()
        )));
    }
    let episodes = count_episodes(&transitions);
    if episodes != manifest.n_episodes {
        return Err(DatasetError::ManifestMismatch(format!(
            "manifest lists {} episodes, file holds {}",
            manifest.n_episodes, episodes
        )));
    }
    Ok(TransitionDataset {
        manifest,
        transitions,
    })
}

/// Episode-level three-way partition (train, validation, evaluation).
///
/// Whole episodes are assigned to one part so that segment-based consumers
/// never see segments straddling a split. Episode counts use largest-remainder
/// rounding on the shuffled episode list.
pub fn split(
    dataset: &TransitionDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(TransitionDataset, TransitionDataset, TransitionDataset), DatasetError> {
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadFractions(fr));
    }
    let mut episodes = dataset.episode_ids();
    let n_ep = episodes.len();
    let required = fr.iter().filter(|f| **f > 0.0).count();
    if n_ep < required {
        return Err(DatasetError::InsufficientEpisodes {
            episodes: n_ep,
            required,
        });
    }
    Rng::new(seed).child("split").shuffle(&mut episodes);

    // Largest-remainder apportionment of episodes to the three parts.
    let ideal: Vec<f64> = fr.iter().map(|f| f * n_ep as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut leftover = n_ep - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    // A positive fraction must receive at least one episode.
    for i in 0..3 {
        if fr[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3)
                .filter(|&j| counts[j] > 1)
                .max_by(|&a, &b| counts[a].cmp(&counts[b]))
                .ok_or(DatasetError::InsufficientEpisodes {
                    episodes: n_ep,
                    required,
                })?;
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }

    let assignment = |ep: u64| -> usize {
        let pos = episodes.iter().position(|&e| e == ep).expect("known episode");
        if pos < counts[0] {
            0
        } else if pos < counts[0] + counts[1] {
            1
        } else {
            2
        }
    };
    let mut parts: Vec<Vec<Transition>> = vec![Vec::new(), Vec::new(), Vec::new()];
    for tr in &dataset.transitions {
        parts[assignment(tr.episode)].push(tr.clone());
    }
    let mut out = parts.into_iter().enumerate().map(|(i, transitions)| {
        let mut manifest = dataset.manifest.clone();
        manifest.policy = format!("{}/{}", dataset.manifest.policy, ["train", "val", "eval"][i]);
        manifest.n_transitions = transitions.len();
        manifest.n_episodes = count_episodes(&transitions);
        TransitionDataset {
            manifest,
            transitions,
        }
    });
    Ok((
        out.next().unwrap(),
        out.next().unwrap(),
        out.next().unwrap(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bouncing_balls::BallWorldConfig;

    fn small_config() -> BallWorldConfig {
        BallWorldConfig {
            horizon: 25,
            ..BallWorldConfig::default()
        }
    }

    #[test]
    fn collect_one_step() {
        let ds = collect(&small_config(), Policy::Uniform, 1, 3).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.transitions[0].t, 0);
        assert_eq!(ds.manifest.n_episodes, 1);
    }

    #[test]
    fn collect_rejects_zero_steps() {
        assert!(matches!(
            collect(&small_config(), Policy::Uniform, 0, 3),
            Err(DatasetError::EmptyCollect)
        ));
    }

    #[test]
    fn collect_is_deterministic_and_roundtrips() {
        let cfg = small_config();
        let a = collect(&cfg, Policy::Uniform, 60, 7).unwrap();
        let b = collect(&cfg, Policy::Uniform, 60, 7).unwrap();
        assert_eq!(a, b);

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.rjsonl");
        let p2 = dir.path().join("b.rjsonl");
        save(&a, &p1).unwrap();
        save(&b, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());

        let loaded = load(&p1).unwrap();
        assert_eq!(loaded, a);
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let cfg = small_config();
        let ds = collect(&cfg, Policy::Uniform, 30, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.rjsonl");
        save(&ds, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 40]).unwrap();
        assert!(matches!(
            load(&path),
            Err(DatasetError::ChecksumMismatch(_))
        ));
    }

    #[test]
    fn unknown_format_version_rejected() {
        let cfg = small_config();
        let ds = collect(&cfg, Policy::Uniform, 5, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.rjsonl");
        save(&ds, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":99", 1);
        // Re-checksum so version detection (not corruption) is what trips.
        let body_end = bumped.rfind('\n').unwrap();
        let body = &bumped[..body_end - 16];
        let crc = CRC64.checksum(body.as_bytes());
        fs::write(&path, format!("{body}{crc:016x}\n")).unwrap();
        assert!(matches!(
            load(&path),
            Err(DatasetError::SchemaVersionMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn split_partitions_episodes() {
        let cfg = small_config();
        let ds = collect(&cfg, Policy::Uniform, 250, 11).unwrap(); // 10 episodes
        assert_eq!(ds.manifest.n_episodes, 10);
        let (train, val, eval) = split(&ds, (0.8, 0.1, 0.1), 5).unwrap();
        assert_eq!(train.manifest.n_episodes, 8);
        assert_eq!(val.manifest.n_episodes, 1);
        assert_eq!(eval.manifest.n_episodes, 1);
        let total = train.len() + val.len() + eval.len();
        assert_eq!(total, ds.len());

        // Union of the splits is exactly the original multiset.
        let mut all: Vec<_> = train
            .transitions
            .iter()
            .chain(&val.transitions)
            .chain(&eval.transitions)
            .map(|t| (t.episode, t.t))
            .collect();
        all.sort_unstable();
        let mut orig: Vec<_> = ds.transitions.iter().map(|t| (t.episode, t.t)).collect();
        orig.sort_unstable();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_all_train() {
        let cfg = small_config();
        let ds = collect(&cfg, Policy::Uniform, 100, 11).unwrap();
        let (train, val, eval) = split(&ds, (1.0, 0.0, 0.0), 5).unwrap();
        assert_eq!(train.len(), ds.len());
        assert!(val.is_empty());
        assert!(eval.is_empty());
    }

    #[test]
    fn split_insufficient_episodes() {
        let cfg = small_config();
        let ds = collect(&cfg, Policy::Uniform, 20, 11).unwrap(); // one episode
        assert!(matches!(
            split(&ds, (0.8, 0.1, 0.1), 5),
            Err(DatasetError::InsufficientEpisodes { .. })
        ));
    }
}
