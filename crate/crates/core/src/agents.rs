//! Reference agents: uniform random play and ε-greedy tabular Q-learning
//! over pooled, quantized observations.
//!
//! The Q-learning update is
//! `θ(s,a) += α (R + γ max_a' θ'(s',a') − θ(s,a))`, where `θ'` is a copy of
//! `θ` refreshed every `target_sync_period` updates and the bootstrap term is
//! dropped on terminal transitions. For a table the gradient of `Q(s,a;θ)`
//! with respect to `θ` is the indicator of `(s,a)`, so the rule touches a
//! single entry.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wrappers::{GrayFrame84, GRAY_SIZE};

/// Pooling grid and quantization of a [`GrayFrame84`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub grid: u8,
    pub levels: u16,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec { grid: 8, levels: 8 }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 || self.grid as usize > GRAY_SIZE {
            return Err(Error::Config(format!(
                "feature grid must be in 1..={GRAY_SIZE}, got {}",
                self.grid
            )));
        }
        if !(1..=256).contains(&self.levels) {
            return Err(Error::Config(format!(
                "feature levels must be in 1..=256, got {}",
                self.levels
            )));
        }
        Ok(())
    }

    pub fn key_len(&self) -> usize {
        self.grid as usize * self.grid as usize
    }
}

/// Quantized cell means in row-major order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureKey(Box<[u8]>);

impl FeatureKey {
    pub fn new(cells: Vec<u8>) -> Self {
        FeatureKey(cells.into_boxed_slice())
    }

    pub fn cells(&self) -> &[u8] {
        &self.0
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        hex::decode(s).ok().map(FeatureKey::new)
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(&self.0))
    }
}

impl fmt::Debug for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureKey({self})")
    }
}

/// Mean-pools `obs` over a `grid`×`grid` partition (cell edges at
/// `i * 84 / grid`) and maps each mean `m` to `floor(m * levels / 256)`.
pub fn featurize(obs: &GrayFrame84, spec: &FeatureSpec) -> FeatureKey {
    let g = spec.grid as usize;
    let edges: Vec<usize> = (0..=g).map(|i| i * GRAY_SIZE / g).collect();
    let mut sums = vec![0u32; g * g];
    let px = obs.pixels();
    for cy in 0..g {
        for y in edges[cy]..edges[cy + 1] {
            let row = &px[y * GRAY_SIZE..(y + 1) * GRAY_SIZE];
            for cx in 0..g {
                sums[cy * g + cx] += row[edges[cx]..edges[cx + 1]]
                    .iter()
                    .map(|&v| v as u32)
                    .sum::<u32>();
            }
        }
    }
    let cells = sums
        .iter()
        .enumerate()
        .map(|(i, &sum)| {
            let (cx, cy) = (i % g, i / g);
            let count = ((edges[cx + 1] - edges[cx]) * (edges[cy + 1] - edges[cy])) as u64;
            (sum as u64 * spec.levels as u64 / (count * 256)) as u8
        })
        .collect();
    FeatureKey::new(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the training budget over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub epsilon_test: f64,
    pub target_sync_period: u64,
    pub features: FeatureSpec,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha: 0.1,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_fraction: 0.1,
            epsilon_test: 0.05,
            target_sync_period: 1000,
            features: FeatureSpec::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        prob("epsilon_start", self.epsilon_start)?;
        prob("epsilon_end", self.epsilon_end)?;
        prob("epsilon_test", self.epsilon_test)?;
        prob("epsilon_decay_fraction", self.epsilon_decay_fraction)?;
        if self.target_sync_period == 0 {
            return Err(Error::Config(
                "target_sync_period must be at least 1".into(),
            ));
        }
        self.features.validate()
    }

    /// Training ε after `step` of `total` actions.
    pub fn epsilon_at(&self, step: u64, total: u64) -> f64 {
        let span = self.epsilon_decay_fraction * total as f64;
        if span <= 0.0 || step as f64 >= span {
            return self.epsilon_end;
        }
        let t = step as f64 / span;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: FeatureKey,
    pub action: usize,
    pub reward: f64,
    pub next_state: FeatureKey,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
struct Entry {
    values: Vec<f64>,
    /// Values as of the last sync, valid when `snapshot_gen` is current.
    snapshot: Vec<f64>,
    snapshot_gen: u64,
}

/// The table θ together with its delayed copy θ'.
///
/// θ' is kept copy-on-write: a sync bumps a generation counter, and an
/// entry saves its pre-sync values the first time it changes afterwards.
#[derive(Debug, Clone)]
pub struct QFunction {
    num_actions: usize,
    entries: HashMap<FeatureKey, Entry>,
    generation: u64,
    updates: u64,
}

impl QFunction {
    pub fn new(num_actions: usize) -> Self {
        assert!(num_actions > 0, "a Q-function needs at least one action");
        QFunction {
            num_actions,
            entries: HashMap::new(),
            generation: 0,
            updates: 0,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn num_states(&self) -> usize {
        self.entries.len()
    }

    /// `Q(s, ·; θ)`; unseen states are all zero.
    pub fn values(&self, state: &FeatureKey) -> Vec<f64> {
        self.entries
            .get(state)
            .map_or_else(|| vec![0.0; self.num_actions], |e| e.values.clone())
    }

    pub fn value(&self, state: &FeatureKey, action: usize) -> f64 {
        self.entries.get(state).map_or(0.0, |e| e.values[action])
    }

    /// `Q(s, a; θ')`.
    pub fn target_value(&self, state: &FeatureKey, action: usize) -> f64 {
        match self.entries.get(state) {
            None => 0.0,
            Some(e) if e.snapshot_gen == self.generation => e.snapshot[action],
            Some(e) => e.values[action],
        }
    }

    pub fn max_value(&self, state: &FeatureKey) -> f64 {
        self.entries.get(state).map_or(0.0, |e| max(&e.values))
    }

    pub fn max_target_value(&self, state: &FeatureKey) -> f64 {
        (0..self.num_actions)
            .map(|a| self.target_value(state, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action with ties going to the lowest index.
    pub fn greedy(&self, state: &FeatureKey) -> usize {
        match self.entries.get(state) {
            None => 0,
            Some(e) => argmax(&e.values),
        }
    }

    /// Overwrites `θ(s,a)` without counting as an update.
    pub fn set(&mut self, state: &FeatureKey, action: usize, value: f64) {
        let generation = self.generation;
        let n = self.num_actions;
        let e = self.entries.entry(state.clone()).or_insert_with(|| Entry {
            values: vec![0.0; n],
            snapshot: Vec::new(),
            snapshot_gen: u64::MAX,
        });
        if e.snapshot_gen != generation {
            e.snapshot.clone_from(&e.values);
            e.snapshot_gen = generation;
        }
        e.values[action] = value;
    }

    /// θ' ← θ.
    pub fn sync_target(&mut self) {
        self.generation += 1;
    }

    /// Iterates over `(state, θ(state, ·))` in unspecified order.
    pub fn iter(&self) -> impl Iterator<Item = (&FeatureKey, &[f64])> {
        self.entries.iter().map(|(k, e)| (k, e.values.as_slice()))
    }
}

fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One application of the update rule, then a target sync if due.
pub fn q_update(q: &mut QFunction, t: &Transition, hp: &HyperParams) -> Result<()> {
    if !t.reward.is_finite() {
        return Err(Error::Numeric(format!("non-finite reward {}", t.reward)));
    }
    if t.action >= q.num_actions {
        return Err(Error::usage(format!(
            "action {} out of range for {} actions",
            t.action, q.num_actions
        )));
    }
    let bootstrap = if t.terminal {
        0.0
    } else {
        hp.gamma * q.max_target_value(&t.next_state)
    };
    let current = q.value(&t.state, t.action);
    let updated = current + hp.alpha * (t.reward + bootstrap - current);
    if !updated.is_finite() {
        return Err(Error::Numeric(format!("update diverged to {updated}")));
    }
    q.set(&t.state, t.action, updated);
    q.updates += 1;
    if q.updates.is_multiple_of(hp.target_sync_period) {
        q.sync_target();
    }
    Ok(())
}

/// ε-greedy choice over `num_actions` actions.
pub fn select_action<R: Rng + ?Sized>(
    q: &QFunction,
    state: &FeatureKey,
    num_actions: usize,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..num_actions)
    } else {
        q.greedy(state).min(num_actions - 1)
    }
}

pub fn random_action<R: Rng + ?Sized>(num_actions: usize, rng: &mut R) -> usize {
    rng.gen_range(0..num_actions)
}

/// A Q-learning agent: a [`QFunction`], its hyperparameters and an
/// exploration stream.
#[derive(Debug, Clone)]
pub struct QAgent {
    pub q: QFunction,
    pub hp: HyperParams,
    rng: ChaCha8Rng,
}

impl QAgent {
    pub fn new(num_actions: usize, hp: HyperParams, seed: u64) -> Result<Self> {
        hp.validate()?;
        Ok(QAgent {
            q: QFunction::new(num_actions),
            hp,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn from_parts(q: QFunction, hp: HyperParams, seed: u64) -> Result<Self> {
        hp.validate()?;
        Ok(QAgent {
            q,
            hp,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Restarts the exploration stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn features(&self, obs: &GrayFrame84) -> FeatureKey {
        featurize(obs, &self.hp.features)
    }

    pub fn act(&mut self, state: &FeatureKey, epsilon: f64) -> usize {
        select_action(&self.q, state, self.q.num_actions(), epsilon, &mut self.rng)
    }

    pub fn learn(&mut self, t: &Transition) -> Result<()> {
        q_update(&mut self.q, t, &self.hp)
    }
}

const MODEL_HEADER: &str = "# rle q-function v1";

/// Writes `θ` as text: a few `#` header lines followed by one
/// `feature-key action value` line per stored entry, sorted by key and
/// action. Keys are hex-encoded cell levels. Values use the shortest decimal
/// form that parses back to the same `f64`.
pub fn write_model<W: Write>(q: &QFunction, features: &FeatureSpec, mut out: W) -> Result<()> {
    writeln!(out, "{MODEL_HEADER}")?;
    writeln!(out, "# actions {}", q.num_actions)?;
    writeln!(out, "# grid {}", features.grid)?;
    writeln!(out, "# levels {}", features.levels)?;
    let mut keys: Vec<_> = q.entries.keys().collect();
    keys.sort();
    for key in keys {
        for (a, v) in q.entries[key].values.iter().enumerate() {
            writeln!(out, "{key} {a} {v:?}")?;
        }
    }
    Ok(())
}

pub fn model_to_string(q: &QFunction, features: &FeatureSpec) -> String {
    let mut buf = Vec::new();
    write_model(q, features, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("model text is ASCII")
}

/// Parses the format of [`write_model`]. θ' starts equal to θ.
pub fn parse_model(text: &str) -> Result<(QFunction, FeatureSpec)> {
    let err = |line: usize, reason: String| Error::ModelParse { line, reason };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, MODEL_HEADER)) => {}
        _ => return Err(err(1, format!("expected `{MODEL_HEADER}`"))),
    }
    let mut header = |name: &str| -> Result<u64> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| err(0, format!("missing `# {name}` header")))?;
        line.strip_prefix("# ")
            .and_then(|rest| rest.strip_prefix(name))
            .and_then(|rest| rest.strip_prefix(' '))
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or_else(|| err(n, format!("expected `# {name} <integer>`")))
    };
    let actions = header("actions")?;
    let grid = header("grid")?;
    let levels = header("levels")?;
    if actions == 0 || actions > 4096 {
        return Err(err(2, format!("action count {actions} out of range")));
    }
    let features = FeatureSpec {
        grid: u8::try_from(grid).map_err(|_| err(3, format!("grid {grid} out of range")))?,
        levels: u16::try_from(levels)
            .map_err(|_| err(4, format!("levels {levels} out of range")))?,
    };
    features.validate().map_err(|e| err(3, e.to_string()))?;

    let mut q = QFunction::new(actions as usize);
    let mut seen = std::collections::HashSet::new();
    for (n, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        let [key, action, value] = fields[..] else {
            return Err(err(n, "expected `feature-key action value`".into()));
        };
        let key =
            FeatureKey::from_hex(key).ok_or_else(|| err(n, "feature key is not hex".into()))?;
        if key.cells().len() != features.key_len()
            || key.cells().iter().any(|&c| c as u16 >= features.levels)
        {
            return Err(err(
                n,
                "feature key does not fit the grid and levels".into(),
            ));
        }
        let action: usize = action
            .parse()
            .ok()
            .filter(|&a| a < q.num_actions)
            .ok_or_else(|| err(n, format!("action `{action}` out of range")))?;
        let value: f64 = value
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(n, format!("value `{value}` is not a finite number")))?;
        if !seen.insert((key.clone(), action)) {
            return Err(err(n, "duplicate entry".into()));
        }
        q.set(&key, action, value);
    }
    q.sync_target();
    Ok((q, features))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(cells: &[u8]) -> FeatureKey {
        FeatureKey::new(cells.to_vec())
    }

    #[test]
    fn featurize_examples() {
        let spec = FeatureSpec { grid: 2, levels: 2 };
        assert_eq!(
            featurize(&GrayFrame84::filled(0), &spec).cells(),
            [0, 0, 0, 0]
        );
        let half = GrayFrame84::from_fn(|x, _| if x < 42 { 255 } else { 0 });
        assert_eq!(featurize(&half, &spec).cells(), [1, 0, 1, 0]);
        assert_eq!(
            featurize(&GrayFrame84::filled(0), &FeatureSpec::default())
                .cells()
                .len(),
            64
        );
    }

    #[test]
    fn small_change_keeps_key() {
        let spec = FeatureSpec::default();
        let a = GrayFrame84::filled(100);
        let b = GrayFrame84::from_fn(|x, y| if (x, y) == (3, 3) { 101 } else { 100 });
        assert_eq!(featurize(&a, &spec), featurize(&b, &spec));
    }

    #[test]
    fn single_update_by_hand() {
        let hp = HyperParams {
            alpha: 0.5,
            gamma: 0.9,
            ..HyperParams::default()
        };
        let mut q = QFunction::new(3);
        let t = Transition {
            state: key(&[0]),
            action: 1,
            reward: 10.0,
            next_state: key(&[1]),
            terminal: false,
        };
        q_update(&mut q, &t, &hp).unwrap();
        assert_eq!(q.value(&key(&[0]), 1), 5.0);

        let mut q = QFunction::new(3);
        let hp = HyperParams { alpha: 1.0, ..hp };
        let t = Transition {
            reward: -3.0,
            terminal: true,
            ..t
        };
        q_update(&mut q, &t, &hp).unwrap();
        assert_eq!(q.value(&key(&[0]), 1), -3.0);
    }

    #[test]
    fn non_finite_reward_rejected() {
        let mut q = QFunction::new(2);
        let t = Transition {
            state: key(&[0]),
            action: 0,
            reward: f64::NAN,
            next_state: key(&[0]),
            terminal: false,
        };
        assert!(matches!(
            q_update(&mut q, &t, &HyperParams::default()),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn target_lags_until_sync() {
        let hp = HyperParams {
            alpha: 1.0,
            gamma: 0.5,
            target_sync_period: 3,
            ..HyperParams::default()
        };
        let mut q = QFunction::new(1);
        let s = key(&[7]);
        let terminal = |r| Transition {
            state: s.clone(),
            action: 0,
            reward: r,
            next_state: s.clone(),
            terminal: true,
        };
        q_update(&mut q, &terminal(4.0), &hp).unwrap();
        assert_eq!(q.value(&s, 0), 4.0);
        assert_eq!(q.target_value(&s, 0), 0.0);
        q_update(&mut q, &terminal(6.0), &hp).unwrap();
        q_update(&mut q, &terminal(8.0), &hp).unwrap();
        assert_eq!(q.target_value(&s, 0), 8.0);
        q_update(&mut q, &terminal(1.0), &hp).unwrap();
        assert_eq!(q.target_value(&s, 0), 8.0);
        assert_eq!(q.value(&s, 0), 1.0);
    }

    #[test]
    fn greedy_tie_break() {
        let mut q = QFunction::new(3);
        let s = key(&[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&q, &s, 3, 0.0, &mut rng), 0);
        q.set(&s, 1, 7.0);
        q.set(&s, 2, 7.0);
        assert_eq!(select_action(&q, &s, 3, 0.0, &mut rng), 1);
    }

    #[test]
    fn epsilon_schedule() {
        let hp = HyperParams::default();
        assert_eq!(hp.epsilon_at(0, 1000), 1.0);
        assert!((hp.epsilon_at(50, 1000) - 0.55).abs() < 1e-12);
        assert_eq!(hp.epsilon_at(100, 1000), 0.1);
        assert_eq!(hp.epsilon_at(999, 1000), 0.1);
    }

    #[test]
    fn model_round_trip() {
        let mut q = QFunction::new(3);
        q.set(&key(&[1, 2, 3, 0]), 2, 0.1 + 0.2);
        q.set(&key(&[0, 0, 0, 0]), 0, -1e-300);
        let spec = FeatureSpec { grid: 2, levels: 4 };
        let text = model_to_string(&q, &spec);
        let (back, spec_back) = parse_model(&text).unwrap();
        assert_eq!(spec_back, spec);
        assert_eq!(back.value(&key(&[1, 2, 3, 0]), 2), 0.1 + 0.2);
        assert_eq!(back.target_value(&key(&[0, 0, 0, 0]), 0), -1e-300);
        assert_eq!(model_to_string(&back, &spec), text);
    }

    #[test]
    fn model_parse_errors_carry_line_numbers() {
        let base = "# rle q-function v1\n# actions 2\n# grid 1\n# levels 4\n";
        let cases = [
            ("", 1),
            ("# rle q-function v1\n# actions x\n", 2),
            (&*format!("{base}00 0 1.0\n00 5 1.0\n"), 6),
            (&*format!("{base}zz 0 1.0\n"), 5),
            (&*format!("{base}0000 0 1.0\n"), 5),
            (&*format!("{base}00 0 NaN\n"), 5),
            (&*format!("{base}00 0 1.0\n00 0 2.0\n"), 6),
            (&*format!("{base}00 0\n"), 5),
        ];
        for (text, line) in cases {
            match parse_model(text) {
                Err(Error::ModelParse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
