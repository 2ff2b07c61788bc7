//! Training configuration, read from flat `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Every field of
//! [`TrainConfig`] has a key; see [`TrainConfig::set`] for the list.

use crate::error::{GdgnnError, Result};
use crate::geodesic::TieBreak;
use crate::gnn::LayerKind;
use crate::pooling::{PoolConfig, Variant};
use crate::tape::Reducer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Link,
    Node,
    Graph,
}

impl std::str::FromStr for Task {
    type Err = GdgnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "link" => Ok(Task::Link),
            "node" => Ok(Task::Node),
            "graph" => Ok(Task::Graph),
            _ => Err(GdgnnError::InvalidParameter(format!("unknown task '{s}'"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Link => "link",
            Task::Node => "node",
            Task::Graph => "graph",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub layer: LayerKind,
    pub layers: usize,
    pub hidden: usize,
    pub head_hidden: usize,
    /// Defaults to `layers` when unset.
    pub d_max: Option<u32>,
    /// Defaults to `d_max` when unset.
    pub node_k: Option<usize>,
    pub variant: Variant,
    pub reducer: Reducer,
    pub node_reducer: Reducer,
    pub graph_reducer: Reducer,
    pub horizontal_distance: bool,
    pub tie_break: TieBreak,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub neg_ratio: usize,
    pub seed: u64,
    /// Train / valid / test fractions for link or node splits.
    pub split: [f64; 3],
    pub hits_k: usize,
    /// Add `ln(1 + degree)` to structure-only inputs.
    pub degree_feature: bool,
    /// Evaluate on the validation split every this many epochs (0 = only at
    /// the end).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Link,
            layer: LayerKind::Gcn,
            layers: 3,
            hidden: 32,
            head_hidden: 32,
            d_max: None,
            node_k: None,
            variant: Variant::Vertical,
            reducer: Reducer::Sum,
            node_reducer: Reducer::Sum,
            graph_reducer: Reducer::Mean,
            horizontal_distance: false,
            tie_break: TieBreak::Lexicographic,
            lr: 1e-3,
            epochs: 50,
            batch_size: 256,
            neg_ratio: 1,
            seed: 0,
            split: [0.85, 0.05, 0.10],
            hits_k: 50,
            degree_feature: true,
            eval_every: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| GdgnnError::InvalidParameter(format!("bad value '{value}' for '{key}'")))
}

impl TrainConfig {
    pub fn d_max(&self) -> u32 {
        self.d_max.unwrap_or(self.layers as u32)
    }

    pub fn pool_config(&self) -> PoolConfig {
        let d_max = self.d_max();
        PoolConfig {
            variant: self.variant,
            reducer: self.reducer,
            node_reducer: self.node_reducer,
            graph_reducer: self.graph_reducer,
            d_max,
            node_k: self.node_k.unwrap_or(d_max as usize),
            horizontal_distance: self.horizontal_distance,
            tie_break: self.tie_break,
            mask_target: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GdgnnError::InvalidParameter(m.to_string()));
        if self.layers == 0 || self.hidden == 0 || self.head_hidden == 0 {
            return bad("layers, hidden and head_hidden must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.neg_ratio == 0 || self.hits_k == 0 {
            return bad("epochs, batch_size, neg_ratio and hits_k must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.split.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split fractions must be in [0, 1] and sum to 1");
        }
        self.pool_config().validate()
    }

    /// Sets one field by key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "task" => self.task = parse(key, value)?,
            "layer" | "kind" => self.layer = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "head_hidden" => self.head_hidden = parse(key, value)?,
            "dmax" | "d_max" => self.d_max = Some(parse(key, value)?),
            "node_k" => self.node_k = Some(parse(key, value)?),
            "variant" => self.variant = parse(key, value)?,
            "reducer" => self.reducer = parse(key, value)?,
            "node_reducer" => self.node_reducer = parse(key, value)?,
            "graph_reducer" => self.graph_reducer = parse(key, value)?,
            "horizontal_distance" => self.horizontal_distance = parse(key, value)?,
            "tie_break" => {
                self.tie_break = match value {
                    "lex" | "lexicographic" => TieBreak::Lexicographic,
                    other => match other.strip_prefix("random:") {
                        Some(seed) => TieBreak::SeededRandom(parse(key, seed)?),
                        None => {
                            return Err(GdgnnError::InvalidParameter(format!(
                                "tie_break must be 'lex' or 'random:<seed>', got '{value}'"
                            )))
                        }
                    },
                }
            }
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "neg_ratio" => self.neg_ratio = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "split" => {
                let parts: Vec<f64> = value.split(['/', ',', ':']).map(|p| parse(key, p.trim())).collect::<Result<_>>()?;
                if parts.len() != 3 {
                    return Err(GdgnnError::InvalidParameter("split needs three fractions".into()));
                }
                let total: f64 = parts.iter().sum();
                // accept both 0.85/0.05/0.1 and 85/5/10
                self.split = [parts[0] / total, parts[1] / total, parts[2] / total];
            }
            "hits_k" => self.hits_k = parse(key, value)?,
            "degree_feature" => self.degree_feature = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            other => return Err(GdgnnError::InvalidParameter(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| GdgnnError::Parse {
                line: i + 1,
                message: format!("expected key=value, got '{line}'"),
            })?;
            self.set(k, v).map_err(|e| GdgnnError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Every field as `key=value`, readable by [`TrainConfig::from_text`].
    pub fn to_text(&self) -> String {
        let tie = match self.tie_break {
            TieBreak::Lexicographic => "lex".to_string(),
            TieBreak::SeededRandom(s) => format!("random:{s}"),
        };
        let mut lines = vec![
            format!("task={}", self.task),
            format!("layer={}", self.layer),
            format!("layers={}", self.layers),
            format!("hidden={}", self.hidden),
            format!("head_hidden={}", self.head_hidden),
        ];
        if let Some(d) = self.d_max {
            lines.push(format!("dmax={d}"));
        }
        if let Some(k) = self.node_k {
            lines.push(format!("node_k={k}"));
        }
        lines.extend([
            format!("variant={}", self.variant),
            format!("reducer={}", self.reducer),
            format!("node_reducer={}", self.node_reducer),
            format!("graph_reducer={}", self.graph_reducer),
            format!("horizontal_distance={}", self.horizontal_distance),
            format!("tie_break={tie}"),
            format!("lr={}", self.lr),
            format!("epochs={}", self.epochs),
            format!("batch_size={}", self.batch_size),
            format!("neg_ratio={}", self.neg_ratio),
            format!("seed={}", self.seed),
            format!("split={}/{}/{}", self.split[0], self.split[1], self.split[2]),
            format!("hits_k={}", self.hits_k),
            format!("degree_feature={}", self.degree_feature),
            format!("eval_every={}", self.eval_every),
        ]);
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let c = TrainConfig::from_text(
            "# comment\ntask = graph\nlayer=gin\nlayers=2\ndmax=4\nvariant=vertdeg\nreducer=max\nsplit=80/10/10\ntie_break=random:7\n",
        )
        .unwrap();
        assert_eq!(c.task, Task::Graph);
        assert_eq!(c.layer, LayerKind::Gin);
        assert_eq!(c.d_max(), 4);
        assert_eq!(c.variant, Variant::VerticalDeg);
        assert_eq!(c.reducer, Reducer::Max);
        assert!((c.split[0] - 0.8).abs() < 1e-12);
        assert_eq!(c.tie_break, TieBreak::SeededRandom(7));
        assert_eq!(TrainConfig::from_text(&c.to_text()).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn d_max_follows_layers() {
        let c = TrainConfig {
            layers: 2,
            ..Default::default()
        };
        assert_eq!(c.d_max(), 2);
        assert_eq!(c.pool_config().node_k, 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TrainConfig::from_text("nonsense").is_err());
        assert!(TrainConfig::from_text("colour=red").is_err());
        assert!(TrainConfig::from_text("layers=abc").is_err());
        let c = TrainConfig {
            lr: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
