//! Dataset format v1 (JSON), validation, and synthetic generators.
//!
//! A bundle is a single JSON object:
//!
//! ```json
//! {"name":"tiny","num_nodes":2,"num_features":2,"num_classes":2,
//!  "edges":[[0,1]],"features":[[0,0,1.0],[1,1,1.0]],
//!  "labels":[0,1],"splits":["train","test"]}
//! ```
//!
//! Exactly one of `edges` (undirected pairs) or `hyperedges` (member
//! lists) is present. Graph-form bundles are turned into hypergraphs with
//! [`neighborhood_conversion`].

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::hypergraph::{neighborhood_conversion, star_expansion, Hypergraph, SimpleGraph};
use crate::model::{NodeFeatures, Split};
use crate::seed::derive_seed;

/// Structure of a bundle: a simple graph or explicit hyperedges.
#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Edges(Vec<(usize, usize)>),
    Hyperedges(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub structure: Structure,
    /// Sparse `(node, feature, value)` triples.
    pub features: Vec<(usize, usize, f64)>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBundle {
    name: String,
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hyperedges: Option<Vec<Vec<usize>>>,
    features: Vec<(usize, usize, f64)>,
    labels: Vec<usize>,
    splits: Vec<Split>,
}

impl DatasetBundle {
    /// Checks every documented invariant, naming the first violation.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDataset(msg));
        let n = self.num_nodes;
        match &self.structure {
            Structure::Edges(edges) => {
                SimpleGraph::new(n, edges.iter().copied())
                    .map_err(|e| Error::InvalidDataset(format!("edges: {e}")))?;
            }
            Structure::Hyperedges(edges) => {
                for (k, members) in edges.iter().enumerate() {
                    let mut seen = BTreeSet::new();
                    for &m in members {
                        if m >= n {
                            return bad(format!("hyperedges[{k}] member {m} >= num_nodes {n}"));
                        }
                        if !seen.insert(m) {
                            return bad(format!("hyperedges[{k}] repeats member {m}"));
                        }
                    }
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (i, &(node, f, v)) in self.features.iter().enumerate() {
            if node >= n {
                return bad(format!("features[{i}] node {node} >= num_nodes {n}"));
            }
            if f >= self.num_features {
                return bad(format!("features[{i}] index {f} >= num_features {}", self.num_features));
            }
            if !v.is_finite() {
                return bad(format!("features[{i}] value is not finite"));
            }
            if !seen.insert((node, f)) {
                return bad(format!("features[{i}] duplicates entry ({node}, {f})"));
            }
        }
        if self.labels.len() != n {
            return bad(format!("labels has {} entries, num_nodes is {n}", self.labels.len()));
        }
        if let Some((i, &l)) = self.labels.iter().enumerate().find(|(_, &l)| l >= self.num_classes) {
            return bad(format!("labels[{i}] = {l} out of range [0, {})", self.num_classes));
        }
        let used: BTreeSet<usize> = self.labels.iter().copied().collect();
        if n > 0 && used.len() != self.num_classes {
            let missing: Vec<_> = (0..self.num_classes).filter(|c| !used.contains(c)).collect();
            return bad(format!("classes {missing:?} have no nodes (class indices must be dense)"));
        }
        if self.splits.len() != n {
            return bad(format!("splits has {} entries, num_nodes is {n}", self.splits.len()));
        }
        Ok(())
    }

    pub fn is_graph(&self) -> bool {
        matches!(self.structure, Structure::Edges(_))
    }

    /// Hypergraph view: explicit hyperedges, or the neighborhood conversion
    /// of a graph-form bundle.
    pub fn hypergraph(&self) -> Result<Hypergraph> {
        match &self.structure {
            Structure::Edges(edges) => Ok(neighborhood_conversion(&SimpleGraph::new(
                self.num_nodes,
                edges.iter().copied(),
            )?)),
            Structure::Hyperedges(edges) => Hypergraph::from_hyperedges(self.num_nodes, edges),
        }
    }

    pub fn node_features(&self) -> NodeFeatures {
        let mut m = Matrix::zeros(self.num_nodes, self.num_features);
        for &(n, f, v) in &self.features {
            m.set(n, f, v);
        }
        NodeFeatures(m)
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes).filter(|&n| self.splits[n] == split).collect()
    }

    /// Graph-form bundle rewritten with explicit neighborhood hyperedges.
    pub fn to_hypergraph_form(&self) -> Result<Self> {
        if !self.is_graph() {
            return Err(Error::Config("bundle already holds hyperedges".into()));
        }
        let h = self.hypergraph()?;
        let edges = (0..h.num_edges()).map(|e| h.members(e).to_vec()).collect();
        Ok(Self {
            name: format!("{}-hyper", self.name),
            structure: Structure::Hyperedges(edges),
            ..self.clone()
        })
    }

    /// Star expansion of a hypergraph-form bundle.
    ///
    /// Hyperedge `e` becomes node `N + e` with zero features, the most
    /// common label among its members (lowest class on ties, class 0 when
    /// empty) and the `val` split tag, so it never enters training or the
    /// test set.
    pub fn star_expanded(&self) -> Result<Self> {
        if self.is_graph() {
            return Err(Error::Config("star expansion needs a hypergraph-form bundle".into()));
        }
        let h = self.hypergraph()?;
        let g = star_expansion(&h);
        let mut labels = self.labels.clone();
        let mut splits = self.splits.clone();
        for e in 0..h.num_edges() {
            let mut counts = vec![0usize; self.num_classes];
            for &m in h.members(e) {
                counts[self.labels[m]] += 1;
            }
            let best = (0..self.num_classes).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
            labels.push(best);
            splits.push(Split::Val);
        }
        let out = Self {
            name: format!("{}-star", self.name),
            num_nodes: g.num_nodes(),
            structure: Structure::Edges(g.edges().to_vec()),
            labels,
            splits,
            ..self.clone()
        };
        out.validate()?;
        Ok(out)
    }

    fn to_raw(&self) -> RawBundle {
        let (edges, hyperedges) = match &self.structure {
            Structure::Edges(e) => (Some(e.clone()), None),
            Structure::Hyperedges(h) => (None, Some(h.clone())),
        };
        RawBundle {
            name: self.name.clone(),
            num_nodes: self.num_nodes,
            num_features: self.num_features,
            num_classes: self.num_classes,
            edges,
            hyperedges,
            features: self.features.clone(),
            labels: self.labels.clone(),
            splits: self.splits.clone(),
        }
    }

    fn from_raw(raw: RawBundle) -> Result<Self> {
        let structure = match (raw.edges, raw.hyperedges) {
            (Some(e), None) => Structure::Edges(e),
            (None, Some(h)) => Structure::Hyperedges(h),
            (Some(_), Some(_)) => {
                return Err(Error::InvalidDataset("both `edges` and `hyperedges` present".into()))
            }
            (None, None) => {
                return Err(Error::InvalidDataset("one of `edges` or `hyperedges` is required".into()))
            }
        };
        let bundle = Self {
            name: raw.name,
            num_nodes: raw.num_nodes,
            num_features: raw.num_features,
            num_classes: raw.num_classes,
            structure,
            features: raw.features,
            labels: raw.labels,
            splits: raw.splits,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawBundle = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    /// Canonical compact JSON followed by a newline.
    pub fn to_json_string(&self) -> Result<String> {
        self.validate()?;
        let mut s = serde_json::to_string(&self.to_raw()).map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    DatasetBundle::from_json_str(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Validates, then writes. Nothing is written for an invalid bundle.
pub fn save(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<()> {
    let text = bundle.to_json_string()?;
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Parameters of the planted-partition generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    pub feature_noise: f64,
    /// Width of each class's block of indicator features.
    pub signal_width: usize,
    /// Value of a set indicator feature.
    pub signal_amplitude: f64,
    /// Number of boundary nodes, each attached to a foreign class block
    /// through one bridge hyperedge. Boundary nodes are the last indices.
    pub bridges: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            num_nodes: 120,
            num_classes: 3,
            intra_edge_prob: 0.2,
            inter_edge_prob: 0.001,
            feature_noise: 0.0,
            signal_width: 16,
            signal_amplitude: 3.0,
            bridges: 4,
            train_fraction: 0.3,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Members of the bridge hyperedge besides the boundary node.
pub const BRIDGE_WIDTH: usize = 6;

/// Amplitude of a boundary node's home-class block, relative to
/// `signal_amplitude`.
pub const BOUNDARY_SIGNAL: f64 = 1.3;

/// A boundary node planted by [`synth_planted`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedBridge {
    pub node: usize,
    /// Index of the bridge hyperedge.
    pub edge: usize,
    /// Class of the boundary node's own feature signal.
    pub home_class: usize,
    /// Class of the block the bridge reaches into.
    pub far_class: usize,
}

/// Planted-partition hypergraph.
///
/// Core nodes get class `i % C` and `C * signal_width` features: the
/// block of `signal_width` indicators for the node's class is set to
/// `signal_amplitude`, plus uniform noise in `[-feature_noise, feature_noise]` everywhere, and
/// one hyperedge each holding the node and its neighbors in a stochastic
/// block graph.
///
/// Each boundary node `b` carries its home-class block at
/// [`BOUNDARY_SIGNAL`] times `signal_amplitude` and has exactly two
/// hyperedges: the singleton `{b}` and a bridge holding `b` and the
/// `BRIDGE_WIDTH` lowest-degree unused nodes of the far class. With the
/// bridge the far class narrowly outweighs `b`'s own signal; without it
/// only the home signal remains. Boundary nodes are labelled with the far
/// class and placed in the test split. Whether a trained model actually
/// follows the bridge depends on the fit, so callers should confirm it by
/// evaluating the model with and without the bridge.
pub fn synth_planted(cfg: &PlantedConfig) -> Result<(DatasetBundle, Vec<PlantedBridge>)> {
    let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
    if !prob_ok(cfg.intra_edge_prob) || !prob_ok(cfg.inter_edge_prob) || cfg.intra_edge_prob <= cfg.inter_edge_prob {
        return Err(Error::Config(format!(
            "need 0 <= inter_edge_prob < intra_edge_prob <= 1, got {} and {}",
            cfg.inter_edge_prob, cfg.intra_edge_prob
        )));
    }
    if !(cfg.feature_noise >= 0.0 && cfg.feature_noise.is_finite()) {
        return Err(Error::Config("feature_noise must be nonnegative".into()));
    }
    if !(cfg.signal_amplitude > 0.0 && cfg.signal_amplitude.is_finite()) {
        return Err(Error::Config("signal_amplitude must be positive".into()));
    }
    if cfg.signal_width == 0 {
        return Err(Error::Config("signal_width must be positive".into()));
    }
    if cfg.num_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    if cfg.train_fraction <= 0.0 || cfg.val_fraction < 0.0 || cfg.train_fraction + cfg.val_fraction >= 1.0 {
        return Err(Error::Config("train/val fractions must be positive and sum below 1".into()));
    }
    let core = cfg.num_nodes.checked_sub(cfg.bridges).unwrap_or(0);
    if core < cfg.num_classes * (BRIDGE_WIDTH + 2) {
        return Err(Error::Config(format!(
            "{} core nodes too few for {} classes",
            core, cfg.num_classes
        )));
    }
    let c = cfg.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth"));
    let mut labels: Vec<usize> = (0..core).map(|i| i % c).collect();

    let mut adj = vec![Vec::new(); core];
    for u in 0..core {
        for v in (u + 1)..core {
            let p = if labels[u] == labels[v] {
                cfg.intra_edge_prob
            } else {
                cfg.inter_edge_prob
            };
            if rng.gen::<f64>() < p {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
    }
    let mut hyperedges: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut e = nbrs.clone();
            e.push(i);
            e.sort_unstable();
            e
        })
        .collect();

    let width = cfg.signal_width;
    let mut features = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        for f in 0..c * width {
            let signal = if f / width == label { cfg.signal_amplitude } else { 0.0 };
            let noise = if cfg.feature_noise > 0.0 {
                rng.gen_range(-cfg.feature_noise..=cfg.feature_noise)
            } else {
                0.0
            };
            let v = signal + noise;
            if v != 0.0 {
                features.push((i, f, v));
            }
        }
    }

    // Degree in the neighborhood hypergraph is 1 + number of neighbors.
    let degree: Vec<usize> = adj.iter().map(|a| a.len() + 1).collect();
    let mut used = vec![false; core];
    let mut bridges = Vec::with_capacity(cfg.bridges);
    for k in 0..cfg.bridges {
        let b = core + k;
        let home = k % c;
        let far = (k + 1) % c;
        let mut pool = |class: usize, count: usize| -> Vec<usize> {
            let mut cand: Vec<usize> = (0..core).filter(|&i| i % c == class && !used[i]).collect();
            cand.sort_by_key(|&i| (degree[i], i));
            let chosen: Vec<usize> = cand.into_iter().take(count).collect();
            for &i in &chosen {
                used[i] = true;
            }
            chosen
        };
        let mut bridge = pool(far, BRIDGE_WIDTH);
        if bridge.len() != BRIDGE_WIDTH {
            return Err(Error::Config(format!("too few core nodes to plant {} bridges", cfg.bridges)));
        }
        hyperedges.push(vec![b]);
        bridge.push(b);
        bridge.sort_unstable();
        hyperedges.push(bridge);
        for f in home * width..(home + 1) * width {
            features.push((b, f, BOUNDARY_SIGNAL * cfg.signal_amplitude));
        }
        labels.push(far);
        bridges.push(PlantedBridge {
            node: b,
            edge: hyperedges.len() - 1,
            home_class: home,
            far_class: far,
        });
    }

    let mut order: Vec<usize> = (0..core).collect();
    order.shuffle(&mut rng);
    let n_train = ((core as f64) * cfg.train_fraction).round() as usize;
    let n_val = ((core as f64) * cfg.val_fraction).round() as usize;
    let mut splits = vec![Split::Test; cfg.num_nodes];
    for &i in &order[..n_train] {
        splits[i] = Split::Train;
    }
    for &i in &order[n_train..n_train + n_val] {
        splits[i] = Split::Val;
    }

    let bundle = DatasetBundle {
        name: format!("planted-n{}-c{}-s{}", cfg.num_nodes, c, cfg.seed),
        num_nodes: cfg.num_nodes,
        num_features: c * width,
        num_classes: c,
        structure: Structure::Hyperedges(hyperedges),
        features,
        labels,
        splits,
    };
    bundle.validate()?;
    Ok((bundle, bridges))
}
