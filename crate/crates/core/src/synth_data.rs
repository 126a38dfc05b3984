//! Hierarchical Gaussian-mixture datasets with known tree structure.
//!
//! Every node of a tree with the given fan-outs gets a mean: the root sits at
//! the origin and each child is its parent's mean plus a random unit
//! direction scaled by that level's scale. Leaf samples add isotropic noise
//! whose expected norm is `noise`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeSpec {
    pub branching: Vec<usize>,
    pub feat_dim: usize,
    pub level_scales: Vec<f64>,
    pub noise: f64,
    pub samples_per_leaf: usize,
    pub seed: u64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec {
            branching: vec![4, 4, 4],
            feat_dim: 64,
            level_scales: vec![4.0, 2.0, 1.0],
            noise: 0.25,
            samples_per_leaf: 100,
            seed: 7,
        }
    }
}

impl TreeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.branching.is_empty() || self.branching.contains(&0) {
            return Err(Error::usage("branching must be a non-empty list of counts ≥ 1"));
        }
        if self.feat_dim == 0 || self.samples_per_leaf == 0 {
            return Err(Error::usage("feat_dim and samples_per_leaf must be ≥ 1"));
        }
        if self.level_scales.len() != self.branching.len() {
            return Err(Error::usage(format!(
                "{} level scales given for {} levels",
                self.level_scales.len(),
                self.branching.len()
            )));
        }
        if self.level_scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::usage("level scales must be positive"));
        }
        if self.level_scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::usage("level scales must be strictly decreasing"));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::usage("noise must be ≥ 0"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.branching.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.branching.iter().product()
    }

    /// Number of nodes at `level` (the root is level 0).
    pub fn nodes_at(&self, level: usize) -> usize {
        self.branching[..level].iter().product()
    }
}

/// One sample. `path[l]` is the index, among all nodes of level `l + 1`, of
/// the node this sample descends from; the last entry is the leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierRecord {
    pub feat: Vec<f64>,
    pub leaf: usize,
    pub path: Vec<usize>,
}

impl HierRecord {
    pub fn depth(&self) -> usize {
        self.path.len()
    }
}

/// Mean feature of an internal node's descendants.
#[derive(Debug, Clone, PartialEq)]
pub struct AncestorRecord {
    pub feat: Vec<f64>,
    pub level: usize,
    pub node: usize,
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

pub fn generate(spec: &TreeSpec) -> Result<Vec<HierRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.feat_dim;
    let mut means = vec![vec![0.0; dim]];
    for (level, &fan) in spec.branching.iter().enumerate() {
        let scale = spec.level_scales[level];
        let mut next = Vec::with_capacity(means.len() * fan);
        for parent in &means {
            for _ in 0..fan {
                let u = random_direction(&mut rng, dim);
                next.push(parent.iter().zip(&u).map(|(p, u)| p + scale * u).collect::<Vec<f64>>());
            }
        }
        means = next;
    }
    let per_coord = spec.noise / (dim as f64).sqrt();
    let mut out = Vec::with_capacity(means.len() * spec.samples_per_leaf);
    for (leaf, mean) in means.iter().enumerate() {
        let path = leaf_path(spec, leaf);
        for _ in 0..spec.samples_per_leaf {
            let feat = mean
                .iter()
                .map(|m| {
                    let g: f64 = rng.sample(StandardNormal);
                    m + per_coord * g
                })
                .collect();
            out.push(HierRecord {
                feat,
                leaf,
                path: path.clone(),
            });
        }
    }
    Ok(out)
}

fn leaf_path(spec: &TreeSpec, leaf: usize) -> Vec<usize> {
    let depth = spec.depth();
    (1..=depth)
        .map(|level| leaf / spec.branching[level..].iter().product::<usize>())
        .collect()
}

/// Stratified split: each leaf contributes `round(train_frac · n)` samples
/// to the training side, clamped so both sides get at least one. Records
/// keep their original order within each side.
pub fn split(data: &[HierRecord], train_frac: f64, seed: u64) -> Result<(Vec<HierRecord>, Vec<HierRecord>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::usage("train fraction must be in (0, 1)"));
    }
    let mut by_leaf: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in data.iter().enumerate() {
        by_leaf.entry(r.leaf).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_train = vec![false; data.len()];
    for (leaf, mut idx) in by_leaf {
        if idx.len() < 2 {
            return Err(Error::usage(format!("leaf {leaf} has fewer than 2 samples")));
        }
        idx.shuffle(&mut rng);
        let k = ((train_frac * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        for &i in &idx[..k] {
            is_train[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (r, t) in data.iter().zip(is_train) {
        if t {
            train.push(r.clone());
        } else {
            val.push(r.clone());
        }
    }
    Ok((train, val))
}

/// Mean features of every node at `level` (0 is the root) over the given
/// records, ordered by node id.
pub fn ancestor_features(data: &[HierRecord], level: usize) -> Result<Vec<AncestorRecord>> {
    let depth = data
        .first()
        .map(|r| r.depth())
        .ok_or_else(|| Error::usage("empty dataset"))?;
    if level >= depth {
        return Err(Error::usage(format!("level {level} is not above the leaves (depth {depth})")));
    }
    let mut groups: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for r in data {
        let node = if level == 0 { 0 } else { r.path[level - 1] };
        let (sum, n) = groups.entry(node).or_insert_with(|| (vec![0.0; r.feat.len()], 0));
        sum.iter_mut().zip(&r.feat).for_each(|(s, f)| *s += f);
        *n += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(node, (sum, n))| AncestorRecord {
            feat: sum.into_iter().map(|s| s / n as f64).collect(),
            level,
            node,
        })
        .collect())
}

/// Checks lengths and label/path consistency across a dataset.
pub fn validate_records(data: &[HierRecord]) -> Result<()> {
    let Some(first) = data.first() else {
        return Ok(());
    };
    for (i, r) in data.iter().enumerate() {
        if r.feat.len() != first.feat.len() {
            return Err(Error::data(format!(
                "record {i}: feature length {} differs from {}",
                r.feat.len(),
                first.feat.len()
            )));
        }
        if r.path.len() != first.path.len() {
            return Err(Error::data(format!("record {i}: path length differs")));
        }
        if r.path.last() != Some(&r.leaf) {
            return Err(Error::data(format!("record {i}: leaf label does not end its path")));
        }
        if r.feat.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("record {i}: non-finite feature")));
        }
    }
    Ok(())
}

pub fn write_jsonl<W: Write>(mut w: W, data: &[HierRecord]) -> Result<()> {
    for r in data {
        let line = serde_json::to_string(r).map_err(|e| Error::data(e.to_string()))?;
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<HierRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: HierRecord =
            serde_json::from_str(&line).map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    validate_records(&out)?;
    Ok(out)
}

pub fn save_jsonl(path: &Path, data: &[HierRecord]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_jsonl(&mut w, data).map_err(|e| retag(e, path))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_jsonl(path: &Path) -> Result<Vec<HierRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(f)).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        e => retag(e, path),
    })
}

fn retag(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        e => e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::euclidean;

    fn small_spec() -> TreeSpec {
        TreeSpec {
            branching: vec![3, 2],
            feat_dim: 8,
            level_scales: vec![3.0, 1.0],
            noise: 0.1,
            samples_per_leaf: 10,
            seed: 1,
        }
    }

    #[test]
    fn two_leaves_without_noise() {
        let spec = TreeSpec {
            branching: vec![2],
            feat_dim: 5,
            level_scales: vec![2.0],
            noise: 0.0,
            samples_per_leaf: 1,
            seed: 3,
        };
        let d = generate(&spec).unwrap();
        assert_eq!(d.len(), 2);
        for r in &d {
            let n = r.feat.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 2.0).abs() < 1e-12);
        }
        assert_eq!(d[0].path, vec![0]);
        assert_eq!(d[1].leaf, 1);
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_jsonl(&mut a, &generate(&small_spec()).unwrap()).unwrap();
        write_jsonl(&mut b, &generate(&small_spec()).unwrap()).unwrap();
        assert_eq!(a, b);
        let mut other = small_spec();
        other.seed = 2;
        let mut c = Vec::new();
        write_jsonl(&mut c, &generate(&other).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn jsonl_round_trip() {
        let d = generate(&small_spec()).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &d).unwrap();
        assert_eq!(read_jsonl(&buf[..]).unwrap(), d);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().starts_with("{\"feat\":["));
    }

    #[test]
    fn paths_are_consistent() {
        let spec = TreeSpec::default();
        let d = generate(&TreeSpec {
            samples_per_leaf: 1,
            ..spec
        })
        .unwrap();
        assert_eq!(d.len(), 64);
        assert_eq!(d[27].path, vec![1, 6, 27]);
        validate_records(&d).unwrap();
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small_spec();
        s.branching = vec![0, 2];
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.level_scales = vec![1.0, 1.0];
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.level_scales = vec![1.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let spec = TreeSpec {
            samples_per_leaf: 100,
            ..small_spec()
        };
        let d = generate(&spec).unwrap();
        let (tr, va) = split(&d, 0.8, 5).unwrap();
        assert_eq!(tr.len() + va.len(), d.len());
        for leaf in 0..6 {
            assert_eq!(tr.iter().filter(|r| r.leaf == leaf).count(), 80);
            assert_eq!(va.iter().filter(|r| r.leaf == leaf).count(), 20);
        }
        for r in &va {
            assert!(!tr.contains(r));
        }
        assert_eq!(split(&d, 0.8, 5).unwrap(), (tr, va));
    }

    #[test]
    fn split_rejects_singleton_leaves() {
        let spec = TreeSpec {
            samples_per_leaf: 1,
            ..small_spec()
        };
        let d = generate(&spec).unwrap();
        assert!(matches!(split(&d, 0.5, 0), Err(Error::Usage(_))));
        assert!(split(&d, 1.0, 0).is_err());
    }

    #[test]
    fn root_ancestor_is_global_mean() {
        let d = generate(&small_spec()).unwrap();
        let a = ancestor_features(&d, 0).unwrap();
        assert_eq!(a.len(), 1);
        for j in 0..8 {
            let m = d.iter().map(|r| r.feat[j]).sum::<f64>() / d.len() as f64;
            assert!((a[0].feat[j] - m).abs() < 1e-12);
        }
        assert_eq!(ancestor_features(&d, 1).unwrap().len(), 3);
        assert_eq!(ancestor_features(&d, 1).unwrap(), ancestor_features(&d, 1).unwrap());
        assert!(ancestor_features(&d, 2).is_err());
    }

    #[test]
    fn siblings_are_closer_than_cousins() {
        let d = generate(&TreeSpec {
            samples_per_leaf: 5,
            ..TreeSpec::default()
        })
        .unwrap();
        // Parents live at levels 1 and 2; the root is shared by everyone.
        for parent_level in 1..=2 {
            let (mut within, mut nw, mut across, mut na) = (0.0, 0, 0.0, 0);
            for (i, a) in d.iter().enumerate().step_by(3) {
                for b in d[i + 1..].iter().step_by(3) {
                    let dist = euclidean(&a.feat, &b.feat);
                    if a.path[parent_level - 1] == b.path[parent_level - 1] {
                        within += dist;
                        nw += 1;
                    } else {
                        across += dist;
                        na += 1;
                    }
                }
            }
            assert!(within / (nw as f64) < across / na as f64);
        }
    }

    #[test]
    fn nearest_centroid_probe_separates_leaves() {
        let d = generate(&TreeSpec::default()).unwrap();
        let (tr, va) = split(&d, 0.8, 0).unwrap();
        let mut centroids = vec![vec![0.0; 64]; 64];
        let mut counts = vec![0usize; 64];
        for r in &tr {
            centroids[r.leaf].iter_mut().zip(&r.feat).for_each(|(c, f)| *c += f);
            counts[r.leaf] += 1;
        }
        for (c, n) in centroids.iter_mut().zip(&counts) {
            c.iter_mut().for_each(|v| *v /= *n as f64);
        }
        let correct = va
            .iter()
            .filter(|r| {
                let best = (0..64)
                    .min_by(|&a, &b| euclidean(&r.feat, &centroids[a]).total_cmp(&euclidean(&r.feat, &centroids[b])))
                    .unwrap();
                best == r.leaf
            })
            .count();
        assert!(correct as f64 / va.len() as f64 > 0.95);
    }
}
