//! On-disk layout for trees and pair datasets.
//!
//! A tree directory holds `tree.json` (topology, poses, config) and
//! `observations.bin`, the per-node observations as fixed-size records:
//! fixed-camera image blob, wrist image blob, then the F/T window as
//! little-endian f64 triples. Pair datasets are a JSON index referencing
//! node ids, with no observation duplication.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::SamplerError;
use crate::sim::io::{read_image_blob, write_image_blob};
use crate::sim::Observation;

use super::{TaskProgressTree, TrainingPair};

#[derive(Serialize, Deserialize)]
struct TreeFile {
    image_size: usize,
    ft_history_len: usize,
    #[serde(flatten)]
    tree: TaskProgressTree,
}

pub fn save_tree(dir: &Path, tree: &TaskProgressTree) -> Result<(), SamplerError> {
    fs::create_dir_all(dir)?;
    let obs0 = &tree.nodes[0].observation;
    let file = TreeFile {
        image_size: obs0.image_size,
        ft_history_len: obs0.ft_history.len(),
        tree: tree.clone(),
    };
    let json = serde_json::to_string(&file).map_err(|e| SamplerError::Format(e.to_string()))?;
    fs::write(dir.join("tree.json"), json)?;

    let mut w = BufWriter::new(fs::File::create(dir.join("observations.bin"))?);
    let n = obs0.image_size as u16;
    for node in &tree.nodes {
        let o = &node.observation;
        write_image_blob(&mut w, n, n, 3, &o.fixed_image)?;
        write_image_blob(&mut w, n, n, 3, &o.wrist_image)?;
        for row in &o.ft_history {
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_tree(dir: &Path) -> Result<TaskProgressTree, SamplerError> {
    let json = fs::read_to_string(dir.join("tree.json"))?;
    let file: TreeFile =
        serde_json::from_str(&json).map_err(|e| SamplerError::Format(e.to_string()))?;
    let mut tree = file.tree;

    let mut r = BufReader::new(fs::File::open(dir.join("observations.bin"))?);
    for node in &mut tree.nodes {
        let (w, h, c, fixed) = read_image_blob(&mut r).map_err(fmt_err)?;
        if (w as usize, h as usize, c) != (file.image_size, file.image_size, 3) {
            return Err(SamplerError::Format(format!(
                "observation blob is {w}x{h}x{c}, expected {0}x{0}x3",
                file.image_size
            )));
        }
        let (_, _, _, wrist) = read_image_blob(&mut r).map_err(fmt_err)?;
        let mut ft = Vec::with_capacity(file.ft_history_len);
        for _ in 0..file.ft_history_len {
            let mut row = [0.0; 3];
            for v in &mut row {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            ft.push(row);
        }
        node.observation = Observation {
            fixed_image: fixed,
            wrist_image: wrist,
            ft_history: ft,
            image_size: file.image_size,
        };
    }
    Ok(tree)
}

fn fmt_err(e: crate::error::SimError) -> SamplerError {
    SamplerError::Format(e.to_string())
}

#[derive(Serialize, Deserialize)]
struct PairFile {
    epsilon: i64,
    rng_seed: u64,
    pairs: Vec<TrainingPair>,
}

pub fn save_pairs(
    path: &Path,
    pairs: &[TrainingPair],
    epsilon: i64,
    rng_seed: u64,
) -> Result<(), SamplerError> {
    let file = PairFile { epsilon, rng_seed, pairs: pairs.to_vec() };
    let json = serde_json::to_string(&file).map_err(|e| SamplerError::Format(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_pairs(path: &Path) -> Result<(Vec<TrainingPair>, i64, u64), SamplerError> {
    let json = fs::read_to_string(path)?;
    let file: PairFile =
        serde_json::from_str(&json).map_err(|e| SamplerError::Format(e.to_string()))?;
    Ok((file.pairs, file.epsilon, file.rng_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{build_tree, generate_expert, sample_pairs, SamplerConfig};
    use crate::sim::EnvConfig;

    #[test]
    fn tree_and_pairs_round_trip() {
        let mut env = EnvConfig::peg_hole();
        env.image_size = 8;
        let expert = generate_expert(&env, 11, 400).unwrap();
        let mut cfg = SamplerConfig::defaults_for(&env);
        cfg.m = 12;
        cfg.max_depth = 120;
        let tree = build_tree(&env, &expert, &cfg).unwrap();
        let pairs = sample_pairs(&tree, 4, 20, 3).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_tree(dir.path(), &tree).unwrap();
        let loaded = load_tree(dir.path()).unwrap();
        assert_eq!(tree, loaded);

        let pp = dir.path().join("pairs.json");
        save_pairs(&pp, &pairs, 4, 3).unwrap();
        let (loaded_pairs, eps, seed) = load_pairs(&pp).unwrap();
        assert_eq!(pairs, loaded_pairs);
        assert_eq!((eps, seed), (4, 3));
    }
}
