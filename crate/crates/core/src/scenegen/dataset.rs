use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_structure, scatter_initial, GenSpec};
use super::scene::Scene;
use crate::depgraph::{oracle_graph, DependencyGraph};
use crate::error::{Error, Result};
use crate::geometry::Catalog;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Target structure, scattered initial scene and ground-truth graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub seed: u64,
    pub target: Scene,
    pub initial: Scene,
    pub graph: DependencyGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub seed: u64,
    pub target_file: String,
    pub initial_file: String,
    pub graph_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub count: usize,
    pub gen_spec: GenSpec,
    pub entries: Vec<ManifestEntry>,
}

/// SplitMix64 finalizer; decorrelates consecutive seeds.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One entry from a single seed.
pub fn generate_entry(spec: &GenSpec, catalog: &Catalog, seed: u64) -> Result<DatasetEntry> {
    let target = generate_structure(&spec.with_seed(seed), catalog)?;
    let initial = scatter_initial(&target, catalog, mix_seed(seed, 0x1417))?;
    let graph = oracle_graph(&target, catalog)?;
    Ok(DatasetEntry {
        seed,
        target,
        initial,
        graph,
    })
}

/// `count` entries whose seeds derive from `spec.seed`; entries for which
/// generation fails are retried with a fresh derived seed. `accept` filters
/// entries (for example by object count). Output order is independent of the
/// thread count.
pub fn generate_dataset_filtered(
    spec: &GenSpec,
    catalog: &Catalog,
    count: usize,
    accept: impl Fn(&DatasetEntry) -> bool + Sync,
) -> Result<Vec<DatasetEntry>> {
    const MAX_RETRIES: u64 = 1000;
    (0..count)
        .into_par_iter()
        .map(|i| {
            for attempt in 0..MAX_RETRIES {
                let seed = mix_seed(spec.seed, i as u64 + attempt * count as u64);
                match generate_entry(spec, catalog, seed) {
                    Ok(e) if accept(&e) => return Ok(e),
                    Ok(_) | Err(Error::GenerationFailure(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::GenerationFailure(format!(
                "scene {i}: no acceptable scene after {MAX_RETRIES} seeds"
            )))
        })
        .collect()
}

pub fn generate_dataset(spec: &GenSpec, catalog: &Catalog, count: usize) -> Result<Vec<DatasetEntry>> {
    generate_dataset_filtered(spec, catalog, count, |_| true)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, None, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, scene: Option<usize>) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, scene, e))
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_json(path, scene)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    read_json(path, None)
}

pub fn save_graph(path: &Path, graph: &DependencyGraph) -> Result<()> {
    write_json(path, graph)
}

pub fn load_graph(path: &Path) -> Result<DependencyGraph> {
    read_json(path, None)
}

pub fn save_dataset(dir: &Path, spec: &GenSpec, entries: &[DatasetEntry]) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest {
        version: MANIFEST_VERSION,
        count: entries.len(),
        gen_spec: spec.clone(),
        entries: Vec::with_capacity(entries.len()),
    };
    for (id, e) in entries.iter().enumerate() {
        let m = ManifestEntry {
            id,
            seed: e.seed,
            target_file: format!("scene_{id:05}_target.json"),
            initial_file: format!("scene_{id:05}_initial.json"),
            graph_file: format!("scene_{id:05}_graph.json"),
        };
        write_json(&dir.join(&m.target_file), &e.target)?;
        write_json(&dir.join(&m.initial_file), &e.initial)?;
        write_json(&dir.join(&m.graph_file), &e.graph)?;
        manifest.entries.push(m);
    }
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<(Manifest, Vec<DatasetEntry>)> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE), None)?;
    if manifest.count != manifest.entries.len() {
        return Err(Error::Parse {
            path: dir.join(MANIFEST_FILE),
            scene: None,
            message: format!("count {} but {} entries", manifest.count, manifest.entries.len()),
        });
    }
    let mut entries = Vec::with_capacity(manifest.count);
    for m in &manifest.entries {
        let target: Scene = read_json(&dir.join(&m.target_file), Some(m.id))?;
        let initial: Scene = read_json(&dir.join(&m.initial_file), Some(m.id))?;
        let graph: DependencyGraph = read_json(&dir.join(&m.graph_file), Some(m.id))?;
        if graph.n() != target.len() || initial.len() != target.len() {
            return Err(Error::Parse {
                path: dir.join(&m.graph_file),
                scene: Some(m.id),
                message: format!(
                    "size mismatch: target {}, initial {}, graph {}",
                    target.len(),
                    initial.len(),
                    graph.n()
                ),
            });
        }
        entries.push(DatasetEntry {
            seed: m.seed,
            target,
            initial,
            graph,
        });
    }
    Ok((manifest, entries))
}
