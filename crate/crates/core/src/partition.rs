//! Client partitions of a dataset and their JSON manifest.
//!
//! A manifest always describes a disjoint cover of `0..num_samples` by
//! non-empty, sorted per-client index lists.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::seed::rng_for;

pub const SCHEME_DIRICHLET: &str = "dirichlet";
pub const SCHEME_SINGLE_CLASS: &str = "single_class";

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionManifest {
    pub scheme: String,
    /// Dirichlet concentration; 0 for the single-class scheme.
    pub alpha: f64,
    pub seed: u64,
    pub num_samples: usize,
    clients: Vec<Vec<usize>>,
}

/// Serialized layout: `{scheme, alpha, seed, num_samples, num_clients, clients: {"0": [...], ...}}`.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    scheme: String,
    alpha: f64,
    seed: u64,
    num_samples: usize,
    num_clients: usize,
    clients: BTreeMap<String, Vec<usize>>,
}

impl PartitionManifest {
    pub fn new(
        scheme: impl Into<String>,
        alpha: f64,
        seed: u64,
        num_samples: usize,
        mut clients: Vec<Vec<usize>>,
    ) -> Result<Self> {
        for c in &mut clients {
            c.sort_unstable();
        }
        let m = Self {
            scheme: scheme.into(),
            alpha,
            seed,
            num_samples,
            clients,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn client(&self, k: usize) -> &[usize] {
        &self.clients[k]
    }

    pub fn clients(&self) -> &[Vec<usize>] {
        &self.clients
    }

    pub fn client_sizes(&self) -> Vec<usize> {
        self.clients.iter().map(Vec::len).collect()
    }

    /// Checks disjointness, full coverage and non-empty clients.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.num_samples];
        for (k, idx) in self.clients.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::InvalidManifest(format!("client {k} is empty")));
            }
            for &i in idx {
                match seen.get_mut(i) {
                    None => {
                        return Err(Error::InvalidManifest(format!(
                            "client {k} references sample {i} beyond {}",
                            self.num_samples
                        )))
                    }
                    Some(true) => {
                        return Err(Error::InvalidManifest(format!(
                            "sample {i} assigned more than once"
                        )))
                    }
                    Some(s) => *s = true,
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidManifest(format!(
                "sample {missing} is not assigned to any client"
            )));
        }
        Ok(())
    }

    /// Per-client class histograms.
    pub fn label_histograms(&self, ds: &FeatureDataset) -> Vec<Vec<usize>> {
        self.clients
            .iter()
            .map(|idx| {
                let mut h = vec![0; ds.classes()];
                for &i in idx {
                    h[ds.labels()[i]] += 1;
                }
                h
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ManifestFile {
            scheme: self.scheme.clone(),
            alpha: self.alpha,
            seed: self.seed,
            num_samples: self.num_samples,
            num_clients: self.clients.len(),
            clients: self
                .clients
                .iter()
                .enumerate()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ManifestFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidManifest(e.to_string()))?;
        let mut clients = vec![None; file.num_clients];
        for (key, idx) in file.clients {
            let k: usize = key.parse().map_err(|_| {
                Error::InvalidManifest(format!("client key `{key}` is not an integer"))
            })?;
            let slot = clients.get_mut(k).ok_or_else(|| {
                Error::InvalidManifest(format!(
                    "client key {k} out of range for {} clients",
                    file.num_clients
                ))
            })?;
            *slot = Some(idx);
        }
        let clients = clients
            .into_iter()
            .enumerate()
            .map(|(k, c)| c.ok_or_else(|| Error::InvalidManifest(format!("missing client {k}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            file.scheme,
            file.alpha,
            file.seed,
            file.num_samples,
            clients,
        )
    }
}

pub fn write_manifest(path: &Path, m: &PartitionManifest) -> Result<()> {
    atomic_write(path, m.to_json()?.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<PartitionManifest> {
    PartitionManifest::from_json(&std::fs::read_to_string(path)?)
}

fn indices_by_class(ds: &FeatureDataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); ds.classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

/// Splits `total` into integer parts proportional to `weights` (largest remainder).
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        let base = total / weights.len();
        let extra = total % weights.len();
        return (0..weights.len())
            .map(|i| base + usize::from(i < extra))
            .collect();
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn dirichlet_sample<R: Rng>(rng: &mut R, alpha: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let mut v: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = v.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        // every gamma draw underflowed (tiny alpha): put all mass on one class
        v.iter_mut().for_each(|x| *x = 0.0);
        v[rng.random_range(0..dim)] = 1.0;
    }
    v
}

/// Label-skewed partition: client `k` draws class proportions
/// `p_k ~ Dirichlet(α·1_C)` and each class's samples are dealt out to clients
/// in proportion to their `p_k[c]`. Client sizes are left unequal. Clients that
/// end up empty take one sample from the currently largest client.
pub fn partition_dirichlet(
    ds: &FeatureDataset,
    num_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<PartitionManifest> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParams(format!(
            "Dirichlet concentration must be positive, got {alpha}"
        )));
    }
    if num_clients == 0 || num_clients > ds.len() {
        return Err(Error::TooManyClients {
            clients: num_clients,
            samples: ds.len(),
        });
    }
    let mut rng = rng_for(seed, "partition/dirichlet");
    let c = ds.classes();
    let proportions: Vec<Vec<f64>> = (0..num_clients)
        .map(|_| dirichlet_sample(&mut rng, alpha, c))
        .collect();

    let mut clients = vec![Vec::new(); num_clients];
    for (class, mut idx) in indices_by_class(ds).into_iter().enumerate() {
        idx.shuffle(&mut rng);
        let weights: Vec<f64> = proportions.iter().map(|p| p[class]).collect();
        let counts = apportion(idx.len(), &weights);
        let mut rest = idx.as_slice();
        for (k, n) in counts.into_iter().enumerate() {
            let (take, tail) = rest.split_at(n);
            clients[k].extend_from_slice(take);
            rest = tail;
        }
    }

    // repair pass
    for k in 0..num_clients {
        if clients[k].is_empty() {
            let donor = (0..num_clients)
                .max_by_key(|&j| (clients[j].len(), std::cmp::Reverse(j)))
                .expect("at least one client");
            let pos = rng.random_range(0..clients[donor].len());
            let moved = clients[donor].swap_remove(pos);
            clients[k].push(moved);
        }
    }
    PartitionManifest::new(SCHEME_DIRICHLET, alpha, seed, ds.len(), clients)
}

/// One label per client: every class becomes `clients_per_class` clients that
/// split the class's samples evenly. Client ids are shuffled by `seed`.
pub fn partition_single_class_split(
    ds: &FeatureDataset,
    clients_per_class: usize,
    seed: u64,
) -> Result<PartitionManifest> {
    if clients_per_class == 0 {
        return Err(Error::InvalidParams(
            "clients_per_class must be >= 1".into(),
        ));
    }
    let mut rng = rng_for(seed, "partition/single_class");
    let mut clients = Vec::new();
    for (class, mut idx) in indices_by_class(ds).into_iter().enumerate() {
        if idx.len() < clients_per_class {
            return Err(Error::EmptyClass(class));
        }
        idx.shuffle(&mut rng);
        let counts = apportion(idx.len(), &vec![1.0; clients_per_class]);
        let mut rest = idx.as_slice();
        for n in counts {
            let (take, tail) = rest.split_at(n);
            clients.push(take.to_vec());
            rest = tail;
        }
    }
    clients.shuffle(&mut rng);
    PartitionManifest::new(SCHEME_SINGLE_CLASS, 0.0, seed, ds.len(), clients)
}

pub fn partition_single_class(ds: &FeatureDataset, seed: u64) -> Result<PartitionManifest> {
    partition_single_class_split(ds, 1, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_gaussian_mixture, MixtureSpec};

    fn data(classes: usize, per_class: usize) -> FeatureDataset {
        gen_gaussian_mixture(&MixtureSpec {
            classes,
            dim: 4,
            per_class,
            separation: 1.0,
            anisotropy: 1.0,
            seed: 5,
        })
        .unwrap()
    }

    fn entropy(hist: &[usize]) -> f64 {
        let n: usize = hist.iter().sum();
        hist.iter()
            .filter(|&&h| h > 0)
            .map(|&h| {
                let p = h as f64 / n as f64;
                -p * p.ln()
            })
            .sum()
    }

    #[test]
    fn apportion_preserves_totals() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(apportion(7, &[0.0, 0.0]), vec![4, 3]);
        assert_eq!(apportion(5, &[0.5, 0.0, 0.5]).iter().sum::<usize>(), 5);
    }

    #[test]
    fn near_iid_partition_tracks_global_histogram() {
        let ds = data(10, 200);
        let m = partition_dirichlet(&ds, 10, 100.0, 1).unwrap();
        let global: Vec<f64> = ds
            .class_counts()
            .iter()
            .map(|&c| c as f64 / ds.len() as f64)
            .collect();
        for h in m.label_histograms(&ds) {
            let n: usize = h.iter().sum();
            assert!(n >= 100);
            let tv: f64 = h
                .iter()
                .zip(&global)
                .map(|(&c, g)| (c as f64 / n as f64 - g).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv <= 0.2, "tv {tv}");
        }
    }

    #[test]
    fn single_client_owns_everything() {
        let ds = data(3, 10);
        let m = partition_dirichlet(&ds, 1, 0.5, 2).unwrap();
        assert_eq!(m.client(0), (0..30).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn dirichlet_is_deterministic() {
        let ds = data(5, 40);
        assert_eq!(
            partition_dirichlet(&ds, 12, 0.3, 9).unwrap(),
            partition_dirichlet(&ds, 12, 0.3, 9).unwrap()
        );
    }

    #[test]
    fn extreme_skew_still_gives_nonempty_clients() {
        let ds = data(4, 10);
        let m = partition_dirichlet(&ds, 40, 0.01, 3).unwrap();
        assert_eq!(m.num_clients(), 40);
        assert!(m.clients().iter().all(|c| c.len() == 1));
    }

    #[test]
    fn too_many_clients_and_bad_alpha() {
        let ds = data(2, 3);
        assert!(matches!(
            partition_dirichlet(&ds, 7, 1.0, 0),
            Err(Error::TooManyClients {
                clients: 7,
                samples: 6
            })
        ));
        assert!(partition_dirichlet(&ds, 2, 0.0, 0).is_err());
    }

    #[test]
    fn heterogeneity_grows_as_alpha_shrinks() {
        let ds = data(10, 100);
        let mean_entropy = |alpha: f64| {
            let mut total = 0.0;
            for seed in 0..20 {
                let m = partition_dirichlet(&ds, 20, alpha, seed).unwrap();
                let hs = m.label_histograms(&ds);
                total += hs.iter().map(|h| entropy(h)).sum::<f64>() / hs.len() as f64;
            }
            total / 20.0
        };
        assert!(mean_entropy(0.1) < mean_entropy(10.0));
    }

    #[test]
    fn single_class_clients() {
        let ds = data(10, 20);
        let m = partition_single_class(&ds, 4).unwrap();
        assert_eq!(m.num_clients(), 10);
        for h in m.label_histograms(&ds) {
            assert_eq!(h.iter().filter(|&&c| c > 0).count(), 1);
        }
        assert_eq!(m.client_sizes().iter().sum::<usize>(), ds.len());
        assert_eq!(m.scheme, SCHEME_SINGLE_CLASS);

        let split = partition_single_class_split(&ds, 3, 4).unwrap();
        assert_eq!(split.num_clients(), 30);
    }

    #[test]
    fn single_class_requires_every_class() {
        let ds =
            FeatureDataset::new(crate::linalg::DenseMatrix::zeros(2, 2), vec![0, 0], 2).unwrap();
        assert!(matches!(
            partition_single_class(&ds, 0),
            Err(Error::EmptyClass(1))
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let ds = data(4, 25);
        let m = partition_dirichlet(&ds, 6, 0.5, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        write_manifest(&path, &m).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);
    }

    #[test]
    fn manifest_validation_on_read() {
        let overlapping = r#"{"scheme":"x","alpha":1.0,"seed":0,"num_samples":3,"num_clients":2,
            "clients":{"0":[0,1],"1":[1,2]}}"#;
        assert!(matches!(
            PartitionManifest::from_json(overlapping),
            Err(Error::InvalidManifest(_))
        ));
        let missing = r#"{"scheme":"x","alpha":1.0,"seed":0,"num_samples":3,"num_clients":2,
            "clients":{"0":[0,1,2]}}"#;
        assert!(matches!(
            PartitionManifest::from_json(missing),
            Err(Error::InvalidManifest(_))
        ));
        let uncovered = r#"{"scheme":"x","alpha":1.0,"seed":0,"num_samples":4,"num_clients":1,
            "clients":{"0":[0,1,2]}}"#;
        assert!(PartitionManifest::from_json(uncovered).is_err());
        assert!(PartitionManifest::from_json("not json").is_err());
    }
}
