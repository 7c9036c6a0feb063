use std::path::Path;

use fed3r_core::baselines::{calibrate_temperature, run_lp, LpInit};
use fed3r_core::coupon::coupon_rounds;
use fed3r_core::federation::{run_fed3r, FederationConfig, RoundRecord, TrainingTrace};
use fed3r_core::io::{
    atomic_write, decode_feature_header, read_features, write_features, FEATURE_MAGIC,
};
use fed3r_core::partition::{
    partition_dirichlet, partition_single_class_split, read_manifest, write_manifest,
};
use fed3r_core::ridge::{decode_stats_header, STATS_MAGIC};
use fed3r_core::seed::derive_seed;
use fed3r_core::{gen_gaussian_mixture, FeatureDataset, MixtureSpec, PartitionManifest, RffConfig};
use serde_json::json;
use toml::{Table, Value};

use crate::config::{apply_override, load_table, resolve, set_path, RunAlgorithm, RunConfig};
use crate::{ConfigArgs, CouponArgs, Failure, GenArgs, InspectArgs, RunArgs};

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// Converts a core error, naming the file involved.
fn at(path: &Path) -> impl Fn(fed3r_core::Error) -> Failure + '_ {
    move |e| match Failure::from(e) {
        Failure::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
        Failure::Config(m) => Failure::Config(format!("{}: {m}", path.display())),
        Failure::Numerical(m) => Failure::Numerical(m),
    }
}

fn base_table(common: &ConfigArgs) -> Result<Table, Failure> {
    let mut table = load_table(common.config.as_deref())?;
    for spec in &common.overrides {
        apply_override(&mut table, spec)?;
    }
    if let Some(seed) = common.seed {
        set_path(&mut table, "seed", Value::Integer(seed as i64))?;
    }
    Ok(table)
}

fn set_opt<T: Into<Value>>(table: &mut Table, key: &str, v: Option<T>) -> Result<(), Failure> {
    match v {
        Some(v) => set_path(table, key, v.into()),
        None => Ok(()),
    }
}

fn int(v: Option<usize>) -> Option<i64> {
    v.map(|x| x as i64)
}

fn path_value(p: &Option<std::path::PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn synthetic(cfg: &RunConfig) -> Result<FeatureDataset, Failure> {
    Ok(gen_gaussian_mixture(&MixtureSpec {
        classes: cfg.data.classes,
        dim: cfg.data.dim,
        per_class: cfg.data.per_class,
        separation: cfg.data.separation,
        anisotropy: cfg.data.anisotropy,
        seed: cfg.seed,
    })?)
}

/// α = 0 means one class per client, `clients / C` clients per class.
fn partition(ds: &FeatureDataset, cfg: &RunConfig) -> Result<PartitionManifest, Failure> {
    let p = &cfg.partition;
    if p.alpha == 0.0 {
        let per_class = (p.clients / ds.classes()).max(1);
        Ok(partition_single_class_split(ds, per_class, cfg.seed)?)
    } else {
        Ok(partition_dirichlet(ds, p.clients, p.alpha, cfg.seed)?)
    }
}

pub fn gen(args: &GenArgs) -> Result<(), Failure> {
    let mut table = base_table(&args.common)?;
    set_opt(&mut table, "data.classes", int(args.classes))?;
    set_opt(&mut table, "data.dim", int(args.dim))?;
    set_opt(&mut table, "data.per_class", int(args.per_class))?;
    set_opt(&mut table, "data.separation", args.separation)?;
    set_opt(&mut table, "data.anisotropy", args.anisotropy)?;
    set_opt(&mut table, "partition.clients", int(args.clients))?;
    set_opt(&mut table, "partition.alpha", args.alpha)?;
    set_path(
        &mut table,
        "data.test_fraction",
        Value::Float(args.test_fraction.unwrap_or(0.0)),
    )?;
    let cfg = resolve(table)?;

    let ds = synthetic(&cfg)?;
    let (train, test) = if cfg.data.test_fraction > 0.0 {
        let (a, b) = ds.split(cfg.data.test_fraction, cfg.seed)?;
        (a, Some(b))
    } else {
        (ds, None)
    };
    let manifest = partition(&train, &cfg)?;

    std::fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    write_features(&args.out.join("features.f3rd"), &train)?;
    if let Some(test) = &test {
        write_features(&args.out.join("test.f3rd"), test)?;
    }
    write_manifest(&args.out.join("manifest.json"), &manifest)?;
    log::info!(
        "wrote {} training samples over {} clients to {}",
        train.len(),
        manifest.num_clients(),
        args.out.display()
    );
    Ok(())
}

struct Loaded {
    train: FeatureDataset,
    test: Option<FeatureDataset>,
    manifest: PartitionManifest,
}

fn load_inputs(cfg: &RunConfig) -> Result<Loaded, Failure> {
    let (train, test) = match &cfg.data.features {
        Some(path) => {
            let train = read_features(path).map_err(at(path))?;
            let test = match cfg.data.test_features.as_deref() {
                Some(p) => Some(read_features(p).map_err(at(p))?),
                None => None,
            };
            (train, test)
        }
        None => {
            let ds = synthetic(cfg)?;
            if cfg.data.test_fraction > 0.0 {
                let (a, b) = ds.split(cfg.data.test_fraction, cfg.seed)?;
                (a, Some(b))
            } else {
                (ds, None)
            }
        }
    };
    let manifest = match &cfg.data.manifest {
        Some(path) => {
            let m = read_manifest(path).map_err(at(path))?;
            if m.num_samples != train.len() {
                return Err(Failure::Io(format!(
                    "{}: manifest covers {} samples but the feature file has {}",
                    path.display(),
                    m.num_samples,
                    train.len()
                )));
            }
            m
        }
        None => partition(&train, cfg)?,
    };
    if let Some(t) = &test {
        if t.dim() != train.dim() || t.classes() != train.classes() {
            return Err(Failure::Config(format!(
                "test set shape d={} C={} differs from training d={} C={}",
                t.dim(),
                t.classes(),
                train.dim(),
                train.classes()
            )));
        }
    }
    Ok(Loaded {
        train,
        test,
        manifest,
    })
}

/// Appends `next` after `first`, renumbering rounds and carrying cumulative
/// counters forward.
fn chain_traces(first: &TrainingTrace, next: &TrainingTrace, clients: usize) -> TrainingTrace {
    let mut out = first.clone();
    let offset = first.records.len();
    let base = first.records.last().map(|r| r.cost).unwrap_or_default();
    let mut seen = vec![false; clients];
    for r in &first.records {
        for &k in &r.new_clients {
            seen[k] = true;
        }
    }
    let mut distinct = seen.iter().filter(|&&s| s).count();
    for r in &next.records {
        let new_clients: Vec<usize> = r.sampled.iter().copied().filter(|&k| !seen[k]).collect();
        for &k in &new_clients {
            seen[k] = true;
        }
        distinct += new_clients.len();
        let mut cost = r.cost;
        cost.down_bytes += base.down_bytes;
        cost.up_bytes += base.up_bytes;
        cost.avg_client_flops += base.avg_client_flops;
        out.records.push(RoundRecord {
            round: r.round + offset,
            sampled: r.sampled.clone(),
            new_clients,
            distinct_clients: distinct,
            accuracy: r.accuracy,
            cost,
        });
    }
    out
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    let mut table = base_table(&args.common)?;
    set_opt(&mut table, "output_dir", path_value(&args.out))?;
    set_opt(&mut table, "algorithm", args.algorithm.clone())?;
    set_opt(&mut table, "data.features", path_value(&args.features))?;
    set_opt(
        &mut table,
        "data.test_features",
        path_value(&args.test_features),
    )?;
    set_opt(&mut table, "data.manifest", path_value(&args.manifest))?;
    set_opt(
        &mut table,
        "federation.clients_per_round",
        int(args.clients_per_round),
    )?;
    set_opt(&mut table, "federation.rounds_max", int(args.rounds_max))?;
    set_opt(&mut table, "federation.lambda", args.lambda)?;
    let cfg = resolve(table)?;

    let Loaded {
        train,
        test,
        manifest,
    } = load_inputs(&cfg)?;
    let k = manifest.num_clients();
    let rff_seed = cfg.rff.seed.unwrap_or_else(|| derive_seed(cfg.seed, "rff"));
    let rff = (cfg.algorithm == RunAlgorithm::Fed3rRf).then_some(RffConfig {
        dim: cfg.rff.dim,
        sigma: cfg.rff.sigma,
        seed: rff_seed,
    });
    let fed = FederationConfig {
        num_clients: k,
        clients_per_round: cfg.federation.clients_per_round,
        sampling: cfg.federation.sampling,
        rounds_max: cfg.federation.rounds_max,
        lambda: cfg.federation.lambda,
        rff,
        seed: cfg.seed,
        eval_every: cfg.federation.eval_every,
        cost: cfg.cost.to_params(cfg.lp.local_epochs),
    };
    let eval = test.as_ref();

    let mut fed3r_rounds = 0usize;
    let mut temperature = None;
    let (trace, classifier, stats) = match cfg.algorithm {
        RunAlgorithm::Fed3r | RunAlgorithm::Fed3rRf => {
            let out = run_fed3r(&train, &manifest, &fed, eval)?;
            fed3r_rounds = out.trace.len();
            (out.trace, out.classifier, Some(out.statistics))
        }
        RunAlgorithm::FedavgLp | RunAlgorithm::FedavgmLp => {
            let lp = cfg.lp.to_lp_config(false);
            temperature = Some(lp.temperature);
            let out = run_lp(&train, &manifest, &fed, &lp, LpInit::Random, eval)?;
            (out.trace, out.classifier, None)
        }
        RunAlgorithm::Fed3rFtlp => {
            let init = run_fed3r(&train, &manifest, &fed, eval)?;
            fed3r_rounds = init.trace.len();
            let mut lp = cfg.lp.to_lp_config(true);
            if cfg.lp.calibrate_temperature {
                lp.temperature = calibrate_temperature(
                    init.classifier.weights(),
                    &train,
                    &cfg.lp.temperature_grid,
                )?;
            }
            temperature = Some(lp.temperature);
            let out = run_lp(
                &train,
                &manifest,
                &fed,
                &lp,
                LpInit::From(init.classifier),
                eval,
            )?;
            let trace = chain_traces(&init.trace, &out.trace, k);
            (trace, out.classifier, Some(init.statistics))
        }
    };

    let meta = json!({
        "config": cfg,
        "resolved": {
            "num_clients": k,
            "train_samples": train.len(),
            "test_samples": test.as_ref().map(|t| t.len()),
            "evaluated_on": if test.is_some() { "test" } else { "train" },
            "dim": train.dim(),
            "classes": train.classes(),
            "rff_seed": rff.map(|r| r.seed),
            "temperature": temperature,
            "fed3r_rounds": fed3r_rounds,
            "rounds": trace.len(),
            "final_accuracy": trace.final_accuracy(),
            "zero_columns": classifier.zero_columns(),
        },
        "design_flags": {
            "label_encoding": "one_hot_0_1",
            "column_normalization": true,
            "fold_order": "ascending_client_id",
            "lp_sampling": "with_replacement",
            "repeat_visits_charged": true,
            "include_rff_projection_flops": cfg.cost.include_rff_projection,
            "ship_rff_map": cfg.cost.ship_rff_map,
            "bootstrap_extractor": cfg.cost.bootstrap_extractor,
            "weight_decay_on_fed3r_init": true,
            "sub_seed_derivation": "seed xor fnv1a64(role)",
        },
        "versions": {
            "fed3r": env!("CARGO_PKG_VERSION"),
            "feature_format": fed3r_core::io::FEATURE_VERSION,
            "statistics_format": fed3r_core::ridge::STATS_VERSION,
        },
    });

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    atomic_write(&dir.join("metrics.csv"), trace.to_csv().as_bytes())?;
    let clf_json =
        serde_json::to_vec_pretty(&classifier).map_err(|e| Failure::Io(e.to_string()))?;
    atomic_write(&dir.join("classifier.json"), &clf_json)?;
    if let Some(stats) = &stats {
        stats.write(&dir.join("statistics.f3rs"))?;
    }
    let meta_json = serde_json::to_vec_pretty(&meta).map_err(|e| Failure::Io(e.to_string()))?;
    atomic_write(&dir.join("run_meta.json"), &meta_json)?;

    match trace.final_accuracy() {
        Some(acc) => println!("{} rounds, final accuracy {acc:.4}", trace.len()),
        None => println!("{} rounds", trace.len()),
    }
    Ok(())
}

pub fn coupon(args: &CouponArgs) -> Result<(), Failure> {
    let result = coupon_rounds(
        args.clients,
        args.per_round,
        &args.fractions,
        args.trials,
        args.seed,
    )?;
    let csv = result.to_csv();
    match &args.out {
        Some(path) => atomic_write(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn inspect(args: &InspectArgs) -> Result<(), Failure> {
    let path = &args.path;
    let bytes = std::fs::read(path).map_err(|e| io_failure(path, e))?;
    let size = bytes.len() as u64;
    if bytes.starts_with(&FEATURE_MAGIC) {
        let h = decode_feature_header(&bytes).map_err(at(path))?;
        println!("format: features (F3RD)");
        println!("version: {}", h.version);
        println!("samples: {}", h.n);
        println!("dim: {}", h.dim);
        println!("classes: {}", h.classes);
        println!("file_bytes: {size} (expected {})", 24 + h.payload_len());
    } else if bytes.starts_with(&STATS_MAGIC) {
        let h = decode_stats_header(&bytes).map_err(at(path))?;
        let (q, c) = (u64::from(h.dim), u64::from(h.classes));
        println!("format: ridge statistics (F3RS)");
        println!("version: {}", h.version);
        println!("dim: {}", h.dim);
        println!("classes: {}", h.classes);
        println!("samples: {}", h.count);
        println!(
            "file_bytes: {size} (expected {})",
            24 + (q * (q + 1) / 2 + q * c) * 8
        );
    } else if bytes.first() == Some(&b'{') {
        let m = read_manifest(path).map_err(at(path))?;
        let sizes = m.client_sizes();
        println!("format: partition manifest");
        println!("scheme: {}", m.scheme);
        println!("alpha: {}", m.alpha);
        println!("seed: {}", m.seed);
        println!("samples: {}", m.num_samples);
        println!("clients: {}", m.num_clients());
        println!(
            "client_sizes: min {} max {}",
            sizes.iter().min().unwrap_or(&0),
            sizes.iter().max().unwrap_or(&0)
        );
    } else {
        return Err(io_failure(
            path,
            "not a feature, statistics or manifest file",
        ));
    }
    Ok(())
}
