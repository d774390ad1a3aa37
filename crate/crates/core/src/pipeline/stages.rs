use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{NetworkSpec, RunConfig};
use super::export::{label_streamline, ui_bundle, UiBundle};
use super::manifest::{CorpusEntry, FileEntry, Manifest, NetworkEntry, ReportEntry};
use crate::community::{
    markov_times, sweep_markov_time, write_sweep_csv, CommunityGraph, Partition, SweepPoint,
};
use crate::density::{density_error, write_csv, DensityReport};
use crate::error::{Error, Result};
use crate::flowfield::{
    generate_corpus, read_sequences, stratified_seeds, to_block_sequence, trace_streamline,
    write_sequences, BlockGrid, BlockSequence, CorpusCounts, TraceParams, VectorField,
};
use crate::hon::{Network, Provenance};
use crate::registry::{BuildInput, BuilderRegistry};

pub struct Corpus {
    pub train: Vec<BlockSequence>,
    pub validation: Vec<BlockSequence>,
    pub test: Vec<BlockSequence>,
    pub grid: BlockGrid,
    pub hash: String,
}

/// A community sweep of one network.
pub struct SweepSummary {
    pub network: String,
    pub points: Vec<SweepPoint>,
}

/// Runs pipeline stages against one output directory. Every stage reads
/// its inputs from disk and records what it wrote in the manifest.
pub struct Pipeline {
    pub config: RunConfig,
    pub out: PathBuf,
    pub registry: BuilderRegistry,
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::file(dir, e)),
        None => Ok(()),
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

fn rel(parts: &[&str]) -> PathBuf {
    parts.iter().collect()
}

impl Pipeline {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            config,
            out: out.into(),
            registry: BuilderRegistry::with_defaults(),
        })
    }

    fn field(&self) -> Result<Box<dyn VectorField>> {
        self.config.field.load(Path::new("."))
    }

    fn trace_params(&self, field: &dyn VectorField, grid: &BlockGrid) -> TraceParams {
        let c = &self.config.corpus;
        TraceParams::new(field, c.step_fraction * grid.min_block_edge(), c.max_steps)
    }

    fn counts(&self) -> CorpusCounts {
        let c = &self.config.corpus;
        CorpusCounts {
            train: c.train,
            validation: c.validation,
            test: c.test,
        }
    }

    /// Traces the particles and writes the three splits.
    pub fn trace(&self) -> Result<Manifest> {
        fs::create_dir_all(&self.out).map_err(|e| Error::file(&self.out, e))?;
        let field = self.field()?;
        let grid = self.config.grid(field.as_ref())?;
        let params = self.trace_params(field.as_ref(), &grid);
        let seed = self.config.corpus.seed;
        let corpus = generate_corpus(field.as_ref(), &grid, self.counts(), &params, seed)?;
        let mut files = Vec::new();
        for (name, seqs) in [
            ("train", &corpus.train),
            ("validation", &corpus.validation),
            ("test", &corpus.test),
        ] {
            let r = rel(&["corpus", &format!("{name}.txt")]);
            let path = self.out.join(&r);
            ensure_parent(&path)?;
            write_sequences(&path, seqs)?;
            files.push(FileEntry::of(&self.out, &r)?);
        }
        let key = self.config.corpus_key();
        let hash = CorpusEntry::chain(&key, [&files[0], &files[1], &files[2]]);
        let mut manifest = Manifest::load_or_default(&self.out)?;
        if manifest.corpus.as_ref().map(|c| &c.hash) != Some(&hash) {
            // everything downstream belongs to a different corpus
            manifest = Manifest::default();
        }
        let mut files = files.into_iter();
        manifest.rng_seed = seed;
        manifest.corpus = Some(CorpusEntry {
            config: key,
            grid,
            train: files.next().unwrap(),
            validation: files.next().unwrap(),
            test: files.next().unwrap(),
            hash,
        });
        manifest.save(&self.out)?;
        Ok(manifest)
    }

    /// Reads the recorded corpus after checking it against the manifest.
    pub fn corpus(&self) -> Result<(Manifest, Corpus)> {
        let manifest = Manifest::load(&self.out)?;
        let entry = manifest.corpus()?;
        let mut splits = Vec::new();
        for f in [&entry.train, &entry.validation, &entry.test] {
            f.verify(&self.out)?;
            splits.push(read_sequences(&self.out.join(&f.path))?);
        }
        let test = splits.pop().unwrap();
        let validation = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        let corpus = Corpus {
            train,
            validation,
            test,
            grid: entry.grid,
            hash: entry.hash.clone(),
        };
        Ok((manifest, corpus))
    }

    /// Builds one network and writes its bundle and training log.
    pub fn build(&self, spec: &NetworkSpec) -> Result<String> {
        let builder = self.registry.get(&spec.kind)?;
        let (_, corpus) = self.corpus()?;
        let baseline = self.config.networks.baseline();
        let input = BuildInput {
            train: &corpus.train,
            validation: &corpus.validation,
            block_count: corpus.grid.block_count(),
            order: spec.order.unwrap_or(1),
            baseline: &baseline,
            train_config: &self.config.train,
        };
        let mut out = builder.build(&input)?;
        out.network.provenance = Provenance {
            corpus_hash: corpus.hash.clone(),
            config_hash: self.config.network_key(),
            grid: Some(corpus.grid),
        };
        let slug = out.network.slug();
        let bundle = rel(&["networks", &format!("{slug}.json")]);
        ensure_parent(&self.out.join(&bundle))?;
        out.network.save(&self.out.join(&bundle))?;
        let log = if out.log.is_empty() {
            None
        } else {
            let r = rel(&["networks", &format!("{slug}.log.jsonl")]);
            let mut text = Vec::new();
            for rec in &out.log {
                serde_json::to_writer(&mut text, rec)?;
                text.push(b'\n');
            }
            write_file(&self.out.join(&r), text)?;
            Some(FileEntry::of(&self.out, &r)?)
        };
        // reread so concurrent edits to other entries are kept
        let mut manifest = Manifest::load(&self.out)?;
        manifest.networks.insert(
            slug.clone(),
            NetworkEntry {
                spec: NetworkSpec::new(
                    builder.name(),
                    spec.order.filter(|_| builder.takes_order()),
                ),
                bundle: FileEntry::of(&self.out, &bundle)?,
                log,
                parent: corpus.hash,
            },
        );
        manifest.save(&self.out)?;
        Ok(slug)
    }

    pub fn build_all(&self) -> Result<Vec<String>> {
        self.config
            .networks
            .build
            .iter()
            .map(|s| self.build(s))
            .collect()
    }

    fn canonical(&self, spec: &NetworkSpec) -> Result<NetworkSpec> {
        let b = self.registry.get(&spec.kind)?;
        Ok(NetworkSpec::new(
            b.name(),
            spec.order.filter(|_| b.takes_order()),
        ))
    }

    /// Slugs of the selected networks, or of every recorded one.
    fn select(&self, manifest: &Manifest, specs: Option<&[NetworkSpec]>) -> Result<Vec<String>> {
        match specs {
            None => Ok(manifest.networks.keys().cloned().collect()),
            Some(specs) => specs
                .iter()
                .map(|s| {
                    let c = self.canonical(s)?;
                    manifest.find(&c).map(str::to_string).ok_or_else(|| {
                        Error::Provenance(format!(
                            "network {}{} has not been built",
                            c.kind,
                            c.order.map(|k| k.to_string()).unwrap_or_default()
                        ))
                    })
                })
                .collect(),
        }
    }

    /// Loads a recorded bundle, refusing it unless it was built from the
    /// corpus on disk.
    pub fn load_network(&self, manifest: &Manifest, slug: &str) -> Result<Network> {
        let corpus = manifest.corpus()?;
        let entry = manifest
            .networks
            .get(slug)
            .ok_or_else(|| Error::Provenance(format!("network {slug} is not recorded")))?;
        entry.bundle.verify(&self.out)?;
        let net = Network::load(&self.out.join(&entry.bundle.path))?;
        if net.provenance.corpus_hash != corpus.hash || entry.parent != corpus.hash {
            return Err(Error::Provenance(format!(
                "network {slug} was built from a different corpus"
            )));
        }
        if net.provenance.grid != Some(corpus.grid) || net.block_count != corpus.grid.block_count()
        {
            return Err(Error::Provenance(format!(
                "network {slug} uses a different block grid than the corpus"
            )));
        }
        Ok(net)
    }

    fn record_reports(&self, entries: Vec<(PathBuf, String)>) -> Result<()> {
        let mut manifest = Manifest::load(&self.out)?;
        for (r, parent) in entries {
            manifest.reports.insert(
                r.to_string_lossy().replace('\\', "/"),
                ReportEntry {
                    file: FileEntry::of(&self.out, &r)?,
                    parent,
                },
            );
        }
        manifest.save(&self.out)
    }

    pub fn eval_density(&self, specs: Option<&[NetworkSpec]>) -> Result<Vec<DensityReport>> {
        let (manifest, corpus) = self.corpus()?;
        let slugs = self.select(&manifest, specs)?;
        let e = &self.config.eval;
        let reports = slugs
            .par_iter()
            .map(|slug| {
                let net = self.load_network(&manifest, slug)?;
                density_error(
                    &net,
                    &corpus.test,
                    e.horizon,
                    e.epsilon,
                    e.assignment,
                    "test",
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut written = Vec::new();
        for (slug, report) in slugs.iter().zip(&reports) {
            let r = rel(&["reports", "density", &format!("{slug}.json")]);
            write_file(
                &self.out.join(&r),
                serde_json::to_string_pretty(report)? + "\n",
            )?;
            written.push((r, manifest.networks[slug].bundle.sha256.clone()));
        }
        self.record_reports(written)?;
        // the CSV covers every density report on record
        let manifest = Manifest::load(&self.out)?;
        let mut all = Vec::new();
        for slug in manifest.networks.keys() {
            let p = self
                .out
                .join(rel(&["reports", "density", &format!("{slug}.json")]));
            if manifest
                .reports
                .contains_key(&format!("reports/density/{slug}.json"))
            {
                let text = fs::read_to_string(&p).map_err(|e| Error::file(&p, e))?;
                all.push(serde_json::from_str::<DensityReport>(&text)?);
            }
        }
        let csv = rel(&["reports", "density.csv"]);
        ensure_parent(&self.out.join(&csv))?;
        write_csv(&self.out.join(&csv), &all)?;
        self.record_reports(vec![(csv, manifest.corpus()?.hash.clone())])?;
        Ok(reports)
    }

    pub fn eval_communities(&self, specs: Option<&[NetworkSpec]>) -> Result<Vec<SweepSummary>> {
        let (manifest, corpus) = self.corpus()?;
        let slugs = self.select(&manifest, specs)?;
        let s = &self.config.sweep;
        let times = markov_times(s.min_markov_time, s.max_markov_time, s.step);
        let sweeps = slugs
            .par_iter()
            .map(|slug| {
                let net = self.load_network(&manifest, slug)?;
                let r =
                    sweep_markov_time(&net, &times, s.teleport, &corpus.validation, &corpus.test)?;
                Ok((net.label(), r))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut written = Vec::new();
        let mut summaries = Vec::new();
        for (slug, (label, results)) in slugs.iter().zip(sweeps) {
            let parent = manifest.networks[slug].bundle.sha256.clone();
            let points: Vec<SweepPoint> = results.iter().map(|r| r.0.clone()).collect();
            let csv = rel(&["reports", "communities", &format!("{slug}.csv")]);
            ensure_parent(&self.out.join(&csv))?;
            write_sweep_csv(&self.out.join(&csv), &points)?;
            written.push((csv, parent.clone()));
            let json = rel(&["reports", "communities", &format!("{slug}.json")]);
            write_file(
                &self.out.join(&json),
                serde_json::to_string_pretty(&points)? + "\n",
            )?;
            written.push((json, parent.clone()));
            for (p, partition) in results.iter().filter(|r| r.0.pareto) {
                let r = rel(&[
                    "reports",
                    "communities",
                    slug,
                    &format!("mt_{:.1}.json", p.markov_time),
                ]);
                write_file(
                    &self.out.join(&r),
                    serde_json::to_string_pretty(partition)? + "\n",
                )?;
                written.push((r, parent.clone()));
            }
            summaries.push(SweepSummary {
                network: label,
                points,
            });
        }
        self.record_reports(written)?;
        Ok(summaries)
    }

    /// Writes the exploration bundle for one network, re-tracing the first
    /// test particles for their raw points.
    pub fn export_ui(
        &self,
        spec: Option<&NetworkSpec>,
        partition: Option<&Path>,
    ) -> Result<UiBundle> {
        let (manifest, corpus) = self.corpus()?;
        let spec = spec.unwrap_or(&self.config.export.network);
        let slug = self
            .select(&manifest, Some(std::slice::from_ref(spec)))?
            .remove(0);
        let net = self.load_network(&manifest, &slug)?;
        let field = self.field()?;
        let grid = corpus.grid;
        if self.config.grid(field.as_ref())? != grid {
            return Err(Error::Provenance(
                "configured field and blocks do not match the corpus".into(),
            ));
        }
        let params = self.trace_params(field.as_ref(), &grid);
        let counts = self.counts();
        let seeds = stratified_seeds(&field.bounds(), counts.total(), manifest.rng_seed);
        let first_test = counts.train + counts.validation;
        let n = self.config.export.streamlines.min(counts.test);
        let max_points = self.config.export.max_points;
        let lines = (0..n)
            .into_par_iter()
            .map(|i| {
                let line = trace_streamline(field.as_ref(), seeds[first_test + i], &params)?;
                if to_block_sequence(&line, &grid) != corpus.test[i] {
                    return Err(Error::Provenance(format!(
                        "re-traced test particle {i} does not match the corpus"
                    )));
                }
                label_streamline(i, &line, &grid, &net, max_points)
            })
            .collect::<Result<Vec<_>>>()?;
        let partition = match (partition, self.config.export.markov_time) {
            (Some(p), _) => Some(Partition::load(p)?),
            (None, Some(mt)) => {
                Some(CommunityGraph::new(&net, self.config.sweep.teleport)?.detect(mt))
            }
            (None, None) => None,
        };
        let bundle = ui_bundle(&net, grid, lines, partition)?;
        let r = rel(&["ui", "bundle.json"]);
        let mut text = Vec::new();
        serde_json::to_writer(&mut text, &bundle)?;
        text.write_all(b"\n")?;
        write_file(&self.out.join(&r), text)?;
        let mut manifest = Manifest::load(&self.out)?;
        manifest.ui = Some(ReportEntry {
            file: FileEntry::of(&self.out, &r)?,
            parent: manifest.networks[&slug].bundle.sha256.clone(),
        });
        manifest.save(&self.out)?;
        Ok(bundle)
    }

    /// Every stage in order.
    pub fn run_all(&self) -> Result<()> {
        self.trace()?;
        self.build_all()?;
        self.eval_density(None)?;
        self.eval_communities(None)?;
        if self
            .config
            .networks
            .build
            .iter()
            .any(|s| self.canonical(s).ok() == self.canonical(&self.config.export.network).ok())
        {
            self.export_ui(None, None)?;
        }
        Ok(())
    }
}
