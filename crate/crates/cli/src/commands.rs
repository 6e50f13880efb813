use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use cultural_har::evaluation::{
    compare_regimes, enumerate_folds, partition_subsets, run_experiment, regime_config,
    ExperimentResult, TagTable,
};
use cultural_har::model::MODEL_SCHEMA_VERSION;
use cultural_har::providers::{
    build_provider, content_digest, extract_tags, ImageRef, Locator, NetworkCounter,
    ProviderOutcome, TagCache, TagFixture, TagProvider, UnavailableProvider,
};
use cultural_har::synthetic::{generate, GeneratorSpec};
use cultural_har::tag::MANUAL_SOURCE;
use cultural_har::{
    ActivityModel, Classification, DatasetManifest, Error, Regime, Result, Tag, TagSet,
    TrainingExample,
};
use serde::{Deserialize, Serialize};

use crate::config::CliConfig;

/// Everything a subcommand needs besides its own arguments.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: CliConfig,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub network: NetworkCounter,
}

impl Context {
    pub fn new(config: CliConfig, out_dir: impl Into<PathBuf>) -> Self {
        Context {
            config,
            config_path: None,
            seed: None,
            out_dir: out_dir.into(),
            network: NetworkCounter::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// `--seed`, else the config's seed, else 0.
    pub fn resolved_seed(&self) -> u64 {
        self.seed.or(self.config.seed).unwrap_or(0)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn prepare_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot create output directory {}: {e}", self.out_dir.display()),
            ))
        })
    }
}

/// Machine-readable record of one invocation, written as `run.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub arguments: serde_json::Value,
    pub config: CliConfig,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    /// SHA-256 of every input file, by role.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_input(path)?)
        .map_err(|_| Error::Manifest(format!("{} is not UTF-8", path.display())))
}

fn write_run_metadata<A: Serialize>(
    ctx: &Context,
    command: &str,
    args: &A,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
) -> Result<()> {
    let mut versions = BTreeMap::new();
    versions.insert("cultural-har".to_string(), cultural_har::VERSION.to_string());
    versions.insert("cultural-har-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
    versions.insert("model_schema".to_string(), MODEL_SCHEMA_VERSION.to_string());
    versions.insert(
        "manifest_schema".to_string(),
        cultural_har::dataset::MANIFEST_SCHEMA_VERSION.to_string(),
    );
    let meta = RunMetadata {
        command: command.to_string(),
        arguments: serde_json::to_value(args)?,
        config: ctx.config.clone(),
        config_path: ctx.config_path.clone(),
        seed: ctx.resolved_seed(),
        versions,
        inputs,
        outputs,
    };
    write_json(&ctx.out("run.json"), &meta)
}

struct LoadedManifest {
    manifest: DatasetManifest,
    base: PathBuf,
    digest: String,
}

fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Manifest(format!("{} is not UTF-8", path.display())))?;
    Ok(LoadedManifest {
        manifest: DatasetManifest::from_json(&text)?,
        base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        digest: content_digest(&bytes),
    })
}

/// Per-provider counts over one extraction run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderSummary {
    pub provider: String,
    pub cache_hits: usize,
    pub fetched: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub images: usize,
    pub providers: Vec<ProviderSummary>,
    /// Images for which every provider failed.
    pub failed_images: Vec<String>,
    /// Providers that could not be set up.
    pub warnings: Vec<String>,
}

impl ExtractSummary {
    pub fn render(&self) -> String {
        let mut out = format!("{} images\n", self.images);
        for p in &self.providers {
            out += &format!(
                "{}: {} cache hits, {} fetched, {} failed\n",
                p.provider, p.cache_hits, p.fetched, p.failed
            );
        }
        out
    }
}

type Providers = Vec<Box<dyn TagProvider>>;

/// The selected providers, plus a warning for each one that had to be
/// replaced by an unavailable stub.
fn build_providers(ctx: &Context, selection: &[String]) -> Result<(Providers, Vec<String>)> {
    let all = ctx.config.effective_providers();
    for name in selection {
        if !all.iter().any(|d| &d.name == name) {
            return Err(Error::Config(format!("unknown provider `{name}`")));
        }
    }
    let mut providers: Providers = Vec::new();
    let mut warnings = Vec::new();
    for desc in all {
        if !selection.is_empty() && !selection.contains(&desc.name) {
            continue;
        }
        match build_provider(&desc, &ctx.network) {
            Ok(p) => providers.push(p),
            Err(e @ Error::Provider { .. }) => {
                let warning = format!("provider `{}` unavailable: {e}", desc.name);
                eprintln!("warning: {warning}");
                warnings.push(warning);
                providers.push(Box::new(UnavailableProvider::new(&desc.name, e.to_string())));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((providers, warnings))
}

fn extract_all(
    ctx: &Context,
    loaded: &LoadedManifest,
    selection: &[String],
    cache_dir: Option<&Path>,
) -> Result<(TagTable, ExtractSummary)> {
    let (providers, warnings) = build_providers(ctx, selection)?;
    let cache = cache_dir
        .or(ctx.config.paths.cache_dir.as_deref())
        .map(TagCache::open)
        .transpose()?;
    let mut summary: Vec<ProviderSummary> = providers
        .iter()
        .map(|p| ProviderSummary {
            provider: p.name().to_string(),
            ..ProviderSummary::default()
        })
        .collect();
    let mut table = TagTable::new();
    let mut failed_images = Vec::new();
    for record in loaded.manifest.records() {
        let image = ImageRef::new(
            &record.image_id,
            Locator::parse(&record.path_or_uri, &loaded.base),
        );
        match extract_tags(&image, &providers, cache.as_ref()) {
            Ok(extraction) => {
                for ((_, outcome), counts) in extraction.outcomes.iter().zip(&mut summary) {
                    match outcome {
                        ProviderOutcome::CacheHit => counts.cache_hits += 1,
                        ProviderOutcome::Fetched => counts.fetched += 1,
                        ProviderOutcome::Failed(msg) => {
                            counts.failed += 1;
                            eprintln!("warning: {}: {}: {msg}", counts.provider, record.image_id);
                        }
                    }
                }
                table.insert(record.image_id.clone(), extraction.tagset);
            }
            Err(Error::AllProvidersFailed { image_id, causes }) => {
                for counts in &mut summary {
                    counts.failed += 1;
                }
                eprintln!("error: every provider failed for `{image_id}`: {}", causes.join("; "));
                failed_images.push(image_id);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((
        table,
        ExtractSummary {
            images: loaded.manifest.records().len(),
            providers: summary,
            failed_images,
            warnings,
        },
    ))
}

fn load_tag_table(path: &Path) -> Result<TagTable> {
    let sets: Vec<TagSet> = serde_json::from_str(&read_text(path)?)?;
    let mut table = TagTable::new();
    for set in sets {
        let id = set.image_id().to_string();
        if table.insert(id.clone(), set).is_some() {
            return Err(Error::Manifest(format!(
                "{}: image `{id}` appears twice",
                path.display()
            )));
        }
    }
    Ok(table)
}

/// Tag sets for every record: from `tags` when given, otherwise extracted
/// with the configured providers.
fn tags_for(
    ctx: &Context,
    loaded: &LoadedManifest,
    tags: Option<&Path>,
    inputs: &mut BTreeMap<String, String>,
) -> Result<TagTable> {
    let table = match tags {
        Some(path) => {
            inputs.insert("tags".into(), content_digest(&read_input(path)?));
            load_tag_table(path)?
        }
        None => {
            let (table, summary) = extract_all(ctx, loaded, &[], None)?;
            if let Some(id) = summary.failed_images.first() {
                return Err(Error::AllProvidersFailed {
                    image_id: id.clone(),
                    causes: vec![format!("{} image(s) could not be tagged", summary.failed_images.len())],
                });
            }
            table
        }
    };
    if let Some(r) = loaded
        .manifest
        .records()
        .iter()
        .find(|r| !table.contains_key(&r.image_id))
    {
        return Err(Error::Manifest(format!("no tag set for image `{}`", r.image_id)));
    }
    Ok(table)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtractArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Only query these providers (by name); repeatable.
    #[arg(long = "provider")]
    pub providers: Vec<String>,
    /// Tag cache directory; overrides `paths.cache_dir`.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

/// Tags every manifest record and writes `tagsets.json`.
pub fn cmd_extract(ctx: &Context, args: &ExtractArgs) -> Result<ExtractSummary> {
    let loaded = load_manifest(&args.manifest)?;
    ctx.prepare_out_dir()?;
    let (table, summary) = extract_all(ctx, &loaded, &args.providers, args.cache_dir.as_deref())?;
    let sets: Vec<&TagSet> = table.values().collect();
    write_json(&ctx.out("tagsets.json"), &sets)?;
    write_json(&ctx.out("extract_summary.json"), &summary)?;
    let inputs = BTreeMap::from([("manifest".to_string(), loaded.digest.clone())]);
    write_run_metadata(
        ctx,
        "extract",
        args,
        inputs,
        vec!["tagsets.json".into(), "extract_summary.json".into()],
    )?;
    if let Some(id) = summary.failed_images.first() {
        return Err(Error::AllProvidersFailed {
            image_id: id.clone(),
            causes: vec![format!(
                "{} of {} images could not be tagged",
                summary.failed_images.len(),
                summary.images
            )],
        });
    }
    Ok(summary)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// CU, CAT or CATT.
    #[arg(long)]
    pub regime: Regime,
    /// Tag sets written by `extract`; extracted on the fly when omitted.
    #[arg(long)]
    pub tags: Option<PathBuf>,
    /// Model file name inside the output directory.
    #[arg(long)]
    pub output: Option<String>,
}

/// Trains on every record of the manifest under one regime.
pub fn cmd_train(ctx: &Context, args: &TrainArgs) -> Result<ActivityModel> {
    let loaded = load_manifest(&args.manifest)?;
    let mut inputs = BTreeMap::from([("manifest".to_string(), loaded.digest.clone())]);
    let tags = tags_for(ctx, &loaded, args.tags.as_deref(), &mut inputs)?;
    let config = regime_config(&ctx.config.training_config(), args.regime, &loaded.manifest);
    let examples: Vec<TrainingExample> = loaded
        .manifest
        .project(args.regime)?
        .into_iter()
        .map(|p| TrainingExample::new(tags[&p.image_id].clone(), p.class, p.cultural_label))
        .collect();
    let model = ActivityModel::train(&examples, &config)?;

    ctx.prepare_out_dir()?;
    let name = args
        .output
        .clone()
        .unwrap_or_else(|| format!("model_{}.json", args.regime.code()));
    std::fs::write(ctx.out(&name), model.to_json()? + "\n")?;
    write_run_metadata(ctx, "train", args, inputs, vec![name])?;
    Ok(model)
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["tags_file", "tag"])))]
pub struct ClassifyArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Tag fixture of the image: `{"image_id": ..., "raw_tags": [{"text": ...}]}`.
    #[arg(long)]
    pub tags_file: Option<PathBuf>,
    /// A tag of the image; repeatable.
    #[arg(long)]
    pub tag: Vec<String>,
    /// Cultural profile of the person; required by CATT models only.
    #[arg(long)]
    pub profile: Option<String>,
}

pub fn cmd_classify(ctx: &Context, args: &ClassifyArgs) -> Result<Classification> {
    let model_bytes = read_input(&args.model)?;
    let model = ActivityModel::from_json(&read_text(&args.model)?)?;
    let mut inputs = BTreeMap::from([("model".to_string(), content_digest(&model_bytes))]);
    let tagset = match &args.tags_file {
        Some(path) => {
            let bytes = read_input(path)?;
            inputs.insert("tags".into(), content_digest(&bytes));
            let fixture: TagFixture = serde_json::from_slice(&bytes)?;
            let mut set = TagSet::new(fixture.image_id.clone());
            for raw in &fixture.raw_tags {
                set.insert(Tag::semantic(&raw.text)?, "fixture");
            }
            set
        }
        None => {
            let mut set = TagSet::new("input");
            for text in &args.tag {
                set.insert(Tag::semantic(text)?, MANUAL_SOURCE);
            }
            set
        }
    };
    let result = model.classify_with_profile(&tagset, args.profile.as_deref())?;

    ctx.prepare_out_dir()?;
    write_json(&ctx.out("classification.json"), &result)?;
    write_run_metadata(ctx, "classify", args, inputs, vec!["classification.json".into()])?;
    Ok(result)
}

/// `REGIME=SEED`, e.g. `CATT=7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegimeSeed {
    pub regime: Regime,
    pub seed: u64,
}

impl std::str::FromStr for RegimeSeed {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (regime, seed) = s
            .split_once('=')
            .ok_or_else(|| format!("expected REGIME=SEED, got `{s}`"))?;
        Ok(RegimeSeed {
            regime: regime.parse().map_err(|e: Error| e.to_string())?,
            seed: seed
                .parse()
                .map_err(|_| format!("`{seed}` is not a valid seed"))?,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Regime to evaluate; repeatable. Defaults to CU, CAT and CATT.
    #[arg(long = "regime")]
    pub regimes: Vec<Regime>,
    /// Per-regime seed override, `REGIME=SEED`; repeatable.
    #[arg(long = "regime-seed")]
    pub regime_seeds: Vec<RegimeSeed>,
    /// Tag sets written by `extract`; extracted on the fly when omitted.
    #[arg(long)]
    pub tags: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub results: Vec<ExperimentResult>,
    pub outputs: Vec<String>,
}

/// Runs the subset/fold protocol for each regime and writes
/// `report_<regime>.json`, `log_<regime>.csv`, `matrix_<regime>.txt` and,
/// for two or more regimes, `comparison.json`.
pub fn cmd_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<EvaluateOutcome> {
    let mut regimes = if args.regimes.is_empty() {
        Regime::ALL.to_vec()
    } else {
        args.regimes.clone()
    };
    regimes.sort();
    if regimes.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("each regime may be given only once".into()));
    }
    let default_seed = ctx.resolved_seed();
    let mut seeds = BTreeMap::new();
    for &regime in &regimes {
        seeds.insert(regime, default_seed);
    }
    for rs in &args.regime_seeds {
        match seeds.get_mut(&rs.regime) {
            Some(seed) => *seed = rs.seed,
            None => {
                return Err(Error::Config(format!(
                    "--regime-seed given for {}, which is not being evaluated",
                    rs.regime
                )))
            }
        }
    }
    if regimes.len() > 1 {
        let first = seeds[&regimes[0]];
        if let Some((r, s)) = seeds.iter().find(|(_, &s)| s != first) {
            return Err(Error::Evaluation(format!(
                "cannot compare regimes evaluated with different seeds ({} uses {first}, {r} uses {s})",
                regimes[0]
            )));
        }
    }

    let loaded = load_manifest(&args.manifest)?;
    let mut inputs = BTreeMap::from([("manifest".to_string(), loaded.digest.clone())]);
    let tags = tags_for(ctx, &loaded, args.tags.as_deref(), &mut inputs)?;
    let base = ctx.config.training_config();
    let superclasses = loaded.manifest.superclasses();
    ctx.prepare_out_dir()?;

    let mut results = Vec::new();
    let mut outputs = Vec::new();
    for &regime in &regimes {
        let seed = seeds[&regime];
        let partitions = partition_subsets(&loaded.manifest, regime, ctx.config.protocol, seed)?;
        let plan = enumerate_folds(partitions)?;
        let result = run_experiment(&loaded.manifest, regime, &base, &plan, &tags)?;
        let code = regime.code();

        let report = result.report(&plan, &superclasses);
        write_json(&ctx.out(&format!("report_{code}.json")), &report)?;
        let log = std::fs::File::create(ctx.out(&format!("log_{code}.csv")))?;
        result.write_log_csv(std::io::BufWriter::new(log))?;
        std::fs::write(ctx.out(&format!("matrix_{code}.txt")), result.matrix.render_table())?;
        outputs.extend([
            format!("report_{code}.json"),
            format!("log_{code}.csv"),
            format!("matrix_{code}.txt"),
        ]);
        println!(
            "{code}: accuracy {} over {} classifications in {} folds",
            report
                .metrics
                .overall_accuracy
                .map_or("n/a".to_string(), |a| format!("{a:.4}")),
            result.matrix.total(),
            plan.folds.len()
        );
        results.push(result);
    }
    if results.len() > 1 {
        let refs: Vec<&ExperimentResult> = results.iter().collect();
        let comparison = compare_regimes(&refs, &superclasses)?;
        write_json(&ctx.out("comparison.json"), &comparison)?;
        outputs.push("comparison.json".into());
    }
    write_run_metadata(ctx, "evaluate", args, inputs, outputs.clone())?;
    Ok(EvaluateOutcome { results, outputs })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Generator spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
}

/// Writes `manifest.json` and `fixtures/` for a generator spec. `--seed`
/// overrides the spec's own seed.
pub fn cmd_synth(ctx: &Context, args: &SynthArgs) -> Result<DatasetManifest> {
    let bytes = read_input(&args.spec)?;
    let mut spec = GeneratorSpec::from_json(&read_text(&args.spec)?)?;
    if let Some(seed) = ctx.seed.or(ctx.config.seed) {
        spec = spec.with_seed(seed);
    }
    let data = generate(&spec)?;
    ctx.prepare_out_dir()?;
    data.write_to(&ctx.out_dir)?;
    let inputs = BTreeMap::from([("spec".to_string(), content_digest(&bytes))]);
    let ctx = Context {
        seed: Some(spec.seed),
        ..ctx.clone()
    };
    write_run_metadata(
        &ctx,
        "synth",
        args,
        inputs,
        vec!["manifest.json".into(), "fixtures/".into()],
    )?;
    Ok(data.manifest)
}
