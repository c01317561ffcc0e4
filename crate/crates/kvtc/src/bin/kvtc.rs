//! Operator surface for the codec: calibrate, plan, compress, decompress,
//! inspect, synthesize, diagnose, and emit plot-ready data tables.
//!
//! Exit codes: 0 success, 2 usage error, 3 input validation, 4 corrupt data,
//! 5 internal numeric failure.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kvtc::allocator::{dp_allocate, pca_only_for_target_cr, plan_error, DpConfig};
use kvtc::bench::{run_cr_sweep, run_roundtrip_suite, CrSweepConfig};
use kvtc::calib::{build_calibration_matrix, SamplingSpec};
use kvtc::codec::{
    compress, compression_ratio, decompress, token_matrix, CompressedCache, CompressionPlan,
    CompressionPolicy, KvCache, StreamKind,
};
use kvtc::container::{
    describe, parse_artifact, parse_cache, parse_plan, read_cache_dump, serialize_artifact,
    serialize_cache, serialize_plan, write_cache_dump, ArtifactFile, PlanFile,
};
use kvtc::entropy::LosslessCodec;
use kvtc::error::Error;
use kvtc::linalg::{fit_pca, mean_token_cosine, procrustes_align, project, reconstruct, PcaMethod};
use kvtc::report::{fmt_f64, render_table, TableFormat};
use kvtc::rope::{PairingConvention, RopeConfig};
use kvtc::synth::{generate, SynthSpec};

#[derive(Parser)]
#[command(name = "kvtc", version, about = "Transform-coding codec for KV-cache tensors")]
struct Cli {
    /// Print the resolved configuration to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    /// Table output format.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// key=value config file (flag > file > default). Defaults to $KVTC_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum StreamArg {
    Key,
    Value,
}

impl From<StreamArg> for StreamKind {
    fn from(s: StreamArg) -> StreamKind {
        match s {
            StreamArg::Key => StreamKind::Key,
            StreamArg::Value => StreamKind::Value,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    Identity,
    Deflate,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Randomized,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dp,
    PcaOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Interleaved,
    HalfSplit,
}

#[derive(Args, Clone)]
struct RopeArgs {
    /// RoPE base frequency.
    #[arg(long)]
    rope_base: Option<f64>,
    /// Linear position scaling factor.
    #[arg(long)]
    rope_scaling: Option<f64>,
    /// Dimension pairing convention.
    #[arg(long, value_enum)]
    rope_convention: Option<ConventionArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic KV cache dump.
    Synth {
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = 32)]
        head_dim: usize,
        #[arg(long, default_value_t = 512)]
        tokens: usize,
        #[arg(long, default_value_t = 16)]
        latent_rank: usize,
        #[arg(long, default_value_t = 0.05)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        sink_scale: f64,
        #[arg(long)]
        planted_rotations: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        start_position: u64,
        #[command(flatten)]
        rope: RopeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a PCA artifact from cache dumps.
    Calibrate {
        #[arg(long, required = true, num_args = 1..)]
        caches: Vec<PathBuf>,
        #[arg(long, value_enum)]
        stream: StreamArg,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        exclude_sinks: Option<usize>,
        #[arg(long, value_enum, default_value = "exact")]
        method: MethodArg,
        /// Layers concatenated per feature row (default: all).
        #[arg(long)]
        layer_width: Option<usize>,
        #[arg(long, default_value_t = 0)]
        layer_group: usize,
        #[arg(long, default_value_t = 0)]
        start_position: u64,
        #[command(flatten)]
        rope: RopeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the bit allocator against an artifact and calibration dump.
    Plan {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        target_cr: f64,
        #[arg(long, value_enum, default_value = "dp")]
        mode: ModeArg,
        /// Token positions to sample (default: every non-sink position).
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        exclude_sinks: Option<usize>,
        #[arg(long, default_value_t = 0)]
        start_position: u64,
        /// Also print the per-position reconstruction-error table.
        #[arg(long)]
        report_curve: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compress a cache dump into a .kvtc container.
    Compress {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        key_artifact: PathBuf,
        #[arg(long)]
        value_artifact: PathBuf,
        #[arg(long)]
        key_plan: PathBuf,
        #[arg(long)]
        value_plan: PathBuf,
        #[arg(long)]
        sinks: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, value_enum)]
        codec: Option<CodecArg>,
        #[arg(long)]
        level: Option<u32>,
        #[arg(long, default_value_t = 0)]
        start_position: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore a cache dump from a .kvtc container.
    Decompress {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        key_artifact: PathBuf,
        #[arg(long)]
        value_artifact: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print header/metadata of any container file, validating checksums.
    Inspect {
        #[arg(long)]
        input: PathBuf,
    },
    /// Pre/post-alignment cosine similarity between head pairs.
    Procrustes {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, value_enum, default_value = "key")]
        stream: StreamArg,
        /// "all" or "i,j".
        #[arg(long, default_value = "all")]
        pairs: String,
        #[arg(long, default_value_t = 0)]
        start_position: u64,
        #[command(flatten)]
        rope: RopeArgs,
    },
    /// Built-in sweeps: `roundtrip` self-checks or the `cr-sweep` table.
    Bench {
        #[arg(long, default_value = "cr-sweep")]
        suite: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// key=value overrides loaded from --config or $KVTC_CONFIG.
struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, Error> {
        let path = match path {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os("KVTC_CONFIG").map(PathBuf::from),
        };
        let mut values = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(&path)?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(Error::invalid(format!(
                        "{}:{}: expected key=value",
                        path.display(),
                        lineno + 1
                    )));
                };
                values.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(FileConfig { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::invalid(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }
}

struct Resolved {
    file: FileConfig,
    verbose: bool,
    resolved: std::cell::RefCell<Vec<(String, String)>>,
}

impl Resolved {
    fn pick<T: std::str::FromStr + std::fmt::Display>(
        &self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, Error> {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get::<T>(key)? {
                Some(v) => v,
                None => default,
            },
        };
        self.resolved
            .borrow_mut()
            .push((key.to_string(), value.to_string()));
        Ok(value)
    }

    fn report(&self) {
        if self.verbose {
            for (k, v) in self.resolved.borrow().iter() {
                eprintln!("config: {k} = {v}");
            }
        }
    }
}

fn rope_config(head_dim: usize, args: &RopeArgs, cfg: &Resolved) -> Result<RopeConfig, Error> {
    let base = cfg.pick("rope-base", args.rope_base, 10_000.0)?;
    let scaling = cfg.pick("rope-scaling", args.rope_scaling, 1.0)?;
    let convention = match args.rope_convention {
        Some(ConventionArg::HalfSplit) => PairingConvention::HalfSplit,
        Some(ConventionArg::Interleaved) => PairingConvention::Interleaved,
        None => match cfg.file.get::<String>("rope-convention")?.as_deref() {
            Some("half-split") => PairingConvention::HalfSplit,
            Some("interleaved") | None => PairingConvention::Interleaved,
            Some(other) => {
                return Err(Error::invalid(format!("unknown rope convention {other:?}")))
            }
        },
    };
    let rope = RopeConfig { head_dim, base, scaling, convention };
    rope.validate()?;
    Ok(rope)
}

fn load_cache_dump(path: &Path, rope: RopeConfig, start_position: u64) -> Result<KvCache, Error> {
    read_cache_dump(&fs::read(path)?, rope, start_position)
}

fn load_artifact(path: &Path) -> Result<ArtifactFile, Error> {
    parse_artifact(&fs::read(path)?)
}

fn dump_head_dim(raw: &[u8]) -> Result<usize, Error> {
    let tensor = kvtc::container::read_tensor(raw)?;
    if tensor.dims.len() != 5 {
        return Err(Error::invalid("cache dump must have dims [2, l, h, t, d_head]"));
    }
    Ok(tensor.dims[4] as usize)
}

fn plan_table(plan: &CompressionPlan, format: TableFormat) -> String {
    match plan {
        CompressionPlan::Dp(p) => {
            let mut rows = Vec::new();
            let mut offset = 0usize;
            for (i, g) in p.groups.iter().enumerate() {
                rows.push(vec![
                    i.to_string(),
                    format!("{}..{}", offset, offset + g.size),
                    g.etype.name().to_string(),
                    g.etype.payload_bits().to_string(),
                    g.etype.bit_cost_per_token(g.size).to_string(),
                ]);
                offset += g.size;
            }
            if p.covered_components < p.total_components {
                rows.push(vec![
                    "-".to_string(),
                    format!("{}..{}", p.covered_components, p.total_components),
                    "none".to_string(),
                    "0".to_string(),
                    "0".to_string(),
                ]);
            }
            render_table(
                &["group", "components", "type", "bits/component", "bits/token"],
                &rows,
                format,
            )
        }
        CompressionPlan::PcaOnly(p) => render_table(
            &["components", "kept", "bits/component", "bits/token"],
            &[vec![
                p.total_components.to_string(),
                p.kept_components.to_string(),
                "16".to_string(),
                p.bits_per_token.to_string(),
            ]],
            format,
        ),
    }
}

fn cr_table(c: &CompressedCache, format: TableFormat) -> String {
    let cr = compression_ratio(c);
    render_table(
        &["metric", "value"],
        &[
            vec!["baseline bytes".into(), cr.baseline_bytes.to_string()],
            vec!["raw sink bytes".into(), cr.raw_sink_bytes.to_string()],
            vec!["payload bytes".into(), cr.payload_bytes.to_string()],
            vec!["header bytes".into(), cr.header_bytes.to_string()],
            vec!["cr incl header".into(), fmt_f64(cr.including_header)],
            vec!["cr excl header".into(), fmt_f64(cr.excluding_header)],
        ],
        format,
    )
}

fn run(cli: Cli) -> Result<(), Error> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let cfg = Resolved {
        file,
        verbose: cli.verbose,
        resolved: std::cell::RefCell::new(Vec::new()),
    };
    let format = match cli.format {
        Some(FormatArg::Csv) => TableFormat::Csv,
        Some(FormatArg::Text) => TableFormat::Text,
        None => match cfg.file.get::<String>("format")?.as_deref() {
            Some("csv") => TableFormat::Csv,
            _ => TableFormat::Text,
        },
    };

    match cli.command {
        Command::Synth {
            layers,
            heads,
            head_dim,
            tokens,
            latent_rank,
            noise_sigma,
            sink_scale,
            planted_rotations,
            seed,
            start_position,
            rope,
            out,
        } => {
            let seed = cfg.pick("seed", seed, 0u64)?;
            let rope = rope_config(head_dim, &rope, &cfg)?;
            cfg.report();
            let shape = kvtc::codec::CacheShape { layers, kv_heads: heads, head_dim, tokens };
            let cache = generate(&SynthSpec {
                shape,
                latent_rank,
                noise_sigma,
                sink_outlier_scale: sink_scale,
                planted_rotations,
                rope,
                seed,
                start_position,
            })?;
            let bytes = write_cache_dump(&cache);
            fs::write(&out, &bytes)?;
            println!(
                "wrote {} ({} bytes, 16-bit cache size {} bytes)",
                out.display(),
                bytes.len(),
                kvtc::codec::kv_cache_bytes(&shape)?
            );
            Ok(())
        }
        Command::Calibrate {
            caches,
            stream,
            rank,
            samples,
            seed,
            exclude_sinks,
            method,
            layer_width,
            layer_group,
            start_position,
            rope,
            out,
        } => {
            let seed = cfg.pick("seed", seed, 0u64)?;
            let exclude = cfg.pick("exclude-sinks", exclude_sinks, 4usize)?;
            let mut loaded = Vec::new();
            for path in &caches {
                let raw = fs::read(path)?;
                let rope = rope_config(dump_head_dim(&raw)?, &rope, &cfg)?;
                loaded.push(read_cache_dump(&raw, rope, start_position)?);
            }
            cfg.report();
            let refs: Vec<&KvCache> = loaded.iter().collect();
            let spec = SamplingSpec {
                sample_count: samples,
                exclude_sink_count: exclude,
                seed,
                layer_concat_width: layer_width,
            };
            let stream: StreamKind = stream.into();
            let matrix = build_calibration_matrix(&refs, &spec, stream, layer_group)?;
            let pca_method = match method {
                MethodArg::Exact => PcaMethod::Exact,
                MethodArg::Randomized => PcaMethod::Randomized,
            };
            let model = fit_pca(&matrix, rank, pca_method)?;
            let artifact = ArtifactFile::from_model(&model, stream, loaded[0].rope, seed);
            fs::write(&out, serialize_artifact(&artifact))?;

            let restored = reconstruct(&model, &project(&model, &matrix)?)?;
            let err = restored.sub(&matrix)?.frobenius_norm() / matrix.frobenius_norm();
            println!(
                "fitted {} artifact: p={} r={} n={}",
                stream.name(),
                model.feature_count,
                model.rank,
                model.sample_count
            );
            println!("rank-{} relative reconstruction error: {}", rank, fmt_f64(err));
            println!("model fingerprint: {:016x}", artifact.model_fingerprint());
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Plan {
            artifact,
            calib,
            target_cr,
            mode,
            samples,
            seed,
            exclude_sinks,
            start_position,
            report_curve,
            out,
        } => {
            let seed = cfg.pick("seed", seed, 0u64)?;
            let exclude = cfg.pick("exclude-sinks", exclude_sinks, 4usize)?;
            cfg.report();
            let artifact = load_artifact(&artifact)?;
            let model = artifact.to_model()?;
            let cache = load_cache_dump(&calib, artifact.rope, start_position)?;
            let pool = cache.shape.tokens.saturating_sub(exclude);
            let spec = SamplingSpec {
                sample_count: samples.unwrap_or(pool),
                exclude_sink_count: exclude,
                seed,
                layer_concat_width: None,
            };
            let matrix = build_calibration_matrix(&[&cache], &spec, artifact.kind, 0)?;
            if matrix.cols() != model.feature_count {
                return Err(Error::invalid(format!(
                    "calibration rows have {} features, artifact expects {}",
                    matrix.cols(),
                    model.feature_count
                )));
            }
            let projected = project(&model, &matrix)?;
            let plan = match mode {
                ModeArg::Dp => CompressionPlan::Dp(dp_allocate(
                    &projected,
                    target_cr,
                    16,
                    model.feature_count,
                    &DpConfig::default(),
                )?),
                ModeArg::PcaOnly => CompressionPlan::PcaOnly(pca_only_for_target_cr(
                    &projected,
                    target_cr,
                    16,
                    model.feature_count,
                )?),
            };
            let expected = match &plan {
                CompressionPlan::Dp(p) => p.expected_error,
                CompressionPlan::PcaOnly(p) => p.expected_error,
            };
            println!("mode: {}", plan.mode_name());
            println!("bits per token: {}", plan.bits_per_token());
            println!("expected squared error (calibration): {}", fmt_f64(expected));
            print!("{}", plan_table(&plan, format));
            if let CompressionPlan::Dp(p) = &plan {
                let replayed = plan_error(&projected, p)?;
                debug_assert_eq!(replayed.to_bits(), p.expected_error.to_bits());
            }
            if report_curve {
                let curve = kvtc::calib::reconstruction_error_curve(&model, &plan, &matrix)?;
                print!("{}", kvtc::report::render_error_report(&curve, format));
            }
            let file = PlanFile {
                artifact_fingerprint: artifact.model_fingerprint(),
                target_cr,
                plan,
            };
            fs::write(&out, serialize_plan(&file))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Compress {
            input,
            key_artifact,
            value_artifact,
            key_plan,
            value_plan,
            sinks,
            window,
            codec,
            level,
            start_position,
            out,
        } => {
            let sinks = cfg.pick("sinks", sinks, CompressionPolicy::DEFAULT_SINKS)?;
            let window = cfg.pick("window", window, CompressionPolicy::DEFAULT_WINDOW)?;
            let level = cfg.pick("level", level, kvtc::entropy::DEFAULT_DEFLATE_LEVEL)?;
            let codec_name = match codec {
                Some(CodecArg::Identity) => "identity".to_string(),
                Some(CodecArg::Deflate) => "deflate".to_string(),
                None => cfg
                    .file
                    .get::<String>("codec")?
                    .unwrap_or_else(|| "deflate".to_string()),
            };
            let lossless = match codec_name.as_str() {
                "identity" => LosslessCodec::Identity,
                "deflate" => LosslessCodec::Deflate { level },
                other => return Err(Error::invalid(format!("unknown codec {other:?}"))),
            };
            cfg.report();

            let key_art = load_artifact(&key_artifact)?;
            let value_art = load_artifact(&value_artifact)?;
            let key_plan_file = parse_plan(&fs::read(&key_plan)?)?;
            let value_plan_file = parse_plan(&fs::read(&value_plan)?)?;
            for (plan, art, name) in [
                (&key_plan_file, &key_art, "key"),
                (&value_plan_file, &value_art, "value"),
            ] {
                if plan.artifact_fingerprint != art.model_fingerprint() {
                    return Err(Error::ArtifactMismatch(format!(
                        "{name} plan was computed against artifact {:016x}, got {:016x}",
                        plan.artifact_fingerprint,
                        art.model_fingerprint()
                    )));
                }
            }
            let cache = load_cache_dump(&input, key_art.rope, start_position)?;
            let policy = CompressionPolicy {
                sink_count: sinks,
                window,
                key_plan: key_plan_file.plan,
                value_plan: value_plan_file.plan,
                lossless,
            };
            let compressed =
                compress(&cache, &key_art.to_model()?, &value_art.to_model()?, &policy)?;
            fs::write(&out, serialize_cache(&compressed))?;
            if compressed.is_raw_passthrough() {
                println!("nothing to compress (t <= sinks + window); cache stored raw");
            }
            print!("{}", cr_table(&compressed, format));
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Decompress { input, key_artifact, value_artifact, out } => {
            cfg.report();
            let compressed = parse_cache(&fs::read(&input)?)?;
            let key_art = load_artifact(&key_artifact)?;
            let value_art = load_artifact(&value_artifact)?;
            let cache = decompress(&compressed, &key_art.to_model()?, &value_art.to_model()?)?;
            fs::write(&out, write_cache_dump(&cache))?;
            println!(
                "restored {} tokens ({} raw sinks, {} raw window, {} reconstructed)",
                cache.shape.tokens,
                compressed.sink_count,
                compressed.window,
                compressed.middle_tokens()
            );
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Inspect { input } => {
            cfg.report();
            println!("{}", describe(&fs::read(&input)?)?);
            Ok(())
        }
        Command::Procrustes { cache, stream, pairs, start_position, rope } => {
            let raw = fs::read(&cache)?;
            let rope = rope_config(dump_head_dim(&raw)?, &rope, &cfg)?;
            cfg.report();
            let cache = read_cache_dump(&raw, rope, start_position)?;
            let stream: StreamKind = stream.into();
            // Rows over all tokens, keys un-RoPE'd; one column block per head.
            let rows = token_matrix(&cache, stream, 0..cache.shape.tokens)?;
            let heads = cache.shape.layers * cache.shape.kv_heads;
            let d = cache.shape.head_dim;
            let pair_list: Vec<(usize, usize)> = if pairs == "all" {
                (0..heads)
                    .flat_map(|i| (i + 1..heads).map(move |j| (i, j)))
                    .collect()
            } else {
                let Some((i, j)) = pairs.split_once(',') else {
                    return Err(Error::invalid("--pairs expects \"all\" or \"i,j\""));
                };
                let (i, j) = (
                    i.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::invalid("bad pair index"))?,
                    j.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::invalid("bad pair index"))?,
                );
                if i >= heads || j >= heads || i == j {
                    return Err(Error::invalid(format!(
                        "pair ({i},{j}) out of range for {heads} heads"
                    )));
                }
                vec![(i, j)]
            };
            let mut table = Vec::new();
            for (i, j) in pair_list {
                let a = rows.column_block(i * d, (i + 1) * d);
                let b = rows.column_block(j * d, (j + 1) * d);
                let before = mean_token_cosine(&a, &b)?;
                let r = procrustes_align(&a, &b)?;
                let after = mean_token_cosine(&a, &b.matmul(&r)?)?;
                table.push(vec![i.to_string(), j.to_string(), fmt_f64(before), fmt_f64(after)]);
            }
            print!(
                "{}",
                render_table(
                    &["head_i", "head_j", "cosine_before", "cosine_after"],
                    &table,
                    format
                )
            );
            Ok(())
        }
        Command::Bench { suite, seed } => {
            let seed = cfg.pick("seed", seed, 0u64)?;
            cfg.report();
            match suite.as_str() {
                "roundtrip" => {
                    let checks = run_roundtrip_suite(seed)?;
                    let rows: Vec<Vec<String>> = checks
                        .iter()
                        .map(|c| {
                            vec![
                                c.name.clone(),
                                if c.pass { "PASS" } else { "FAIL" }.to_string(),
                                c.detail.clone(),
                            ]
                        })
                        .collect();
                    print!("{}", render_table(&["check", "status", "detail"], &rows, format));
                    if checks.iter().any(|c| !c.pass) {
                        return Err(Error::NumericalFailure("round-trip suite failed".into()));
                    }
                    Ok(())
                }
                "cr-sweep" => {
                    let points = run_cr_sweep(&CrSweepConfig::small(seed))?;
                    let rows: Vec<Vec<String>> = points
                        .iter()
                        .map(|p| {
                            vec![
                                format!("{}", p.target_cr),
                                p.budget_bits.to_string(),
                                p.key_bits_per_token.to_string(),
                                p.value_bits_per_token.to_string(),
                                fmt_f64(p.cr_quant_incl),
                                fmt_f64(p.cr_quant_excl),
                                fmt_f64(p.cr_deflate_incl),
                                fmt_f64(p.middle_rel_err),
                                fmt_f64(p.key_dp_err),
                                fmt_f64(p.key_pca_only_err),
                            ]
                        })
                        .collect();
                    print!(
                        "{}",
                        render_table(
                            &[
                                "target_cr",
                                "budget_bits",
                                "key_bits",
                                "value_bits",
                                "cr_quant_incl",
                                "cr_quant_excl",
                                "cr_deflate",
                                "middle_rel_err",
                                "key_dp_err",
                                "key_pca_err",
                            ],
                            &rows,
                            format
                        )
                    );
                    Ok(())
                }
                other => Err(Error::invalid(format!(
                    "unknown suite {other:?} (expected roundtrip or cr-sweep)"
                ))),
            }
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_)
        | Error::DegenerateRow { .. }
        | Error::InstanceTooLarge(_)
        | Error::ArtifactMismatch(_)
        | Error::Io(_) => 3,
        Error::CorruptPayload(_)
        | Error::BadMagic { .. }
        | Error::UnsupportedVersion { .. }
        | Error::ChecksumMismatch { .. }
        | Error::TruncatedFile(_) => 4,
        Error::NumericalFailure(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
