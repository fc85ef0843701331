use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use repdraft::case_model::{validate_bundle, CaseBundle, LocationRecord, ReportSectionKind, SectionTarget};
use repdraft::grounding::{score, Tolerances};
use repdraft::ingest::lex::parse_offset;
use repdraft::llm_gateway::{BackendConfig, BackendProfiles, FaultProfile, Gateway, GeneratedDraft};
use repdraft::pipeline::{
    assemble, ingest_manifest, render_json, render_markdown, render_table, run_experiment, summarize,
    ChosenDraft, ResultsStore,
};
use repdraft::prompting::{build_matrix, PromptSpec, RenderOptions};
use repdraft::transform::{
    bucket_by_day, convert_offset, detect_colocations, group_locations_chronological,
    group_locations_spatial, reduce_to_csv, resolve_place, Gazetteer, DEFAULT_RADIUS_M,
    STANDARD_LOCATION_COLUMNS, STANDARD_MESSAGE_COLUMNS,
};

/// Draft forensic report sections with a language model and check the
/// drafts against the case data.
#[derive(Parser)]
#[command(name = "repdraft", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a case bundle from a manifest of source files.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a bundle's invariants.
    Validate {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Offset conversion, grouping, co-location, CSV reduction, place lookup.
    Transform {
        #[command(subcommand)]
        op: TransformOp,
    },
    /// Write the 36-prompt experiment matrix as JSON.
    Matrix {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep French tool labels in the rendered inputs.
        #[arg(long)]
        keep_french: bool,
    },
    /// Send one prompt of a matrix to a backend.
    Generate {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        prompt_id: String,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a draft's claims and completeness against the bundle.
    Score {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        draft: PathBuf,
        /// Defaults to the target named in the draft's prompt id.
        #[arg(long)]
        target: Option<SectionTarget>,
        #[command(flatten)]
        tolerances: ToleranceArgs,
        #[arg(long)]
        json: bool,
    },
    /// Assemble a Markdown report from chosen drafts.
    Assemble {
        #[arg(long)]
        bundle: PathBuf,
        /// `<target>=<draft.json>`, repeatable.
        #[arg(long = "draft", value_name = "TARGET=PATH")]
        drafts: Vec<String>,
        #[command(flatten)]
        tolerances: ToleranceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every prompt against every backend and append to the store.
    Experiment {
        #[arg(long)]
        bundle: PathBuf,
        /// Prebuilt matrix; built from the bundle when absent.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Profile name, repeatable. `mock` works without a profiles file.
        #[arg(long = "backend", required = true)]
        backends: Vec<String>,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        keep_french: bool,
        #[command(flatten)]
        tolerances: ToleranceArgs,
    },
    /// Aggregate a results store.
    Summarize {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, default_value = "mock")]
    backend: String,
}

#[derive(Args, Clone, Copy)]
struct ToleranceArgs {
    /// Decimal places compared for coordinates.
    #[arg(long, default_value_t = 4)]
    coord_places: u32,
    /// Accepted distance to a recorded instant, in seconds.
    #[arg(long, default_value_t = 60)]
    time_slack_s: u64,
}

impl From<ToleranceArgs> for Tolerances {
    fn from(t: ToleranceArgs) -> Self {
        Tolerances {
            coordinate_decimal_places: t.coord_places,
            timestamp_slack: Duration::from_secs(t.time_slack_s),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Topic {
    Messages,
    Locations,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupMode {
    Spatial,
    Chronological,
}

#[derive(Subcommand)]
enum TransformOp {
    /// Show every record in one UTC offset, e.g. `UTC-5`.
    Convert {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        offset: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Group locations of one item, or of all items when none is given.
    Cluster {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        item: Option<String>,
        #[arg(long, value_enum, default_value = "spatial")]
        mode: GroupMode,
        #[arg(long, default_value_t = DEFAULT_RADIUS_M)]
        radius_m: f64,
        #[arg(long, default_value_t = 60)]
        max_gap_min: u64,
    },
    /// Records per calendar day in a display offset.
    Days {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum)]
        topic: Topic,
        #[arg(long, default_value = "UTC+0")]
        offset: String,
    },
    /// Location pairs of two items close in space and time.
    Colocate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = DEFAULT_RADIUS_M)]
        radius_m: f64,
        #[arg(long, default_value_t = 60)]
        window_min: u64,
    },
    /// Reduce one item's records to a ` ; `-delimited table.
    Csv {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum)]
        topic: Topic,
        #[arg(long)]
        item: String,
        /// Comma-separated field names; standard columns by default.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
    },
    /// Fill missing place names from an offline gazetteer.
    Resolve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_bundle(path: &Path) -> Result<CaseBundle> {
    CaseBundle::load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn backend_config(profiles: Option<&Path>, name: &str) -> Result<BackendConfig> {
    match profiles {
        Some(p) => Ok(BackendProfiles::load(p)?.get(name)?.clone()),
        None if name == "mock" => Ok(BackendConfig::mock("mock", FaultProfile::Faithful)),
        None => bail!("backend `{name}` needs --profiles"),
    }
}

fn offset_arg(text: &str) -> Result<chrono::FixedOffset> {
    parse_offset(text).ok_or_else(|| anyhow!("unreadable offset `{text}`; expected e.g. UTC-5"))
}

fn target_of(draft: &GeneratedDraft) -> Result<SectionTarget> {
    let prefix = draft
        .prompt_id
        .rsplit_once('-')
        .map_or(draft.prompt_id.as_str(), |(p, _)| p);
    prefix.parse().map_err(|_| {
        anyhow!(
            "cannot tell the section of prompt `{}`; pass --target",
            draft.prompt_id
        )
    })
}

fn item_locations<'a>(bundle: &'a CaseBundle, item: &str) -> Result<&'a [LocationRecord]> {
    bundle
        .locations
        .get(item)
        .map(Vec::as_slice)
        .ok_or_else(|| anyhow!("no locations for item `{item}`"))
}

fn transform(op: TransformOp) -> Result<ExitCode> {
    match op {
        TransformOp::Convert { bundle, offset, out } => {
            let mut b = load_bundle(&bundle)?;
            let target = offset_arg(&offset)?;
            for recs in b.locations.values_mut() {
                *recs = recs.iter().map(|r| convert_offset(r, target)).collect();
            }
            for recs in b.messages.values_mut() {
                *recs = recs.iter().map(|r| convert_offset(r, target)).collect();
            }
            b.save(&out)?;
        }
        TransformOp::Cluster {
            bundle,
            item,
            mode,
            radius_m,
            max_gap_min,
        } => {
            let b = load_bundle(&bundle)?;
            let records: Vec<LocationRecord> = match &item {
                Some(id) => item_locations(&b, id)?.to_vec(),
                None => b.all_locations().into_iter().cloned().collect(),
            };
            let clusters = match mode {
                GroupMode::Spatial => group_locations_spatial(&records, radius_m),
                GroupMode::Chronological => {
                    group_locations_chronological(&records, Duration::from_secs(max_gap_min * 60))
                }
            };
            println!("{}", serde_json::to_string_pretty(&clusters)?);
        }
        TransformOp::Days {
            bundle,
            topic,
            offset,
        } => {
            let b = load_bundle(&bundle)?;
            let offset = offset_arg(&offset)?;
            let mut out = String::new();
            match topic {
                Topic::Messages => {
                    let msgs: Vec<_> = b.all_messages().into_iter().cloned().collect();
                    for (day, recs) in bucket_by_day(&msgs, offset) {
                        out.push_str(&format!("{day}\t{}\n", recs.len()));
                    }
                }
                Topic::Locations => {
                    let locs: Vec<_> = b.all_locations().into_iter().cloned().collect();
                    for (day, recs) in bucket_by_day(&locs, offset) {
                        out.push_str(&format!("{day}\t{}\n", recs.len()));
                    }
                }
            }
            print!("{out}");
        }
        TransformOp::Colocate {
            bundle,
            a,
            b: item_b,
            radius_m,
            window_min,
        } => {
            let bundle = load_bundle(&bundle)?;
            let found = detect_colocations(
                item_locations(&bundle, &a)?,
                item_locations(&bundle, &item_b)?,
                radius_m,
                Duration::from_secs(window_min * 60),
            );
            println!("{}", serde_json::to_string_pretty(&found)?);
        }
        TransformOp::Csv {
            bundle,
            topic,
            item,
            columns,
        } => {
            let b = load_bundle(&bundle)?;
            let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
            let text = match topic {
                Topic::Messages => {
                    let msgs = b
                        .messages
                        .get(&item)
                        .ok_or_else(|| anyhow!("no messages for item `{item}`"))?;
                    reduce_to_csv(
                        msgs,
                        if cols.is_empty() {
                            &STANDARD_MESSAGE_COLUMNS
                        } else {
                            &cols
                        },
                    )?
                }
                Topic::Locations => {
                    let locs = item_locations(&b, &item)?;
                    reduce_to_csv(
                        locs,
                        if cols.is_empty() {
                            &STANDARD_LOCATION_COLUMNS
                        } else {
                            &cols
                        },
                    )?
                }
            };
            print!("{text}");
        }
        TransformOp::Resolve {
            bundle,
            gazetteer,
            out,
        } => {
            let mut b = load_bundle(&bundle)?;
            let text = std::fs::read_to_string(&gazetteer)
                .with_context(|| format!("reading {}", gazetteer.display()))?;
            let g = Gazetteer::parse(&text)?;
            for recs in b.locations.values_mut() {
                for r in recs.iter_mut().filter(|r| r.related_location.is_none()) {
                    r.related_location = resolve_place(r.latitude, r.longitude, &g).map(str::to_string);
                }
            }
            b.save(&out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_slot(
    text: &str,
) -> Result<(
    ReportSectionKind,
    Option<repdraft::case_model::ResultsTopic>,
    PathBuf,
)> {
    let (name, path) = text
        .split_once('=')
        .ok_or_else(|| anyhow!("expected TARGET=PATH, got `{text}`"))?;
    let (section, topic) = match name {
        "discussion" => (ReportSectionKind::Discussion, None),
        "conclusion" => (ReportSectionKind::Conclusion, None),
        "results" => (ReportSectionKind::Results, None),
        other => {
            let t: SectionTarget = other.parse().map_err(|e: String| anyhow!(e))?;
            (t.section(), t.results_topic())
        }
    };
    Ok((section, topic, PathBuf::from(path)))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { manifest, out } => {
            let outcome = ingest_manifest(&manifest)?;
            for d in &outcome.diagnostics {
                eprintln!("{}", d.render());
            }
            if outcome.has_errors() {
                return Ok(ExitCode::from(2));
            }
            outcome.bundle.save(&out)?;
            for issue in validate_bundle(&outcome.bundle) {
                eprintln!("{}: {}", issue.path, issue.message);
            }
        }
        Command::Validate { bundle } => {
            let issues = validate_bundle(&load_bundle(&bundle)?);
            for issue in &issues {
                println!("{}: {}", issue.path, issue.message);
            }
            if !issues.is_empty() {
                return Ok(ExitCode::from(2));
            }
            println!("ok");
        }
        Command::Transform { op } => return transform(op),
        Command::Matrix {
            bundle,
            out,
            keep_french,
        } => {
            let matrix = build_matrix(&load_bundle(&bundle)?, RenderOptions { keep_french })?;
            emit(
                out.as_deref(),
                &format!("{}\n", serde_json::to_string_pretty(&matrix)?),
            )?;
        }
        Command::Generate {
            matrix,
            prompt_id,
            backend,
            out,
        } => {
            let matrix: Vec<PromptSpec> = load_json(&matrix)?;
            let prompt = matrix
                .iter()
                .find(|p| p.prompt_id == prompt_id)
                .ok_or_else(|| anyhow!("prompt `{prompt_id}` is not in the matrix"))?;
            let config = backend_config(backend.profiles.as_deref(), &backend.backend)?;
            let draft = Gateway::new(config).generate(prompt)?;
            emit(
                out.as_deref(),
                &format!("{}\n", serde_json::to_string_pretty(&draft)?),
            )?;
        }
        Command::Score {
            bundle,
            draft,
            target,
            tolerances,
            json,
        } => {
            let b = load_bundle(&bundle)?;
            let draft: GeneratedDraft = load_json(&draft)?;
            let target = match target {
                Some(t) => t,
                None => target_of(&draft)?,
            };
            let report = score(&draft, &b, target, &tolerances.into());
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_text());
            }
        }
        Command::Assemble {
            bundle,
            drafts,
            tolerances,
            out,
        } => {
            let b = load_bundle(&bundle)?;
            let mut chosen = Vec::new();
            for slot in &drafts {
                let (section, topic, path) = parse_slot(slot)?;
                chosen.push(ChosenDraft {
                    section,
                    topic,
                    draft: load_json(&path)?,
                });
            }
            let doc = assemble(&b, &chosen, &tolerances.into())?;
            emit(out.as_deref(), &render_markdown(&doc))?;
        }
        Command::Experiment {
            bundle,
            matrix,
            profiles,
            backends,
            store,
            keep_french,
            tolerances,
        } => {
            let b = load_bundle(&bundle)?;
            let matrix: Vec<PromptSpec> = match matrix {
                Some(p) => load_json(&p)?,
                None => build_matrix(&b, RenderOptions { keep_french })?,
            };
            let mut gateways = Vec::new();
            let mut seen = BTreeMap::new();
            for name in &backends {
                let config = backend_config(profiles.as_deref(), name)?;
                if seen.insert(config.label.clone(), ()).is_some() {
                    bail!("backend label `{}` used twice", config.label);
                }
                gateways.push(Gateway::new(config));
            }
            let store = ResultsStore::open(store);
            let outcome = run_experiment(&b, &gateways, &matrix, &store, &tolerances.into())?;
            println!(
                "{}: {} records ({} errors) appended to {}",
                outcome.run_id,
                outcome.records,
                outcome.errors,
                store.path().display()
            );
        }
        Command::Summarize { store, json } => {
            let rows = summarize(&ResultsStore::open(store).read_all()?);
            if json {
                println!("{}", render_json(&rows));
            } else {
                print!("{}", render_table(&rows));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
