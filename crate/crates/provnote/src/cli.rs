//! Command-line interface.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use ed25519_dalek::VerifyingKey;
use provnote_core::fabric::{ItemId, MetadataPatch};
use provnote_core::query::{self, evaluate, LineageDirection, Question};
use provnote_core::{MetaValue, Metadata};
use serde::Serialize;

use crate::archive::export_archive;
use crate::client::{Client, HttpPeer};
use crate::error::{exit, Error, Result};
use crate::keys::Identity;
use crate::notebook::{ImportRequest, Notebook, Payload};
use crate::replication::sync;
use crate::repo::Repository;
use crate::service::{describe_nodes, router, wire_result};

#[derive(Debug, Parser)]
#[command(
    name = "provnote",
    version,
    about = "Electronic lab notebook with recorded provenance"
)]
pub struct Cli {
    /// Repository directory.
    #[arg(long, global = true, env = "PROVNOTE_REPO", default_value = ".")]
    pub repo: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a repository with the default data model and a new identity.
    Init {
        #[arg(long)]
        dn: String,
        #[arg(long, default_value = "site-1")]
        site_id: String,
    },
    /// Run the REST service, syncing with peers in the background.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        site_id: Option<String>,
        #[arg(long = "peer")]
        peers: Vec<String>,
        /// Seconds between background sync rounds.
        #[arg(long)]
        sync_interval: Option<u64>,
    },
    /// Import a file or physical item, naming the items that influenced it.
    /// The item is named after the file unless `--name` is given.
    Import {
        /// Target collection path.
        #[arg(long)]
        to: String,
        #[arg(long = "type")]
        item_type: String,
        /// Metadata as key=value, repeatable.
        #[arg(long = "meta", value_parser = parse_pair)]
        meta: Vec<(String, String)>,
        #[arg(long = "influence")]
        influences: Vec<ItemId>,
        #[arg(long, conflicts_with_all = ["physical", "location"])]
        file: Option<PathBuf>,
        #[arg(long, requires = "location")]
        physical: bool,
        #[arg(long)]
        location: Option<String>,
        #[arg(long)]
        name: Option<String>,
    },
    /// Create a typed collection.
    Mkcol {
        path: String,
        #[arg(long = "type")]
        collection_type: String,
        #[arg(long = "meta", value_parser = parse_pair)]
        meta: Vec<(String, String)>,
        /// Also create every allowed child collection.
        #[arg(long)]
        scaffold: bool,
    },
    /// Show one item.
    Show { id: ItemId },
    /// Change metadata of an item.
    Update {
        id: ItemId,
        #[arg(long = "meta", value_parser = parse_pair)]
        meta: Vec<(String, String)>,
        #[arg(long = "unset")]
        unset: Vec<String>,
    },
    /// Copy an item to a new path.
    Copy { id: ItemId, path: String },
    /// Tombstone an item.
    Delete { id: ItemId },
    /// Generate an identity file and register its public key here.
    Keygen {
        #[arg(long)]
        dn: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register the public key of another principal.
    RegisterKey {
        #[arg(long)]
        dn: String,
        /// Hex-encoded Ed25519 public key.
        #[arg(long)]
        public_key: String,
    },
    /// Print this repository's DN and public key.
    Whoami,
    /// Full-text and metadata search.
    Search { text: String },
    /// Answer a provenance question about an item.
    Lineage {
        id: ItemId,
        #[arg(long, conflicts_with = "direction")]
        question: Option<Question>,
        #[arg(long)]
        direction: Option<LineageDirection>,
        /// With `quality`, also require a valid signature on the item.
        #[arg(long)]
        require_signature: bool,
    },
    /// Sign an item with the key in an identity file.
    Sign {
        id: ItemId,
        #[arg(long)]
        key: PathBuf,
    },
    /// Check every signature on an item.
    Verify { id: ItemId },
    /// Export an evidential archive for a report.
    Archive {
        id: ItemId,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exchange changes with a running peer.
    Sync {
        #[arg(long)]
        peer: String,
    },
    /// Evaluate a traversal query against the provenance store.
    Query {
        #[arg(long)]
        expr: String,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    if k.is_empty() {
        return Err("empty metadata key".into());
    }
    Ok((k.into(), v.into()))
}

fn metadata(pairs: Vec<(String, String)>) -> Metadata {
    pairs
        .into_iter()
        .map(|(k, v)| (k, MetaValue::String(v)))
        .collect()
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::VALIDATION
            } else {
                exit::OK
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let root = cli.repo;
    if let Command::Init { dn, site_id } = &cli.command {
        let repo = Repository::init(&root, dn, site_id)?;
        print(&serde_json::json!({
            "repo": repo.root(),
            "dn": repo.identity.dn,
            "site_id": repo.config.site_id,
            "public_key": hex::encode(repo.identity.secret_key.verifying_key().to_bytes()),
        }))?;
        return Ok(exit::OK);
    }
    let mut repo = Repository::open(&root)?;
    let nb = repo.notebook.clone();
    match cli.command {
        Command::Init { .. } => unreachable!("handled above"),
        Command::Serve {
            listen,
            site_id,
            peers,
            sync_interval,
        } => {
            if let Some(site) = site_id {
                if site != repo.config.site_id {
                    return Err(Error::InvalidArgument(format!(
                        "repository belongs to site `{}`, not `{site}`",
                        repo.config.site_id
                    )));
                }
            }
            if let Some(l) = listen {
                repo.config.listen = l;
            }
            if !peers.is_empty() {
                repo.config.peers = peers;
            }
            if let Some(s) = sync_interval {
                repo.config.sync_interval_secs = s;
            }
            serve(repo)?;
        }
        Command::Import {
            to,
            item_type,
            meta,
            influences,
            file,
            physical,
            location,
            name,
        } => {
            let name = name.or_else(|| {
                file.as_ref()?
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
            });
            let payload = match (file, physical, location) {
                (Some(f), false, None) => Payload::Bytes(std::fs::read(f)?),
                (None, true, Some(archival_location)) => Payload::Physical { archival_location },
                _ => {
                    return Err(Error::InvalidArgument(
                        "give --file, or --physical with --location".into(),
                    ))
                }
            };
            print(&nb.import(ImportRequest {
                target: to,
                item_type,
                name,
                metadata: metadata(meta),
                payload,
                influences,
                actor_dn: repo.identity.dn.clone(),
            })?)?;
        }
        Command::Mkcol {
            path,
            collection_type,
            meta,
            scaffold,
        } => {
            let made = if scaffold {
                nb.create_study(&path, &collection_type, metadata(meta))?
            } else {
                vec![nb.create_collection(&path, &collection_type, metadata(meta))?]
            };
            print(&made)?;
        }
        Command::Show { id } => print(
            &nb.fabric()
                .get(&id)
                .ok_or(provnote_core::fabric::FabricError::UnknownItem(id))?,
        )?,
        Command::Update { id, meta, unset } => {
            let mut patch: MetadataPatch = meta
                .into_iter()
                .map(|(k, v)| (k, Some(MetaValue::String(v))))
                .collect();
            patch.extend(unset.into_iter().map(|k| (k, None)));
            print(&nb.update_metadata(id, &patch)?)?;
        }
        Command::Copy { id, path } => print(&nb.copy_item(id, &path, &repo.identity.dn)?)?,
        Command::Delete { id } => print(&nb.delete_item(id)?)?,
        Command::Keygen { dn, out } => {
            let identity = Identity::generate(&dn);
            identity.save(&out)?;
            repo.register_key(&dn, &identity.secret_key.verifying_key())?;
            print(&serde_json::json!({
                "dn": dn,
                "public_key": hex::encode(identity.secret_key.verifying_key().to_bytes()),
                "identity_file": out,
            }))?;
        }
        Command::RegisterKey { dn, public_key } => {
            let bytes: [u8; 32] = hex::decode(&public_key)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| {
                    Error::InvalidArgument("public key must be 32 hex-encoded bytes".into())
                })?;
            let key = VerifyingKey::from_bytes(&bytes)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            repo.register_key(&dn, &key)?;
            print(&serde_json::json!({ "registered": dn }))?;
        }
        Command::Whoami => print(&serde_json::json!({
            "dn": repo.identity.dn,
            "site_id": repo.config.site_id,
            "public_key": hex::encode(repo.identity.secret_key.verifying_key().to_bytes()),
        }))?,
        Command::Search { text } => print(&nb.search(&text))?,
        Command::Lineage {
            id,
            question,
            direction,
            require_signature,
        } => lineage(&nb, id, question, direction, require_signature)?,
        Command::Sign { id, key } => {
            let identity = Identity::load(&key)?;
            print(&nb.sign_item(id, &identity.secret_key, &identity.dn)?)?;
        }
        Command::Verify { id } => {
            let checks = nb.verify_item(id)?;
            print(&checks)?;
            if checks.iter().any(|c| !c.valid) {
                return Ok(exit::INTEGRITY);
            }
        }
        Command::Archive { id, out } => print(&export_archive(&nb, id, &out)?)?,
        Command::Sync { peer } => {
            let remote = HttpPeer(Client::new(&peer, repo.identity.clone())?);
            print(&sync(nb.fabric(), &remote)?)?;
        }
        Command::Query { expr } => {
            let parsed = query::parse(&expr)?;
            let store = nb.provenance().view();
            let eval = evaluate(store.graph(), &parsed)?;
            print(&wire_result(store.graph(), &eval.last))?;
        }
    }
    Ok(exit::OK)
}

fn lineage(
    nb: &Notebook,
    id: ItemId,
    question: Option<Question>,
    direction: Option<LineageDirection>,
    require_signature: bool,
) -> Result<()> {
    let question = match (question, direction) {
        (Some(q), _) => q,
        (None, d) => {
            let store = nb.provenance().view();
            let subject = nb.subject_node(&store, id)?;
            let set = query::lineage(
                store.graph(),
                subject,
                d.unwrap_or(LineageDirection::Ancestors),
                None,
            )
            .map_err(|e| Error::Answer(e.into()))?;
            return print(&describe_nodes(store.graph(), set));
        }
    };
    let (store, answer) = nb.answer(id, question, require_signature)?;
    match answer {
        query::Answer::Nodes(set) => print(&describe_nodes(store.graph(), set)),
        query::Answer::Progress(p) => print(&p),
        query::Answer::Quality(r) => print(&r),
    }
}

/// Serves the repository until interrupted, syncing with every configured
/// peer and retrying unacknowledged provenance posts on each round.
pub fn serve(repo: Repository) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&repo.config.listen).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        let repo = Arc::new(repo);
        let background = {
            let repo = repo.clone();
            tokio::spawn(async move {
                let mut tick = tokio::time::interval(Duration::from_secs(
                    repo.config.sync_interval_secs.max(1),
                ));
                tick.tick().await;
                loop {
                    tick.tick().await;
                    let repo = repo.clone();
                    let _ = tokio::task::spawn_blocking(move || sync_round(&repo)).await;
                }
            })
        };
        let app = router(repo.notebook.clone());
        let served = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await;
        background.abort();
        served.map_err(Error::from)
    })
}

/// One background round: retry the journal, then sync with each peer.
pub fn sync_round(repo: &Repository) {
    if let Err(e) = repo.notebook.retry_pending() {
        eprintln!("journal retry failed: {e}");
    }
    for url in &repo.config.peers {
        let outcome = Client::new(url, repo.identity.clone())
            .and_then(|c| sync(repo.notebook.fabric(), &HttpPeer(c)));
        match outcome {
            Ok(r) if !r.is_quiet() => eprintln!(
                "synced with {url}: pulled {}, pushed {}",
                r.pulled.applied, r.pushed.applied
            ),
            Ok(_) => {}
            Err(e) => eprintln!("sync with {url} failed: {e}"),
        }
    }
}
