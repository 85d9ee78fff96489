//! Command-line access to a field store: put, get, list, and the engine server.

use std::io::{Read, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use fdb_core::config::{BackendKind, Config};
use fdb_core::engine::ObjectEngine;
use fdb_core::wire::{default_port, serve_root, RemoteEngine};
use fdb_core::{Fdb, Key, Request};
use fdb_hammer::ids::default_schema;

#[derive(Parser, Debug)]
#[command(version, about = "Field store command-line tool")]
struct Cli {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Archive one field and flush.
    Put {
        identifier: String,
        /// Read the payload from this file instead of stdin.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Write a field's bytes to stdout or a file; exit 1 if absent.
    Get {
        identifier: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print matching identifiers and their locations.
    List {
        #[arg(default_value = "")]
        request: String,
    },
    /// Serve the engine under --root until a client asks it to stop.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Allocate object ids through a running server and print them.
    AllocOids {
        #[arg(long)]
        engine: String,
        #[arg(long, default_value = "default")]
        pool: String,
        #[arg(long, default_value = "oids")]
        container: String,
        #[arg(long, default_value_t = 1000)]
        count: u64,
        /// Ids per request.
        #[arg(long, default_value_t = 1)]
        batch: u64,
    },
}

fn config(cli: &Cli) -> anyhow::Result<Config> {
    let c = match (&cli.config, cli.backend, &cli.root) {
        (Some(path), _, _) => Config::load(path)?,
        (None, Some(backend), Some(root)) => Config::new(backend, root),
        _ => bail!("need --config, or --backend and --root"),
    };
    Ok(c)
}

fn open(cli: &Cli) -> anyhow::Result<Fdb> {
    let config = config(cli)?;
    let schema = config.load_schema()?.unwrap_or_else(default_schema);
    Ok(Fdb::open(&config, schema)?)
}

fn main() -> anyhow::Result<std::process::ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Cmd::Put { identifier, file } => {
            let key = Key::parse(identifier)?;
            let data = match file {
                Some(p) => std::fs::read(p).with_context(|| format!("reading {}", p.display()))?,
                None => {
                    let mut buf = Vec::new();
                    std::io::stdin().read_to_end(&mut buf)?;
                    buf
                }
            };
            let mut fdb = open(&cli)?;
            fdb.archive(&key, &data)?;
            fdb.flush()?;
        }
        Cmd::Get { identifier, output } => {
            let key = Key::parse(identifier)?;
            let Some(data) = open(&cli)?.retrieve(&key)? else {
                eprintln!("fdb: {identifier} not found");
                return Ok(std::process::ExitCode::FAILURE);
            };
            match output {
                Some(p) => std::fs::write(p, data)?,
                None => std::io::stdout().write_all(&data)?,
            }
        }
        Cmd::List { request } => {
            let request = match request.trim() {
                "" => Request::all(),
                r => Request::parse(r)?,
            };
            let mut out = std::io::stdout().lock();
            for entry in open(&cli)?.list(&request)? {
                writeln!(out, "{} {}", entry.identifier, entry.location)?;
            }
        }
        Cmd::Serve { bind } => {
            let root = match (&cli.root, &cli.config) {
                (Some(r), _) => r.clone(),
                (None, Some(_)) => config(&cli)?.storage_root.context("config has no storage_root")?,
                (None, None) => bail!("serve needs --root or --config"),
            };
            let bind = bind.clone().unwrap_or_else(|| format!("127.0.0.1:{}", default_port()));
            let server = serve_root(&root, bind.as_str())?;
            println!("listening on {}", server.local_addr());
            std::io::stdout().flush()?;
            server.wait();
        }
        Cmd::AllocOids {
            engine,
            pool,
            container,
            count,
            batch,
        } => {
            if *batch == 0 {
                bail!("--batch must be positive");
            }
            let client = RemoteEngine::connect(engine.as_str())?;
            let p = client.pool_connect(pool, true)?;
            let c = client.cont_open(&p, container, true)?;
            let mut out = std::io::BufWriter::new(std::io::stdout().lock());
            let mut left = *count;
            while left > 0 {
                let n = left.min(*batch);
                let first = client.alloc_oids(&c, n)?;
                for i in 0..n {
                    writeln!(out, "{}", first.offset(i).context("object id space exhausted")?)?;
                }
                left -= n;
            }
            out.flush()?;
        }
    }
    Ok(std::process::ExitCode::SUCCESS)
}
