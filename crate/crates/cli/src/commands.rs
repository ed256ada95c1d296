use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context as _;
use hefuzz_core::ckks::serialize::{deserialize_keyset, serialize_keyset};
use hefuzz_core::ckks::{CkksBackend, CkksSecret, Context, KeySet};
use hefuzz_core::clustering::{build_model, coverage, read_model, write_model, ClusterModel};
use hefuzz_core::encoding::{generate_shingles, preprocess, read_signatures, write_signatures, MinHasher, SignatureFile};
use hefuzz_core::protocol::{run_protocol, MatchVerdict, Querier, Responder, SessionKind, SessionOptions};
use hefuzz_core::transport::{transcript_json, ChannelMode, TcpChannel, TranscriptLog};
use serde_json::json;

use crate::config::Config;
use crate::error::CliError;

pub(crate) fn out_path(cfg: &Config, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(cfg.out_dir.join(name))
}

/// Writes `value` with the resolved config attached under `"config"`.
pub(crate) fn write_report(cfg: &Config, name: &str, mut value: serde_json::Value) -> Result<PathBuf, CliError> {
    value["config"] = cfg.to_json();
    let path = out_path(cfg, name)?;
    let text = serde_json::to_string_pretty(&value).expect("json");
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_text(cfg: &Config, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = out_path(cfg, name)?;
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Non-empty lines with their 1-based line numbers.
fn read_names(path: &Path) -> Result<Vec<(usize, String)>, CliError> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn load_model(path: &Path) -> Result<ClusterModel, CliError> {
    let f = File::open(path).with_context(|| format!("opening model {}", path.display()))?;
    Ok(read_model(&mut BufReader::new(f)).with_context(|| format!("reading model {}", path.display()))?)
}

fn he_error(e: hefuzz_core::ckks::HeError) -> CliError {
    CliError::Config(e.to_string())
}

pub fn keygen(cfg: &Config, out: &Path, include_secret: bool) -> Result<(), CliError> {
    let ctx = Context::new(cfg.he.clone()).map_err(he_error)?;
    let keys = KeySet::generate(&ctx, cfg.seed);
    let bytes = serialize_keyset(&cfg.he, &keys, include_secret);
    write_key_file(out, &bytes)?;
    let report = write_report(
        cfg,
        "keygen.json",
        json!({ "key_file": out, "includes_secret": include_secret, "bytes": bytes.len() }),
    )?;
    println!(
        "wrote {} ({} bytes, secret key {}) and {}",
        out.display(),
        bytes.len(),
        if include_secret { "included" } else { "omitted" },
        report.display()
    );
    Ok(())
}

fn write_key_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::{OpenOptionsExt, PermissionsExt};
        opts.mode(0o600);
        let mut f = opts.open(path).with_context(|| format!("creating {}", path.display()))?;
        // the mode above only applies to newly created files
        f.set_permissions(fs::Permissions::from_mode(0o600))?;
        f.write_all(bytes)?;
    }
    #[cfg(not(unix))]
    {
        let mut f = opts.open(path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(bytes)?;
    }
    Ok(())
}

pub fn encode(cfg: &Config, input: &Path) -> Result<(), CliError> {
    let dual = cfg.dual_encoder()?;
    let params = dual.combined_params();
    let hasher = MinHasher::new(params.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let names = read_names(input)?;
    let mut signatures = Vec::with_capacity(names.len());
    let mut lines = Vec::with_capacity(names.len());
    let mut rejected = Vec::new();
    for (line, name) in &names {
        match hasher.signature(name) {
            Ok(sig) => {
                signatures.push(sig.values);
                lines.push(*line);
            }
            Err(e) => {
                eprintln!("{}:{line}: {e}", input.display());
                rejected.push(json!({ "line": line, "error": e.to_string() }));
            }
        }
    }
    let file = SignatureFile::new(&params, signatures);
    let path = out_path(cfg, "signatures.mhsg")?;
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    write_signatures(&mut w, &file).context("writing signatures")?;
    w.flush()?;
    write_report(
        cfg,
        "encode.json",
        json!({
            "input": input,
            "signatures": file.signatures.len(),
            "permutations": params.num_permutations,
            "fingerprint": params.fingerprint(),
            "lines": lines,
            "rejected": rejected,
        }),
    )?;
    println!("encoded {} of {} names into {}", file.signatures.len(), names.len(), path.display());
    if rejected.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial {
            failed: rejected.len(),
            total: names.len(),
        })
    }
}

pub fn cluster(cfg: &Config, signatures: &Path) -> Result<(), CliError> {
    let dual = cfg.dual_encoder()?;
    let f = File::open(signatures).with_context(|| format!("opening {}", signatures.display()))?;
    let file = read_signatures(&mut BufReader::new(f)).context("reading signatures")?;
    if !file.matches(&dual.combined_params()) {
        return Err(CliError::Config(format!(
            "{} was encoded with different parameters (fingerprint {:08x})",
            signatures.display(),
            file.fingerprint
        )));
    }
    let sketches = file
        .to_signatures()
        .iter()
        .map(|s| dual.split(s))
        .collect::<Result<Vec<_>, _>>()
        .context("splitting signatures")?;
    let ccfg = cfg.cluster_config(sketches.len());
    let model = build_model(&sketches, &cfg.base_encoding(), &ccfg).context("clustering")?;
    let path = out_path(cfg, "model.clmd")?;
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    write_model(&mut w, &model).context("writing model")?;
    w.flush()?;

    let cov = coverage(&model);
    let half = cov.cumulative.iter().position(|&c| 2 * c >= model.num_records()).map_or(0, |j| j + 1);
    write_report(
        cfg,
        "cluster.json",
        json!({
            "k": model.k(),
            "columns": model.num_columns(),
            "records": model.num_records(),
            "row_sizes": model.row_sizes(),
            "coverage": cov.cumulative,
            "objective": model.objective_history,
        }),
    )?;
    println!(
        "k={} M={} records={}; half the records are within the first {half} columns; model at {}",
        model.k(),
        model.num_columns(),
        model.num_records(),
        path.display()
    );
    Ok(())
}

fn save_transcript(cfg: &Config, stem: &str, log: &TranscriptLog) -> Result<(), CliError> {
    write_text(cfg, &format!("{stem}.csv"), &log.to_csv())?;
    write_report(cfg, &format!("{stem}.json"), transcript_json(log, None))?;
    Ok(())
}

pub fn serve(cfg: &Config, max_sessions: Option<usize>) -> Result<(), CliError> {
    let model_path = cfg
        .paths
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("no model: pass --model or set paths.model".into()))?;
    let model = Arc::new(load_model(model_path)?);
    let mut responder = Responder::<CkksBackend>::new(model, cfg.protocol.tau, cfg.seed)?.with_threads(cfg.protocol.threads);
    let listener = TcpListener::bind(&cfg.transport.address)
        .map_err(|e| CliError::Protocol(hefuzz_core::transport::TransportError::from(e).into()))?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)).context("installing signal handler")?;
    println!("listening on {}", listener.local_addr()?);

    let mut sessions = 0usize;
    while !stop.load(Ordering::SeqCst) && max_sessions.map_or(true, |m| sessions < m) {
        let (stream, peer) = match listener.accept() {
            Ok(x) => x,
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(50));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        sessions += 1;
        stream.set_nonblocking(false)?;
        let chan = TcpChannel::new(stream).map_err(|e| CliError::Protocol(e.into()))?;
        match responder.serve(chan) {
            Ok((kind, log)) => {
                let stem = format!("session-{sessions:04}");
                save_transcript(cfg, &stem, &log)?;
                match kind {
                    SessionKind::Probe => log::info!("{peer}: probe"),
                    SessionKind::Clustered { columns_sent } | SessionKind::Linear { columns_sent } => {
                        log::info!("{peer}: {columns_sent} columns")
                    }
                }
            }
            Err(e) => log::warn!("{peer}: session failed: {e}"),
        }
    }
    println!("served {sessions} sessions");
    Ok(())
}

fn load_secret(cfg: &Config) -> Result<CkksSecret, CliError> {
    match &cfg.paths.keys {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            let file = deserialize_keyset(&bytes).map_err(he_error)?;
            CkksSecret::from_key_file(file).map_err(he_error)
        }
        None => CkksSecret::generate(cfg.he.clone(), cfg.seed).map_err(he_error),
    }
}

pub fn query(cfg: &Config, names_path: &Path, in_process: Option<&Path>) -> Result<(), CliError> {
    let names = read_names(names_path)?;
    let base = cfg.base_encoding();
    let mut accepted = Vec::with_capacity(names.len());
    let mut rejected = 0;
    for (line, name) in &names {
        match generate_shingles(&preprocess(name), &base) {
            Ok(_) => accepted.push((*line, name.clone())),
            Err(e) => {
                eprintln!("{}:{line}: {e}", names_path.display());
                rejected += 1;
            }
        }
    }
    let batch: Vec<String> = accepted.iter().map(|(_, n)| n.clone()).collect();
    let options = SessionOptions {
        early_exit: cfg.protocol.early_exit,
        linear: cfg.protocol.linear,
        compress: cfg.transport.compress,
    };
    let mut querier = Querier::new(load_secret(cfg)?, options, cfg.seed);
    let model_path = in_process.map(Path::to_path_buf).or_else(|| match cfg.transport.mode {
        ChannelMode::InMemory => cfg.paths.model.clone(),
        ChannelMode::Tcp => None,
    });
    let (verdicts, log) = match model_path {
        Some(p) => {
            let model = Arc::new(load_model(&p)?);
            let mut responder =
                Responder::<CkksBackend>::new(model, cfg.protocol.tau, cfg.seed)?.with_threads(cfg.protocol.threads);
            let run = run_protocol(&mut querier, &mut responder, &batch)?;
            (run.verdicts, run.querier_log)
        }
        None => {
            let chan = TcpChannel::connect(&cfg.transport.address).map_err(|e| CliError::Protocol(e.into()))?;
            querier.run(chan, &batch)?
        }
    };
    write_text(cfg, "verdicts.jsonl", &verdict_lines(&accepted, &verdicts))?;
    save_transcript(cfg, "transcript", &log)?;
    let matched = verdicts.iter().filter(|v| v.matched).count();
    println!("{matched} of {} queries matched", verdicts.len());
    if rejected > 0 {
        return Err(CliError::Partial {
            failed: rejected,
            total: names.len(),
        });
    }
    Ok(())
}

/// One JSON object per query; `name_id` is the input line number.
fn verdict_lines(accepted: &[(usize, String)], verdicts: &[MatchVerdict]) -> String {
    accepted
        .iter()
        .zip(verdicts)
        .map(|((line, _), v)| {
            json!({ "name_id": line, "matched": v.matched, "columns_consumed": v.columns_consumed }).to_string() + "\n"
        })
        .collect()
}
