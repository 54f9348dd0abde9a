//! The `orchestra` command line.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use crate::composition::{Container, ContainerConfig, ContainerOptions};
use crate::correlation::SessionId;
use crate::demos::Demo;
use crate::deployment::{Connector, Frame, LocalRegistry, Location, Net};
use crate::engine::EventLog;
use crate::error::Error;
use crate::state::State;

pub const OK: i32 = 0;
pub const FAILURE: i32 = 1;
pub const USAGE: i32 = 2;

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Parser)]
#[command(name = "orchestra", version, about = "Validate and run service containers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a container config.
    Check { path: PathBuf },
    /// Load a container and run it until its work is done or it is interrupted.
    Run {
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the event log here, one JSON object per line.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Send one request to a running service.
    Call {
        location: String,
        operation: String,
        /// Request payload as a JSON object.
        payload: String,
        #[arg(long)]
        resource: Option<String>,
        /// Wait for the response and print it; otherwise send one-way.
        #[arg(long)]
        solicit: bool,
    },
    /// Run a bundled scenario and compare it with its expected transcript.
    Demo {
        #[arg(value_parser = parse_demo)]
        name: Demo,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn parse_demo(s: &str) -> Result<Demo, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Demo::ALL.iter().map(|d| d.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return OK;
        }
    };
    match cli.command {
        Command::Check { path } => check(&path, out, err),
        Command::Run { path, seed, log } => run(&path, seed, log.as_deref(), out, err),
        Command::Call {
            location,
            operation,
            payload,
            resource,
            solicit,
        } => call(&location, &operation, &payload, resource.as_deref(), solicit, out, err),
        Command::Demo { name, seed } => demo(name, seed, out, err),
    }
}

fn read_config(path: &Path, err: &mut dyn Write) -> Result<ContainerConfig, i32> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        let _ = writeln!(err, "IOError: {}: {e}", path.display());
        USAGE
    })?;
    let cfg = ContainerConfig::parse(&text).map_err(|e| report(&e, err))?;
    cfg.validate().map_err(|e| report(&e, err))?;
    cfg.aggregation().map_err(|e| report(&e, err))?;
    Ok(cfg)
}

fn report(e: &Error, err: &mut dyn Write) -> i32 {
    let _ = writeln!(err, "{e}");
    match e {
        Error::Io(_) => USAGE,
        _ => FAILURE,
    }
}

fn check(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match read_config(path, err) {
        Ok(cfg) => {
            let _ = writeln!(out, "ok: {} service(s)", cfg.services.len());
            OK
        }
        Err(code) => code,
    }
}

fn run(path: &Path, seed: u64, log: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cfg = match read_config(path, err) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let log = match log.map(EventLog::file).transpose() {
        Ok(l) => l.unwrap_or_else(EventLog::discard),
        Err(e) => {
            let _ = writeln!(err, "IOError: {e}");
            return USAGE;
        }
    };
    let opts = ContainerOptions {
        seed,
        log: Arc::new(log),
        ..ContainerOptions::default()
    };
    let c = match Container::load(&cfg, opts) {
        Ok(c) => c,
        Err(e) => return report(&e, err),
    };
    for w in c.warnings() {
        let _ = writeln!(err, "warning: {w}");
    }
    for l in c.socket_locations() {
        let _ = writeln!(out, "listening on {l}");
    }
    let _ = ctrlc::try_set_handler(|| INTERRUPTED.store(true, Ordering::SeqCst));
    let mut shown: BTreeSet<(String, SessionId)> = BTreeSet::new();
    loop {
        let finished = print_completions(&c, &mut shown, out);
        if finished && c.socket_locations().is_empty() {
            break;
        }
        if INTERRUPTED.load(Ordering::SeqCst) {
            let _ = writeln!(out, "stopping");
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    for (name, report) in c.stop() {
        for (id, completion) in report.sessions {
            if shown.insert((name.clone(), id)) {
                let _ = writeln!(out, "{name} session {id}: {completion}");
            }
        }
    }
    OK
}

/// Prints completions not shown yet. True when every firing session has
/// ended and no session is live.
fn print_completions(c: &Container, shown: &mut BTreeSet<(String, SessionId)>, out: &mut dyn Write) -> bool {
    let mut finished = true;
    for name in c.service_names() {
        let Some(e) = c.engine(&name) else { continue };
        for (id, completion) in e.completions() {
            if shown.insert((name.clone(), id)) {
                let _ = writeln!(out, "{name} session {id}: {completion}");
            }
        }
        let firing_done = e.firing_session().is_none_or(|id| e.completion(id).is_some());
        finished &= firing_done && e.snapshot().unfinished == 0;
    }
    let _ = out.flush();
    finished
}

fn call(
    location: &str,
    operation: &str,
    payload: &str,
    resource: Option<&str>,
    solicit: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let at: Location = match location.parse() {
        Ok(l) => l,
        Err(e) => return usage(&e, err),
    };
    let payload = match serde_json::from_str(payload)
        .map_err(|e| Error::Parse(e.to_string()))
        .and_then(|j| State::from_json(&j))
    {
        Ok(p) => p,
        Err(e) => return usage(&e, err),
    };
    let connector = Connector::new(LocalRegistry::new(), Net::new());
    let frame = Frame::request("", operation, payload).with_resource(resource.unwrap_or_default());
    let result = connector.client(&at).and_then(|client| {
        if solicit {
            client.call_blocking(frame)?.into_result().map(Some)
        } else {
            client.call(frame, None).map(|_| None)
        }
    });
    connector.close_all();
    match result {
        Ok(Some(p)) => {
            let _ = writeln!(out, "{}", p.to_json_string().unwrap_or_default());
            OK
        }
        Ok(None) => OK,
        Err(f) => {
            let _ = writeln!(err, "fault: {f}");
            FAILURE
        }
    }
}

fn usage(e: &Error, err: &mut dyn Write) -> i32 {
    let _ = writeln!(err, "{e}");
    USAGE
}

fn demo(d: Demo, seed: u64, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let run = match d.run(seed) {
        Ok(r) => r,
        Err(e) => return report(&e, err),
    };
    for line in &run.actual {
        let _ = writeln!(out, "{line}");
    }
    if run.passed() {
        OK
    } else {
        let _ = write!(err, "{d}: transcript differs\n{}", run.diff());
        FAILURE
    }
}
