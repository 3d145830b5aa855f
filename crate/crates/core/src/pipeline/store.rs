//! On-disk run directories.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.json        initial configuration
//! decisions.jsonl    append-only event log, one JSON event per line
//! state.json         materialised state after the last event
//! stages/stage_k.json
//! sensitivity.{json,md,csv}
//! risk.{csv,json}
//! report.{md,json}
//! run.lock           advisory writer lock
//! ```
//!
//! The event log is authoritative; everything else is derived and rewritten
//! after every event.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::report::run_report;
use super::run::{Engine, Event, EventKind, RunState, StepSummary};
use crate::error::{Error, Result};
use crate::risk::risk_report;

const LOG_FILE: &str = "decisions.jsonl";
const STATE_FILE: &str = "state.json";
const LOCK_FILE: &str = "run.lock";

/// A run directory opened for writing. Holds the advisory lock until dropped.
pub struct RunDir {
    path: PathBuf,
    engine: Engine,
    events: Vec<Event>,
    _lock: File,
}

fn acquire_lock(dir: &Path) -> Result<File> {
    let path = dir.join(LOCK_FILE);
    let f = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    match f.try_lock() {
        Ok(()) => Ok(f),
        Err(fs::TryLockError::WouldBlock) => Err(Error::Busy(dir.display().to_string())),
        Err(fs::TryLockError::Error(e)) => Err(Error::io(&path, e)),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads and parses an event log.
pub fn read_events(dir: &Path) -> Result<Vec<Event>> {
    let path = dir.join(LOG_FILE);
    let f = File::open(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(format!("no run at {}", dir.display()))
        } else {
            Error::io(&path, e)
        }
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(Some(i), e.to_string()))?);
    }
    Ok(out)
}

/// Reads the materialised state without taking the lock.
pub fn read_state(dir: &Path) -> Result<RunState> {
    let path = dir.join(STATE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(format!("no run at {}", dir.display()))
        } else {
            Error::io(&path, e)
        }
    })?;
    Ok(serde_json::from_str(&text)?)
}

impl RunDir {
    /// Creates a new run. Fails if `dir` already holds a log.
    pub fn create(dir: &Path, config: RunConfig, actor: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let lock = acquire_lock(dir)?;
        if dir.join(LOG_FILE).exists() {
            return Err(Error::State(format!("{} already holds a run", dir.display())));
        }
        let init = Event::new(
            0,
            actor,
            EventKind::Init {
                config: Box::new(config.clone()),
            },
        );
        let engine = Engine::init(&init)?;
        write_file(&dir.join("config.json"), &config.to_json())?;
        let mut run = Self {
            path: dir.to_path_buf(),
            engine,
            events: Vec::new(),
            _lock: lock,
        };
        run.append(&init)?;
        run.write_artifacts()?;
        Ok(run)
    }

    /// Opens an existing run by replaying its log.
    pub fn open(dir: &Path) -> Result<Self> {
        if !dir.join(LOG_FILE).exists() {
            return Err(Error::NotFound(format!("no run at {}", dir.display())));
        }
        let lock = acquire_lock(dir)?;
        let events = read_events(dir)?;
        let engine = Engine::replay(&events)?;
        Ok(Self {
            path: dir.to_path_buf(),
            engine,
            events,
            _lock: lock,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn state(&self) -> &RunState {
        &self.engine.state
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Validates, applies and persists one event.
    pub fn commit(&mut self, kind: EventKind, actor: &str) -> Result<StepSummary> {
        let event = Event::new(self.events.len() as u64, actor, kind);
        let summary = self.engine.apply(&event)?;
        self.append(&event)?;
        self.write_artifacts()?;
        Ok(summary)
    }

    fn append(&mut self, event: &Event) -> Result<()> {
        let path = self.path.join(LOG_FILE);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
        f.sync_data().map_err(|e| Error::io(&path, e))?;
        self.events.push(event.clone());
        Ok(())
    }

    /// Rewrites every derived file from the current state.
    pub fn write_artifacts(&self) -> Result<()> {
        let st = &self.engine.state;
        let stages = self.path.join("stages");
        fs::create_dir_all(&stages).map_err(|e| Error::io(&stages, e))?;
        for rec in &st.stages {
            write_file(
                &stages.join(format!("stage_{}.json", rec.index)),
                &serde_json::to_string_pretty(rec)?,
            )?;
        }
        if let Some(rep) = &st.sensitivity {
            write_file(&self.path.join("sensitivity.json"), &rep.to_json()?)?;
            write_file(&self.path.join("sensitivity.md"), &rep.to_markdown())?;
            write_file(&self.path.join("sensitivity.csv"), &rep.to_csv()?)?;
        }
        if let Some(rec) = st.stages.iter().find(|s| s.name == "risk-filter") {
            let rep = risk_report(rec.set.members.iter().chain(&rec.removed), true);
            write_file(&self.path.join("risk.csv"), &rep.to_csv()?)?;
            write_file(&self.path.join("risk.json"), &rep.to_json()?)?;
        }
        let report = run_report(st);
        write_file(&self.path.join("report.md"), &report.to_markdown())?;
        write_file(&self.path.join("report.json"), &report.to_json()?)?;
        write_file(&self.path.join(STATE_FILE), &serde_json::to_string(st)?)
    }
}

/// A directory of runs named `run-0001`, `run-0002`, ...
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Directory for `id`; rejects ids that could escape the root.
    pub fn path(&self, id: &str) -> Result<PathBuf> {
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::NotFound(format!("run '{id}'")));
        }
        Ok(self.root.join(id))
    }

    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.root)
            .map_err(|e| Error::io(&self.root, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(LOG_FILE).exists())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn create(&self, config: RunConfig, actor: &str) -> Result<(String, RunDir)> {
        config.validate()?;
        let mut n = self.list()?.len() + 1;
        loop {
            let id = format!("run-{n:04}");
            let dir = self.root.join(&id);
            if fs::create_dir(&dir).is_ok() {
                return Ok((id, RunDir::create(&dir, config, actor)?));
            }
            n += 1;
        }
    }

    pub fn open(&self, id: &str) -> Result<RunDir> {
        RunDir::open(&self.path(id)?)
    }

    pub fn state(&self, id: &str) -> Result<RunState> {
        read_state(&self.path(id)?)
    }
}
