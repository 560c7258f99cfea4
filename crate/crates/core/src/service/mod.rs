//! Interactive sessions over HTTP.
//!
//! [`SessionManager`] holds the sessions and is usable without a server;
//! [`router`] exposes it over HTTP with a server-sent event stream per
//! session. Each started session runs its loop on its own thread.

mod http;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::watch;

use crate::config::{FileConfig, ProviderKind, Providers};
use crate::orchestrator::{
    Agent, DeliverError, Event, EventKind, EventSink, FeedbackSlot, RunReport, SessionConfig,
};
use crate::sim::{Scenario, META_FILE};

pub use http::{router, serve};

pub use crate::bench::SCRIPT_FILE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session is not waiting for feedback")]
    NotAwaitingFeedback,
    #[error("answer must be non-empty")]
    EmptyAnswer,
    #[error("session is still running")]
    SessionStillRunning,
    #[error("session was already started")]
    AlreadyStarted,
    #[error("cannot prepare session: {0}")]
    Setup(String),
}

/// Scenario bundles found directly under a root directory.
#[derive(Debug, Clone)]
pub struct ScenarioCatalog {
    root: PathBuf,
}

impl ScenarioCatalog {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ScenarioCatalog { root: root.into() }
    }

    pub fn list(&self) -> Vec<String> {
        let Ok(dir) = std::fs::read_dir(&self.root) else {
            return Vec::new();
        };
        let mut names: Vec<String> = dir
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(META_FILE).is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        names.sort();
        names
    }

    /// Bundle directory for `name`. Only plain names under the root resolve.
    pub fn resolve(&self, name: &str) -> Result<PathBuf, ServiceError> {
        let plain = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
            && !name.starts_with('.');
        let dir = self.root.join(name);
        if plain && dir.join(META_FILE).is_file() {
            Ok(dir)
        } else {
            Err(ServiceError::UnknownScenario(name.to_string()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Pending,
    Running,
    AwaitingFeedback,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub task: String,
    pub scenario_ref: String,
    pub status: SessionStatus,
}

struct Session {
    info: Mutex<SessionInfo>,
    config: SessionConfig,
    bundle: PathBuf,
    events: Mutex<Vec<Event>>,
    count: watch::Sender<usize>,
    slot: FeedbackSlot,
    report: Mutex<Option<RunReport>>,
}

impl Session {
    fn set_status(&self, status: SessionStatus) {
        self.info.lock().unwrap_or_else(|e| e.into_inner()).status = status;
    }

    fn status(&self) -> SessionStatus {
        self.info.lock().unwrap_or_else(|e| e.into_inner()).status
    }
}

impl EventSink for Session {
    fn emit(&self, event: &Event) {
        match &event.kind {
            EventKind::FeedbackRequested { .. } => self.set_status(SessionStatus::AwaitingFeedback),
            EventKind::FeedbackReceived { .. } => self.set_status(SessionStatus::Running),
            _ => {}
        }
        let len = {
            let mut events = self.events.lock().unwrap_or_else(|e| e.into_inner());
            events.push(event.clone());
            events.len()
        };
        self.count.send_replace(len);
    }
}

/// Live view of one session's event log.
pub struct Subscription {
    session: Arc<Session>,
    rx: watch::Receiver<usize>,
    next: usize,
}

impl Subscription {
    /// Events not yet delivered to this subscriber, waiting if there are
    /// none. Returns an empty batch once the terminal event was delivered.
    pub async fn next_batch(&mut self) -> Vec<Event> {
        loop {
            let batch: Vec<Event> = {
                let events = self
                    .session
                    .events
                    .lock()
                    .unwrap_or_else(|e| e.into_inner());
                events[self.next.min(events.len())..].to_vec()
            };
            if !batch.is_empty() {
                self.next += batch.len();
                return batch;
            }
            if self.finished() {
                return Vec::new();
            }
            if self.rx.changed().await.is_err() {
                return Vec::new();
            }
        }
    }

    fn finished(&self) -> bool {
        let events = self
            .session
            .events
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        self.next >= events.len()
            && events
                .last()
                .is_some_and(|e| matches!(e.kind, EventKind::Terminated { .. }))
    }
}

/// Builds chat and embedding providers for a session's bundle directory.
pub type ProviderFactory = dyn Fn(&Path) -> Result<Providers, String> + Send + Sync;

pub struct SessionManager {
    catalog: ScenarioCatalog,
    providers: Box<ProviderFactory>,
    sessions: Mutex<BTreeMap<String, Arc<Session>>>,
    next_id: AtomicU64,
}

impl SessionManager {
    pub fn new(catalog: ScenarioCatalog, providers: Box<ProviderFactory>) -> Self {
        SessionManager {
            catalog,
            providers,
            sessions: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Scripted sessions read `script.jsonl` from their bundle; http
    /// sessions share one configuration.
    pub fn with_provider_kind(
        catalog: ScenarioCatalog,
        kind: ProviderKind,
        file: FileConfig,
    ) -> Self {
        let factory: Box<ProviderFactory> = Box::new(move |bundle: &Path| {
            Providers::build(kind, &bundle.join(SCRIPT_FILE), &file).map_err(|e| e.to_string())
        });
        SessionManager::new(catalog, factory)
    }

    pub fn catalog(&self) -> &ScenarioCatalog {
        &self.catalog
    }

    fn get(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn create_session(
        &self,
        task: &str,
        scenario_ref: &str,
        config: SessionConfig,
    ) -> Result<String, ServiceError> {
        if task.trim().is_empty() {
            return Err(ServiceError::InvalidConfig("task must be non-empty".into()));
        }
        config
            .validate()
            .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
        let bundle = self.catalog.resolve(scenario_ref)?;
        let id = format!("s{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let session = Arc::new(Session {
            info: Mutex::new(SessionInfo {
                session_id: id.clone(),
                task: task.to_string(),
                scenario_ref: scenario_ref.to_string(),
                status: SessionStatus::Pending,
            }),
            config,
            bundle,
            events: Mutex::new(Vec::new()),
            count: watch::channel(0).0,
            slot: FeedbackSlot::new(),
            report: Mutex::new(None),
        });
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.clone(), session);
        Ok(id)
    }

    /// Launches the loop on a background thread.
    pub fn start(&self, id: &str) -> Result<(), ServiceError> {
        let session = self.get(id)?;
        {
            let mut info = session.info.lock().unwrap_or_else(|e| e.into_inner());
            if info.status != SessionStatus::Pending {
                return Err(ServiceError::AlreadyStarted);
            }
            info.status = SessionStatus::Running;
        }
        let prepared = Scenario::load(&session.bundle)
            .map_err(|e| e.to_string())
            .and_then(|sc| (self.providers)(&session.bundle).map(|p| (sc, p)));
        let (mut scenario, providers) = match prepared {
            Ok(v) => v,
            Err(e) => {
                session.set_status(SessionStatus::Pending);
                return Err(ServiceError::Setup(e));
            }
        };
        let worker = Arc::clone(&session);
        std::thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || {
                let task = worker
                    .info
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .task
                    .clone();
                let agent = Agent::new(
                    &*providers.chat,
                    &*providers.embedder,
                    worker.config.clone(),
                )
                .expect("config validated at creation");
                let report = agent.run_task(&task, &mut scenario, &worker.slot, Some(&*worker));
                *worker.report.lock().unwrap_or_else(|e| e.into_inner()) = Some(report);
                worker.set_status(SessionStatus::Finished);
                // wake subscribers parked after the terminal event
                worker.count.send_modify(|_| {});
            })
            .map_err(|e| ServiceError::Setup(e.to_string()))?;
        Ok(())
    }

    pub fn subscribe(&self, id: &str) -> Result<Subscription, ServiceError> {
        let session = self.get(id)?;
        let rx = session.count.subscribe();
        Ok(Subscription {
            session,
            rx,
            next: 0,
        })
    }

    pub fn post_feedback(&self, id: &str, answer: &str) -> Result<(), ServiceError> {
        let session = self.get(id)?;
        session.slot.deliver(answer).map_err(|e| match e {
            DeliverError::NotAwaiting => ServiceError::NotAwaitingFeedback,
            DeliverError::EmptyAnswer => ServiceError::EmptyAnswer,
        })
    }

    pub fn report(&self, id: &str) -> Result<RunReport, ServiceError> {
        let session = self.get(id)?;
        let report = session.report.lock().unwrap_or_else(|e| e.into_inner());
        report.clone().ok_or(ServiceError::SessionStillRunning)
    }

    pub fn info(&self, id: &str) -> Result<SessionInfo, ServiceError> {
        let session = self.get(id)?;
        let info = session
            .info
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone();
        Ok(info)
    }

    pub fn status(&self, id: &str) -> Result<SessionStatus, ServiceError> {
        Ok(self.get(id)?.status())
    }

    pub fn list(&self) -> Vec<SessionInfo> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .map(|s| s.info.lock().unwrap_or_else(|e| e.into_inner()).clone())
            .collect()
    }

    /// Events emitted so far.
    pub fn events(&self, id: &str) -> Result<Vec<Event>, ServiceError> {
        let session = self.get(id)?;
        let events = session
            .events
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone();
        Ok(events)
    }
}
