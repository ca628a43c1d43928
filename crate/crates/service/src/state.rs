use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::http::StatusCode;
use logan_core::{GeneratorModel, ModelConfig, ObjectBank, Session};

use crate::error::{ApiError, ErrorCode};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Manifest path or `toy:SEED`, registered under its own spelling and as `default`.
    pub model: Option<String>,
    pub bank: Option<PathBuf>,
    pub max_sessions: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            model: None,
            bank: None,
            max_sessions: 64,
        }
    }
}

/// Registered models plus toy models built on first use.
#[derive(Default)]
pub struct ModelRegistry {
    named: BTreeMap<String, Arc<GeneratorModel>>,
    toys: Mutex<HashMap<u64, Arc<GeneratorModel>>>,
}

impl ModelRegistry {
    pub fn register(&mut self, name: impl Into<String>, model: Arc<GeneratorModel>) {
        self.named.insert(name.into(), model);
    }

    pub fn resolve(&self, name: &str) -> Result<Arc<GeneratorModel>, ApiError> {
        if let Some(m) = self.named.get(name) {
            return Ok(m.clone());
        }
        let unknown = || {
            ApiError::new(
                StatusCode::NOT_FOUND,
                ErrorCode::UnknownModel,
                format!("model `{name}` is not registered"),
            )
        };
        let seed = name
            .strip_prefix("toy:")
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(unknown)?;
        let mut toys = self.toys.lock().expect("toy cache poisoned");
        if let Some(m) = toys.get(&seed) {
            return Ok(m.clone());
        }
        let model = Arc::new(
            GeneratorModel::instantiate(&ModelConfig::Toy(logan_core::ToyConfig::with_seed(seed)))
                .map_err(|e| ApiError::internal(e.to_string()))?,
        );
        toys.insert(seed, model.clone());
        Ok(model)
    }
}

/// One live session. `writer` admits a single edit at a time.
pub struct SessionSlot {
    pub id: String,
    pub model: String,
    pub session: RwLock<Session>,
    pub writer: tokio::sync::Mutex<()>,
    pub last_error: Mutex<Option<String>>,
}

pub struct AppState {
    pub models: ModelRegistry,
    pub bank: Arc<ObjectBank>,
    pub max_sessions: usize,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(models: ModelRegistry, bank: ObjectBank, max_sessions: usize) -> Self {
        Self {
            models,
            bank: Arc::new(bank),
            max_sessions,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Loads the configured model and bank.
    pub fn from_config(config: &ServiceConfig) -> logan_core::Result<Self> {
        let mut models = ModelRegistry::default();
        if let Some(spec) = &config.model {
            let model = Arc::new(GeneratorModel::instantiate(&spec.parse()?)?);
            models.register(spec.clone(), model.clone());
            models.register("default", model);
        }
        let bank = match &config.bank {
            Some(dir) => ObjectBank::load(dir)?,
            None => ObjectBank::new(),
        };
        Ok(Self::new(models, bank, config.max_sessions))
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    pub fn insert_session(
        &self,
        model: String,
        session: Session,
    ) -> Result<Arc<SessionSlot>, ApiError> {
        let mut table = self.sessions.write().expect("session table poisoned");
        if table.len() >= self.max_sessions {
            return Err(ApiError::new(
                StatusCode::TOO_MANY_REQUESTS,
                ErrorCode::SessionLimit,
                format!("session limit of {} reached", self.max_sessions),
            ));
        }
        let id = format!("s{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let slot = Arc::new(SessionSlot {
            id: id.clone(),
            model,
            session: RwLock::new(session),
            writer: tokio::sync::Mutex::new(()),
            last_error: Mutex::new(None),
        });
        table.insert(id, slot.clone());
        Ok(slot)
    }
}
