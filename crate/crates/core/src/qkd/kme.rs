//! Mock Key Management Entity serving a deterministic epoch pool over HTTP.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use zeroize::Zeroizing;

use super::api::{
    EpochAdvanced, ErrorBody, KeyContainer, KeyEntry, KeyIdsRequest, KeyRequest, KmeStatus,
    EPOCH_HEADER,
};
use super::pool::{
    sim_advance_epoch, sim_generate_pool, validate_key_size, EpochPool, PoolError, QkdKey,
    LINK_SEED_LEN,
};
use super::QkdError;

pub const DEFAULT_MAX_KEY_PER_REQUEST: u64 = 128;

fn default_max_key_per_request() -> u64 {
    DEFAULT_MAX_KEY_PER_REQUEST
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmeConfig {
    pub link_seed_hex: String,
    #[serde(default)]
    pub epoch: u64,
    pub key_count: usize,
    pub key_size_bits: u32,
    pub master_sae_id: String,
    pub slave_sae_id: String,
    pub listen_addr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_kme_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_kme_id: Option<String>,
    #[serde(default = "default_max_key_per_request")]
    pub max_key_per_request: u64,
}

fn valid_sae_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

impl KmeConfig {
    pub fn load(path: &Path) -> Result<Self, QkdError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| QkdError::Config(format!("{}: {e}", path.display())))?;
        let cfg: KmeConfig = serde_json::from_str(&text)
            .map_err(|e| QkdError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn link_seed(&self) -> Result<Zeroizing<[u8; LINK_SEED_LEN]>, QkdError> {
        let bytes = Zeroizing::new(
            hex::decode(self.link_seed_hex.trim())
                .map_err(|e| QkdError::Config(format!("link_seed_hex: {e}")))?,
        );
        let mut seed = Zeroizing::new([0u8; LINK_SEED_LEN]);
        if bytes.len() != LINK_SEED_LEN {
            return Err(QkdError::Config(format!(
                "link_seed_hex must encode {LINK_SEED_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        seed.copy_from_slice(&bytes);
        Ok(seed)
    }

    pub fn validate(&self) -> Result<(), QkdError> {
        self.link_seed()?;
        if self.key_count == 0 {
            return Err(QkdError::Config("key_count must be at least 1".into()));
        }
        validate_key_size(self.key_size_bits).map_err(|e| QkdError::Config(e.to_string()))?;
        for (name, id) in [
            ("master_sae_id", &self.master_sae_id),
            ("slave_sae_id", &self.slave_sae_id),
        ] {
            if !valid_sae_id(id) {
                return Err(QkdError::Config(format!(
                    "{name} must be non-empty and use only [A-Za-z0-9._-]"
                )));
            }
        }
        if self.max_key_per_request == 0 {
            return Err(QkdError::Config(
                "max_key_per_request must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Error answered to a KME client as `{"message": ...}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn unknown_sae(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown SAE_ID {id}"))
    }
}

impl From<PoolError> for ApiError {
    fn from(e: PoolError) -> Self {
        let status = match e {
            PoolError::UnknownKey(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                message: self.message,
            }),
        )
            .into_response()
    }
}

pub struct Kme {
    source_kme_id: String,
    target_kme_id: String,
    master_sae_id: String,
    slave_sae_id: String,
    max_key_per_request: u64,
    pool: Mutex<EpochPool>,
}

impl Kme {
    pub fn new(cfg: &KmeConfig) -> Result<Self, QkdError> {
        cfg.validate()?;
        let seed = cfg.link_seed()?;
        let pool = sim_generate_pool(&seed, cfg.epoch, cfg.key_count, cfg.key_size_bits)?;
        Ok(Kme {
            source_kme_id: cfg
                .source_kme_id
                .clone()
                .unwrap_or_else(|| format!("kme-{}", cfg.master_sae_id)),
            target_kme_id: cfg
                .target_kme_id
                .clone()
                .unwrap_or_else(|| format!("kme-{}", cfg.slave_sae_id)),
            master_sae_id: cfg.master_sae_id.clone(),
            slave_sae_id: cfg.slave_sae_id.clone(),
            max_key_per_request: cfg.max_key_per_request,
            pool: Mutex::new(pool),
        })
    }

    fn pool(&self) -> MutexGuard<'_, EpochPool> {
        // Every pool mutation validates before it writes, so a panic elsewhere
        // cannot leave the pool half-updated.
        self.pool.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn status(&self, slave_sae_id: &str) -> Result<KmeStatus, ApiError> {
        if slave_sae_id != self.slave_sae_id {
            return Err(ApiError::unknown_sae(slave_sae_id));
        }
        let pool = self.pool();
        Ok(KmeStatus {
            source_kme_id: self.source_kme_id.clone(),
            target_kme_id: self.target_kme_id.clone(),
            master_sae_id: self.master_sae_id.clone(),
            slave_sae_id: self.slave_sae_id.clone(),
            key_size: pool.key_size_bits(),
            stored_key_count: pool.stored_key_count() as u64,
            max_key_count: pool.max_key_count() as u64,
            max_key_per_request: self.max_key_per_request,
        })
    }

    pub fn enc_keys(
        &self,
        slave_sae_id: &str,
        req: &KeyRequest,
    ) -> Result<(u64, Vec<QkdKey>), ApiError> {
        if slave_sae_id != self.slave_sae_id {
            return Err(ApiError::unknown_sae(slave_sae_id));
        }
        let mut pool = self.pool();
        if let Some(size) = req.size {
            if size != pool.key_size_bits() {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    format!(
                        "requested key size {size} bits is not supported (pool serves {})",
                        pool.key_size_bits()
                    ),
                ));
            }
        }
        if req.number == 0 {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "number must be at least 1",
            ));
        }
        let number = usize::try_from(req.number).unwrap_or(usize::MAX);
        if number > pool.stored_key_count() {
            return Err(PoolError::InsufficientKeys {
                requested: number,
                available: pool.stored_key_count(),
            }
            .into());
        }
        if req.number > self.max_key_per_request {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!(
                    "number {} exceeds max_key_per_request {}",
                    req.number, self.max_key_per_request
                ),
            ));
        }
        let keys = pool.take_enc_keys(number)?;
        log::debug!("enc_keys: delivered {} key(s) to master", keys.len());
        Ok((pool.epoch(), keys))
    }

    pub fn dec_keys(
        &self,
        master_sae_id: &str,
        req: &KeyIdsRequest,
    ) -> Result<(u64, Vec<QkdKey>), ApiError> {
        if master_sae_id != self.master_sae_id {
            return Err(ApiError::unknown_sae(master_sae_id));
        }
        if req.key_ids.is_empty() {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "key_IDs must not be empty",
            ));
        }
        let ids: Vec<_> = req.key_ids.iter().map(|e| e.key_id).collect();
        let mut pool = self.pool();
        let keys = pool.take_dec_keys(&ids)?;
        log::debug!("dec_keys: delivered {} key(s) to slave", keys.len());
        Ok((pool.epoch(), keys))
    }

    /// Moves to the next epoch and returns its number.
    pub fn advance_epoch(&self) -> Result<u64, ApiError> {
        let mut pool = self.pool();
        *pool = sim_advance_epoch(&pool)?;
        log::info!("advanced to epoch {}", pool.epoch());
        Ok(pool.epoch())
    }

    pub fn epoch(&self) -> u64 {
        self.pool().epoch()
    }
}

type Shared = State<Arc<Kme>>;

fn keys_response(epoch: u64, keys: &[QkdKey]) -> Response {
    let body = KeyContainer {
        keys: keys.iter().map(KeyEntry::encode).collect(),
    };
    ([(EPOCH_HEADER, epoch.to_string())], Json(body)).into_response()
}

fn bad_body(rejection: JsonRejection) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, rejection.body_text())
}

async fn status_handler(State(kme): Shared, UrlPath(sae): UrlPath<String>) -> Response {
    match kme.status(&sae) {
        Ok(s) => Json(s).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn enc_keys_handler(
    State(kme): Shared,
    UrlPath(sae): UrlPath<String>,
    body: Result<Json<KeyRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    let (epoch, keys) = kme.enc_keys(&sae, &req)?;
    Ok(keys_response(epoch, &keys))
}

async fn dec_keys_handler(
    State(kme): Shared,
    UrlPath(sae): UrlPath<String>,
    body: Result<Json<KeyIdsRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    let (epoch, keys) = kme.dec_keys(&sae, &req)?;
    Ok(keys_response(epoch, &keys))
}

async fn advance_handler(State(kme): Shared) -> Result<Json<EpochAdvanced>, ApiError> {
    Ok(Json(EpochAdvanced {
        epoch: kme.advance_epoch()?,
    }))
}

pub fn router(kme: Arc<Kme>) -> Router {
    Router::new()
        .route("/api/v1/keys/{sae_id}/status", get(status_handler))
        .route("/api/v1/keys/{sae_id}/enc_keys", post(enc_keys_handler))
        .route("/api/v1/keys/{sae_id}/dec_keys", post(dec_keys_handler))
        .route("/admin/epoch/advance", post(advance_handler))
        .with_state(kme)
}

/// A KME running on its own thread. Dropping the handle stops it.
pub struct KmeHandle {
    addr: SocketAddr,
    kme: Arc<Kme>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl KmeHandle {
    /// Binds `cfg.listen_addr` and starts serving.
    pub fn spawn(cfg: &KmeConfig) -> Result<Self, QkdError> {
        let kme = Arc::new(Kme::new(cfg)?);
        let listener = std::net::TcpListener::bind(&cfg.listen_addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(kme.clone());
        let thread = std::thread::Builder::new()
            .name("qkd-kme".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener)?;
                    axum::serve(listener, app)
                        .with_graceful_shutdown(async {
                            let _ = rx.await;
                        })
                        .await
                })
            })?;
        Ok(KmeHandle {
            addr,
            kme,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn kme(&self) -> &Arc<Kme> {
        &self.kme
    }

    /// Blocks until the server stops.
    pub fn join(mut self) -> Result<(), QkdError> {
        match self.thread.take() {
            Some(t) => t
                .join()
                .map_err(|_| QkdError::Config("KME thread panicked".into()))?
                .map_err(QkdError::from),
            None => Ok(()),
        }
    }
}

impl Drop for KmeHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
