//! Blocking ETSI GS QKD 014 client.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::http::Response;
use ureq::Body;
use uuid::Uuid;

use super::api::{
    EpochAdvanced, ErrorBody, KeyContainer, KeyIdsRequest, KeyRequest, KmeStatus, EPOCH_HEADER,
};
use super::pool::QkdKey;
use super::QkdError;

#[derive(Debug, Clone)]
pub struct KmeClient {
    base: String,
    agent: ureq::Agent,
}

impl KmeClient {
    /// `endpoint` is the KME base URL, e.g. `http://127.0.0.1:8443`.
    pub fn new(endpoint: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .into();
        KmeClient {
            base: endpoint.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<(T, Option<u64>), QkdError> {
        let resp = self
            .agent
            .get(&self.url(path))
            .call()
            .map_err(|e| QkdError::Network(e.to_string()))?;
        read(resp)
    }

    fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<(T, Option<u64>), QkdError> {
        let resp = self
            .agent
            .post(&self.url(path))
            .send_json(body)
            .map_err(|e| QkdError::Network(e.to_string()))?;
        read(resp)
    }

    pub fn status(&self, slave_sae_id: &str) -> Result<KmeStatus, QkdError> {
        Ok(self.get(&format!("/api/v1/keys/{slave_sae_id}/status"))?.0)
    }

    /// Keys for the master SAE. When the KME does not report an epoch the
    /// keys are tagged with epoch 0.
    pub fn enc_keys(
        &self,
        slave_sae_id: &str,
        number: u64,
        size_bits: Option<u32>,
    ) -> Result<Vec<QkdKey>, QkdError> {
        let (container, epoch): (KeyContainer, _) = self.post(
            &format!("/api/v1/keys/{slave_sae_id}/enc_keys"),
            &KeyRequest {
                number,
                size: size_bits,
            },
        )?;
        decode_keys(container, epoch)
    }

    pub fn dec_keys(&self, master_sae_id: &str, key_ids: &[Uuid]) -> Result<Vec<QkdKey>, QkdError> {
        let (container, epoch): (KeyContainer, _) = self.post(
            &format!("/api/v1/keys/{master_sae_id}/dec_keys"),
            &KeyIdsRequest::new(key_ids),
        )?;
        let keys = decode_keys(container, epoch)?;
        if keys.iter().map(|k| k.key_id).ne(key_ids.iter().copied()) {
            return Err(QkdError::Decode("KME returned different key_IDs".into()));
        }
        Ok(keys)
    }

    /// Simulator-only: moves the KME to its next epoch.
    pub fn advance_epoch(&self) -> Result<u64, QkdError> {
        let (body, _): (EpochAdvanced, _) = self.post("/admin/epoch/advance", &())?;
        Ok(body.epoch)
    }
}

fn read<T: DeserializeOwned>(mut resp: Response<Body>) -> Result<(T, Option<u64>), QkdError> {
    let status = resp.status();
    let epoch = resp
        .headers()
        .get(EPOCH_HEADER)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok());
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| QkdError::Network(e.to_string()))?;
    if !status.is_success() {
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.message)
            .unwrap_or(text);
        return Err(QkdError::Protocol {
            status: status.as_u16(),
            message,
        });
    }
    let body = serde_json::from_str(&text).map_err(|e| QkdError::Decode(e.to_string()))?;
    Ok((body, epoch))
}

fn decode_keys(container: KeyContainer, epoch: Option<u64>) -> Result<Vec<QkdKey>, QkdError> {
    container
        .keys
        .iter()
        .map(|k| {
            k.decode(epoch.unwrap_or(0))
                .map_err(|e| QkdError::Decode(format!("key {}: {e}", k.key_id)))
        })
        .collect()
}

pub fn client_get_status(kme_endpoint: &str, slave_sae_id: &str) -> Result<KmeStatus, QkdError> {
    KmeClient::new(kme_endpoint).status(slave_sae_id)
}

pub fn client_get_enc_keys(
    kme_endpoint: &str,
    slave_sae_id: &str,
    number: u64,
    size_bits: u32,
) -> Result<Vec<QkdKey>, QkdError> {
    KmeClient::new(kme_endpoint).enc_keys(slave_sae_id, number, Some(size_bits))
}

pub fn client_get_dec_keys(
    kme_endpoint: &str,
    master_sae_id: &str,
    key_ids: &[Uuid],
) -> Result<Vec<QkdKey>, QkdError> {
    KmeClient::new(kme_endpoint).dec_keys(master_sae_id, key_ids)
}
