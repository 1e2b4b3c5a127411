//! Per-party configuration, accepted as flat key-value text or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::AccelCostModel;
use crate::error::{Error, Result};
use crate::fabric::LinkModel;
use crate::protocol::ModeFlags;
use crate::ring::{PartyId, NUM_PARTIES};

pub const DEFAULT_MEMORY_SIZE: u64 = 64 * 1024 * 1024;
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Sockets,
    Simulated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyConfig {
    pub party_id: PartyId,
    /// host:port endpoints for parties 0..3; entry `party_id` is this
    /// node's own bind address.
    pub peers: [String; NUM_PARTIES],
    #[serde(default = "default_memory_size")]
    pub memory_size: u64,
    #[serde(default = "default_num_accels")]
    pub num_accels: usize,
    #[serde(default = "default_clock_mhz")]
    pub clock_mhz: f64,
    #[serde(default = "default_cycles_per_element")]
    pub cycles_per_element: f64,
    #[serde(default = "default_dma_startup_us")]
    pub dma_startup_us: f64,
    #[serde(default = "default_bandwidth_gbps")]
    pub bandwidth_gbps: f64,
    #[serde(default = "default_latency_us")]
    pub latency_us: f64,
    #[serde(default)]
    pub malicious: bool,
    #[serde(default = "default_true")]
    pub masking: bool,
    #[serde(default)]
    pub batched_hash: bool,
    #[serde(default)]
    pub key_file: Option<PathBuf>,
    pub transport: Transport,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_memory_size() -> u64 {
    DEFAULT_MEMORY_SIZE
}
fn default_num_accels() -> usize {
    1
}
fn default_clock_mhz() -> f64 {
    275.0
}
fn default_cycles_per_element() -> f64 {
    2.0
}
fn default_dma_startup_us() -> f64 {
    1.0
}
fn default_bandwidth_gbps() -> f64 {
    100.0
}
fn default_latency_us() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl PartyConfig {
    /// A simulation config with library defaults; endpoints are unused by
    /// the simulated transport.
    pub fn simulated(party_id: PartyId) -> Self {
        PartyConfig {
            party_id,
            peers: [
                "sim:0".to_string(),
                "sim:1".to_string(),
                "sim:2".to_string(),
                "sim:3".to_string(),
            ],
            memory_size: DEFAULT_MEMORY_SIZE,
            num_accels: 1,
            clock_mhz: 275.0,
            cycles_per_element: 2.0,
            dma_startup_us: 1.0,
            bandwidth_gbps: 100.0,
            latency_us: 1.0,
            malicious: false,
            masking: true,
            batched_hash: false,
            key_file: None,
            transport: Transport::Simulated,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn mode_flags(&self) -> ModeFlags {
        ModeFlags {
            malicious: self.malicious,
            masking: self.masking,
            batched_hash: self.batched_hash,
        }
    }

    pub fn cost_model(&self) -> AccelCostModel {
        AccelCostModel {
            clock_mhz: self.clock_mhz,
            cycles_per_element: self.cycles_per_element,
            dma_startup_us: self.dma_startup_us,
        }
    }

    pub fn link_model(&self) -> LinkModel {
        LinkModel {
            bandwidth_gbps: self.bandwidth_gbps,
            latency_us: self.latency_us,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.party_id as usize >= NUM_PARTIES {
            return Err(Error::Config(format!(
                "party_id {} out of range",
                self.party_id
            )));
        }
        if self.num_accels == 0 {
            return Err(Error::Config("num_accels must be at least 1".into()));
        }
        self.cost_model().validate()?;
        self.link_model().validate()?;
        if self.transport == Transport::Sockets {
            let mut seen = std::collections::HashSet::new();
            for e in &self.peers {
                if !seen.insert(e.clone()) {
                    return Err(Error::Config(format!("duplicate endpoint {e}")));
                }
            }
        }
        Ok(())
    }

    /// Parses JSON (content starting with '{') or flat `key = value` text
    /// with keys named exactly like the fields; `peers` is comma-separated.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let cfg: PartyConfig = if trimmed.starts_with('{') {
            serde_json::from_str(trimmed)
                .map_err(|e| Error::Config(format!("json config: {e}")))?
        } else {
            Self::parse_kv(text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn parse_kv(text: &str) -> Result<Self> {
        let mut party_id: Option<PartyId> = None;
        let mut peers: Option<[String; NUM_PARTIES]> = None;
        let mut transport: Option<Transport> = None;
        let mut cfg = PartyConfig::simulated(0);

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |e: &dyn std::fmt::Display| {
                Error::Config(format!("line {}: {key}: {e}", lineno + 1))
            };
            match key {
                "party_id" => party_id = Some(value.parse().map_err(|e| bad(&e))?),
                "peers" => {
                    let list: Vec<String> =
                        value.split(',').map(|s| s.trim().to_string()).collect();
                    if list.len() != NUM_PARTIES {
                        return Err(Error::Config(format!(
                            "peers needs {NUM_PARTIES} endpoints, got {}",
                            list.len()
                        )));
                    }
                    peers = Some(list.try_into().unwrap());
                }
                "memory_size" => cfg.memory_size = value.parse().map_err(|e| bad(&e))?,
                "num_accels" => cfg.num_accels = value.parse().map_err(|e| bad(&e))?,
                "clock_mhz" => cfg.clock_mhz = value.parse().map_err(|e| bad(&e))?,
                "cycles_per_element" => {
                    cfg.cycles_per_element = value.parse().map_err(|e| bad(&e))?
                }
                "dma_startup_us" => cfg.dma_startup_us = value.parse().map_err(|e| bad(&e))?,
                "bandwidth_gbps" => cfg.bandwidth_gbps = value.parse().map_err(|e| bad(&e))?,
                "latency_us" => cfg.latency_us = value.parse().map_err(|e| bad(&e))?,
                "malicious" => cfg.malicious = value.parse().map_err(|e| bad(&e))?,
                "masking" => cfg.masking = value.parse().map_err(|e| bad(&e))?,
                "batched_hash" => cfg.batched_hash = value.parse().map_err(|e| bad(&e))?,
                "key_file" => cfg.key_file = Some(PathBuf::from(value)),
                "timeout_ms" => cfg.timeout_ms = value.parse().map_err(|e| bad(&e))?,
                "transport" => {
                    transport = Some(match value {
                        "sockets" => Transport::Sockets,
                        "simulated" | "sim" => Transport::Simulated,
                        other => {
                            return Err(Error::Config(format!("unknown transport {other}")))
                        }
                    })
                }
                other => return Err(Error::Config(format!("unknown key {other}"))),
            }
        }
        cfg.party_id = party_id.ok_or(Error::Config("missing party_id".into()))?;
        cfg.peers = peers.ok_or(Error::Config("missing peers".into()))?;
        cfg.transport = transport.ok_or(Error::Config("missing transport".into()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KV: &str = "\
# node one
party_id = 1
peers = 127.0.0.1:9100, 127.0.0.1:9101, 127.0.0.1:9102, 127.0.0.1:9103
transport = sockets
memory_size = 8388608
num_accels = 2
malicious = true
key_file = /tmp/party1.keys
";

    #[test]
    fn parses_flat_kv() {
        let cfg = PartyConfig::parse(KV).unwrap();
        assert_eq!(cfg.party_id, 1);
        assert_eq!(cfg.peers[2], "127.0.0.1:9102");
        assert_eq!(cfg.transport, Transport::Sockets);
        assert_eq!(cfg.memory_size, 8388608);
        assert_eq!(cfg.num_accels, 2);
        assert!(cfg.malicious);
        assert!(cfg.masking); // default on
        assert_eq!(cfg.key_file.as_deref(), Some(Path::new("/tmp/party1.keys")));
    }

    #[test]
    fn parses_json() {
        let json = r#"{
            "party_id": 2,
            "peers": ["a:1", "b:2", "c:3", "d:4"],
            "transport": "simulated",
            "latency_us": 0.5
        }"#;
        let cfg = PartyConfig::parse(json).unwrap();
        assert_eq!(cfg.party_id, 2);
        assert_eq!(cfg.transport, Transport::Simulated);
        assert!((cfg.latency_us - 0.5).abs() < 1e-12);
        assert_eq!(cfg.memory_size, DEFAULT_MEMORY_SIZE);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(PartyConfig::parse("party_id = 9\npeers = a,b,c,d\ntransport = sim").is_err());
        assert!(PartyConfig::parse("peers = a,b,c,d\ntransport = sim").is_err());
        assert!(PartyConfig::parse("party_id = 0\npeers = a,b,c\ntransport = sim").is_err());
        assert!(PartyConfig::parse("party_id = 0\npeers = a,a,c,d\ntransport = sockets").is_err());
        assert!(PartyConfig::parse("party_id = 0\npeers = a,b,c,d\ntransport = sim\nbogus = 1").is_err());
    }
}
