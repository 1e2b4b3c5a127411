//! Stream-socket transport: one duplex TCP stream per unordered party
//! pair, established at startup in party-index order (lower index dials
//! higher) to avoid connect races. Messages are multiplexed by header.

use std::io::{BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::fabric::metrics::MetricsSnapshot;
use crate::fabric::wire::{decode_header, wire_payload_len, WireMessage, HEADER_LEN};
use crate::ring::{PartyId, NUM_PARTIES};

const HELLO: [u8; 2] = [0x43, 0x50];

/// Shared outbound counters; snapshots fold them into a MetricsSnapshot.
#[derive(Default)]
pub struct FabricCounters {
    messages: [[AtomicU64; NUM_PARTIES]; NUM_PARTIES],
    payload_bytes: [[AtomicU64; NUM_PARTIES]; NUM_PARTIES],
    total_bytes: [[AtomicU64; NUM_PARTIES]; NUM_PARTIES],
    by_type: [[AtomicU64; 6]; NUM_PARTIES],
    ops: [AtomicU64; NUM_PARTIES],
}

impl FabricCounters {
    pub fn record_send(&self, msg: &WireMessage) {
        let (s, d) = (msg.src_party as usize, msg.dst_party as usize);
        self.messages[s][d].fetch_add(1, Ordering::Relaxed);
        self.payload_bytes[s][d].fetch_add(msg.payload.len() as u64, Ordering::Relaxed);
        self.total_bytes[s][d]
            .fetch_add((HEADER_LEN + msg.payload.len()) as u64, Ordering::Relaxed);
        self.by_type[s][msg.msg_type as usize - 1].fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_op(&self, party: PartyId) {
        self.ops[party as usize].fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self, time_us: f64) -> MetricsSnapshot {
        let mut m = MetricsSnapshot {
            time_us,
            ..Default::default()
        };
        for s in 0..NUM_PARTIES {
            for d in 0..NUM_PARTIES {
                m.links[s][d].messages = self.messages[s][d].load(Ordering::Relaxed);
                m.links[s][d].payload_bytes = self.payload_bytes[s][d].load(Ordering::Relaxed);
                m.links[s][d].total_bytes = self.total_bytes[s][d].load(Ordering::Relaxed);
            }
            for t in 0..6 {
                m.messages_by_type[s][t] = self.by_type[s][t].load(Ordering::Relaxed);
            }
            m.ops_completed[s] = self.ops[s].load(Ordering::Relaxed);
        }
        m
    }
}

struct PeerLink {
    writer: Mutex<BufWriter<TcpStream>>,
}

/// Send side of the socket mesh. Reads happen on per-peer reader threads
/// owned by the node.
pub struct SocketFabric {
    party: PartyId,
    peers: [Option<PeerLink>; NUM_PARTIES],
    pub counters: FabricCounters,
}

impl SocketFabric {
    pub fn party(&self) -> PartyId {
        self.party
    }

    /// Writes one message to its destination stream. Callers flush when a
    /// burst ends; see `flush_all`.
    pub fn send(&self, msg: &WireMessage) -> Result<()> {
        let link = self.peers[msg.dst_party as usize]
            .as_ref()
            .ok_or_else(|| Error::Config(format!("no stream to party {}", msg.dst_party)))?;
        self.counters.record_send(msg);
        let mut w = link.writer.lock().unwrap();
        w.write_all(&msg.encode())?;
        Ok(())
    }

    pub fn send_now(&self, msg: &WireMessage) -> Result<()> {
        self.send(msg)?;
        self.flush(msg.dst_party)
    }

    pub fn flush(&self, dst: PartyId) -> Result<()> {
        if let Some(link) = &self.peers[dst as usize] {
            link.writer.lock().unwrap().flush()?;
        }
        Ok(())
    }

    pub fn flush_all(&self) -> Result<()> {
        for d in 0..NUM_PARTIES as u8 {
            self.flush(d)?;
        }
        Ok(())
    }

    pub fn shutdown(&self) {
        for link in self.peers.iter().flatten() {
            let w = link.writer.lock().unwrap();
            let _ = w.get_ref().shutdown(std::net::Shutdown::Both);
        }
    }
}

/// Establishes the full mesh for `party`: binds its own endpoint, dials
/// every higher-index peer (with retry while peers start up), and accepts
/// from every lower-index one. Returns the send fabric and the read half
/// of each peer stream.
pub fn connect_mesh(
    party: PartyId,
    endpoints: &[String; NUM_PARTIES],
    timeout: Duration,
) -> Result<(SocketFabric, Vec<(PartyId, TcpStream)>)> {
    let own: SocketAddr = endpoints[party as usize]
        .parse()
        .map_err(|e| Error::Config(format!("bad endpoint {}: {e}", endpoints[party as usize])))?;
    let listener = TcpListener::bind(own)
        .map_err(|e| Error::Config(format!("bind {own}: {e}")))?;
    let deadline = Instant::now() + timeout;
    let mut peers: [Option<PeerLink>; NUM_PARTIES] = Default::default();
    let mut readers = Vec::with_capacity(3);

    // Dial upward.
    for q in party + 1..NUM_PARTIES as u8 {
        let addr: SocketAddr = endpoints[q as usize]
            .parse()
            .map_err(|e| Error::Config(format!("bad endpoint {}: {e}", endpoints[q as usize])))?;
        let stream = loop {
            match TcpStream::connect(addr) {
                Ok(s) => break s,
                Err(e) => {
                    if Instant::now() >= deadline {
                        return Err(Error::FabricTimeout(format!(
                            "connecting to party {q} at {addr}: {e}"
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(20));
                }
            }
        };
        stream.set_nodelay(true).ok();
        let mut s = stream.try_clone()?;
        s.write_all(&[HELLO[0], HELLO[1], party, q])?;
        s.flush()?;
        readers.push((q, stream.try_clone()?));
        peers[q as usize] = Some(PeerLink {
            writer: Mutex::new(BufWriter::with_capacity(1 << 16, stream)),
        });
    }

    // Accept from below.
    let mut expected: Vec<PartyId> = (0..party).collect();
    listener
        .set_nonblocking(false)
        .map_err(Error::Io)?;
    while !expected.is_empty() {
        if Instant::now() >= deadline {
            return Err(Error::FabricTimeout(format!(
                "waiting for connections from parties {expected:?}"
            )));
        }
        listener.set_nonblocking(true)?;
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                stream.set_nodelay(true).ok();
                let mut hello = [0u8; 4];
                let mut r = stream.try_clone()?;
                r.read_exact(&mut hello)?;
                if hello[0] != HELLO[0] || hello[1] != HELLO[1] || hello[3] != party {
                    return Err(Error::Frame(format!("bad handshake {hello:?}")));
                }
                let q = hello[2];
                if !expected.contains(&q) {
                    return Err(Error::Frame(format!("unexpected handshake from party {q}")));
                }
                expected.retain(|&p| p != q);
                readers.push((q, stream.try_clone()?));
                peers[q as usize] = Some(PeerLink {
                    writer: Mutex::new(BufWriter::with_capacity(1 << 16, stream)),
                });
            }
            Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(Error::Io(e)),
        }
    }

    readers.sort_by_key(|(q, _)| *q);
    Ok((
        SocketFabric {
            party,
            peers,
            counters: FabricCounters::default(),
        },
        readers,
    ))
}

/// Reads one framed message from a stream; `Ok(None)` on clean EOF at a
/// message boundary.
pub fn read_message(stream: &mut impl Read) -> Result<Option<WireMessage>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match stream.read(&mut header[filled..]) {
            Ok(0) => {
                if filled == 0 {
                    return Ok(None);
                }
                return Err(Error::Frame("eof inside header".into()));
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Io(e)),
        }
    }
    let h = decode_header(&header)?;
    let body = wire_payload_len(&h);
    let mut payload = vec![0u8; body];
    stream.read_exact(&mut payload)?;
    Ok(Some(WireMessage {
        msg_type: h.msg_type,
        src_party: h.src_party,
        dst_party: h.dst_party,
        batch_id: h.batch_id,
        offset: h.offset,
        payload,
        get_len: if h.msg_type == crate::fabric::wire::MessageType::Get {
            h.payload_len
        } else {
            0
        },
    }))
}
