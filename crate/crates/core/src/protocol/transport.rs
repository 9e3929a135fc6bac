//! Transport backends moving encoded messages between clients and the server.
//!
//! All backends carry the same canonical bytes produced by
//! [`encode`](super::encode), so a seeded session gives bit-identical results
//! whichever backend is used.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::Value;

use super::SERVER_ID;
use crate::error::{Error, Result};

/// Upper bound on a single frame; a p = 2048 projector is well below this.
pub const MAX_FRAME_LEN: u32 = 1 << 30;

/// Moves encoded messages. Implementations must accept concurrent uploads
/// from distinct clients.
pub trait Transport: Send + Sync {
    /// Client-to-server upload of one encoded message.
    fn upload(&self, round: u8, client_id: &str, payload: &[u8]) -> Result<()>;

    /// Server-side collection of the uploads of `round`, in arrival order.
    /// Returns early once `expected` payloads are available; may return fewer.
    fn collect(&self, round: u8, expected: usize) -> Result<Vec<Vec<u8>>>;

    /// Server-side publication of the broadcast message.
    fn publish(&self, payload: &[u8]) -> Result<()>;

    /// Client-side retrieval of the broadcast message.
    fn fetch_broadcast(&self, client_id: &str) -> Result<Vec<u8>>;

    fn name(&self) -> &'static str;
}

/// Shared-memory transport for single-process runs.
#[derive(Debug, Default)]
pub struct InProcessTransport {
    uploads: Mutex<BTreeMap<u8, Vec<Vec<u8>>>>,
    broadcast: Mutex<Option<Vec<u8>>>,
}

impl InProcessTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for InProcessTransport {
    fn upload(&self, round: u8, _client_id: &str, payload: &[u8]) -> Result<()> {
        self.uploads.lock().expect("transport lock poisoned").entry(round).or_default().push(payload.to_vec());
        Ok(())
    }

    fn collect(&self, round: u8, _expected: usize) -> Result<Vec<Vec<u8>>> {
        Ok(self.uploads.lock().expect("transport lock poisoned").remove(&round).unwrap_or_default())
    }

    fn publish(&self, payload: &[u8]) -> Result<()> {
        *self.broadcast.lock().expect("transport lock poisoned") = Some(payload.to_vec());
        Ok(())
    }

    fn fetch_broadcast(&self, _client_id: &str) -> Result<Vec<u8>> {
        self.broadcast
            .lock()
            .expect("transport lock poisoned")
            .clone()
            .ok_or_else(|| Error::Transport("no broadcast published yet".into()))
    }

    fn name(&self) -> &'static str {
        "in-process"
    }
}

/// Exchange through a session directory, one file per message named
/// `{round}_{client_id}.msg`. The broadcast is `2_server.msg`.
#[derive(Debug)]
pub struct FileTransport {
    dir: PathBuf,
}

impl FileTransport {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn message_path(&self, round: u8, sender: &str) -> PathBuf {
        self.dir.join(format!("{round}_{sender}.msg"))
    }

    fn write_atomic(&self, path: &Path, payload: &[u8]) -> Result<()> {
        let tmp = path.with_extension("msg.partial");
        std::fs::write(&tmp, payload)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

impl Transport for FileTransport {
    fn upload(&self, round: u8, client_id: &str, payload: &[u8]) -> Result<()> {
        let path = self.message_path(round, client_id);
        if path.exists() {
            return Err(Error::Transport(format!("{} already exists", path.display())));
        }
        self.write_atomic(&path, payload)
    }

    fn collect(&self, round: u8, _expected: usize) -> Result<Vec<Vec<u8>>> {
        let prefix = format!("{round}_");
        let server_file = format!("{round}_{SERVER_ID}.msg");
        let mut names: Vec<String> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|name| name.starts_with(&prefix) && name.ends_with(".msg") && *name != server_file)
            .collect();
        names.sort();
        names.into_iter().map(|name| Ok(std::fs::read(self.dir.join(name))?)).collect()
    }

    fn publish(&self, payload: &[u8]) -> Result<()> {
        self.write_atomic(&self.message_path(2, SERVER_ID), payload)
    }

    fn fetch_broadcast(&self, _client_id: &str) -> Result<Vec<u8>> {
        let path = self.message_path(2, SERVER_ID);
        std::fs::read(&path).map_err(|e| Error::Transport(format!("cannot read {}: {e}", path.display())))
    }

    fn name(&self) -> &'static str {
        "file"
    }
}

/// Writes `payload` with a 4-byte big-endian length prefix.
pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len()).ok().filter(|&l| l <= MAX_FRAME_LEN);
    let len = len.ok_or_else(|| Error::Transport(format!("frame of {} bytes is too large", payload.len())))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(Error::Transport(format!("frame length {len} exceeds limit")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

#[derive(Default)]
struct TcpState {
    uploads: Vec<(u8, Vec<u8>)>,
    broadcast: Option<Vec<u8>>,
    shutdown: bool,
}

#[derive(Default)]
struct Shared {
    state: Mutex<TcpState>,
    changed: Condvar,
}

/// TCP transport on a loopback listener owned by the server side.
///
/// Uploads are framed messages acknowledged by an empty frame. A client asks
/// for the broadcast with a `{"type":"fetch_broadcast","client_id":..}` frame
/// and receives the broadcast frame once it is published.
pub struct TcpTransport {
    addr: SocketAddr,
    shared: Arc<Shared>,
    timeout: Duration,
    acceptor: Option<JoinHandle<()>>,
}

impl TcpTransport {
    /// Binds `127.0.0.1` on an ephemeral port.
    pub fn bind_local() -> Result<Self> {
        Self::bind("127.0.0.1:0".parse().expect("valid socket address"))
    }

    pub fn bind(addr: SocketAddr) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared::default());
        let timeout = Duration::from_secs(30);
        let worker_shared = Arc::clone(&shared);
        let acceptor = std::thread::spawn(move || accept_loop(listener, worker_shared, timeout));
        Ok(Self { addr, shared, timeout, acceptor: Some(acceptor) })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    fn connect(&self) -> Result<TcpStream> {
        let stream = TcpStream::connect(self.addr)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_nodelay(true)?;
        Ok(stream)
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        self.shared.state.lock().expect("transport lock poisoned").shutdown = true;
        self.shared.changed.notify_all();
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, timeout: Duration) {
    for stream in listener.incoming() {
        if shared.state.lock().map(|s| s.shutdown).unwrap_or(true) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let shared = Arc::clone(&shared);
        std::thread::spawn(move || {
            if let Err(e) = serve_connection(stream, &shared, timeout) {
                log::warn!("tcp transport: {e}");
            }
        });
    }
}

fn serve_connection(mut stream: TcpStream, shared: &Shared, timeout: Duration) -> Result<()> {
    stream.set_read_timeout(Some(timeout))?;
    let frame = read_frame(&mut stream)?;
    let header: Value = serde_json::from_slice(&frame).map_err(|e| Error::Transport(format!("unparseable frame: {e}")))?;
    if header.get("type").and_then(Value::as_str) == Some("fetch_broadcast") {
        let deadline = Instant::now() + timeout;
        let mut state = shared.state.lock().expect("transport lock poisoned");
        while state.broadcast.is_none() && !state.shutdown {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            state = shared.changed.wait_timeout(state, left).expect("transport lock poisoned").0;
        }
        let Some(payload) = state.broadcast.clone() else {
            return Err(Error::Transport("broadcast not published before timeout".into()));
        };
        drop(state);
        write_frame(&mut stream, &payload)?;
    } else {
        let round = header
            .get("round")
            .and_then(Value::as_u64)
            .and_then(|r| u8::try_from(r).ok())
            .ok_or_else(|| Error::Transport("uploaded frame has no round".into()))?;
        shared.state.lock().expect("transport lock poisoned").uploads.push((round, frame));
        shared.changed.notify_all();
        write_frame(&mut stream, &[])?;
    }
    let _ = stream.shutdown(Shutdown::Both);
    Ok(())
}

impl Transport for TcpTransport {
    fn upload(&self, _round: u8, _client_id: &str, payload: &[u8]) -> Result<()> {
        let mut stream = self.connect()?;
        write_frame(&mut stream, payload)?;
        let ack = read_frame(&mut stream)?;
        if !ack.is_empty() {
            return Err(Error::Transport("unexpected acknowledgement".into()));
        }
        Ok(())
    }

    fn collect(&self, round: u8, expected: usize) -> Result<Vec<Vec<u8>>> {
        let deadline = Instant::now() + self.timeout;
        let mut state = self.shared.state.lock().expect("transport lock poisoned");
        loop {
            let have = state.uploads.iter().filter(|(r, _)| *r == round).count();
            let left = deadline.saturating_duration_since(Instant::now());
            if have >= expected || left.is_zero() {
                break;
            }
            state = self.shared.changed.wait_timeout(state, left).expect("transport lock poisoned").0;
        }
        let (taken, kept): (Vec<_>, Vec<_>) = std::mem::take(&mut state.uploads).into_iter().partition(|(r, _)| *r == round);
        state.uploads = kept;
        Ok(taken.into_iter().map(|(_, p)| p).collect())
    }

    fn publish(&self, payload: &[u8]) -> Result<()> {
        self.shared.state.lock().expect("transport lock poisoned").broadcast = Some(payload.to_vec());
        self.shared.changed.notify_all();
        Ok(())
    }

    fn fetch_broadcast(&self, client_id: &str) -> Result<Vec<u8>> {
        let mut stream = self.connect()?;
        let request = serde_json::json!({ "type": "fetch_broadcast", "client_id": client_id });
        write_frame(&mut stream, request.to_string().as_bytes())?;
        read_frame(&mut stream)
    }

    fn name(&self) -> &'static str {
        "tcp"
    }
}
