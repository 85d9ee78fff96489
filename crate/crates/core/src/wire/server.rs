use std::collections::HashSet;
use std::io::{self, BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};

use super::frame::{read_frame, write_frame, Frame, ReadError};
use super::proto::{self, error_payload, Dec, Enc, Status};
use crate::engine::{
    ContainerHandle, EngineError, EngineResult, Insert, LocalEngine, ObjectEngine, PoolHandle,
};

/// A running server. Dropping it shuts it down.
pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

struct Shared {
    engine: Arc<dyn ObjectEngine>,
    stopping: AtomicBool,
    /// Set once a shutdown has been requested; waited on by [`Server::wait`].
    stop_requested: Mutex<bool>,
    stop_cv: Condvar,
    connections: Mutex<Vec<(u64, TcpStream)>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl Shared {
    fn request_stop(&self) {
        *self.stop_requested.lock().unwrap_or_else(|p| p.into_inner()) = true;
        self.stop_cv.notify_all();
    }
}

/// Serves `engine` on `bind`. Each connection gets its own thread, which
/// executes that connection's requests in arrival order.
pub fn serve(engine: Arc<dyn ObjectEngine>, bind: impl ToSocketAddrs) -> io::Result<Server> {
    let listener = TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        engine,
        stopping: AtomicBool::new(false),
        stop_requested: Mutex::new(false),
        stop_cv: Condvar::new(),
        connections: Mutex::new(Vec::new()),
        workers: Mutex::new(Vec::new()),
    });
    let s = shared.clone();
    let accept = thread::Builder::new()
        .name("fdb-accept".into())
        .spawn(move || accept_loop(listener, s))?;
    Ok(Server {
        addr,
        shared,
        accept: Some(accept),
    })
}

/// Opens the engine over `root` and serves it.
pub fn serve_root(root: impl AsRef<Path>, bind: impl ToSocketAddrs) -> Result<Server, crate::Error> {
    let engine = Arc::new(LocalEngine::open(root)?);
    Ok(serve(engine, bind)?)
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until a client sends the shutdown opcode, then stops.
    pub fn wait(mut self) {
        {
            let mut stop = self
                .shared
                .stop_requested
                .lock()
                .unwrap_or_else(|p| p.into_inner());
            while !*stop {
                stop = self.shared.stop_cv.wait(stop).unwrap_or_else(|p| p.into_inner());
            }
        }
        self.stop();
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.shared.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        self.shared.request_stop();
        // wake the blocking accept()
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        for (_, c) in self
            .shared
            .connections
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .drain(..)
        {
            let _ = c.shutdown(Shutdown::Both);
        }
        let workers: Vec<_> = self
            .shared
            .workers
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .drain(..)
            .collect();
        for w in workers {
            let _ = w.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut next_id = 0u64;
    for stream in listener.incoming() {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let _ = stream.set_nodelay(true);
        next_id += 1;
        let id = next_id;
        if let Ok(clone) = stream.try_clone() {
            shared
                .connections
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .push((id, clone));
        }
        let s = shared.clone();
        let spawned = thread::Builder::new()
            .name(format!("fdb-conn-{id}"))
            .spawn(move || {
                handle_connection(stream, &s);
                s.connections
                    .lock()
                    .unwrap_or_else(|p| p.into_inner())
                    .retain(|(cid, _)| *cid != id);
            });
        if let Ok(h) = spawned {
            let mut workers = shared.workers.lock().unwrap_or_else(|p| p.into_inner());
            workers.retain(|w| !w.is_finished());
            workers.push(h);
        }
    }
}

fn handle_connection(stream: TcpStream, shared: &Shared) {
    let Ok(read_half) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(read_half);
    let mut writer = BufWriter::new(stream);
    let mut opened: HashSet<u64> = HashSet::new();
    loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(ReadError::Frame(e)) => {
                let body = error_payload(&EngineError::InvalidArgument(e.to_string()));
                let _ = write_frame(&mut writer, &Frame::new(proto::RESPONSE_BIT, 0, body));
                break;
            }
            Err(ReadError::Io(_)) => break,
        };
        let opcode = frame.opcode;
        let body = match dispatch(shared, &frame, &mut opened) {
            Ok(Some(body)) => {
                let mut out = vec![Status::Ok as u8];
                out.extend(body);
                out
            }
            Ok(None) => vec![Status::NotFound as u8],
            Err(e) => error_payload(&e),
        };
        let response = Frame::new(opcode | proto::RESPONSE_BIT, frame.request_id, body);
        if write_frame(&mut writer, &response).is_err() {
            break;
        }
        if opcode == proto::SHUTDOWN {
            shared.request_stop();
        }
    }
    for token in opened {
        let _ = shared.engine.cont_close(&cont(token));
    }
}

fn cont(token: u64) -> ContainerHandle {
    ContainerHandle {
        pool: String::new(),
        label: String::new(),
        token,
    }
}

/// `Ok(None)` means not-found.
fn dispatch(shared: &Shared, frame: &Frame, opened: &mut HashSet<u64>) -> EngineResult<Option<Vec<u8>>> {
    let e = &shared.engine;
    let mut d = Dec::new(&frame.payload);
    let out = match frame.opcode {
        proto::PING | proto::SHUTDOWN => {
            d.finish()?;
            Enc::new()
        }
        proto::POOL_CONNECT => {
            let name = d.str()?;
            let create = d.bool()?;
            d.finish()?;
            let h = e.pool_connect(&name, create)?;
            Enc::new().u64(h.token)
        }
        proto::CONT_OPEN => {
            let pool = PoolHandle {
                pool: String::new(),
                token: d.u64()?,
            };
            let label = d.str()?;
            let create = d.bool()?;
            d.finish()?;
            let h = e.cont_open(&pool, &label, create)?;
            opened.insert(h.token);
            Enc::new().u64(h.token).str(&h.pool)
        }
        proto::CONT_CLOSE => {
            let token = d.u64()?;
            d.finish()?;
            e.cont_close(&cont(token))?;
            opened.remove(&token);
            Enc::new()
        }
        proto::ALLOC_OIDS => {
            let c = cont(d.u64()?);
            let count = d.u64()?;
            d.finish()?;
            Enc::new().oid(e.alloc_oids(&c, count)?)
        }
        proto::KV_PUT | proto::KV_INSERT => {
            let c = cont(d.u64()?);
            let oid = d.oid()?;
            let key = d.str()?;
            let value = d.bytes()?;
            d.finish()?;
            if frame.opcode == proto::KV_PUT {
                Enc::new().u64(e.kv_put(&c, oid, &key, &value)?)
            } else {
                match e.kv_insert(&c, oid, &key, &value)? {
                    Insert::Inserted(seq) => Enc::new().u8(0).u64(seq),
                    Insert::Exists(v) => Enc::new().u8(1).bytes(&v),
                }
            }
        }
        proto::KV_GET => {
            let c = cont(d.u64()?);
            let oid = d.oid()?;
            let key = d.str()?;
            d.finish()?;
            match e.kv_get(&c, oid, &key)? {
                Some(v) => Enc::new().bytes(&v),
                None => return Ok(None),
            }
        }
        proto::KV_LIST => {
            let c = cont(d.u64()?);
            let oid = d.oid()?;
            d.finish()?;
            let keys = e.kv_list(&c, oid)?;
            keys.iter()
                .fold(Enc::new().u32(keys.len() as u32), |enc, k| enc.str(k))
        }
        proto::ARRAY_WRITE => {
            let c = cont(d.u64()?);
            let oid = d.oid()?;
            let offset = d.u64()?;
            let data = d.bytes()?;
            d.finish()?;
            Enc::new().u64(e.array_write(&c, oid, offset, &data)?)
        }
        proto::ARRAY_READ => {
            let c = cont(d.u64()?);
            let oid = d.oid()?;
            let offset = d.u64()?;
            let len = d.u64()?;
            d.finish()?;
            let max = super::frame::MAX_FRAME_LEN as u64 - 64;
            if len > max {
                return Err(EngineError::InvalidArgument(format!(
                    "read of {len} bytes exceeds the {max} byte response limit"
                )));
            }
            Enc::new().bytes(&e.array_read(&c, oid, offset, len)?)
        }
        proto::ARRAY_GET_SIZE => {
            let c = cont(d.u64()?);
            let oid = d.oid()?;
            d.finish()?;
            Enc::new().u64(e.array_get_size(&c, oid)?)
        }
        other => {
            return Err(EngineError::InvalidArgument(format!("unknown opcode {other:#04x}")));
        }
    };
    Ok(Some(out.finish()))
}
