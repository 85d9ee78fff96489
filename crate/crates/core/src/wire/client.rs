use std::collections::HashMap;
use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread;

use super::frame::{read_frame, write_frame, Frame};
use super::proto::{self, decode_error, Dec, Enc, Status};
use crate::engine::{
    CommitSeq, ContainerHandle, EngineError, EngineResult, Insert, ObjectEngine, Oid, PoolHandle,
};

type Reply = EngineResult<Frame>;

struct Pending {
    waiters: HashMap<u64, Sender<Reply>>,
    /// Set once the connection is gone; later calls fail immediately.
    closed: Option<String>,
}

/// Engine client over one TCP connection. Thread-safe: concurrent calls are
/// pipelined on the connection and matched to responses by request id.
pub struct RemoteEngine {
    writer: Mutex<BufWriter<TcpStream>>,
    stream: TcpStream,
    pending: Arc<Mutex<Pending>>,
    next_id: AtomicU64,
}

impl RemoteEngine {
    pub fn connect(addr: impl ToSocketAddrs) -> EngineResult<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| EngineError::Server(format!("cannot connect to engine server: {e}")))?;
        let _ = stream.set_nodelay(true);
        let pending = Arc::new(Mutex::new(Pending {
            waiters: HashMap::new(),
            closed: None,
        }));
        let read_half = stream.try_clone()?;
        let p = pending.clone();
        thread::Builder::new()
            .name("fdb-client-reader".into())
            .spawn(move || reader_loop(read_half, p))?;
        Ok(RemoteEngine {
            writer: Mutex::new(BufWriter::new(stream.try_clone()?)),
            stream,
            pending,
            next_id: AtomicU64::new(1),
        })
    }

    fn call(&self, opcode: u8, payload: Vec<u8>) -> EngineResult<(Status, Vec<u8>)> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        {
            let mut p = self.pending.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(why) = &p.closed {
                return Err(EngineError::Server(why.clone()));
            }
            p.waiters.insert(id, tx);
        }
        let sent = {
            let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
            write_frame(&mut *w, &Frame::new(opcode, id, payload))
        };
        if let Err(e) = sent {
            self.pending
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .waiters
                .remove(&id);
            return Err(EngineError::Server(format!("send failed: {e}")));
        }
        let frame = rx
            .recv()
            .map_err(|_| EngineError::Server("connection closed".into()))??;
        if frame.opcode != opcode | proto::RESPONSE_BIT {
            return Err(EngineError::Server(format!(
                "response opcode {:#04x} does not answer {opcode:#04x}",
                frame.opcode
            )));
        }
        let mut d = Dec::new(&frame.payload);
        let status = d
            .u8()
            .ok()
            .and_then(Status::from_u8)
            .ok_or_else(|| EngineError::Server("response without status".into()))?;
        match status {
            Status::Ok | Status::NotFound => Ok((status, frame.payload[1..].to_vec())),
            Status::BadRequest | Status::ServerError => Err(decode_error(&mut d)),
        }
    }

    /// Calls that must succeed with a body.
    fn call_ok(&self, opcode: u8, payload: Vec<u8>) -> EngineResult<Vec<u8>> {
        match self.call(opcode, payload)? {
            (Status::Ok, body) => Ok(body),
            _ => Err(EngineError::Server("unexpected not-found response".into())),
        }
    }

    pub fn ping(&self) -> EngineResult<()> {
        self.call_ok(proto::PING, Vec::new()).map(|_| ())
    }

    /// Asks the server to stop after answering.
    pub fn shutdown_server(&self) -> EngineResult<()> {
        self.call_ok(proto::SHUTDOWN, Vec::new()).map(|_| ())
    }
}

impl Drop for RemoteEngine {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

fn reader_loop(stream: TcpStream, pending: Arc<Mutex<Pending>>) {
    let mut r = BufReader::new(stream);
    let why = loop {
        match read_frame(&mut r) {
            Ok(Some(frame)) => {
                let waiter = pending
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .waiters
                    .remove(&frame.request_id);
                match waiter {
                    Some(tx) => {
                        let _ = tx.send(Ok(frame));
                    }
                    // request id 0 answers a frame the server could not parse
                    None if frame.request_id == 0 => {
                        let msg = {
                            let mut d = Dec::new(&frame.payload);
                            let _ = d.u8();
                            decode_error(&mut d).to_string()
                        };
                        break format!("server rejected a frame: {msg}");
                    }
                    None => {}
                }
            }
            Ok(None) => break "connection closed by server".to_string(),
            Err(e) => break format!("connection lost: {e}"),
        }
    };
    let mut p = pending.lock().unwrap_or_else(|e| e.into_inner());
    p.closed = Some(why.clone());
    for (_, tx) in p.waiters.drain() {
        let _ = tx.send(Err(EngineError::Server(why.clone())));
    }
}

fn cont_payload(c: &ContainerHandle, oid: Oid) -> Enc {
    Enc::new().u64(c.token).oid(oid)
}

impl ObjectEngine for RemoteEngine {
    fn pool_connect(&self, name: &str, create: bool) -> EngineResult<PoolHandle> {
        let body = self.call_ok(
            proto::POOL_CONNECT,
            Enc::new().str(name).u8(create as u8).finish(),
        )?;
        Ok(PoolHandle {
            pool: name.to_string(),
            token: Dec::new(&body).u64()?,
        })
    }

    fn cont_open(&self, pool: &PoolHandle, label: &str, create: bool) -> EngineResult<ContainerHandle> {
        let body = self.call_ok(
            proto::CONT_OPEN,
            Enc::new().u64(pool.token).str(label).u8(create as u8).finish(),
        )?;
        let mut d = Dec::new(&body);
        Ok(ContainerHandle {
            token: d.u64()?,
            pool: d.str()?,
            label: label.to_string(),
        })
    }

    fn cont_close(&self, cont: &ContainerHandle) -> EngineResult<()> {
        self.call_ok(proto::CONT_CLOSE, Enc::new().u64(cont.token).finish())
            .map(|_| ())
    }

    fn alloc_oids(&self, cont: &ContainerHandle, count: u64) -> EngineResult<Oid> {
        let body = self.call_ok(
            proto::ALLOC_OIDS,
            Enc::new().u64(cont.token).u64(count).finish(),
        )?;
        Dec::new(&body).oid()
    }

    fn kv_put(&self, cont: &ContainerHandle, oid: Oid, key: &str, value: &[u8]) -> EngineResult<CommitSeq> {
        let body = self.call_ok(
            proto::KV_PUT,
            cont_payload(cont, oid).str(key).bytes(value).finish(),
        )?;
        Dec::new(&body).u64()
    }

    fn kv_insert(&self, cont: &ContainerHandle, oid: Oid, key: &str, value: &[u8]) -> EngineResult<Insert> {
        let body = self.call_ok(
            proto::KV_INSERT,
            cont_payload(cont, oid).str(key).bytes(value).finish(),
        )?;
        let mut d = Dec::new(&body);
        Ok(match d.u8()? {
            0 => Insert::Inserted(d.u64()?),
            _ => Insert::Exists(d.bytes()?),
        })
    }

    fn kv_get(&self, cont: &ContainerHandle, oid: Oid, key: &str) -> EngineResult<Option<Vec<u8>>> {
        match self.call(proto::KV_GET, cont_payload(cont, oid).str(key).finish())? {
            (Status::NotFound, _) => Ok(None),
            (_, body) => Ok(Some(Dec::new(&body).bytes()?)),
        }
    }

    fn kv_list(&self, cont: &ContainerHandle, oid: Oid) -> EngineResult<Vec<String>> {
        let body = self.call_ok(proto::KV_LIST, cont_payload(cont, oid).finish())?;
        let mut d = Dec::new(&body);
        let n = d.u32()?;
        (0..n).map(|_| d.str()).collect()
    }

    fn array_write(&self, cont: &ContainerHandle, oid: Oid, offset: u64, data: &[u8]) -> EngineResult<CommitSeq> {
        let body = self.call_ok(
            proto::ARRAY_WRITE,
            cont_payload(cont, oid).u64(offset).bytes(data).finish(),
        )?;
        Dec::new(&body).u64()
    }

    fn array_read(&self, cont: &ContainerHandle, oid: Oid, offset: u64, len: u64) -> EngineResult<Vec<u8>> {
        let body = self.call_ok(
            proto::ARRAY_READ,
            cont_payload(cont, oid).u64(offset).u64(len).finish(),
        )?;
        Dec::new(&body).bytes()
    }

    fn array_get_size(&self, cont: &ContainerHandle, oid: Oid) -> EngineResult<u64> {
        let body = self.call_ok(proto::ARRAY_GET_SIZE, cont_payload(cont, oid).finish())?;
        Dec::new(&body).u64()
    }
}
