//! Outbound connections. One [`Client`] per target location; concurrent
//! requests share it and are matched to their responses by frame id.

use std::collections::HashMap;
use std::io::{BufReader, Write};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;

use super::frame::{decode_frame, encode_frame, Frame, FrameType};
use super::transport::{dial, read_line, Closer, Conn, ConnTrace, Direction, LocalRegistry, Net, Side};
use super::types::{Location, OperationKind, OutputPort};
use crate::error::Fault;
use crate::state::State;

pub type Callback = Box<dyn FnOnce(Result<Frame, Fault>) + Send>;

pub struct Client {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Mutex<HashMap<String, Callback>>,
    next_id: AtomicU64,
    dead: AtomicBool,
    closer: Arc<dyn Closer>,
    net: Arc<Net>,
    trace: Option<Arc<ConnTrace>>,
}

impl Client {
    pub fn connect(location: &Location, registry: &LocalRegistry, net: &Arc<Net>) -> Result<Arc<Client>, Fault> {
        let conn = dial(location, registry, net)?;
        Ok(Client::from_conn(conn, net, location.to_string()))
    }

    pub fn from_conn(conn: Conn, net: &Arc<Net>, peer: String) -> Arc<Client> {
        let Conn { reader, writer, closer, channel } = conn;
        let client = Arc::new(Client {
            writer: Mutex::new(writer),
            pending: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            dead: AtomicBool::new(false),
            closer,
            net: net.clone(),
            trace: net.trace(channel, Side::Client, peer),
        });
        let weak = Arc::downgrade(&client);
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            while let Ok(Some(line)) = read_line(&mut reader) {
                let Some(client) = weak.upgrade() else { return };
                let Ok(frame) = decode_frame(&line) else { continue };
                if frame.kind == FrameType::Request {
                    continue;
                }
                if let Some(t) = &client.trace {
                    t.events.lock().expect("trace lock").push((Direction::Received, frame.clone()));
                }
                let cb = client.pending.lock().expect("pending lock").remove(&frame.id);
                if let Some(cb) = cb {
                    cb(Ok(frame));
                }
            }
            if let Some(client) = weak.upgrade() {
                client.fail_all();
            }
        });
        client
    }

    fn fail_all(&self) {
        let drained: Vec<Callback> = {
            let mut pending = self.pending.lock().expect("pending lock");
            self.dead.store(true, Ordering::SeqCst);
            pending.drain().map(|(_, cb)| cb).collect()
        };
        for cb in drained {
            cb(Err(Fault::io()));
        }
    }

    pub fn is_dead(&self) -> bool {
        self.dead.load(Ordering::SeqCst)
    }

    pub fn close(&self) {
        self.closer.close();
    }

    /// Sends `frame` as a request under a fresh id. When `on_response` is
    /// given it receives the matching response or fault frame, or an
    /// `IOFault` if the connection drops first.
    pub fn call(&self, mut frame: Frame, on_response: Option<Callback>) -> Result<String, Fault> {
        if self.is_dead() {
            return Err(Fault::io());
        }
        frame.id = self.next_id.fetch_add(1, Ordering::SeqCst).to_string();
        frame.kind = FrameType::Request;
        frame.fault = None;
        let bytes = encode_frame(&frame).map_err(|_| Fault::type_fault())?;
        if let Some(cb) = on_response {
            // checked again under the lock so that `fail_all` cannot miss it
            let mut pending = self.pending.lock().expect("pending lock");
            if self.is_dead() {
                return Err(Fault::io());
            }
            pending.insert(frame.id.clone(), cb);
        }
        let written = {
            let mut w = self.writer.lock().expect("writer lock");
            if let Some(t) = &self.trace {
                t.events.lock().expect("trace lock").push((Direction::Sent, frame.clone()));
            }
            w.write_all(&bytes).and_then(|_| w.flush())
        };
        self.net.tick();
        if written.is_err() {
            self.pending.lock().expect("pending lock").remove(&frame.id);
            self.dead.store(true, Ordering::SeqCst);
            return Err(Fault::io());
        }
        Ok(frame.id)
    }

    pub fn call_blocking(&self, frame: Frame) -> Result<Frame, Fault> {
        let (tx, rx) = mpsc::channel();
        self.call(
            frame,
            Some(Box::new(move |r| {
                let _ = tx.send(r);
            })),
        )?;
        rx.recv().map_err(|_| Fault::io())?
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        self.closer.close();
    }
}

/// Connection pool keyed by target location.
pub struct Connector {
    registry: Arc<LocalRegistry>,
    net: Arc<Net>,
    pool: Mutex<HashMap<Location, Arc<Client>>>,
}

impl Connector {
    pub fn new(registry: Arc<LocalRegistry>, net: Arc<Net>) -> Arc<Connector> {
        Arc::new(Connector {
            registry,
            net,
            pool: Mutex::new(HashMap::new()),
        })
    }

    pub fn net(&self) -> &Arc<Net> {
        &self.net
    }

    pub fn registry(&self) -> &Arc<LocalRegistry> {
        &self.registry
    }

    pub fn client(&self, location: &Location) -> Result<Arc<Client>, Fault> {
        let mut pool = self.pool.lock().expect("pool lock");
        if let Some(c) = pool.get(location) {
            if !c.is_dead() {
                return Ok(c.clone());
            }
        }
        let c = Client::connect(location, &self.registry, &self.net)?;
        pool.insert(location.clone(), c.clone());
        Ok(c)
    }

    pub fn close_all(&self) {
        for (_, c) in self.pool.lock().expect("pool lock").drain() {
            c.close();
        }
    }
}

fn request_frame(port: &OutputPort, op: &str, kind: OperationKind, payload: &State) -> Result<Frame, Fault> {
    let decl = port
        .interface
        .get(op)
        .filter(|d| d.kind == kind)
        .ok_or_else(|| Fault::new(Fault::UNKNOWN_OPERATION))?;
    decl.request.check(payload)?;
    Ok(Frame::request("", op, payload.clone()).with_resource(port.resource.clone().unwrap_or_default()))
}

/// Sends a one-way request through an output port.
pub fn send_notification(connector: &Connector, port: &OutputPort, op: &str, payload: &State) -> Result<(), Fault> {
    let frame = request_frame(port, op, OperationKind::Notification, payload)?;
    connector.client(&port.location)?.call(frame, None)?;
    Ok(())
}

/// Sends a request and hands the response payload (or fault) to `done`.
pub fn solicit_with(
    connector: &Connector,
    port: &OutputPort,
    op: &str,
    payload: &State,
    done: Box<dyn FnOnce(Result<State, Fault>) + Send>,
) -> Result<(), Fault> {
    let frame = request_frame(port, op, OperationKind::SolicitResponse, payload)?;
    let response_type = port.interface.get(op).expect("checked").response.clone();
    let cb: Callback = Box::new(move |r| {
        let r = r.and_then(Frame::into_result).and_then(|p| response_type.check(&p).map(|_| p));
        done(r);
    });
    connector.client(&port.location)?.call(frame, Some(cb))?;
    Ok(())
}

/// Blocking form of [`solicit_with`].
pub fn send_solicit(connector: &Connector, port: &OutputPort, op: &str, payload: &State) -> Result<State, Fault> {
    let (tx, rx) = mpsc::channel();
    solicit_with(
        connector,
        port,
        op,
        payload,
        Box::new(move |r| {
            let _ = tx.send(r);
        }),
    )?;
    rx.recv().map_err(|_| Fault::io())?
}
