//! Inbound listeners: accept connections on a location and hand every
//! request frame to a [`FrameHandler`] together with a [`Responder`] bound
//! to the originating connection.

use std::io::{BufReader, ErrorKind, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::frame::{decode_frame, encode_frame, salvage_id, Frame, FrameType};
use super::transport::{read_line, tcp_conn, Closer, Conn, ConnTrace, Direction, LocalRegistry, Net, Side};
use super::types::Location;
use crate::error::{Error, Fault};

pub trait FrameHandler: Send + Sync {
    fn handle(&self, frame: Frame, responder: Responder);
}

impl<F: Fn(Frame, Responder) + Send + Sync> FrameHandler for F {
    fn handle(&self, frame: Frame, responder: Responder) {
        self(frame, responder)
    }
}

/// Writes response and fault frames back on one connection.
#[derive(Clone)]
pub struct Responder {
    channel: u64,
    writer: Arc<Mutex<Box<dyn Write + Send>>>,
    net: Arc<Net>,
    trace: Option<Arc<ConnTrace>>,
}

impl Responder {
    pub fn channel(&self) -> u64 {
        self.channel
    }

    pub fn send(&self, frame: &Frame) -> Result<(), Fault> {
        let bytes = encode_frame(frame).map_err(|_| Fault::type_fault())?;
        let mut w = self.writer.lock().expect("writer lock");
        if let Some(t) = &self.trace {
            t.events.lock().expect("trace lock").push((Direction::Sent, frame.clone()));
        }
        let res = w.write_all(&bytes).and_then(|_| w.flush());
        self.net.tick();
        res.map_err(|_| Fault::io())
    }

    pub fn fault(&self, id: &str, op: &str, fault: &str) {
        let _ = self.send(&Frame::fault(id, op, fault));
    }
}

type OpenConns = Arc<Mutex<Vec<(u64, Arc<dyn Closer>)>>>;

pub struct Listener {
    location: Location,
    stop: Arc<AtomicBool>,
    conns: OpenConns,
    registry: Option<Arc<LocalRegistry>>,
    accept: Option<JoinHandle<()>>,
}

impl Listener {
    /// The bound location; for `socket://host:0` the port actually chosen.
    pub fn location(&self) -> &Location {
        &self.location
    }

    /// Stops accepting and closes every open connection.
    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let (Some(reg), Location::Local(name)) = (&self.registry, &self.location) {
            reg.unbind(name);
        }
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        for (_, c) in self.conns.lock().expect("conns lock").drain(..) {
            c.close();
        }
    }
}

impl Drop for Listener {
    fn drop(&mut self) {
        self.stop();
    }
}

fn serve_conn(conn: Conn, net: Arc<Net>, handler: Arc<dyn FrameHandler>, conns: OpenConns, peer: String) {
    let Conn { reader, writer, closer, channel } = conn;
    conns.lock().expect("conns lock").push((channel, closer));
    let responder = Responder {
        channel,
        writer: Arc::new(Mutex::new(writer)),
        trace: net.trace(channel, Side::Server, peer),
        net,
    };
    thread::spawn(move || {
        let mut reader = BufReader::new(reader);
        while let Ok(Some(line)) = read_line(&mut reader) {
            match decode_frame(&line) {
                Ok(frame) if frame.kind == FrameType::Request => {
                    if let Some(t) = &responder.trace {
                        t.events.lock().expect("trace lock").push((Direction::Received, frame.clone()));
                    }
                    handler.handle(frame, responder.clone());
                }
                Ok(_) => {}
                Err(_) => responder.fault(&salvage_id(&line), "", Fault::PROTOCOL_FAULT),
            }
        }
        conns.lock().expect("conns lock").retain(|(c, _)| *c != channel);
    });
}

/// Starts accepting on `location`.
pub fn serve(
    location: &Location,
    registry: &Arc<LocalRegistry>,
    net: &Arc<Net>,
    handler: Arc<dyn FrameHandler>,
) -> Result<Listener, Error> {
    let stop = Arc::new(AtomicBool::new(false));
    let conns: OpenConns = Arc::new(Mutex::new(Vec::new()));
    match location {
        Location::Local(name) => {
            let (net2, conns2, name2) = (net.clone(), conns.clone(), name.clone());
            registry
                .bind(
                    name,
                    Arc::new(move |conn: Conn| {
                        serve_conn(conn, net2.clone(), handler.clone(), conns2.clone(), format!("local://{name2}"))
                    }),
                )
                .map_err(|e| Error::Startup(e.to_string()))?;
            Ok(Listener {
                location: location.clone(),
                stop,
                conns,
                registry: Some(registry.clone()),
                accept: None,
            })
        }
        Location::Socket { host, port } => {
            let listener = TcpListener::bind((host.as_str(), *port))
                .map_err(|e| Error::Startup(format!("cannot bind {location}: {e}")))?;
            let bound = listener.local_addr()?;
            listener.set_nonblocking(true)?;
            let bound_location = Location::Socket { host: host.clone(), port: bound.port() };
            let (net2, conns2, stop2) = (net.clone(), conns.clone(), stop.clone());
            let accept = thread::spawn(move || {
                while !stop2.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            if stream.set_nonblocking(false).is_err() {
                                continue;
                            }
                            if let Ok(conn) = tcp_conn(stream, &net2) {
                                serve_conn(conn, net2.clone(), handler.clone(), conns2.clone(), peer.to_string());
                            }
                        }
                        Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
                        Err(_) => thread::sleep(Duration::from_millis(2)),
                    }
                }
            });
            Ok(Listener {
                location: bound_location,
                stop,
                conns,
                registry: None,
                accept: Some(accept),
            })
        }
    }
}
