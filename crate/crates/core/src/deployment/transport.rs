//! Byte transports under the frame protocol: TCP sockets, and in-memory
//! duplex pipes for `local://` locations inside one container.

use std::collections::{HashMap, VecDeque};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use super::frame::Frame;
use super::types::Location;
use crate::error::{Error, Fault};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Client,
    Server,
}

/// Frames seen on one connection, from one end.
#[derive(Debug)]
pub struct ConnTrace {
    pub channel: u64,
    pub side: Side,
    pub peer: String,
    pub events: Mutex<Vec<(Direction, Frame)>>,
}

impl ConnTrace {
    pub fn snapshot(&self) -> Vec<(Direction, Frame)> {
        self.events.lock().expect("trace lock").clone()
    }
}

/// Process-wide network instrumentation shared by the containers of one
/// system: byte counters, an activity tick per frame, and optional traces.
#[derive(Debug, Default)]
pub struct Net {
    socket_bytes: AtomicU64,
    local_bytes: AtomicU64,
    activity: AtomicU64,
    next_channel: AtomicU64,
    recording: AtomicBool,
    traces: Mutex<Vec<Arc<ConnTrace>>>,
}

impl Net {
    pub fn new() -> Arc<Net> {
        Arc::new(Net::default())
    }

    /// Like [`Net::new`] with frame tracing switched on.
    pub fn recording() -> Arc<Net> {
        let net = Net::default();
        net.recording.store(true, Ordering::SeqCst);
        Arc::new(net)
    }

    /// Total bytes moved over TCP connections, both directions.
    pub fn socket_bytes(&self) -> u64 {
        self.socket_bytes.load(Ordering::SeqCst)
    }

    pub fn local_bytes(&self) -> u64 {
        self.local_bytes.load(Ordering::SeqCst)
    }

    /// Bumped for every frame written anywhere; used by quiescence checks.
    pub fn activity(&self) -> u64 {
        self.activity.load(Ordering::SeqCst)
    }

    pub(crate) fn tick(&self) {
        self.activity.fetch_add(1, Ordering::SeqCst);
    }

    pub fn next_channel(&self) -> u64 {
        self.next_channel.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub(crate) fn trace(&self, channel: u64, side: Side, peer: String) -> Option<Arc<ConnTrace>> {
        if !self.recording.load(Ordering::SeqCst) {
            return None;
        }
        let t = Arc::new(ConnTrace {
            channel,
            side,
            peer,
            events: Mutex::new(Vec::new()),
        });
        self.traces.lock().expect("traces lock").push(t.clone());
        Some(t)
    }

    pub fn traces(&self) -> Vec<Arc<ConnTrace>> {
        self.traces.lock().expect("traces lock").clone()
    }
}

pub trait Closer: Send + Sync {
    fn close(&self);
}

/// One end of an established connection.
pub struct Conn {
    pub reader: Box<dyn Read + Send>,
    pub writer: Box<dyn Write + Send>,
    pub closer: Arc<dyn Closer>,
    pub channel: u64,
}

#[derive(Debug, Default)]
struct PipeState {
    buf: VecDeque<u8>,
    closed: bool,
}

#[derive(Debug, Default)]
struct Pipe {
    state: Mutex<PipeState>,
    ready: Condvar,
    bytes: AtomicU64,
}

impl Pipe {
    fn close(&self) {
        self.state.lock().expect("pipe lock").closed = true;
        self.ready.notify_all();
    }
}

pub struct MemReader(Arc<Pipe>);

impl Read for MemReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        let mut st = self.0.state.lock().expect("pipe lock");
        while st.buf.is_empty() && !st.closed {
            st = self.0.ready.wait(st).expect("pipe lock");
        }
        let n = out.len().min(st.buf.len());
        for (dst, src) in out.iter_mut().zip(st.buf.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

pub struct MemWriter {
    pipe: Arc<Pipe>,
    shared: Option<Arc<Net>>,
}

impl Write for MemWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        let mut st = self.pipe.state.lock().expect("pipe lock");
        if st.closed {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "memnet endpoint closed"));
        }
        st.buf.extend(data);
        self.pipe.bytes.fetch_add(data.len() as u64, Ordering::SeqCst);
        if let Some(net) = &self.shared {
            net.local_bytes.fetch_add(data.len() as u64, Ordering::SeqCst);
        }
        self.pipe.ready.notify_all();
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Drop for MemWriter {
    fn drop(&mut self) {
        self.pipe.close();
    }
}

struct MemCloser(Arc<Pipe>, Arc<Pipe>);

impl Closer for MemCloser {
    fn close(&self) {
        self.0.close();
        self.1.close();
    }
}

/// One side of an in-memory duplex byte channel.
pub struct MemEndpoint {
    pub reader: MemReader,
    pub writer: MemWriter,
    inbound: Arc<Pipe>,
    outbound: Arc<Pipe>,
}

impl MemEndpoint {
    /// Bytes written by this side so far.
    pub fn bytes_sent(&self) -> u64 {
        self.outbound.bytes.load(Ordering::SeqCst)
    }

    pub fn bytes_received(&self) -> u64 {
        self.inbound.bytes.load(Ordering::SeqCst)
    }

    pub fn closer(&self) -> Arc<dyn Closer> {
        Arc::new(MemCloser(self.inbound.clone(), self.outbound.clone()))
    }

    pub fn close(&self) {
        self.closer().close();
    }

    pub fn into_conn(self, channel: u64) -> Conn {
        let closer = self.closer();
        Conn {
            reader: Box::new(self.reader),
            writer: Box::new(self.writer),
            closer,
            channel,
        }
    }
}

fn pair_with(net: Option<Arc<Net>>) -> (MemEndpoint, MemEndpoint) {
    let a_to_b = Arc::new(Pipe::default());
    let b_to_a = Arc::new(Pipe::default());
    let a = MemEndpoint {
        reader: MemReader(b_to_a.clone()),
        writer: MemWriter { pipe: a_to_b.clone(), shared: net.clone() },
        inbound: b_to_a.clone(),
        outbound: a_to_b.clone(),
    };
    let b = MemEndpoint {
        reader: MemReader(a_to_b.clone()),
        writer: MemWriter { pipe: b_to_a.clone(), shared: net },
        inbound: a_to_b,
        outbound: b_to_a,
    };
    (a, b)
}

/// A connected pair of in-memory endpoints (client, server).
pub fn memnet_pair() -> (MemEndpoint, MemEndpoint) {
    pair_with(None)
}

struct Counting<T> {
    inner: T,
    net: Arc<Net>,
}

impl<T: Read> Read for Counting<T> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.net.socket_bytes.fetch_add(n as u64, Ordering::SeqCst);
        Ok(n)
    }
}

impl<T: Write> Write for Counting<T> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.net.socket_bytes.fetch_add(n as u64, Ordering::SeqCst);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

struct TcpCloser(TcpStream);

impl Closer for TcpCloser {
    fn close(&self) {
        let _ = self.0.shutdown(Shutdown::Both);
    }
}

/// Wraps an accepted or dialled TCP stream, counting bytes on `net`.
pub fn tcp_conn(stream: TcpStream, net: &Arc<Net>) -> io::Result<Conn> {
    stream.set_nodelay(true)?;
    let reader = stream.try_clone()?;
    let closer = stream.try_clone()?;
    Ok(Conn {
        reader: Box::new(Counting { inner: reader, net: net.clone() }),
        writer: Box::new(Counting { inner: stream, net: net.clone() }),
        closer: Arc::new(TcpCloser(closer)),
        channel: net.next_channel(),
    })
}

type Acceptor = Arc<dyn Fn(Conn) + Send + Sync>;

/// Names bound to `local://` listeners within one container.
#[derive(Default)]
pub struct LocalRegistry {
    listeners: Mutex<HashMap<String, Acceptor>>,
}

impl LocalRegistry {
    pub fn new() -> Arc<LocalRegistry> {
        Arc::new(LocalRegistry::default())
    }

    pub fn bind(&self, name: &str, accept: Acceptor) -> Result<(), Error> {
        let mut map = self.listeners.lock().expect("registry lock");
        if map.contains_key(name) {
            return Err(Error::NameClash(format!("local://{name} is already bound")));
        }
        map.insert(name.to_owned(), accept);
        Ok(())
    }

    pub fn unbind(&self, name: &str) {
        self.listeners.lock().expect("registry lock").remove(name);
    }

    pub fn is_bound(&self, name: &str) -> bool {
        self.listeners.lock().expect("registry lock").contains_key(name)
    }

    pub fn dial(&self, name: &str, net: &Arc<Net>) -> Result<Conn, Fault> {
        let accept = self
            .listeners
            .lock()
            .expect("registry lock")
            .get(name)
            .cloned()
            .ok_or_else(Fault::io)?;
        let (client, server) = pair_with(Some(net.clone()));
        accept(server.into_conn(net.next_channel()));
        Ok(client.into_conn(net.next_channel()))
    }
}

pub fn dial(location: &Location, registry: &LocalRegistry, net: &Arc<Net>) -> Result<Conn, Fault> {
    match location {
        Location::Local(name) => registry.dial(name, net),
        Location::Socket { host, port } => {
            let stream = TcpStream::connect((host.as_str(), *port)).map_err(|_| Fault::io())?;
            tcp_conn(stream, net).map_err(|_| Fault::io())
        }
    }
}

/// Reads one LF-terminated line. `Ok(None)` on a clean end of stream; a
/// partial line before the end is an `IOFault`.
pub fn read_line<R: Read>(reader: &mut BufReader<R>) -> Result<Option<Vec<u8>>, Fault> {
    let mut line = Vec::new();
    match reader.read_until(b'\n', &mut line) {
        Ok(0) => Ok(None),
        Ok(_) if line.last() == Some(&b'\n') => Ok(Some(line)),
        Ok(_) => Err(Fault::io()),
        Err(_) => Err(Fault::io()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deployment::frame::{decode_frame, encode_frame};
    use crate::state::State;

    #[test]
    fn bytes_arrive_in_order() {
        let (mut a, b) = memnet_pair();
        a.writer.write_all(b"hello ").unwrap();
        a.writer.write_all(b"world\n").unwrap();
        let mut r = BufReader::new(b.reader);
        assert_eq!(read_line(&mut r).unwrap().unwrap(), b"hello world\n");
    }

    #[test]
    fn counter_matches_frame_bytes() {
        let (mut a, b) = memnet_pair();
        let mut total = 0;
        for i in 0..5 {
            let bytes = encode_frame(&Frame::request(i.to_string(), "op", State::new())).unwrap();
            total += bytes.len() as u64;
            a.writer.write_all(&bytes).unwrap();
        }
        assert_eq!(a.bytes_sent(), total);
        assert_eq!(b.bytes_received(), total);
    }

    #[test]
    fn close_mid_frame() {
        let (mut a, b) = memnet_pair();
        a.writer.write_all(br#"{"id":"1","type":"req"#).unwrap();
        a.close();
        let mut r = BufReader::new(b.reader);
        assert_eq!(read_line(&mut r), Err(Fault::io()));
        let partial = br#"{"id":"1","type":"req"#;
        assert!(decode_frame(partial).is_err());
    }

    #[test]
    fn endpoints_work_across_threads() {
        let (mut a, b) = memnet_pair();
        let t = std::thread::spawn(move || {
            let mut r = BufReader::new(b.reader);
            let mut n = 0;
            while let Ok(Some(_)) = read_line(&mut r) {
                n += 1;
            }
            n
        });
        for _ in 0..100 {
            a.writer.write_all(b"x\n").unwrap();
        }
        drop(a);
        assert_eq!(t.join().unwrap(), 100);
    }

    #[test]
    fn local_registry_names_are_exclusive() {
        let reg = LocalRegistry::new();
        let net = Net::new();
        reg.bind("calc", Arc::new(|_c: Conn| {})).unwrap();
        assert!(matches!(reg.bind("calc", Arc::new(|_c: Conn| {})), Err(Error::NameClash(_))));
        assert!(reg.dial("calc", &net).is_ok());
        reg.unbind("calc");
        assert_eq!(reg.dial("calc", &net).err(), Some(Fault::io()));
    }
}
