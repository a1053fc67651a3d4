//! Reliable ordered byte-stream transports and frame segmentation.
//!
//! The protocol runs over any ordered byte stream; the same frame bytes flow
//! whether the peers share a process (loopback pipe) or talk across stream
//! sockets. Frame boundaries are recovered from the 4-byte length prefix.

use crate::e2::MAX_PAYLOAD;
use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

struct PipeState {
    buf: VecDeque<u8>,
    closed: bool,
}

struct PipeShared {
    state: Mutex<PipeState>,
    readable: Condvar,
}

/// Read end of an in-process byte pipe.
pub struct PipeReader {
    shared: Arc<PipeShared>,
}

/// Write end of an in-process byte pipe. Dropping it signals EOF.
pub struct PipeWriter {
    shared: Arc<PipeShared>,
}

fn pipe() -> (PipeWriter, PipeReader) {
    let shared = Arc::new(PipeShared {
        state: Mutex::new(PipeState {
            buf: VecDeque::new(),
            closed: false,
        }),
        readable: Condvar::new(),
    });
    (
        PipeWriter {
            shared: Arc::clone(&shared),
        },
        PipeReader { shared },
    )
}

impl PipeReader {
    /// Reads available bytes. Blocking mode waits for data or EOF; otherwise
    /// an empty pipe yields `WouldBlock`.
    fn read_some(&mut self, out: &mut [u8], block: bool) -> io::Result<usize> {
        let mut st = self.shared.state.lock().unwrap();
        loop {
            if !st.buf.is_empty() {
                let n = out.len().min(st.buf.len());
                for slot in out.iter_mut().take(n) {
                    *slot = st.buf.pop_front().unwrap();
                }
                return Ok(n);
            }
            if st.closed {
                return Ok(0);
            }
            if !block {
                return Err(io::Error::from(io::ErrorKind::WouldBlock));
            }
            st = self.shared.readable.wait(st).unwrap();
        }
    }
}

impl PipeWriter {
    fn write_all_bytes(&mut self, bytes: &[u8]) -> io::Result<()> {
        let mut st = self.shared.state.lock().unwrap();
        if st.closed {
            return Err(io::Error::from(io::ErrorKind::BrokenPipe));
        }
        st.buf.extend(bytes);
        self.shared.readable.notify_all();
        Ok(())
    }
}

impl Drop for PipeWriter {
    fn drop(&mut self) {
        let mut st = self.shared.state.lock().unwrap();
        st.closed = true;
        self.shared.readable.notify_all();
    }
}

/// Read half of a connection.
pub enum ReadHalf {
    Tcp(TcpStream),
    Pipe(PipeReader),
}

/// Write half of a connection.
pub enum WriteHalf {
    Tcp(TcpStream),
    Pipe(PipeWriter),
}

impl ReadHalf {
    fn read_some(&mut self, out: &mut [u8], block: bool) -> io::Result<usize> {
        match self {
            ReadHalf::Pipe(p) => p.read_some(out, block),
            ReadHalf::Tcp(s) => {
                if block {
                    s.set_read_timeout(None)?;
                } else {
                    s.set_read_timeout(Some(Duration::from_millis(1)))?;
                }
                match s.read(out) {
                    Ok(n) => Ok(n),
                    Err(e)
                        if !block
                            && (e.kind() == io::ErrorKind::WouldBlock
                                || e.kind() == io::ErrorKind::TimedOut) =>
                    {
                        Err(io::Error::from(io::ErrorKind::WouldBlock))
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }
}

impl WriteHalf {
    pub fn write_all_bytes(&mut self, bytes: &[u8]) -> io::Result<()> {
        match self {
            WriteHalf::Pipe(p) => p.write_all_bytes(bytes),
            WriteHalf::Tcp(s) => {
                s.write_all(bytes)?;
                s.flush()
            }
        }
    }
}

/// Frame-oriented reader over a byte stream. Accumulates partial reads and
/// yields complete frames (length prefix included, ready for `e2::decode`).
pub struct FrameReader {
    inner: ReadHalf,
    buf: Vec<u8>,
}

impl FrameReader {
    pub fn new(inner: ReadHalf) -> Self {
        FrameReader {
            inner,
            buf: Vec::new(),
        }
    }

    fn frame_ready(&self) -> io::Result<Option<usize>> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let declared =
            u32::from_be_bytes([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]) as usize;
        if declared > MAX_PAYLOAD {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("frame payload {declared} exceeds limit"),
            ));
        }
        if self.buf.len() >= 4 + declared {
            Ok(Some(4 + declared))
        } else {
            Ok(None)
        }
    }

    fn take_frame(&mut self, total: usize) -> Vec<u8> {
        let rest = self.buf.split_off(total);
        std::mem::replace(&mut self.buf, rest)
    }

    /// Blocks until a full frame arrives. `Ok(None)` means clean EOF at a
    /// frame boundary; EOF mid-frame is an error.
    pub fn read_frame(&mut self) -> io::Result<Option<Vec<u8>>> {
        loop {
            if let Some(total) = self.frame_ready()? {
                return Ok(Some(self.take_frame(total)));
            }
            let mut chunk = [0u8; 4096];
            let n = self.inner.read_some(&mut chunk, true)?;
            if n == 0 {
                if self.buf.is_empty() {
                    return Ok(None);
                }
                return Err(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    "stream closed mid-frame",
                ));
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }

    /// Non-blocking: returns a frame if one is already buffered or readable
    /// without waiting, `Ok(None)` otherwise.
    pub fn poll_frame(&mut self) -> io::Result<Option<Vec<u8>>> {
        loop {
            if let Some(total) = self.frame_ready()? {
                return Ok(Some(self.take_frame(total)));
            }
            let mut chunk = [0u8; 4096];
            match self.inner.read_some(&mut chunk, false) {
                Ok(0) => {
                    if self.buf.is_empty() {
                        return Ok(None);
                    }
                    return Err(io::Error::new(
                        io::ErrorKind::UnexpectedEof,
                        "stream closed mid-frame",
                    ));
                }
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => return Ok(None),
                Err(e) => return Err(e),
            }
        }
    }
}

/// Frame-oriented writer. Cheaply cloneable so several owners can interleave
/// whole frames on one stream.
#[derive(Clone)]
pub struct FrameWriter {
    inner: Arc<Mutex<WriteHalf>>,
}

impl FrameWriter {
    pub fn new(inner: WriteHalf) -> Self {
        FrameWriter {
            inner: Arc::new(Mutex::new(inner)),
        }
    }

    pub fn write_frame(&self, frame: &[u8]) -> io::Result<()> {
        self.inner.lock().unwrap().write_all_bytes(frame)
    }
}

/// One endpoint of a duplex byte-stream connection.
pub struct Connection {
    pub reader: FrameReader,
    pub writer: FrameWriter,
}

impl Connection {
    pub fn from_tcp(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let write = stream.try_clone()?;
        Ok(Connection {
            reader: FrameReader::new(ReadHalf::Tcp(stream)),
            writer: FrameWriter::new(WriteHalf::Tcp(write)),
        })
    }
}

/// An in-process duplex link: two connected endpoints exchanging the exact
/// bytes a socket pair would. Buffers are unbounded; flow control lives at
/// the delivery queues, not the pipe.
pub fn duplex() -> (Connection, Connection) {
    let (w_ab, r_ab) = pipe();
    let (w_ba, r_ba) = pipe();
    (
        Connection {
            reader: FrameReader::new(ReadHalf::Pipe(r_ba)),
            writer: FrameWriter::new(WriteHalf::Pipe(w_ab)),
        },
        Connection {
            reader: FrameReader::new(ReadHalf::Pipe(r_ab)),
            writer: FrameWriter::new(WriteHalf::Pipe(w_ba)),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::e2::{self, E2Message};

    #[test]
    fn duplex_round_trip_and_eof() {
        let (a, b) = duplex();
        let Connection {
            reader: mut ra,
            writer: wa,
        } = a;
        let Connection {
            reader: mut rb,
            writer: wb,
        } = b;

        let m = E2Message::SubscriptionDelete { sub_id: 7 };
        wa.write_frame(&e2::encode(&m).unwrap()).unwrap();
        let frame = rb.read_frame().unwrap().unwrap();
        assert_eq!(e2::decode(&frame).unwrap(), m);

        // nothing pending the other way
        assert!(ra.poll_frame().unwrap().is_none());

        wb.write_frame(&e2::encode(&m).unwrap()).unwrap();
        assert!(ra.poll_frame().unwrap().is_some());

        drop(wa);
        assert_eq!(rb.read_frame().unwrap(), None);
    }

    #[test]
    fn partial_frames_reassemble() {
        let (a, b) = duplex();
        let m = E2Message::ErrorIndication {
            code: 1,
            detail: "x".repeat(100),
        };
        let bytes = e2::encode(&m).unwrap();
        // dribble the frame a few bytes at a time
        for chunk in bytes.chunks(7) {
            a.writer.write_frame(chunk).unwrap();
        }
        let mut rb = b.reader;
        let frame = rb.read_frame().unwrap().unwrap();
        assert_eq!(e2::decode(&frame).unwrap(), m);
    }

    #[test]
    fn tcp_round_trip() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let join = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut conn = Connection::from_tcp(s).unwrap();
            let frame = conn.reader.read_frame().unwrap().unwrap();
            conn.writer.write_frame(&frame).unwrap();
        });
        let mut conn = Connection::from_tcp(TcpStream::connect(addr).unwrap()).unwrap();
        let m = E2Message::SubscriptionDelete { sub_id: 9 };
        conn.writer.write_frame(&e2::encode(&m).unwrap()).unwrap();
        let echoed = conn.reader.read_frame().unwrap().unwrap();
        assert_eq!(e2::decode(&echoed).unwrap(), m);
        join.join().unwrap();
    }
}
