use std::io::{BufWriter, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Duration;

use super::transcript::{Direction, TranscriptLog};
use super::{decode_header, Frame, TransportError, HEADER_LEN};

/// An ordered, reliable frame pipe to one peer.
pub trait Channel: Send {
    /// Sends one frame, returning the number of bytes put on the wire.
    fn send(&mut self, frame: &Frame) -> Result<usize, TransportError>;
    fn recv(&mut self) -> Result<Frame, TransportError>;
}

impl<C: Channel + ?Sized> Channel for &mut C {
    fn send(&mut self, frame: &Frame) -> Result<usize, TransportError> {
        (**self).send(frame)
    }
    fn recv(&mut self) -> Result<Frame, TransportError> {
        (**self).recv()
    }
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn send(&mut self, frame: &Frame) -> Result<usize, TransportError> {
        (**self).send(frame)
    }
    fn recv(&mut self) -> Result<Frame, TransportError> {
        (**self).recv()
    }
}

/// In-process endpoint; frames cross as encoded bytes.
pub struct MemoryChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-process endpoints.
pub fn memory_pair() -> (MemoryChannel, MemoryChannel) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (MemoryChannel { tx: a_tx, rx: a_rx }, MemoryChannel { tx: b_tx, rx: b_rx })
}

impl Channel for MemoryChannel {
    fn send(&mut self, frame: &Frame) -> Result<usize, TransportError> {
        let bytes = frame.encode()?;
        let len = bytes.len();
        self.tx.send(bytes).map_err(|_| TransportError::Closed)?;
        Ok(len)
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        let bytes = self.rx.recv().map_err(|_| TransportError::Closed)?;
        Frame::decode(&bytes)
    }
}

pub struct TcpChannel {
    reader: TcpStream,
    writer: BufWriter<TcpStream>,
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        Ok(Self {
            writer: BufWriter::with_capacity(1 << 16, stream.try_clone()?),
            reader: stream,
        })
    }

    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, TransportError> {
        let stream = TcpStream::connect(addr).map_err(|e| TransportError::Failure(format!("connect: {e}")))?;
        Self::new(stream)
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> Result<(), TransportError> {
        Ok(self.reader.set_read_timeout(timeout)?)
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, frame: &Frame) -> Result<usize, TransportError> {
        let header = super::encode_header(frame.msg_type, frame.payload.len())?;
        self.writer.write_all(&header)?;
        self.writer.write_all(&frame.payload)?;
        self.writer.flush()?;
        Ok(frame.wire_len())
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        let mut header = [0u8; HEADER_LEN];
        self.reader.read_exact(&mut header)?;
        let (msg_type, len) = decode_header(header)?;
        let mut payload = vec![0u8; len];
        self.reader.read_exact(&mut payload)?;
        Ok(Frame::new(msg_type, payload))
    }
}

/// Appends every frame crossing `inner` to a transcript, seen from one side.
pub struct LoggedChannel<C> {
    inner: C,
    outbound: Direction,
    log: TranscriptLog,
}

impl<C: Channel> LoggedChannel<C> {
    /// `outbound` is the direction of frames this endpoint sends.
    pub fn new(inner: C, outbound: Direction) -> Self {
        Self {
            inner,
            outbound,
            log: TranscriptLog::new(),
        }
    }

    pub fn log(&self) -> &TranscriptLog {
        &self.log
    }

    pub fn into_parts(self) -> (C, TranscriptLog) {
        (self.inner, self.log)
    }
}

impl<C: Channel> Channel for LoggedChannel<C> {
    fn send(&mut self, frame: &Frame) -> Result<usize, TransportError> {
        let n = self.inner.send(frame)?;
        self.log.record(self.outbound, frame.msg_type, n);
        Ok(n)
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        let f = self.inner.recv()?;
        self.log.record(self.outbound.reverse(), f.msg_type, f.wire_len());
        Ok(f)
    }
}

/// Keeps a copy of every frame in both directions.
pub struct TapChannel<C> {
    inner: C,
    pub sent: Vec<Frame>,
    pub received: Vec<Frame>,
}

impl<C: Channel> TapChannel<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            sent: Vec::new(),
            received: Vec::new(),
        }
    }
}

impl<C: Channel> Channel for TapChannel<C> {
    fn send(&mut self, frame: &Frame) -> Result<usize, TransportError> {
        let n = self.inner.send(frame)?;
        self.sent.push(frame.clone());
        Ok(n)
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        let f = self.inner.recv()?;
        self.received.push(f.clone());
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use std::net::TcpListener;

    use super::*;
    use crate::transport::MsgType;

    fn frames() -> Vec<Frame> {
        vec![
            Frame::empty(MsgType::Setup),
            Frame::new(MsgType::CentroidQuery, (0..=255).collect()),
            Frame::new(MsgType::ColumnScore, vec![7; 100_000]),
            Frame::empty(MsgType::Done),
        ]
    }

    #[test]
    fn memory_channel_preserves_frames_in_order() {
        let (mut a, mut b) = memory_pair();
        for f in frames() {
            assert_eq!(a.send(&f).unwrap(), f.wire_len());
        }
        for f in frames() {
            assert_eq!(b.recv().unwrap(), f);
        }
        drop(a);
        assert!(matches!(b.recv(), Err(TransportError::Closed)));
    }

    #[test]
    fn tcp_loopback_matches_memory_transcript() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut ch = LoggedChannel::new(TcpChannel::new(s).unwrap(), Direction::ResponderToQuerier);
            for _ in frames() {
                let f = ch.recv().unwrap();
                ch.send(&f).unwrap();
            }
            ch.into_parts().1
        });
        let mut tcp = LoggedChannel::new(TcpChannel::connect(addr).unwrap(), Direction::QuerierToResponder);
        for f in frames() {
            tcp.send(&f).unwrap();
            assert_eq!(tcp.recv().unwrap(), f);
        }
        let server_log = server.join().unwrap();

        let (a, mut b) = memory_pair();
        let echo = std::thread::spawn(move || {
            for _ in frames() {
                let f = b.recv().unwrap();
                b.send(&f).unwrap();
            }
        });
        let mut mem = LoggedChannel::new(a, Direction::QuerierToResponder);
        for f in frames() {
            mem.send(&f).unwrap();
            mem.recv().unwrap();
        }
        echo.join().unwrap();

        let shape = |log: &TranscriptLog| -> Vec<_> {
            log.entries().iter().map(|e| (e.direction, e.msg_type, e.bytes)).collect()
        };
        assert_eq!(shape(tcp.log()), shape(mem.log()));
        assert_eq!(tcp.log().totals(), server_log.totals());
    }

    #[test]
    fn tcp_rejects_bad_type_byte() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let t = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            TcpChannel::new(s).unwrap().recv()
        });
        let mut raw = TcpStream::connect(addr).unwrap();
        raw.write_all(&[0, 0, 0, 0, 99]).unwrap();
        assert!(matches!(t.join().unwrap(), Err(TransportError::FrameCorrupt(_))));
    }
}
