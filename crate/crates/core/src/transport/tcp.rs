//! Framed TCP transport.

use std::io::{ErrorKind, Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use super::{Channel, Frame, TransportError};

pub struct TcpChannel {
    stream: TcpStream,
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        Ok(TcpChannel { stream })
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> Result<(), TransportError> {
        self.stream.set_read_timeout(timeout)?;
        Ok(())
    }

    pub fn stream(&self) -> &TcpStream {
        &self.stream
    }
}

fn map_read(e: std::io::Error) -> TransportError {
    match e.kind() {
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted => {
            TransportError::Closed
        }
        ErrorKind::WouldBlock | ErrorKind::TimedOut => TransportError::Timeout,
        _ => TransportError::Io(e),
    }
}

impl Channel for TcpChannel {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), TransportError> {
        let mut buf = Vec::with_capacity(frame.wire_len());
        buf.extend_from_slice(&frame.header());
        buf.extend_from_slice(&frame.payload);
        self.stream.write_all(&buf).map_err(|e| match e.kind() {
            ErrorKind::BrokenPipe | ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted => {
                TransportError::Closed
            }
            _ => TransportError::Io(e),
        })?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<Frame, TransportError> {
        let mut header = [0u8; Frame::HEADER_LEN];
        self.stream.read_exact(&mut header).map_err(map_read)?;
        let (kind, len) = Frame::parse_header(header)?;
        let mut payload = vec![0u8; len as usize];
        self.stream.read_exact(&mut payload).map_err(map_read)?;
        Ok(Frame { kind, payload })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::FrameKind;
    use std::net::TcpListener;

    #[test]
    fn frames_cross_loopback_intact() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut ch = TcpChannel::new(stream).unwrap();
            let f = ch.recv_frame().unwrap();
            ch.send_frame(&Frame::new(FrameKind::Ack, f.payload.clone())).unwrap();
            ch.recv_frame()
        });
        let mut ch = TcpChannel::new(TcpStream::connect(addr).unwrap()).unwrap();
        ch.send_frame(&Frame::new(FrameKind::Sketch, vec![1, 2, 3])).unwrap();
        let back = ch.recv_frame().unwrap();
        assert_eq!(back, Frame::new(FrameKind::Ack, vec![1, 2, 3]));
        drop(ch);
        assert!(matches!(handle.join().unwrap(), Err(TransportError::Closed)));
    }

    #[test]
    fn malformed_header_is_rejected() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            TcpChannel::new(stream).unwrap().recv_frame()
        });
        let mut raw = TcpStream::connect(addr).unwrap();
        raw.write_all(&[42, 0, 0, 0, 0]).unwrap();
        assert!(matches!(handle.join().unwrap(), Err(TransportError::Malformed(_))));
    }
}
