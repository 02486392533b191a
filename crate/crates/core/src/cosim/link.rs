//! Datagram transports carrying encoded frames.

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use crate::cosim::frame::MAX_FRAME_LEN;
use crate::error::{Error, Result};

/// Unreliable, message-oriented transport.
pub trait Link: Send {
    fn send(&mut self, datagram: &[u8]) -> Result<()>;
    /// Waits up to `timeout` for one datagram; `Ok(None)` when none arrived.
    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>>;
}

/// UDP socket. A bound (server) link learns its peer from the first
/// datagram it receives; a connected (client) link talks to a fixed peer.
#[derive(Debug)]
pub struct UdpLink {
    socket: UdpSocket,
    peer: Option<SocketAddr>,
}

impl UdpLink {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        Ok(UdpLink {
            socket: UdpSocket::bind(addr)?,
            peer: None,
        })
    }

    pub fn connect(peer: impl ToSocketAddrs) -> Result<Self> {
        let peer = peer
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| Error::Config("peer address resolves to nothing".into()))?;
        let local: SocketAddr = if peer.is_ipv4() {
            "0.0.0.0:0".parse().expect("literal address")
        } else {
            "[::]:0".parse().expect("literal address")
        };
        Ok(UdpLink {
            socket: UdpSocket::bind(local)?,
            peer: Some(peer),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.socket.local_addr()?)
    }

    pub fn peer(&self) -> Option<SocketAddr> {
        self.peer
    }
}

impl Link for UdpLink {
    fn send(&mut self, datagram: &[u8]) -> Result<()> {
        let peer = self
            .peer
            .ok_or_else(|| Error::Usage("UDP link has no peer yet".into()))?;
        self.socket.send_to(datagram, peer)?;
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>> {
        // zero would mean "block forever" to the socket
        self.socket
            .set_read_timeout(Some(timeout.max(Duration::from_micros(1))))?;
        // one spare byte so oversize datagrams show up as a length mismatch
        let mut buf = [0u8; MAX_FRAME_LEN + 1];
        match self.socket.recv_from(&mut buf) {
            Ok((n, from)) => {
                match self.peer {
                    None => self.peer = Some(from),
                    Some(p) if p != from => {
                        log::warn!("ignoring datagram from unexpected peer {from}");
                        return Ok(Some(Vec::new()));
                    }
                    Some(_) => {}
                }
                Ok(Some(buf[..n].to_vec()))
            }
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock
                        | std::io::ErrorKind::TimedOut
                        | std::io::ErrorKind::ConnectionRefused
                ) =>
            {
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// In-memory link, one end of a pair made by [`channel_pair`].
#[derive(Debug)]
pub struct ChannelLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn channel_pair() -> (ChannelLink, ChannelLink) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (ChannelLink { tx: tx_a, rx: rx_a }, ChannelLink { tx: tx_b, rx: rx_b })
}

impl Link for ChannelLink {
    fn send(&mut self, datagram: &[u8]) -> Result<()> {
        // a vanished peer behaves like a black hole, as UDP would
        let _ = self.tx.send(datagram.to_vec());
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>> {
        match self.rx.recv_timeout(timeout) {
            Ok(d) => Ok(Some(d)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                std::thread::sleep(timeout);
                Ok(None)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn udp_loopback_exchange() {
        let mut server = UdpLink::bind("127.0.0.1:0").unwrap();
        let mut client = UdpLink::connect(server.local_addr().unwrap()).unwrap();
        assert!(server.send(b"x").is_err());
        client.send(b"hello").unwrap();
        let got = server.recv(Duration::from_secs(2)).unwrap().unwrap();
        assert_eq!(got, b"hello");
        server.send(b"back").unwrap();
        assert_eq!(client.recv(Duration::from_secs(2)).unwrap().unwrap(), b"back");
        assert_eq!(server.recv(Duration::from_millis(5)).unwrap(), None);
    }

    #[test]
    fn channel_pair_is_bidirectional() {
        let (mut a, mut b) = channel_pair();
        a.send(&[1, 2]).unwrap();
        b.send(&[3]).unwrap();
        assert_eq!(b.recv(Duration::from_millis(10)).unwrap(), Some(vec![1, 2]));
        assert_eq!(a.recv(Duration::from_millis(10)).unwrap(), Some(vec![3]));
        assert_eq!(a.recv(Duration::from_millis(1)).unwrap(), None);
    }
}
