use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cosim::frame::{decode_frame, encode_frame, Frame, MessageType};
use crate::cosim::link::Link;
use crate::error::{Error, Result};

/// Per-endpoint frame accounting.
///
/// Across both endpoints of a finished session,
/// `sent = received + dropped + lost`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub sent: u64,
    /// Frames accepted by the protocol.
    pub received: u64,
    /// Stale, duplicate or undecodable frames.
    pub dropped: u64,
    /// Frames discarded by the loss injector before sending.
    pub lost: u64,
    /// Resends after a reply timeout.
    pub retries: u64,
}

impl SessionStats {
    pub fn merged(&self, other: &SessionStats) -> SessionStats {
        SessionStats {
            sent: self.sent + other.sent,
            received: self.received + other.received,
            dropped: self.dropped + other.dropped,
            lost: self.lost + other.lost,
            retries: self.retries + other.retries,
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.sent == self.received + self.dropped + self.lost
    }
}

/// Seeded Bernoulli loss applied to data frames (commands and measurements).
#[derive(Debug, Clone)]
pub struct LossInjector {
    probability: f64,
    rng: ChaCha8Rng,
}

impl LossInjector {
    pub fn new(probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&probability) {
            return Err(Error::validation(format!(
                "loss probability must lie in [0, 1), got {probability}"
            )));
        }
        Ok(LossInjector {
            probability,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn should_drop(&mut self) -> bool {
        self.probability > 0.0 && self.rng.random::<f64>() < self.probability
    }
}

/// Timing and fault-injection knobs shared by both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    /// Wait for a reply before resending.
    pub timeout: Duration,
    /// Resends of one frame before giving up.
    pub max_resends: u32,
    /// Wait for the peer to appear, and the client's idle limit.
    pub connect_timeout: Duration,
    pub loss_probability: f64,
    pub loss_seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            timeout: Duration::from_millis(100),
            max_resends: 3,
            connect_timeout: Duration::from_secs(10),
            loss_probability: 0.0,
            loss_seed: 0,
        }
    }
}

/// Lockstep progress of one endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub expected_seq: u32,
    pub dt: f64,
    pub dof_mask: u8,
    pub stats: SessionStats,
}

impl SessionState {
    pub fn new(dt: f64, dof_mask: u8) -> Self {
        SessionState {
            expected_seq: 0,
            dt,
            dof_mask,
            stats: SessionStats::default(),
        }
    }

    /// Moves on to the next sequence number.
    pub fn advance(&mut self) {
        self.expected_seq += 1;
    }
}

/// A link plus frame coding, loss injection and accounting.
pub struct Endpoint<L> {
    link: L,
    loss: Option<LossInjector>,
    pub state: SessionState,
}

impl<L: Link> Endpoint<L> {
    pub fn new(link: L, loss: Option<LossInjector>, state: SessionState) -> Self {
        Endpoint { link, loss, state }
    }

    pub fn into_link(self) -> L {
        self.link
    }

    pub fn send(&mut self, frame: &Frame) -> Result<()> {
        let bytes = encode_frame(frame)?;
        self.send_bytes(frame.msg_type, &bytes)
    }

    /// Sends an already encoded frame (used for resends).
    pub fn send_bytes(&mut self, msg_type: MessageType, bytes: &[u8]) -> Result<()> {
        self.state.stats.sent += 1;
        let data = matches!(msg_type, MessageType::Command | MessageType::Measurement);
        if data {
            if let Some(loss) = &mut self.loss {
                if loss.should_drop() {
                    self.state.stats.lost += 1;
                    return Ok(());
                }
            }
        }
        self.link.send(bytes)
    }

    /// Next decodable frame within `timeout`; undecodable datagrams are
    /// counted as dropped and skipped.
    pub fn recv(&mut self, timeout: Duration) -> Result<Option<Frame>> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let Some(bytes) = self.link.recv(left)? else {
                return Ok(None);
            };
            match decode_frame(&bytes) {
                Ok(f) => return Ok(Some(f)),
                Err(e) => {
                    log::warn!("discarding malformed datagram: {e}");
                    self.state.stats.dropped += 1;
                }
            }
            if Instant::now() >= deadline {
                return Ok(None);
            }
        }
    }

    pub fn accept(&mut self) {
        self.state.stats.received += 1;
    }

    pub fn reject(&mut self) {
        self.state.stats.dropped += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cosim::link::channel_pair;

    #[test]
    fn loss_rate_matches_probability() {
        let mut inj = LossInjector::new(0.1, 42).unwrap();
        let lost = (0..100_000).filter(|_| inj.should_drop()).count();
        assert!((9_000..11_000).contains(&lost), "{lost}");
        let mut none = LossInjector::new(0.0, 1).unwrap();
        assert!((0..1000).all(|_| !none.should_drop()));
        assert!(LossInjector::new(1.0, 0).is_err());
    }

    #[test]
    fn loss_is_reproducible() {
        let a: Vec<bool> = {
            let mut i = LossInjector::new(0.3, 9).unwrap();
            (0..200).map(|_| i.should_drop()).collect()
        };
        let mut i = LossInjector::new(0.3, 9).unwrap();
        assert!(a.iter().all(|&d| d == i.should_drop()));
    }

    #[test]
    fn endpoint_counts_garbage_as_dropped() {
        let (mut raw, link) = channel_pair();
        let mut ep = Endpoint::new(link, None, SessionState::new(0.001, 1));
        raw.send(b"junk").unwrap();
        raw.send(&encode_frame(&Frame::command(0, 0.0, vec![1.0])).unwrap())
            .unwrap();
        let f = ep.recv(Duration::from_millis(50)).unwrap().unwrap();
        assert_eq!(f.seq, 0);
        assert_eq!(ep.state.stats.dropped, 1);
    }

    #[test]
    fn handshakes_bypass_loss() {
        use crate::cosim::frame::Handshake;
        let (link, mut raw) = channel_pair();
        let mut ep = Endpoint::new(
            link,
            Some(LossInjector::new(0.99, 3).unwrap()),
            SessionState::new(0.001, 1),
        );
        let hs = Handshake {
            dt: 0.001,
            t_end: 1.0,
            dof_mask: 1,
            estimator: 1,
        };
        for _ in 0..20 {
            ep.send(&Frame::handshake(0, hs)).unwrap();
        }
        let mut n = 0;
        while raw.recv(Duration::from_millis(1)).unwrap().is_some() {
            n += 1;
        }
        assert_eq!(n, 20);
        assert_eq!(ep.state.stats.lost, 0);
    }
}
