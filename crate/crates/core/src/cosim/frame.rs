//! Binary wire format of the co-simulation protocol.
//!
//! ```text
//! 0..4   magic "RTAH"
//! 4      version (1)
//! 5      msg_type  1=MEASUREMENT 2=COMMAND 3=HANDSHAKE 4=SHUTDOWN
//! 6      dof_count 1..=3
//! 7      flags     bit0 forces block, bit1 displacements block
//! 8..12  seq       u32
//! 12..20 sim_time  f64
//! 20..   forces[dof_count] if bit0, then displacements[dof_count] if bit1
//! ```
//!
//! A HANDSHAKE carries `dt: f64, t_end: f64, dof_mask: u8, estimator: u8`
//! instead, with `flags = 0`. Everything is little-endian.

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"RTAH";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;
pub const HANDSHAKE_PAYLOAD_LEN: usize = 18;
pub const FLAG_FORCES: u8 = 0b01;
pub const FLAG_DISPLACEMENTS: u8 = 0b10;
/// Largest frame the protocol can produce (3 DOFs, both blocks).
pub const MAX_FRAME_LEN: usize = HEADER_LEN + 2 * 3 * 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("truncated frame: {len} bytes, need {needed}")]
    Truncated { len: usize, needed: usize },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    BadMessageType(u8),
    #[error("dof_count {0} outside 1..=3")]
    BadDofCount(u8),
    #[error("invalid flags {0:#04x}")]
    BadFlags(u8),
    #[error("length mismatch: expected {expected} bytes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("bad handshake: {0}")]
    BadHandshake(String),
    #[error("block has {actual} values, dof_count is {expected}")]
    BlockLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    Measurement = 1,
    Command = 2,
    Handshake = 3,
    Shutdown = 4,
}

impl TryFrom<u8> for MessageType {
    type Error = FrameError;

    fn try_from(v: u8) -> Result<Self, FrameError> {
        Ok(match v {
            1 => MessageType::Measurement,
            2 => MessageType::Command,
            3 => MessageType::Handshake,
            4 => MessageType::Shutdown,
            other => return Err(FrameError::BadMessageType(other)),
        })
    }
}

/// Session parameters agreed at connection time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Handshake {
    pub dt: f64,
    pub t_end: f64,
    pub dof_mask: u8,
    /// 1 = kf, 2 = ekf, 3 = aekf; 0 from a client that has no preference.
    pub estimator: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Data {
        forces: Option<Vec<f64>>,
        displacements: Option<Vec<f64>>,
    },
    Handshake(Handshake),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub msg_type: MessageType,
    pub dof_count: u8,
    pub seq: u32,
    pub sim_time: f64,
    pub payload: Payload,
}

impl Frame {
    pub fn measurement(seq: u32, sim_time: f64, forces: Vec<f64>, displacements: Vec<f64>) -> Self {
        Frame {
            msg_type: MessageType::Measurement,
            dof_count: forces.len() as u8,
            seq,
            sim_time,
            payload: Payload::Data {
                forces: Some(forces),
                displacements: Some(displacements),
            },
        }
    }

    pub fn command(seq: u32, sim_time: f64, displacements: Vec<f64>) -> Self {
        Frame {
            msg_type: MessageType::Command,
            dof_count: displacements.len() as u8,
            seq,
            sim_time,
            payload: Payload::Data {
                forces: None,
                displacements: Some(displacements),
            },
        }
    }

    pub fn handshake(seq: u32, hs: Handshake) -> Self {
        Frame {
            msg_type: MessageType::Handshake,
            dof_count: hs.dof_mask.count_ones().max(1) as u8,
            seq,
            sim_time: 0.0,
            payload: Payload::Handshake(hs),
        }
    }

    pub fn shutdown(seq: u32, dof_count: u8, sim_time: f64) -> Self {
        Frame {
            msg_type: MessageType::Shutdown,
            dof_count,
            seq,
            sim_time,
            payload: Payload::Data {
                forces: None,
                displacements: None,
            },
        }
    }

    pub fn flags(&self) -> u8 {
        match &self.payload {
            Payload::Data { forces, displacements } => {
                (if forces.is_some() { FLAG_FORCES } else { 0 })
                    | (if displacements.is_some() { FLAG_DISPLACEMENTS } else { 0 })
            }
            Payload::Handshake(_) => 0,
        }
    }

    pub fn forces(&self) -> Option<&[f64]> {
        match &self.payload {
            Payload::Data { forces, .. } => forces.as_deref(),
            Payload::Handshake(_) => None,
        }
    }

    pub fn displacements(&self) -> Option<&[f64]> {
        match &self.payload {
            Payload::Data { displacements, .. } => displacements.as_deref(),
            Payload::Handshake(_) => None,
        }
    }

    /// Encoded size in bytes.
    pub fn encoded_len(&self) -> usize {
        match self.payload {
            Payload::Handshake(_) => HEADER_LEN + HANDSHAKE_PAYLOAD_LEN,
            Payload::Data { .. } => data_len(self.dof_count, self.flags()),
        }
    }

    fn check(&self) -> Result<(), FrameError> {
        if !(1..=3).contains(&self.dof_count) {
            return Err(FrameError::BadDofCount(self.dof_count));
        }
        let n = self.dof_count as usize;
        match &self.payload {
            Payload::Handshake(hs) => {
                if self.msg_type != MessageType::Handshake {
                    return Err(FrameError::BadHandshake(format!(
                        "handshake payload on {:?}",
                        self.msg_type
                    )));
                }
                check_handshake(hs, self.dof_count)
            }
            Payload::Data { forces, displacements } => {
                if self.msg_type == MessageType::Handshake {
                    return Err(FrameError::BadHandshake("missing handshake payload".into()));
                }
                for block in [forces, displacements].into_iter().flatten() {
                    if block.len() != n {
                        return Err(FrameError::BlockLength {
                            expected: n,
                            actual: block.len(),
                        });
                    }
                }
                Ok(())
            }
        }
    }
}

fn data_len(dof_count: u8, flags: u8) -> usize {
    HEADER_LEN + 8 * dof_count as usize * flags.count_ones() as usize
}

fn check_handshake(hs: &Handshake, dof_count: u8) -> Result<(), FrameError> {
    if !(hs.dt > 0.0 && hs.dt.is_finite()) {
        return Err(FrameError::BadHandshake(format!("dt {}", hs.dt)));
    }
    if !(hs.t_end > 0.0 && hs.t_end.is_finite()) {
        return Err(FrameError::BadHandshake(format!("t_end {}", hs.t_end)));
    }
    if hs.dof_mask == 0 || hs.dof_mask & !0b111 != 0 {
        return Err(FrameError::BadHandshake(format!("dof mask {:#05b}", hs.dof_mask)));
    }
    if hs.dof_mask.count_ones() != dof_count as u32 {
        return Err(FrameError::BadHandshake(format!(
            "dof mask {:#05b} disagrees with dof_count {dof_count}",
            hs.dof_mask
        )));
    }
    if hs.estimator > 3 {
        return Err(FrameError::BadHandshake(format!("estimator id {}", hs.estimator)));
    }
    Ok(())
}

pub fn encode_frame(f: &Frame) -> Result<Vec<u8>, FrameError> {
    f.check()?;
    let mut out = Vec::with_capacity(f.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(f.msg_type as u8);
    out.push(f.dof_count);
    out.push(f.flags());
    out.extend_from_slice(&f.seq.to_le_bytes());
    out.extend_from_slice(&f.sim_time.to_le_bytes());
    match &f.payload {
        Payload::Handshake(hs) => {
            out.extend_from_slice(&hs.dt.to_le_bytes());
            out.extend_from_slice(&hs.t_end.to_le_bytes());
            out.push(hs.dof_mask);
            out.push(hs.estimator);
        }
        Payload::Data { forces, displacements } => {
            for v in [forces, displacements].into_iter().flatten().flatten() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    debug_assert_eq!(out.len(), f.encoded_len());
    Ok(out)
}

fn f64_at(buf: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(buf[at..at + 8].try_into().expect("8-byte slice"))
}

fn block(buf: &[u8], at: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| f64_at(buf, at + 8 * i)).collect()
}

pub fn decode_frame(buf: &[u8]) -> Result<Frame, FrameError> {
    if buf.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            len: buf.len(),
            needed: HEADER_LEN,
        });
    }
    let magic: [u8; 4] = buf[0..4].try_into().expect("4-byte slice");
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    if buf[4] != VERSION {
        return Err(FrameError::BadVersion(buf[4]));
    }
    let msg_type = MessageType::try_from(buf[5])?;
    let dof_count = buf[6];
    if !(1..=3).contains(&dof_count) {
        return Err(FrameError::BadDofCount(dof_count));
    }
    let flags = buf[7];
    if flags & !(FLAG_FORCES | FLAG_DISPLACEMENTS) != 0 {
        return Err(FrameError::BadFlags(flags));
    }
    let seq = u32::from_le_bytes(buf[8..12].try_into().expect("4-byte slice"));
    let sim_time = f64_at(buf, 12);

    if msg_type == MessageType::Handshake {
        if flags != 0 {
            return Err(FrameError::BadFlags(flags));
        }
        let expected = HEADER_LEN + HANDSHAKE_PAYLOAD_LEN;
        if buf.len() != expected {
            return Err(FrameError::LengthMismatch {
                expected,
                actual: buf.len(),
            });
        }
        let hs = Handshake {
            dt: f64_at(buf, 20),
            t_end: f64_at(buf, 28),
            dof_mask: buf[36],
            estimator: buf[37],
        };
        check_handshake(&hs, dof_count)?;
        return Ok(Frame {
            msg_type,
            dof_count,
            seq,
            sim_time,
            payload: Payload::Handshake(hs),
        });
    }

    let expected = data_len(dof_count, flags);
    if buf.len() != expected {
        return Err(FrameError::LengthMismatch {
            expected,
            actual: buf.len(),
        });
    }
    let n = dof_count as usize;
    let mut at = HEADER_LEN;
    let forces = (flags & FLAG_FORCES != 0).then(|| {
        let b = block(buf, at, n);
        at += 8 * n;
        b
    });
    let displacements = (flags & FLAG_DISPLACEMENTS != 0).then(|| block(buf, at, n));
    Ok(Frame {
        msg_type,
        dof_count,
        seq,
        sim_time,
        payload: Payload::Data { forces, displacements },
    })
}
