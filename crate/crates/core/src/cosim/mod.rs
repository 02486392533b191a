//! Co-simulation between the numerical substructure (estimator) and the
//! physical substructure (force generator), in one process or split over UDP.

pub mod delay;
pub mod frame;
pub mod link;
pub mod numerical;
pub mod physical;
pub mod protocol;
pub mod session;

pub use delay::DelayLine;
pub use frame::{decode_frame, encode_frame, Frame, FrameError, Handshake, MessageType, Payload};
pub use link::{channel_pair, ChannelLink, Link, UdpLink};
pub use numerical::{NumericalOutput, NumericalSubstructure};
pub use physical::{PhysicalConfig, PhysicalMode, PhysicalReply, PhysicalSubstructure};
pub use protocol::{
    numerical_server, run_channel_pair, run_in_process, run_udp_loopback, surrogate_physical, LoopOutcome,
};
pub use session::{Endpoint, LossInjector, ProtocolConfig, SessionState, SessionStats};
