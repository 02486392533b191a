//! Lockstep exchange between the numerical server and the physical client.
//!
//! ```text
//! client                          server
//!   HANDSHAKE hello      ->
//!                        <-   HANDSHAKE (dt, t_end, dof mask, estimator)
//!                        <-   COMMAND k        (resent on timeout)
//!   MEASUREMENT k        ->                    (cached, replayed on duplicates)
//!   ...
//!                        <-   SHUTDOWN
//!   SHUTDOWN (ack)       ->
//! ```
//!
//! A client whose structure diverges answers the pending command with
//! SHUTDOWN instead of a measurement; the server then closes the session.

use std::thread;
use std::time::Instant;

use crate::cosim::frame::{encode_frame, Frame, Handshake, MessageType, Payload};
use crate::cosim::link::{channel_pair, Link, UdpLink};
use crate::cosim::numerical::{NumericalOutput, NumericalSubstructure};
use crate::cosim::physical::{PhysicalReply, PhysicalSubstructure};
use crate::cosim::session::{Endpoint, LossInjector, ProtocolConfig, SessionState, SessionStats};
use crate::dynamics::dof_mask;
use crate::error::{Error, Result};
use crate::integrators::record_count;

/// Client loss-stream offset so the two directions draw independently.
const CLIENT_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// How a co-simulation run ended.
#[derive(Debug)]
pub struct LoopOutcome {
    pub output: NumericalOutput,
    /// Number of completed steps when the physical side diverged.
    pub diverged_at: Option<usize>,
    /// Server and client accounting combined (zero for in-process runs).
    pub stats: SessionStats,
    /// Set when the session broke off; `output` then holds the partial run.
    pub failure: Option<Error>,
}

/// Monolithic loop: the same two substructures called directly.
pub fn run_in_process(
    mut numerical: NumericalSubstructure,
    physical: &mut PhysicalSubstructure,
    steps: usize,
) -> Result<LoopOutcome> {
    let mut diverged_at = None;
    for k in 0..steps {
        let cmd = numerical.command(k)?;
        match physical.on_command(k as u32, &cmd)? {
            PhysicalReply::Measurement { forces, displacements } => {
                numerical.on_measurement(k, &forces, &displacements)?
            }
            PhysicalReply::Diverged => {
                diverged_at = Some(k);
                break;
            }
        }
    }
    Ok(LoopOutcome {
        output: numerical.finish(),
        diverged_at,
        stats: SessionStats::default(),
        failure: None,
    })
}

fn loss(proto: &ProtocolConfig, seed: u64) -> Result<Option<LossInjector>> {
    if proto.loss_probability > 0.0 {
        Ok(Some(LossInjector::new(proto.loss_probability, seed)?))
    } else {
        Ok(None)
    }
}

fn session_error(last_good_step: Option<u32>, reason: impl Into<String>) -> Error {
    Error::Session {
        last_good_step,
        reason: reason.into(),
    }
}

/// Server half: runs the estimator against a remote physical client.
///
/// Returns `Err` only when no session could be established; failures after
/// the handshake are reported in [`LoopOutcome::failure`].
pub fn numerical_server<L: Link>(
    link: L,
    mut numerical: NumericalSubstructure,
    params: Handshake,
    proto: &ProtocolConfig,
) -> Result<LoopOutcome> {
    let mask = dof_mask(numerical.dofs());
    if params.dof_mask != mask {
        return Err(Error::Config("handshake DOF mask disagrees with the model".into()));
    }
    let mut ep = Endpoint::new(link, loss(proto, proto.loss_seed)?, SessionState::new(params.dt, mask));
    let n = numerical.dofs().len() as u8;

    // wait for the client's hello
    let deadline = Instant::now() + proto.connect_timeout;
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(session_error(None, "no client connected"));
        }
        match ep.recv(left)? {
            Some(f) if f.msg_type == MessageType::Handshake => {
                ep.accept();
                break;
            }
            Some(_) => ep.reject(),
            None => {}
        }
    }
    let hs_frame = Frame::handshake(0, params);
    ep.send(&hs_frame)?;

    let steps = record_count(params.dt, params.t_end);
    let mut diverged_at = None;
    let mut failure = None;
    'steps: for k in 0..steps {
        let seq = k as u32;
        let last_good = seq.checked_sub(1);
        let cmd = match numerical.command(k) {
            Ok(c) => c,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let bytes = encode_frame(&Frame::command(seq, k as f64 * params.dt, cmd))?;
        ep.send_bytes(MessageType::Command, &bytes)?;
        let mut resends = 0;
        loop {
            let Some(f) = ep.recv(proto.timeout)? else {
                if resends == proto.max_resends {
                    failure = Some(session_error(
                        last_good,
                        format!("no measurement for step {k} after {resends} resends"),
                    ));
                    break 'steps;
                }
                resends += 1;
                ep.state.stats.retries += 1;
                ep.send_bytes(MessageType::Command, &bytes)?;
                continue;
            };
            match f.msg_type {
                MessageType::Measurement if f.seq == seq => {
                    ep.accept();
                    let (Some(forces), Some(disp)) = (f.forces(), f.displacements()) else {
                        failure = Some(session_error(last_good, "measurement without both blocks"));
                        break 'steps;
                    };
                    if let Err(e) = numerical.on_measurement(k, forces, disp) {
                        failure = Some(e);
                        break 'steps;
                    }
                    break;
                }
                MessageType::Shutdown if f.seq == seq => {
                    ep.accept();
                    diverged_at = Some(k);
                    break 'steps;
                }
                MessageType::Handshake => {
                    // our reply was lost; the client is still saying hello
                    ep.reject();
                    ep.send(&hs_frame)?;
                }
                _ => ep.reject(),
            }
        }
        ep.state.advance();
    }

    close_session(&mut ep, n, params, proto)?;
    Ok(LoopOutcome {
        output: numerical.finish(),
        diverged_at,
        stats: ep.state.stats,
        failure,
    })
}

fn close_session<L: Link>(ep: &mut Endpoint<L>, n: u8, params: Handshake, proto: &ProtocolConfig) -> Result<()> {
    let seq = ep.state.expected_seq;
    let t = seq as f64 * params.dt;
    let frame = Frame::shutdown(seq, n, t);
    ep.send(&frame)?;
    let mut resends = 0;
    loop {
        match ep.recv(proto.timeout)? {
            Some(f) if f.msg_type == MessageType::Shutdown && f.seq == seq => {
                ep.accept();
                return Ok(());
            }
            Some(_) => ep.reject(),
            None if resends == proto.max_resends => {
                log::warn!("client did not acknowledge shutdown");
                return Ok(());
            }
            None => {
                resends += 1;
                ep.state.stats.retries += 1;
                ep.send(&frame)?;
            }
        }
    }
}

/// Client half: serves measurements from a physical substructure built once
/// the session parameters are known.
pub fn surrogate_physical<L, B>(link: L, hello: Handshake, proto: &ProtocolConfig, build: B) -> Result<SessionStats>
where
    L: Link,
    B: FnOnce(&Handshake) -> Result<PhysicalSubstructure>,
{
    let salt = proto.loss_seed ^ CLIENT_SEED_SALT;
    let mut ep = Endpoint::new(link, loss(proto, salt)?, SessionState::new(hello.dt, hello.dof_mask));
    let hello_frame = Frame::handshake(0, hello);

    let deadline = Instant::now() + proto.connect_timeout;
    ep.send(&hello_frame)?;
    let hs = loop {
        if Instant::now() >= deadline {
            return Err(session_error(None, "no handshake reply from server"));
        }
        match ep.recv(proto.timeout)? {
            Some(f) if f.msg_type == MessageType::Handshake => {
                ep.accept();
                match f.payload {
                    Payload::Handshake(hs) => break hs,
                    Payload::Data { .. } => unreachable!("decoder pairs type and payload"),
                }
            }
            Some(_) => ep.reject(),
            None => ep.send(&hello_frame)?,
        }
    };
    if hs.dof_mask != hello.dof_mask {
        return Err(Error::Config(format!(
            "server runs DOF mask {:#05b}, physical model has {:#05b}",
            hs.dof_mask, hello.dof_mask
        )));
    }
    ep.state.dt = hs.dt;
    let mut physical = build(&hs)?;
    let n = physical.n_dof() as u8;

    let mut cached: Option<(u32, MessageType, Vec<u8>)> = None;
    loop {
        let last_good = ep.state.expected_seq.checked_sub(1);
        let Some(f) = ep.recv(proto.connect_timeout)? else {
            return Err(session_error(last_good, "timed out waiting for the server"));
        };
        match f.msg_type {
            MessageType::Command if f.seq == ep.state.expected_seq && !ended(&cached) => {
                ep.accept();
                let Some(cmd) = f.displacements() else {
                    return Err(session_error(last_good, "command without displacements"));
                };
                let reply = match physical.on_command(f.seq, cmd)? {
                    PhysicalReply::Measurement { forces, displacements } => {
                        Frame::measurement(f.seq, f.sim_time, forces, displacements)
                    }
                    PhysicalReply::Diverged => Frame::shutdown(f.seq, n, f.sim_time),
                };
                let bytes = encode_frame(&reply)?;
                ep.send_bytes(reply.msg_type, &bytes)?;
                cached = Some((f.seq, reply.msg_type, bytes));
                ep.state.advance();
            }
            MessageType::Command => {
                ep.reject();
                if let Some((seq, ty, bytes)) = &cached {
                    if *seq == f.seq {
                        ep.send_bytes(*ty, bytes)?;
                    }
                }
            }
            MessageType::Shutdown => {
                ep.accept();
                let ack = Frame::shutdown(f.seq, n, f.sim_time);
                ep.send(&ack)?;
                linger(&mut ep, &ack, proto)?;
                return Ok(ep.state.stats);
            }
            _ => ep.reject(),
        }
    }
}

fn ended(cached: &Option<(u32, MessageType, Vec<u8>)>) -> bool {
    matches!(cached, Some((_, MessageType::Shutdown, _)))
}

/// Stays around long enough to re-acknowledge a resent shutdown.
fn linger<L: Link>(ep: &mut Endpoint<L>, ack: &Frame, proto: &ProtocolConfig) -> Result<()> {
    let deadline = Instant::now() + proto.timeout * (proto.max_resends + 1);
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Ok(());
        }
        match ep.recv(left)? {
            Some(f) => {
                ep.reject();
                if f.msg_type == MessageType::Shutdown {
                    ep.send(ack)?;
                }
            }
            None => return Ok(()),
        }
    }
}

/// Runs the server on this thread and the physical client on a second
/// thread, connected over loopback UDP.
pub fn run_udp_loopback<B>(
    numerical: NumericalSubstructure,
    params: Handshake,
    proto: &ProtocolConfig,
    build: B,
) -> Result<LoopOutcome>
where
    B: FnOnce(&Handshake) -> Result<PhysicalSubstructure> + Send + 'static,
{
    let server_link = UdpLink::bind("127.0.0.1:0")?;
    let addr = server_link.local_addr()?;
    run_split(
        server_link,
        move || UdpLink::connect(addr),
        numerical,
        params,
        proto,
        build,
    )
}

/// Same as [`run_udp_loopback`] over an in-memory link.
pub fn run_channel_pair<B>(
    numerical: NumericalSubstructure,
    params: Handshake,
    proto: &ProtocolConfig,
    build: B,
) -> Result<LoopOutcome>
where
    B: FnOnce(&Handshake) -> Result<PhysicalSubstructure> + Send + 'static,
{
    let (server_link, client_link) = channel_pair();
    run_split(server_link, move || Ok(client_link), numerical, params, proto, build)
}

fn run_split<LS, LC, C, B>(
    server_link: LS,
    client_link: C,
    numerical: NumericalSubstructure,
    params: Handshake,
    proto: &ProtocolConfig,
    build: B,
) -> Result<LoopOutcome>
where
    LS: Link,
    LC: Link,
    C: FnOnce() -> Result<LC> + Send + 'static,
    B: FnOnce(&Handshake) -> Result<PhysicalSubstructure> + Send + 'static,
{
    let client_proto = *proto;
    let hello = Handshake { estimator: 0, ..params };
    let client = thread::spawn(move || -> Result<SessionStats> {
        surrogate_physical(client_link()?, hello, &client_proto, build)
    });
    let server = numerical_server(server_link, numerical, params, proto);
    let client = client
        .join()
        .map_err(|_| session_error(None, "physical client thread panicked"))?;
    let mut outcome = server?;
    match client {
        Ok(client_stats) => outcome.stats = outcome.stats.merged(&client_stats),
        Err(e) => {
            outcome.failure.get_or_insert(e);
        }
    }
    Ok(outcome)
}
