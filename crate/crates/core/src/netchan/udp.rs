//! Real-time loopback transport. The sender applies the same
//! [`ChannelConfig`] semantics as the in-process channel, in user space, on a
//! worker thread that releases datagrams when they fall due.

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::channel::{ChannelConfig, ChannelError, DelayChannel, SendOutcome};
use super::wire::{decode_packet, Packet, WireError};

/// Largest datagram the loopback path accepts.
pub const MAX_DATAGRAM: usize = 65_507;

/// Monotonic wall clock reported as nanoseconds past a fixed epoch.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    origin: Instant,
    epoch_ns: u64,
}

impl WallClock {
    pub fn new(epoch_ns: u64) -> Self {
        WallClock {
            origin: Instant::now(),
            epoch_ns,
        }
    }

    pub fn now(&self) -> u64 {
        self.epoch_ns + self.origin.elapsed().as_nanos() as u64
    }
}

struct State {
    channel: DelayChannel<Vec<u8>>,
    closed: bool,
}

struct Shared {
    state: Mutex<State>,
    wake: Condvar,
}

/// Sending half: enqueue now, transmit after the configured delay.
pub struct DelayedSender {
    shared: Arc<Shared>,
    clock: WallClock,
    worker: Option<JoinHandle<io::Result<()>>>,
}

impl DelayedSender {
    pub fn spawn(socket: UdpSocket, dest: SocketAddr, config: ChannelConfig, clock: WallClock) -> Self {
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                channel: DelayChannel::new(config),
                closed: false,
            }),
            wake: Condvar::new(),
        });
        let worker_shared = Arc::clone(&shared);
        let worker = std::thread::spawn(move || run_worker(&worker_shared, &socket, dest, clock));
        DelayedSender {
            shared,
            clock,
            worker: Some(worker),
        }
    }

    pub fn send(&self, datagram: Vec<u8>) -> Result<SendOutcome, ChannelError> {
        let mut st = self.shared.state.lock().expect("sender state poisoned");
        let out = st.channel.send(datagram, self.clock.now())?;
        self.shared.wake.notify_one();
        Ok(out)
    }

    /// Stop accepting datagrams, flush what is in flight, and join the worker.
    pub fn close(mut self) -> io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> io::Result<()> {
        if let Some(handle) = self.worker.take() {
            self.shared.state.lock().expect("sender state poisoned").closed = true;
            self.shared.wake.notify_one();
            return handle.join().map_err(|_| io::Error::other("sender worker panicked"))?;
        }
        Ok(())
    }
}

impl Drop for DelayedSender {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

fn run_worker(shared: &Shared, socket: &UdpSocket, dest: SocketAddr, clock: WallClock) -> io::Result<()> {
    let mut guard = shared.state.lock().expect("sender state poisoned");
    loop {
        let now = clock.now();
        let due = guard.channel.poll(now);
        if !due.is_empty() {
            drop(guard);
            for d in due {
                socket.send_to(&d.payload, dest)?;
            }
            guard = shared.state.lock().expect("sender state poisoned");
            continue;
        }
        guard = match guard.channel.next_due() {
            Some(t) => {
                let wait = Duration::from_nanos(t.saturating_sub(now));
                shared.wake.wait_timeout(guard, wait).expect("sender state poisoned").0
            }
            None if guard.closed => return Ok(()),
            None => shared.wake.wait(guard).expect("sender state poisoned"),
        };
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Receiving half: decode datagrams and note the arrival time.
pub struct PacketReceiver {
    socket: UdpSocket,
    clock: WallClock,
    buf: Vec<u8>,
}

impl PacketReceiver {
    pub fn new(socket: UdpSocket, clock: WallClock, timeout: Option<Duration>) -> io::Result<Self> {
        socket.set_read_timeout(timeout)?;
        Ok(PacketReceiver {
            socket,
            clock,
            buf: vec![0; MAX_DATAGRAM],
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// Blocks for the next datagram; returns it with the true receive time.
    pub fn recv(&mut self) -> Result<(Packet, u64), RecvError> {
        let (n, _) = self.socket.recv_from(&mut self.buf)?;
        let at = self.clock.now();
        Ok((decode_packet(&self.buf[..n])?, at))
    }
}
