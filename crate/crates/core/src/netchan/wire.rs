//! Datagram framing for the UDP transport. All multi-byte fields are
//! big-endian; floats are IEEE-754 binary64.
//!
//! ```text
//! offset size field
//!      0    4 magic        0x4C415654 ("LAVT")
//!      4    1 version      1
//!      5    1 channel      0 video, 1 control
//!      6    2 flags        0
//!      8    4 seq
//!     12    8 send_ts_ns
//!     20    4 payload_len
//!     24    n payload
//!
//! video payload:   width u16, height u16, format u8 (0 = gray8), pixels
//! control payload: steering f64, throttle f64, brake f64, source_frame_ts u64
//! ```

use thiserror::Error;

use crate::camera::Frame;
use crate::control::ControlCommand;

pub const MAGIC: u32 = 0x4C41_5654;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;
pub const FORMAT_GRAY8: u8 = 0;
pub const CONTROL_PAYLOAD_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated at `{field}`: need {needed} bytes, {available} available")]
    Truncated {
        field: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("bad magic 0x{0:08X}")]
    BadMagic(u32),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown channel {0}")]
    BadChannel(u8),
    #[error("nonzero flags 0x{0:04X}")]
    BadFlags(u16),
    #[error("unsupported pixel format {0}")]
    BadFormat(u8),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("payload of {0} bytes does not fit the length field")]
    PayloadTooLarge(usize),
    #[error("frame dimension {0} does not fit in u16")]
    DimensionTooLarge(u32),
    #[error("expected a {expected:?} packet, got {got:?}")]
    WrongChannel { expected: WireChannel, got: WireChannel },
    #[error("pixel data holds {got} bytes, expected {expected}")]
    PixelCount { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WireChannel {
    Video = 0,
    Control = 1,
}

/// A decoded datagram with its payload still opaque.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub channel: WireChannel,
    pub seq: u32,
    pub send_ts_ns: u64,
    pub payload: Vec<u8>,
}

pub fn encode_packet(packet: &Packet) -> Result<Vec<u8>, WireError> {
    let len = u32::try_from(packet.payload.len()).map_err(|_| WireError::PayloadTooLarge(packet.payload.len()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + packet.payload.len());
    out.extend_from_slice(&MAGIC.to_be_bytes());
    out.push(VERSION);
    out.push(packet.channel as u8);
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&packet.seq.to_be_bytes());
    out.extend_from_slice(&packet.send_ts_ns.to_be_bytes());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&packet.payload);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, field: &'static str, n: usize) -> Result<&'a [u8], WireError> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(WireError::Truncated {
                field,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], WireError> {
        Ok(self.take(field, N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, WireError> {
        Ok(self.array::<1>(field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array(field)?))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array(field)?))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array(field)?))
    }

    fn f64(&mut self, field: &'static str) -> Result<f64, WireError> {
        Ok(f64::from_be_bytes(self.array(field)?))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode_packet(buf: &[u8]) -> Result<Packet, WireError> {
    let mut r = Reader::new(buf);
    let magic = r.u32("magic")?;
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(WireError::BadVersion(version));
    }
    let channel = match r.u8("channel")? {
        0 => WireChannel::Video,
        1 => WireChannel::Control,
        other => return Err(WireError::BadChannel(other)),
    };
    let flags = r.u16("flags")?;
    if flags != 0 {
        return Err(WireError::BadFlags(flags));
    }
    let seq = r.u32("seq")?;
    let send_ts_ns = r.u64("send_ts_ns")?;
    let len = r.u32("payload_len")? as usize;
    let payload = r.take("payload", len)?.to_vec();
    if r.remaining() != 0 {
        return Err(WireError::TrailingBytes(r.remaining()));
    }
    Ok(Packet {
        channel,
        seq,
        send_ts_ns,
        payload,
    })
}

/// Video datagram for `frame`; the header timestamp is the frame's embedded
/// capture stamp.
pub fn encode_video(frame: &Frame) -> Result<Vec<u8>, WireError> {
    let w = u16::try_from(frame.width).map_err(|_| WireError::DimensionTooLarge(frame.width))?;
    let h = u16::try_from(frame.height).map_err(|_| WireError::DimensionTooLarge(frame.height))?;
    let mut payload = Vec::with_capacity(5 + frame.pixels.len());
    payload.extend_from_slice(&w.to_be_bytes());
    payload.extend_from_slice(&h.to_be_bytes());
    payload.push(FORMAT_GRAY8);
    payload.extend_from_slice(&frame.pixels);
    encode_packet(&Packet {
        channel: WireChannel::Video,
        seq: frame.seq,
        send_ts_ns: frame.capture_ts_server_ns,
        payload,
    })
}

pub fn decode_video(packet: &Packet) -> Result<Frame, WireError> {
    if packet.channel != WireChannel::Video {
        return Err(WireError::WrongChannel {
            expected: WireChannel::Video,
            got: packet.channel,
        });
    }
    let mut r = Reader::new(&packet.payload);
    let width = r.u16("width")? as u32;
    let height = r.u16("height")? as u32;
    let format = r.u8("format")?;
    if format != FORMAT_GRAY8 {
        return Err(WireError::BadFormat(format));
    }
    let expected = width as usize * height as usize;
    if r.remaining() != expected {
        return Err(WireError::PixelCount {
            got: r.remaining(),
            expected,
        });
    }
    let pixels = r.take("pixels", expected)?.to_vec();
    Ok(Frame {
        width,
        height,
        pixels,
        capture_ts_server_ns: packet.send_ts_ns,
        seq: packet.seq,
    })
}

pub fn encode_control(cmd: &ControlCommand) -> Vec<u8> {
    let mut payload = Vec::with_capacity(CONTROL_PAYLOAD_LEN);
    payload.extend_from_slice(&cmd.steering.to_be_bytes());
    payload.extend_from_slice(&cmd.throttle.to_be_bytes());
    payload.extend_from_slice(&cmd.brake.to_be_bytes());
    payload.extend_from_slice(&cmd.source_frame_ts_ns.to_be_bytes());
    encode_packet(&Packet {
        channel: WireChannel::Control,
        seq: cmd.seq,
        send_ts_ns: cmd.tx_ts_client_ns,
        payload,
    })
    .expect("control payload is fixed size")
}

pub fn decode_control(packet: &Packet) -> Result<ControlCommand, WireError> {
    if packet.channel != WireChannel::Control {
        return Err(WireError::WrongChannel {
            expected: WireChannel::Control,
            got: packet.channel,
        });
    }
    let mut r = Reader::new(&packet.payload);
    let cmd = ControlCommand {
        steering: r.f64("steering")?,
        throttle: r.f64("throttle")?,
        brake: r.f64("brake")?,
        source_frame_ts_ns: r.u64("source_frame_ts")?,
        tx_ts_client_ns: packet.send_ts_ns,
        seq: packet.seq,
    };
    if r.remaining() != 0 {
        return Err(WireError::TrailingBytes(r.remaining()));
    }
    Ok(cmd)
}
