use std::io::{self, Read, Write};

use thiserror::Error;

/// Bytes covered by the length prefix besides the payload: opcode + request id.
pub const FIXED_LEN: usize = 9;
/// Largest accepted value of the length prefix: 16 MiB of payload plus header allowance.
pub const MAX_FRAME_LEN: u32 = 16 * 1024 * 1024 + 64;

/// `length u32 | opcode u8 | request_id u64 | payload`, little-endian, where
/// `length` counts everything after itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: u8,
    pub request_id: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame length {0} exceeds the {MAX_FRAME_LEN} byte limit")]
    TooLarge(u32),
    #[error("frame length {0} is shorter than the fixed header")]
    TooShort(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Complete { frame: Frame, consumed: usize },
    /// More input is required; `needed` is the total byte count of the frame if known.
    Incomplete { needed: Option<usize> },
}

impl Frame {
    pub fn new(opcode: u8, request_id: u64, payload: Vec<u8>) -> Self {
        Frame {
            opcode,
            request_id,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        4 + FIXED_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&((FIXED_LEN + self.payload.len()) as u32).to_le_bytes());
        out.push(self.opcode);
        out.extend_from_slice(&self.request_id.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    fn check_len(len: u32) -> Result<(), FrameError> {
        if len > MAX_FRAME_LEN {
            return Err(FrameError::TooLarge(len));
        }
        if (len as usize) < FIXED_LEN {
            return Err(FrameError::TooShort(len));
        }
        Ok(())
    }

    pub fn decode(buf: &[u8]) -> Result<Decoded, FrameError> {
        if buf.len() < 4 {
            return Ok(Decoded::Incomplete { needed: None });
        }
        let len = u32::from_le_bytes(buf[..4].try_into().unwrap());
        Self::check_len(len)?;
        let total = 4 + len as usize;
        if buf.len() < total {
            return Ok(Decoded::Incomplete { needed: Some(total) });
        }
        Ok(Decoded::Complete {
            frame: Frame {
                opcode: buf[4],
                request_id: u64::from_le_bytes(buf[5..13].try_into().unwrap()),
                payload: buf[13..total].to_vec(),
            },
            consumed: total,
        })
    }
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads one frame; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, ReadError> {
    let mut len_buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len_buf[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(len_buf);
    Frame::check_len(len)?;
    let mut rest = vec![0u8; len as usize];
    r.read_exact(&mut rest)?;
    Ok(Some(Frame {
        opcode: rest[0],
        request_id: u64::from_le_bytes(rest[1..9].try_into().unwrap()),
        payload: rest.split_off(FIXED_LEN),
    }))
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_payload_round_trip() {
        let f = Frame::new(1, 42, vec![]);
        let bytes = f.encode();
        assert_eq!(bytes.len(), 13);
        assert_eq!(
            Frame::decode(&bytes).unwrap(),
            Decoded::Complete {
                frame: f,
                consumed: 13
            }
        );
    }

    #[test]
    fn short_input_is_incomplete() {
        assert_eq!(
            Frame::decode(&[1, 2, 3]).unwrap(),
            Decoded::Incomplete { needed: None }
        );
        let bytes = Frame::new(7, 1, vec![9; 10]).encode();
        assert_eq!(
            Frame::decode(&bytes[..15]).unwrap(),
            Decoded::Incomplete { needed: Some(23) }
        );
    }

    #[test]
    fn bad_lengths_are_errors() {
        let mut bytes = (MAX_FRAME_LEN + 1).to_le_bytes().to_vec();
        bytes.extend_from_slice(&[0; 9]);
        assert_eq!(Frame::decode(&bytes), Err(FrameError::TooLarge(MAX_FRAME_LEN + 1)));
        assert_eq!(Frame::decode(&3u32.to_le_bytes()), Err(FrameError::TooShort(3)));
        assert!(matches!(
            read_frame(&mut &bytes[..]),
            Err(ReadError::Frame(FrameError::TooLarge(_)))
        ));
    }

    #[test]
    fn stream_reader() {
        let a = Frame::new(1, 1, b"abc".to_vec());
        let b = Frame::new(2, 2, vec![]);
        let mut buf = a.encode();
        buf.extend(b.encode());
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap(), Some(a));
        assert_eq!(read_frame(&mut r).unwrap(), Some(b));
        assert_eq!(read_frame(&mut r).unwrap(), None);
        let mut torn = &buf[..6];
        assert!(read_frame(&mut torn).is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            opcode in any::<u8>(),
            request_id in any::<u64>(),
            payload in proptest::collection::vec(any::<u8>(), 0..512),
            cut in any::<prop::sample::Index>(),
        ) {
            let f = Frame::new(opcode, request_id, payload);
            let bytes = f.encode();
            let n = bytes.len();
            prop_assert_eq!(Frame::decode(&bytes).unwrap(), Decoded::Complete { frame: f, consumed: n });
            let k = cut.index(n);
            let partial = Frame::decode(&bytes[..k]).unwrap();
            let incomplete = matches!(partial, Decoded::Incomplete { .. });
            prop_assert!(incomplete);
        }
    }
}
