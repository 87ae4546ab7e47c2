//! Fixed-size binary frames exchanged between the LSE and customer agents.
//!
//! Layout: 4-byte big-endian body length, then the body: 1-byte kind,
//! 4-byte big-endian customer id and three big-endian IEEE-754 doubles.

use crate::error::{invalid, Result};

pub const BODY_LEN: usize = 1 + 4 + 3 * 8;
pub const FRAME_LEN: usize = 4 + BODY_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    Price = 0,
    Reply = 1,
    Terminate = 2,
}

impl FrameKind {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Self::Price),
            1 => Ok(Self::Reply),
            2 => Ok(Self::Terminate),
            other => Err(invalid(alloc::format!("unknown frame kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub customer: u32,
    pub values: [f64; 3],
}

impl Frame {
    pub fn price(customer: u32, values: [f64; 3]) -> Self {
        Self {
            kind: FrameKind::Price,
            customer,
            values,
        }
    }

    pub fn reply(customer: u32, values: [f64; 3]) -> Self {
        Self {
            kind: FrameKind::Reply,
            customer,
            values,
        }
    }

    pub fn terminate(customer: u32) -> Self {
        Self {
            kind: FrameKind::Terminate,
            customer,
            values: [0.0; 3],
        }
    }

    pub fn encode(&self) -> [u8; FRAME_LEN] {
        let mut out = [0u8; FRAME_LEN];
        out[..4].copy_from_slice(&(BODY_LEN as u32).to_be_bytes());
        out[4] = self.kind as u8;
        out[5..9].copy_from_slice(&self.customer.to_be_bytes());
        for (k, v) in self.values.iter().enumerate() {
            out[9 + 8 * k..17 + 8 * k].copy_from_slice(&v.to_be_bytes());
        }
        out
    }

    /// Decodes a complete frame including its length prefix.
    pub fn decode(buf: &[u8]) -> Result<Self> {
        if buf.len() < 4 {
            return Err(invalid("truncated frame header"));
        }
        let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
        if len != BODY_LEN {
            return Err(invalid(alloc::format!("unexpected frame length {len}")));
        }
        if buf.len() != FRAME_LEN {
            return Err(invalid("truncated frame body"));
        }
        Self::decode_body(&buf[4..])
    }

    /// Decodes the body that follows the length prefix.
    pub fn decode_body(body: &[u8]) -> Result<Self> {
        if body.len() != BODY_LEN {
            return Err(invalid("truncated frame body"));
        }
        let kind = FrameKind::from_byte(body[0])?;
        let customer = u32::from_be_bytes([body[1], body[2], body[3], body[4]]);
        let mut values = [0.0; 3];
        for (k, v) in values.iter_mut().enumerate() {
            let mut b = [0u8; 8];
            b.copy_from_slice(&body[5 + 8 * k..13 + 8 * k]);
            *v = f64::from_be_bytes(b);
        }
        Ok(Self { kind, customer, values })
    }
}
