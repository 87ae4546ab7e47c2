//! Negotiation over TCP. Each customer agent serves one connection from the
//! LSE and answers PRICE frames with REPLY frames until TERMINATE.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread::JoinHandle;

use drcap_core::distributed::wire::{Frame, FrameKind, BODY_LEN};
use drcap_core::distributed::{CustomerAgent, CustomerReply, PriceVector, Transport};

use crate::error::Result;

fn read_frame(stream: &mut TcpStream) -> std::io::Result<Frame> {
    let mut len = [0u8; 4];
    stream.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len != BODY_LEN {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("frame length {len}"),
        ));
    }
    let mut body = [0u8; BODY_LEN];
    stream.read_exact(&mut body)?;
    Frame::decode_body(&body).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

/// Serves one LSE connection on `listener`. Returns the number of price
/// frames answered.
pub fn serve_agent(listener: TcpListener, mut agent: CustomerAgent) -> std::io::Result<usize> {
    let (mut stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    let id = agent.id.index() as u32;
    let mut answered = 0;
    loop {
        let frame = read_frame(&mut stream)?;
        if frame.customer != id {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("frame for customer {} reached agent {id}", frame.customer),
            ));
        }
        match frame.kind {
            FrameKind::Price => {
                let reply = agent
                    .respond(frame.values)
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
                stream.write_all(&Frame::reply(id, reply).encode())?;
                answered += 1;
            }
            FrameKind::Terminate => return Ok(answered),
            FrameKind::Reply => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    "agent received a REPLY frame",
                ));
            }
        }
    }
}

/// Binds an ephemeral loopback port and serves `agent` on a new thread.
pub fn spawn_agent(agent: CustomerAgent) -> Result<(SocketAddr, JoinHandle<std::io::Result<usize>>)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    Ok((addr, std::thread::spawn(move || serve_agent(listener, agent))))
}

/// LSE side: one stream per customer, in customer order.
pub struct TcpTransport {
    streams: Vec<TcpStream>,
    agents: Vec<JoinHandle<std::io::Result<usize>>>,
}

impl TcpTransport {
    /// Connects to agents already listening at `addrs` (customer `i` at
    /// `addrs[i]`).
    pub fn connect(addrs: &[SocketAddr]) -> Result<Self> {
        let streams = addrs
            .iter()
            .map(|a| {
                let s = TcpStream::connect(a)?;
                s.set_nodelay(true)?;
                Ok(s)
            })
            .collect::<std::io::Result<Vec<_>>>()?;
        Ok(Self {
            streams,
            agents: Vec::new(),
        })
    }

    /// Starts one local agent thread per customer and connects to them.
    pub fn spawn(agents: Vec<CustomerAgent>) -> Result<Self> {
        let mut addrs = Vec::with_capacity(agents.len());
        let mut handles = Vec::with_capacity(agents.len());
        for a in agents {
            let (addr, h) = spawn_agent(a)?;
            addrs.push(addr);
            handles.push(h);
        }
        let mut t = Self::connect(&addrs)?;
        t.agents = handles;
        Ok(t)
    }

    fn round_trip(&mut self, prices: &PriceVector) -> std::io::Result<CustomerReply> {
        for (i, (s, p)) in self.streams.iter_mut().zip(&prices.0).enumerate() {
            s.write_all(&Frame::price(i as u32, *p).encode())?;
        }
        let mut replies = Vec::with_capacity(self.streams.len());
        for (i, s) in self.streams.iter_mut().enumerate() {
            let f = read_frame(s)?;
            if f.kind != FrameKind::Reply || f.customer != i as u32 {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("unexpected {:?} frame from customer {}", f.kind, f.customer),
                ));
            }
            replies.push(f.values);
        }
        Ok(CustomerReply(replies))
    }
}

fn transport_error(round: usize, e: impl ToString) -> drcap_core::Error {
    drcap_core::Error::Transport {
        round,
        reason: e.to_string(),
    }
}

impl Transport for TcpTransport {
    fn exchange(&mut self, round: usize, prices: &PriceVector) -> drcap_core::Result<CustomerReply> {
        if prices.customers() != self.streams.len() {
            return Err(transport_error(
                round,
                format!("{} prices for {} agents", prices.customers(), self.streams.len()),
            ));
        }
        self.round_trip(prices).map_err(|e| transport_error(round, e))
    }

    fn terminate(&mut self) -> drcap_core::Result<()> {
        for (i, s) in self.streams.iter_mut().enumerate() {
            s.write_all(&Frame::terminate(i as u32).encode())
                .map_err(|e| transport_error(0, e))?;
        }
        for h in self.agents.drain(..) {
            match h.join() {
                Ok(Ok(_)) => {}
                Ok(Err(e)) => return Err(transport_error(0, e)),
                Err(_) => return Err(transport_error(0, "agent thread panicked")),
            }
        }
        Ok(())
    }
}
