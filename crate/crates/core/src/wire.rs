//! Length-prefixed binary protocol spoken with an external codec server.
//!
//! Every message is `"SCMC" | type (u8) | length (u32 LE) | body`. Bodies
//! are concatenations of tensors, each `dtype (u8) | rank (u8) | dims (rank ×
//! u32 LE) | data` with row-major little-endian data. See `docs/wire-format.md`.

use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use crate::codec::{Codec, Geometry, LatentBlock};
use crate::imaging::{Image, MaskedImage};
use crate::sparse::RestoreIndices;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SCMC";
/// Upper bound on accepted body size.
pub const MAX_BODY: u32 = 64 << 20;
/// Environment variable naming the default remote codec endpoint.
pub const ENDPOINT_ENV: &str = "SEMCOM_CODEC_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    EncodeReq = 1,
    EncodeRsp = 2,
    DecodeReq = 3,
    DecodeRsp = 4,
    Health = 5,
    Error = 6,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            1 => MessageType::EncodeReq,
            2 => MessageType::EncodeRsp,
            3 => MessageType::DecodeReq,
            4 => MessageType::DecodeRsp,
            5 => MessageType::Health,
            6 => MessageType::Error,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageType,
    pub body: Vec<u8>,
}

impl Message {
    pub fn new(kind: MessageType, body: Vec<u8>) -> Self {
        Self { kind, body }
    }

    pub fn error(reason: &str) -> Self {
        Self::new(MessageType::Error, reason.as_bytes().to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + self.body.len());
        out.extend_from_slice(&MAGIC);
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.body.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    /// Parses one message from the front of `bytes`, returning it and the
    /// number of bytes consumed. `Ok(None)` means more bytes are needed.
    pub fn parse(bytes: &[u8]) -> Result<Option<(Message, usize)>> {
        if bytes.len() < 9 {
            return Ok(None);
        }
        if bytes[..4] != MAGIC {
            return Err(Error::Remote("bad magic".into()));
        }
        let kind = MessageType::from_byte(bytes[4])
            .ok_or_else(|| Error::Remote(format!("unknown message type {}", bytes[4])))?;
        let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
        if len > MAX_BODY {
            return Err(Error::Remote(format!("body of {len} bytes too large")));
        }
        let end = 9 + len as usize;
        if bytes.len() < end {
            return Ok(None);
        }
        Ok(Some((Message::new(kind, bytes[9..end].to_vec()), end)))
    }

    /// Blocking read of exactly one message.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Message> {
        let mut head = [0u8; 9];
        r.read_exact(&mut head).map_err(|e| Error::Remote(e.to_string()))?;
        if head[..4] != MAGIC {
            return Err(Error::Remote("bad magic".into()));
        }
        let kind = MessageType::from_byte(head[4])
            .ok_or_else(|| Error::Remote(format!("unknown message type {}", head[4])))?;
        let len = u32::from_le_bytes(head[5..9].try_into().unwrap());
        if len > MAX_BODY {
            return Err(Error::Remote(format!("body of {len} bytes too large")));
        }
        let mut body = vec![0u8; len as usize];
        r.read_exact(&mut body).map_err(|e| Error::Remote(e.to_string()))?;
        Ok(Message::new(kind, body))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.to_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::Remote(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    U32(Vec<u32>),
}

impl TensorData {
    fn dtype(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::U8(_) => 1,
            TensorData::U32(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self> {
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
        if dims.len() > u8::MAX as usize || count != Some(data.len()) {
            return Err(Error::Remote(format!(
                "tensor dims {dims:?} do not match {} elements",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.data.dtype());
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    /// Decodes one tensor from the front of `bytes`; returns it and the bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Tensor, usize)> {
        let short = || Error::Remote("tensor truncated".into());
        let (&dtype, rest) = bytes.split_first().ok_or_else(short)?;
        let (&rank, rest) = rest.split_first().ok_or_else(short)?;
        let dims_len = rank as usize * 4;
        let dims: Vec<u32> = rest
            .get(..dims_len)
            .ok_or_else(short)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| Error::Remote("tensor too large".into()))?;
        let elem = match dtype {
            0 | 2 => 4,
            1 => 1,
            other => return Err(Error::Remote(format!("unknown dtype {other}"))),
        };
        let nbytes = count
            .checked_mul(elem)
            .ok_or_else(|| Error::Remote("tensor too large".into()))?;
        let raw = rest[dims_len..].get(..nbytes).ok_or_else(short)?;
        let data = match dtype {
            0 => TensorData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            1 => TensorData::U8(raw.to_vec()),
            _ => TensorData::U32(
                raw.chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok((Tensor { dims, data }, 2 + dims_len + nbytes))
    }
}

/// Concatenates tensors into a message body.
pub fn encode_tensors(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    for t in tensors {
        t.encode_into(&mut out);
    }
    out
}

/// Splits a body into exactly `count` tensors.
pub fn decode_tensors(body: &[u8], count: usize) -> Result<Vec<Tensor>> {
    let mut at = 0;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (t, used) = Tensor::decode(&body[at..])?;
        at += used;
        out.push(t);
    }
    if at != body.len() {
        return Err(Error::Remote(format!("{} trailing bytes in body", body.len() - at)));
    }
    Ok(out)
}

/// Static capability report returned for a HEALTH request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Health {
    pub patch_size: u32,
    pub n: u32,
    pub dim: u32,
    pub model_id: String,
}

impl Health {
    pub fn to_body(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.model_id.len());
        out.extend_from_slice(&self.patch_size.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
        out.extend_from_slice(self.model_id.as_bytes());
        out
    }

    pub fn from_body(body: &[u8]) -> Result<Self> {
        if body.len() < 12 {
            return Err(Error::Remote("health body truncated".into()));
        }
        let word = |i: usize| u32::from_le_bytes(body[i * 4..i * 4 + 4].try_into().unwrap());
        Ok(Self {
            patch_size: word(0),
            n: word(1),
            dim: word(2),
            model_id: String::from_utf8_lossy(&body[12..]).into_owned(),
        })
    }
}

pub fn image_tensor(img: &Image) -> Tensor {
    Tensor {
        dims: vec![img.channels() as u32, img.height() as u32, img.width() as u32],
        data: TensorData::U8(img.data().to_vec()),
    }
}

pub fn tensor_image(t: &Tensor) -> Result<Image> {
    match (&t.data, t.dims.as_slice()) {
        (TensorData::U8(v), &[c, h, w]) => Image::from_planar(c as usize, h as usize, w as usize, v.clone()),
        _ => Err(Error::Remote("expected a u8 C×H×W image tensor".into())),
    }
}

pub fn latent_tensor(lat: &LatentBlock) -> Tensor {
    Tensor {
        dims: vec![lat.rows() as u32, lat.dim() as u32],
        data: TensorData::F32(lat.values().iter().map(|&v| v as f32).collect()),
    }
}

pub fn tensor_latent(t: &Tensor) -> Result<LatentBlock> {
    match (&t.data, t.dims.as_slice()) {
        (TensorData::F32(v), &[_, d]) => LatentBlock::new(d as usize, v.iter().map(|&x| f64::from(x)).collect()),
        _ => Err(Error::Remote("expected an f32 rows×D latent tensor".into())),
    }
}

pub fn restore_tensor(r: &RestoreIndices) -> Tensor {
    Tensor {
        dims: vec![r.n() as u32],
        data: TensorData::U32(r.ids_restore().iter().map(|&i| i as u32).collect()),
    }
}

pub fn tensor_restore(t: &Tensor, len_keep: usize) -> Result<RestoreIndices> {
    match &t.data {
        TensorData::U32(v) if t.dims.len() == 1 => {
            RestoreIndices::from_restore(v.iter().map(|&i| i as usize).collect(), len_keep)
        }
        _ => Err(Error::Remote("expected a u32 restore-index vector".into())),
    }
}

pub fn mask_tensor(mimg: &MaskedImage) -> Tensor {
    Tensor {
        dims: vec![mimg.mask().len() as u32],
        data: TensorData::U8(mimg.mask().iter().map(u8::from).collect()),
    }
}

/// Byte stream usable as a transport.
pub trait Duplex: Read + Write + Send {}
impl<T: Read + Write + Send> Duplex for T {}

/// [`Codec`] backed by a remote server. One request in flight at a time.
pub struct RemoteCodec {
    conn: Mutex<Box<dyn Duplex>>,
    health: Health,
}

impl std::fmt::Debug for RemoteCodec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteCodec").field("health", &self.health).finish()
    }
}

impl RemoteCodec {
    /// Connects over TCP and performs the HEALTH handshake; fails fast when unreachable.
    pub fn connect(endpoint: &str) -> Result<Self> {
        let addr = endpoint
            .to_socket_addrs()
            .map_err(|e| Error::Remote(format!("{endpoint}: {e}")))?
            .next()
            .ok_or_else(|| Error::Remote(format!("{endpoint}: no address")))?;
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(5))
            .map_err(|e| Error::Remote(format!("{endpoint} unreachable: {e}")))?;
        stream.set_nodelay(true).ok();
        Self::over(Box::new(stream))
    }

    /// Uses an already-open transport (e.g. a child process's stdio).
    pub fn over(transport: Box<dyn Duplex>) -> Result<Self> {
        let conn = Mutex::new(transport);
        let rsp = Self::exchange(&conn, &Message::new(MessageType::Health, Vec::new()))?;
        let health = match rsp.kind {
            MessageType::Health => Health::from_body(&rsp.body)?,
            _ => return Err(unexpected(&rsp)),
        };
        Ok(Self { conn, health })
    }

    pub fn health(&self) -> &Health {
        &self.health
    }

    /// Checks the server's geometry against the local configuration.
    pub fn validate(&self, patch_size: usize, n: usize) -> Result<()> {
        if self.health.patch_size as usize != patch_size || self.health.n as usize != n {
            return Err(Error::Remote(format!(
                "server serves P={} N={}, configuration needs P={patch_size} N={n}",
                self.health.patch_size, self.health.n
            )));
        }
        Ok(())
    }

    fn exchange(conn: &Mutex<Box<dyn Duplex>>, req: &Message) -> Result<Message> {
        let mut guard = conn.lock().map_err(|_| Error::Remote("connection poisoned".into()))?;
        req.write_to(&mut *guard)?;
        Message::read_from(&mut *guard)
    }

    fn call(&self, req: &Message, want: MessageType) -> Result<Message> {
        let rsp = Self::exchange(&self.conn, req)?;
        if rsp.kind == want {
            Ok(rsp)
        } else {
            Err(unexpected(&rsp))
        }
    }
}

fn unexpected(rsp: &Message) -> Error {
    match rsp.kind {
        MessageType::Error => Error::Remote(String::from_utf8_lossy(&rsp.body).into_owned()),
        other => Error::Remote(format!("unexpected {other:?} response")),
    }
}

impl Codec for RemoteCodec {
    fn encode(&self, mimg: &MaskedImage) -> Result<(LatentBlock, RestoreIndices)> {
        if mimg.mask().visible_count() == 0 {
            return Err(Error::NoVisiblePatches);
        }
        let body = encode_tensors(&[image_tensor(mimg.pixels()), mask_tensor(mimg)]);
        let rsp = self.call(&Message::new(MessageType::EncodeReq, body), MessageType::EncodeRsp)?;
        let t = decode_tensors(&rsp.body, 2)?;
        let latent = tensor_latent(&t[0])?;
        let restore = tensor_restore(&t[1], latent.rows() - 1)?;
        Ok((latent, restore))
    }

    fn decode(&self, latent: &LatentBlock, restore: &RestoreIndices, geometry: &Geometry) -> Result<Image> {
        if latent.rows() != restore.len_keep() + 1 {
            return Err(Error::LengthMismatch {
                expected: restore.len_keep() + 1,
                actual: latent.rows(),
            });
        }
        let body = encode_tensors(&[latent_tensor(latent), restore_tensor(restore)]);
        let rsp = self.call(&Message::new(MessageType::DecodeReq, body), MessageType::DecodeRsp)?;
        let img = tensor_image(&decode_tensors(&rsp.body, 1)?[0])?;
        if img.height() != geometry.grid.height() || img.width() != geometry.grid.width() {
            return Err(Error::Remote(format!(
                "server returned {}x{}, expected {}x{}",
                img.height(),
                img.width(),
                geometry.grid.height(),
                geometry.grid.width()
            )));
        }
        Ok(img)
    }

    fn latent_dim(&self) -> usize {
        self.health.dim as usize
    }
}
