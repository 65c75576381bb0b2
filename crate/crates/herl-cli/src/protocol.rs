//! Framed protocol for outsourcing an encrypted synthesis job to an
//! untrusted solver, over a TCP stream or as message files in a directory.
//!
//! Every message is one frame: a big-endian `u32` length covering the type
//! byte plus payload, then the type byte, then the payload. Types: `0x01`
//! model (job description plus encrypted system), `0x02` state (encrypted
//! start vector), `0x03` result (encrypted final iterate), `0x04` error
//! (UTF-8 message). A session is client-to-server model then state, and
//! server-to-client result or error.
//!
//! The model payload is, in order: protocol version `u16`, backend byte,
//! backend parameters (ring `u32`, scale `u32`, modulus count `u8` and
//! moduli `u64` each, noise stddev `f64`, message bound `f64`, seed `u64`),
//! a simulator-noise flag byte with four `f64` magnitudes when set, state
//! dimension `u32`, iteration count `u32`, then length-prefixed blobs: the
//! evaluation keys, the source ciphertext, the row ciphertexts, and the
//! selector ciphertexts. All payload integers are little-endian; only the
//! frame length is big-endian.
//!
//! Evaluation keys carry the noise-tape cursor, so they must be serialized
//! after every client-side encryption; [`JobFrames::build`] takes the
//! already-encrypted start vector for exactly that reason. The server then
//! continues the tape where the client left off and produces bit-identical
//! ciphertexts to a local run.

use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;

use anyhow::{bail, Context, Result};

use herl::encrypted::{iterate_encrypted, EncryptedModel};
use herl::he::{
    make_backend, serial, BackendKind, BackendParams, Ciphertext, EvalKeys, HeBackend, NoiseModel,
};

pub const PROTOCOL_VERSION: u16 = 1;

pub const FRAME_MODEL: u8 = 0x01;
pub const FRAME_STATE: u8 = 0x02;
pub const FRAME_RESULT: u8 = 0x03;
pub const FRAME_ERROR: u8 = 0x04;

/// Upper bound on a single frame, to fail fast on corrupt lengths.
const MAX_FRAME: u32 = 64 << 20;

pub const MODEL_FILE: &str = "model.msg";
pub const STATE_FILE: &str = "state.msg";
pub const RESULT_FILE: &str = "result.msg";

fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_blob(buf: &mut Vec<u8>, blob: &[u8]) -> Result<()> {
    let len = u32::try_from(blob.len()).context("blob too large for the wire")?;
    put_u32(buf, len);
    buf.extend_from_slice(blob);
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            bail!("payload truncated: wanted {n} bytes, {} left", self.0.len());
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn finish(self) -> Result<()> {
        if !self.0.is_empty() {
            bail!("{} trailing bytes in payload", self.0.len());
        }
        Ok(())
    }
}

/// Writes one frame: big-endian length over type byte plus payload.
pub fn write_frame(w: &mut dyn Write, frame_type: u8, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len() + 1).context("frame too large")?;
    if len > MAX_FRAME {
        bail!("frame of {len} bytes exceeds the {MAX_FRAME} limit");
    }
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&[frame_type])?;
    w.write_all(payload)?;
    Ok(())
}

/// Reads one frame, returning its type byte and payload.
pub fn read_frame(r: &mut dyn Read) -> Result<(u8, Vec<u8>)> {
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes).context("reading frame length")?;
    let len = u32::from_be_bytes(len_bytes);
    if len == 0 {
        bail!("empty frame");
    }
    if len > MAX_FRAME {
        bail!("frame of {len} bytes exceeds the {MAX_FRAME} limit");
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).context("reading frame body")?;
    let payload = body.split_off(1);
    Ok((body[0], payload))
}

fn frame_to_bytes(frame_type: u8, payload: &[u8]) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(payload.len() + 5);
    write_frame(&mut buf, frame_type, payload)?;
    Ok(buf)
}

fn put_params(buf: &mut Vec<u8>, params: &BackendParams) -> Result<()> {
    put_u32(buf, u32::try_from(params.ring_degree).context("ring degree")?);
    put_u32(buf, params.scale_log2);
    let count = u8::try_from(params.modulus_chain.len()).context("modulus chain")?;
    buf.push(count);
    for &q in &params.modulus_chain {
        put_u64(buf, q);
    }
    put_f64(buf, params.noise_stddev);
    put_f64(buf, params.message_bound);
    put_u64(buf, params.seed);
    Ok(())
}

fn take_params(c: &mut Cursor<'_>) -> Result<BackendParams> {
    let ring_degree = c.u32()? as usize;
    let scale_log2 = c.u32()?;
    let count = c.u8()? as usize;
    let mut modulus_chain = Vec::with_capacity(count);
    for _ in 0..count {
        modulus_chain.push(c.u64()?);
    }
    Ok(BackendParams {
        ring_degree,
        scale_log2,
        modulus_chain,
        noise_stddev: c.f64()?,
        message_bound: c.f64()?,
        seed: c.u64()?,
    })
}

/// The two client-produced frames of a session, ready to send or store.
pub struct JobFrames {
    pub model: Vec<u8>,
    pub state: Vec<u8>,
}

impl JobFrames {
    /// Encodes a job. `z0` must already be encrypted: the evaluation keys
    /// are serialized here with their current noise-tape cursor, which has
    /// to account for every encryption the client performed.
    pub fn build(
        backend: &dyn HeBackend,
        model: &EncryptedModel,
        eval: &EvalKeys,
        z0: &Ciphertext,
        iterations: usize,
    ) -> Result<Self> {
        let params = backend.params();
        let mut payload = Vec::new();
        put_u16(&mut payload, PROTOCOL_VERSION);
        payload.push(backend.kind().byte());
        put_params(&mut payload, params)?;
        match eval.sim_model() {
            Some(m) => {
                payload.push(1);
                for v in [m.enc, m.mult, m.rot, m.boot] {
                    put_f64(&mut payload, v);
                }
            }
            None => payload.push(0),
        }
        put_u32(&mut payload, u32::try_from(model.dim()).context("dimension")?);
        put_u32(&mut payload, u32::try_from(iterations).context("iterations")?);

        let mut eval_blob = Vec::new();
        serial::write_eval_keys(&mut eval_blob, eval, params)?;
        put_blob(&mut payload, &eval_blob)?;

        put_blob(&mut payload, &serial::ciphertext_to_bytes(model.w(), params)?)?;
        for ct in model.rows() {
            put_blob(&mut payload, &serial::ciphertext_to_bytes(ct, params)?)?;
        }
        for ct in model.selectors() {
            put_blob(&mut payload, &serial::ciphertext_to_bytes(ct, params)?)?;
        }

        Ok(Self {
            model: frame_to_bytes(FRAME_MODEL, &payload)?,
            state: frame_to_bytes(FRAME_STATE, &serial::ciphertext_to_bytes(z0, params)?)?,
        })
    }
}

/// A decoded job the solver can run without any secret material.
pub struct ReceivedJob {
    pub backend: Box<dyn HeBackend>,
    pub params: BackendParams,
    pub model: EncryptedModel,
    pub eval: EvalKeys,
    pub iterations: usize,
}

pub fn decode_model_payload(payload: &[u8]) -> Result<ReceivedJob> {
    let mut c = Cursor(payload);
    let version = c.u16()?;
    if version != PROTOCOL_VERSION {
        bail!("protocol version {version} is not supported (expected {PROTOCOL_VERSION})");
    }
    let kind_byte = c.u8()?;
    let kind = BackendKind::from_byte(kind_byte)
        .with_context(|| format!("unknown backend byte {kind_byte:#04x}"))?;
    let params = take_params(&mut c)?;

    let sim_model = match c.u8()? {
        0 => None,
        1 => Some(NoiseModel {
            enc: c.f64()?,
            mult: c.f64()?,
            rot: c.f64()?,
            boot: c.f64()?,
        }),
        other => bail!("bad noise-model flag {other}"),
    };
    if (kind == BackendKind::Sim) != sim_model.is_some() {
        bail!("noise model presence does not match the backend");
    }

    let dim = c.u32()? as usize;
    let iterations = c.u32()? as usize;
    if dim == 0 || dim > params.slot_count() {
        bail!("dimension {dim} does not fit {} slots", params.slot_count());
    }

    let backend = make_backend(kind, params.clone(), sim_model)?;
    let mut eval_blob = c.blob()?;
    let eval =
        serial::read_eval_keys(&mut eval_blob, &params).context("decoding evaluation keys")?;
    if !eval_blob.is_empty() {
        bail!("{} trailing bytes in the evaluation-key blob", eval_blob.len());
    }

    let read_ct = |c: &mut Cursor<'_>| -> Result<Ciphertext> {
        serial::ciphertext_from_bytes(c.blob()?, &params).context("decoding ciphertext")
    };
    let w = read_ct(&mut c)?;
    let mut rows = Vec::with_capacity(dim);
    for _ in 0..dim {
        rows.push(read_ct(&mut c)?);
    }
    let mut selectors = Vec::with_capacity(dim);
    for _ in 0..dim {
        selectors.push(read_ct(&mut c)?);
    }
    c.finish()?;

    let model = EncryptedModel::from_parts(rows, w, selectors, dim)?;
    Ok(ReceivedJob {
        backend,
        params,
        model,
        eval,
        iterations,
    })
}

/// Runs one session: model frame and state frame in, result frame out.
/// Decode and evaluation failures are reported to the peer as an error
/// frame before the error is returned.
pub fn serve_session<R: Read, W: Write>(r: &mut R, w: &mut W) -> Result<()> {
    match run_session(r) {
        Ok(result) => write_frame(w, FRAME_RESULT, &result),
        Err(e) => {
            let msg = format!("{e:#}");
            let _ = write_frame(w, FRAME_ERROR, msg.as_bytes());
            Err(e)
        }
    }
}

fn run_session(r: &mut dyn Read) -> Result<Vec<u8>> {
    let (ty, payload) = read_frame(r)?;
    if ty != FRAME_MODEL {
        bail!("expected a model frame, got type {ty:#04x}");
    }
    let job = decode_model_payload(&payload)?;

    let (ty, payload) = read_frame(r)?;
    if ty != FRAME_STATE {
        bail!("expected a state frame, got type {ty:#04x}");
    }
    let z0 = serial::ciphertext_from_bytes(&payload, &job.params)
        .context("decoding the start vector")?;

    let (z_final, _timings) = iterate_encrypted(
        job.backend.as_ref(),
        &job.model,
        &z0,
        job.iterations,
        &job.eval,
    )?;
    Ok(serial::ciphertext_to_bytes(&z_final, &job.params)?)
}

/// Serves sessions from a bound listener, one connection at a time. With
/// `once` the listener handles a single connection and returns; otherwise
/// it runs until accept fails. Per-session errors are reported to the peer
/// and do not stop the server.
pub fn serve_tcp(listener: &TcpListener, once: bool) -> Result<()> {
    loop {
        let (stream, _peer) = listener.accept().context("accepting a connection")?;
        let result = handle_tcp(stream);
        if once {
            return result;
        }
        if let Err(e) = result {
            eprintln!("session failed: {e:#}");
        }
    }
}

fn handle_tcp(stream: TcpStream) -> Result<()> {
    let mut reader = stream.try_clone().context("cloning the stream")?;
    let mut writer = stream;
    serve_session(&mut reader, &mut writer)
}

/// Ships a job over TCP and returns the decoded result ciphertext.
pub fn outsource_tcp(
    addr: &str,
    frames: &JobFrames,
    params: &BackendParams,
) -> Result<Ciphertext> {
    let mut stream = TcpStream::connect(addr).with_context(|| format!("connecting to {addr}"))?;
    stream.write_all(&frames.model)?;
    stream.write_all(&frames.state)?;
    stream.flush()?;
    let (ty, payload) = read_frame(&mut stream)?;
    decode_result(ty, &payload, params)
}

fn decode_result(ty: u8, payload: &[u8], params: &BackendParams) -> Result<Ciphertext> {
    match ty {
        FRAME_RESULT => {
            serial::ciphertext_from_bytes(payload, params).context("decoding the result")
        }
        FRAME_ERROR => bail!("solver error: {}", String::from_utf8_lossy(payload)),
        other => bail!("unexpected frame type {other:#04x}"),
    }
}

/// Writes the session's client frames as files, the file-based transport.
pub fn write_job_dir(dir: &Path, frames: &JobFrames) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MODEL_FILE), &frames.model)?;
    fs::write(dir.join(STATE_FILE), &frames.state)?;
    Ok(())
}

/// Runs the solver over message files: reads `model.msg` and `state.msg`,
/// writes `result.msg`.
pub fn serve_dir(dir: &Path) -> Result<()> {
    let model = fs::read(dir.join(MODEL_FILE))
        .with_context(|| format!("reading {}", dir.join(MODEL_FILE).display()))?;
    let state = fs::read(dir.join(STATE_FILE))
        .with_context(|| format!("reading {}", dir.join(STATE_FILE).display()))?;
    let mut input = model;
    input.extend_from_slice(&state);
    let result = run_session(&mut input.as_slice())?;
    fs::write(dir.join(RESULT_FILE), frame_to_bytes(FRAME_RESULT, &result)?)?;
    Ok(())
}

/// Reads the solver's `result.msg` back as a ciphertext.
pub fn read_result_dir(dir: &Path, params: &BackendParams) -> Result<Ciphertext> {
    let bytes = fs::read(dir.join(RESULT_FILE))
        .with_context(|| format!("reading {}", dir.join(RESULT_FILE).display()))?;
    let mut cursor = bytes.as_slice();
    let (ty, payload) = read_frame(&mut cursor)?;
    if !cursor.is_empty() {
        bail!("trailing bytes after the result frame");
    }
    decode_result(ty, &payload, params)
}
