//! Policy client wire protocol: one JSON document per message.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ClientError;
use crate::interval::IntervalSet;
use crate::planner::{Pass, ZoomPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub spans_s: IntervalSet,
    pub fps: f64,
    pub tokens_per_frame: u32,
}

impl FrameSpec {
    /// Describes the frames of `plan`, which were placed over `spans`.
    pub fn from_plan(plan: &ZoomPlan, spans: &IntervalSet) -> Self {
        let measure = spans.measure();
        let fps = if measure > 0.0 { plan.n_frames() as f64 / measure } else { 0.0 };
        FrameSpec { spans_s: spans.clone(), fps, tokens_per_frame: plan.tokens_per_frame }
    }

    /// Frame times implied by the spec, placed the same way the planner does.
    pub fn frame_times(&self) -> Vec<f64> {
        let measure = self.spans_s.measure();
        if measure <= 0.0 || self.fps <= 0.0 {
            return Vec::new();
        }
        crate::planner::place_frames(&self.spans_s, crate::planner::frames_at_rate(measure, self.fps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    Coarse,
    Fine,
}

impl From<Pass> for Template {
    fn from(p: Pass) -> Self {
        match p {
            Pass::Coarse => Template::Coarse,
            Pass::Fine => Template::Fine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRequest {
    pub id: String,
    pub question: String,
    pub options: BTreeMap<String, String>,
    pub video_ref: String,
    pub frame_spec: FrameSpec,
    pub template: Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientResponse {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_token_logprob: Option<f64>,
}

/// Anything that can answer a question about a set of frames. Implementations
/// must accept concurrent calls.
pub trait PolicyClient: Send + Sync {
    fn query(&self, request: &ClientRequest) -> Result<ClientResponse, ClientError>;
}

impl<C: PolicyClient + ?Sized> PolicyClient for &C {
    fn query(&self, request: &ClientRequest) -> Result<ClientResponse, ClientError> {
        (**self).query(request)
    }
}

/// Client that never answers; every query is a protocol error.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClient;

impl PolicyClient for NullClient {
    fn query(&self, request: &ClientRequest) -> Result<ClientResponse, ClientError> {
        Err(ClientError::Protocol(format!("no policy client configured for request {}", request.id)))
    }
}

/// Line-delimited JSON over a TCP connection, one connection per request.
#[derive(Debug, Clone)]
pub struct TcpJsonClient {
    addr: String,
    timeout: Duration,
}

impl TcpJsonClient {
    /// Accepts `tcp://host:port` or a bare `host:port`.
    pub fn new(uri: &str, timeout: Duration) -> Result<Self, ClientError> {
        let addr = uri.strip_prefix("tcp://").unwrap_or(uri).to_string();
        if addr.to_socket_addrs().map_err(|e| ClientError::Protocol(format!("{uri}: {e}")))?.next().is_none() {
            return Err(ClientError::Protocol(format!("{uri}: no address")));
        }
        Ok(Self { addr, timeout })
    }
}

fn io_error(e: std::io::Error) -> ClientError {
    match e.kind() {
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => ClientError::Timeout(e.to_string()),
        _ => ClientError::Protocol(e.to_string()),
    }
}

impl PolicyClient for TcpJsonClient {
    fn query(&self, request: &ClientRequest) -> Result<ClientResponse, ClientError> {
        let addr = self
            .addr
            .to_socket_addrs()
            .map_err(io_error)?
            .next()
            .ok_or_else(|| ClientError::Protocol(format!("{}: no address", self.addr)))?;
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(io_error)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(io_error)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(io_error)?;
        let mut line = serde_json::to_string(request).map_err(|e| ClientError::Protocol(e.to_string()))?;
        line.push('\n');
        stream.write_all(line.as_bytes()).map_err(io_error)?;
        let mut reply = String::new();
        BufReader::new(stream).read_line(&mut reply).map_err(io_error)?;
        let response: ClientResponse =
            serde_json::from_str(reply.trim()).map_err(|e| ClientError::Protocol(format!("bad response: {e}")))?;
        if response.id != request.id {
            return Err(ClientError::Protocol(format!(
                "response id {} does not match request {}",
                response.id, request.id
            )));
        }
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    fn request() -> ClientRequest {
        ClientRequest {
            id: "q1#zoom".into(),
            question: "what?".into(),
            options: [("A".to_string(), "x".to_string())].into(),
            video_ref: "q1".into(),
            frame_spec: FrameSpec {
                spans_s: IntervalSet::single(1.0, 3.0).unwrap(),
                fps: 1.0,
                tokens_per_frame: 128,
            },
            template: Template::Fine,
        }
    }

    #[test]
    fn wire_shape() {
        let v = serde_json::to_value(request()).unwrap();
        assert_eq!(v["frame_spec"]["spans_s"], serde_json::json!([[1.0, 3.0]]));
        assert_eq!(v["template"], "fine");
        let r: ClientResponse = serde_json::from_str(r#"{"id":"x","text":"t"}"#).unwrap();
        assert_eq!(r.answer_token_logprob, None);
    }

    #[test]
    fn frame_spec_reproduces_plan_frames() {
        let spans = IntervalSet::normalize([(2.0, 5.0), (10.0, 17.0)]).unwrap();
        let plan = crate::planner::fine_plan(&spans, &Default::default(), 1.0).unwrap();
        let spec = FrameSpec::from_plan(&plan, &spans);
        assert_eq!(spec.frame_times(), plan.frame_times);
    }

    #[test]
    fn tcp_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let req: ClientRequest = serde_json::from_str(&line).unwrap();
            let resp = ClientResponse { id: req.id, text: "<answer>A</answer>".into(), answer_token_logprob: Some(-0.1) };
            let mut out = stream;
            writeln!(out, "{}", serde_json::to_string(&resp).unwrap()).unwrap();
        });
        let client = TcpJsonClient::new(&format!("tcp://{addr}"), Duration::from_secs(5)).unwrap();
        let resp = client.query(&request()).unwrap();
        assert_eq!(resp.text, "<answer>A</answer>");
        server.join().unwrap();
    }
}
