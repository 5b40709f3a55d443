//! Line-delimited JSON environment server.
//!
//! Every request is one JSON object on one line and gets exactly one response
//! line. Requests:
//!
//! - `{"op":"hello"}` -> `{"ok":true,"version":1,"obs_dim":93,"act_dim":13}`
//! - `{"op":"reset","seed":7,"config":{...}}` -> `{"ok":true,"obs":[...]}`;
//!   `seed` defaults to 0 and `config` overrides episode settings by key
//! - `{"op":"step","action":[...13 values]}` -> `{"ok":true,"obs":[...],
//!   "reward":r,"terminated":b,"truncated":b,"info":{...}}`
//! - `{"op":"close"}` -> `{"ok":true}`, then the session ends
//!
//! Failures answer `{"ok":false,"error":"..."}` and keep the session open.
//! Observations are normalized. Floats are written in shortest round-trip form.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::{EpisodeConfig, GraspEnv, StepInfo, ACT_DIM, OBS_DIM};
use crate::error::EnvError;
use crate::model::RobotModel;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum Request {
    Hello,
    Reset {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        config: Option<Value>,
    },
    Step {
        action: Vec<f64>,
    },
    Close,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obs_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub act_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub info: Option<StepInfo>,
}

impl Response {
    fn ok() -> Self {
        Self {
            ok: true,
            ..Self::default()
        }
    }

    fn fail(msg: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(msg.into()),
            ..Self::default()
        }
    }
}

/// Applies `overrides` key by key on top of `base`.
pub fn override_config(base: &EpisodeConfig, overrides: &Value) -> Result<EpisodeConfig, String> {
    let Value::Object(patch) = overrides else {
        return Err("config must be an object".into());
    };
    let mut v = serde_json::to_value(base).map_err(|e| e.to_string())?;
    let obj = v.as_object_mut().expect("config serializes to an object");
    for (k, val) in patch {
        if !obj.contains_key(k) {
            return Err(format!("unknown config key {k:?}"));
        }
        obj.insert(k.clone(), val.clone());
    }
    let cfg: EpisodeConfig = serde_json::from_value(v).map_err(|e| format!("config: {e}"))?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// One client's environment.
pub struct Session {
    model: RobotModel,
    base: EpisodeConfig,
    env: Option<GraspEnv>,
    closed: bool,
}

impl Session {
    pub fn new(model: RobotModel) -> Self {
        let base = EpisodeConfig::from_model(&model);
        Self {
            model,
            base,
            env: None,
            closed: false,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn handle(&mut self, req: Request) -> Response {
        match req {
            Request::Hello => Response {
                version: Some(PROTOCOL_VERSION),
                obs_dim: Some(OBS_DIM),
                act_dim: Some(ACT_DIM),
                ..Response::ok()
            },
            Request::Reset { seed, config } => match self.reset(seed, config) {
                Ok(obs) => Response {
                    obs: Some(obs),
                    ..Response::ok()
                },
                Err(e) => Response::fail(e),
            },
            Request::Step { action } => {
                let Some(env) = self.env.as_mut() else {
                    return Response::fail(format!("protocol error: {}", EnvError::NotReset));
                };
                match env.step(&action) {
                    Ok(r) => Response {
                        obs: Some(r.obs.normalized.to_vec()),
                        reward: Some(r.reward),
                        terminated: Some(r.terminated),
                        truncated: Some(r.truncated),
                        info: Some(r.info),
                        ..Response::ok()
                    },
                    Err(e @ (EnvError::NotReset | EnvError::Finished)) => {
                        Response::fail(format!("protocol error: {e}"))
                    }
                    Err(e) => Response::fail(e.to_string()),
                }
            }
            Request::Close => {
                self.closed = true;
                self.env = None;
                Response::ok()
            }
        }
    }

    fn reset(&mut self, seed: u64, config: Option<Value>) -> Result<Vec<f64>, String> {
        let rebuild = config.is_some() || self.env.is_none();
        if rebuild {
            let cfg = match &config {
                Some(c) => override_config(&self.base, c)?,
                None => self.base.clone(),
            };
            self.env = Some(GraspEnv::new(self.model.clone(), cfg).map_err(|e| e.to_string())?);
        }
        let env = self.env.as_mut().expect("built above");
        Ok(env.reset(seed).map_err(|e| e.to_string())?.normalized.to_vec())
    }

    /// Parses and answers one line. Malformed input yields an error response.
    pub fn handle_line(&mut self, line: &str) -> Response {
        match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req),
            Err(e) => Response::fail(format!("malformed request: {e}")),
        }
    }
}

/// Runs one session until `close` or end of input.
pub fn serve_stream<R: BufRead, W: Write>(model: RobotModel, input: R, mut output: W) -> io::Result<()> {
    let mut session = Session::new(model);
    for line in input.lines() {
        let resp = session.handle_line(&line?);
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}

pub fn serve_stdio(model: RobotModel) -> io::Result<()> {
    serve_stream(model, io::stdin().lock(), BufWriter::new(io::stdout().lock()))
}

fn serve_connection(model: RobotModel, stream: TcpStream) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_stream(model, reader, BufWriter::new(stream))
}

/// Accepts connections forever, one thread and environment per connection.
pub fn serve_tcp(model: RobotModel, listener: TcpListener) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let model = model.clone();
        thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = serve_connection(model, stream) {
                eprintln!("session {peer:?} ended: {e}");
            }
        });
    }
    Ok(())
}

pub fn bind(addr: impl ToSocketAddrs) -> io::Result<TcpListener> {
    TcpListener::bind(addr)
}
