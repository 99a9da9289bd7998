//! Newline-delimited JSON request/reply loop around one [`Environment`].
//!
//! Requests: `hello`, `reset {seed}`, `step {power}`, `stats`, `shutdown`.
//! Every request line gets exactly one reply line; failures produce
//! `{"type":"error","code":...,"detail":...}` and the session continues.
//! Codes: `malformed` (not a JSON object), `unknown_type`, `invalid_request`
//! (missing or ill-typed fields), `not_initialized` (no reset yet).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{EnvHyper, Environment};
use crate::error::{Error, Result};
use crate::ltat::OptConstraints;
use crate::model::SystemConfig;

/// On-disk environment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvFile {
    #[serde(default = "defaults::m")]
    pub m: usize,
    #[serde(default = "defaults::l")]
    pub l: f64,
    #[serde(default = "defaults::r")]
    pub r: f64,
    #[serde(default = "defaults::one")]
    pub lambda: f64,
    #[serde(default = "defaults::one")]
    pub noise_power: f64,
    /// Average power budget, watts.
    pub pbar: f64,
    pub blermax: f64,
    #[serde(default = "defaults::w")]
    pub w: usize,
    #[serde(default = "defaults::i")]
    pub i: usize,
    #[serde(default)]
    pub pmax: Option<f64>,
    #[serde(default = "defaults::one")]
    pub rho0: f64,
    #[serde(default = "defaults::one")]
    pub nu0: f64,
    #[serde(default = "defaults::tau")]
    pub tau_rho: f64,
    #[serde(default = "defaults::tau")]
    pub tau_nu: f64,
    #[serde(default = "defaults::yes")]
    pub truncate: bool,
}

mod defaults {
    pub fn m() -> usize {
        5
    }
    pub fn l() -> f64 {
        50.0
    }
    pub fn r() -> f64 {
        5.0
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn w() -> usize {
        300
    }
    pub fn i() -> usize {
        100
    }
    pub fn tau() -> f64 {
        1e-3
    }
    pub fn yes() -> bool {
        true
    }
}

impl EnvFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("environment config: {e}")))
    }

    pub fn build(&self) -> Result<Environment> {
        let link = SystemConfig::new(self.m, self.l, self.r, self.lambda)?.with_noise_power(self.noise_power)?;
        let cons = OptConstraints::new(self.pbar, self.blermax)?;
        let hyper = EnvHyper {
            window: self.w,
            period: self.i,
            rho0: self.rho0,
            nu0: self.nu0,
            step_rho: self.tau_rho,
            step_nu: self.tau_nu,
            max_power: self.pmax,
            truncate: self.truncate,
        };
        Environment::new(link, cons, hyper)
    }
}

fn error_reply(code: &str, detail: impl Into<String>) -> Value {
    json!({ "type": "error", "code": code, "detail": detail.into() })
}

fn field<'a>(req: &'a Map<String, Value>, name: &str) -> std::result::Result<&'a Value, Value> {
    req.get(name).ok_or_else(|| error_reply("invalid_request", format!("missing field \"{name}\"")))
}

/// Reply to one request line; `None` means shut down after replying.
fn handle(env: &mut Environment, line: &str) -> (Value, bool) {
    let req = match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => map,
        Ok(_) => return (error_reply("malformed", "request must be a JSON object"), false),
        Err(e) => return (error_reply("malformed", e.to_string()), false),
    };
    let kind = match req.get("type") {
        Some(Value::String(s)) => s.as_str(),
        Some(_) => return (error_reply("invalid_request", "\"type\" must be a string"), false),
        None => return (error_reply("invalid_request", "missing field \"type\""), false),
    };
    let reply = match kind {
        "hello" => {
            let link = env.link();
            let cons = env.constraints();
            let hyper = env.hyper();
            json!({
                "type": "config",
                "m": link.max_rounds,
                "l": link.blocklength,
                "r": link.rate,
                "lambda": link.gain_mean,
                "pbar": cons.max_avg_power,
                "blermax": cons.max_bler,
                "w": hyper.window,
                "i": hyper.period,
                "pmax": env.max_power(),
            })
        }
        "reset" => match field(&req, "seed") {
            Err(e) => e,
            Ok(v) => match v.as_u64() {
                None => error_reply("invalid_request", "\"seed\" must be an unsigned 64-bit integer"),
                Some(seed) => {
                    let s = env.reset(seed);
                    json!({ "type": "state", "state": s.past_powers, "slot": s.slot })
                }
            },
        },
        "step" => match field(&req, "power") {
            Err(e) => e,
            Ok(v) => match v.as_f64() {
                None => error_reply("invalid_request", "\"power\" must be a number"),
                Some(_) if !env.is_initialized() => error_reply("not_initialized", "send reset before step"),
                Some(p) => match env.step(p) {
                    Ok(t) => json!({
                        "type": "transition",
                        "state": t.next_state.past_powers,
                        "reward": t.reward,
                        "rate": t.rate,
                        "round": t.round,
                        "success": t.success,
                        "final_failure": t.final_round_failure,
                        "rho": t.duals.rho,
                        "nu": t.duals.nu,
                        "mbar": t.duals.mbar,
                        "slot": t.next_state.slot,
                    }),
                    Err(e) => error_reply("invalid_request", e.to_string()),
                },
            },
        },
        "stats" => {
            if !env.is_initialized() {
                error_reply("not_initialized", "send reset before stats")
            } else {
                let s = env.window_stats();
                let d = env.duals();
                json!({
                    "type": "stats",
                    "avg_power": s.avg_power,
                    "final_failure_rate": s.final_failure_rate,
                    "mbar": s.mbar,
                    "window_slots": s.slots,
                    "rho": d.rho,
                    "nu": d.nu,
                    "slot": env.state().slot,
                })
            }
        }
        "shutdown" => return (json!({ "type": "shutdown" }), true),
        other => error_reply("unknown_type", format!("unknown request type \"{other}\"")),
    };
    (reply, false)
}

/// Answers requests from `input` on `output` until `shutdown` or end of
/// input. Blank lines are ignored.
pub fn serve<R: BufRead, W: Write>(env: &mut Environment, input: R, mut output: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Protocol(format!("i/o: {e}"));
    for line in input.lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let (reply, stop) = handle(env, &line);
        serde_json::to_writer(&mut output, &reply).map_err(|e| Error::Protocol(e.to_string()))?;
        output.write_all(b"\n").map_err(io)?;
        output.flush().map_err(io)?;
        if stop {
            break;
        }
    }
    Ok(())
}
