use harq_core::env::{serve, EnvFile};
use serde_json::Value;

const CONFIG: &str = r#"{"m": 3, "pbar": 40.0, "blermax": 0.001, "w": 20, "i": 5}"#;

fn session(script: &str) -> Vec<Value> {
    let mut env = EnvFile::from_json(CONFIG).unwrap().build().unwrap();
    let mut out = Vec::new();
    serve(&mut env, script.as_bytes(), &mut out).unwrap();
    String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn wire_session_matches_library_environment() {
    let powers = [3.0, 50.0, 0.0, 120.0, 7.25, 40.0, 40.0, 1.0, 90.0, 12.0, 33.0, 5.0];
    let mut script = String::from("{\"type\":\"reset\",\"seed\":17}\n");
    for p in powers {
        script += &format!("{{\"type\":\"step\",\"power\":{p}}}\n");
    }
    let replies = session(&script);

    let mut env = EnvFile::from_json(CONFIG).unwrap().build().unwrap();
    env.reset(17);
    for (p, reply) in powers.iter().zip(&replies[1..]) {
        let t = env.step(*p).unwrap();
        assert_eq!(reply["type"], "transition");
        assert_eq!(reply["reward"].as_f64().unwrap(), t.reward);
        assert_eq!(reply["round"].as_u64().unwrap() as usize, t.round);
        assert_eq!(reply["success"].as_bool().unwrap(), t.success);
        assert_eq!(reply["rho"].as_f64().unwrap(), t.duals.rho);
        assert_eq!(reply["nu"].as_f64().unwrap(), t.duals.nu);
        let state: Vec<f64> = serde_json::from_value(reply["state"].clone()).unwrap();
        assert_eq!(state, t.next_state.past_powers);
    }
}

#[test]
fn state_has_m_minus_one_entries_and_pmax_clamps() {
    let replies = session("{\"type\":\"hello\"}\n{\"type\":\"reset\",\"seed\":1}\n{\"type\":\"step\",\"power\":1e9}\n");
    assert_eq!(replies[0]["pmax"].as_f64().unwrap(), 160.0);
    assert_eq!(replies[1]["state"].as_array().unwrap().len(), 2);
    let state = replies[2]["state"].as_array().unwrap();
    assert!(state.iter().all(|p| p.as_f64().unwrap() <= 160.0));
}

#[test]
fn input_ends_without_shutdown() {
    let replies = session("{\"type\":\"hello\"}\n\n{\"type\":\"nope\"}\n");
    assert_eq!(replies.len(), 2);
    assert_eq!(replies[1]["code"], "unknown_type");
}
