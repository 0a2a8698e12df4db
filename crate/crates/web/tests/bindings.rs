use caginalp_web::{hypotheses_json, m4_search_json, simulate_json};
use serde_json::{json, Value};

fn call(f: fn(&str) -> Result<String, String>, req: Value) -> Result<Value, String> {
    f(&req.to_string()).map(|s| serde_json::from_str(&s).unwrap())
}

#[test]
fn simulate_constant_data_follows_ode() {
    let res = call(
        simulate_json,
        json!({
            "nodes": 11, "dt": 0.01, "t_end": 1.0,
            "nonlinearity": { "kind": "zero" },
            "u0": { "kind": "constant", "value": 1.0 },
            "phi0": { "kind": "constant", "value": 0.0 },
            "frames": 11
        }),
    )
    .unwrap();
    let t = res["t"].as_array().unwrap();
    assert_eq!(t.len(), 11);
    assert_eq!(t[0], 0.0);
    assert!((t[10].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(res["x"].as_array().unwrap().len(), 11);
    let u_end = res["u"][10][5].as_f64().unwrap();
    assert!((u_end - (-1.0f64).exp()).abs() < 1e-3, "{u_end}");
    let c: Vec<f64> = res["conserved"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(c.iter().all(|v| (v - c[0]).abs() < 1e-10));
}

#[test]
fn simulate_double_well_conserves_enthalpy() {
    for method in ["stepping", "homotopy"] {
        let res = call(
            simulate_json,
            json!({
                "nodes": 41, "dt": 0.01, "t_end": 0.3, "latent_heat": 2.0,
                "nonlinearity": { "kind": "double_well" },
                "u0": { "kind": "cosine", "mean": 0.0, "amplitude": 0.5, "modes": [1] },
                "phi0": { "kind": "cosine", "mean": 0.2, "amplitude": 0.6, "modes": [2] },
                "method": method
            }),
        )
        .unwrap();
        assert_eq!(res["method"], method);
        let c: Vec<f64> = res["conserved"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(c.len(), 31);
        let scale = c[0].abs().max(1.0);
        assert!(c.iter().all(|v| (v - c[0]).abs() < 1e-8 * scale), "{method}: {c:?}");
    }
}

#[test]
fn simulate_rejects_bad_requests() {
    let base = json!({
        "nodes": 11, "dt": 0.01, "t_end": 1.0,
        "nonlinearity": { "kind": "zero" },
        "u0": { "kind": "constant", "value": 0.0 },
        "phi0": { "kind": "constant", "value": 0.0 }
    });
    let mut r = base.clone();
    r["dt"] = json!(-1.0);
    assert!(call(simulate_json, r).is_err());
    let mut r = base.clone();
    r["nodes"] = json!(100_000);
    assert!(call(simulate_json, r).unwrap_err().contains("limit"));
    let mut r = base.clone();
    r["u0"] = json!({ "kind": "values", "values": [1.0, 2.0] });
    assert!(call(simulate_json, r).is_err());
    let mut r = base;
    r["extra"] = json!(1);
    assert!(call(simulate_json, r).unwrap_err().starts_with("bad request"));
    assert!(simulate_json("not json").is_err());
}

#[test]
fn hypotheses_of_double_well() {
    let res = call(hypotheses_json, json!({ "nonlinearity": { "kind": "double_well" } })).unwrap();
    let curve = &res["curve"];
    assert_eq!(curve["z"].as_array().unwrap().len(), 201);
    assert_eq!(curve["f"][100], 0.0);
    let reports = res["reports"].as_array().unwrap();
    let h1 = reports.iter().find(|r| r["hypothesis"] == "H1").unwrap();
    assert!((h1["constant_estimate"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    assert!(reports.iter().all(|r| r["verdict"] != "fail"));
}

#[test]
fn hypotheses_reject_invalid_power_law() {
    let err =
        call(hypotheses_json, json!({ "nonlinearity": { "kind": "power_law", "r1": 1.5, "r2": 3.0 } })).unwrap_err();
    assert!(err.contains("r2"));
}

#[test]
fn m4_search_finds_power_law_violation() {
    let res = call(
        m4_search_json,
        json!({
            "nonlinearity": { "kind": "power_law", "r1": 3.0, "r2": 1.0 },
            "alpha": 1.0, "beta": 1.0, "r": 4.0, "box": 20.0
        }),
    )
    .unwrap();
    let w = &res["witness"];
    assert!(w.is_object());
    assert!(w["lhs"].as_f64().unwrap() > w["rhs"].as_f64().unwrap());
    assert_eq!(res["gap"]["z"].as_array().unwrap().len(), 401);
}

#[test]
fn m4_search_without_violation() {
    let res = call(
        m4_search_json,
        json!({ "nonlinearity": { "kind": "double_well" }, "alpha": 1.0, "beta": 0.5, "r": 3.0, "box": 20.0 }),
    )
    .unwrap();
    assert!(res["witness"].is_null());
    let gap: Vec<f64> = res["gap"]["f"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(gap.iter().all(|g| *g <= 1e-9 * (1.0 + g.abs())));
}

#[test]
fn m4_search_validates_parameters() {
    let err = call(
        m4_search_json,
        json!({ "nonlinearity": { "kind": "double_well" }, "alpha": -1.0, "beta": 1.0, "r": 3.0 }),
    )
    .unwrap_err();
    assert!(err.contains("alpha"));
}
