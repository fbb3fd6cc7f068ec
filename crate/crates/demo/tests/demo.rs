use serde_json::Value;
use sus_demo::{generate_instance, solve_instance, verify_instance};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).expect("reply is JSON")
}

#[test]
fn generate_solve_verify() {
    for (kind, outcome) in [
        ("planted", "solved"),
        ("deep-split", "solved"),
        ("perturbed", "not_similar"),
        ("planted-equivalent", "solved"),
    ] {
        let inst = generate_instance(kind, 5, 2, 7);
        assert!(parse(&inst).get("error").is_none(), "{kind}: {inst}");
        let reply = parse(&solve_instance(&inst, ""));
        assert_eq!(reply["result"]["outcome"], outcome, "{kind}: {}", reply["summary"]);
        let result = reply["result"].to_string();
        let check = parse(&verify_instance(&inst, &result));
        assert_eq!(check["confirmed"], true, "{kind}: {check}");
    }
}

#[test]
fn deep_split_reports_its_steps() {
    let inst = generate_instance("deep-split", 6, 2, 1);
    let reply = parse(&solve_instance(&inst, "sus"));
    assert_eq!(reply["result"]["trace"].as_array().unwrap().len(), 5);
    assert!(reply["summary"].as_str().unwrap().starts_with("solved after 5"));
}

#[test]
fn errors_come_back_as_json() {
    assert!(parse(&generate_instance("nope", 3, 1, 0))["error"].is_string());
    assert!(parse(&generate_instance("deep-split", 1, 2, 0))["error"].is_string());
    assert!(parse(&solve_instance("{", ""))["error"].as_str().unwrap().contains("line 1"));
    let inst = generate_instance("planted", 3, 1, 0);
    assert!(parse(&solve_instance(&inst, "both"))["error"].is_string());
}

#[test]
fn tampered_results_are_refuted() {
    let inst = generate_instance("planted", 4, 2, 3);
    let mut result = parse(&solve_instance(&inst, ""))["result"].clone();
    result["u"][1][1] = serde_json::json!([0.0, 0.0]);
    assert_eq!(parse(&verify_instance(&inst, &result.to_string()))["confirmed"], false);
}
