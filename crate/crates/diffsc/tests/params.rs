use diffsc::params_io::{load_params, params_from_json, params_to_json, save_params};
use diffsc_core::codec::{init_codec, Arch, SnrConditioning};
use diffsc_core::rng::stream;
use diffsc_core::Shape;

fn params() -> diffsc_core::codec::CodecParams {
    let arch = Arch {
        snr_conditioning: SnrConditioning::Both,
        ..Arch::default()
    };
    init_codec(Shape::new(4, 4, 2).unwrap(), 0.25, arch, &mut stream(5)).unwrap()
}

#[test]
fn json_round_trip_is_exact() {
    let p = params();
    let back = params_from_json(&params_to_json(&p)).unwrap();
    assert_eq!(back, p);
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p/params.json");
    let p = params();
    save_params(&p, &path).unwrap();
    assert_eq!(load_params(&path).unwrap(), p);
}

#[test]
fn layout_errors_are_reported() {
    let json = params_to_json(&params());
    let wrong_version = json.replacen("\"layout_version\": 1", "\"layout_version\": 2", 1);
    assert!(params_from_json(&wrong_version).unwrap_err().contains("layout_version"));

    let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
    v["arrays"]["up.mu_snr"] = serde_json::json!([1.0]);
    assert!(params_from_json(&v.to_string()).unwrap_err().contains("up.mu_snr"));

    let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
    v["arrays"].as_object_mut().unwrap().remove("down.in.expand.w");
    assert!(params_from_json(&v.to_string()).unwrap_err().contains("missing"));
}
