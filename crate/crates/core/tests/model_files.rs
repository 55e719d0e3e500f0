use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use edrlab::models::{self, from_json, save, ModelSpec, ProbeSpec};
use edrlab::{Error, GridSpec, MeterFunction, Tolerances};
use serde_json::Value;

fn saved_model() -> (edrlab::MeasurementProcess, Value) {
    let g = GridSpec::new(4, 1.0, 1.0).unwrap();
    let gp = GridSpec::new(8, 1.0, 1.0).unwrap();
    let proc = models::build(&ModelSpec::von_neumann(g, gp, 0.8, ProbeSpec::gaussian(0.0, 0.9))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save(&proc, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    (proc, serde_json::from_str(&text).unwrap())
}

fn decode(v: &Value) -> Vec<f64> {
    let bytes = STANDARD.decode(v["data"].as_str().unwrap()).unwrap();
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

fn encode(v: &mut Value, data: &[f64]) {
    let bytes: Vec<u8> = data.iter().flat_map(|x| x.to_le_bytes()).collect();
    v["data"] = Value::String(STANDARD.encode(bytes));
}

fn load(v: &Value) -> edrlab::Result<edrlab::MeasurementProcess> {
    from_json(&v.to_string(), Tolerances::default())
}

#[test]
fn round_trip_preserves_report() {
    let (proc, file) = saved_model();
    let back = load(&file).unwrap();
    let psi = GridSpec::new(4, 1.0, 1.0).unwrap().gaussian_state(0.0, 0.0, 0.6).unwrap();
    let f = MeterFunction::identity();
    let a = proc.edr_report(&psi, &f).unwrap();
    let b = back.edr_report(&psi, &f).unwrap();
    for (x, y) in [(a.epsilon, b.epsilon), (a.delta, b.delta), (a.eta, b.eta), (a.sigma_p, b.sigma_p)] {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
    assert_eq!(back.dims(), proc.dims());
}

#[test]
fn perturbed_interaction_is_non_unitary() {
    let (_, mut file) = saved_model();
    let mut data = decode(&file["interaction"]);
    data[0] += 1e-3;
    encode(&mut file["interaction"], &data);
    let err = load(&file).unwrap_err();
    assert_eq!(err.code(), "NON_UNITARY", "{err}");
}

#[test]
fn wrong_dims_are_rejected() {
    let (_, mut file) = saved_model();
    file["dims"]["object"] = Value::from(5);
    assert_eq!(load(&file).unwrap_err().code(), "DIM_MISMATCH");
}

#[test]
fn non_hermitian_meter_is_rejected() {
    let (_, mut file) = saved_model();
    let mut data = decode(&file["meter"]);
    data[3] += 1e-3; // imaginary part of entry (0, 1)
    encode(&mut file["meter"], &data);
    assert_eq!(load(&file).unwrap_err().code(), "NON_HERMITIAN");
}

#[test]
fn unnormalized_probe_is_rejected() {
    let (_, mut file) = saved_model();
    let data: Vec<f64> = decode(&file["probe_state"]).iter().map(|x| x * 1.01).collect();
    encode(&mut file["probe_state"], &data);
    assert_eq!(load(&file).unwrap_err().code(), "UNNORMALIZED");
}

#[test]
fn disturbed_units_must_be_momentum() {
    let (_, mut file) = saved_model();
    file["units"]["disturbed"] = Value::from("length");
    assert_eq!(load(&file).unwrap_err().code(), "UNIT_MISMATCH");
}

#[test]
fn truncated_payload_and_unknown_format() {
    let (_, mut file) = saved_model();
    let data = decode(&file["meter"]);
    encode(&mut file["meter"], &data[..data.len() - 2]);
    assert!(load(&file).unwrap_err().is_invariant_violation());
    file["format"] = Value::from("something-else");
    assert!(matches!(load(&file), Err(Error::Parse(_))));
}

#[test]
fn looser_tolerance_admits_small_perturbation() {
    let (_, mut file) = saved_model();
    let mut data = decode(&file["interaction"]);
    data[0] += 1e-9;
    encode(&mut file["interaction"], &data);
    assert_eq!(load(&file).unwrap_err().code(), "NON_UNITARY");
    let mut tol = Tolerances::default();
    tol.set("unitarity", 1e-6).unwrap();
    assert!(from_json(&file.to_string(), tol).is_ok());
}
