use mialab_demo::{account_json, bound_curves_json, threshold_sweep_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn bound_curves_are_ordered() {
    let v = parse(&bound_curves_json(1e-5, 3.0, 31).unwrap());
    let eps = v["epsilon"].as_array().unwrap();
    assert_eq!(eps.len(), 31);
    for i in 0..31 {
        let n = v["new"][i].as_f64().unwrap();
        let e = v["erlingsson"][i].as_f64().unwrap();
        let y = v["yeom"][i].as_f64().unwrap();
        assert!(n <= e + 1e-15 && n <= y.max(n));
    }
    assert!(bound_curves_json(2.0, 3.0, 31).is_err());
    assert!(bound_curves_json(1e-5, 3.0, 1).is_err());
}

#[test]
fn account_and_calibrate_agree() {
    let cal = parse(&account_json(0.02, 5000, 1e-5, 0.0, 1.0).unwrap());
    let sigma = cal["sigma"].as_f64().unwrap();
    let eps = cal["epsilon"].as_f64().unwrap();
    assert!(eps <= 1.0 && eps >= 0.97);
    let direct = parse(&account_json(0.02, 5000, 1e-5, sigma, 0.0).unwrap());
    assert_eq!(direct["epsilon"].as_f64().unwrap(), eps);
}

#[test]
fn threshold_sweep_separates() {
    let v = parse(&threshold_sweep_json("0.1, 0.2", "0.8 0.9").unwrap());
    assert_eq!(v["advantage"].as_f64().unwrap(), 1.0);
    let roc = v["roc"].as_array().unwrap();
    assert_eq!(roc.len(), 5);
    assert_eq!(roc.last().unwrap()[0].as_f64().unwrap(), 1.0);
    assert!(threshold_sweep_json("0.1, x", "0.2").is_err());
    assert!(threshold_sweep_json("", "0.2").is_err());
}
