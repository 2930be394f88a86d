use serde::Deserialize;
use ttt_core::analysis::{bonferroni, kruskal_wallis, pearson_correlation};

#[derive(Deserialize)]
struct KwCase {
    a: Vec<f64>,
    b: Vec<f64>,
    h: f64,
    p: f64,
}

#[derive(Deserialize)]
struct PearsonCase {
    x: Vec<f64>,
    y: Vec<f64>,
    r: f64,
}

#[derive(Deserialize)]
struct Reference {
    kruskal_wallis: Vec<KwCase>,
    pearson: Vec<PearsonCase>,
}

fn reference() -> Reference {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/stats_reference.json");
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn kruskal_wallis_matches_reference() {
    let cases = reference().kruskal_wallis;
    assert_eq!(cases.len(), 100);
    for (i, case) in cases.iter().enumerate() {
        let t = kruskal_wallis(&case.a, &case.b).unwrap();
        assert!((t.statistic - case.h).abs() <= 1e-9, "case {i}: H {} vs {}", t.statistic, case.h);
        assert!((t.p_value - case.p).abs() <= 1e-9, "case {i}: p {} vs {}", t.p_value, case.p);
    }
}

#[test]
fn pearson_matches_reference() {
    let cases = reference().pearson;
    assert_eq!(cases.len(), 100);
    for (i, case) in cases.iter().enumerate() {
        let r = pearson_correlation(&case.x, &case.y).unwrap();
        assert!((r - case.r).abs() <= 1e-9, "case {i}: r {r} vs {}", case.r);
    }
}

#[test]
fn bonferroni_over_reference_p_values() {
    let ps: Vec<f64> = reference().kruskal_wallis.iter().map(|c| c.p).collect();
    for alpha in [0.01, 0.05, 0.1, 1.0] {
        let flags = bonferroni(&ps, alpha);
        let threshold = alpha / ps.len() as f64;
        let expected: Vec<bool> = ps.iter().map(|&p| p < threshold).collect();
        assert_eq!(flags, expected);
    }
}

#[test]
fn f32_statistics_track_f64() {
    for case in reference().kruskal_wallis.iter().take(20) {
        let a: Vec<f32> = case.a.iter().map(|&v| v as f32).collect();
        let b: Vec<f32> = case.b.iter().map(|&v| v as f32).collect();
        let t = kruskal_wallis(&a, &b).unwrap();
        assert!((t.statistic as f64 - case.h).abs() < 1e-3);
    }
}
