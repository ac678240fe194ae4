use serde_json::Value;

use hfo2ps::harness::{
    apply_axis, compute_regret, emit_run, emit_sweep, read_records_csv, run_experiment, sweep,
    write_records_csv, write_summary_json, EpisodeRecord, ExperimentConfig, OutputFormat,
    SummaryDocument, SweepAxis, SUMMARY_SCHEMA,
};
use hfo2ps::instances::TreeShape;

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap()
}

fn csv_bytes(records: &[EpisodeRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records_csv(&mut buf, records).unwrap();
    buf
}

/// Reward table of a binary tree with entries in `[0, 1/H]`, from a tiny LCG.
fn tree_rewards(depth: usize, seed: u64) -> Vec<f64> {
    let n = TreeShape::new(2, depth).unwrap().num_states() * 2;
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 11) as f64 / (1u64 << 53) as f64 / depth as f64
        })
        .collect()
}

fn path_totals(depth: usize, reward: &[f64]) -> Vec<f64> {
    let tree = TreeShape::new(2, depth).unwrap();
    (0..1usize << depth)
        .map(|leaf| {
            let mut node = 0;
            let mut total = 0.0;
            for layer in 0..depth {
                let a = (leaf >> (depth - 1 - layer)) & 1;
                total += reward[tree.state(layer, node) * 2 + a];
                node = node * 2 + a;
            }
            total
        })
        .collect()
}

#[test]
fn uniform_policy_regret_has_closed_form_on_trees() {
    let (depth, k) = (4, 30);
    let reward = tree_rewards(depth, 5);
    let cfg = config(&format!(
        r#"{{"instance": {{"kind": "tree", "num_actions": 2, "depth": {depth}}},
            "adversary": {{"kind": "fixed", "reward": {}}},
            "episodes": {k}, "algorithm": "uniform-policy"}}"#,
        serde_json::to_string(&reward).unwrap()
    ));
    let out = run_experiment(&cfg).unwrap();
    let totals = path_totals(depth, &reward);
    let best = totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    let want = k as f64 * (best - mean);
    assert!((out.summary.final_regret - want).abs() < 1e-10, "{} vs {want}", out.summary.final_regret);
    for r in &out.records {
        assert!((r.comparator_value - best).abs() < 1e-12);
        assert!((r.policy_value - mean).abs() < 1e-12);
    }
}

#[test]
fn degenerate_fixed_matches_fixed() {
    let reward = serde_json::to_string(&tree_rewards(3, 9)).unwrap();
    let base = |adv: &str| {
        config(&format!(
            r#"{{"instance": {{"kind": "tree", "num_actions": 2, "depth": 3}},
                "adversary": {adv}, "episodes": 40, "algorithm": "omd-known-transition", "seed": 3}}"#
        ))
    };
    let a = run_experiment(&base(&format!(r#"{{"kind": "fixed", "reward": {reward}}}"#))).unwrap();
    let b = run_experiment(&base(&format!(r#"{{"kind": "degenerate-fixed", "reward": {reward}}}"#))).unwrap();
    assert_eq!(csv_bytes(&a.records), csv_bytes(&b.records));
}

fn small_mixture(seed: u64, algorithm: &str) -> ExperimentConfig {
    config(&format!(
        r#"{{"instance": {{"kind": "basis-mixture", "num_states": 4, "num_actions": 2,
                          "horizon": 3, "dim": 3, "norm_bound": 2}},
            "adversary": {{"kind": "oblivious-sequence"}},
            "episodes": 12, "algorithm": "{algorithm}", "seed": {seed}}}"#
    ))
}

#[test]
fn runs_are_deterministic_in_the_seed() {
    for alg in ["hf-o2ps", "greedy-no-bonus", "uniform-policy"] {
        let a = run_experiment(&small_mixture(7, alg)).unwrap();
        let b = run_experiment(&small_mixture(7, alg)).unwrap();
        assert_eq!(csv_bytes(&a.records), csv_bytes(&b.records), "{alg}");
        let c = run_experiment(&small_mixture(8, alg)).unwrap();
        assert_ne!(csv_bytes(&a.records), csv_bytes(&c.records), "{alg}");
    }
}

#[test]
fn cumulative_regret_telescopes() {
    let out = run_experiment(&small_mixture(2, "hf-o2ps")).unwrap();
    let mut acc = 0.0;
    for (r, c) in out.records.iter().zip(compute_regret(&out.records)) {
        acc += r.comparator_value - r.policy_value;
        assert!((r.cumulative_regret - acc).abs() < 1e-12);
        assert!((c - acc).abs() < 1e-12);
    }
    assert!((out.summary.final_regret - acc).abs() < 1e-12);
    let comp: f64 = out.records.iter().map(|r| r.comparator_value).sum();
    let learn: f64 = out.records.iter().map(|r| r.policy_value).sum();
    assert!((out.summary.comparator_total - comp).abs() < 1e-10);
    assert!((out.summary.learner_total - learn).abs() < 1e-10);
}

#[test]
fn records_survive_a_csv_round_trip() {
    let out = run_experiment(&small_mixture(4, "hf-o2ps")).unwrap();
    let bytes = csv_bytes(&out.records);
    let back = read_records_csv(bytes.as_slice()).unwrap();
    assert_eq!(back, out.records);
}

#[test]
fn empty_record_list_writes_the_header() {
    let bytes = csv_bytes(&[]);
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert_eq!(text.trim_end(), EpisodeRecord::COLUMNS.join(","));
    assert!(read_records_csv(bytes.as_slice()).unwrap().is_empty());
}

/// Checks the subset of JSON schema used by the summary schema.
fn validate(schema: &Value, v: &Value, path: &str) -> Result<(), String> {
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().map(|x| x.as_str().unwrap()).collect(),
            _ => return Err(format!("{path}: bad type keyword")),
        };
        let ok = types.iter().any(|t| match *t {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "number" => v.is_number(),
            "integer" => v.is_u64() || v.is_i64(),
            "null" => v.is_null(),
            "boolean" => v.is_boolean(),
            _ => false,
        });
        if !ok {
            return Err(format!("{path}: expected {types:?}, got {v}"));
        }
    }
    if let Some(c) = schema.get("const") {
        if c != v {
            return Err(format!("{path}: expected {c}"));
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(v) {
            return Err(format!("{path}: {v} not in enum"));
        }
    }
    if let (Some(min), Some(x)) = (schema.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            return Err(format!("{path}: {x} below {min}"));
        }
    }
    if let (Some(Value::Array(req)), Some(obj)) = (schema.get("required"), v.as_object()) {
        for key in req {
            if !obj.contains_key(key.as_str().unwrap()) {
                return Err(format!("{path}: missing {key}"));
            }
        }
    }
    if let (Some(Value::Object(props)), Some(obj)) = (schema.get("properties"), v.as_object()) {
        for (k, sub) in props {
            if let Some(x) = obj.get(k) {
                validate(sub, x, &format!("{path}.{k}"))?;
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, x) in arr.iter().enumerate() {
            validate(items, x, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

#[test]
fn summary_json_matches_schema_and_round_trips() {
    let schema: Value = serde_json::from_str(SUMMARY_SCHEMA).unwrap();
    for alg in ["hf-o2ps", "omd-known-transition", "uniform-policy", "greedy-no-bonus"] {
        let cfg = small_mixture(1, alg);
        let out = run_experiment(&cfg).unwrap();
        let doc = SummaryDocument::new(Some(&cfg), &out);
        let mut buf = Vec::new();
        write_summary_json(&mut buf, &doc).unwrap();
        let v: Value = serde_json::from_slice(&buf).unwrap();
        validate(&schema, &v, "$").unwrap();
        let back: SummaryDocument = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, doc);
    }
    // the validator does reject bad documents
    let bad = serde_json::json!({"format": "other", "summary": {}, "cumulative_regret": []});
    assert!(validate(&schema, &bad, "$").is_err());
}

#[test]
fn emitted_files_are_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_mixture(3, "hf-o2ps");
    let out = run_experiment(&cfg).unwrap();
    let written = emit_run(dir.path(), Some(&cfg), &out, &[OutputFormat::Csv, OutputFormat::Json, OutputFormat::Svg]).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["episodes.csv", "summary.json", "summary.schema.json", "regret.svg"]);
    let csv = std::fs::read(dir.path().join("episodes.csv")).unwrap();
    assert_eq!(read_records_csv(csv.as_slice()).unwrap().len(), 12);
    let svg = std::fs::read_to_string(dir.path().join("regret.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn small_sweep_aggregates_its_cells() {
    let base = small_mixture(10, "uniform-policy");
    let table = sweep(&base, SweepAxis::Episodes, &[5, 10, 20], 3).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert_eq!(table.cells.len(), 9);
    for row in &table.rows {
        let xs: Vec<f64> = table.cells.iter().filter(|c| c.value == row.value).map(|c| c.final_regret).collect();
        assert_eq!(row.runs, 3);
        assert!((row.mean_regret - xs.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    }
    // each cell is the run with its own seed
    let cell = table.cells.iter().find(|c| c.value == 10 && c.seed == 11).unwrap();
    let mut cfg = apply_axis(&base, SweepAxis::Episodes, 10).unwrap();
    cfg.seed = 11;
    assert_eq!(run_experiment(&cfg).unwrap().summary.final_regret, cell.final_regret);
    assert!(table.slope.is_some());
    let dir = tempfile::tempdir().unwrap();
    let written = emit_sweep(dir.path(), &table, &[OutputFormat::Csv, OutputFormat::Json]).unwrap();
    assert_eq!(written.len(), 2);
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("K,runs,mean_regret,stderr"));
}

#[test]
fn configs_reject_unknown_keys_and_bad_axes() {
    assert!(ExperimentConfig::from_json(
        r#"{"instance": {"kind": "tree", "num_actions": 2, "depth": 2},
            "adversary": {"kind": "zero"}, "episodes": 3, "algorithm": "hf-o2ps", "colour": 1}"#
    )
    .is_err());
    assert!(ExperimentConfig::from_json(
        r#"{"instance": {"kind": "tree", "num_actions": 2, "depth": 2, "width": 3},
            "adversary": {"kind": "zero"}, "episodes": 3, "algorithm": "hf-o2ps"}"#
    )
    .is_err());
    let tree = config(
        r#"{"instance": {"kind": "tree", "num_actions": 2, "depth": 2},
            "adversary": {"kind": "zero"}, "episodes": 3, "algorithm": "hf-o2ps"}"#,
    );
    assert!(apply_axis(&tree, SweepAxis::Dim, 3).is_err());
    assert!(apply_axis(&tree, SweepAxis::Episodes, 0).is_err());
    assert!(sweep(&tree, SweepAxis::Episodes, &[], 1).is_err());
}

#[test]
fn zero_reward_has_zero_regret() {
    let cfg = config(
        r#"{"instance": {"kind": "tree", "num_actions": 2, "depth": 3},
            "adversary": {"kind": "zero"}, "episodes": 10, "algorithm": "hf-o2ps"}"#,
    );
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.summary.final_regret, 0.0);
    assert!(out.records.iter().all(|r| r.realized_return == 0.0));
}
