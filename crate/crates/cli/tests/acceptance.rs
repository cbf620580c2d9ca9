//! The eight acceptance criteria, run in order. Each prints one result line
//! with its runtime and budget; the test fails if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use padkit::engine::{Database, Mutation, ResponseRelation};
use padkit::fixtures;
use padkit::ngram::{build_profile, compare, Gram, TemplateLog};
use padkit::privacy::{compute_k, detect, subsumes, AttrSet, PrivacyLimit, PrivacyProfile};
use padkit::sqlabs::{abstract_sql, RawQuery};
use padkit::workload::{
    run_census_scenario, run_differencing_scenario, run_hospital_scenario, Summary, ATTACK_LENGTHS,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn relation(columns: &[&str], rows: &[&[&str]]) -> ResponseRelation {
    ResponseRelation {
        columns: columns.iter().map(|s| s.to_string()).collect(),
        rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        source_query_id: "r".into(),
    }
}

fn attrs(names: &[&str]) -> AttrSet {
    names.iter().map(|s| s.to_string()).collect()
}

// 1 -------------------------------------------------------------------------

fn abstraction_fidelity() -> Check {
    let shown_single = "SELECT city FROM bankDatabase WHERE id = VAR_VAL";
    let shown_pair = "SELECT city FROM bankDatabase WHERE id = VAR_VAL  AND Name = VAR_VAL";
    let cases = [
        ("SELECT city FROM bankDatabase WHERE id = 2", shown_single),
        ("SELECT city FROM bankDatabase  WHERE id = 9", shown_single),
        (" SELECT city FROM bankDatabase  WHERE id = 3", shown_single),
        ("SELECT city FROM bankDatabase WHERE id =  3 AND Name = \"Alice\"", shown_pair),
    ];
    let expected = [
        "SELECT city FROM bankdatabase WHERE id = VAR_VAL",
        "SELECT city FROM bankdatabase WHERE id = VAR_VAL",
        "SELECT city FROM bankdatabase WHERE id = VAR_VAL",
        "SELECT city FROM bankdatabase WHERE id = VAR_VAL AND name = VAR_VAL",
    ];
    let mut templates = Vec::new();
    for ((sql, shown), want) in cases.iter().zip(expected) {
        let got = abstract_sql(sql).map_err(|e| e.to_string())?.template;
        ensure(got == want, || format!("{sql:?} -> {got:?}, expected {want:?}"))?;
        // The displayed template, canonicalised the same way, is a fixed point.
        let canon = abstract_sql(shown).map_err(|e| e.to_string())?.template;
        ensure(canon == got, || format!("shown template canonicalises to {canon:?}"))?;
        templates.push(got);
    }
    ensure(templates[0] == templates[1] && templates[1] == templates[2], || "rows 1-3 differ".into())?;
    ensure(templates[2] != templates[3], || "row 4 collapsed into rows 1-3".into())?;
    Ok("4 exact templates, rows 1-3 identical".into())
}

// 2 -------------------------------------------------------------------------

fn brute_force_k(rel: &ResponseRelation, q: &AttrSet) -> Option<usize> {
    let idx: Vec<usize> = (0..rel.columns.len()).filter(|&i| q.contains(&rel.columns[i])).collect();
    if idx.is_empty() {
        return None;
    }
    let key = |r: &Vec<String>| idx.iter().map(|&i| r[i].clone()).collect::<Vec<_>>();
    rel.rows
        .iter()
        .map(|r| rel.rows.iter().filter(|s| key(s) == key(r)).count())
        .min()
}

fn k_computation() -> Check {
    let age_zip = attrs(&["age", "zipcode"]);
    let table2 = relation(
        &["age", "zipcode", "salary"],
        &[&[">55", "989234", "60K"], &[">55", "989234", "92K"], &[">55", "989234", "77K"]],
    );
    let table3 = relation(
        &["age", "zipcode", "county", "salary"],
        &[
            &[">55", "839523", "Cork", "60K"],
            &[">55", "839523", "Cork", "92K"],
            &[">55", "839523", "Cork", "77K"],
            &[">45", "839523", "Cork", "50K"],
            &[">35", "839777", "Dublin", "60K"],
            &[">35", "839777", "Dublin", "63K"],
            &[">35", "839777", "Dublin", "85K"],
            &[">35", "839777", "Dublin", "70K"],
            &[">35", "839777", "Dublin", "60K"],
        ],
    );
    let table4 = relation(
        &["age", "zipcode", "salary"],
        &[
            &[">50", "839567", "72K"],
            &[">50", "839567", "62K"],
            &[">50", "839567", "92K"],
            &[">50", "839567", "77K"],
            &[">50", "839567", "68K"],
        ],
    );
    let single = relation(&["dob", "city", "diagnoses"], &[&["1920", "Cork", "Heart Disease"]]);

    let checks = [
        ("table 2", compute_k(&table2, &age_zip), 3),
        ("table 3", compute_k(&table3, &attrs(&["age", "zipcode", "county"])), 1),
        ("table 4", compute_k(&table4, &age_zip), 5),
        ("singleton response", compute_k(&single, &attrs(&["dob", "city"])), 1),
    ];
    for (name, got, want) in checks {
        ensure(got == Some(want), || format!("{name}: k = {got:?}, expected {want}"))?;
    }

    // The same responses produced by the engine from the bundled fixtures.
    let db = Database::new()
        .with_table(fixtures::temp_table())
        .with_table(fixtures::hospital());
    let run = |sql: &str| db.execute(&RawQuery::new("q", "u", 0, sql)).map_err(|e| e.to_string());
    let female = run("SELECT age, zipcode FROM temp_table WHERE gender = 'female'")?;
    ensure(compute_k(&female, &age_zip) == Some(5), || format!("fixture table 4: {female:?}"))?;
    // The run-time log reaches this query after the twin Cork 1920 record is deleted.
    let db = db
        .apply(&Mutation::Delete {
            table: "hospitaldb".into(),
            predicate: [("dob", "1920"), ("city", "Cork"), ("diagnoses", "Anaemia")]
                .map(|(a, v)| (a.to_string(), v.to_string()))
                .to_vec(),
        })
        .map_err(|e| e.to_string())?;
    let run = |sql: &str| db.execute(&RawQuery::new("q", "u", 0, sql)).map_err(|e| e.to_string());
    let undetected = run("SELECT dob, city, diagnoses FROM hospitaldb WHERE dob = '1920' AND city = 'Cork'")?;
    ensure(compute_k(&undetected, &attrs(&["dob", "city"])) == Some(1), || {
        format!("fixture singleton: {undetected:?}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let names = ["a", "b", "c", "d"];
    for case in 0..1000 {
        let width = rng.gen_range(1..=4);
        let columns: Vec<&str> = names.choose_multiple(&mut rng, width).copied().collect();
        let domain = rng.gen_range(1..=4);
        let rows: Vec<Vec<String>> = (0..rng.gen_range(0..=20))
            .map(|_| (0..width).map(|_| rng.gen_range(0..domain).to_string()).collect())
            .collect();
        let rel = ResponseRelation {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows,
            source_query_id: format!("r{case}"),
        };
        let q: AttrSet = ["a", "b", "c", "d", "e"]
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .map(|s| s.to_string())
            .collect();
        let (got, want) = (compute_k(&rel, &q), brute_force_k(&rel, &q));
        ensure(got == want, || format!("case {case}: {got:?} vs oracle {want:?} on {rel:?} / {q:?}"))?;
    }
    Ok("tables 2/3/4/singleton give 3/1/5/1; oracle agrees on 1000 relations".into())
}

// 3 -------------------------------------------------------------------------

fn random_limit(rng: &mut ChaCha8Rng) -> PrivacyLimit {
    let mut q: Vec<&str> = ["age", "zipcode", "county", "gender"]
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(0.5))
        .collect();
    if q.is_empty() {
        q.push("age");
    }
    PrivacyLimit::new(rng.gen_range(1..=6), q)
}

fn subsumption_algebra() -> Check {
    let norm = PrivacyLimit::new(3, ["age", "zipcode"]);
    let run = PrivacyLimit::new(5, ["age", "zipcode"]);
    ensure(subsumes(&norm, &run), || "[[3,{age,zipcode}]] does not subsume [[5,{age,zipcode}]]".into())?;
    ensure(!subsumes(&run, &norm), || "[[5,..]] subsumes [[3,..]]".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let limits: Vec<PrivacyLimit> = (0..rng.gen_range(0..=10)).map(|_| random_limit(&mut rng)).collect();
        for a in &limits {
            ensure(subsumes(a, a), || format!("case {case}: {a} not reflexive"))?;
            for b in &limits {
                for c in &limits {
                    if subsumes(a, b) && subsumes(b, c) {
                        ensure(subsumes(a, c), || format!("case {case}: {a} {b} {c} not transitive"))?;
                    }
                }
            }
        }
        let p = PrivacyProfile::from_limits(limits);
        let anomalies = detect(&p, &p);
        ensure(anomalies.is_empty(), || format!("case {case}: detect(P,P) = {anomalies:?}"))?;
    }
    Ok("example holds; preorder and detect(P,P)=∅ on 1000 profiles".into())
}

// 4 -------------------------------------------------------------------------

fn differencing() -> Check {
    let result = run_differencing_scenario().map_err(|e| e.to_string())?;
    let Summary::Differencing(s) = &result.summary else {
        return Err("wrong summary kind".into());
    };
    let q = &s.queries;
    ensure(q.len() == 3, || format!("{} queries", q.len()))?;
    ensure(q[0].suppressed, || "Q1 released".into())?;
    ensure(!q[1].suppressed && q[1].rows == 14, || format!("Q2: {:?}", q[1]))?;
    ensure(s.residual == ["150k"], || format!("residual {:?}", s.residual))?;

    let table = fixtures::updated_table_smp();
    let city = table.column_index("city").ok_or("no city column")?;
    let salary = table.column_index("salary").ok_or("no salary column")?;
    let rennes: Vec<&Vec<String>> = table.rows.iter().filter(|r| r[city] == "Rennes").collect();
    ensure(rennes.len() == 1, || format!("{} Rennes rows", rennes.len()))?;
    ensure(rennes[0][salary] == s.residual[0], || format!("Rennes salary {}", rennes[0][salary]))?;
    ensure(s.attributed_to.is_some(), || "residual not attributed".into())?;
    ensure(result.passed(), || format!("{:?}", result.first_failure()))?;
    Ok(format!("Q1 suppressed, Q2 14 rows, residual {{150k}} -> {}", s.attributed_to.as_deref().unwrap_or("?")))
}

// 5 -------------------------------------------------------------------------

fn hospital() -> Check {
    let result = run_hospital_scenario(7).map_err(|e| e.to_string())?;
    let Summary::Hospital(s) = &result.summary else {
        return Err("wrong summary kind".into());
    };
    let cat1: Vec<_> = s.injected.iter().filter(|a| a.category == 1).collect();
    let cat2: Vec<_> = s.injected.iter().filter(|a| a.category == 2).collect();
    ensure(cat1.len() == 5 && cat2.len() == 10, || format!("{} + {} injected", cat1.len(), cat2.len()))?;
    for a in &cat1 {
        ensure(a.ngram && a.privacy, || format!("category 1 {} missed: {a:?}", a.query_id))?;
    }
    let singleton = s
        .injected
        .iter()
        .find(|a| a.sql.contains("dob = '1920' AND city = 'Cork'"))
        .ok_or("singleton query not injected")?;
    ensure(singleton.privacy && !singleton.ngram, || format!("singleton: {singleton:?}"))?;

    // Recount n-gram detection from the logs rather than the summary.
    let norm = TemplateLog::from_queries(&result.normative_log).map_err(|e| e.to_string())?;
    let run = TemplateLog::from_queries(&result.run_log).map_err(|e| e.to_string())?;
    let flagged = run.flagged_positions(&norm.profile(result.n).map_err(|e| e.to_string())?);
    let position = |id: &str| result.run_log.iter().position(|q| q.id == id);
    for a in &s.injected {
        let hit = position(&a.query_id).is_some_and(|p| flagged.contains(&p));
        ensure(hit == a.ngram, || format!("{}: recount {hit}, summary {}", a.query_id, a.ngram))?;
    }

    let overall = s.injected.iter().filter(|a| a.ngram || a.privacy).count();
    ensure(overall >= 13, || format!("overall {overall}/15"))?;
    ensure(result.passed(), || format!("{:?}", result.first_failure()))?;
    Ok(format!(
        "n-gram {}/15, privacy {}/15, overall {overall}/15",
        s.ngram_detected, s.privacy_detected
    ))
}

// 6 -------------------------------------------------------------------------

fn census() -> Check {
    let result = run_census_scenario(7).map_err(|e| e.to_string())?;
    let Summary::Census(s) = &result.summary else {
        return Err("wrong summary kind".into());
    };
    ensure(result.n == 4, || format!("n = {}", result.n))?;
    ensure(s.attacks.len() == 5, || format!("{} attacks", s.attacks.len()))?;

    let norm = TemplateLog::from_queries(&result.normative_log).map_err(|e| e.to_string())?;
    let norm_profile = norm.profile(4).map_err(|e| e.to_string())?;
    let mut counts = Vec::new();
    for (a, &len) in s.attacks.iter().zip(&ATTACK_LENGTHS) {
        ensure(a.length == len, || format!("attack {}: length {} vs {len}", a.attack, a.length))?;
        let script: Vec<RawQuery> = result.run_log[a.span.0..=a.span.1]
            .iter()
            .filter(|q| q.principal == format!("insider-{}", a.attack))
            .cloned()
            .collect();
        ensure(script.len() == len, || format!("attack {}: span holds {} script queries", a.attack, script.len()))?;
        let own = TemplateLog::from_queries(&script).map_err(|e| e.to_string())?;
        let report = compare(&own.profile(4).map_err(|e| e.to_string())?, &norm_profile).map_err(|e| e.to_string())?;
        ensure(!report.is_empty(), || format!("attack {}: no mismatches", a.attack))?;
        counts.push(report.len());
    }

    let run = TemplateLog::from_queries(&result.run_log).map_err(|e| e.to_string())?;
    let report = compare(&run.profile(4).map_err(|e| e.to_string())?, &norm_profile).map_err(|e| e.to_string())?;
    for (gram, first) in &report.missing {
        let first = first.ok_or_else(|| format!("{gram:?} has no first index"))?;
        ensure(s.attacks.iter().any(|a| (a.span.0..=a.span.1).contains(&first)), || {
            format!("{gram:?} first seen at {first}, outside every script")
        })?;
    }
    Ok(format!("mismatches per script {counts:?}, {} total, all inside spans", report.len()))
}

// 7 -------------------------------------------------------------------------

fn window_oracle(seq: &[String], n: usize) -> BTreeSet<Gram> {
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i + n <= seq.len() {
        out.insert(seq[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn ngram_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let seq = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let alphabet = rng.gen_range(1..=8);
        (0..rng.gen_range(0..=200))
            .map(|_| format!("T{}", rng.gen_range(0..alphabet)))
            .collect()
    };
    for case in 0..1000 {
        let n = rng.gen_range(1..=8);
        let run = seq(&mut rng);
        let norm = seq(&mut rng);
        let rp = build_profile(&run, n).map_err(|e| e.to_string())?;
        let np = build_profile(&norm, n).map_err(|e| e.to_string())?;
        let (ro, no) = (window_oracle(&run, n), window_oracle(&norm, n));
        ensure(rp.grams() == &ro, || format!("case {case}: profile differs from oracle"))?;
        ensure(np.grams() == &no, || format!("case {case}: profile differs from oracle"))?;
        let missing: BTreeSet<Gram> = compare(&rp, &np).map_err(|e| e.to_string())?.missing.into_keys().collect();
        let expected: BTreeSet<Gram> = ro.difference(&no).cloned().collect();
        ensure(missing == expected, || format!("case {case}: compare differs from set difference"))?;
        ensure(compare(&rp, &rp).map_err(|e| e.to_string())?.is_empty(), || {
            format!("case {case}: self comparison not empty")
        })?;
    }
    Ok("profiles, differences and self-comparison agree on 1000 sequences".into())
}

// 8 -------------------------------------------------------------------------

fn census_report(seed: u64) -> Result<(Vec<u8>, Vec<u8>), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_padkit"))
        .args(["scenario", "census", "--seed", &seed.to_string(), "--out"])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("seed {seed}: exit {:?}", out.status.code()))?;
    let file = std::fs::read(dir.path().join("report.json")).map_err(|e| e.to_string())?;
    Ok((out.stdout, file))
}

fn determinism() -> Check {
    let seeds = [7u64, 1, 424242];
    let mut reports = BTreeMap::new();
    for seed in seeds {
        let first = census_report(seed)?;
        let second = census_report(seed)?;
        ensure(first == second, || format!("seed {seed}: reports differ"))?;
        reports.insert(seed, first.1);
    }
    ensure(reports[&7] != reports[&1], || "seed has no effect".into())?;
    Ok(format!("byte-identical reports for seeds {seeds:?}"))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Check, Option<Duration>); 8] = [
        ("1 abstraction fidelity", abstraction_fidelity, Some(Duration::from_secs(1))),
        ("2 k computation", k_computation, Some(Duration::from_secs(10))),
        ("3 subsumption algebra", subsumption_algebra, Some(Duration::from_secs(10))),
        ("4 differencing scenario", differencing, Some(Duration::from_secs(1))),
        ("5 hospital scenario", hospital, Some(Duration::from_secs(30))),
        ("6 census scenario", census, Some(Duration::from_secs(60))),
        ("7 n-gram oracle equivalence", ngram_oracle, Some(Duration::from_secs(30))),
        ("8 determinism", determinism, None),
    ];
    let mut failures = Vec::new();
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout).unwrap();
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if budget.map_or(true, |b| elapsed <= b) => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over budget")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failures.push(name);
        }
        // Written past the harness capture so the lines always show.
        writeln!(
            stdout,
            "acceptance {status} [{name}] {:.2}s (budget {}): {detail}",
            elapsed.as_secs_f64(),
            budget.map_or("none".to_string(), |b| format!("{}s", b.as_secs()))
        )
        .unwrap();
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
