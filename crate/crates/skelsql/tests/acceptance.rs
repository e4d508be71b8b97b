//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::MiniSpider;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use skelsql::core::encoder::PosTag;
use skelsql::core::hyperbolic::{mobius_add, norm, poincare_distance};
use skelsql::core::index::{IndexEntry, SkeletonIndex};
use skelsql::core::prompt::{filter_schema, threshold_with_closure};
use skelsql::core::relevance::{
    build_matching_matrix, desemanticize, fuse_relevance, make_skeleton, pos_vector, question_scores,
    schema_item_scores,
};
use skelsql::core::schema::{ColumnType, RawColumn, RawSchema};
use skelsql::core::{DatabaseSchema, Example, Matrix, ReferenceBackend, RelevanceParams, ValueStore};
use skelsql::harness::{build_index, evaluate_with, EvalReport, RunConfig};
use skelsql::llm::MockCompleter;
use skelsql_oracle::{brute, precise};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(started: Instant, limit: Duration, what: &str) -> Result<Duration, String> {
    let took = started.elapsed();
    ensure!(took < limit, "{what} took {took:?}, limit {limit:?}");
    Ok(took)
}

fn schema(db_id: &str, tables: &[&str], columns: &[(usize, &str, ColumnType)], pks: &[usize], fks: &[(usize, usize)]) -> DatabaseSchema {
    DatabaseSchema::from_raw(RawSchema {
        db_id: db_id.into(),
        tables: tables.iter().map(|t| t.to_string()).collect(),
        columns: columns.iter().map(|(t, n, ty)| RawColumn { table: *t, name: n.to_string(), column_type: *ty }).collect(),
        primary_keys: pks.to_vec(),
        foreign_keys: fks.to_vec(),
        db_path: String::new(),
    })
    .expect("valid schema")
}

fn point_in_ball(rng: &mut StdRng, dim: usize, max_norm: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = norm(&v);
    let r = rng.gen_range(0.0..max_norm);
    v.iter().map(|x| x * r / n).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn hyperbolic() -> Check {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst = [0.0f64; 5];
    for _ in 0..1000 {
        let dim = rng.gen_range(2..16);
        let x = point_in_ball(&mut rng, dim, 0.95);
        let y = point_in_ball(&mut rng, dim, 0.95);
        let zero = vec![0.0; dim];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let errs = [
            max_abs_diff(&mobius_add(&x, &zero).unwrap(), &x),
            max_abs_diff(&mobius_add(&neg, &x).unwrap(), &zero),
            (poincare_distance(&x, &y).unwrap() - poincare_distance(&y, &x).unwrap()).abs(),
            poincare_distance(&x, &x).unwrap().abs(),
            (poincare_distance(&zero, &y).unwrap() - precise::distance_from_origin(&y)).abs(),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    let took = within(started, Duration::from_secs(1), "1000 pairs")?;
    let limits = [1e-12, 1e-12, 1e-10, 1e-10, 1e-12];
    let names = ["right identity", "left inverse", "symmetry", "d(x,x)", "d(0,y) vs oracle"];
    for ((w, l), n) in worst.iter().zip(limits).zip(names) {
        ensure!(*w < l, "{n}: max error {w:e} exceeds {l:e}");
    }
    Ok(format!("1000 pairs, max errors {:.1e}/{:.1e}/{:.1e}/{:.1e}/{:.1e}, {took:.2?}", worst[0], worst[1], worst[2], worst[3], worst[4]))
}

fn item_value_sets(s: &DatabaseSchema, values: &ValueStore) -> Vec<BTreeSet<String>> {
    s.items
        .iter()
        .map(|item| {
            let cols: Vec<usize> =
                if item.is_table() { s.columns_of(item.id).map(|c| c.id).collect() } else { vec![item.id] };
            cols.iter().filter_map(|&c| values.column(&s.db_id, c)).flatten().cloned().collect()
        })
        .collect()
}

fn matching() -> Check {
    use ColumnType::*;
    let started = Instant::now();
    let s = schema(
        "pets",
        &["student", "has_pet", "pets"],
        &[(0, "StuID", Number), (0, "first_name", Text), (0, "city_code", Text), (2, "PetType", Text), (2, "pet_age", Number)],
        &[0],
        &[],
    );
    ensure!(s.len() == 8, "toy schema has {} items", s.len());
    let mut values = ValueStore::new();
    let mut rng = StdRng::seed_from_u64(3);
    let pool = ["dog", "cat", "bal", "first", "3", "2", "name", "pets"];
    for c in s.columns().map(|c| c.id).collect::<Vec<_>>() {
        let picked: Vec<&str> = pool.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
        values.insert_column(&s, c, picked, 1000);
    }
    let q: Vec<String> =
        ["first", "name", "of", "student", "with", "a", "dog", "pet", "age", "3"].iter().map(|t| t.to_string()).collect();
    let got = build_matching_matrix(&q, &s, &values);
    let want = brute::matching_matrix(&q, &s.item_names(), &item_value_sets(&s, &values));
    ensure!(got.shape() == (10, 8), "shape {:?}", got.shape());
    let mut nonzero = 0;
    for (i, row) in want.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            ensure!(got.get(i, j) == f64::from(v), "entry ({i}, {j}): {} vs oracle {v}", got.get(i, j));
            nonzero += usize::from(v > 0);
        }
    }
    let took = within(started, Duration::from_secs(1), "matching")?;
    Ok(format!("80/80 entries equal the span enumerator ({nonzero} nonzero), {took:.2?}"))
}

fn fusion() -> Check {
    let mut rng = StdRng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let d_p: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.gen_range(0.0..13.0)).collect()).collect();
        let m_m: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| f64::from(rng.gen_range(0u8..=2))).collect()).collect();
        let tags: Vec<PosTag> = (0..5).map(|_| [PosTag::Noun, PosTag::Number, PosTag::Other][rng.gen_range(0..3)]).collect();
        let beta = rng.gen_range(0.0..2.0);
        let alpha = rng.gen_range(0.0..1.0);

        let p = pos_vector(&tags, alpha);
        let (norm, r) = fuse_relevance(&Matrix::from_rows(d_p.clone()), &Matrix::from_rows(m_m.clone()), beta).unwrap();
        let q_sco = question_scores(&r, &p).unwrap();
        let items = schema_item_scores(&r);

        let want_p: Vec<f64> = tags.iter().map(|t| if *t == PosTag::Other { 0.0 } else { alpha }).collect();
        let oracle = brute::fuse(&d_p, &m_m, beta, &want_p);
        let diff = |m: &Matrix, w: &[Vec<f64>]| {
            w.iter().enumerate().flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (m.get(i, j) - v).abs())).fold(0.0, f64::max)
        };
        worst = worst
            .max(max_abs_diff(&p, &want_p))
            .max(diff(&norm, &oracle.d_p_norm))
            .max(diff(&r, &oracle.r))
            .max(max_abs_diff(&q_sco, &oracle.q_sco))
            .max(max_abs_diff(&items, &oracle.item_scores));
    }
    ensure!(worst <= 1e-10, "max deviation {worst:e} exceeds 1e-10");
    Ok(format!("50 instances, max deviation {worst:.1e}"))
}

fn skeleton() -> Check {
    let s = schema("concert_singer", &["singer"], &[(0, "Name", ColumnType::Text), (0, "Nationality", ColumnType::Text)], &[], &[]);
    let mut values = ValueStore::new();
    values.insert_column(&s, 1, ["Joe Sharp", "Timbaland", "Rose White"], 1000);
    values.insert_column(&s, 2, ["French", "Dutch", "American"], 1000);
    let q = Example::new("What are the names of the singers who are not French?", "SELECT 1", "concert_singer").unwrap();
    let params = RelevanceParams::default();
    ensure!((params.alpha, params.beta, params.tau) == (0.9, 0.5, 0.6), "defaults changed: {params:?}");
    let out = desemanticize(&q, &s, &values, &ReferenceBackend::default(), &params).map_err(|e| e.to_string())?;
    let text = out.skeleton.text();
    let masked: BTreeSet<&str> = out.skeleton.masked_positions.iter().map(|&i| q.question_tokens[i].as_str()).collect();
    ensure!(text == "what are the [MASK] of the [MASK] who are not [MASK] ?", "skeleton was {text:?}");
    ensure!(masked == BTreeSet::from(["names", "singers", "french"]), "masked {masked:?}");
    Ok(format!("{text:?}"))
}

fn retrieval() -> Check {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let unit = |rng: &mut StdRng| {
        let v: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let mut index = SkeletonIndex::new();
    for id in 0..1000u64 {
        index.add(IndexEntry::from_f64(id, &unit(&mut rng), format!("skeleton {id}"))).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.skix");
    index.save(&path).map_err(|e| e.to_string())?;
    let loaded = SkeletonIndex::load(&path).map_err(|e| e.to_string())?;
    ensure!(loaded == index, "loaded index differs from the saved one");
    let corpus: Vec<(u64, Vec<f32>)> = index.entries().iter().map(|e| (e.example_id, e.vector.clone())).collect();
    for qi in 0..50 {
        let q: Vec<f32> = unit(&mut rng).iter().map(|&x| x as f32).collect();
        let hits = index.search_knn(&q, 10).unwrap();
        let got: Vec<u64> = hits.iter().map(|n| n.example_id).collect();
        let want = brute::knn(&corpus, &q, 10);
        ensure!(got == want, "query {qi}: {got:?} vs oracle {want:?}");
        let again = loaded.search_knn(&q, 10).unwrap();
        ensure!(
            again.iter().zip(&hits).all(|(a, b)| a.example_id == b.example_id && a.similarity.to_bits() == b.similarity.to_bits()),
            "query {qi}: results changed after reload"
        );
    }
    let took = within(started, Duration::from_secs(2), "retrieval")?;
    Ok(format!("50/50 queries equal the oracle, reload bit-exact, {took:.2?}"))
}

fn concert_schema() -> DatabaseSchema {
    use ColumnType::*;
    schema(
        "concert_singer",
        &["singer", "concert"],
        &[
            (0, "Singer_ID", Number),
            (0, "Name", Text),
            (0, "Country", Text),
            (0, "Age", Number),
            (1, "concert_ID", Number),
            (1, "concert_Name", Text),
            (1, "Singer_ID", Number),
            (1, "Year", Number),
        ],
        &[0, 4],
        &[(6, 0)],
    )
}

fn thresholds() -> Check {
    let mut rng = StdRng::seed_from_u64(11);
    for case in 0..200 {
        let n = rng.gen_range(1..20);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.5)).collect();
        let (a, b) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let q = Example::new(&words.join(" "), "SELECT 1", "db").unwrap();
        let loose = make_skeleton(&q, &scores, lo);
        let strict = make_skeleton(&q, &scores, hi);
        ensure!(
            strict.masked_positions.iter().all(|p| loose.masked_positions.contains(p)),
            "tau case {case}: mask at {hi} is not within mask at {lo}"
        );
    }
    let s = concert_schema();
    for case in 0..200 {
        let scores: Vec<f64> = (0..s.len()).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let (a, b) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let loose = threshold_with_closure(&s, &scores, lo);
        let strict = threshold_with_closure(&s, &scores, hi);
        ensure!(strict.is_subset(&loose), "theta case {case}: kept set at {hi} is not within the one at {lo}");
        let f_lo = filter_schema(&s, &scores, lo).unwrap();
        let f_hi = filter_schema(&s, &scores, hi).unwrap();
        if !strict.is_empty() {
            ensure!(f_hi.kept.iter().all(|j| f_lo.contains(*j)), "theta case {case}: filtered sets not nested");
        }
        for f in [&f_lo, &f_hi] {
            ensure!(!f.kept.is_empty(), "theta case {case}: empty schema");
            for &j in &f.kept {
                if let Some(t) = s.items[j].parent_table {
                    ensure!(f.contains(t), "theta case {case}: column {j} kept without its table");
                }
            }
            for col in s.columns() {
                if col.is_primary_key && f.contains(col.parent_table.unwrap()) {
                    ensure!(f.contains(col.id), "theta case {case}: primary key {} dropped", col.id);
                }
            }
        }
    }
    Ok("200 tau cases and 200 theta cases nested; closure holds".into())
}

fn backend() -> ReferenceBackend {
    ReferenceBackend::new(64, 0)
}

fn run(cfg: &RunConfig, mock: &MockCompleter) -> Result<EvalReport, String> {
    evaluate_with(cfg, &backend(), mock).map_err(|e| e.to_string())
}

fn end_to_end() -> Check {
    let started = Instant::now();
    let sent = skelsql::net::requests_sent();
    let f = MiniSpider::new();
    let cfg = f.config();
    build_index(&cfg, &backend()).map_err(|e| e.to_string())?;
    let dev = f.dev_examples();
    ensure!(dev.len() == 20, "fixture has {} questions", dev.len());
    let dbs: BTreeSet<&str> = dev.iter().map(|e| e.db_id.as_str()).collect();
    ensure!(dbs.len() == 3, "fixture spans {} databases", dbs.len());

    let gold = MockCompleter::per_question(dev.iter().map(|e| (e.question_text.clone(), vec![e.gold_sql.clone()])));
    let r = run(&cfg, &gold)?;
    ensure!(r.summary.va_rate == 1.0 && r.summary.ex_rate == 1.0, "gold mock: VA {} EX {}", r.summary.va_rate, r.summary.ex_rate);

    let fail_once = MockCompleter::per_question(
        dev.iter().map(|e| (e.question_text.clone(), vec!["SELECT nothing FROM nowhere".to_string(), e.gold_sql.clone()])),
    );
    let r = run(&cfg, &fail_once)?;
    for rec in &r.records {
        ensure!(
            rec.outcome.attempts_count == 2 && rec.outcome.fallback_used,
            "fail-once question {}: {} attempts, fallback {}",
            rec.index,
            rec.outcome.attempts_count,
            rec.outcome.fallback_used
        );
    }
    ensure!(r.summary.va_rate == 1.0, "fail-once mock: VA {}", r.summary.va_rate);

    for max_fallbacks in [0, 3] {
        let mut bounded = cfg.clone();
        bounded.max_fallbacks = max_fallbacks;
        let r = run(&bounded, &MockCompleter::constant("SELEC"))?;
        ensure!(r.summary.va_rate == 0.0, "always-failing mock, max_fallbacks {max_fallbacks}: VA {}", r.summary.va_rate);
        for rec in &r.records {
            ensure!(
                rec.outcome.attempts_count <= max_fallbacks + 1,
                "question {} made {} attempts with max_fallbacks {max_fallbacks}",
                rec.index,
                rec.outcome.attempts_count
            );
        }
    }
    let took = within(started, Duration::from_secs(30), "end-to-end runs")?;
    let after = skelsql::net::requests_sent();
    ensure!(after == sent, "{} network requests were made", after - sent);
    Ok(format!("gold 1.0/1.0, fail-once 2 attempts each, bounded runs VA 0.0, no network, {took:.2?}"))
}

fn report_invariant() -> Check {
    let f = MiniSpider::new();
    let cfg = f.config();
    build_index(&cfg, &backend()).map_err(|e| e.to_string())?;
    let dev = f.dev_examples();
    let mut rng = StdRng::seed_from_u64(5);
    let mut reports = Vec::new();
    for _ in 0..3 {
        // each question gets gold, a valid but wrong query, or garbage
        let mock = MockCompleter::per_question(dev.iter().map(|e| {
            let reply = match rng.gen_range(0..3) {
                0 => e.gold_sql.clone(),
                1 => "SELECT 1".to_string(),
                _ => "SELEC".to_string(),
            };
            (e.question_text.clone(), vec![reply])
        }));
        let mut c = cfg.clone();
        c.max_fallbacks = 0;
        reports.push(run(&c, &mock)?);
    }
    reports.push(run(&cfg, &MockCompleter::constant("SELECT 1"))?);
    for (n, r) in reports.iter().enumerate() {
        let total = r.records.len();
        ensure!(total == r.summary.questions, "run {n}: {total} records, summary says {}", r.summary.questions);
        for rec in &r.records {
            ensure!(!rec.ex || rec.va, "run {n} question {}: ex without va", rec.index);
        }
        let va = r.records.iter().filter(|x| x.va).count();
        let ex = r.records.iter().filter(|x| x.ex).count();
        ensure!(r.summary.va_rate == va as f64 / total as f64, "run {n}: va_rate {} vs mean {va}/{total}", r.summary.va_rate);
        ensure!(r.summary.ex_rate == ex as f64 / total as f64, "run {n}: ex_rate {} vs mean {ex}/{total}", r.summary.ex_rate);
    }
    let rates: Vec<String> = reports.iter().map(|r| format!("{:.2}/{:.2}", r.summary.va_rate, r.summary.ex_rate)).collect();
    Ok(format!("{} runs, VA/EX {}", reports.len(), rates.join(", ")))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 8] = [
        ("hyperbolic geometry", hyperbolic),
        ("matching matrix vs span enumerator", matching),
        ("fusion and scores vs straight-line loops", fusion),
        ("skeleton of the singer question", skeleton),
        ("retrieval exactness and persistence", retrieval),
        ("threshold monotonicity and closure", thresholds),
        ("end-to-end mini-Spider runs", end_to_end),
        ("report invariant", report_invariant),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
