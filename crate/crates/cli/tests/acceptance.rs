//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use graphecon_core::assumptions::{check_assumptions, AssumptionId, Witness};
use graphecon_core::auction::{run_auction, AuctionConfig};
use graphecon_core::economy::utility_of;
use graphecon_core::generators::{broker_economy, gen_asymmetric_broker, gen_breadth_chain, gen_broker, gen_epsilon_kko_broker, gen_pmax_chain, random_economy, RandomSpec};
use graphecon_core::io::{certificate_from_json, economy_from_json, parse_json};
use graphecon_core::oracles::{credit_resale_demand, linear_consumption_demand};
use graphecon_core::verifier::{brute_force_search, verify_approx_equilibrium, verify_resale_equilibrium, GridSpec};
use graphecon_core::{Economy, PriceSystem, Rational, ResaleKind, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn q(n: i64, d: i64) -> Rational {
    Rational::from_ratio(n, d)
}

fn graphecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphecon")).args(args).env_remove("GRAPHECON_NUMERIC_MODE").output().expect("binary runs")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn utilities<S: Scalar>(e: &Economy<S>, plan: &graphecon_core::TradePlan<S>) -> Vec<S> {
    (0..e.agents()).map(|i| utility_of(e, plan, i)).collect()
}

fn broker_fixture() -> Check {
    // α with 2α² = b, checked rather than computed.
    for (b, alpha) in [(q(1, 8), q(1, 4)), (q(1, 2), q(1, 2)), (q(2, 1), q(1, 1))] {
        assert_eq!(q(2, 1) * alpha.clone() * alpha.clone(), b);
        let (e, cert) = gen_broker(&b).map_err(|err| err.to_string())?;
        let report = verify_resale_equilibrium(&e, &cert.prices, &cert.plan, &q(0, 1)).map_err(|err| err.to_string())?;
        ensure(report.passed, || format!("b = {b}: certificate fails {:?}", report.failing_conditions()))?;
        let want = vec![alpha.clone(), q(2, 1) * (q(1, 1) - alpha.clone()), alpha];
        let got = utilities(&e, &cert.plan);
        ensure(got == want, || format!("b = {b}: utilities {got:?}, expected {want:?}"))?;
    }
    Ok("b in {1/8, 1/2, 2} exact".into())
}

fn asymmetric_fixture() -> Check {
    // 1 + 4b a perfect square: b = 3/4 gives 4, b = 2 gives 9.
    let mut notes = Vec::new();
    for (b, alpha) in [(q(3, 4), q(1, 2)), (q(2, 1), q(1, 1))] {
        assert_eq!(alpha.clone() * alpha.clone() + alpha.clone(), b);
        let (e, cert) = gen_asymmetric_broker(&b).map_err(|err| err.to_string())?;
        let report = verify_resale_equilibrium(&e, &cert.prices, &cert.plan, &q(0, 1)).map_err(|err| err.to_string())?;
        ensure(report.passed, || format!("b = {b}: certificate fails {:?}", report.failing_conditions()))?;
        let a2 = alpha.clone() * alpha;
        let want = vec![a2.clone(), q(1, 1) - a2, q(1, 1)];
        let got = utilities(&e, &cert.plan);
        ensure(got == want, || format!("b = {b}: utilities {got:?}, expected {want:?}"))?;
        let welfare = got.into_iter().fold(q(0, 1), |a, u| a + u);
        for pad in [q(1, 100), q(1, 20), q(1, 10)] {
            let target = q(1, 1) + q(3, 1) * pad.clone();
            ensure(welfare > target, || format!("b = {b}: welfare {welfare} <= {target}"))?;
            // The padded fixture's own welfare, for comparison.
            let (ke, kc) = gen_epsilon_kko_broker(&pad).map_err(|err| err.to_string())?;
            let kko = utilities(&ke, &kc.plan).into_iter().fold(q(0, 1), |a, u| a + u);
            ensure(welfare > kko, || format!("b = {b}: welfare {welfare} <= padded welfare {kko}"))?;
        }
        notes.push(format!("b = {b}: welfare {welfare}"));
    }
    Ok(notes.join(", "))
}

fn solver_end_to_end(dir: &Path) -> Check {
    let econ = dir.join("broker.json");
    let out = graphecon(&["gen", "--out", econ.to_str().unwrap(), "broker", "--b", "1/2"]);
    ensure(out.status.success(), || format!("gen failed: {}", String::from_utf8_lossy(&out.stderr)))?;
    let e: Economy<Rational> = economy_from_json(&parse_json(&std::fs::read_to_string(&econ).unwrap()).unwrap()).unwrap();
    let target = [q(1, 2), q(1, 1), q(1, 2)];
    let mut ratios = Vec::new();
    let mut problems = Vec::new();
    for (eps, eps_f) in [("1/10", 0.1), ("1/20", 0.05), ("1/100", 0.01)] {
        let cert = dir.join(format!("cert-{}.json", eps.replace('/', "_")));
        let report = dir.join(format!("report-{}.json", eps.replace('/', "_")));
        let start = Instant::now();
        let out = graphecon(&["solve", econ.to_str().unwrap(), "--eps", eps, "--out", cert.to_str().unwrap(), "--report", report.to_str().unwrap()]);
        let took = start.elapsed();
        ensure(out.status.success(), || format!("eps {eps}: solve exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))?;
        ensure(took < Duration::from_secs(30), || format!("eps {eps}: took {took:?}"))?;
        let c = certificate_from_json::<Rational>(&parse_json(&std::fs::read_to_string(&cert).unwrap()).unwrap()).unwrap();
        let v = verify_approx_equilibrium(&e, &c.prices, &c.plan, &Rational::parse_literal(eps).unwrap()).unwrap();
        ensure(v.passed, || format!("eps {eps}: output fails {:?}", v.failing_conditions()))?;
        let got = utilities(&e, &c.plan);
        let worst = got
            .iter()
            .zip(&target)
            .map(|(u, t)| {
                let (u, t) = (Scalar::to_f64(u), Scalar::to_f64(t));
                if u <= 0.0 {
                    f64::INFINITY
                } else {
                    (u / t).max(t / u)
                }
            })
            .fold(1.0, f64::max);
        let bound = (1.0 + eps_f).powi(3);
        if worst > bound {
            let shown: Vec<f64> = got.iter().map(Scalar::to_f64).collect();
            problems.push(format!("eps {eps}: utilities {shown:.4?} off by factor {worst:.4} > {bound:.4}"));
        }
        ratios.push(worst);
    }
    if ratios.windows(2).any(|w| w[1] > w[0]) {
        problems.push(format!("factors {ratios:.4?} not monotone"));
    }
    if problems.is_empty() {
        Ok(format!("factors {ratios:.4?}"))
    } else {
        Err(problems.join("; "))
    }
}

/// Runs the random bench suite once; criteria 4 and 5 read the same rows.
fn random_suite(dir: &Path) -> Result<(Vec<csv::StringRecord>, csv::StringRecord, Duration), String> {
    let path = dir.join("random.csv");
    let start = Instant::now();
    let out = graphecon(&["--mode", "float", "bench", "--suite", "random", "--count", "200", "--out", path.to_str().unwrap()]);
    let took = start.elapsed();
    // Guard exits make the bench exit 1; the rows are still written.
    ensure(matches!(out.status.code(), Some(0 | 1)), || format!("bench exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))?;
    let mut rdr = csv::Reader::from_path(&path).map_err(|err| err.to_string())?;
    let headers = rdr.headers().map_err(|err| err.to_string())?.clone();
    let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(|err| err.to_string())?;
    Ok((rows, headers, took))
}

fn col<'a>(headers: &csv::StringRecord, row: &'a csv::StringRecord, name: &str) -> &'a str {
    let idx = headers.iter().position(|h| h == name).unwrap_or_else(|| panic!("column {name}"));
    &row[idx]
}

fn invariant_suite(rows: &[csv::StringRecord], headers: &csv::StringRecord, took: Duration) -> Check {
    ensure(rows.len() == 200, || format!("{} rows", rows.len()))?;
    let mut bad = Vec::new();
    let mut ok = 0;
    for row in rows {
        let (m, l): (usize, usize) = (col(headers, row, "m").parse().unwrap(), col(headers, row, "l").parse().unwrap());
        ensure(m <= 6 && l <= 4, || format!("instance of size {m}x{l}"))?;
        if col(headers, row, "violations") != "0" {
            bad.push(format!("#{} has {} violations", col(headers, row, "index"), col(headers, row, "violations")));
        }
        if col(headers, row, "status") == "ok" {
            ok += 1;
        }
    }
    ensure(took < Duration::from_secs(300), || format!("took {took:?}"))?;
    ensure(bad.is_empty(), || bad.join(", "))?;
    Ok(format!("200 instrumented runs, 0 violations, {ok} terminated, {} guard exits, {:.1} s", 200 - ok, took.as_secs_f64()))
}

fn counter_bound(rows: &[csv::StringRecord], headers: &csv::StringRecord) -> Check {
    let mut worst: f64 = 0.0;
    for row in rows {
        let m: f64 = col(headers, row, "m").parse().unwrap();
        let l: f64 = col(headers, row, "l").parse().unwrap();
        let eps: f64 = col(headers, row, "eps").parse().unwrap();
        let raises: f64 = col(headers, row, "raises").parse().unwrap();
        let p_max: f64 = col(headers, row, "p_max").parse().unwrap();
        let bound = l * m * p_max.ln() / (1.0 + eps).ln() + m * l;
        ensure(raises <= bound + 1e-9, || format!("#{}: {raises} raises > {bound:.2}", col(headers, row, "index")))?;
        worst = worst.max(raises / bound);
    }
    Ok(format!("all {} runs within the bound, largest ratio {worst:.3}", rows.len()))
}

fn pmax_scaling() -> Check {
    let (alpha, eps) = (2.0, 0.1);
    let mut finals = Vec::new();
    for m in 3..=6 {
        let e = gen_pmax_chain(m, &alpha).map_err(|err| err.to_string())?;
        let mut cfg = AuctionConfig::new(eps);
        cfg.force = true;
        let res = run_auction(&e, cfg).map_err(|err| format!("m = {m}: {err}"))?;
        let rounds = res.stats.counters.rounds_completed as f64;
        let limit = 3.0 * m as f64 * alpha.ln() / (1.0f64 + eps).ln();
        ensure(rounds <= limit, || format!("m = {m}: {rounds} rounds > {limit:.1}"))?;
        finals.push(*res.prices.get(m - 1, m - 1));
    }
    for w in finals.windows(2) {
        let growth = w[1] / w[0];
        ensure(growth >= alpha / (1.0 + eps) && growth <= alpha * (1.0 + eps), || format!("p^m_m {finals:.3?}: growth {growth:.3} outside the bracket"))?;
    }
    Ok(format!("p^m_m {finals:.3?}"))
}

fn market_breadth() -> Check {
    let m = 6;
    let e = gen_breadth_chain(m, &q(1, 2)).map_err(|err| err.to_string())?;
    let res = run_auction(&e, AuctionConfig::new(q(1, 20))).map_err(|err| err.to_string())?;
    // Agent m gets good 1 from its neighbour, agent 1 gets good 2 from its neighbour.
    let far = res.plan.consumption(m - 1, m - 2, 0);
    let near = res.plan.consumption(0, 1, 1);
    ensure(far > q(0, 1) && near > q(0, 1), || format!("far end {far}, near end {near}"))?;
    Ok(format!("x(6,5,good 1) = {:.4}, x(1,2,good 2) = {:.4}", Scalar::to_f64(&far), Scalar::to_f64(&near)))
}

fn assumption_checker() -> Check {
    for b in [q(1, 8), q(1, 2), q(2, 1)] {
        let r = check_assumptions(&gen_broker(&b).unwrap().0);
        ensure(r.all_pass(), || format!("broker b = {b} fails {:?}", r.failing()))?;
    }
    for m in 3..=7 {
        let r = check_assumptions(&gen_breadth_chain(m, &q(1, 2)).unwrap());
        ensure(r.all_pass(), || format!("chain m = {m} fails {:?}", r.failing()))?;
    }
    let zero = check_assumptions(&broker_economy(q(0, 1), [q(1, 1), q(1, 1)]));
    let v = zero.verdict(AssumptionId::Participation);
    ensure(!v.passed, || "b = 0 broker passes participation".into())?;
    // The middle agent is agent 2 counting from one.
    ensure(v.witnesses.iter().any(|w| matches!(w, Witness::NonParticipant { agent: 1, .. })), || format!("witnesses {:?}", v.witnesses))?;
    // Two pairs; the first never sees good 2, the second never sees good 1.
    let one = q(1, 1);
    let z = q(0, 1);
    let split = Economy::new(
        4,
        3,
        [(0, 1), (2, 3)],
        vec![vec![one.clone(), one.clone(), z.clone()], vec![one.clone(), one.clone(), z.clone()], vec![one.clone(), z.clone(), one.clone()], vec![one.clone(), z.clone(), one.clone()]],
        vec![vec![one.clone(), q(2, 1), z.clone()], vec![q(2, 1), one.clone(), z.clone()], vec![one.clone(), z.clone(), q(2, 1)], vec![q(2, 1), z.clone(), one.clone()]],
        vec![z.clone(); 4],
        ResaleKind::Credit,
    )
    .map_err(|err| err.to_string())?;
    let r = check_assumptions(&split);
    ensure(r.all_pass(), || format!("two-component economy fails {:?}", r.failing()))?;
    ensure(r.excluded_goods == vec![(vec![0, 1], vec![2]), (vec![2, 3], vec![1])], || format!("excluded {:?}", r.excluded_goods))?;
    Ok("fixtures pass, b = 0 broker fails participation at agent 2, split economy passes".into())
}

fn brute_force_agreement() -> Check {
    let spec = RandomSpec { agents: 2, goods: 2, edge_prob: 0.0, endow_prob: 0.5, max_bound_quarters: 4 };
    let grid = GridSpec { depth: 160, total: 4.0 };
    let mut total_candidates = 0;
    let mut worst_gap: f64 = 0.0;
    for seed in 0..20u64 {
        let e: Economy<f64> = random_economy(seed, &spec);
        let found = brute_force_search(&e, &grid, 0.05).map_err(|err| err.to_string())?;
        ensure(!found.candidates.is_empty(), || format!("seed {seed}: no grid point within tolerance"))?;
        for c in &found.candidates {
            let v = verify_approx_equilibrium(&e, &c.prices, &c.plan, &0.1).unwrap();
            ensure(v.passed, || format!("seed {seed}: grid point {:?} fails {:?}", c.prices.rows(), v.failing_conditions()))?;
        }
        total_candidates += found.candidates.len();
        let res = run_auction(&e, AuctionConfig::new(0.01)).map_err(|err| format!("seed {seed}: {err}"))?;
        let sum: f64 = res.prices.rows().iter().flatten().sum();
        let solved = res.prices.scaled(&(grid.total / sum));
        let gap = found
            .candidates
            .iter()
            .map(|c| c.prices.rows().iter().flatten().zip(solved.rows().iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        ensure(gap <= grid.cell() + 1e-9, || format!("seed {seed}: solver prices {:?} are {gap:.4} from the nearest grid point", solved.rows()))?;
        worst_gap = worst_gap.max(gap);
    }
    Ok(format!("{total_candidates} grid points verified, solver at most {worst_gap:.4} from one (cell {})", grid.cell()))
}

fn scale_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let spec = RandomSpec { agents: 4, goods: 3, edge_prob: 0.4, endow_prob: 0.5, max_bound_quarters: 8 };
    for t in 0..50 {
        let e: Economy<Rational> = random_economy(1000 + t, &spec);
        let rows = (0..e.agents()).map(|_| (0..e.goods()).map(|_| q(rng.gen_range(1..=12), rng.gen_range(1..=4))).collect()).collect();
        let p = PriceSystem::new(rows);
        let i = rng.gen_range(0..e.agents());
        let beta = q(rng.gen_range(0..=20), rng.gen_range(1..=3));
        let x = linear_consumption_demand(&e, i, &p, &beta).map_err(|err| err.to_string())?;
        let y = credit_resale_demand(&e, i, &p, e.resale_bound(i), None).map_err(|err| err.to_string())?;
        for alpha in [q(1, 3), q(7, 1)] {
            let sp = p.scaled(&alpha);
            let xs = linear_consumption_demand(&e, i, &sp, &(beta.clone() * alpha.clone())).map_err(|err| err.to_string())?;
            ensure(xs == x, || format!("triple {t}: consumption changes under scale {alpha}"))?;
            let ys = credit_resale_demand(&e, i, &sp, &(e.resale_bound(i).clone() * alpha.clone()), None).map_err(|err| err.to_string())?;
            ensure(ys == y, || format!("triple {t}: resale changes under scale {alpha}"))?;
        }
    }
    Ok("50 triples, scales 1/3 and 7".into())
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    let mut report = |n: u8, name: &str, limit: Duration, run: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let mut outcome = run();
        let took = start.elapsed();
        if outcome.is_ok() && took > limit {
            outcome = Err(format!("took {took:?}, limit {limit:?}"));
        }
        match outcome {
            Ok(note) => println!("criterion {n:>2} {name}: PASS ({note}; {:.2} s)", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({why}; {:.2} s)", took.as_secs_f64());
            }
        }
    };
    let secs = Duration::from_secs;
    report(1, "broker fixture", secs(1), &mut broker_fixture);
    report(2, "asymmetric broker fixture", secs(1), &mut asymmetric_fixture);
    report(3, "solver end to end", secs(90), &mut || solver_end_to_end(dir.path()));
    let suite = random_suite(dir.path());
    report(4, "invariant suite", secs(300), &mut || {
        let (rows, headers, took) = suite.as_ref().map_err(Clone::clone)?;
        invariant_suite(rows, headers, *took)
    });
    report(5, "raise counter bound", secs(1), &mut || {
        let (rows, headers, _) = suite.as_ref().map_err(Clone::clone)?;
        counter_bound(rows, headers)
    });
    report(6, "p_max scaling", secs(60), &mut pmax_scaling);
    report(7, "market breadth", secs(30), &mut market_breadth);
    report(8, "assumption checker", secs(1), &mut assumption_checker);
    report(9, "brute-force agreement", secs(120), &mut brute_force_agreement);
    report(10, "scale invariance", secs(60), &mut scale_invariance);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
