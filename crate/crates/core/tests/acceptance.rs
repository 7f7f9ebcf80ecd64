//! Acceptance suite. Runs every criterion at desk scale (500 scenes per
//! cell, 199 shifts) and prints one PASS/FAIL line per criterion; exits
//! non-zero if any criterion fails.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;

use markshift::experiments::{
    cell_seed, rejection_rate, run_study, variance_order_study, CellResult, CellSettings, StudyConfig, StudyKind,
    TestVariant, VarianceKind, DESK_REPS, DESK_SHIFTS,
};
use markshift::procgen::{generate_model, ModelId, ModelSpec};
use markshift::seeds;
use markshift::shifttest::{global_envelope_test, mc_pvalue};
use markshift::stats::{stat_kendall_fast, stat_kendall_reference};

const MASTER: u64 = 2718;

struct Cells {
    settings: CellSettings,
    done: HashMap<(ModelId, u64, TestVariant), CellResult>,
}

impl Cells {
    fn new() -> Self {
        let settings = CellSettings { n_reps: DESK_REPS, n_shifts: DESK_SHIFTS, ..Default::default() };
        Cells { settings, done: HashMap::new() }
    }

    fn get(&mut self, model: ModelId, alpha: f64, variant: TestVariant) -> &CellResult {
        let settings = &self.settings;
        self.done.entry((model, alpha.to_bits(), variant)).or_insert_with(|| {
            let t = Instant::now();
            let c = rejection_rate(model, alpha, variant, settings, cell_seed(MASTER, model, alpha, variant))
                .expect("cell runs");
            println!(
                "    {model} alpha={alpha:.1} {:<22} rate {:.3} [{:.3}, {:.3}] aborted {} ({:.0} s)",
                variant.label(),
                c.rate,
                c.lo,
                c.hi,
                c.aborted,
                t.elapsed().as_secs_f64()
            );
            c
        })
    }

    fn rate(&mut self, model: ModelId, alpha: f64, variant: TestVariant) -> f64 {
        self.get(model, alpha, variant).rate
    }
}

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, n: usize, pass: bool, detail: String) {
        println!("criterion {n:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(n);
        }
    }
}

fn ks_uniform(p: &[f64]) -> f64 {
    let mut v = p.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

fn mean_count(id: ModelId, alpha: f64, n: u64, tag: u64) -> f64 {
    let total: usize = (0..n)
        .map(|s| {
            let spec = ModelSpec::new(id, alpha, seeds::derive(MASTER, &[tag, s])).unwrap();
            generate_model(&spec).unwrap().pattern.len()
        })
        .sum();
    total as f64 / n as f64
}

fn main() {
    let started = Instant::now();
    let mut cells = Cells::new();
    let mut report = Report { failed: Vec::new() };
    use ModelId::*;
    use TestVariant::*;

    // 1 and 11 share the M1 PM-C (variance, Kendall) cell
    let t = Instant::now();
    let r1 = cells.rate(M1, 0.0, PmcVarianceKen);
    let secs = t.elapsed().as_secs_f64();
    report.line(
        1,
        (0.03..=0.08).contains(&r1) && secs <= 600.0,
        format!("M1 PM-C (variance, Ken) rate {r1:.3} in [0.03, 0.08], {secs:.0} s"),
    );

    let r2 = cells.rate(M2, 0.0, PmcVarianceKen);
    report.line(2, r2 >= 0.60, format!("M2 PM-C (variance, Ken) rate {r2:.3} >= 0.60"));

    let r3 = cells.rate(M3, 0.0, PcVariance);
    let r3n = cells.rate(M1, 0.0, PcVariance);
    report.line(
        3,
        r3 >= 0.80 && (0.02..=0.07).contains(&r3n),
        format!("M3 P-C (variance) rate {r3:.3} >= 0.80; M1 rate {r3n:.3} in [0.02, 0.07]"),
    );

    let nulls = [M1, M2, M4, M6];
    let torus: f64 = nulls.iter().map(|&m| cells.rate(m, 0.0, PcTorus)).sum::<f64>() / 4.0;
    let variance: f64 = nulls.iter().map(|&m| cells.rate(m, 0.0, PcVariance)).sum::<f64>() / 4.0;
    report.line(
        4,
        torus > variance,
        format!("P-C null average over M1, M2, M4, M6: torus {torus:.4} > variance {variance:.4}"),
    );

    let r5: Vec<f64> = [0.0, 0.4, 1.0].iter().map(|&a| cells.rate(M9, a, PmcVarianceKen)).collect();
    report.line(
        5,
        r5.iter().all(|&r| r <= 0.09),
        format!("M9 PM-C (variance, Ken) rates {r5:.3?} at alpha 0, 0.4, 1 all <= 0.09"),
    );

    let cov = cells.rate(M10, 1.0, PmcVarianceCov);
    let ken = cells.rate(M10, 1.0, PmcVarianceKen);
    report.line(
        6,
        cov <= 0.02 && ken > cov,
        format!("M10 alpha=1 PM-C (variance): cov {cov:.3} <= 0.02 and Ken {ken:.3} > cov"),
    );

    let r7: Vec<f64> = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0].iter().map(|&a| cells.rate(M9, a, PcVariance)).collect();
    let monotone = r7.windows(2).all(|w| w[1] >= w[0] - 0.05);
    report.line(
        7,
        monotone && r7[5] >= 0.95,
        format!("M9 P-C (variance) rates {r7:.3?} steps >= -0.05, last >= 0.95"),
    );

    let t = Instant::now();
    let sides = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
    let pc = variance_order_study(VarianceKind::PcMean, &sides, &[0.05], 2000, MASTER).unwrap();
    let pmc = variance_order_study(VarianceKind::PmcKendallEqual, &sides, &[0.05], 2000, MASTER).unwrap();
    let secs = t.elapsed().as_secs_f64();
    for c in [&pc, &pmc] {
        let v: Vec<String> = c.points.iter().map(|p| format!("{}:{:.5}", p.side, p.value)).collect();
        println!("    {:?} a^2 var: {}", c.kind, v.join(" "));
    }
    let q_pc = pc.max_min_ratio(0.05, &sides).unwrap();
    let q_pmc = pmc.max_min_ratio(0.05, &sides).unwrap();
    report.line(
        8,
        q_pc <= 1.5 && q_pmc <= 1.5 && secs <= 900.0,
        format!("variance order max/min: P-C {q_pc:.3}, PM-C Kendall equal {q_pmc:.3} (<= 1.5), {secs:.0} s"),
    );

    let target = 5f64.exp();
    let c1 = mean_count(M1, 0.0, 2000, 91);
    let c10 = mean_count(M10, 0.6, 2000, 92);
    report.line(
        9,
        (c1 / target - 1.0).abs() <= 0.02 && (c10 / target - 1.0).abs() <= 0.02,
        format!("mean counts M1 {c1:.2}, M10 alpha=0.6 {c10:.2} within 2% of {target:.2}"),
    );

    let mut rng = seeds::rng(MASTER, &[10]);
    let mut kendall_ok = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..400);
        let m: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let a = stat_kendall_fast(&m, &z).unwrap();
        let b = stat_kendall_reference(&m, &z).unwrap();
        kendall_ok += (a.to_bits() == b.to_bits()) as usize;
    }
    let mut erl_ok = 0;
    for _ in 0..100 {
        let n = rng.random_range(19..200);
        let all: Vec<f64> = (0..=n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let reps: Vec<Vec<f64>> = all[1..].iter().map(|&x| vec![x]).collect();
        let env = global_envelope_test(&all[..1], &reps).unwrap();
        let neg_ranks: Vec<f64> = all
            .iter()
            .map(|&x| {
                let le = all.iter().filter(|&&y| y <= x).count();
                let ge = all.iter().filter(|&&y| y >= x).count();
                -(le.min(ge) as f64)
            })
            .collect();
        erl_ok += (env.p_value == mc_pvalue(&neg_ranks).unwrap()) as usize;
    }
    report.line(
        10,
        kendall_ok == 1000 && erl_ok == 100,
        format!("fast Kendall bit matches {kendall_ok}/1000; ERL K=1 matches {erl_ok}/100"),
    );

    let p: Vec<f64> = cells.get(M1, 0.0, PmcVarianceKen).p_values.iter().flatten().copied().collect();
    let d = ks_uniform(&p);
    let crit = 1.628 / (p.len() as f64).sqrt();
    report.line(11, d < crit, format!("KS distance {d:.4} of {} null p-values < {crit:.4}", p.len()));

    let mut cfg = StudyConfig::desk(StudyKind::Overall, MASTER);
    cfg.n_reps = 60;
    cfg.roster = Some(vec![PmcVarianceKen, PcTorus]);
    cfg.workers = Some(1);
    let one = run_study(&cfg, None).unwrap();
    cfg.workers = Some(4);
    let four = run_study(&cfg, None).unwrap();
    let csv_same = one.output.to_csv().unwrap() == four.output.to_csv().unwrap();
    let json_same = serde_json::to_string(&one.output).unwrap() == serde_json::to_string(&four.output).unwrap();
    report.line(
        12,
        csv_same && json_same,
        format!("overall study (60 reps, 2 tests x 8 models) identical with 1 and 4 workers: csv {csv_same}, json {json_same}"),
    );

    println!("acceptance finished in {:.0} s", started.elapsed().as_secs_f64());
    if !report.failed.is_empty() {
        println!("failed criteria: {:?}", report.failed);
        std::process::exit(1);
    }
}
