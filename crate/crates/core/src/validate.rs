//! Validation commands: randomized solver-versus-oracle equivalence,
//! block-race statistics, and the pathwise drift audit.
//!
//! Each command returns a [`ValidationReport`] of named checks. A failed
//! oracle check carries the instance serialized as JSON so the exact
//! case can be replayed.

use crate::bounds::{drift_report, lemma1_h};
use crate::config::{ExperimentConfig, PolicySpec};
use crate::consensus;
use crate::dpra::midpoint_partition;
use crate::env::{
    ApParams, ChannelParams, GatewayParams, Scenario, SlotRealization,
};
use crate::error::{Result, SimError};
use crate::harness::{run_cell_observed, CellKey};
use crate::profile::{LayerProfile, ModelProfile};
use crate::queues::AuxQueues;
use crate::rng;
use crate::solver::fa::solve_fa;
use crate::solver::fbloc::solve_fbloc;
use crate::solver::partition::{exhaustive_partition, solve_partition};
use crate::solver::{
    BlockModel, Decision, LyapunovParams, ObjectiveSpec, Slot, SolveStats,
};
use crate::stats::{binomial_three_sigma_ok, exponential_cdf, ks_test};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One named pass/fail line of a validation command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// A validation command's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub kind: String,
    pub checks: Vec<CheckLine>,
    /// First failing instance, serialized as JSON, for replay.
    pub failing_instance: Option<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Human-readable report body, one line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("[{tag}] {}: {}\n", c.name, c.detail));
        }
        out
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckLine { name: name.into(), passed, detail });
    }
}

/// A randomized small instance: everything needed to replay one oracle
/// comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleInstance {
    pub scenario: Scenario,
    pub realization: SlotRealization,
    pub queues: AuxQueues,
    pub v: f64,
    pub fixed_gamma: Option<f64>,
    pub l: Vec<usize>,
}

fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo * (hi / lo).powf(rng::uniform01(r))
}

/// Draws a small instance: at most 3 gateways on at most 2 APs, at most
/// 4 devices, models of at most 5 layers.
pub fn gen_instance(r: &mut ChaCha8Rng) -> OracleInstance {
    let j = r.gen_range(1..=2usize);
    let m = r.gen_range(j..=3usize);
    let n = r.gen_range(m..=4usize);
    // Cover every AP and every gateway, then attach the rest at random.
    let gateway_ap: Vec<usize> =
        (0..m).map(|g| if g < j { g } else { r.gen_range(0..j) }).collect();
    let device_gateway: Vec<usize> =
        (0..n).map(|d| if d < m { d } else { r.gen_range(0..m) }).collect();
    let mut gateway_devices = vec![Vec::new(); m];
    for (d, &g) in device_gateway.iter().enumerate() {
        gateway_devices[g].push(d);
    }
    let mut ap_gateways = vec![Vec::new(); j];
    for (g, &a) in gateway_ap.iter().enumerate() {
        ap_gateways[a].push(g);
    }

    let n_models = r.gen_range(1..=2usize);
    let models: Vec<ModelProfile> = (0..n_models)
        .map(|i| {
            let layers = (0..r.gen_range(1..=5usize))
                .map(|_| LayerProfile {
                    flops: log_uniform(r, 1.0, 100.0).round().max(1.0),
                    output_bits: log_uniform(r, 1.0, 64.0).round().max(1.0),
                })
                .collect();
            ModelProfile::from_layers(&format!("rand{i}"), layers)
        })
        .collect();
    let device_model: Vec<usize> = (0..n).map(|_| r.gen_range(0..n_models)).collect();
    let arrival_mean: Vec<f64> = (0..n).map(|_| rng::uniform(r, 0.5, 4.0)).collect();

    let gateways: Vec<GatewayParams> = (0..m)
        .map(|_| GatewayParams {
            phi_g: log_uniform(r, 1.0, 8.0),
            f_g: log_uniform(r, 1.0, 16.0),
            v_g: log_uniform(r, 1e-3, 1e-1),
            tx_power: rng::uniform(r, 0.1, 1.0),
            dist: rng::uniform(r, 1.0, 4.0),
            e_g_max: log_uniform(r, 5.0, 200.0),
        })
        .collect();
    let aps: Vec<ApParams> = (0..j)
        .map(|_| {
            let f_max = log_uniform(r, 8.0, 64.0);
            ApParams {
                phi_a: log_uniform(r, 4.0, 32.0),
                v_a: log_uniform(r, 1e-4, 1e-2),
                f_max,
                f_min: 1e-3 * f_max,
                e_a_max: log_uniform(r, 0.5, 50.0),
            }
        })
        .collect();

    let g_spec = if rng::uniform01(r) < 0.5 {
        consensus::GSpec::Affine { kappa: log_uniform(r, 2.0, 200.0) }
    } else {
        consensus::GSpec::Log {
            c1: rng::uniform(r, 1.0, 10.0),
            c2: log_uniform(r, 1e-3, 1e-1),
        }
    };
    let scenario = Scenario {
        device_gateway,
        gateway_ap,
        gateway_devices,
        ap_gateways,
        models,
        device_model,
        arrival_mean,
        gateways,
        aps,
        ap_type: vec![0; j],
        ap_type_names: vec!["only".into()],
        channel: ChannelParams {
            h0: 1.0,
            d0: 1.0,
            nu: 2.0,
            bandwidth: log_uniform(r, 4.0, 16.0),
            n0: log_uniform(r, 1e-3, 1e-1),
            interference_mean: 0.0,
            interference_std: 0.0,
        },
        reputation: crate::consensus::ReputationParams {
            alpha: log_uniform(r, 1e-3, 5e-2),
            beta: rng::uniform(r, -3.0, 0.0),
            g_spec,
            p0_complement: 0.1,
            u_min: 5.0,
            u_max: 15.0,
        },
    };
    scenario.validate().expect("generated scenario is structurally valid");

    let realization = SlotRealization {
        d: (0..n).map(|_| rng::uniform(r, 0.2, 4.0)).collect(),
        rho: (0..m).map(|_| rng::uniform(r, 0.2, 3.0)).collect(),
        eta: (0..m)
            .map(|_| rng::uniform(r, 0.0, 0.2) * scenario.channel.n0 * scenario.channel.bandwidth)
            .collect(),
        e_g: scenario
            .gateways
            .iter()
            .map(|g| g.e_g_max * log_uniform(r, 0.02, 1.0))
            .collect(),
        e_a: scenario
            .aps
            .iter()
            .map(|a| a.e_a_max * log_uniform(r, 0.02, 1.0))
            .collect(),
    };
    let queues = AuxQueues {
        q: (0..j).map(|_| rng::uniform(r, 0.0, 200.0)).collect(),
        s: (0..j).map(|_| rng::uniform(r, 0.0, 200.0)).collect(),
    };
    let v = log_uniform(r, 1.0, 1e4);
    let fixed_gamma =
        if rng::uniform01(r) < 0.2 { Some(log_uniform(r, 1.0, 100.0)) } else { None };
    let l: Vec<usize> = (0..n)
        .map(|dev| r.gen_range(1..=scenario.layers_of(dev)))
        .collect();
    OracleInstance { scenario, realization, queues, v, fixed_gamma, l }
}

/// Per-axis grid size so the joint grid stays near `total` points.
fn grid_per_axis(dims: usize, total: usize) -> usize {
    let g = (total as f64).powf(1.0 / dims as f64).floor() as usize;
    g.max(2)
}

/// Best feasible objective over a joint grid of block frequencies.
fn grid_best_fbloc(
    slot: &Slot,
    dec: &Decision,
    queues: &AuxQueues,
    spec: &ObjectiveSpec,
    v: f64,
) -> Option<f64> {
    let j = slot.scn.n_aps();
    let g = grid_per_axis(j, 1000);
    let mut idx = vec![0usize; j];
    let mut best: Option<f64> = None;
    loop {
        let mut cand = dec.clone();
        for (jj, &k) in idx.iter().enumerate() {
            cand.f_bloc[jj] = slot.scn.aps[jj].f_max * k as f64 / (g - 1) as f64;
        }
        if let (Ok(rep), Ok(obj)) =
            (slot.feasibility(&cand, spec), slot.objective(&cand, queues, spec, v))
        {
            if rep.worst() <= 1e-9 && obj.is_finite() {
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // Odometer increment over the joint grid.
        let mut pos = 0;
        loop {
            if pos == j {
                return best;
            }
            idx[pos] += 1;
            if idx[pos] < g {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Best feasible objective over a joint grid of inference shares.
fn grid_best_fa(
    slot: &Slot,
    dec: &Decision,
    queues: &AuxQueues,
    spec: &ObjectiveSpec,
    v: f64,
) -> Option<f64> {
    let m = slot.scn.n_gateways();
    let g = grid_per_axis(m, 1000);
    let mut idx = vec![0usize; m];
    let mut best: Option<f64> = None;
    loop {
        let mut cand = dec.clone();
        for (mm, &k) in idx.iter().enumerate() {
            let cap = slot.scn.aps[slot.scn.gateway_ap[mm]].f_max;
            // Skip zero: a zero share stalls any offloaded suffix.
            cand.f_a[mm] = cap * (k + 1) as f64 / g as f64;
        }
        if let (Ok(rep), Ok(obj)) =
            (slot.feasibility(&cand, spec), slot.objective(&cand, queues, spec, v))
        {
            if rep.worst() <= 1e-9 && obj.is_finite() {
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        let mut pos = 0;
        loop {
            if pos == m {
                return best;
            }
            idx[pos] += 1;
            if idx[pos] < g {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Relative one-sided gap of the solver objective above a reference.
fn rel_gap(solver: f64, reference: f64) -> f64 {
    (solver - reference) / reference.abs().max(1.0)
}

/// Randomized solver-versus-oracle equivalence on small instances.
///
/// For each instance the continuous solvers must come within `1e-6`
/// relative objective of the best point of a joint grid (the grid is a
/// feasible competitor, so the exact solver may only tie or win), and
/// the partition solver must return exactly the exhaustive optimum.
pub fn validate_oracle(instances: usize, seed: u64) -> Result<ValidationReport> {
    let mut report = ValidationReport {
        kind: "oracle".into(),
        checks: Vec::new(),
        failing_instance: None,
    };
    let params = LyapunovParams::default();
    let mut worst_fbloc = f64::NEG_INFINITY;
    let mut worst_fa = f64::NEG_INFINITY;
    let mut partition_mismatches = 0usize;
    let mut fbloc_fails = 0usize;
    let mut fa_fails = 0usize;
    let mut skipped = 0usize;
    let mut compared = 0usize;

    for i in 0..instances {
        let mut r = rng::validation_rng(seed, i as u64);
        let inst = gen_instance(&mut r);
        let scn = &inst.scenario;
        let slot = Slot::build(scn, inst.realization.clone(), i as u64)?;
        let spec = ObjectiveSpec {
            block: match inst.fixed_gamma {
                Some(g) => BlockModel::FixedGamma(g),
                None => BlockModel::Reputation,
            },
            queue_term: true,
        };
        let mut cell_params = params.clone();
        cell_params.v = inst.v;
        let mut stats = SolveStats::default();

        // Equal-share seed decision, scaled into the energy budget, then
        // the two continuous solves in descent order so each sees a
        // feasible complement.
        let mut dec = Decision {
            l: inst.l.clone(),
            f_a: (0..scn.n_gateways())
                .map(|m| {
                    let jj = scn.gateway_ap[m];
                    scn.aps[jj].f_max / scn.ap_gateways[jj].len() as f64
                })
                .collect(),
            f_bloc: scn.aps.iter().map(|a| a.f_max).collect(),
        };
        crate::dpra::scale_shares_to_budget(&slot, &mut dec, 0.5);

        let record_failure = |report: &mut ValidationReport, inst: &OracleInstance| {
            if report.failing_instance.is_none() {
                report.failing_instance = Some(
                    serde_json::to_string_pretty(inst)
                        .unwrap_or_else(|e| format!("serialization failed: {e}")),
                );
            }
        };

        match solve_fbloc(&slot, &dec, &inst.queues, &spec, &cell_params, &mut stats) {
            Ok(f) => {
                dec.f_bloc = f;
                let got = slot.objective(&dec, &inst.queues, &spec, inst.v)?;
                if let Some(best) = grid_best_fbloc(&slot, &dec, &inst.queues, &spec, inst.v) {
                    let gap = rel_gap(got, best);
                    worst_fbloc = worst_fbloc.max(gap);
                    if gap > 1e-6 {
                        fbloc_fails += 1;
                        record_failure(&mut report, &inst);
                    }
                }
            }
            Err(SimError::NoMiner) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        }

        let fa = match solve_fa(&slot, &dec, &inst.queues, &spec, &cell_params, &mut stats) {
            Ok(fa) => fa,
            Err(SimError::Solver(_)) | Err(SimError::NoMiner) => {
                // Energy draw too starved for any makespan: degenerate.
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut dec_fa = dec.clone();
        dec_fa.f_a = fa;
        let got_fa = slot.objective(&dec_fa, &inst.queues, &spec, inst.v)?;
        if let Some(best) = grid_best_fa(&slot, &dec, &inst.queues, &spec, inst.v) {
            let gap = rel_gap(got_fa, best);
            worst_fa = worst_fa.max(gap);
            if gap > 1e-6 {
                fa_fails += 1;
                record_failure(&mut report, &inst);
            }
        }

        let solved = solve_partition(&slot, &dec_fa, &inst.queues, &spec, &cell_params, &mut stats);
        let brute =
            exhaustive_partition(&slot, &dec_fa, &inst.queues, &spec, &cell_params, 1_000_000);
        match (solved, brute) {
            (Ok(a), Ok(b)) => {
                if a != b {
                    partition_mismatches += 1;
                    record_failure(&mut report, &inst);
                }
                compared += 1;
            }
            (Err(_), Err(_)) => {
                skipped += 1;
            }
            (a, b) => {
                partition_mismatches += 1;
                record_failure(&mut report, &inst);
                let detail = format!("solver {a:?} vs exhaustive {b:?}");
                report.push("partition-agreement", false, detail);
            }
        }
    }

    report.push(
        "fbloc-grid",
        fbloc_fails == 0,
        format!("worst relative gap {worst_fbloc:.3e} over {instances} instances (tolerance 1e-6)"),
    );
    report.push(
        "fa-grid",
        fa_fails == 0,
        format!("worst relative gap {worst_fa:.3e} over {instances} instances (tolerance 1e-6)"),
    );
    report.push(
        "partition-exhaustive",
        partition_mismatches == 0,
        format!("{compared} exact comparisons, {partition_mismatches} mismatches, {skipped} degenerate instances skipped"),
    );
    Ok(report)
}

/// Block-race statistics: the sampled race should look exponential with
/// the predicted total rate, hit the success-probability target at the
/// quantile, and satisfy the closed-form identity exactly.
pub fn validate_statistics(draws: usize, seed: u64) -> Result<ValidationReport> {
    let mut report = ValidationReport {
        kind: "statistics".into(),
        checks: Vec::new(),
        failing_instance: None,
    };
    let cfg = ExperimentConfig::reference();
    let scn = crate::config::build_scenario(&cfg, seed)?;
    let slot = Slot::sample(&scn, seed, 0)?;
    let spec = ObjectiveSpec::reputation();
    let l = midpoint_partition(&slot);
    let o = slot.offload_volumes(&l);
    let f_bloc: Vec<f64> = scn.aps.iter().map(|a| a.f_max).collect();
    let (_, theta_hat, tau_bloc) = slot.race(&spec, &o, &f_bloc)?;

    // Deterministic identity tau * theta = -ln(1 - p0).
    let target = -scn.reputation.p0_complement.ln();
    let identity_gap = (tau_bloc * theta_hat - target).abs() / target;
    report.push(
        "block-time-identity",
        identity_gap <= 1e-12,
        format!("relative gap {identity_gap:.3e} (tolerance 1e-12)"),
    );

    // The race winner time is exponential with the total rate.
    let mut r = rng::validation_rng(seed, 1);
    let samples: Vec<f64> =
        (0..draws).map(|_| rng::exponential(&mut r, 1.0 / theta_hat)).collect();
    let ks = ks_test(&samples, exponential_cdf(theta_hat), 0.01);
    report.push(
        "block-time-ks",
        ks.accepted,
        format!(
            "D = {:.6e}, critical at 0.01 = {:.6e}, {} draws",
            ks.statistic, ks.critical, draws
        ),
    );

    // Success probability at the p0 quantile.
    let hits = samples.iter().filter(|&&x| x < tau_bloc).count() as u64;
    let p0 = 1.0 - scn.reputation.p0_complement;
    let p0_ok = binomial_three_sigma_ok(hits, draws as u64, p0);
    report.push(
        "block-success-probability",
        p0_ok,
        format!("{hits}/{draws} races beat the deadline, target p0 = 1 - 1e-15"),
    );

    // Arrival sampling: empirical data-point means track each device's
    // configured mean, and energy arrivals average half their caps.
    let t_slots = 4000u64;
    let mut sum_d = vec![0.0; scn.n_devices()];
    let mut sum_eg = vec![0.0; scn.n_gateways()];
    let mut sum_ea = vec![0.0; scn.n_aps()];
    for t in 0..t_slots {
        let real = crate::env::sample_slot(&scn, seed, t);
        for (acc, &x) in sum_d.iter_mut().zip(&real.d) {
            *acc += x;
        }
        for (acc, &x) in sum_eg.iter_mut().zip(&real.e_g) {
            *acc += x;
        }
        for (acc, &x) in sum_ea.iter_mut().zip(&real.e_a) {
            *acc += x;
        }
    }
    let worst_d = (0..scn.n_devices())
        .map(|n| {
            let emp = sum_d[n] / t_slots as f64;
            (emp - scn.arrival_mean[n]).abs() / scn.arrival_mean[n]
        })
        .fold(0.0_f64, f64::max);
    // Exponential means over 4000 draws have sigma/mean about 1.6%.
    report.push(
        "arrival-mean",
        worst_d < 0.08,
        format!("worst relative error of data-point means {worst_d:.4} over {t_slots} slots"),
    );
    let worst_e = (0..scn.n_gateways())
        .map(|m| {
            let emp = sum_eg[m] / t_slots as f64;
            (emp - 0.5 * scn.gateways[m].e_g_max).abs() / (0.5 * scn.gateways[m].e_g_max)
        })
        .chain((0..scn.n_aps()).map(|j| {
            let emp = sum_ea[j] / t_slots as f64;
            (emp - 0.5 * scn.aps[j].e_a_max).abs() / (0.5 * scn.aps[j].e_a_max)
        }))
        .fold(0.0_f64, f64::max);
    report.push(
        "energy-arrival-mean",
        worst_e < 0.08,
        format!("worst relative error of energy means {worst_e:.4} (uniform halves its cap)"),
    );
    Ok(report)
}

/// Pathwise drift audit: over a reference-config run, the per-slot Lyapunov
/// change never exceeds the drift bound with the realized constant.
pub fn validate_drift(t_slots: u64, seed: u64) -> Result<ValidationReport> {
    let mut report = ValidationReport {
        kind: "drift".into(),
        checks: Vec::new(),
        failing_instance: None,
    };
    let cfg = ExperimentConfig::reference();
    let scn = crate::config::build_scenario(&cfg, seed)?;
    let key = CellKey { seed, v: 1e4, policy: PolicySpec::Dpra };
    let mut violations = 0u64;
    let mut worst_margin = f64::NEG_INFINITY;
    run_cell_observed(&scn, &key, t_slots, &cfg.params, &mut |obs| {
        let h = lemma1_h(&scn, &obs.slot.real.d);
        let rep = drift_report(
            obs.queues_before,
            obs.queues_after,
            &obs.metrics.u,
            scn.reputation.u_min,
            scn.reputation.u_max,
            h,
        );
        let margin = rep.delta_l_pathwise - rep.bound_rhs;
        worst_margin = worst_margin.max(margin / rep.bound_rhs.abs().max(1.0));
        if !rep.holds(1e-9) {
            violations += 1;
        }
    })?;
    report.push(
        "lemma1-pathwise",
        violations == 0,
        format!(
            "{violations} violations over {t_slots} slots, worst normalized margin {worst_margin:.3e}"
        ),
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_validation_passes_on_a_small_batch() {
        let report = validate_oracle(25, 91).unwrap();
        assert!(report.passed(), "\n{}", report.render());
        assert!(report.failing_instance.is_none());
    }

    #[test]
    fn statistics_validation_passes() {
        let report = validate_statistics(20_000, 5).unwrap();
        assert!(report.passed(), "\n{}", report.render());
    }

    #[test]
    fn drift_validation_passes_on_short_run() {
        let report = validate_drift(20, 1).unwrap();
        assert!(report.passed(), "\n{}", report.render());
    }

    #[test]
    fn generated_instances_are_valid_and_deterministic() {
        for i in 0..30 {
            let mut r1 = rng::validation_rng(7, i);
            let mut r2 = rng::validation_rng(7, i);
            let a = gen_instance(&mut r1);
            let b = gen_instance(&mut r2);
            a.scenario.validate().unwrap();
            assert_eq!(a.l, b.l);
            assert_eq!(a.v, b.v);
            assert_eq!(a.realization.d, b.realization.d);
            assert!(a.scenario.n_devices() <= 4);
            assert!(a.scenario.n_gateways() <= 3);
            assert!(a.scenario.models.iter().all(|m| m.len() <= 5));
        }
    }

    #[test]
    fn render_marks_failures() {
        let mut rep = ValidationReport {
            kind: "x".into(),
            checks: vec![],
            failing_instance: None,
        };
        rep.push("good", true, "fine".into());
        rep.push("bad", false, "broken".into());
        assert!(!rep.passed());
        let text = rep.render();
        assert!(text.contains("[PASS] good"));
        assert!(text.contains("[FAIL] bad"));
    }
}
