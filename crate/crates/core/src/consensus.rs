//! Reputation-eased proof-of-work consensus among the access points.
//!
//! Each AP earns off-chain reputation from the inference work offloaded to
//! it, which lowers its block-generation difficulty. Block generation is a
//! Poisson race between APs:
//!
//! ```text
//! O_j     = sum_m sum_n b[m,j] a[n,m] D_n suffix(l_n)   offloaded FLOPs
//! U_j     = g(O_j)                                       reputation
//! gamma_j = exp(-alpha U_j - beta)                       difficulty
//! theta_j = f_j^bloc / gamma_j                           query rate, 1/s
//! tau     = -ln(1 - p0) / theta_hat                      p0-quantile time
//! e_j     = v_j^A tau (f_j^bloc)^3                       mining energy
//! ```
//!
//! The deterministic quantile `tau` enters the latency objective and the
//! energy accounting; the exponential sampler exists only to validate the
//! race statistics.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Scenario;
use crate::error::{Result, SimError};
use crate::rng;

/// Reputation evaluation function g applied to offloaded FLOPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GSpec {
    /// g(O) = O / kappa.
    Affine { kappa: f64 },
    /// g(O) = c1 * ln(1 + c2 * O).
    Log { c1: f64, c2: f64 },
}

impl GSpec {
    pub fn eval(&self, o: f64) -> f64 {
        match *self {
            GSpec::Affine { kappa } => o / kappa,
            GSpec::Log { c1, c2 } => c1 * (1.0 + c2 * o).ln(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GSpec::Affine { kappa } if kappa > 0.0 => Ok(()),
            GSpec::Affine { kappa } => Err(SimError::Config(format!(
                "affine reputation function requires kappa > 0, got {kappa}"
            ))),
            GSpec::Log { c1, c2 } if c1 >= 0.0 && c2 >= 0.0 => Ok(()),
            GSpec::Log { c1, c2 } => Err(SimError::Config(format!(
                "log reputation function requires c1, c2 >= 0, got ({c1}, {c2})"
            ))),
        }
    }
}

/// Consensus constants: reputation mapping, difficulty law, and the block
/// success target.
///
/// The success probability target p0 sits extremely close to 1 (the default
/// is 1 - 1e-15), so it is stored as its complement `p0_complement` = 1 - p0;
/// storing p0 itself would round to 1.0 and lose -ln(1-p0) entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationParams {
    /// Difficulty sensitivity to reputation, 1/reputation-unit.
    pub alpha: f64,
    /// Difficulty offset (dimensionless exponent).
    pub beta: f64,
    /// Reputation function descriptor.
    pub g_spec: GSpec,
    /// 1 - p0 where p0 is the target block-success probability.
    pub p0_complement: f64,
    /// Lower bound of the long-term average reputation band.
    pub u_min: f64,
    /// Upper bound of the long-term average reputation band.
    pub u_max: f64,
}

impl ReputationParams {
    /// -ln(1 - p0), the quantile factor of the block-time closed form.
    pub fn quantile_factor(&self) -> f64 {
        -self.p0_complement.ln()
    }

    /// Midpoint of the reputation band, used for queue initialization and
    /// the fixed-difficulty baseline.
    pub fn u_mid(&self) -> f64 {
        0.5 * (self.u_min + self.u_max)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0_complement > 0.0 && self.p0_complement < 1.0) {
            return Err(SimError::Config(format!(
                "p0_complement must lie in (0,1), got {}",
                self.p0_complement
            )));
        }
        if self.alpha <= 0.0 {
            return Err(SimError::Config(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !self.beta.is_finite() {
            return Err(SimError::Config("beta must be finite".into()));
        }
        if !(self.u_min >= 0.0 && self.u_min < self.u_max) {
            return Err(SimError::Config(format!(
                "need 0 <= u_min < u_max, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        self.g_spec.validate()
    }
}

/// Everything the consensus layer produces for one slot and one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSlotResult {
    /// Per-AP offloaded FLOPs O_j.
    pub o: Vec<f64>,
    /// Per-AP reputation U_j = g(O_j).
    pub u: Vec<f64>,
    /// Per-AP difficulty gamma_j.
    pub gamma: Vec<f64>,
    /// Per-AP query rate theta_j in 1/s.
    pub theta: Vec<f64>,
    /// Total race rate in 1/s.
    pub theta_hat: f64,
    /// Deterministic p0-quantile block time in s.
    pub tau_bloc: f64,
    /// Per-AP mining energy in J.
    pub e_bloc: Vec<f64>,
}

/// Per-AP offloaded FLOPs O_j for decision `l` under realization `d`.
pub fn offloaded_flops(scn: &Scenario, d: &[f64], l: &[usize]) -> Result<Vec<f64>> {
    let mut o = vec![0.0; scn.n_aps()];
    for (n, &m) in scn.device_gateway.iter().enumerate() {
        let model = scn.model_of(n);
        let max = model.len();
        if l[n] < 1 || l[n] > max {
            return Err(SimError::PartitionOutOfRange { dt: n, l: l[n], max });
        }
        o[scn.gateway_ap[m]] += d[n] * model.suffix_flops(l[n])?;
    }
    Ok(o)
}

/// Reputation U = g(O).
pub fn reputation(params: &ReputationParams, o: f64) -> f64 {
    params.g_spec.eval(o)
}

/// Difficulty gamma = exp(-alpha U - beta); higher reputation, easier blocks.
pub fn difficulty(params: &ReputationParams, u: f64) -> f64 {
    (-params.alpha * u - params.beta).exp()
}

/// Per-AP query rates and the p0-quantile block time of the Poisson race.
///
/// Returns the rates theta_j = f_j / gamma_j, their sum, and
/// tau = -ln(1-p0) / theta_hat. Errors when every rate is zero: no AP is
/// mining, so no block can ever be generated.
pub fn block_time(
    params: &ReputationParams,
    f_bloc: &[f64],
    u: &[f64],
) -> Result<(Vec<f64>, f64, f64)> {
    let theta: Vec<f64> = f_bloc
        .iter()
        .zip(u)
        .map(|(&f, &uj)| f / difficulty(params, uj))
        .collect();
    let theta_hat: f64 = theta.iter().sum();
    if theta_hat <= 0.0 {
        return Err(SimError::NoMiner);
    }
    Ok((theta, theta_hat, params.quantile_factor() / theta_hat))
}

/// Samples one realized block time of the race: exponential with rate
/// theta_hat. Used only to validate the race statistics against the
/// deterministic quantile.
pub fn sample_block_time(theta_hat: f64, r: &mut ChaCha8Rng) -> f64 {
    rng::exponential(r, 1.0 / theta_hat)
}

/// Mining energy e = v_a * tau * f^3 of one AP running at f for the whole
/// block interval.
pub fn block_energy(v_a: f64, tau_bloc: f64, f_bloc: f64) -> f64 {
    v_a * tau_bloc * f_bloc * f_bloc * f_bloc
}

/// Composes the full consensus pipeline for one decision.
pub fn evaluate(
    scn: &Scenario,
    d: &[f64],
    l: &[usize],
    f_bloc: &[f64],
) -> Result<ConsensusSlotResult> {
    let params = &scn.reputation;
    let o = offloaded_flops(scn, d, l)?;
    let u: Vec<f64> = o.iter().map(|&oj| reputation(params, oj)).collect();
    let gamma: Vec<f64> = u.iter().map(|&uj| difficulty(params, uj)).collect();
    let (theta, theta_hat, tau_bloc) = block_time(params, f_bloc, &u)?;
    let e_bloc: Vec<f64> = scn
        .aps
        .iter()
        .zip(f_bloc)
        .map(|(ap, &f)| block_energy(ap.v_a, tau_bloc, f))
        .collect();
    Ok(ConsensusSlotResult { o, u, gamma, theta, theta_hat, tau_bloc, e_bloc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ApParams, ChannelParams, GatewayParams};
    use crate::profile::{LayerProfile, ModelProfile};

    fn params() -> ReputationParams {
        ReputationParams {
            alpha: 5e-5,
            beta: -29.0,
            g_spec: GSpec::Affine { kappa: 1e6 },
            p0_complement: 1e-15,
            u_min: 25.0,
            u_max: 75.0,
        }
    }

    /// Two devices on one gateway under one AP; layer FLOPs chosen so the
    /// suffix sums are easy to do by hand.
    fn two_dt_scenario() -> Scenario {
        let model = |name: &str, flops: &[f64]| {
            ModelProfile::from_layers(
                name,
                flops
                    .iter()
                    .map(|&f| LayerProfile { flops: f, output_bits: 8.0 })
                    .collect(),
            )
        };
        Scenario {
            device_gateway: vec![0, 0],
            gateway_ap: vec![0],
            gateway_devices: vec![vec![0, 1]],
            ap_gateways: vec![vec![0]],
            models: vec![model("a", &[10.0, 90.0]), model("b", &[40.0, 60.0, 100.0])],
            device_model: vec![0, 1],
            arrival_mean: vec![1.0, 1.0],
            gateways: vec![GatewayParams {
                phi_g: 8.0,
                f_g: 1e6,
                v_g: 1e-24,
                tx_power: 0.1,
                dist: 10.0,
                e_g_max: 0.5,
            }],
            aps: vec![ApParams {
                phi_a: 32.0,
                v_a: 1e-24,
                f_max: 1e8,
                f_min: 1e4,
                e_a_max: 10.0,
            }],
            ap_type: vec![0],
            ap_type_names: vec!["type1".into()],
            channel: ChannelParams {
                h0: 1e-3,
                d0: 1.0,
                nu: 2.0,
                bandwidth: 5e6,
                n0: 3.9810717055349565e-21,
                interference_mean: 0.0,
                interference_std: 0.0,
            },
            reputation: params(),
        }
    }

    #[test]
    fn offloaded_nothing_at_full_local() {
        let scn = two_dt_scenario();
        let o = offloaded_flops(&scn, &[2.0, 3.0], &[2, 3]).unwrap();
        assert_eq!(o, vec![0.0]);
    }

    #[test]
    fn offloaded_single_product() {
        let mut scn = two_dt_scenario();
        scn.device_gateway = vec![0];
        scn.gateway_devices = vec![vec![0]];
        scn.device_model = vec![0];
        scn.arrival_mean = vec![1.0];
        // suffix after layer 1 of model a = 90, D = 2 -> 180.
        let o = offloaded_flops(&scn, &[2.0], &[1]).unwrap();
        assert_eq!(o, vec![180.0]);
    }

    #[test]
    fn offloaded_hand_sum_after_first_layer() {
        let scn = two_dt_scenario();
        // l = 1 for both: suffixes 90 and 160; D = (2, 3) -> 180 + 480.
        let o = offloaded_flops(&scn, &[2.0, 3.0], &[1, 1]).unwrap();
        assert_eq!(o, vec![660.0]);
    }

    #[test]
    fn offloaded_rejects_bad_partition() {
        let scn = two_dt_scenario();
        assert!(offloaded_flops(&scn, &[1.0, 1.0], &[0, 1]).is_err());
        assert!(offloaded_flops(&scn, &[1.0, 1.0], &[1, 4]).is_err());
    }

    #[test]
    fn reputation_affine() {
        let p = params();
        assert_eq!(reputation(&p, 0.0), 0.0);
        assert_eq!(reputation(&p, 5e7), 50.0);
    }

    #[test]
    fn reputation_log_monotone_from_zero() {
        let p = ReputationParams {
            g_spec: GSpec::Log { c1: 10.0, c2: 1e-6 },
            ..params()
        };
        assert_eq!(reputation(&p, 0.0), 0.0);
        let mut prev = 0.0;
        for k in 1..50 {
            let u = reputation(&p, k as f64 * 1e5);
            assert!(u > prev);
            prev = u;
        }
    }

    #[test]
    fn difficulty_unit_at_zero_exponent() {
        let p = ReputationParams { alpha: 1e-3, beta: 0.0, ..params() };
        assert_eq!(difficulty(&p, 0.0), 1.0);
    }

    #[test]
    fn difficulty_default_constants() {
        // alpha=5e-5, beta=-29, U=50: gamma = exp(29 - 2.5e-3) = e^28.9975.
        let p = params();
        let g = difficulty(&p, 50.0);
        assert!((g - 28.9975_f64.exp()).abs() / g < 1e-12);
    }

    #[test]
    fn difficulty_strictly_decreasing_in_reputation() {
        let p = params();
        let mut prev = difficulty(&p, 0.0);
        for k in 1..=100 {
            let g = difficulty(&p, k as f64);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn block_time_unit_case() {
        // One AP, gamma = 1 (U=0, beta=0), f = 1 Hz, 1-p0 = e^{-1}:
        // theta_hat = 1, tau = -ln(e^{-1}) = 1 s.
        let p = ReputationParams {
            alpha: 1e-3,
            beta: 0.0,
            p0_complement: (-1.0_f64).exp(),
            ..params()
        };
        let (theta, theta_hat, tau) = block_time(&p, &[1.0], &[0.0]).unwrap();
        assert_eq!(theta, vec![1.0]);
        assert_eq!(theta_hat, 1.0);
        assert!((tau - 1.0).abs() < 1e-15);
    }

    #[test]
    fn block_time_halves_when_rates_double() {
        let p = params();
        let u = [50.0, 30.0, 70.0];
        let (_, _, tau1) = block_time(&p, &[1e8, 5e7, 2e7], &u).unwrap();
        let (_, _, tau2) = block_time(&p, &[2e8, 1e8, 4e7], &u).unwrap();
        assert!((tau1 / tau2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn block_time_four_equal_miners() {
        let p = params();
        let (_, _, tau1) = block_time(&p, &[1e8], &[50.0]).unwrap();
        let (_, _, tau4) = block_time(&p, &[1e8; 4], &[50.0; 4]).unwrap();
        assert!((tau4 / tau1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn block_time_no_miner() {
        let p = params();
        assert!(matches!(
            block_time(&p, &[0.0, 0.0], &[50.0, 50.0]),
            Err(SimError::NoMiner)
        ));
    }

    #[test]
    fn quantile_identity() {
        // tau * theta_hat = -ln(1-p0) exactly, by construction.
        let p = params();
        let (_, theta_hat, tau) = block_time(&p, &[1e8, 3e7, 9e6, 4e5], &[60.0, 50.0, 40.0, 30.0]).unwrap();
        let want = -(1e-15_f64).ln();
        assert!((tau * theta_hat - want).abs() / want < 1e-12);
        assert!((want - 34.538776394910684).abs() < 1e-12);
    }

    #[test]
    fn pipeline_monotone_more_offload_faster_blocks() {
        let scn = two_dt_scenario();
        let f = vec![1e8];
        let mut prev = f64::INFINITY;
        // Walking l down offloads more, so tau_bloc must weakly decrease.
        for l in (1..=2usize).rev() {
            let res = evaluate(&scn, &[5.0, 5.0], &[l, l], &f).unwrap();
            assert!(res.tau_bloc <= prev);
            prev = res.tau_bloc;
        }
    }

    #[test]
    fn block_energy_closed_form() {
        assert_eq!(block_energy(1.0, 2.0, 0.0), 0.0);
        assert_eq!(block_energy(1.0, 2.0, 3.0), 54.0);
        let e1 = block_energy(1e-24, 100.0, 1e6);
        let e2 = block_energy(1e-24, 100.0, 2e6);
        assert!((e2 / e1 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_race_mean_and_median() {
        let theta_hat = 2.5e-4;
        let mut r = rng::validation_rng(99, 0);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_block_time(theta_hat, &mut r))
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0 / theta_hat).abs() * theta_hat < 0.02);
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = draws[n / 2];
        let want = 2.0_f64.ln() / theta_hat;
        assert!((median - want).abs() / want < 0.05);
    }

    #[test]
    fn sampled_race_success_probability() {
        // With a moderate p0 the binomial check is informative: the share of
        // draws below the p0-quantile must sit within 3 sigma of p0.
        let p = ReputationParams { p0_complement: 0.1, ..params() };
        let (_, theta_hat, tau) = block_time(&p, &[1e8], &[50.0]).unwrap();
        let mut r = rng::validation_rng(7, 1);
        let n = 100_000usize;
        let hits = (0..n)
            .filter(|_| sample_block_time(theta_hat, &mut r) < tau)
            .count();
        let p0 = 0.9;
        let est = hits as f64 / n as f64;
        let sigma = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!((est - p0).abs() < 3.0 * sigma, "est {est}");
    }

    #[test]
    fn evaluate_composes_pipeline() {
        let scn = two_dt_scenario();
        let res = evaluate(&scn, &[2.0, 3.0], &[1, 1], &[1e8]).unwrap();
        assert_eq!(res.o, vec![660.0]);
        assert_eq!(res.u, vec![660.0 / 1e6]);
        assert_eq!(res.gamma.len(), 1);
        assert_eq!(res.theta_hat, res.theta[0]);
        let e_want = block_energy(1e-24, res.tau_bloc, 1e8);
        assert_eq!(res.e_bloc, vec![e_want]);
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        assert!(ReputationParams { p0_complement: 0.0, ..params() }.validate().is_err());
        assert!(ReputationParams { alpha: 0.0, ..params() }.validate().is_err());
        assert!(ReputationParams { u_min: 80.0, ..params() }.validate().is_err());
        assert!(ReputationParams {
            g_spec: GSpec::Affine { kappa: 0.0 },
            ..params()
        }
        .validate()
        .is_err());
        assert!(ReputationParams {
            g_spec: GSpec::Log { c1: -1.0, c2: 1.0 },
            ..params()
        }
        .validate()
        .is_err());
    }
}
