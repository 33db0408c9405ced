//! Experiment configuration: one TOML file describes the topology, the
//! physical parameters, the policies, and the sweep grid.
//!
//! [`ExperimentConfig::reference`] carries the reference setup (60
//! devices, 20 gateways, 4 APs in two types) so a complete run needs no
//! hand-written file. [`build_scenario`] expands a config into the static
//! [`Scenario`] for one seed: per-gateway CPU frequencies and distances
//! are drawn once from the topology stream, and the reputation map's
//! scale can be auto-calibrated so that full offload at nominal arrivals
//! lands on the middle of the reputation band.

use crate::baselines::FixedLRule;
use crate::consensus::{GSpec, ReputationParams};
use crate::env::{ApParams, ChannelParams, GatewayParams, Scenario};
use crate::error::{Result, SimError};
use crate::profile::{build_preset, ModelProfile, Preset};
use crate::rng;
use crate::solver::{FeasMode, LyapunovParams};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// How devices, gateways, and APs are wired together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyConfig {
    /// Regular blocks: every AP serves `gateways_per_ap` gateways, every
    /// gateway serves `devices_per_gateway` devices.
    Uniform {
        aps: usize,
        gateways_per_ap: usize,
        devices_per_gateway: usize,
    },
    /// Explicit association maps (device -> gateway, gateway -> AP).
    Explicit {
        device_gateway: Vec<usize>,
        gateway_ap: Vec<usize>,
    },
}

/// One AP class: its energy cap and the data-arrival mean of devices
/// under it. APs take types round-robin by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApTypeConfig {
    pub name: String,
    /// Mean data-point arrivals Theta for devices under this type.
    pub theta: f64,
    /// Per-slot energy arrival cap (J); draws are uniform on [0, cap].
    pub e_a_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    /// FLOPs per cycle.
    pub phi_g: f64,
    /// CPU frequency draw range [lo, hi] in Hz (uniform, per gateway).
    pub f_g_range: [f64; 2],
    /// Effective switched capacitance.
    pub v_g: f64,
    /// Uplink transmit power (W).
    pub tx_power: f64,
    /// Distance draw upper bound (m); draws are uniform on (0, max].
    pub dist_max: f64,
    /// Per-slot energy arrival cap (J).
    pub e_g_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    /// FLOPs per cycle.
    pub phi_a: f64,
    /// Effective switched capacitance.
    pub v_a: f64,
    /// Frequency cap (Hz) for shares and mining alike.
    pub f_max: f64,
    /// Share floor as a fraction of f_max.
    pub f_min_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Reference gain at distance d0.
    pub h0: f64,
    /// Reference distance (m).
    pub d0: f64,
    /// Path-loss exponent.
    pub nu: f64,
    /// Bandwidth (Hz).
    pub bandwidth: f64,
    /// Noise power spectral density (dBm/Hz).
    pub n0_dbm_per_hz: f64,
    /// Interference mean (W); draws are Gaussian truncated at zero.
    pub interference_mean: f64,
    /// Interference standard deviation (W).
    pub interference_std: f64,
}

impl ChannelConfig {
    pub fn to_params(&self) -> ChannelParams {
        ChannelParams {
            h0: self.h0,
            d0: self.d0,
            nu: self.nu,
            bandwidth: self.bandwidth,
            n0: 10.0_f64.powf((self.n0_dbm_per_hz - 30.0) / 10.0),
            interference_mean: self.interference_mean,
            interference_std: self.interference_std,
        }
    }
}

/// Reputation map selection: a fixed shape or a scale calibrated from
/// the topology (full offload at nominal arrivals maps to the middle of
/// the reputation band).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GConfig {
    AutoAffine,
    Affine { kappa: f64 },
    Log { c1: f64, c2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationConfig {
    pub alpha: f64,
    pub beta: f64,
    pub g: GConfig,
    /// Stored as 1 - p0 to keep precision near certainty.
    pub p0_complement: f64,
    pub u_min: f64,
    pub u_max: f64,
}

/// Policy selection for runs and sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PolicySpec {
    Dpra,
    Wdpo {
        #[serde(default)]
        fixed_l_rule: FixedLRule,
    },
    Wtcm {
        #[serde(default)]
        fixed_gamma: Option<f64>,
        #[serde(default = "default_true")]
        queue_term: bool,
    },
}

fn default_true() -> bool {
    true
}

fn default_batch() -> u64 {
    1
}

fn default_precision() -> u64 {
    32
}

impl PolicySpec {
    /// Short label used in file names and CSV columns.
    pub fn label(&self) -> &'static str {
        match self {
            PolicySpec::Dpra => "dpra",
            PolicySpec::Wdpo { .. } => "wdpo",
            PolicySpec::Wtcm { .. } => "wtcm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: TopologyConfig,
    /// AP classes; APs take types round-robin by index.
    pub ap_types: Vec<ApTypeConfig>,
    pub gateway: GatewayConfig,
    pub ap: ApConfig,
    pub channel: ChannelConfig,
    pub reputation: ReputationConfig,
    /// Model presets cycled over each gateway's devices in order.
    pub device_models: Vec<Preset>,
    /// Inference batch size per data point bundle.
    #[serde(default = "default_batch")]
    pub batch: u64,
    /// Activation precision in bits (sets inter-layer payload sizes).
    #[serde(default = "default_precision")]
    pub precision_bits: u64,
    /// Lyapunov weights to run (one cell per V).
    pub v_list: Vec<f64>,
    /// Slots per run.
    pub t: u64,
    /// Seeds to run (each seed redraws topology and slot streams).
    pub seeds: Vec<u64>,
    /// Policies to run.
    pub policies: Vec<PolicySpec>,
    pub mode: FeasMode,
    pub out_dir: PathBuf,
    /// Solver knobs; `v` is overridden per sweep cell.
    #[serde(default)]
    pub params: LyapunovParams,
}

impl ExperimentConfig {
    /// The reference experiment: 60 devices on 20 gateways on 4 APs in
    /// two types, VGG-11 and CNN profiles, 0.1 GHz APs, 5 MHz uplinks.
    pub fn reference() -> Self {
        ExperimentConfig {
            topology: TopologyConfig::Uniform {
                aps: 4,
                gateways_per_ap: 5,
                devices_per_gateway: 3,
            },
            ap_types: vec![
                ApTypeConfig { name: "type1".into(), theta: 100.0, e_a_max: 10.0 },
                ApTypeConfig { name: "type2".into(), theta: 50.0, e_a_max: 30.0 },
            ],
            gateway: GatewayConfig {
                phi_g: 8.0,
                f_g_range: [1e6, 1e7],
                v_g: 1e-24,
                tx_power: 0.1,
                dist_max: 50.0,
                e_g_max: 0.5,
            },
            ap: ApConfig { phi_a: 32.0, v_a: 1e-24, f_max: 1e8, f_min_fraction: 1e-4 },
            channel: ChannelConfig {
                h0: 1e-3,
                d0: 1.0,
                nu: 2.0,
                bandwidth: 5e6,
                n0_dbm_per_hz: -174.0,
                interference_mean: 2e-14,
                interference_std: 5e-15,
            },
            reputation: ReputationConfig {
                alpha: 5e-5,
                beta: -29.0,
                g: GConfig::AutoAffine,
                p0_complement: 1e-15,
                u_min: 25.0,
                u_max: 75.0,
            },
            device_models: vec![
                Preset::Vgg11Cifar10,
                Preset::Vgg11Cifar10,
                Preset::CnnFashionMnist,
            ],
            batch: 1,
            precision_bits: 32,
            v_list: vec![1e4],
            t: 2000,
            seeds: vec![1],
            policies: vec![PolicySpec::Dpra],
            mode: FeasMode::Lenient,
            out_dir: PathBuf::from("out"),
            params: LyapunovParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.topology {
            TopologyConfig::Uniform { aps, gateways_per_ap, devices_per_gateway } => {
                if *aps == 0 || *gateways_per_ap == 0 || *devices_per_gateway == 0 {
                    return Err(SimError::Config(
                        "topology: all uniform block sizes must be >= 1".into(),
                    ));
                }
            }
            TopologyConfig::Explicit { device_gateway, gateway_ap } => {
                if device_gateway.is_empty() || gateway_ap.is_empty() {
                    return Err(SimError::Config(
                        "topology: explicit maps must be nonempty".into(),
                    ));
                }
                let m = gateway_ap.len();
                if let Some(&g) = device_gateway.iter().find(|&&g| g >= m) {
                    return Err(SimError::Config(format!(
                        "topology: device references gateway {g} >= M={m}"
                    )));
                }
            }
        }
        if self.ap_types.is_empty() {
            return Err(SimError::Config("ap_types: need at least one AP class".into()));
        }
        for (i, t) in self.ap_types.iter().enumerate() {
            if t.theta < 0.0 || t.e_a_max < 0.0 {
                return Err(SimError::Config(format!(
                    "ap_types[{i}]: theta and e_a_max must be >= 0"
                )));
            }
        }
        let g = &self.gateway;
        if !(g.f_g_range[0] > 0.0 && g.f_g_range[0] <= g.f_g_range[1]) {
            return Err(SimError::Config("gateway: need 0 < f_g_range[0] <= f_g_range[1]".into()));
        }
        if g.phi_g <= 0.0 || g.v_g <= 0.0 || g.tx_power <= 0.0 || g.dist_max <= 0.0 {
            return Err(SimError::Config(
                "gateway: phi_g, v_g, tx_power, dist_max must be > 0".into(),
            ));
        }
        if g.e_g_max < 0.0 {
            return Err(SimError::Config("gateway: e_g_max must be >= 0".into()));
        }
        let a = &self.ap;
        if a.phi_a <= 0.0 || a.v_a <= 0.0 || a.f_max <= 0.0 {
            return Err(SimError::Config("ap: phi_a, v_a, f_max must be > 0".into()));
        }
        if !(a.f_min_fraction > 0.0 && a.f_min_fraction < 1.0) {
            return Err(SimError::Config("ap: need 0 < f_min_fraction < 1".into()));
        }
        if self.device_models.is_empty() {
            return Err(SimError::Config("device_models: need at least one preset".into()));
        }
        if self.batch == 0 || self.precision_bits == 0 {
            return Err(SimError::Config("batch and precision_bits must be >= 1".into()));
        }
        if self.v_list.is_empty() || self.v_list.iter().any(|&v| v <= 0.0) {
            return Err(SimError::Config("v_list: need at least one positive V".into()));
        }
        if self.seeds.is_empty() {
            return Err(SimError::Config("seeds: need at least one seed".into()));
        }
        if self.policies.is_empty() {
            return Err(SimError::Config("policies: need at least one policy".into()));
        }
        for p in &self.policies {
            if let PolicySpec::Wtcm { fixed_gamma: Some(gm), .. } = p {
                if *gm <= 0.0 {
                    return Err(SimError::Config("wtcm: fixed_gamma must be > 0".into()));
                }
            }
        }
        self.params.validate()?;
        Ok(())
    }
}

/// Expands the config into the static scenario for one seed. Per-gateway
/// frequencies and distances come from the seed's topology stream, so
/// different seeds give different draws while every (V, policy) cell of
/// one seed shares them.
pub fn build_scenario(cfg: &ExperimentConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let (device_gateway, gateway_ap) = match &cfg.topology {
        TopologyConfig::Uniform { aps, gateways_per_ap, devices_per_gateway } => {
            let m = aps * gateways_per_ap;
            let gateway_ap: Vec<usize> = (0..m).map(|g| g / gateways_per_ap).collect();
            let device_gateway: Vec<usize> =
                (0..m * devices_per_gateway).map(|n| n / devices_per_gateway).collect();
            (device_gateway, gateway_ap)
        }
        TopologyConfig::Explicit { device_gateway, gateway_ap } => {
            (device_gateway.clone(), gateway_ap.clone())
        }
    };
    let m = gateway_ap.len();
    let n = device_gateway.len();
    let j = gateway_ap.iter().copied().max().unwrap_or(0) + 1;

    let mut gateway_devices = vec![Vec::new(); m];
    for (dev, &gw) in device_gateway.iter().enumerate() {
        gateway_devices[gw].push(dev);
    }
    let mut ap_gateways = vec![Vec::new(); j];
    for (gw, &ap) in gateway_ap.iter().enumerate() {
        ap_gateways[ap].push(gw);
    }

    let ap_type: Vec<usize> = (0..j).map(|idx| idx % cfg.ap_types.len()).collect();
    let ap_type_names: Vec<String> = cfg.ap_types.iter().map(|t| t.name.clone()).collect();

    // Static draws: frequencies first, then distances, each in gateway
    // order, from the dedicated topology stream.
    let mut topo = rng::topology_rng(seed);
    let f_g: Vec<f64> = (0..m)
        .map(|_| topo.gen_range(cfg.gateway.f_g_range[0]..=cfg.gateway.f_g_range[1]))
        .collect();
    let dist: Vec<f64> = (0..m)
        .map(|_| cfg.gateway.dist_max * (1.0 - rng::uniform01(&mut topo)))
        .collect();

    let gateways: Vec<GatewayParams> = (0..m)
        .map(|idx| GatewayParams {
            phi_g: cfg.gateway.phi_g,
            f_g: f_g[idx],
            v_g: cfg.gateway.v_g,
            tx_power: cfg.gateway.tx_power,
            dist: dist[idx],
            e_g_max: cfg.gateway.e_g_max,
        })
        .collect();
    let aps: Vec<ApParams> = (0..j)
        .map(|idx| ApParams {
            phi_a: cfg.ap.phi_a,
            v_a: cfg.ap.v_a,
            f_max: cfg.ap.f_max,
            f_min: cfg.ap.f_min_fraction * cfg.ap.f_max,
            e_a_max: cfg.ap_types[ap_type[idx]].e_a_max,
        })
        .collect();

    // Distinct profiles once; the per-gateway cycle indexes into them.
    let mut distinct: Vec<Preset> = Vec::new();
    let cycle: Vec<usize> = cfg
        .device_models
        .iter()
        .map(|&p| {
            distinct.iter().position(|&q| q == p).unwrap_or_else(|| {
                distinct.push(p);
                distinct.len() - 1
            })
        })
        .collect();
    let models: Vec<ModelProfile> = distinct
        .iter()
        .map(|&p| build_preset(p, cfg.batch, cfg.precision_bits))
        .collect::<Result<_>>()?;
    let mut device_model = vec![0usize; n];
    let mut arrival_mean = vec![0.0; n];
    for gw in 0..m {
        let theta = cfg.ap_types[ap_type[gateway_ap[gw]]].theta;
        for (k, &dev) in gateway_devices[gw].iter().enumerate() {
            device_model[dev] = cycle[k % cycle.len()];
            arrival_mean[dev] = theta;
        }
    }

    let g_spec = match cfg.reputation.g {
        GConfig::Affine { kappa } => GSpec::Affine { kappa },
        GConfig::Log { c1, c2 } => GSpec::Log { c1, c2 },
        GConfig::AutoAffine => {
            let u_mid = 0.5 * (cfg.reputation.u_min + cfg.reputation.u_max);
            let mut total = 0.0;
            for gws in &ap_gateways {
                for &gw in gws {
                    for &dev in &gateway_devices[gw] {
                        total += arrival_mean[dev] * models[device_model[dev]].total_flops();
                    }
                }
            }
            let mean_per_ap = total / j as f64;
            if mean_per_ap <= 0.0 || u_mid <= 0.0 {
                return Err(SimError::Config(
                    "reputation: auto calibration needs positive arrivals and band".into(),
                ));
            }
            GSpec::Affine { kappa: mean_per_ap / u_mid }
        }
    };

    let scn = Scenario {
        device_gateway,
        gateway_ap,
        gateway_devices,
        ap_gateways,
        models,
        device_model,
        arrival_mean,
        gateways,
        aps,
        ap_type,
        ap_type_names,
        channel: cfg.channel.to_params(),
        reputation: ReputationParams {
            alpha: cfg.reputation.alpha,
            beta: cfg.reputation.beta,
            g_spec,
            p0_complement: cfg.reputation.p0_complement,
            u_min: cfg.reputation.u_min,
            u_max: cfg.reputation.u_max,
        },
    };
    scn.validate()?;
    Ok(scn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus;

    #[test]
    fn reference_validates_and_builds() {
        let cfg = ExperimentConfig::reference();
        cfg.validate().unwrap();
        let scn = build_scenario(&cfg, 1).unwrap();
        assert_eq!(scn.n_devices(), 60);
        assert_eq!(scn.n_gateways(), 20);
        assert_eq!(scn.n_aps(), 4);
        assert!(scn.gateway_devices.iter().all(|d| d.len() == 3));
        assert!(scn.ap_gateways.iter().all(|g| g.len() == 5));
        // Types alternate; arrivals follow the AP's type.
        assert_eq!(scn.ap_type, vec![0, 1, 0, 1]);
        let dev_of_ap0 = scn.gateway_devices[scn.ap_gateways[0][0]][0];
        let dev_of_ap1 = scn.gateway_devices[scn.ap_gateways[1][0]][0];
        assert_eq!(scn.arrival_mean[dev_of_ap0], 100.0);
        assert_eq!(scn.arrival_mean[dev_of_ap1], 50.0);
    }

    #[test]
    fn auto_kappa_pins_mean_full_offload_at_band_middle() {
        let cfg = ExperimentConfig::reference();
        let scn = build_scenario(&cfg, 7).unwrap();
        // Per gateway: two VGG-11 profiles and one CNN profile.
        let per_gw = 2.0 * 343_484_416.0 + 8_519_936.0;
        let t1 = 100.0 * per_gw * 5.0;
        let t2 = 50.0 * per_gw * 5.0;
        let kappa = (2.0 * t1 + 2.0 * t2) / 4.0 / 50.0;
        match scn.reputation.g_spec {
            GSpec::Affine { kappa: k } => assert_eq!(k, kappa),
            _ => panic!("expected affine"),
        }
        // Full offload maps the two types symmetrically around 50.
        let u1 = consensus::reputation(&scn.reputation, t1);
        let u2 = consensus::reputation(&scn.reputation, t2);
        assert!((u1 - 200.0 / 3.0).abs() < 1e-9);
        assert!((u2 - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn n0_conversion_is_per_hertz_watts() {
        let cfg = ExperimentConfig::reference();
        let ch = cfg.channel.to_params();
        assert!((ch.n0 - 3.9810717055349565e-21).abs() < 1e-33);
    }

    #[test]
    fn topology_draws_stay_in_declared_ranges() {
        let cfg = ExperimentConfig::reference();
        for seed in [1, 2, 3, 99] {
            let scn = build_scenario(&cfg, seed).unwrap();
            for gw in &scn.gateways {
                assert!(gw.f_g >= 1e6 && gw.f_g <= 1e7);
                assert!(gw.dist > 0.0 && gw.dist <= 50.0);
            }
        }
    }

    #[test]
    fn same_seed_same_scenario_different_seed_different_draws() {
        let cfg = ExperimentConfig::reference();
        let a = build_scenario(&cfg, 5).unwrap();
        let b = build_scenario(&cfg, 5).unwrap();
        assert_eq!(
            a.gateways.iter().map(|g| g.f_g).collect::<Vec<_>>(),
            b.gateways.iter().map(|g| g.f_g).collect::<Vec<_>>()
        );
        let c = build_scenario(&cfg, 6).unwrap();
        assert_ne!(
            a.gateways.iter().map(|g| g.f_g).collect::<Vec<_>>(),
            c.gateways.iter().map(|g| g.f_g).collect::<Vec<_>>()
        );
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::reference();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn explicit_topology_builds() {
        let mut cfg = ExperimentConfig::reference();
        cfg.topology = TopologyConfig::Explicit {
            device_gateway: vec![0, 0, 1],
            gateway_ap: vec![0, 0],
        };
        let scn = build_scenario(&cfg, 1).unwrap();
        assert_eq!(scn.n_devices(), 3);
        assert_eq!(scn.n_gateways(), 2);
        assert_eq!(scn.n_aps(), 1);
        assert_eq!(scn.gateway_devices, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn invalid_configs_are_refused() {
        let mut cfg = ExperimentConfig::reference();
        cfg.v_list = vec![];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::reference();
        cfg.v_list = vec![-1.0];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::reference();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::reference();
        cfg.ap.f_min_fraction = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::reference();
        cfg.topology = TopologyConfig::Explicit {
            device_gateway: vec![5],
            gateway_ap: vec![0],
        };
        assert!(cfg.validate().is_err());
    }
}
