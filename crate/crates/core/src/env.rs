//! Network topology, per-slot stochastic realizations, and the
//! physical-layer latency/energy closed forms.
//!
//! The network is a three-tier tree: N devices (each hosting one digital
//! twin) attach to M gateways, which attach to J access points. Per slot,
//! each DT receives `D_n(t)` data points to infer; a partition point `l_n`
//! splits its model between gateway and AP. The closed forms here evaluate
//! the inference, offload, and energy terms for a fixed decision:
//!
//! ```text
//! gateway exec time    sum_n a[n,m] D_n prefix(l_n) / (phiG_m fG_m)
//! gateway exec energy  (vG_m fG_m^2 / phiG_m) sum_n a[n,m] D_n prefix(l_n)
//! channel gain         H_m = h0 rho_m (d0/d_m)^nu
//! uplink rate          R_m = B log2(1 + P_m H_m / (eta_m + N0 B))
//! offload time         sum_n a[n,m] D_n o(l_n) / R_m,  energy = P_m * time
//! AP exec time         sum_n a[n,m] D_n suffix(l_n) / (phiA fA_m)
//! AP exec energy       (vA fA_m^2 / phiA) sum_n a[n,m] D_n suffix(l_n)
//! slot latency         max_m (exec,G + off + exec,A) + tau_bloc
//! ```

use serde::{Deserialize, Serialize};

use crate::consensus::ReputationParams;
use crate::error::{Result, SimError};
use crate::profile::ModelProfile;
use crate::rng;

/// Per-gateway physical parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayParams {
    /// FLOPs per CPU cycle.
    pub phi_g: f64,
    /// Fixed compute frequency in Hz.
    pub f_g: f64,
    /// Effective switched capacitance in J*s^2.
    pub v_g: f64,
    /// Transmit power in W.
    pub tx_power: f64,
    /// Distance to the serving AP in m.
    pub dist: f64,
    /// Maximum per-slot energy arrival in J.
    pub e_g_max: f64,
}

/// Per-AP compute parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApParams {
    /// FLOPs per CPU cycle.
    pub phi_a: f64,
    /// Effective switched capacitance in J*s^2.
    pub v_a: f64,
    /// Maximum frequency in Hz (bounds both inference shares and mining).
    pub f_max: f64,
    /// Minimum total inference frequency in Hz; keeps bisection brackets
    /// finite. Strictly below f_max.
    pub f_min: f64,
    /// Maximum per-slot energy arrival in J.
    pub e_a_max: f64,
}

/// Uplink channel parameters shared by all gateways.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Path-loss constant (dimensionless).
    pub h0: f64,
    /// Reference distance in m.
    pub d0: f64,
    /// Path-loss exponent.
    pub nu: f64,
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    /// Noise power spectral density in W/Hz (linear).
    pub n0: f64,
    /// Interference mean in W (Gaussian, truncated at zero).
    pub interference_mean: f64,
    /// Interference standard deviation in W.
    pub interference_std: f64,
}

impl ChannelParams {
    /// Noise-floor power over the band in W.
    pub fn noise_power(&self) -> f64 {
        self.n0 * self.bandwidth
    }
}

/// Fully expanded, immutable description of one experiment's network.
///
/// Association is stored both directions: `device_gateway[n]` is the single
/// gateway of device n (column of the 0/1 matrix `a`), `gateway_ap[m]` the
/// single AP of gateway m (matrix `b`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub device_gateway: Vec<usize>,
    pub gateway_ap: Vec<usize>,
    pub gateway_devices: Vec<Vec<usize>>,
    pub ap_gateways: Vec<Vec<usize>>,
    /// Distinct model profiles; `device_model[n]` indexes into this.
    pub models: Vec<ModelProfile>,
    pub device_model: Vec<usize>,
    /// Mean data-point arrivals per DT per slot (Theta_n).
    pub arrival_mean: Vec<f64>,
    pub gateways: Vec<GatewayParams>,
    pub aps: Vec<ApParams>,
    /// AP type index (for per-type reporting), parallel to `aps`.
    pub ap_type: Vec<usize>,
    pub ap_type_names: Vec<String>,
    pub channel: ChannelParams,
    pub reputation: ReputationParams,
}

impl Scenario {
    pub fn n_devices(&self) -> usize {
        self.device_gateway.len()
    }

    pub fn n_gateways(&self) -> usize {
        self.gateway_ap.len()
    }

    pub fn n_aps(&self) -> usize {
        self.ap_gateways.len()
    }

    pub fn model_of(&self, n: usize) -> &ModelProfile {
        &self.models[self.device_model[n]]
    }

    /// Number of layers of DT n's model.
    pub fn layers_of(&self, n: usize) -> usize {
        self.model_of(n).len()
    }

    /// Structural validation of the association maps and parameter signs.
    pub fn validate(&self) -> Result<()> {
        let (n, m, j) = (self.n_devices(), self.n_gateways(), self.n_aps());
        if n == 0 || m == 0 || j == 0 {
            return Err(SimError::Config(
                "topology requires at least one device, gateway, and AP".into(),
            ));
        }
        if self.device_model.len() != n || self.arrival_mean.len() != n {
            return Err(SimError::Config("per-device arrays must have length N".into()));
        }
        if self.gateways.len() != m {
            return Err(SimError::Config("gateway params must have length M".into()));
        }
        if self.aps.len() != j || self.ap_type.len() != j {
            return Err(SimError::Config("AP params must have length J".into()));
        }
        if self.gateway_devices.len() != m {
            return Err(SimError::Config("gateway device lists must have length M".into()));
        }
        for (idx, &g) in self.device_gateway.iter().enumerate() {
            if g >= m {
                return Err(SimError::Config(format!(
                    "device {idx} references gateway {g} >= M={m}"
                )));
            }
            if !self.gateway_devices[g].contains(&idx) {
                return Err(SimError::Config(format!(
                    "inverse map missing device {idx} under gateway {g}"
                )));
            }
        }
        for (idx, &a) in self.gateway_ap.iter().enumerate() {
            if a >= j {
                return Err(SimError::Config(format!(
                    "gateway {idx} references AP {a} >= J={j}"
                )));
            }
        }
        for (idx, &mi) in self.device_model.iter().enumerate() {
            if mi >= self.models.len() {
                return Err(SimError::Config(format!(
                    "device {idx} references model {mi} out of range"
                )));
            }
        }
        for (idx, gw) in self.gateways.iter().enumerate() {
            for (name, v) in [
                ("phi_g", gw.phi_g),
                ("f_g", gw.f_g),
                ("v_g", gw.v_g),
                ("tx_power", gw.tx_power),
                ("dist", gw.dist),
            ] {
                if v <= 0.0 {
                    return Err(SimError::Config(format!(
                        "gateway {idx}: {name} must be > 0"
                    )));
                }
            }
            if gw.e_g_max < 0.0 {
                return Err(SimError::Config(format!(
                    "gateway {idx}: e_g_max must be >= 0"
                )));
            }
        }
        for (idx, ap) in self.aps.iter().enumerate() {
            if ap.phi_a <= 0.0 || ap.v_a <= 0.0 || ap.f_max <= 0.0 {
                return Err(SimError::Config(format!(
                    "ap {idx}: phi_a, v_a, f_max must be > 0"
                )));
            }
            if !(ap.f_min > 0.0 && ap.f_min < ap.f_max) {
                return Err(SimError::Config(format!(
                    "ap {idx}: need 0 < f_min < f_max"
                )));
            }
            if ap.e_a_max < 0.0 {
                return Err(SimError::Config(format!("ap {idx}: e_a_max must be >= 0")));
            }
            let members = self.ap_gateways[idx].len() as f64;
            if members * ap.f_min > ap.f_max {
                return Err(SimError::Config(format!(
                    "ap {idx}: {members} member shares at the f_min floor exceed f_max"
                )));
            }
        }
        let ch = &self.channel;
        if ch.h0 <= 0.0 || ch.d0 <= 0.0 || ch.bandwidth <= 0.0 || ch.n0 <= 0.0 || ch.nu <= 0.0 {
            return Err(SimError::Config(
                "channel: h0, d0, nu, bandwidth, n0 must be > 0".into(),
            ));
        }
        if ch.interference_std < 0.0 || ch.interference_mean < 0.0 {
            return Err(SimError::Config(
                "channel: interference moments must be >= 0".into(),
            ));
        }
        self.reputation.validate()?;
        Ok(())
    }
}

/// One slot's random draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRealization {
    /// Per-device data-point arrivals D_n(t) (exponential, mean Theta_n).
    pub d: Vec<f64>,
    /// Per-gateway fading gains rho_m(t) (exponential, unit mean).
    pub rho: Vec<f64>,
    /// Per-gateway interference eta_m(t) in W (Gaussian truncated at 0).
    pub eta: Vec<f64>,
    /// Per-gateway energy arrivals E_m^G(t) in J (uniform [0, max]).
    pub e_g: Vec<f64>,
    /// Per-AP energy arrivals E_j^A(t) in J (uniform [0, max]).
    pub e_a: Vec<f64>,
}

/// Samples slot `t` of run `seed`. The draw order is fixed (D, rho, eta,
/// E_G, E_A) and the stream is keyed by `(seed, t)` only, so realizations
/// are identical across policies, V values, and thread schedules.
pub fn sample_slot(scn: &Scenario, seed: u64, t: u64) -> SlotRealization {
    let mut r = rng::slot_rng(seed, t);
    let d = scn
        .arrival_mean
        .iter()
        .map(|&mean| rng::exponential(&mut r, mean))
        .collect();
    let rho = (0..scn.n_gateways())
        .map(|_| rng::exponential(&mut r, 1.0))
        .collect();
    let eta = (0..scn.n_gateways())
        .map(|_| {
            rng::gaussian_nonneg(
                &mut r,
                scn.channel.interference_mean,
                scn.channel.interference_std,
            )
        })
        .collect();
    let e_g = scn
        .gateways
        .iter()
        .map(|gw| rng::uniform(&mut r, 0.0, 1.0) * gw.e_g_max)
        .collect();
    let e_a = scn
        .aps
        .iter()
        .map(|ap| rng::uniform(&mut r, 0.0, 1.0) * ap.e_a_max)
        .collect();
    SlotRealization { d, rho, eta, e_g, e_a }
}

/// Uplink channel power gain H = h0 * rho * (d0/d)^nu.
pub fn channel_gain(ch: &ChannelParams, gw: &GatewayParams, rho: f64) -> Result<f64> {
    if gw.dist <= 0.0 {
        return Err(SimError::Config("channel gain requires d > 0".into()));
    }
    Ok(ch.h0 * rho * (ch.d0 / gw.dist).powf(ch.nu))
}

/// Shannon uplink rate R = B log2(1 + P H / (eta + N0 B)) in bits/s.
pub fn uplink_rate(ch: &ChannelParams, gw: &GatewayParams, h: f64, eta: f64) -> f64 {
    let snr = gw.tx_power * h / (eta + ch.noise_power());
    ch.bandwidth * (1.0 + snr).log2()
}

fn check_partition(scn: &Scenario, n: usize, l: usize) -> Result<()> {
    let max = scn.layers_of(n);
    if l < 1 || l > max {
        return Err(SimError::PartitionOutOfRange { dt: n, l, max });
    }
    Ok(())
}

/// Gateway inference time for gateway m: prefix work over phiG * fG.
pub fn gateway_inference_time(
    scn: &Scenario,
    m: usize,
    d: &[f64],
    l: &[usize],
) -> Result<f64> {
    let gw = &scn.gateways[m];
    let mut work = 0.0;
    for &n in &scn.gateway_devices[m] {
        check_partition(scn, n, l[n])?;
        work += d[n] * scn.model_of(n).prefix_flops(l[n])?;
    }
    Ok(work / (gw.phi_g * gw.f_g))
}

/// Gateway inference energy: (vG fG^2 / phiG) * prefix work.
pub fn gateway_inference_energy(
    scn: &Scenario,
    m: usize,
    d: &[f64],
    l: &[usize],
) -> Result<f64> {
    let gw = &scn.gateways[m];
    let mut work = 0.0;
    for &n in &scn.gateway_devices[m] {
        check_partition(scn, n, l[n])?;
        work += d[n] * scn.model_of(n).prefix_flops(l[n])?;
    }
    Ok(gw.v_g * gw.f_g * gw.f_g / gw.phi_g * work)
}

/// Offload transmission time for gateway m at uplink rate `rate`.
pub fn offload_time(scn: &Scenario, m: usize, d: &[f64], l: &[usize], rate: f64) -> Result<f64> {
    let mut payload = 0.0;
    for &n in &scn.gateway_devices[m] {
        check_partition(scn, n, l[n])?;
        payload += d[n] * scn.model_of(n).output_bits(l[n])?;
    }
    if payload == 0.0 {
        return Ok(0.0);
    }
    if rate <= 0.0 {
        return Err(SimError::Solver(format!(
            "gateway {m}: zero uplink rate with positive payload"
        )));
    }
    Ok(payload / rate)
}

/// Offload transmission energy: transmit power times transmission time.
pub fn offload_energy(scn: &Scenario, m: usize, d: &[f64], l: &[usize], rate: f64) -> Result<f64> {
    Ok(scn.gateways[m].tx_power * offload_time(scn, m, d, l, rate)?)
}

/// AP-side inference time of gateway m's suffix workload at share f_a.
pub fn ap_inference_time(
    scn: &Scenario,
    m: usize,
    d: &[f64],
    l: &[usize],
    f_a: f64,
) -> Result<f64> {
    let ap = &scn.aps[scn.gateway_ap[m]];
    let mut work = 0.0;
    for &n in &scn.gateway_devices[m] {
        check_partition(scn, n, l[n])?;
        work += d[n] * scn.model_of(n).suffix_flops(l[n])?;
    }
    if work == 0.0 {
        return Ok(0.0);
    }
    if f_a <= 0.0 {
        return Err(SimError::Solver(format!(
            "gateway {m}: zero AP frequency share with positive suffix workload"
        )));
    }
    Ok(work / (ap.phi_a * f_a))
}

/// AP-side inference energy of gateway m's suffix workload at share f_a.
pub fn ap_inference_energy(
    scn: &Scenario,
    m: usize,
    d: &[f64],
    l: &[usize],
    f_a: f64,
) -> Result<f64> {
    let ap = &scn.aps[scn.gateway_ap[m]];
    let mut work = 0.0;
    for &n in &scn.gateway_devices[m] {
        check_partition(scn, n, l[n])?;
        work += d[n] * scn.model_of(n).suffix_flops(l[n])?;
    }
    Ok(ap.v_a * f_a * f_a / ap.phi_a * work)
}

/// System latency: slowest gateway chain plus block-generation time.
pub fn slot_latency(chain: &[f64], tau_bloc: f64) -> f64 {
    chain.iter().copied().fold(0.0_f64, f64::max) + tau_bloc
}

/// Total gateway energy (execution + offload).
pub fn gateway_energy(e_exe_g: f64, e_off: f64) -> f64 {
    e_exe_g + e_off
}

/// Total AP energy (all member-gateway inference shares + block mining).
pub fn ap_energy(e_exe_a: &[f64], e_bloc: f64) -> f64 {
    e_exe_a.iter().sum::<f64>() + e_bloc
}
