//! Shared machinery for the three per-slot subproblem solvers.
//!
//! A [`Slot`] precomputes every decision-independent quantity of one
//! realization: uplink rates and, per DT and candidate partition point,
//! the gateway-side time, the gateway energy (execution plus offload),
//! and the AP-side FLOPs. The solvers and the objective all read from
//! this cache, so a value computed twice is computed the same way twice.
//!
//! The per-slot objective being minimized is
//!
//! ```text
//! V * (max_m chain_m + tau_bloc) + sum_j (S_j - Q_j) U_j
//! ```
//!
//! where chain_m = gateway time + offload time + AP inference time of
//! gateway m, and tau_bloc comes from the consensus race (or a fixed
//! difficulty under the corresponding baseline).

pub mod fa;
pub mod fbloc;
pub mod partition;

use serde::{Deserialize, Serialize};

use crate::consensus;
use crate::env::{sample_slot, Scenario, SlotRealization};
use crate::error::{Result, SimError};
use crate::queues::AuxQueues;

/// What to do when no partition assignment satisfies the gateway energy
/// constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasMode {
    /// Abort the slot with an error.
    Strict,
    /// Pin the offending gateway's DTs to their minimal-excess partition
    /// points, record the violation, and keep going.
    Lenient,
}

/// Controller knobs: the latency weight and the solver tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovParams {
    /// Latency weight V in the drift-plus-penalty objective.
    pub v: f64,
    /// Maximum block-coordinate-descent rounds per slot.
    pub bcd_max_rounds: u32,
    /// Relative objective improvement below which BCD stops.
    pub bcd_tol: f64,
    /// Relative width at which bisections stop.
    pub bisection_tol: f64,
    /// Iteration cap per bisection.
    pub bisection_max_iters: u32,
    /// Node cap for the partition branch-and-bound, summed over cases.
    pub bnb_node_budget: u64,
    /// Gateway-energy infeasibility handling.
    pub mode: FeasMode,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        LyapunovParams {
            v: 1e4,
            bcd_max_rounds: 4,
            bcd_tol: 1e-6,
            bisection_tol: 1e-9,
            bisection_max_iters: 100,
            bnb_node_budget: 25_000,
            mode: FeasMode::Lenient,
        }
    }
}

impl LyapunovParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0) {
            return Err(SimError::Config(format!("V must be > 0, got {}", self.v)));
        }
        if !(self.bcd_tol > 0.0) || !(self.bisection_tol > 0.0) {
            return Err(SimError::Config("solver tolerances must be > 0".into()));
        }
        if self.bcd_max_rounds == 0 || self.bisection_max_iters == 0 {
            return Err(SimError::Config("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

/// How block times respond to the partition decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockModel {
    /// Difficulty follows reputation: gamma_j = exp(-alpha U_j - beta).
    Reputation,
    /// Difficulty pinned to a constant for every AP.
    FixedGamma(f64),
}

impl BlockModel {
    /// Rate factor 1/gamma_j of AP j at reputation u.
    pub fn inv_gamma(&self, scn: &Scenario, u: f64) -> f64 {
        match *self {
            BlockModel::Reputation => {
                (scn.reputation.alpha * u + scn.reputation.beta).exp()
            }
            BlockModel::FixedGamma(g) => 1.0 / g,
        }
    }
}

/// Which terms the per-slot objective carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub block: BlockModel,
    /// Whether the (S - Q) U reputation term participates.
    pub queue_term: bool,
}

impl ObjectiveSpec {
    pub fn reputation() -> Self {
        ObjectiveSpec { block: BlockModel::Reputation, queue_term: true }
    }
}

/// One slot's control decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Per-DT partition point, 1..=L_n (layers run on the gateway).
    pub l: Vec<usize>,
    /// Per-gateway share of its AP's inference frequency, Hz.
    pub f_a: Vec<f64>,
    /// Per-AP block-mining frequency, Hz.
    pub f_bloc: Vec<f64>,
}

/// Solver health counters accumulated over one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Bisections that hit the iteration cap before the width tolerance.
    pub bisection_cap_hits: u32,
    /// Bracket expansions needed to enclose a block-time optimum.
    pub bracket_expansions: u32,
    /// Branch-and-bound nodes expanded.
    pub bnb_nodes: u64,
    /// Partition solves that exhausted the node budget (result returned
    /// but not proven optimal).
    pub bnb_unproven: u32,
    /// Gateways whose energy constraint was unsatisfiable at every
    /// partition point (lenient mode pins them and keeps going).
    pub c4_violations: u32,
    /// Total energy excess of those gateways, J.
    pub c4_excess: f64,
    /// Slots where even the pinned fallback left a constraint violated.
    pub c5_violations: u32,
}

impl SolveStats {
    pub fn absorb(&mut self, other: &SolveStats) {
        self.bisection_cap_hits += other.bisection_cap_hits;
        self.bracket_expansions += other.bracket_expansions;
        self.bnb_nodes += other.bnb_nodes;
        self.bnb_unproven += other.bnb_unproven;
        self.c4_violations += other.c4_violations;
        self.c4_excess += other.c4_excess;
        self.c5_violations += other.c5_violations;
    }
}

/// One slot's realization plus every decision-independent precomputation.
#[derive(Debug, Clone)]
pub struct Slot<'a> {
    pub scn: &'a Scenario,
    pub real: SlotRealization,
    pub t: u64,
    /// Per-gateway uplink rate, bits/s.
    pub rate: Vec<f64>,
    /// fixed_time[n][l-1]: gateway execution + offload time of DT n at
    /// partition l (everything in DT n's chain except the AP share).
    pub fixed_time: Vec<Vec<f64>>,
    /// e_g[n][l-1]: gateway execution + offload energy of DT n at l.
    pub e_g: Vec<Vec<f64>>,
    /// suffix[n][l-1]: D_n * suffix FLOPs of DT n at l (AP-side work).
    pub suffix: Vec<Vec<f64>>,
}

impl<'a> Slot<'a> {
    /// Samples slot `t` and builds the evaluation cache.
    pub fn sample(scn: &'a Scenario, seed: u64, t: u64) -> Result<Slot<'a>> {
        Slot::build(scn, sample_slot(scn, seed, t), t)
    }

    pub fn build(scn: &'a Scenario, real: SlotRealization, t: u64) -> Result<Slot<'a>> {
        let rate: Vec<f64> = (0..scn.n_gateways())
            .map(|m| {
                let gw = &scn.gateways[m];
                let h = crate::env::channel_gain(&scn.channel, gw, real.rho[m])?;
                Ok(crate::env::uplink_rate(&scn.channel, gw, h, real.eta[m]))
            })
            .collect::<Result<_>>()?;
        let n_dts = scn.n_devices();
        let mut fixed_time = Vec::with_capacity(n_dts);
        let mut e_g = Vec::with_capacity(n_dts);
        let mut suffix = Vec::with_capacity(n_dts);
        for n in 0..n_dts {
            let m = scn.device_gateway[n];
            let gw = &scn.gateways[m];
            let model = scn.model_of(n);
            let len = model.len();
            let d = real.d[n];
            let mut ft = Vec::with_capacity(len);
            let mut eg = Vec::with_capacity(len);
            let mut sf = Vec::with_capacity(len);
            for l in 1..=len {
                let prefix = d * model.prefix_flops(l)?;
                let bits = d * model.output_bits(l)?;
                let suf = d * model.suffix_flops(l)?;
                let t_exe = prefix / (gw.phi_g * gw.f_g);
                let t_off = if bits == 0.0 {
                    0.0
                } else if rate[m] > 0.0 {
                    bits / rate[m]
                } else {
                    f64::INFINITY
                };
                ft.push(t_exe + t_off);
                let e_exe = gw.v_g * gw.f_g * gw.f_g / gw.phi_g * prefix;
                let e_off = if t_off.is_finite() {
                    gw.tx_power * t_off
                } else {
                    f64::INFINITY
                };
                eg.push(e_exe + e_off);
                sf.push(suf);
            }
            fixed_time.push(ft);
            e_g.push(eg);
            suffix.push(sf);
        }
        Ok(Slot { scn, real, t, rate, fixed_time, e_g, suffix })
    }

    /// AP-side FLOPs of gateway m's workload at partition `l`.
    pub fn suffix_work(&self, m: usize, l: &[usize]) -> f64 {
        self.scn.gateway_devices[m]
            .iter()
            .map(|&n| self.suffix[n][l[n] - 1])
            .sum()
    }

    /// Chain time of gateway m: execution + offload + AP share.
    pub fn chain_time(&self, m: usize, l: &[usize], f_a_m: f64) -> f64 {
        let fixed: f64 = self.scn.gateway_devices[m]
            .iter()
            .map(|&n| self.fixed_time[n][l[n] - 1])
            .sum();
        let work = self.suffix_work(m, l);
        if work == 0.0 {
            fixed
        } else if f_a_m > 0.0 {
            fixed + work / (self.scn.aps[self.scn.gateway_ap[m]].phi_a * f_a_m)
        } else {
            f64::INFINITY
        }
    }

    /// Gateway m's energy spend (execution + offload), which depends only
    /// on the partition points.
    pub fn gateway_energy(&self, m: usize, l: &[usize]) -> f64 {
        self.scn.gateway_devices[m]
            .iter()
            .map(|&n| self.e_g[n][l[n] - 1])
            .sum()
    }

    /// AP-side inference energy of gateway m's workload at share f_a_m.
    pub fn ap_exec_energy(&self, m: usize, l: &[usize], f_a_m: f64) -> f64 {
        let ap = &self.scn.aps[self.scn.gateway_ap[m]];
        ap.v_a * f_a_m * f_a_m / ap.phi_a * self.suffix_work(m, l)
    }

    /// Per-AP offloaded FLOPs O_j.
    pub fn offload_volumes(&self, l: &[usize]) -> Vec<f64> {
        let mut o = vec![0.0; self.scn.n_aps()];
        for j in 0..self.scn.n_aps() {
            for &m in &self.scn.ap_gateways[j] {
                o[j] += self.suffix_work(m, l);
            }
        }
        o
    }

    /// Reputations, total race rate, and block time for offload volumes
    /// `o` under the given block model.
    pub fn race(
        &self,
        spec: &ObjectiveSpec,
        o: &[f64],
        f_bloc: &[f64],
    ) -> Result<(Vec<f64>, f64, f64)> {
        let u: Vec<f64> = o
            .iter()
            .map(|&oj| consensus::reputation(&self.scn.reputation, oj))
            .collect();
        let theta_hat: f64 = f_bloc
            .iter()
            .zip(&u)
            .map(|(&f, &uj)| f * spec.block.inv_gamma(self.scn, uj))
            .sum();
        if theta_hat <= 0.0 {
            return Err(SimError::NoMiner);
        }
        let tau_bloc = self.scn.reputation.quantile_factor() / theta_hat;
        Ok((u, theta_hat, tau_bloc))
    }

    /// Per-AP inference energy sums at the given shares.
    pub fn ap_exec_energies(&self, l: &[usize], f_a: &[f64]) -> Vec<f64> {
        (0..self.scn.n_aps())
            .map(|j| {
                self.scn.ap_gateways[j]
                    .iter()
                    .map(|&m| self.ap_exec_energy(m, l, f_a[m]))
                    .sum()
            })
            .collect()
    }

    /// The drift-plus-penalty objective of a full decision:
    /// V (max_m chain_m + tau_bloc) + sum_j (S_j - Q_j) U_j.
    pub fn objective(
        &self,
        dec: &Decision,
        queues: &AuxQueues,
        spec: &ObjectiveSpec,
        v: f64,
    ) -> Result<f64> {
        let chain_max = (0..self.scn.n_gateways())
            .map(|m| self.chain_time(m, &dec.l, dec.f_a[m]))
            .fold(0.0_f64, f64::max);
        let o = self.offload_volumes(&dec.l);
        let (u, _, tau_bloc) = self.race(spec, &o, &dec.f_bloc)?;
        let mut obj = v * (chain_max + tau_bloc);
        if spec.queue_term {
            for j in 0..self.scn.n_aps() {
                obj += queues.weight(j) * u[j];
            }
        }
        Ok(obj)
    }

    /// Constraint slacks of a decision (negative means satisfied).
    pub fn feasibility(&self, dec: &Decision, spec: &ObjectiveSpec) -> Result<FeasReport> {
        let scn = self.scn;
        for (n, &ln) in dec.l.iter().enumerate() {
            let max = scn.layers_of(n);
            if ln < 1 || ln > max {
                return Err(SimError::PartitionOutOfRange { dt: n, l: ln, max });
            }
        }
        let c2: Vec<f64> = (0..scn.n_aps())
            .map(|j| {
                scn.ap_gateways[j].iter().map(|&m| dec.f_a[m]).sum::<f64>()
                    - scn.aps[j].f_max
            })
            .collect();
        let c3: Vec<f64> = (0..scn.n_aps())
            .map(|j| (dec.f_bloc[j] - scn.aps[j].f_max).max(-dec.f_bloc[j]))
            .collect();
        let c4: Vec<f64> = (0..scn.n_gateways())
            .map(|m| self.gateway_energy(m, &dec.l) - self.real.e_g[m])
            .collect();
        let o = self.offload_volumes(&dec.l);
        let (_, _, tau_bloc) = self.race(spec, &o, &dec.f_bloc)?;
        let e_exe = self.ap_exec_energies(&dec.l, &dec.f_a);
        let c5: Vec<f64> = (0..scn.n_aps())
            .map(|j| {
                e_exe[j] + consensus::block_energy(scn.aps[j].v_a, tau_bloc, dec.f_bloc[j])
                    - self.real.e_a[j]
            })
            .collect();
        Ok(FeasReport { c2, c3, c4, c5 })
    }
}

/// Signed constraint slacks; a decision is feasible when every entry is
/// at most a small relative tolerance above zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasReport {
    /// Per-AP: sum of member shares minus f_max.
    pub c2: Vec<f64>,
    /// Per-AP: block frequency outside [0, f_max] (max of both sides).
    pub c3: Vec<f64>,
    /// Per-gateway: energy spend minus arrival.
    pub c4: Vec<f64>,
    /// Per-AP: inference + mining energy minus arrival.
    pub c5: Vec<f64>,
}

impl FeasReport {
    /// Largest violation, normalized by the matching budget magnitude.
    pub fn worst(&self) -> f64 {
        self.c2
            .iter()
            .chain(&self.c3)
            .chain(&self.c4)
            .chain(&self.c5)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn ok(&self, abs_tol: f64) -> bool {
        self.worst() <= abs_tol
    }
}
