//! Partition-point subproblem: case analysis over the makespan maximizer
//! plus branch and bound within each case.
//!
//! With frequencies fixed, picking l changes three things at once: the
//! chain times (which gateway is slowest), the per-AP offloaded FLOPs
//! (hence reputation, block time, and mining energy), and the energy
//! spend on both tiers. The objective splits per case i ("gateway i is
//! the slowest") into
//!
//! ```text
//! V chain_i(l) + V tau_bloc(O(l)) + sum_j (S_j - Q_j) g(O_j(l))
//! ```
//!
//! subject to chain_m <= chain_i for all m, the gateway energy budgets
//! (which depend on l alone), and the AP energy budgets (inference at the
//! fixed shares plus mining for tau_bloc(O(l))). Every term is monotone
//! or separable in the per-DT suffix FLOPs, so interval bounds over the
//! unfixed DTs give valid lower bounds and the usual prefix-fixing branch
//! and bound applies.
//!
//! The search runs in two stages. The branch and bound collects the
//! [`POOL_CAP`] best feasible assignments measured by the time part
//! chain_max + tau alone, which does not depend on V or on the queue
//! backlogs; the final assignment is then the exact objective argmin over
//! that pool plus the warm start. Splitting this way keeps the explored
//! set identical across V at equal queue state, so sweeping V changes the
//! outcome only through the objective itself and never through where a
//! truncated search happened to stop. When the pool never fills (small
//! instances), nothing is pruned against it and the two-stage result
//! equals exhaustive enumeration. Ties resolve to the lowest case index,
//! then the lexicographically smallest l.

use std::collections::BTreeSet;

use crate::consensus;
use crate::error::{Result, SimError};
use crate::queues::AuxQueues;
use crate::solver::{Decision, FeasMode, LyapunovParams, ObjectiveSpec, Slot, SolveStats};

/// Relative slack for energy comparisons.
const E_TOL: f64 = 1e-9;
/// Relative slack for time comparisons in bounds (leaves compare exactly).
const T_TOL: f64 = 1e-12;
/// Candidate assignments kept by the time-part search. Must exceed the
/// assignment count of any instance where exactness is expected.
const POOL_CAP: usize = 1024;

/// Feasible leaf ordered by (time part, makespan case, assignment). The
/// time part is nonnegative and finite, so its bit pattern orders like
/// the number itself.
type PoolKey = (u64, usize, Vec<usize>);

/// Bounded candidate pool: the POOL_CAP smallest keys seen so far.
#[derive(Default)]
struct Pool {
    set: BTreeSet<PoolKey>,
}

impl Pool {
    fn insert(&mut self, a: f64, case: usize, l: &[usize]) {
        if self.set.len() == POOL_CAP {
            let worst = self.set.last().expect("nonempty at cap");
            if (a.to_bits(), case, l) >= (worst.0, worst.1, worst.2.as_slice()) {
                return;
            }
        }
        self.set.insert((a.to_bits(), case, l.to_vec()));
        if self.set.len() > POOL_CAP {
            self.set.pop_last();
        }
    }

    /// Weakest time part still held, once the pool is full. Searches may
    /// prune nodes whose time-part bound exceeds this strictly.
    fn prune_at(&self) -> Option<f64> {
        if self.set.len() == POOL_CAP {
            self.set.last().map(|k| f64::from_bits(k.0))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
struct Incumbent {
    obj: f64,
    case: usize,
    l: Vec<usize>,
    found: bool,
}

impl Incumbent {
    fn none(n: usize) -> Self {
        Incumbent { obj: f64::INFINITY, case: usize::MAX, l: vec![1; n], found: false }
    }

    /// Lexicographic (objective, case, l) improvement test.
    fn improved_by(&self, obj: f64, case: usize, l: &[usize]) -> bool {
        if !self.found {
            return true;
        }
        if obj != self.obj {
            return obj < self.obj;
        }
        if case != self.case {
            return case < self.case;
        }
        l < self.l.as_slice()
    }

    fn replace(&mut self, obj: f64, case: usize, l: &[usize]) {
        self.obj = obj;
        self.case = case;
        self.l.clear();
        self.l.extend_from_slice(l);
        self.found = true;
    }
}

struct FullEval {
    /// Time part chain_max + tau: independent of V and queue backlogs.
    a: f64,
    chain_max: f64,
    /// Per-AP offloaded FLOPs of this assignment.
    o: Vec<f64>,
    /// Lowest gateway index attaining the makespan.
    argmax: usize,
    /// Gateway and AP energy budgets respected (excused gateways skipped).
    ok: bool,
}

/// Precomputed tables and domains for one partition solve.
struct Workspace<'s, 'a> {
    slot: &'s Slot<'a>,
    f_a: &'s [f64],
    f_bloc: &'s [f64],
    v: f64,
    /// Per-AP queue weight S_j - Q_j (zero when the term is disabled).
    w: Vec<f64>,
    /// Per-AP 1/gamma as a function of offloaded FLOPs.
    inv_gamma: InvGamma,
    /// Per-AP v_j f_bloc_j^3, so e_bloc_j = mine_coeff_j * tau.
    mine_coeff: Vec<f64>,
    qf: f64,
    /// ct[n][l-1]: DT n's own chain contribution at the fixed share.
    ct: Vec<Vec<f64>>,
    /// ea[n][l-1]: DT n's AP-side inference energy at the fixed share.
    ea: Vec<Vec<f64>>,
    /// Allowed partition points per DT, ascending.
    dom: Vec<Vec<usize>>,
    /// Gateways whose energy budget is unsatisfiable (lenient mode only):
    /// pinned to minimal excess and excluded from feasibility verdicts.
    excused: Vec<bool>,
    /// DTs in branch order: slot workload (D_n * model FLOPs) descending.
    order: Vec<usize>,
}

enum InvGamma {
    Reputation,
    Fixed(f64),
}

impl<'s, 'a> Workspace<'s, 'a> {
    fn inv_gamma_of(&self, o: f64) -> f64 {
        match self.inv_gamma {
            InvGamma::Reputation => {
                let rep = &self.slot.scn.reputation;
                (rep.alpha * consensus::reputation(rep, o) + rep.beta).exp()
            }
            InvGamma::Fixed(inv) => inv,
        }
    }

    /// Block time when each AP offloads o_j FLOPs.
    fn tau_of(&self, o: &[f64]) -> f64 {
        let theta: f64 = self
            .f_bloc
            .iter()
            .zip(o)
            .map(|(&f, &oj)| f * self.inv_gamma_of(oj))
            .sum();
        self.qf / theta
    }

    fn new(
        slot: &'s Slot<'a>,
        dec: &'s Decision,
        queues: &AuxQueues,
        spec: &ObjectiveSpec,
        params: &LyapunovParams,
        stats: &mut SolveStats,
    ) -> Result<(Self, Vec<usize>)> {
        let scn = slot.scn;
        if dec.f_bloc.iter().all(|&f| f <= 0.0) {
            return Err(SimError::NoMiner);
        }
        let n_dts = scn.n_devices();
        let mut ct = Vec::with_capacity(n_dts);
        let mut ea = Vec::with_capacity(n_dts);
        for n in 0..n_dts {
            let m = scn.device_gateway[n];
            let ap = &scn.aps[scn.gateway_ap[m]];
            let f_m = dec.f_a[m];
            let coeff_t = ap.phi_a * f_m;
            let coeff_e = ap.v_a * f_m * f_m / ap.phi_a;
            let len = scn.layers_of(n);
            let mut ct_n = Vec::with_capacity(len);
            let mut ea_n = Vec::with_capacity(len);
            for li in 0..len {
                let suf = slot.suffix[n][li];
                let t_ap = if suf == 0.0 {
                    0.0
                } else if coeff_t > 0.0 {
                    suf / coeff_t
                } else {
                    f64::INFINITY
                };
                ct_n.push(slot.fixed_time[n][li] + t_ap);
                ea_n.push(coeff_e * suf);
            }
            ct.push(ct_n);
            ea.push(ea_n);
        }

        let w = (0..scn.n_aps())
            .map(|j| if spec.queue_term { queues.weight(j) } else { 0.0 })
            .collect();
        let inv_gamma = match spec.block {
            crate::solver::BlockModel::Reputation => InvGamma::Reputation,
            crate::solver::BlockModel::FixedGamma(g) => InvGamma::Fixed(1.0 / g),
        };
        let mine_coeff = scn
            .aps
            .iter()
            .zip(&dec.f_bloc)
            .map(|(ap, &f)| ap.v_a * f * f * f)
            .collect();

        // Gateway energy pre-pass: a gateway whose cheapest assignment
        // still overshoots its arrival can never be satisfied this slot.
        let mut dom: Vec<Vec<usize>> = (0..n_dts)
            .map(|n| (1..=scn.layers_of(n)).collect())
            .collect();
        let mut excused = vec![false; scn.n_gateways()];
        let mut warm = dec.l.clone();
        for m in 0..scn.n_gateways() {
            let cheapest: f64 = scn.gateway_devices[m]
                .iter()
                .map(|&n| slot.e_g[n].iter().copied().fold(f64::INFINITY, f64::min))
                .sum();
            if scn.gateway_devices[m].is_empty() {
                continue;
            }
            let budget = slot.real.e_g[m];
            if cheapest > budget * (1.0 + E_TOL) {
                if params.mode == FeasMode::Strict {
                    return Err(SimError::InfeasibleSlot {
                        t: slot.t,
                        what: format!(
                            "gateway {m} needs at least {cheapest} J but received {budget} J"
                        ),
                    });
                }
                stats.c4_violations += 1;
                stats.c4_excess += cheapest - budget;
                excused[m] = true;
                for &n in &scn.gateway_devices[m] {
                    let best = argmin_first(&slot.e_g[n]);
                    dom[n] = vec![best + 1];
                    warm[n] = best + 1;
                }
            }
        }

        let mut order: Vec<usize> = (0..n_dts).collect();
        order.sort_by(|&a, &b| {
            let wa = slot.real.d[a] * scn.model_of(a).total_flops();
            let wb = slot.real.d[b] * scn.model_of(b).total_flops();
            wb.partial_cmp(&wa).unwrap().then(a.cmp(&b))
        });

        let ws = Workspace {
            slot,
            f_a: &dec.f_a,
            f_bloc: &dec.f_bloc,
            v: params.v,
            w,
            inv_gamma,
            mine_coeff,
            qf: scn.reputation.quantile_factor(),
            ct,
            ea,
            dom,
            excused,
            order,
        };
        Ok((ws, warm))
    }

    /// Removes partition points that no completion can repair, using one
    /// constraint at a time: the gateway budget against the sum of its
    /// other DTs' cheapest spends, and each AP budget against its other
    /// DTs' cheapest inference spends plus the smallest possible mining
    /// spend (block time at maximal offload everywhere).
    fn tighten_global(&mut self) -> Result<()> {
        let scn = self.slot.scn;
        for _pass in 0..2 {
            let min_eg: Vec<f64> = (0..scn.n_devices())
                .map(|n| self.dom[n].iter().map(|&l| self.slot.e_g[n][l - 1]).fold(f64::INFINITY, f64::min))
                .collect();
            let min_ea: Vec<f64> = (0..scn.n_devices())
                .map(|n| self.dom[n].iter().map(|&l| self.ea[n][l - 1]).fold(f64::INFINITY, f64::min))
                .collect();
            let o_hi: Vec<f64> = (0..scn.n_aps())
                .map(|j| {
                    scn.ap_gateways[j]
                        .iter()
                        .flat_map(|&m| scn.gateway_devices[m].iter())
                        .map(|&n| {
                            self.dom[n]
                                .iter()
                                .map(|&l| self.slot.suffix[n][l - 1])
                                .fold(0.0_f64, f64::max)
                        })
                        .sum()
                })
                .collect();
            let tau_lo = self.tau_of(&o_hi);
            let mut changed = false;
            for n in 0..scn.n_devices() {
                let m = scn.device_gateway[n];
                if self.excused[m] {
                    continue;
                }
                let j = scn.gateway_ap[m];
                let eg_others: f64 = scn.gateway_devices[m]
                    .iter()
                    .filter(|&&n2| n2 != n)
                    .map(|&n2| min_eg[n2])
                    .sum();
                let ea_others: f64 = scn.ap_gateways[j]
                    .iter()
                    .flat_map(|&m2| scn.gateway_devices[m2].iter())
                    .filter(|&&n2| n2 != n)
                    .map(|&n2| min_ea[n2])
                    .sum();
                let eg_budget = self.slot.real.e_g[m] * (1.0 + E_TOL);
                let ea_budget = self.slot.real.e_a[j] * (1.0 + E_TOL)
                    - self.mine_coeff[j] * tau_lo
                    - ea_others;
                let before = self.dom[n].len();
                let (slot_eg, ea_n) = (&self.slot.e_g[n], &self.ea[n]);
                self.dom[n].retain(|&l| {
                    slot_eg[l - 1] + eg_others <= eg_budget && ea_n[l - 1] <= ea_budget
                });
                if self.dom[n].is_empty() {
                    return Err(SimError::InfeasibleSlot {
                        t: self.slot.t,
                        what: format!(
                            "no partition point of DT {n} fits the energy budgets"
                        ),
                    });
                }
                changed |= self.dom[n].len() != before;
            }
            if !changed {
                break;
            }
        }
        Ok(())
    }

    /// Exact objective and feasibility of a complete assignment. `chains`
    /// is scratch space for the per-gateway chain times.
    fn eval_full(&self, l: &[usize], chains: &mut Vec<f64>) -> FullEval {
        let scn = self.slot.scn;
        chains.clear();
        for m in 0..scn.n_gateways() {
            chains.push(self.slot.chain_time(m, l, self.f_a[m]));
        }
        let mut chain_max = 0.0_f64;
        let mut argmax = 0;
        for (m, &c) in chains.iter().enumerate() {
            if c > chain_max {
                chain_max = c;
                argmax = m;
            }
        }
        let o = self.slot.offload_volumes(l);
        let tau = self.tau_of(&o);
        let a = chain_max + tau;
        let mut ok = true;
        for m in 0..scn.n_gateways() {
            if !self.excused[m]
                && self.slot.gateway_energy(m, l) > self.slot.real.e_g[m] * (1.0 + E_TOL)
            {
                ok = false;
            }
        }
        for j in 0..scn.n_aps() {
            let e_exe: f64 = scn.ap_gateways[j]
                .iter()
                .map(|&m| self.slot.ap_exec_energy(m, l, self.f_a[m]))
                .sum();
            if e_exe + self.mine_coeff[j] * tau > self.slot.real.e_a[j] * (1.0 + E_TOL) {
                ok = false;
            }
        }
        FullEval { a, chain_max, o, argmax, ok }
    }

    /// Full objective of an evaluated assignment. With all queue weights
    /// zero the time part alone is returned, so the comparison between
    /// candidates is exactly V-free; scaling by V would order identically
    /// in exact arithmetic but can collapse distinct values when rounded.
    fn score(&self, eval: &FullEval) -> f64 {
        if self.w.iter().all(|&w| w == 0.0) {
            return eval.a;
        }
        let rep = &self.slot.scn.reputation;
        let mut obj = self.v * eval.a;
        for (j, &oj) in eval.o.iter().enumerate() {
            obj += self.w[j] * consensus::reputation(rep, oj);
        }
        obj
    }
}

fn argmin_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// Branch-and-bound state for one case.
struct CaseSearch<'w, 's, 'a> {
    ws: &'w Workspace<'s, 'a>,
    case: usize,
    dom: Vec<Vec<usize>>,
    /// Suffix aggregates over order[idx..]: index [idx][m] or [idx][j].
    rem_ct_min: Vec<Vec<f64>>,
    rem_ct_max: Vec<Vec<f64>>,
    rem_eg_min: Vec<Vec<f64>>,
    rem_ea_min: Vec<Vec<f64>>,
    rem_o_max: Vec<Vec<f64>>,
    /// Per-depth fixed prefix sums (written depth+1 from depth, no undo
    /// drift).
    chain_fixed: Vec<Vec<f64>>,
    eg_fixed: Vec<Vec<f64>>,
    ea_fixed: Vec<Vec<f64>>,
    o_fixed: Vec<Vec<f64>>,
    l: Vec<usize>,
    chains_scratch: Vec<f64>,
}

impl<'w, 's, 'a> CaseSearch<'w, 's, 'a> {
    /// Case-local domain tightening: in case `i`, every other gateway's
    /// chain must fit under chain_i's ceiling, and chain_i must reach the
    /// other chains' floor.
    fn tighten(ws: &'w Workspace<'s, 'a>, case: usize) -> Option<Vec<Vec<usize>>> {
        let scn = ws.slot.scn;
        let mut dom = ws.dom.clone();
        for _pass in 0..2 {
            let min_ct: Vec<f64> = (0..scn.n_devices())
                .map(|n| dom[n].iter().map(|&l| ws.ct[n][l - 1]).fold(f64::INFINITY, f64::min))
                .collect();
            let max_ct: Vec<f64> = (0..scn.n_devices())
                .map(|n| dom[n].iter().map(|&l| ws.ct[n][l - 1]).fold(0.0_f64, f64::max))
                .collect();
            let chain_lo = |m: usize| -> f64 {
                scn.gateway_devices[m].iter().map(|&n| min_ct[n]).sum()
            };
            let chain_hi_i: f64 = scn.gateway_devices[case].iter().map(|&n| max_ct[n]).sum();
            let other_floor = (0..scn.n_gateways())
                .filter(|&m| m != case)
                .map(chain_lo)
                .fold(0.0_f64, f64::max);
            if other_floor > chain_hi_i * (1.0 + T_TOL) {
                return None;
            }
            let mut changed = false;
            for n in 0..scn.n_devices() {
                let m = scn.device_gateway[n];
                let before = dom[n].len();
                if m != case {
                    let others: f64 = scn.gateway_devices[m]
                        .iter()
                        .filter(|&&n2| n2 != n)
                        .map(|&n2| min_ct[n2])
                        .sum();
                    let ceiling = chain_hi_i * (1.0 + T_TOL) - others;
                    let ct_n = &ws.ct[n];
                    dom[n].retain(|&l| ct_n[l - 1] <= ceiling);
                } else {
                    let others: f64 = scn.gateway_devices[m]
                        .iter()
                        .filter(|&&n2| n2 != n)
                        .map(|&n2| max_ct[n2])
                        .sum();
                    let floor = other_floor * (1.0 - T_TOL) - others;
                    let ct_n = &ws.ct[n];
                    dom[n].retain(|&l| ct_n[l - 1] >= floor);
                }
                if dom[n].is_empty() {
                    return None;
                }
                changed |= dom[n].len() != before;
            }
            if !changed {
                break;
            }
        }
        Some(dom)
    }

    fn new(ws: &'w Workspace<'s, 'a>, case: usize) -> Option<Self> {
        let dom = Self::tighten(ws, case)?;
        let scn = ws.slot.scn;
        let (n_ord, m_cnt, j_cnt) = (ws.order.len(), scn.n_gateways(), scn.n_aps());
        let mut s = CaseSearch {
            ws,
            case,
            dom,
            rem_ct_min: vec![vec![0.0; m_cnt]; n_ord + 1],
            rem_ct_max: vec![vec![0.0; m_cnt]; n_ord + 1],
            rem_eg_min: vec![vec![0.0; m_cnt]; n_ord + 1],
            rem_ea_min: vec![vec![0.0; j_cnt]; n_ord + 1],
            rem_o_max: vec![vec![0.0; j_cnt]; n_ord + 1],
            chain_fixed: vec![vec![0.0; m_cnt]; n_ord + 1],
            eg_fixed: vec![vec![0.0; m_cnt]; n_ord + 1],
            ea_fixed: vec![vec![0.0; j_cnt]; n_ord + 1],
            o_fixed: vec![vec![0.0; j_cnt]; n_ord + 1],
            l: vec![1; scn.n_devices()],
            chains_scratch: Vec::with_capacity(m_cnt),
        };
        for idx in (0..n_ord).rev() {
            let n = s.ws.order[idx];
            let m = scn.device_gateway[n];
            let j = scn.gateway_ap[m];
            let vals = |table: &Vec<Vec<f64>>| -> (f64, f64) {
                s.dom[n].iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &l| {
                    let x = table[n][l - 1];
                    (lo.min(x), hi.max(x))
                })
            };
            let (ct_lo, ct_hi) = vals(&s.ws.ct);
            let (eg_lo, _) = vals(&s.ws.slot.e_g);
            let (ea_lo, _) = vals(&s.ws.ea);
            let (_, o_hi) = vals(&s.ws.slot.suffix);
            for q in 0..m_cnt {
                s.rem_ct_min[idx][q] = s.rem_ct_min[idx + 1][q];
                s.rem_ct_max[idx][q] = s.rem_ct_max[idx + 1][q];
                s.rem_eg_min[idx][q] = s.rem_eg_min[idx + 1][q];
            }
            for q in 0..j_cnt {
                s.rem_ea_min[idx][q] = s.rem_ea_min[idx + 1][q];
                s.rem_o_max[idx][q] = s.rem_o_max[idx + 1][q];
            }
            s.rem_ct_min[idx][m] += ct_lo;
            s.rem_ct_max[idx][m] += ct_hi;
            s.rem_eg_min[idx][m] += eg_lo;
            s.rem_ea_min[idx][j] += ea_lo;
            s.rem_o_max[idx][j] += o_hi;
        }
        Some(s)
    }

    fn dfs(
        &mut self,
        depth: usize,
        pool: &mut Pool,
        nodes: &mut u64,
        budget: u64,
        exhausted: &mut bool,
    ) {
        *nodes += 1;
        if *nodes > budget {
            *exhausted = true;
            return;
        }
        let scn = self.ws.slot.scn;
        let (m_cnt, j_cnt) = (scn.n_gateways(), scn.n_aps());

        if depth == self.ws.order.len() {
            let mut chains = std::mem::take(&mut self.chains_scratch);
            let eval = self.ws.eval_full(&self.l, &mut chains);
            let in_case = chains[self.case] >= eval.chain_max;
            self.chains_scratch = chains;
            if eval.ok && in_case {
                pool.insert(eval.a, eval.argmax, &self.l);
            }
            return;
        }

        // Interval bounds over the free suffix.
        let mut makespan_lo = 0.0_f64;
        let mut chain_i_hi = 0.0;
        for m in 0..m_cnt {
            let lo = self.chain_fixed[depth][m] + self.rem_ct_min[depth][m];
            makespan_lo = makespan_lo.max(lo);
            if m == self.case {
                chain_i_hi = self.chain_fixed[depth][m] + self.rem_ct_max[depth][m];
            }
        }
        // Another gateway is forced above case i's ceiling: infeasible.
        for m in 0..m_cnt {
            if m != self.case {
                let lo = self.chain_fixed[depth][m] + self.rem_ct_min[depth][m];
                if lo > chain_i_hi * (1.0 + T_TOL) {
                    return;
                }
            }
        }
        for m in 0..m_cnt {
            if !self.ws.excused[m]
                && self.eg_fixed[depth][m] + self.rem_eg_min[depth][m]
                    > self.ws.slot.real.e_g[m] * (1.0 + E_TOL)
            {
                return;
            }
        }
        let mut o_hi = vec![0.0; j_cnt];
        for j in 0..j_cnt {
            o_hi[j] = self.o_fixed[depth][j] + self.rem_o_max[depth][j];
        }
        let tau_lb = self.ws.tau_of(&o_hi);
        for j in 0..j_cnt {
            if self.ea_fixed[depth][j] + self.rem_ea_min[depth][j]
                + self.ws.mine_coeff[j] * tau_lb
                > self.ws.slot.real.e_a[j] * (1.0 + E_TOL)
            {
                return;
            }
        }
        if let Some(worst) = pool.prune_at() {
            if makespan_lo + tau_lb > worst {
                return;
            }
        }

        let n = self.ws.order[depth];
        let m = scn.device_gateway[n];
        let j = scn.gateway_ap[m];
        for pos in (0..self.dom[n].len()).rev() {
            let lv = self.dom[n][pos];
            self.l[n] = lv;
            for q in 0..m_cnt {
                self.chain_fixed[depth + 1][q] = self.chain_fixed[depth][q];
                self.eg_fixed[depth + 1][q] = self.eg_fixed[depth][q];
            }
            for q in 0..j_cnt {
                self.ea_fixed[depth + 1][q] = self.ea_fixed[depth][q];
                self.o_fixed[depth + 1][q] = self.o_fixed[depth][q];
            }
            self.chain_fixed[depth + 1][m] += self.ws.ct[n][lv - 1];
            self.eg_fixed[depth + 1][m] += self.ws.slot.e_g[n][lv - 1];
            self.ea_fixed[depth + 1][j] += self.ws.ea[n][lv - 1];
            self.o_fixed[depth + 1][j] += self.ws.slot.suffix[n][lv - 1];
            self.dfs(depth + 1, pool, nodes, budget, exhausted);
            if *exhausted {
                return;
            }
        }
    }
}

/// Minimizes the partition points at fixed frequencies. Returns the best
/// assignment found; in lenient mode an energy-unsatisfiable gateway is
/// pinned to its minimal-excess points and counted in `stats`.
pub fn solve_partition(
    slot: &Slot,
    dec: &Decision,
    queues: &AuxQueues,
    spec: &ObjectiveSpec,
    params: &LyapunovParams,
    stats: &mut SolveStats,
) -> Result<Vec<usize>> {
    let (mut ws, warm) = Workspace::new(slot, dec, queues, spec, params, stats)?;
    if let Err(e) = ws.tighten_global() {
        // Some DT has no partition point that any completion can afford:
        // the slot is wholly infeasible at these frequencies.
        if params.mode == FeasMode::Lenient {
            stats.c5_violations += 1;
            return Ok(warm);
        }
        return Err(e);
    }
    let scn = slot.scn;
    let mut inc = Incumbent::none(scn.n_devices());
    let mut chains = Vec::new();

    // The incoming assignment (pinned where required) seeds the incumbent
    // whenever it is feasible, so the result never regresses.
    let warm_eval = ws.eval_full(&warm, &mut chains);
    if warm_eval.ok {
        inc.replace(warm_eval.obj, warm_eval.argmax, &warm);
    }

    let mut nodes = 0u64;
    let mut exhausted = false;
    for case in 0..scn.n_gateways() {
        if exhausted {
            break;
        }
        if let Some(mut search) = CaseSearch::new(&ws, case) {
            search.dfs(0, &mut inc, &mut nodes, params.bnb_node_budget, &mut exhausted);
        }
    }
    stats.bnb_nodes += nodes;
    if exhausted {
        stats.bnb_unproven += 1;
    }

    if inc.found {
        Ok(inc.l)
    } else if params.mode == FeasMode::Lenient {
        stats.c5_violations += 1;
        Ok(warm)
    } else {
        Err(SimError::InfeasibleSlot {
            t: slot.t,
            what: "no feasible partition assignment in any case".into(),
        })
    }
}

/// Brute-force reference: enumerates every assignment (after the same
/// gateway-energy pre-pass) and applies the same selection rule. Errors
/// when the product of domain sizes exceeds `cap`.
pub fn exhaustive_partition(
    slot: &Slot,
    dec: &Decision,
    queues: &AuxQueues,
    spec: &ObjectiveSpec,
    params: &LyapunovParams,
    cap: u64,
) -> Result<Vec<usize>> {
    let mut stats = SolveStats::default();
    let scn = slot.scn;
    // Reuse the pre-pass (pins, excusals) but not the domain tightening:
    // enumerate raw domains so the tightening itself is under test.
    let (ws, warm) = Workspace::new(slot, dec, queues, spec, params, &mut stats)?;
    let dom: Vec<Vec<usize>> = (0..scn.n_devices())
        .map(|n| {
            if ws.excused[scn.device_gateway[n]] {
                ws.dom[n].clone()
            } else {
                (1..=scn.layers_of(n)).collect()
            }
        })
        .collect();
    let total: u64 = dom.iter().map(|d| d.len() as u64).try_fold(1u64, |acc, k| {
        acc.checked_mul(k)
    }).ok_or_else(|| SimError::Solver("exhaustive domain overflow".into()))?;
    if total > cap {
        return Err(SimError::Solver(format!(
            "exhaustive enumeration of {total} assignments exceeds cap {cap}"
        )));
    }

    let mut inc = Incumbent::none(scn.n_devices());
    let mut chains = Vec::new();
    let mut idx = vec![0usize; scn.n_devices()];
    let mut l: Vec<usize> = dom.iter().map(|d| d[0]).collect();
    loop {
        let eval = ws.eval_full(&l, &mut chains);
        if eval.ok && inc.improved_by(eval.obj, eval.argmax, &l) {
            inc.replace(eval.obj, eval.argmax, &l);
        }
        // Odometer, least-significant at the back so iteration is
        // lexicographic ascending.
        let mut pos = scn.n_devices();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            if idx[pos] + 1 < dom[pos].len() {
                idx[pos] += 1;
                l[pos] = dom[pos][idx[pos]];
                break;
            }
            idx[pos] = 0;
            l[pos] = dom[pos][0];
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
        }
        if pos == usize::MAX {
            break;
        }
    }

    if inc.found {
        Ok(inc.l)
    } else if params.mode == FeasMode::Lenient {
        Ok(warm)
    } else {
        Err(SimError::InfeasibleSlot {
            t: slot.t,
            what: "no feasible partition assignment in any case".into(),
        })
    }
}
