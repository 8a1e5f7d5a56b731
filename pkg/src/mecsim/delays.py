"""Delay evaluation: per-device delay components and the global objective.

The objective F is the sum over all devices of weighted delays: file
delivery time for high-rate devices (downlink access plus, for cache
misses, downlink backhaul) and task completion time for computation
devices (uplink plus edge execution when offloaded, local execution
otherwise).  F is separable across SBSs, which is what lets the
association game re-evaluate only the coalitions a move touches.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import FEAS_TOL, BYTES_TOL, IDLE_FRAC
from .content import DemandProfile
from .radio import RateTable, build_rate_table
from .scenario import Scenario

BITS_PER_BYTE = 8.0


@dataclass
class Partition:
    """Association state for both device classes.

    ``hrd_sbs[k]`` is the serving SBS of high-rate device k; ``csd_sbs[k]``
    is the serving SBS of computation device k, with the sentinel value
    ``n_sbs`` meaning local execution (the virtual coalition).
    """

    hrd_sbs: np.ndarray
    csd_sbs: np.ndarray
    n_sbs: int

    @property
    def local_index(self) -> int:
        return self.n_sbs

    def validate(self) -> None:
        if self.hrd_sbs.size and (self.hrd_sbs.min() < 0
                                  or self.hrd_sbs.max() >= self.n_sbs):
            raise ValueError("every HRD must be associated with exactly one SBS")
        if self.csd_sbs.size and (self.csd_sbs.min() < 0
                                  or self.csd_sbs.max() > self.n_sbs):
            raise ValueError("CSD association out of range")

    def hrd_coalitions(self) -> list[list[int]]:
        out = [[] for _ in range(self.n_sbs)]
        for k, n in enumerate(self.hrd_sbs):
            out[int(n)].append(k)
        return out

    def csd_coalitions(self) -> list[list[int]]:
        out = [[] for _ in range(self.n_sbs + 1)]
        for k, n in enumerate(self.csd_sbs):
            out[int(n)].append(k)
        return out

    def y_matrix(self) -> np.ndarray:
        y = np.zeros((self.n_sbs, self.hrd_sbs.size), dtype=np.int8)
        y[self.hrd_sbs, np.arange(self.hrd_sbs.size)] = 1
        return y

    def x_matrix(self) -> np.ndarray:
        x = np.zeros((self.n_sbs, self.csd_sbs.size), dtype=np.int8)
        edge = self.csd_sbs < self.n_sbs
        x[self.csd_sbs[edge], np.nonzero(edge)[0]] = 1
        return x

    def copy(self) -> "Partition":
        return Partition(self.hrd_sbs.copy(), self.csd_sbs.copy(), self.n_sbs)


@dataclass
class Allocation:
    """Fraction tensors; entries outside the association hold IDLE_FRAC."""

    alpha: np.ndarray   # (n_sbs, n_csd) uplink band fractions
    gamma: np.ndarray   # (n_sbs, n_csd) edge compute fractions
    beta: np.ndarray    # (n_sbs, n_hrd, n_files) downlink band fractions
    eta: np.ndarray     # (n_sbs, n_hrd, n_files) backhaul band fractions

    @classmethod
    def idle(cls, n_sbs: int, n_hrd: int, n_csd: int, n_files: int) -> "Allocation":
        return cls(
            alpha=np.full((n_sbs, n_csd), IDLE_FRAC),
            gamma=np.full((n_sbs, n_csd), IDLE_FRAC),
            beta=np.full((n_sbs, n_hrd, n_files), IDLE_FRAC),
            eta=np.full((n_sbs, n_hrd, n_files), IDLE_FRAC),
        )

    def copy(self) -> "Allocation":
        return Allocation(self.alpha.copy(), self.gamma.copy(),
                          self.beta.copy(), self.eta.copy())


def hrd_delay(table: RateTable, demand: DemandProfile, n: int, k: int, i: int,
              beta: float, eta: float):
    """Delivery delay components of file i to device k from SBS n.

    Returns (t_dl, t_bh, t_hr): access time, backhaul time, and the total
    that counts the backhaul term only on a cache miss.
    """
    size_bits = demand.catalog.file_size_bytes * BITS_PER_BYTE
    t_dl = size_bits / (beta * table.s_dl[n] * table.r_dl[n, k])
    t_bh = size_bits / (eta * table.s_bh[n] * table.r_bh[n])
    cached = bool(demand.cache[n, i])
    t_hr = t_dl if cached else t_dl + t_bh
    return t_dl, t_bh, t_hr


def csd_delay(table: RateTable, demand: DemandProfile, n: int, k: int,
              alpha: float, gamma: float):
    """Task completion components for device k; n == n_sbs means local.

    Returns (t_ul, t_ed, t_lc, t_cs); the upload and edge terms are zero for
    a local device, whose completion time is just t_lc.
    """
    t_lc = demand.task_cycles[k] / demand.local_cps[k]
    if n >= table.s_ul.shape[0]:
        return 0.0, 0.0, t_lc, t_lc
    in_bits = demand.task_input_bytes[k] * BITS_PER_BYTE
    t_ul = in_bits / (alpha * table.s_ul[n] * table.r_ul[n, k])
    t_ed = demand.task_cycles[k] / (gamma * demand.edge_cps[n])
    return t_ul, t_ed, t_lc, t_ul + t_ed


@dataclass
class DelayReport:
    """Per-device delay components plus the weighted aggregates."""

    pair_k: np.ndarray        # request pairs (device, file), row-major
    pair_i: np.ndarray
    t_dl_pair: np.ndarray
    t_bh_pair: np.ndarray     # zero for cache hits
    t_hr_pair: np.ndarray
    t_ul: np.ndarray          # (n_csd,) zero for local devices
    t_ed: np.ndarray
    t_lc: np.ndarray
    t_cs: np.ndarray
    hrd_total_s: float = 0.0
    hrd_backhaul_s: float = 0.0
    csd_total_s: float = 0.0
    csd_local_s: float = 0.0
    csd_offload_s: float = 0.0
    n_local_csd: int = 0
    n_edge_csd: int = 0
    n_backhauled_files: int = 0
    n_cached_hits: int = 0
    objective: float = 0.0


def request_pairs(demand: DemandProfile):
    """Active (device, file) request pairs in row-major device order."""
    pk, pi = np.nonzero(demand.request)
    return pk.astype(np.int64), pi.astype(np.int64)


def _check_active_fractions(partition, allocation, demand, pair_k, pair_i):
    bad = []
    lo = IDLE_FRAC * (1.0 - 1e-9)
    hi = 1.0 + 1e-9
    n_arr = partition.hrd_sbs[pair_k]
    beta = allocation.beta[n_arr, pair_k, pair_i]
    miss = demand.cache[n_arr, pair_i] == 0
    eta = allocation.eta[n_arr, pair_k, pair_i]
    for j in np.nonzero((beta < lo) | (beta > hi))[0]:
        bad.append(("beta", int(n_arr[j]), int(pair_k[j]), int(pair_i[j])))
    for j in np.nonzero(miss & ((eta < lo) | (eta > hi)))[0]:
        bad.append(("eta", int(n_arr[j]), int(pair_k[j]), int(pair_i[j])))
    edge = np.nonzero(partition.csd_sbs < partition.n_sbs)[0]
    n_csd = partition.csd_sbs[edge]
    alpha = allocation.alpha[n_csd, edge]
    gamma = allocation.gamma[n_csd, edge]
    for j in np.nonzero((alpha < lo) | (alpha > hi))[0]:
        bad.append(("alpha", int(n_csd[j]), int(edge[j]), -1))
    for j in np.nonzero((gamma < lo) | (gamma > hi))[0]:
        bad.append(("gamma", int(n_csd[j]), int(edge[j]), -1))
    if bad:
        shown = ", ".join(f"{t}[n={n},k={k},i={i}]" for t, n, k, i in bad[:10])
        raise ValueError(f"allocation inconsistent with association: {shown}"
                         + ("..." if len(bad) > 10 else ""))


def objective(scenario: Scenario, demand: DemandProfile, partition: Partition,
              allocation: Allocation, table: RateTable | None = None,
              validate: bool = True) -> DelayReport:
    """Evaluate all delay components and the weighted objective F."""
    if table is None:
        table = build_rate_table(scenario)
    partition.validate()
    pair_k, pair_i = request_pairs(demand)
    if validate:
        _check_active_fractions(partition, allocation, demand, pair_k, pair_i)

    size_bits = demand.catalog.file_size_bytes * BITS_PER_BYTE
    n_arr = partition.hrd_sbs[pair_k]
    if pair_k.size:
        beta = allocation.beta[n_arr, pair_k, pair_i]
        eta = allocation.eta[n_arr, pair_k, pair_i]
        t_dl = size_bits / (beta * table.s_dl[n_arr] * table.r_dl[n_arr, pair_k])
        miss = demand.cache[n_arr, pair_i] == 0
        t_bh = np.where(
            miss, size_bits / (eta * table.s_bh[n_arr] * table.r_bh[n_arr]), 0.0)
        t_hr = t_dl + t_bh
        w_pair = demand.hrd_weight[pair_k]
        hrd_total = float((w_pair * t_hr).sum())
        hrd_backhaul = float((w_pair * t_bh).sum())
        n_miss = int(miss.sum())
    else:
        t_dl = t_bh = t_hr = np.zeros(0)
        hrd_total = hrd_backhaul = 0.0
        n_miss = 0

    n_csd = demand.n_csd
    t_ul = np.zeros(n_csd)
    t_ed = np.zeros(n_csd)
    t_lc = demand.task_cycles / demand.local_cps if n_csd else np.zeros(0)
    t_cs = t_lc.copy()
    edge = np.nonzero(partition.csd_sbs < partition.n_sbs)[0]
    if edge.size:
        ns = partition.csd_sbs[edge]
        alpha = allocation.alpha[ns, edge]
        gamma = allocation.gamma[ns, edge]
        in_bits = demand.task_input_bytes[edge] * BITS_PER_BYTE
        t_ul[edge] = in_bits / (alpha * table.s_ul[ns] * table.r_ul[ns, edge])
        t_ed[edge] = demand.task_cycles[edge] / (gamma * demand.edge_cps[ns])
        t_cs[edge] = t_ul[edge] + t_ed[edge]
    local = np.setdiff1d(np.arange(n_csd), edge)
    csd_offload = float((demand.csd_weight[edge] * t_cs[edge]).sum())
    csd_local = float((demand.csd_weight[local] * t_lc[local]).sum())
    csd_total = csd_offload + csd_local

    return DelayReport(
        pair_k=pair_k, pair_i=pair_i,
        t_dl_pair=t_dl, t_bh_pair=t_bh, t_hr_pair=t_hr,
        t_ul=t_ul, t_ed=t_ed, t_lc=t_lc, t_cs=t_cs,
        hrd_total_s=hrd_total, hrd_backhaul_s=hrd_backhaul,
        csd_total_s=csd_total, csd_local_s=csd_local,
        csd_offload_s=csd_offload,
        n_local_csd=int(local.size), n_edge_csd=int(edge.size),
        n_backhauled_files=n_miss,
        n_cached_hits=int(pair_k.size - n_miss),
        objective=hrd_total + csd_total,
    )


def audit_constraints(scenario: Scenario, demand: DemandProfile,
                      partition: Partition, allocation: Allocation,
                      table: RateTable | None = None) -> list[str]:
    """Check the full constraint set of one exposed state.

    Returns human-readable violation strings (empty list when clean):
    single association per device, per-SBS fraction budget sums, storage
    capacity including offloaded task inputs, the access-vs-backhaul rate
    ordering on cache misses, and the [IDLE_FRAC, 1] fraction boxes.
    """
    if table is None:
        table = build_rate_table(scenario)
    out: list[str] = []
    try:
        partition.validate()
    except ValueError as exc:           # C1/C2/C9/C10
        out.append(f"association: {exc}")
        return out

    pair_k, pair_i = request_pairs(demand)
    n_sbs = partition.n_sbs
    lo = IDLE_FRAC * (1.0 - 1e-9)
    for name, arr in (("alpha", allocation.alpha), ("gamma", allocation.gamma),
                      ("beta", allocation.beta), ("eta", allocation.eta)):
        if np.any(arr < lo) or np.any(arr > 1.0 + FEAS_TOL):   # C11-C14
            out.append(f"box: {name} outside [{IDLE_FRAC}, 1]")

    x = partition.x_matrix().astype(float)
    sum_alpha = (allocation.alpha * x).sum(axis=1)
    sum_gamma = (allocation.gamma * x).sum(axis=1)
    for n in range(n_sbs):
        if sum_alpha[n] > 1.0 + FEAS_TOL:
            out.append(f"uplink budget: sum alpha at SBS {n} = {sum_alpha[n]:.12g}")
        if sum_gamma[n] > 1.0 + FEAS_TOL:
            out.append(f"compute budget: sum gamma at SBS {n} = {sum_gamma[n]:.12g}")

    if pair_k.size:
        n_arr = partition.hrd_sbs[pair_k]
        beta = allocation.beta[n_arr, pair_k, pair_i]
        eta = allocation.eta[n_arr, pair_k, pair_i]
        miss = demand.cache[n_arr, pair_i] == 0
        sum_beta = np.bincount(n_arr, weights=beta, minlength=n_sbs)
        sum_eta = np.bincount(n_arr[miss], weights=eta[miss], minlength=n_sbs)
        for n in range(n_sbs):
            if sum_beta[n] > 1.0 + FEAS_TOL:
                out.append(f"downlink budget: sum beta at SBS {n} = {sum_beta[n]:.12g}")
            if sum_eta[n] > 1.0 + FEAS_TOL:
                out.append(f"backhaul budget: sum eta at SBS {n} = {sum_eta[n]:.12g}")
        # Rate ordering on misses: access delivery must not outrun backhaul.
        acc = beta * table.s_dl[n_arr] * table.r_dl[n_arr, pair_k]
        bh = eta * table.s_bh[n_arr] * table.r_bh[n_arr]
        bad = miss & (acc > bh * (1.0 + FEAS_TOL))
        for j in np.nonzero(bad)[0]:
            out.append(
                f"rate ordering: pair (n={int(n_arr[j])}, k={int(pair_k[j])}, "
                f"i={int(pair_i[j])}) access {acc[j]:.6g} > backhaul {bh[j]:.6g}")

    # Storage: cached bytes plus offloaded task inputs per SBS.
    load = demand.cached_bytes.copy()
    edge = np.nonzero(partition.csd_sbs < n_sbs)[0]
    np.add.at(load, partition.csd_sbs[edge], demand.task_input_bytes[edge])
    for n in range(n_sbs):
        if load[n] > demand.storage_bytes[n] + BYTES_TOL:
            out.append(f"storage: SBS {n} holds {load[n]:.12g} B "
                       f"> {demand.storage_bytes[n]:.12g} B")
    return out
