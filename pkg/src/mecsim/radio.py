"""Resource-share factors and per-link spectral efficiencies.

The band splits ``a`` (access vs backhaul) and ``t1_frac`` (uplink vs
downlink slot) combine with the factor-3 frequency reuse and the per-cell SBS
count into effective per-SBS bandwidths S.  A link's rate is then
``fraction * S * log2(1 + SNR)`` with the SNR taken over the per-SBS subband
of that link class, which keeps the SNR independent of the allocated
fraction.  Gains are quasi-static, so the whole table is computed once per
scenario and never rebuilt by the optimizer.
"""

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, dbm_to_mw

REUSE = 3.0   # adjacent macrocell clusters split each band three ways


@dataclass(frozen=True)
class RateTable:
    """Per-SBS effective bandwidths and per-link spectral efficiencies."""

    s_dl: np.ndarray      # (n_sbs,) Hz, downlink access
    s_ul: np.ndarray      # (n_sbs,) Hz, uplink access
    s_bh: np.ndarray      # (n_sbs,) Hz, downlink backhaul
    r_dl: np.ndarray      # (n_sbs, n_hrd) bits/s/Hz
    r_ul: np.ndarray      # (n_sbs, n_csd)
    r_bh: np.ndarray      # (n_sbs,)
    eta_min: np.ndarray   # (n_sbs, n_hrd) backhaul fraction floor: the
    #                       smallest eta keeping access rate <= backhaul rate
    #                       for any beta <= 1


def build_rate_table(scenario: Scenario) -> RateTable:
    p = scenario.params
    a, t1 = p.a, p.t1_frac
    if a in (0.0, 1.0) or t1 in (0.0, 1.0):
        degenerate = (
            (a == 0.0 and (scenario.n_hrd or scenario.n_csd)) or
            (a == 1.0 and scenario.n_hrd) or
            (t1 == 0.0 and scenario.n_csd) or
            (t1 == 1.0 and scenario.n_hrd)
        )
        if degenerate:
            raise ValueError(
                f"degenerate partition: a={a}, t1_frac={t1} leaves a demanded "
                "link class without resources"
            )

    # Per-cell SBS count: each SBS shares its cell's subband slice equally.
    cell_counts = np.bincount(scenario.sbs_cell, minlength=scenario.n_mbs)
    m_of_sbs = cell_counts[scenario.sbs_cell].astype(float)

    noise_mw_hz = dbm_to_mw(p.noise_dbm_hz)
    band_acc = a * p.w_hz / (REUSE * m_of_sbs)
    band_bh = (1.0 - a) * p.w_hz / (REUSE * m_of_sbs)
    noise_acc = noise_mw_hz * band_acc          # (n_sbs,)
    noise_bh = noise_mw_hz * band_bh

    with np.errstate(divide="ignore", invalid="ignore"):
        snr_dl = dbm_to_mw(p.p_sbs_dbm) * scenario.gain_sbs_hrd / noise_acc[:, None]
        snr_ul = dbm_to_mw(p.p_md_dbm) * scenario.gain_sbs_csd / noise_acc[:, None]
        snr_bh = dbm_to_mw(p.p_mbs_dbm) * scenario.gain_mbs_sbs / noise_bh
        r_dl = np.log2(1.0 + snr_dl)
        r_ul = np.log2(1.0 + snr_ul)
        r_bh = np.log2(1.0 + snr_bh)
        eta_min = a * r_dl / ((1.0 - a) * r_bh[:, None]) if a < 1.0 \
            else np.full_like(r_dl, np.inf)

    s_dl = a * p.w_hz * (1.0 - t1) / (REUSE * m_of_sbs)
    s_ul = a * p.w_hz * t1 / (REUSE * m_of_sbs)
    s_bh = (1.0 - a) * p.w_hz * (1.0 - t1) / (REUSE * m_of_sbs)
    return RateTable(s_dl=s_dl, s_ul=s_ul, s_bh=s_bh,
                     r_dl=r_dl, r_ul=r_ul, r_bh=r_bh, eta_min=eta_min)


def rate_dl(table: RateTable, n: int, k: int, beta: float) -> float:
    """Downlink access rate in bits/s at band fraction beta."""
    return beta * table.s_dl[n] * table.r_dl[n, k]


def rate_ul(table: RateTable, n: int, k: int, alpha: float) -> float:
    """Uplink access rate in bits/s at band fraction alpha."""
    return alpha * table.s_ul[n] * table.r_ul[n, k]


def rate_bh(table: RateTable, n: int, eta: float) -> float:
    """Downlink backhaul rate in bits/s at band fraction eta."""
    return eta * table.s_bh[n] * table.r_bh[n]
