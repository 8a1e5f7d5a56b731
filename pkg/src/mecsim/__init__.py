"""Small-cell network simulator with edge computing and caching.

Deterministic, seedable pipeline: scenario generation (deployments and
quasi-static channel gains), content demand (Zipf popularity, per-SBS
caches), per-link rates under orthogonal band/slot partitioning, delay
evaluation, closed-form per-coalition resource allocation with a numerical
oracle, a coalitional association game with a best-gain initializer, and a
sweep/CSV experiment harness.
"""

from ._kernels import IDLE_FRAC, USING_NUMBA
from .allocation import (CoalitionCosts, CoalitionEval, allocate_csd,
                         allocate_hrd, build_costs, coalition_utility,
                         oracle_simplex_min, oracle_solve_p3)
from .association import (GameState, MoveProposal, abcg_init, audit_stability,
                          evaluate_and_apply, propose_move, run_amnd,
                          run_coalition_game)
from .content import (Catalog, DemandProfile, build_demand, demand_rng,
                      draw_requests, place_cache, zipf_popularity)
from .delays import (Allocation, DelayReport, Partition, audit_constraints,
                     csd_delay, hrd_delay, objective)
from .experiments import (CSV_COLUMNS, ExperimentConfig, SweepRow, emit_csv,
                          load_config, load_csv, run_sweep, save_config,
                          trend_check)
from .radio import RateTable, build_rate_table, rate_bh, rate_dl, rate_ul
from .scenario import (Counts, LinkModel, MBS_MD, MBS_SBS, SBS_MD, Scenario,
                       SystemParams, channel_gain, generate_scenario,
                       load_scenario, los_probability, pathloss_db,
                       save_scenario)

__version__ = "0.1.0"
