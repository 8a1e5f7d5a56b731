"""File popularity, per-device requests and per-SBS cache placement.

File popularity follows a Zipf law with exponent ``delta``; requests are
drawn per high-rate device proportionally to popularity, and each SBS cache
is filled either greedily by popularity ("popular_first") or by popularity-
weighted sampling ("sampled") up to its storage capacity.
"""

from dataclasses import dataclass

import numpy as np

# Decimal unit convention used throughout (config values are bytes).
KB = 1e3
MB = 1e6
GB = 1e9


def zipf_popularity(n_files: int, delta: float) -> np.ndarray:
    """Normalized Zipf weights: p_i proportional to 1 / i**delta, i from 1."""
    if n_files < 1:
        raise ValueError("need at least one file")
    if delta < 0:
        raise ValueError("Zipf exponent must be nonnegative")
    weights = np.arange(1, n_files + 1, dtype=float) ** (-float(delta))
    return weights / weights.sum()


@dataclass(frozen=True)
class Catalog:
    """The file universe: count, common size in bytes, popularity law."""

    n_files: int
    file_size_bytes: float
    delta: float
    popularity: np.ndarray

    @classmethod
    def build(cls, n_files: int = 20, delta: float = 0.6,
              file_size_bytes: float = 5 * MB) -> "Catalog":
        if file_size_bytes <= 0:
            raise ValueError("file size must be positive")
        return cls(n_files=n_files, file_size_bytes=float(file_size_bytes),
                   delta=float(delta),
                   popularity=zipf_popularity(n_files, delta))


def draw_requests(catalog: Catalog, n_hrd: int, requests_per_hrd: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Binary request matrix (n_hrd, n_files); distinct files per device,
    sampled without replacement proportionally to popularity."""
    if requests_per_hrd < 1 or requests_per_hrd > catalog.n_files:
        raise ValueError("requests_per_hrd must be in [1, n_files]")
    req = np.zeros((n_hrd, catalog.n_files), dtype=np.int8)
    for k in range(n_hrd):
        picks = rng.choice(catalog.n_files, size=requests_per_hrd,
                           replace=False, p=catalog.popularity)
        req[k, picks] = 1
    return req


def place_cache(catalog: Catalog, storage_bytes, policy: str = "popular_first",
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Binary cache matrix (n_sbs, n_files) respecting per-SBS capacity.

    popular_first caches files in decreasing popularity (ties: lowest index)
    until the next file would not fit; sampled draws distinct files with
    popularity weights until the same capacity.
    """
    storage = np.atleast_1d(np.asarray(storage_bytes, dtype=float))
    cache = np.zeros((storage.size, catalog.n_files), dtype=np.int8)
    by_pop = np.argsort(-catalog.popularity, kind="stable")
    for n, cap in enumerate(storage):
        slots = int(cap // catalog.file_size_bytes)
        slots = min(slots, catalog.n_files)
        if slots <= 0:
            continue
        if policy == "popular_first":
            picks = by_pop[:slots]
        elif policy == "sampled":
            if rng is None:
                raise ValueError("sampled cache policy needs an rng")
            picks = rng.choice(catalog.n_files, size=slots, replace=False,
                               p=catalog.popularity)
        else:
            raise ValueError(f"unknown cache policy {policy!r}")
        cache[n, picks] = 1
    return cache


@dataclass(frozen=True)
class DemandProfile:
    """Frozen workload: requests, caches, task sizes and capabilities."""

    catalog: Catalog
    request: np.ndarray          # (n_hrd, n_files) 0/1
    cache: np.ndarray            # (n_sbs, n_files) 0/1
    task_input_bytes: np.ndarray  # (n_csd,)
    task_cycles: np.ndarray       # (n_csd,)
    local_cps: np.ndarray         # (n_csd,) device cycles per second
    edge_cps: np.ndarray          # (n_sbs,) edge-server cycles per second
    storage_bytes: np.ndarray     # (n_sbs,)
    hrd_weight: np.ndarray        # (n_hrd,)
    csd_weight: np.ndarray        # (n_csd,)

    @property
    def n_hrd(self) -> int:
        return self.request.shape[0]

    @property
    def n_csd(self) -> int:
        return self.task_input_bytes.shape[0]

    @property
    def n_sbs(self) -> int:
        return self.cache.shape[0]

    @property
    def cached_bytes(self) -> np.ndarray:
        return self.cache.sum(axis=1) * self.catalog.file_size_bytes

    def validate(self) -> None:
        if np.any(self.cached_bytes > self.storage_bytes + 1e-6):
            raise ValueError("cache exceeds storage capacity")
        if self.n_hrd and not np.all(self.request.sum(axis=1) >= 1):
            raise ValueError("every HRD must request at least one file")
        if np.any(self.hrd_weight <= 0) or np.any(self.csd_weight <= 0):
            raise ValueError("weights must be positive")
        if np.any(self.local_cps <= 0) or np.any(self.edge_cps <= 0):
            raise ValueError("compute capabilities must be positive")


def build_demand(catalog: Catalog, n_sbs: int, n_hrd: int, n_csd: int,
                 rng: np.random.Generator, *,
                 requests_per_hrd: int = 1,
                 task_input_bytes: float = 100 * KB,
                 task_cycles: float = 1e9,
                 local_cps: float = 1.4e9,
                 edge_cps: float = 6e10,
                 storage_bytes: float = 2 * GB,
                 cache_policy: str = "popular_first",
                 weight: float = 1.0) -> DemandProfile:
    """Assemble a demand profile; requests are drawn before cache placement
    so both consume the rng in a fixed order."""
    request = draw_requests(catalog, n_hrd, requests_per_hrd, rng)
    storage = np.full(n_sbs, float(storage_bytes))
    cache = place_cache(catalog, storage, cache_policy, rng)
    profile = DemandProfile(
        catalog=catalog,
        request=request,
        cache=cache,
        task_input_bytes=np.full(n_csd, float(task_input_bytes)),
        task_cycles=np.full(n_csd, float(task_cycles)),
        local_cps=np.full(n_csd, float(local_cps)),
        edge_cps=np.full(n_sbs, float(edge_cps)),
        storage_bytes=storage,
        hrd_weight=np.full(n_hrd, float(weight)),
        csd_weight=np.full(n_csd, float(weight)),
    )
    profile.validate()
    return profile


def demand_rng(seed: int, delta: float | None = None) -> np.random.Generator:
    """Demand-only child stream of a scenario seed.

    Keyed by the popularity exponent when given, so sweeping delta redraws
    requests/caches without disturbing the deployment streams.
    """
    if delta is None:
        return np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[3])
    key = int(round(float(delta) * 1e9))
    return np.random.default_rng(np.random.SeedSequence([seed, 3, key]))


# ---------------------------------------------------------------------------
# Demand block of the scenario file format.
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def demand_block_lines(demand: DemandProfile) -> list[str]:
    lines = ["[demand]", "[catalog]",
             f"n_files = {demand.catalog.n_files}",
             f"file_size_bytes = {_fmt(demand.catalog.file_size_bytes)}",
             f"delta = {_fmt(demand.catalog.delta)}"]

    def int_matrix(name, mat):
        lines.append(f"[{name}]")
        for row in np.atleast_2d(mat):
            lines.append(" ".join(str(int(v)) for v in row))

    def float_row(name, arr):
        lines.append(f"[{name}]")
        lines.append(" ".join(_fmt(v) for v in np.asarray(arr).reshape(-1)))

    float_row("popularity", demand.catalog.popularity)
    int_matrix("requests", demand.request)
    int_matrix("cache", demand.cache)
    float_row("task_input_bytes", demand.task_input_bytes)
    float_row("task_cycles", demand.task_cycles)
    float_row("local_cps", demand.local_cps)
    float_row("edge_cps", demand.edge_cps)
    float_row("storage_bytes", demand.storage_bytes)
    float_row("hrd_weight", demand.hrd_weight)
    float_row("csd_weight", demand.csd_weight)
    return lines


def demand_from_sections(sections: dict[str, list[str]]) -> DemandProfile:
    kv = {}
    for line in sections["catalog"]:
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()

    def float_row(name):
        toks = []
        for ln in sections.get(name, []):
            toks.extend(ln.split())
        return np.array([float(t) for t in toks], dtype=float)

    def int_matrix(name):
        rows = [[int(t) for t in ln.split()] for ln in sections.get(name, [])]
        rows = [r for r in rows if r]
        if not rows:
            return np.zeros((0, int(kv["n_files"])), dtype=np.int8)
        return np.array(rows, dtype=np.int8)

    catalog = Catalog(n_files=int(kv["n_files"]),
                      file_size_bytes=float(kv["file_size_bytes"]),
                      delta=float(kv["delta"]),
                      popularity=float_row("popularity"))
    profile = DemandProfile(
        catalog=catalog,
        request=int_matrix("requests"),
        cache=int_matrix("cache"),
        task_input_bytes=float_row("task_input_bytes"),
        task_cycles=float_row("task_cycles"),
        local_cps=float_row("local_cps"),
        edge_cps=float_row("edge_cps"),
        storage_bytes=float_row("storage_bytes"),
        hrd_weight=float_row("hrd_weight"),
        csd_weight=float_row("csd_weight"),
    )
    profile.validate()
    return profile
