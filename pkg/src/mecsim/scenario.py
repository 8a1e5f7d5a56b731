"""Reproducible network deployments and quasi-static channel snapshots.

A scenario is one frozen draw of an urban small-cell layout: macro base
stations (MBS) on a hexagonal lattice, small base stations (SBS) and the two
mobile-device classes dropped uniformly into discs around each MBS.  Channel
gains combine distance pathloss, a line-of-sight draw and lognormal
shadowing, all drawn once and frozen (the coherence-block assumption).

Two device classes exist throughout the package:

* HRD, high-rate devices, download files from SBS caches or over the SBS's
  wireless backhaul to its nearest MBS;
* CSD, computation-sensitive devices, offload a task to an SBS edge server
  or execute it locally.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

MIN_PATHLOSS_DISTANCE_M = 1.0   # pathloss curves are clamped below this
_COLLOCATION_EPS_M = 1e-9
_MAX_PLACEMENT_RETRIES = 100
_SCENARIO_HEADER = "mecsim-scenario v1"


@dataclass(frozen=True)
class SystemParams:
    """Radio and deployment constants shared by every link in a scenario."""

    w_hz: float = 20e6          # system bandwidth
    a: float = 0.5              # band share of access links (1-a for backhaul)
    t1_frac: float = 0.5        # uplink share of the coherence block
    m_sbs: int = 5              # SBS count per macrocell
    n_mbs: int = 3
    isd_m: float = 1000.0       # inter-site distance between MBSs
    p_mbs_dbm: float = 46.0
    p_sbs_dbm: float = 24.0
    p_md_dbm: float = 23.0
    noise_dbm_hz: float = -174.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.a <= 1.0):
            raise ValueError(f"band split a={self.a} outside [0, 1]")
        if not (0.0 <= self.t1_frac <= 1.0):
            raise ValueError(f"t1_frac={self.t1_frac} outside [0, 1]")
        if self.w_hz <= 0:
            raise ValueError("bandwidth must be positive")
        if self.m_sbs < 1:
            raise ValueError("need at least one SBS per macrocell")
        if self.n_mbs < 1:
            raise ValueError("need at least one MBS")
        if self.isd_m <= 0:
            raise ValueError("inter-site distance must be positive")
        for p in (self.p_mbs_dbm, self.p_sbs_dbm, self.p_md_dbm,
                  self.noise_dbm_hz):
            if not math.isfinite(p):
                raise ValueError("powers must be finite")


@dataclass(frozen=True)
class Counts:
    """Node counts for one deployment; SBS count defaults to params.m_sbs."""

    n_hrd: int
    n_csd: int
    n_sbs_per_cell: int | None = None

    def resolve_sbs(self, params: SystemParams) -> int:
        n = self.n_sbs_per_cell if self.n_sbs_per_cell is not None else params.m_sbs
        if n < 1:
            raise ValueError("no SBS to associate with (n_sbs_per_cell < 1)")
        if n != params.m_sbs:
            raise ValueError(
                f"n_sbs_per_cell={n} disagrees with params.m_sbs={params.m_sbs}"
            )
        if self.n_hrd < 0 or self.n_csd < 0:
            raise ValueError("device counts must be nonnegative")
        return n


@dataclass(frozen=True)
class LinkModel:
    """Pathloss + LOS-probability + shadowing description of one link class.

    ``los_form`` selects the LOS-probability curve: "macro" is the
    exponential-decay form with scale ``los_scale_m``; "micro" is the
    street-canyon form used for SBS-to-device links.
    """

    link_class: str
    los_a: float
    los_b: float
    nlos_a: float
    nlos_b: float
    los_form: str
    los_scale_m: float
    shadow_sd_los_db: float
    shadow_sd_nlos_db: float


MBS_MD = LinkModel("mbs-md", 30.8, 24.2, 2.7, 42.8, "macro", 63.0, 6.0, 6.0)
MBS_SBS = LinkModel("mbs-sbs", 30.2, 23.5, 16.3, 36.3, "macro", 72.0, 6.0, 6.0)
SBS_MD = LinkModel("sbs-md", 41.1, 20.9, 32.9, 37.5, "micro", 0.0, 6.0, 4.0)

LINK_MODELS = {m.link_class: m for m in (MBS_MD, MBS_SBS, SBS_MD)}


def pathloss_db(model: LinkModel, d_m, los):
    """Distance pathloss in dB; distances below 1 m are clamped to 1 m."""
    d = np.maximum(np.asarray(d_m, dtype=float), MIN_PATHLOSS_DISTANCE_M)
    logd = np.log10(d)
    pl = np.where(los, model.los_a + model.los_b * logd,
                  model.nlos_a + model.nlos_b * logd)
    return pl if pl.ndim else float(pl)


def los_probability(model: LinkModel, d_m):
    """Probability that a link of length d_m is line-of-sight, in [0, 1]."""
    d = np.asarray(d_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("LOS probability needs a positive distance")
    if model.los_form == "macro":
        decay = np.exp(-d / model.los_scale_m)
        p = (1.0 - decay) * np.minimum(18.0 / d, 1.0) + decay
    elif model.los_form == "micro":
        p = (0.5 - np.minimum(0.5, 5.0 * np.exp(-156.0 / d))
             + np.minimum(0.5, 5.0 * np.exp(-d / 30.0)))
    else:
        raise ValueError(f"unknown LOS form {model.los_form!r}")
    return p if p.ndim else float(p)


def channel_gain(model: LinkModel, d_m, los_uniform, shadow_normal):
    """Linear channel gain from one LOS uniform and one standard-normal draw.

    The link is LOS iff ``los_uniform < los_probability(d)``; the shadowing
    draw is scaled by the class's (LOS- or NLOS-specific) standard deviation.
    """
    d = np.asarray(d_m, dtype=float)
    los = np.asarray(los_uniform, dtype=float) < los_probability(model, d)
    sd = np.where(los, model.shadow_sd_los_db, model.shadow_sd_nlos_db)
    pl = pathloss_db(model, d, los) + np.asarray(shadow_normal, dtype=float) * sd
    gain = 10.0 ** (-pl / 10.0)
    return gain if np.ndim(gain) else float(gain)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Immutable deployment + channel snapshot; safe to share read-only."""

    params: SystemParams
    mbs_pos: np.ndarray        # (n_mbs, 2) m
    sbs_pos: np.ndarray        # (n_sbs, 2)
    sbs_cell: np.ndarray       # (n_sbs,) generating macrocell index
    hrd_pos: np.ndarray
    hrd_cell: np.ndarray
    csd_pos: np.ndarray
    csd_cell: np.ndarray
    gain_sbs_hrd: np.ndarray   # (n_sbs, n_hrd) linear
    gain_sbs_csd: np.ndarray   # (n_sbs, n_csd)
    gain_mbs_sbs: np.ndarray   # (n_sbs,) gain to the backhaul MBS
    backhaul_mbs: np.ndarray   # (n_sbs,) nearest MBS per SBS

    @property
    def n_mbs(self) -> int:
        return self.mbs_pos.shape[0]

    @property
    def n_sbs(self) -> int:
        return self.sbs_pos.shape[0]

    @property
    def n_hrd(self) -> int:
        return self.hrd_pos.shape[0]

    @property
    def n_csd(self) -> int:
        return self.csd_pos.shape[0]

    def with_params(self, **changes) -> "Scenario":
        """Copy with replaced SystemParams fields.

        Gains depend only on geometry and the frozen LOS/shadowing draws, so
        resource-split fields (a, t1_frac) can be swept without redrawing.
        """
        for key in changes:
            if key in ("m_sbs", "n_mbs", "isd_m", "seed"):
                raise ValueError(f"{key} is baked into the deployment; regenerate")
        return replace(self, params=replace(self.params, **changes))


def rng_streams(seed: int):
    """Independent child generators: deployment, shadowing, LOS, demand."""
    dep, shadow, los, demand = np.random.SeedSequence(seed).spawn(4)
    return (np.random.default_rng(dep), np.random.default_rng(shadow),
            np.random.default_rng(los), np.random.default_rng(demand))


def hex_lattice(n: int, isd_m: float) -> np.ndarray:
    """First n sites of a hexagonal lattice with spacing isd_m around origin."""
    if n < 1:
        raise ValueError("need at least one lattice site")
    radius = 1
    while 1 + 3 * radius * (radius + 1) < n:
        radius += 1
    cells = []
    for q in range(-radius, radius + 1):
        for r in range(-radius, radius + 1):
            dist = (abs(q) + abs(r) + abs(q + r)) / 2
            if dist > radius:
                continue
            x = isd_m * (q + r / 2.0)
            y = isd_m * (r * math.sqrt(3.0) / 2.0)
            ang = math.atan2(y, x) % (2.0 * math.pi) if (q or r) else 0.0
            cells.append((dist, ang, q, r, x, y))
    cells.sort()
    return np.array([[c[4], c[5]] for c in cells[:n]], dtype=float)


def _place_in_disc(rng, center, radius, occupied, retries=_MAX_PLACEMENT_RETRIES):
    """Uniform point in a disc, resampling collocations with existing nodes."""
    for _ in range(retries):
        r = radius * math.sqrt(rng.random())
        ang = 2.0 * math.pi * rng.random()
        pos = np.array([center[0] + r * math.cos(ang),
                        center[1] + r * math.sin(ang)])
        if not occupied or min(
            math.hypot(pos[0] - o[0], pos[1] - o[1]) for o in occupied
        ) > _COLLOCATION_EPS_M:
            return pos
    raise RuntimeError(
        f"could not place a node without collocation after {retries} tries"
    )


def generate_scenario(params: SystemParams, counts: Counts, *,
                      cell_radius_m: float | None = None,
                      cell_split: str = "round_robin") -> Scenario:
    """Draw one deployment and its frozen channel gains.

    MBSs sit on a hexagonal lattice with spacing ``isd_m``; SBSs and devices
    are uniform in discs of radius ``isd_m/2`` (configurable) around each MBS.
    Devices are spread over macrocells round-robin by default
    (``cell_split="uniform"`` draws the cell per device instead).  The whole
    draw is a pure function of (params, counts, keyword options).
    """
    n_sbs_per_cell = counts.resolve_sbs(params)
    radius = cell_radius_m if cell_radius_m is not None else params.isd_m / 2.0
    if radius <= 0:
        raise ValueError("cell radius must be positive")
    if cell_split not in ("round_robin", "uniform"):
        raise ValueError(f"unknown cell_split {cell_split!r}")

    rng_dep, rng_shadow, rng_los, _ = rng_streams(params.seed)
    mbs_pos = hex_lattice(params.n_mbs, params.isd_m)
    occupied = [tuple(p) for p in mbs_pos]

    def drop(cell: int) -> np.ndarray:
        pos = _place_in_disc(rng_dep, mbs_pos[cell], radius, occupied)
        occupied.append(tuple(pos))
        return pos

    sbs_pos, sbs_cell = [], []
    for cell in range(params.n_mbs):
        for _ in range(n_sbs_per_cell):
            sbs_pos.append(drop(cell))
            sbs_cell.append(cell)

    def drop_devices(count: int):
        pos, cells = [], []
        for k in range(count):
            if cell_split == "round_robin":
                cell = k % params.n_mbs
            else:
                cell = int(rng_dep.integers(params.n_mbs))
            pos.append(drop(cell))
            cells.append(cell)
        shape = (count, 2) if count else (0, 2)
        return (np.array(pos, dtype=float).reshape(shape),
                np.array(cells, dtype=np.int64))

    hrd_pos, hrd_cell = drop_devices(counts.n_hrd)
    csd_pos, csd_cell = drop_devices(counts.n_csd)
    sbs_pos = np.array(sbs_pos, dtype=float)
    sbs_cell = np.array(sbs_cell, dtype=np.int64)

    def pair_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)

    # Draw order is fixed (SBS-HRD, SBS-CSD, MBS-SBS) per stream so that a
    # scenario is reproducible from the seed alone.
    d_sh = pair_dist(sbs_pos, hrd_pos)
    gain_sbs_hrd = channel_gain(SBS_MD, d_sh,
                                rng_los.random(d_sh.shape),
                                rng_shadow.standard_normal(d_sh.shape))
    d_sc = pair_dist(sbs_pos, csd_pos)
    gain_sbs_csd = channel_gain(SBS_MD, d_sc,
                                rng_los.random(d_sc.shape),
                                rng_shadow.standard_normal(d_sc.shape))
    d_ms = pair_dist(mbs_pos, sbs_pos)          # (n_mbs, n_sbs)
    backhaul_mbs = np.argmin(d_ms, axis=0).astype(np.int64)
    d_bh = d_ms[backhaul_mbs, np.arange(len(sbs_pos))]
    gain_mbs_sbs = channel_gain(MBS_SBS, d_bh,
                                rng_los.random(len(sbs_pos)),
                                rng_shadow.standard_normal(len(sbs_pos)))

    return Scenario(
        params=params, mbs_pos=mbs_pos,
        sbs_pos=sbs_pos, sbs_cell=sbs_cell,
        hrd_pos=hrd_pos, hrd_cell=hrd_cell,
        csd_pos=csd_pos, csd_cell=csd_cell,
        gain_sbs_hrd=np.asarray(gain_sbs_hrd, dtype=float).reshape(d_sh.shape),
        gain_sbs_csd=np.asarray(gain_sbs_csd, dtype=float).reshape(d_sc.shape),
        gain_mbs_sbs=np.asarray(gain_mbs_sbs, dtype=float).reshape(-1),
        backhaul_mbs=backhaul_mbs,
    )


# ---------------------------------------------------------------------------
# Versioned text serialization (17 significant digits, row-major matrices).
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_matrix(lines, name, mat):
    lines.append(f"[{name}]")
    mat = np.atleast_2d(np.asarray(mat))
    for row in mat:
        lines.append(" ".join(_fmt(v) for v in row))


def _write_int_row(lines, name, arr):
    lines.append(f"[{name}]")
    lines.append(" ".join(str(int(v)) for v in np.asarray(arr).reshape(-1)))


def save_scenario(path, scenario: Scenario, demand=None) -> None:
    """Write a scenario (and optionally its demand profile) to a text file."""
    p = scenario.params
    lines = [_SCENARIO_HEADER, "[params]"]
    for key in ("w_hz", "a", "t1_frac", "isd_m", "p_mbs_dbm", "p_sbs_dbm",
                "p_md_dbm", "noise_dbm_hz"):
        lines.append(f"{key} = {_fmt(getattr(p, key))}")
    for key in ("m_sbs", "n_mbs", "seed"):
        lines.append(f"{key} = {getattr(p, key)}")
    _write_matrix(lines, "mbs_pos", scenario.mbs_pos)
    _write_matrix(lines, "sbs_pos", scenario.sbs_pos)
    _write_int_row(lines, "sbs_cell", scenario.sbs_cell)
    _write_int_row(lines, "backhaul_mbs", scenario.backhaul_mbs)
    _write_matrix(lines, "hrd_pos", scenario.hrd_pos)
    _write_int_row(lines, "hrd_cell", scenario.hrd_cell)
    _write_matrix(lines, "csd_pos", scenario.csd_pos)
    _write_int_row(lines, "csd_cell", scenario.csd_cell)
    _write_matrix(lines, "gain_sbs_hrd", scenario.gain_sbs_hrd)
    _write_matrix(lines, "gain_sbs_csd", scenario.gain_sbs_csd)
    _write_matrix(lines, "gain_mbs_sbs", scenario.gain_mbs_sbs)
    if demand is not None:
        from .content import demand_block_lines
        lines.extend(demand_block_lines(demand))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_sections(text: str):
    header, *rest = [ln.rstrip("\n") for ln in text.splitlines()]
    if header.strip() != _SCENARIO_HEADER:
        raise ValueError(f"not a scenario file (header {header!r})")
    sections: dict[str, list[str]] = {}
    current = None
    for line in rest:
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is None:
            raise ValueError(f"content before first section: {line!r}")
        else:
            sections[current].append(line)
    return sections


def _matrix(sections, name, width=None):
    rows = [[float(tok) for tok in ln.split()] for ln in sections[name]]
    rows = [r for r in rows if r]
    if not rows:
        return np.zeros((0, width or 0))
    return np.array(rows, dtype=float)


def _int_row(sections, name):
    toks = []
    for ln in sections.get(name, []):
        toks.extend(ln.split())
    return np.array([int(t) for t in toks], dtype=np.int64)


def load_scenario(path):
    """Read a scenario file; returns (scenario, demand-or-None)."""
    with open(path, encoding="utf-8") as fh:
        sections = _parse_sections(fh.read())
    kv = {}
    for line in sections["params"]:
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()
    params = SystemParams(
        w_hz=float(kv["w_hz"]), a=float(kv["a"]), t1_frac=float(kv["t1_frac"]),
        m_sbs=int(kv["m_sbs"]), n_mbs=int(kv["n_mbs"]), isd_m=float(kv["isd_m"]),
        p_mbs_dbm=float(kv["p_mbs_dbm"]), p_sbs_dbm=float(kv["p_sbs_dbm"]),
        p_md_dbm=float(kv["p_md_dbm"]), noise_dbm_hz=float(kv["noise_dbm_hz"]),
        seed=int(kv["seed"]),
    )
    sbs_pos = _matrix(sections, "sbs_pos", 2)
    hrd_pos = _matrix(sections, "hrd_pos", 2)
    csd_pos = _matrix(sections, "csd_pos", 2)

    def gains(name, n_dev):
        mat = _matrix(sections, name)
        if mat.size == 0:
            mat = np.zeros((len(sbs_pos), n_dev))
        return mat

    scenario = Scenario(
        params=params,
        mbs_pos=_matrix(sections, "mbs_pos", 2),
        sbs_pos=sbs_pos,
        sbs_cell=_int_row(sections, "sbs_cell"),
        hrd_pos=hrd_pos,
        hrd_cell=_int_row(sections, "hrd_cell"),
        csd_pos=csd_pos,
        csd_cell=_int_row(sections, "csd_cell"),
        gain_sbs_hrd=gains("gain_sbs_hrd", len(hrd_pos)),
        gain_sbs_csd=gains("gain_sbs_csd", len(csd_pos)),
        gain_mbs_sbs=_matrix(sections, "gain_mbs_sbs").reshape(-1),
        backhaul_mbs=_int_row(sections, "backhaul_mbs"),
    )
    demand = None
    if "demand" in sections:
        from .content import demand_from_sections
        demand = demand_from_sections(sections)
    return scenario, demand
