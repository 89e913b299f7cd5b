"""Donor training, transfer to acceptors and the experiment drivers built on it.

The workflow: optimize all 2p angles of a small donor graph with Adagrad,
copy them onto larger acceptor graphs of the same family, then either leave
them (``r_n``), re-optimize one layer with a gradient-free method (``r_s``)
or re-optimize everything with Adagrad (``r_f``).
"""
from __future__ import annotations

import hashlib
import logging
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .graphgen import Graph, GraphFamily, exact_maxcut, generate_graph
from .optimizers import (
    AdagradConfig,
    NelderMeadConfig,
    Objective,
    Regularizer,
    SPSAConfig,
    adagrad_minimize,
    full_mask,
    layer_mask,
    minimize,
)
from .params import BankEntry, random_init, tqa_init
from .simulator import CutTable, QaoaParams, build_cut_table, qaoa_expectation

log = logging.getLogger(__name__)

GW_RATIO = 0.878
VIOLATION_TOL = 1e-9
DEFAULT_LAYERS = {"u3r": 7, "uba": 5, "uer": 2, "w3r": 11, "wba": 2, "wer": 2}
DEFAULT_SIZES = (8, 10, 12, 14, 16, 18, 20, 22, 24)
MAX_RESAMPLES = 100

# stream ids mixed into seed derivation
_DONOR, _ACCEPTOR, _RANDOM_INIT, _SELECTION, _REGSTUDY = range(5)


def derive_seed(*keys: int) -> int:
    """Deterministic 63-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))


def acceptor_seed(master_seed: int, n_a: int, index: int) -> int:
    """Seed of acceptor graph ``index`` at size ``n_a`` in a study."""
    return derive_seed(master_seed, _ACCEPTOR, n_a, index)


def family_of(cfg_family: str, p_edge: float = 0.5, ba_m: int = 6,
              mu: float = 1.0, sigma: float = 0.5) -> GraphFamily:
    tag = cfg_family.lower()
    if tag.startswith("w"):
        return GraphFamily(tag, p_edge=p_edge, ba_m=ba_m, mu=mu, sigma=sigma)
    return GraphFamily(tag, p_edge=p_edge, ba_m=ba_m)


@dataclass(frozen=True, eq=False)
class Instance:
    graph: Graph
    table: CutTable
    c_max: float

    @classmethod
    def of(cls, graph: Graph) -> "Instance":
        return cls(graph, build_cut_table(graph), exact_maxcut(graph).c_max)

    def ratio(self, params: QaoaParams) -> float:
        return qaoa_expectation(self.table, params) / self.c_max


def _instance(g: Graph | Instance) -> Instance:
    return g if isinstance(g, Instance) else Instance.of(g)


def sample_instance(family: GraphFamily | str, n: int, seed: int) -> tuple[Instance, int]:
    """Draw a graph whose MaxCut value is positive; returns it and the number of rejections."""
    for attempt in range(MAX_RESAMPLES):
        s = seed if attempt == 0 else derive_seed(seed, attempt)
        inst = Instance.of(generate_graph(family, n, s))
        if inst.c_max > 0:
            return inst, attempt
    raise RuntimeError(f"no graph with positive MaxCut after {MAX_RESAMPLES} draws")


def _digest(*parts) -> str:
    return hashlib.sha256(repr(parts).encode()).hexdigest()[:16]


# -- the three evaluations --------------------------------------------------

def train_donor(family: GraphFamily | str, n_d: int, p: int, dt: float,
                adagrad_cfg: AdagradConfig = AdagradConfig(), reg: Regularizer = Regularizer("l2", 1e-4),
                seed: int = 0, tqa_index_base: int = 0) -> BankEntry:
    fam = family if isinstance(family, GraphFamily) else GraphFamily(family)
    inst, _ = sample_instance(fam, n_d, seed)
    init = tqa_init(p, dt, tqa_index_base)
    params, _ = adagrad_minimize(Objective(inst.table, init, reg), init, adagrad_cfg)
    return BankEntry(
        family=fam.tag,
        n_d=n_d,
        params=params,
        seed=inst.graph.seed,
        r_f=inst.ratio(params),
        digest=_digest(fam, p, dt, tqa_index_base, adagrad_cfg, reg),
        timestamp=datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
    )


def evaluate_transfer(acceptor: Graph | Instance, donor_params: QaoaParams) -> float:
    """Approximation ratio of the acceptor with the donor angles, unchanged."""
    return _instance(acceptor).ratio(donor_params)


def targeted_single_layer(acceptor: Graph | Instance, donor_params: QaoaParams, k: int,
                          lam: float = 1e-4, gf_cfg=NelderMeadConfig(), optimizer: str = "nelder-mead",
                          reg_kind: str = "l2"):
    """Re-optimize only layer ``k`` (1-based) starting from the donor angles.

    Returns ``(r_s, trace)``; ``trace.wall_time`` covers setting up the
    objective plus the optimizer loop.
    """
    inst = _instance(acceptor)
    mask = layer_mask(donor_params.p, k)
    t0 = time.perf_counter()
    obj = Objective(inst.table, donor_params, Regularizer(reg_kind, lam), mask)
    params, trace = minimize(optimizer, obj, donor_params, gf_cfg, mask)
    trace.wall_time = time.perf_counter() - t0
    return inst.ratio(params), trace


def full_optimize_acceptor(acceptor: Graph | Instance, init: QaoaParams, lam: float = 1e-4,
                           adagrad_cfg: AdagradConfig = AdagradConfig(), reg_kind: str = "l2"):
    """Adagrad on all 2p angles from ``init``; returns ``(r_f, trace)``."""
    inst = _instance(acceptor)
    t0 = time.perf_counter()
    obj = Objective(inst.table, init, Regularizer(reg_kind, lam), full_mask(init.p))
    params, trace = adagrad_minimize(obj, init, adagrad_cfg)
    trace.wall_time = time.perf_counter() - t0
    return inst.ratio(params), trace


def efficiency(r: float, r_n: float, tau: float) -> float:
    """Gain in approximation ratio over the transferred start, per second."""
    if tau <= 0:
        raise ValueError("optimization time must be positive")
    return (r - r_n) / tau


# -- layer selection --------------------------------------------------------

@dataclass
class LayerSelection:
    sizes: list[int]
    counts: np.ndarray  # [size, layer] win counts
    experiments: int
    graph_seeds: dict = field(default_factory=dict)

    @property
    def matrix(self) -> np.ndarray:
        return self.counts / self.experiments

    @property
    def modal_layer(self) -> int:
        return int(np.argmax(self.counts.sum(axis=0))) + 1

    def modal_layer_per_size(self) -> dict[int, int]:
        return {n: int(np.argmax(row)) + 1 for n, row in zip(self.sizes, self.counts)}


def _best_layer(inst: Instance, donor: QaoaParams, lam: float, gf_cfg, optimizer: str, reg_kind: str):
    scores = [targeted_single_layer(inst, donor, k, lam, gf_cfg, optimizer, reg_kind)[0]
              for k in range(1, donor.p + 1)]
    return int(np.argmax(scores)), scores  # first maximum, i.e. smallest layer on ties


def layer_selection(family: GraphFamily | str, donor_params: QaoaParams, sizes, experiments: int = 40,
                    lam: float = 1e-4, gf_cfg=NelderMeadConfig(), seed: int = 0,
                    optimizer: str = "nelder-mead", reg_kind: str = "l2", workers: int = 1) -> LayerSelection:
    """Win-frequency of each layer as the best single layer to re-optimize."""
    if experiments < 1:
        raise ValueError("need at least one experiment per size")
    sizes = list(sizes)
    p = donor_params.p
    counts = np.zeros((len(sizes), p), dtype=np.int64)
    jobs = [(i, n, e) for i, n in enumerate(sizes) for e in range(experiments)]
    seeds = {}

    def args(job):
        _, n, e = job
        return (family, n, derive_seed(seed, _SELECTION, n, e), donor_params, lam, gf_cfg, optimizer, reg_kind)

    results = _map(_selection_item, [args(j) for j in jobs], workers)
    for (i, n, e), (gseed, best) in zip(jobs, results):
        counts[i, best] += 1
        seeds[(n, e)] = gseed
    return LayerSelection(sizes, counts, experiments, seeds)


def _selection_item(family, n, gseed, donor, lam, gf_cfg, optimizer, reg_kind):
    inst, _ = sample_instance(family, n, gseed)
    best, _ = _best_layer(inst, donor, lam, gf_cfg, optimizer, reg_kind)
    log.info("layer selection n=%d seed=%d best=%d", n, inst.graph.seed, best + 1)
    return inst.graph.seed, best


# -- family study -----------------------------------------------------------

@dataclass
class StudyConfig:
    family: str = "u3r"
    n_donor: int = 8
    sizes: tuple = DEFAULT_SIZES
    graphs_per_size: int = 40
    repetitions: int = 1
    p: int = 15
    dt: float = 0.75
    tqa_index_base: int = 0
    lr: float = 0.1
    eps: float = 1e-8
    iters: int = 100
    single_optimizer: str = "nelder-mead"
    nm_max_evals: int = 200
    nm_x_tol: float = 1e-6
    nm_f_tol: float = 1e-8
    spsa_iters: int = 100
    regularizer: str = "l2"
    lam: float = 1e-4
    layer: int = 0  # 0 means the family default
    init: str = "transfer"
    master_seed: int = 0
    p_edge: float = 0.5
    ba_m: int = 6
    mu: float = 1.0
    sigma: float = 0.5
    workers: int = 1

    def __post_init__(self):
        self.family = self.family.lower()
        self.sizes = tuple(int(s) for s in self.sizes)
        if not self.sizes:
            raise ValueError("no acceptor sizes")
        if self.n_donor > min(self.sizes):
            raise ValueError("donor size must not exceed the smallest acceptor size")
        if self.repetitions < 1 or self.graphs_per_size < 1:
            raise ValueError("repetitions and graphs_per_size must be >= 1")
        if self.init not in ("transfer", "tqa", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if not 0 <= self.layer <= self.p:
            raise ValueError(f"layer must be in 0..{self.p}")
        family_of(self.family, self.p_edge, self.ba_m, self.mu, self.sigma)
        Regularizer(self.regularizer, self.lam)

    @property
    def graph_family(self) -> GraphFamily:
        return family_of(self.family, self.p_edge, self.ba_m, self.mu, self.sigma)

    @property
    def target_layer(self) -> int:
        return self.layer or DEFAULT_LAYERS[self.family]

    @property
    def adagrad(self) -> AdagradConfig:
        return AdagradConfig(self.lr, self.eps, self.iters)

    @property
    def single_cfg(self):
        if self.single_optimizer == "spsa":
            return SPSAConfig(max_iters=self.spsa_iters)
        return NelderMeadConfig(self.nm_max_evals, self.nm_x_tol, self.nm_f_tol)

    @property
    def reg(self) -> Regularizer:
        return Regularizer(self.regularizer, self.lam)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunRecord:
    family: str
    n_a: int
    graph_seed: int
    rep: int
    k: int
    r_n: float
    r_s: float
    r_f: float
    N_s: int
    N_f: int
    tau_s: float
    tau_f: float
    eps_s: float
    eps_f: float
    regularizer: str = "l2"
    init: str = "transfer"
    steps_to_settle: int = 0


RECORD_COLUMNS = ("family", "n_a", "graph_seed", "rep", "k", "r_n", "r_s", "r_f",
                  "N_s", "N_f", "tau_s", "tau_f", "eps_s", "eps_f")
SUMMARY_COLUMNS = ("family", "n_a", "mean_r_n", "std_r_n", "mean_r_s", "std_r_s", "mean_r_f", "std_r_f",
                   "mean_tau_s", "mean_tau_f", "mean_eps_s", "mean_eps_f")
# measured, so they differ between otherwise identical runs
TIMING_COLUMNS = ("tau_s", "tau_f", "eps_s", "eps_f")


def steps_to_settle(history, c_max: float, tol: float = 1e-3) -> int:
    """First iteration whose objective is within ``tol * c_max`` of the final one.

    Dividing by ``c_max`` puts the tolerance on the approximation-ratio scale.
    """
    h = np.asarray(history)
    return int(np.argmax(np.abs(h - h[-1]) <= tol * c_max))


def _study_item(cfg: StudyConfig, donor: QaoaParams, n_a: int, index: int, rep: int):
    inst, resampled = sample_instance(cfg.graph_family, n_a, acceptor_seed(cfg.master_seed, n_a, index))
    k = cfg.target_layer
    r_n = inst.ratio(donor)
    r_s, tr_s = targeted_single_layer(inst, donor, k, cfg.lam, cfg.single_cfg, cfg.single_optimizer,
                                      cfg.regularizer)
    if cfg.init == "transfer":
        start = donor
    elif cfg.init == "tqa":
        start = tqa_init(cfg.p, cfg.dt, cfg.tqa_index_base)
    else:
        start = random_init(cfg.p, 0.0, np.pi, seed=derive_seed(cfg.master_seed, _RANDOM_INIT, n_a, index, rep))
    r_f, tr_f = full_optimize_acceptor(inst, start, cfg.lam, cfg.adagrad, cfg.regularizer)
    log.info("%s n_a=%d graph=%d rep=%d r_n=%.5f r_s=%.5f r_f=%.5f tau_s=%.3fs tau_f=%.3fs",
             cfg.family, n_a, index, rep, r_n, r_s, r_f, tr_s.wall_time, tr_f.wall_time)
    rec = RunRecord(
        family=cfg.family, n_a=n_a, graph_seed=inst.graph.seed, rep=rep, k=k,
        r_n=r_n, r_s=r_s, r_f=r_f, N_s=tr_s.steps, N_f=tr_f.steps,
        tau_s=tr_s.wall_time, tau_f=tr_f.wall_time,
        eps_s=efficiency(r_s, r_n, tr_s.wall_time), eps_f=efficiency(r_f, r_n, tr_f.wall_time),
        regularizer=cfg.regularizer, init=cfg.init,
        steps_to_settle=steps_to_settle(tr_f.history, inst.c_max),
    )
    return rec, resampled


def _call(args):
    fn, a = args
    return fn(*a)


def _map(fn, arglist, workers: int):
    if workers <= 1 or len(arglist) <= 1:
        return [fn(*a) for a in arglist]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, [(fn, a) for a in arglist]))


def summarize(records: list[RunRecord]) -> list[dict]:
    rows = []
    for fam, n_a in sorted({(r.family, r.n_a) for r in records}, key=lambda x: (x[0], x[1])):
        rs = [r for r in records if r.family == fam and r.n_a == n_a]
        col = lambda name: np.array([getattr(r, name) for r in rs], dtype=float)
        row = {"family": fam, "n_a": n_a}
        for name in ("r_n", "r_s", "r_f"):
            row[f"mean_{name}"] = float(col(name).mean())
            row[f"std_{name}"] = float(col(name).std())
        for name in ("tau_s", "tau_f", "eps_s", "eps_f"):
            row[f"mean_{name}"] = float(col(name).mean())
        rows.append(row)
    return rows


def software_versions() -> dict:
    import numba
    import scipy
    return {"python": sys.version.split()[0], "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "qaoa_transfer": __version__, "platform": platform.platform()}


@dataclass
class StudyResult:
    records: list[RunRecord]
    summary: list[dict]
    manifest: dict
    failures: list[dict] = field(default_factory=list)


def donor_for(cfg: StudyConfig) -> BankEntry:
    return train_donor(cfg.graph_family, cfg.n_donor, cfg.p, cfg.dt, cfg.adagrad, cfg.reg,
                       seed=derive_seed(cfg.master_seed, _DONOR), tqa_index_base=cfg.tqa_index_base)


def run_family_study(cfg: StudyConfig, donor: BankEntry | None = None) -> StudyResult:
    """Transfer, single-layer and full optimization over every size and graph in ``cfg``."""
    if donor is None:
        donor = donor_for(cfg)
    if donor.params.p != cfg.p:
        raise ValueError(f"donor depth {donor.params.p} differs from study depth {cfg.p}")
    jobs = [(n, i, rep) for n in cfg.sizes for i in range(cfg.graphs_per_size) for rep in range(cfg.repetitions)]
    outcomes = _map(_safe_study_item, [(cfg, donor.params, n, i, rep) for n, i, rep in jobs], cfg.workers)
    records, failures, resampled = [], [], 0
    for (n, i, rep), out in zip(jobs, outcomes):
        if isinstance(out, str):
            failures.append({"n_a": n, "graph": i, "rep": rep, "error": out})
            continue
        rec, extra = out
        records.append(rec)
        resampled += extra
    manifest = {
        "kind": "family_study",
        "config": cfg.to_dict(),
        "donor": {"family": donor.family, "n_d": donor.n_d, "seed": donor.seed, "r_f": donor.r_f,
                  "gammas": donor.params.gammas.tolist(), "betas": donor.params.betas.tolist(),
                  "digest": donor.digest},
        "graph_seeds": {f"{r.n_a}:{i}": r.graph_seed for (n, i, rep), r in
                        zip([j for j, o in zip(jobs, outcomes) if not isinstance(o, str)], records)},
        "resampled_graphs": resampled,
        "failures": failures,
        "software": software_versions(),
        "timing_columns_nondeterministic": list(TIMING_COLUMNS),
    }
    return StudyResult(records, summarize(records), manifest, failures)


def _safe_study_item(cfg, donor, n, i, rep):
    try:
        return _study_item(cfg, donor, n, i, rep)
    except Exception as exc:  # recorded per graph; the study goes on
        log.warning("study item n_a=%d graph=%d rep=%d failed: %s", n, i, rep, exc)
        return f"{type(exc).__name__}: {exc}"


def config_from_manifest(manifest: dict) -> tuple[StudyConfig, BankEntry]:
    cfg = StudyConfig.from_dict(manifest["config"])
    d = manifest["donor"]
    donor = BankEntry(d["family"], d["n_d"], QaoaParams(d["gammas"], d["betas"]), d["seed"], d["r_f"], d["digest"])
    return cfg, donor


def rerun_record(manifest: dict, n_a: int, graph_index: int, rep: int = 0) -> RunRecord:
    """Recompute one record of a study from its manifest alone."""
    cfg, donor = config_from_manifest(manifest)
    rec, _ = _study_item(cfg, donor.params, n_a, graph_index, rep)
    return rec


# -- regularization study ---------------------------------------------------

@dataclass
class RegStudyRow:
    family: str
    n_a: int
    N: int
    violations: dict[str, int]

    def rate(self, kind: str) -> float:
        return self.violations[kind] / self.N


def _reg_item(fam, n, gseed, donors, k, lam, gf_cfg, optimizer, adagrad_cfg):
    inst, _ = sample_instance(fam, n, gseed)
    out = {}
    for kind, donor in donors.items():
        r_s, _ = targeted_single_layer(inst, donor, k, lam, gf_cfg, optimizer, kind)
        r_f, _ = full_optimize_acceptor(inst, donor, lam, adagrad_cfg, kind)
        out[kind] = (r_s, r_f)
    return out


def regularization_study(family: str, sizes, n_trials: int, kinds=("none", "l1", "l2", "smooth"),
                         lam: float = 1e-4, p: int = 15, dt: float = 0.75, n_d: int = 8,
                         layer: int | None = None, adagrad_cfg: AdagradConfig = AdagradConfig(),
                         gf_cfg=NelderMeadConfig(), optimizer: str = "nelder-mead", seed: int = 0,
                         workers: int = 1, graph_family: GraphFamily | None = None):
    """Count trials where single-layer refinement beats full refinement, per regularizer.

    Each regularizer gets its own donor trained under that penalty; all
    regularizers see the same acceptor graphs.  Returns the table rows and
    the raw ``(r_s, r_f)`` pairs keyed by ``(n_a, trial, kind)``.
    """
    fam = graph_family or family_of(family)
    k = layer or DEFAULT_LAYERS[fam.tag]
    donor_seed = derive_seed(seed, _REGSTUDY, _DONOR)
    donors = {kind: train_donor(fam, n_d, p, dt, adagrad_cfg, Regularizer(kind, lam), donor_seed).params
              for kind in kinds}
    jobs = [(n, t) for n in sizes for t in range(n_trials)]
    outs = _map(_reg_item, [(fam, n, derive_seed(seed, _REGSTUDY, n, t), donors, k, lam, gf_cfg, optimizer,
                             adagrad_cfg) for n, t in jobs], workers)
    raw = {}
    rows = []
    for n in sizes:
        viol = dict.fromkeys(kinds, 0)
        for (jn, t), out in zip(jobs, outs):
            if jn != n:
                continue
            for kind, (r_s, r_f) in out.items():
                raw[(n, t, kind)] = (r_s, r_f)
                viol[kind] += int(r_s > r_f + VIOLATION_TOL)
        rows.append(RegStudyRow(fam.tag, n, n_trials, viol))
    return rows, raw


# -- initialization and optimizer comparisons -------------------------------

def initialization_study(cfg: StudyConfig, inits=("transfer", "tqa", "random"),
                         donor: BankEntry | None = None) -> dict[str, StudyResult]:
    """Same acceptors, full optimization started from each initialization."""
    donor = donor or donor_for(cfg)
    return {name: run_family_study(replace(cfg, init=name), donor) for name in inits}


def compare_single_layer_optimizers(cfg: StudyConfig, optimizers=("nelder-mead", "spsa"),
                                    donor: BankEntry | None = None) -> list[dict]:
    """``r_s`` and ``tau_s`` of the targeted layer under different gradient-free optimizers."""
    donor = donor or donor_for(cfg)
    rows = []
    for n in cfg.sizes:
        for i in range(cfg.graphs_per_size):
            inst, _ = sample_instance(cfg.graph_family, n, acceptor_seed(cfg.master_seed, n, i))
            for name in optimizers:
                gf = replace(cfg, single_optimizer=name).single_cfg
                r_s, tr = targeted_single_layer(inst, donor.params, cfg.target_layer, cfg.lam, gf, name,
                                                cfg.regularizer)
                rows.append({"family": cfg.family, "n_a": n, "graph_seed": inst.graph.seed, "optimizer": name,
                             "r_s": r_s, "tau_s": tr.wall_time, "n_evals": tr.n_evals})
    return rows


# -- landscape --------------------------------------------------------------

def landscape_raster(graph: Graph | Instance, gammas=None, betas=None, grid: int = 64) -> np.ndarray:
    """``<H_C>`` of the p=1 ansatz; rows follow ``betas``, columns follow ``gammas``."""
    inst = _instance(graph)
    gammas = np.linspace(0, 2 * np.pi, grid, endpoint=False) if gammas is None else np.asarray(gammas, float)
    betas = np.linspace(0, np.pi, grid, endpoint=False) if betas is None else np.asarray(betas, float)
    out = np.empty((betas.size, gammas.size))
    for i, b in enumerate(betas):
        for j, g in enumerate(gammas):
            out[i, j] = qaoa_expectation(inst.table, QaoaParams([g], [b]))
    return out
