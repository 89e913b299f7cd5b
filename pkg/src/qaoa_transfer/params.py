"""Parameter initialization (TQA, random, transfer) and the donor parameter bank."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .simulator import QaoaParams


class BankFormatError(ValueError):
    pass


def tqa_init(p: int, dt: float, index_base: int = 0) -> QaoaParams:
    """Linear-ramp (Trotterized annealing) schedule.

    ``gamma_i = (i/p) dt`` and ``beta_i = (1 - i/p) dt`` for ``i = 0..p-1``.
    ``index_base=1`` shifts the sample points to ``(i + 1/2)/p``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if dt <= 0:
        raise ValueError("TQA time step must be positive")
    if index_base not in (0, 1):
        raise ValueError("index_base must be 0 or 1")
    frac = (np.arange(p) + 0.5 * index_base) / p
    betas = dt - frac * dt
    # dt - betas is exact (Sterbenz), so gammas + betas == dt holds bitwise
    return QaoaParams(dt - betas, betas)


def random_init(p: int, lo: float = 0.0, hi: float = np.pi, seed=None) -> QaoaParams:
    if p < 1:
        raise ValueError("p must be >= 1")
    if not lo < hi:
        raise ValueError("need lo < hi")
    x = np.random.default_rng(seed).uniform(lo, hi, size=2 * p)
    return QaoaParams(x[:p], x[p:])


BankKey = tuple[str, int, int]


@dataclass
class BankEntry:
    family: str
    n_d: int
    params: QaoaParams
    seed: int
    r_f: float
    digest: str = ""
    timestamp: str = field(default="", compare=False)  # provenance only

    @property
    def key(self) -> BankKey:
        return (self.family, self.n_d, self.params.p)


@dataclass
class ParameterBank:
    """Optimized donor parameters keyed by ``(family, n_d, p)``."""

    entries: dict[BankKey, BankEntry] = field(default_factory=dict)

    def add(self, entry: BankEntry, replace: bool = True) -> None:
        if not replace and entry.key in self.entries:
            raise KeyError(f"bank already holds {entry.key}")
        self.entries[entry.key] = entry

    def get(self, key: BankKey) -> BankEntry:
        family, n_d, p = key
        key = (family.lower(), int(n_d), int(p))
        try:
            return self.entries[key]
        except KeyError:
            raise KeyError(f"no bank entry for family={key[0]} n_d={key[1]} p={key[2]}") from None

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def keys(self):
        return sorted(self.entries)


def transfer_init(bank: ParameterBank, key: BankKey, p: int | None = None) -> QaoaParams:
    """Donor parameters, verbatim, as the acceptor's starting point."""
    params = bank.get(key).params
    if p is not None and p != params.p:
        raise ValueError(f"acceptor depth {p} differs from donor depth {params.p}")
    return QaoaParams(params.gammas.copy(), params.betas.copy())


# -- persistence ------------------------------------------------------------

def _entry_line(e: BankEntry) -> str:
    nums = " ".join(f"{x:.17g}" for x in e.params.to_vector())
    line = f"{e.family} {e.n_d} {e.params.p} {e.seed} {e.r_f:.17g} {nums}"
    if e.digest:
        line += f" digest={e.digest}"
    if e.timestamp:
        line += f" timestamp={e.timestamp}"
    return line


def _parse_line(line: str, lineno: int) -> BankEntry:
    tok = line.split()
    ctx = f"line {lineno}"
    if len(tok) < 5:
        raise BankFormatError(f"{ctx}: too few fields")
    family = tok[0].lower()
    ctx = f"line {lineno} ({family} {tok[1]} {tok[2]})"
    try:
        n_d, p, seed = int(tok[1]), int(tok[2]), int(tok[3])
        r_f = float(tok[4])
    except ValueError:
        raise BankFormatError(f"{ctx}: bad header fields") from None
    if p < 1:
        raise BankFormatError(f"{ctx}: depth must be >= 1")
    nums = tok[5:5 + 2 * p]
    if len(nums) != 2 * p:
        raise BankFormatError(f"{ctx}: expected {2 * p} angles, found {len(nums)}")
    try:
        theta = np.array([float(x) for x in nums])
        params = QaoaParams.from_vector(theta)
    except ValueError as exc:
        raise BankFormatError(f"{ctx}: {exc}") from None
    meta = {}
    for extra in tok[5 + 2 * p:]:
        k, sep, v = extra.partition("=")
        if not sep or k not in ("digest", "timestamp"):
            raise BankFormatError(f"{ctx}: unexpected token {extra!r}")
        meta[k] = v
    return BankEntry(family, n_d, params, seed, r_f, **meta)


def bank_dumps(bank: ParameterBank) -> str:
    header = "# family n_d p seed r_f gamma_0..gamma_{p-1} beta_0..beta_{p-1} [digest=..] [timestamp=..]\n"
    return header + "".join(_entry_line(bank.entries[k]) + "\n" for k in bank.keys())


def bank_loads(text: str) -> ParameterBank:
    bank = ParameterBank()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        entry = _parse_line(line, lineno)
        if entry.key in bank:
            raise BankFormatError(f"line {lineno}: duplicate key {entry.key}")
        bank.add(entry)
    return bank


def bank_save(bank: ParameterBank, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(bank_dumps(bank))
    os.replace(tmp, path)


def bank_load(path) -> ParameterBank:
    path = Path(path)
    if not path.exists():
        return ParameterBank()
    return bank_loads(path.read_text())
