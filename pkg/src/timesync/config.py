"""JSON scenario configuration.

A scenario is one JSON document::

    {
      "params": {"v1": 0, "v2": 1, "alpha12": 1, "alpha21": 1},
      "populations": {"n1": 50, "n2": 50}          # or {"n": 100, "c1": 0.5}
      "initial": {"kind": "zero"},                  # | explicit | normal
      "horizon": 10.0,
      "replicas": 8,
      "seed": 1234,
      "output_dir": "out",
      "samples": 11,
      "two_particle": {...}, "pde": {...}, "scan": {...}
    }

Every section except ``params`` has defaults.  Unknown keys are rejected.
Validation errors carry the dotted field path and, when the document came
from text, the line where that field appears.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .model import ModelParams


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = f"line {line}: " if line is not None else ""
        field_part = f"{path}: " if path else ""
        super().__init__(f"{where}{field_part}{message}")


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "zero"
    positions1: tuple = ()
    positions2: tuple = ()
    mean1: float = 0.0
    std1: float = 1.0
    mean2: float = 0.0
    std2: float = 1.0

    def sampler(self, n1: int, n2: int):
        """Argument for :func:`timesync.sim.make_initial`."""
        if self.kind == "zero":
            return None
        if self.kind == "explicit":
            return (np.array(self.positions1, dtype=float), np.array(self.positions2, dtype=float))

        def draw(rng, n1, n2):
            return (rng.normal(self.mean1, self.std1, n1), rng.normal(self.mean2, self.std2, n2))

        return draw


@dataclass(frozen=True)
class TwoParticleSpec:
    burnin: float = 100.0
    n_samples: int = 10_000
    spacing: float | None = None


@dataclass(frozen=True)
class PdeSpec:
    times: tuple = (1.0, 5.0, 20.0)
    initial: str = "gaussian"  # or "singular"
    mean1: float = 0.0
    std1: float = 1.0
    mean2: float = 0.0
    std2: float = 1.0
    min_cells: int = 2048
    cfl: float = 0.5
    disagreement_tol: float = 0.05


@dataclass(frozen=True)
class ScanSpec:
    n_values: tuple = (50, 100, 200)
    s_values: tuple = (0.1, 0.25, 0.5, 1.0, 2.0, 3.0)
    c1: float = 0.5


@dataclass(frozen=True)
class ScenarioConfig:
    params: ModelParams
    n1: int = 1
    n2: int = 1
    c1: float | None = None
    n: int | None = None
    initial: InitialSpec = InitialSpec()
    horizon: float = 10.0
    replicas: int = 8
    seed: int = 1234
    output_dir: str = "out"
    samples: int = 11
    two_particle: TwoParticleSpec = TwoParticleSpec()
    pde: PdeSpec = PdeSpec()
    scan: ScanSpec = ScanSpec()

    def populations(self) -> tuple[int, int]:
        return self.n1, self.n2

    def sample_times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.samples)

    def to_dict(self) -> dict:
        pops = {"n": self.n, "c1": self.c1} if self.c1 is not None else {"n1": self.n1, "n2": self.n2}
        init = {"kind": self.initial.kind}
        if self.initial.kind == "explicit":
            init.update(positions1=list(self.initial.positions1), positions2=list(self.initial.positions2))
        elif self.initial.kind == "normal":
            init.update(mean1=self.initial.mean1, std1=self.initial.std1,
                        mean2=self.initial.mean2, std2=self.initial.std2)
        pde = asdict(self.pde)
        pde["times"] = list(self.pde.times)
        scan = asdict(self.scan)
        scan["n_values"] = list(self.scan.n_values)
        scan["s_values"] = list(self.scan.s_values)
        return {
            "params": self.params.to_dict(),
            "populations": pops,
            "initial": init,
            "horizon": self.horizon,
            "replicas": self.replicas,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "samples": self.samples,
            "two_particle": asdict(self.two_particle),
            "pde": pde,
            "scan": scan,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def provenance(self) -> dict:
        """Every field that affects results; ``output_dir`` is excluded."""
        d = self.to_dict()
        del d["output_dir"]
        return d

    def digest(self) -> str:
        canonical = json.dumps(self.provenance(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _line_of(text: str | None, path: str) -> int | None:
    if not text:
        return None
    pos = 0
    found = None
    for key in path.split("."):
        idx = text.find(f'"{key}"', pos)
        if idx < 0:
            break
        pos = idx + 1
        found = idx
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


class _Reader:
    def __init__(self, text: str | None):
        self.text = text

    def fail(self, path: str, message: str):
        raise ConfigError(message, path, _line_of(self.text, path))

    def section(self, data, path: str, allowed: set) -> dict:
        if not isinstance(data, dict):
            self.fail(path, "expected an object")
        extra = sorted(set(data) - allowed)
        if extra:
            self.fail(f"{path}.{extra[0]}" if path else extra[0], "unknown field")
        return data

    def number(self, data, key, path, default=None, *, positive=False, nonneg=False, integer=False,
               optional=False):
        full = f"{path}.{key}" if path else key
        if key not in data:
            if default is None and not optional:
                self.fail(full, "missing required field")
            return default
        value = data[key]
        if value is None and optional:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(full, f"expected a number, got {value!r}")
        if integer and (not isinstance(value, int) and not float(value).is_integer()):
            self.fail(full, f"expected an integer, got {value!r}")
        if not math.isfinite(value):
            self.fail(full, "must be finite")
        if positive and not value > 0:
            self.fail(full, f"must be positive, got {value!r}")
        if nonneg and value < 0:
            self.fail(full, f"must be nonnegative, got {value!r}")
        return int(value) if integer else float(value)

    def numbers(self, data, key, path, default, *, integer=False, positive=False):
        full = f"{path}.{key}"
        if key not in data:
            return default
        value = data[key]
        if not isinstance(value, list) or not value:
            self.fail(full, "expected a nonempty list of numbers")
        out = []
        for item in value:
            if isinstance(item, bool) or not isinstance(item, (int, float)) or not math.isfinite(item):
                self.fail(full, f"expected numbers, got {item!r}")
            if positive and not item > 0:
                self.fail(full, f"entries must be positive, got {item!r}")
            if integer and not float(item).is_integer():
                self.fail(full, f"expected integers, got {item!r}")
            out.append(int(item) if integer else float(item))
        return tuple(out)


def config_from_dict(data: dict, *, text: str | None = None) -> ScenarioConfig:
    r = _Reader(text)
    top = {"params", "populations", "initial", "horizon", "replicas", "seed", "output_dir", "samples",
           "two_particle", "pde", "scan"}
    r.section(data, "", top)
    if "params" not in data:
        r.fail("params", "missing required field")
    praw = r.section(data["params"], "params", {"v1", "v2", "alpha12", "alpha21"})
    v1 = r.number(praw, "v1", "params")
    v2 = r.number(praw, "v2", "params")
    a12 = r.number(praw, "alpha12", "params", positive=True)
    a21 = r.number(praw, "alpha21", "params", positive=True)
    if v1 > v2:
        r.fail("params.v2", f"expected v1 <= v2, got v1={v1}, v2={v2}")
    params = ModelParams(v1, v2, a12, a21)

    pops = r.section(data.get("populations", {"n1": 1, "n2": 1}), "populations", {"n1", "n2", "n", "c1"})
    c1 = n = None
    if "c1" in pops or "n" in pops:
        if "n1" in pops or "n2" in pops:
            r.fail("populations", "give either n1/n2 or n/c1, not both")
        c1 = r.number(pops, "c1", "populations")
        n = r.number(pops, "n", "populations", integer=True, positive=True)
        if not 0 < c1 < 1:
            r.fail("populations.c1", f"must lie strictly between 0 and 1, got {c1}")
        n1 = int(math.floor(c1 * n))
        n2 = int(math.floor((1.0 - c1) * n + 1e-9))
        if n1 < 1 or n2 < 1:
            r.fail("populations.n", f"N={n} too small for c1={c1}")
    else:
        n1 = r.number(pops, "n1", "populations", 1, integer=True, positive=True)
        n2 = r.number(pops, "n2", "populations", 1, integer=True, positive=True)

    iraw = r.section(data.get("initial", {"kind": "zero"}), "initial",
                     {"kind", "positions1", "positions2", "mean1", "std1", "mean2", "std2"})
    kind = iraw.get("kind", "zero")
    if kind == "zero":
        initial = InitialSpec()
    elif kind == "explicit":
        p1 = r.numbers(iraw, "positions1", "initial", None)
        p2 = r.numbers(iraw, "positions2", "initial", None)
        if p1 is None or p2 is None:
            r.fail("initial", "explicit initial condition needs positions1 and positions2")
        if len(p1) != n1 or len(p2) != n2:
            r.fail("initial.positions1", f"expected {n1} and {n2} positions, got {len(p1)} and {len(p2)}")
        initial = InitialSpec("explicit", p1, p2)
    elif kind == "normal":
        initial = InitialSpec(
            "normal",
            mean1=r.number(iraw, "mean1", "initial", 0.0),
            std1=r.number(iraw, "std1", "initial", 1.0, positive=True),
            mean2=r.number(iraw, "mean2", "initial", 0.0),
            std2=r.number(iraw, "std2", "initial", 1.0, positive=True),
        )
    else:
        r.fail("initial.kind", f"unknown kind {kind!r}; expected zero, explicit or normal")

    horizon = r.number(data, "horizon", "", 10.0, positive=True)
    replicas = r.number(data, "replicas", "", 8, integer=True, positive=True)
    if replicas < 2:
        r.fail("replicas", "need at least 2 replicas")
    seed = r.number(data, "seed", "", 1234, integer=True, nonneg=True)
    if seed >= 2**64:
        r.fail("seed", "must fit in 64 bits")
    output_dir = data.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        r.fail("output_dir", "expected a nonempty string")
    samples = r.number(data, "samples", "", 11, integer=True, positive=True)
    if samples < 2:
        r.fail("samples", "need at least 2 sample times")

    traw = r.section(data.get("two_particle", {}), "two_particle", {"burnin", "n_samples", "spacing"})
    two = TwoParticleSpec(
        burnin=r.number(traw, "burnin", "two_particle", 100.0, nonneg=True),
        n_samples=r.number(traw, "n_samples", "two_particle", 10_000, integer=True, positive=True),
        spacing=r.number(traw, "spacing", "two_particle", None, positive=True, optional=True),
    )

    draw = r.section(data.get("pde", {}), "pde", set(PdeSpec.__dataclass_fields__))
    pde_initial = draw.get("initial", "gaussian")
    if pde_initial not in ("gaussian", "singular"):
        r.fail("pde.initial", f"expected gaussian or singular, got {pde_initial!r}")
    pde = PdeSpec(
        times=r.numbers(draw, "times", "pde", PdeSpec.times, positive=True),
        initial=pde_initial,
        mean1=r.number(draw, "mean1", "pde", 0.0),
        std1=r.number(draw, "std1", "pde", 1.0, positive=True),
        mean2=r.number(draw, "mean2", "pde", 0.0),
        std2=r.number(draw, "std2", "pde", 1.0, positive=True),
        min_cells=r.number(draw, "min_cells", "pde", 2048, integer=True, positive=True),
        cfl=r.number(draw, "cfl", "pde", 0.5, positive=True),
        disagreement_tol=r.number(draw, "disagreement_tol", "pde", 0.05, positive=True),
    )
    if pde.cfl > 1:
        r.fail("pde.cfl", f"must not exceed 1, got {pde.cfl}")
    if list(pde.times) != sorted(pde.times):
        r.fail("pde.times", "times must be increasing")

    sraw = r.section(data.get("scan", {}), "scan", {"n_values", "s_values", "c1"})
    scan = ScanSpec(
        n_values=r.numbers(sraw, "n_values", "scan", ScanSpec.n_values, integer=True, positive=True),
        s_values=r.numbers(sraw, "s_values", "scan", ScanSpec.s_values, positive=True),
        c1=r.number(sraw, "c1", "scan", 0.5),
    )
    if not 0 < scan.c1 < 1:
        r.fail("scan.c1", f"must lie strictly between 0 and 1, got {scan.c1}")
    if min(scan.n_values) < 2:
        r.fail("scan.n_values", "every N must be at least 2")

    return ScenarioConfig(
        params=params, n1=n1, n2=n2, c1=c1, n=n, initial=initial, horizon=horizon, replicas=replicas,
        seed=seed, output_dir=output_dir, samples=samples, two_particle=two, pde=pde, scan=scan,
    )


def parse_config(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return config_from_dict(data, text=text)


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())
