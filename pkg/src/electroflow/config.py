"""Run configuration: a flat key=value text format with a stable hash."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from .generators import GeneratorSpec
from .ipm import StepParams

ALGORITHMS = ("ipm-localized", "ipm-exact", "ssp")
MODES = ("practical", "faithful")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    mode: str = "practical"
    algorithm: str = "ipm-localized"
    k: int | None = None
    beta: float | None = None
    alpha: float | None = None
    eps: float | None = None
    eps_hat: float | None = None
    eps_step: float | None = None
    eps_solve: float | None = None
    T_hat: int | None = None
    instance: str | None = None
    family: str | None = None
    n: int | None = None
    m: int | None = None
    U: int | None = None
    W: int | None = None
    count: int | None = None
    out: str | None = None
    log: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {', '.join(ALGORITHMS)}")

    def step_params(self) -> StepParams:
        over = {name: getattr(self, name) for name in
                ("beta", "alpha", "eps", "eps_hat", "eps_step", "eps_solve", "T_hat")
                if getattr(self, name) is not None}
        algorithm = self.algorithm if self.algorithm != "ssp" else "ipm-localized"
        if self.mode == "faithful":
            return StepParams.faithful(k=self.k or 1, algorithm=algorithm, **over)
        if self.k is not None:
            over["k"] = self.k
        return StepParams.practical(algorithm=algorithm, **over)

    def generator_spec(self) -> GeneratorSpec:
        base = GeneratorSpec()
        return GeneratorSpec(self.family or base.family, self.n or base.n, self.m or base.m, self.U or base.U,
                             self.W or base.W, self.count or base.count, self.seed)

    def to_text(self) -> str:
        """One key=value line per field, in declaration order; unset fields are kept as empty values."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={'' if v is None else v}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_INT = {"seed", "k", "T_hat", "n", "m", "U", "W", "count"}
_FLOAT = {"beta", "alpha", "eps", "eps_hat", "eps_step", "eps_solve"}


def parse_config(text: str) -> RunConfig:
    """Parse key=value lines; blank lines and lines starting with # are ignored."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if val == "":
            values[key] = None
        elif key in _INT:
            try:
                values[key] = int(val)
            except ValueError:
                raise ValueError(f"line {lineno}: {key} must be an integer") from None
        elif key in _FLOAT:
            try:
                values[key] = float(val)
            except ValueError:
                raise ValueError(f"line {lineno}: {key} must be a number") from None
        else:
            values[key] = val
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
