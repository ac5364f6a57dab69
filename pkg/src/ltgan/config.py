"""Training hyper-parameters and the flat `key = value` config format.

The same canonical text is used by config files, resolved-config
snapshots and the checkpoint header, so a round trip through any of them
is exact (floats are written with repr and parse back bit-identically).
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass

from .nn import NetworkSpec


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    objective: str = "lt"            # lt | baseline | rotation-ss
    loss: str = "hinge"              # hinge | nonsat
    conditional: bool = False
    sigma_z: float = 1.0
    sigma_eps: float = 0.5
    lam: float = 1.0                 # weight of the pairing loss in the G update
    batch: int = 32                  # b: G steps use 2b codes plus 2b perturbed
    d_step: int = 1
    warmup: int = 500                # G steps before the LT branch activates
    warmup_covers_d: bool = True     # warmup D steps see plain fakes only
    steps: int = 2000                # total generator steps
    alpha_g: float = 2e-4
    alpha_d: float = 2e-4
    alpha_a: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    aux_beta1: float = 0.9
    aux_beta2: float = 0.999
    seed: int = 0
    eval_every: int = 0              # proxy-FID cadence in G steps (0 = off)
    checkpoint_every: int = 0        # periodic checkpoint cadence (0 = final only)
    fid_samples: int = 512

    def validate(self) -> None:
        if self.objective not in ("lt", "baseline", "rotation-ss"):
            raise ConfigError(f"objective must be lt | baseline | rotation-ss, got '{self.objective}'")
        if self.loss not in ("hinge", "nonsat"):
            raise ConfigError(f"loss must be hinge | nonsat, got '{self.loss}'")
        if not self.sigma_eps < self.sigma_z:
            raise ConfigError(f"sigma_eps ({self.sigma_eps}) must be < sigma_z ({self.sigma_z})")
        if self.d_step < 1:
            raise ConfigError("d_step must be >= 1")
        if self.warmup < 0 or self.steps < 0:
            raise ConfigError("warmup and steps must be >= 0")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if min(self.alpha_g, self.alpha_d, self.alpha_a) <= 0:
            raise ConfigError("all Adam rates must be > 0")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")


# ---------------------------------------------------------------------------
# typed flat serialization
# ---------------------------------------------------------------------------

def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def parse_value(text: str, typ):
    text = text.strip()
    origin = typing.get_origin(typ)
    if origin in (tuple, list):
        args = typing.get_args(typ)
        if not text:
            return origin()
        parts = text.split(",")
        if len(args) == 2 and args[1] is Ellipsis:
            elems = [parse_value(p, args[0]) for p in parts]
        else:
            if len(parts) != len(args):
                raise ConfigError(f"expected {len(args)} elements, got '{text}'")
            elems = [parse_value(p, a) for p, a in zip(parts, args)]
        return tuple(elems) if origin is tuple else list(elems)
    if typ is bool:
        if text not in ("true", "false"):
            raise ConfigError(f"expected true/false, got '{text}'")
        return text == "true"
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    if typ is str:
        return text
    raise ConfigError(f"unsupported config field type {typ}")


def dataclass_items(prefix: str, obj) -> dict[str, str]:
    return {f"{prefix}.{f.name}": format_value(getattr(obj, f.name))
            for f in dataclasses.fields(obj)}


def dataclass_from_items(cls, prefix: str, items: dict[str, str]):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"{prefix}.{f.name}"
        if key in items:
            kwargs[f.name] = parse_value(items[key], hints[f.name])
    return cls(**kwargs)


def known_keys() -> dict[str, type]:
    """Every accepted dotted config key with its type (CLI validation)."""
    out: dict[str, type] = {}
    for prefix, cls in (("train", TrainConfig), ("net", NetworkSpec)):
        hints = typing.get_type_hints(cls)
        for f in dataclasses.fields(cls):
            out[f"{prefix}.{f.name}"] = hints[f.name]
    from .datasets import RingSpec, ShapesSpec  # local import avoids a cycle
    for prefix, cls in (("ring", RingSpec), ("shapes", ShapesSpec)):
        hints = typing.get_type_hints(cls)
        for f in dataclasses.fields(cls):
            out[f"{prefix}.{f.name}"] = hints[f.name]
    out["data.kind"] = str          # ring | shapes
    out["data.n_train"] = int
    out["data.n_test"] = int
    out["data.seed"] = int
    return out


def canonical_lines(items: dict[str, str]) -> str:
    return "".join(f"{k} = {items[k]}\n" for k in sorted(items))


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat `key = value` lines with # comments into a raw dict."""
    items: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{line.strip()}'")
        key, value = stripped.split("=", 1)
        items[key.strip()] = value.strip()
    return items
