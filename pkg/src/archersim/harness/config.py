"""Experiment configuration: loading, defaults, validation and echo."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..matchmaker import ExpressionSyntaxError, parse_expression
from ..overlay import NatClass
from ..simcore.model import (
    BackgroundLoad,
    Departure,
    ExperimentProfile,
    PoolConfig,
    SiteSpec,
)

BUILTIN = ("fig2", "scenario1")
SECTIONS = ("experiment", "sites", "pools", "overlay", "output")


class ConfigError(ValueError):
    kind = "config"


class ConfigParseError(ConfigError):
    kind = "parse"

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class ConfigValidationError(ConfigError):
    kind = "validation"

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__(f"{len(self.violations)} violation(s): " + "; ".join(self.violations))


@dataclass(frozen=True)
class OverlayConfig:
    nodes: int = 64
    bits: int = 160
    seed: int = 0
    nat_mix: tuple[tuple[str, float], ...] = (("public", 1.0),)
    fuzz_frames: int = 100


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    profile: ExperimentProfile
    pools: tuple[PoolConfig, ...]
    overlay: OverlayConfig = field(default_factory=OverlayConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    # experiment-specific knobs kept verbatim (e.g. serial-baseline settings)
    extras: tuple[tuple[str, Any], ...] = ()

    def extra(self, key: str, default=None):
        return dict(self.extras).get(key, default)


# -- parsing ----------------------------------------------------------------

def _parse_text(text: str, suffix: str) -> dict:
    if not text.strip():
        raise ConfigParseError("empty config file", 1)
    if suffix == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigParseError(exc.msg, exc.lineno) from None
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigParseError(str(exc), getattr(exc, "lineno", None) or _line_from(str(exc))) from None
    if not isinstance(data, dict):
        raise ConfigParseError("top level must be a table", 1)
    return data


def _line_from(msg: str) -> Optional[int]:
    marker = "line "
    i = msg.rfind(marker)
    if i < 0:
        return None
    digits = "".join(ch for ch in msg[i + len(marker):].split(",")[0] if ch.isdigit())
    return int(digits) if digits else None


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a TOML (or JSON) experiment file, or a built-in name such as ``fig2``."""
    path = str(path)
    if path in BUILTIN:
        return builtin_config(path)
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror or exc}") from None
    return config_from_dict(_parse_text(text, p.suffix.lower()))


def builtin_config(name: str) -> ExperimentConfig:
    if name not in BUILTIN:
        raise ConfigError(f"unknown built-in experiment {name!r}; choose from {', '.join(BUILTIN)}")
    text = resources.files("archersim.data").joinpath(f"{name}.toml").read_text(encoding="utf-8")
    return config_from_dict(_parse_text(text, ".toml"))


# -- validation -------------------------------------------------------------

_EXPERIMENT_KEYS = {
    "name", "n_jobs", "n_nodes", "work", "overhead", "submit_link_delay", "job_pool", "job_owner",
    "requirements", "rank", "work_jitter", "bits", "background", "departures", "extras",
}


def _get(d: dict, key: str, kind, default, errs: list[str], where: str):
    if key not in d:
        return default
    v = d[key]
    ok = isinstance(v, kind) and not (isinstance(v, bool) and bool not in (kind if isinstance(kind, tuple) else (kind,)))
    if not ok:
        errs.append(f"{where}.{key}: expected {_kind_name(kind)}, got {type(v).__name__}")
        return default
    return v


def _kind_name(kind) -> str:
    kinds = kind if isinstance(kind, tuple) else (kind,)
    return " or ".join(k.__name__ for k in kinds)


NUM = (int, float)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build and validate a config; every problem is reported at once."""
    errs: list[str] = []
    for key in data:
        if key not in SECTIONS:
            errs.append(f"unknown section {key!r}")
    exp = data.get("experiment")
    if not isinstance(exp, dict):
        errs.append("missing [experiment] section")
        exp = {}
    for key in exp:
        if key not in _EXPERIMENT_KEYS:
            errs.append(f"experiment: unknown key {key!r}")

    name = _get(exp, "name", str, "experiment", errs, "experiment")
    n_jobs = _get(exp, "n_jobs", int, 0, errs, "experiment")
    if "n_jobs" not in exp:
        errs.append("experiment.n_jobs is required")
    work = _get(exp, "work", NUM, 0.0, errs, "experiment")
    if "work" not in exp:
        errs.append("experiment.work is required")

    raw_sites = data.get("sites", [])
    sites = []
    if not isinstance(raw_sites, list):
        errs.append("sites must be an array of tables")
        raw_sites = []
    seen_sites = set()
    for i, s in enumerate(raw_sites):
        where = f"sites[{i}]"
        if not isinstance(s, dict):
            errs.append(f"{where}: expected a table")
            continue
        sname = _get(s, "name", str, f"site{i}", errs, where)
        if sname in seen_sites:
            errs.append(f"{where}: duplicate site name {sname!r}")
        seen_sites.add(sname)
        nat = _get(s, "nat", str, "public", errs, where)
        if nat not in {k.value for k in NatClass}:
            errs.append(f"{where}.nat: unknown NAT class {nat!r}")
            nat = "public"
        if "pool" not in s:
            errs.append(f"{where}.pool is required")
        sites.append(SiteSpec(
            name=sname,
            nodes=_get(s, "nodes", int, 0, errs, where),
            speed=float(_get(s, "speed", NUM, 1.0, errs, where)),
            pool=_get(s, "pool", str, "", errs, where),
            nat=nat,
            memory=_get(s, "memory", int, 2048, errs, where),
            arch=_get(s, "arch", str, "x86", errs, where),
        ))
    n_nodes = _get(exp, "n_nodes", int, sum(s.nodes for s in sites), errs, "experiment")

    raw_pools = data.get("pools", [])
    pools = []
    if not isinstance(raw_pools, list) or not raw_pools:
        errs.append("at least one [[pools]] entry is required")
        raw_pools = raw_pools if isinstance(raw_pools, list) else []
    for i, p in enumerate(raw_pools):
        where = f"pools[{i}]"
        if not isinstance(p, dict):
            errs.append(f"{where}: expected a table")
            continue
        if "pool_id" not in p:
            errs.append(f"{where}.pool_id is required")
        targets = _get(p, "flock_targets", list, [], errs, where)
        interval = float(_get(p, "negotiation_interval", NUM, 60.0, errs, where))
        if not interval > 0:
            errs.append(f"{where}.negotiation_interval must be positive")
            interval = 60.0
        pools.append(PoolConfig(
            pool_id=_get(p, "pool_id", str, f"pool{i}", errs, where),
            flock_targets=tuple(str(t) for t in targets),
            negotiation_interval=interval,
            claim_reuse=_get(p, "claim_reuse", bool, True, errs, where),
        ))
    pool_ids = [p.pool_id for p in pools]
    if len(set(pool_ids)) != len(pool_ids):
        errs.append("duplicate pool_id")
    for p in pools:
        for t in p.flock_targets:
            if t not in pool_ids:
                errs.append(f"pool {p.pool_id!r}: flock target {t!r} is not a configured pool")
    for s in sites:
        if s.pool and s.pool not in pool_ids:
            errs.append(f"site {s.name!r}: pool {s.pool!r} is not configured")

    bg_raw = _get(exp, "background", dict, {}, errs, "experiment")
    background = BackgroundLoad(
        occupancy=float(_get(bg_raw, "occupancy", NUM, 0.0, errs, "experiment.background")),
        work=float(_get(bg_raw, "work", NUM, 0.0, errs, "experiment.background")),
        origin_pool=_get(bg_raw, "origin_pool", str, "background", errs, "experiment.background"),
        owner=_get(bg_raw, "owner", str, "community", errs, "experiment.background"),
    )
    if background.occupancy > 0 and background.origin_pool not in pool_ids:
        errs.append(f"background origin pool {background.origin_pool!r} is not configured")
    departures = []
    for i, d in enumerate(_get(exp, "departures", list, [], errs, "experiment")):
        where = f"experiment.departures[{i}]"
        if not isinstance(d, dict):
            errs.append(f"{where}: expected a table")
            continue
        departures.append(Departure(_get(d, "site", str, "", errs, where), _get(d, "index", int, 0, errs, where),
                                    float(_get(d, "time", NUM, 0.0, errs, where))))

    job_pool = _get(exp, "job_pool", str, pool_ids[0] if pool_ids else "", errs, "experiment")
    if pool_ids and job_pool not in pool_ids:
        errs.append(f"experiment.job_pool {job_pool!r} is not a configured pool")
    overhead = _get(exp, "overhead", str, "none", errs, "experiment")
    bits = _get(exp, "bits", int, 160, errs, "experiment")
    if not 8 <= bits <= 512:
        errs.append("experiment.bits must lie in [8, 512]")
        bits = 160
    profile = ExperimentProfile(
        n_jobs=n_jobs,
        n_nodes=n_nodes,
        sites=tuple(sites),
        work=float(work),
        overhead=overhead,
        submit_link_delay=float(_get(exp, "submit_link_delay", NUM, 0.0, errs, "experiment")),
        job_pool=job_pool,
        job_owner=_get(exp, "job_owner", str, "user", errs, "experiment"),
        requirements=_get(exp, "requirements", str, "true", errs, "experiment"),
        rank=_get(exp, "rank", str, "other.Speed", errs, "experiment"),
        work_jitter=float(_get(exp, "work_jitter", NUM, 0.0, errs, "experiment")),
        background=background,
        departures=tuple(departures),
        bits=bits,
    )
    errs.extend(v for v in profile.violations() if v not in errs)
    for label, text in (("requirements", profile.requirements), ("rank", profile.rank)):
        try:
            parse_expression(text)
        except ExpressionSyntaxError as exc:
            errs.append(f"experiment.{label}: {exc}")

    ov_raw = data.get("overlay", {})
    if not isinstance(ov_raw, dict):
        errs.append("overlay must be a table")
        ov_raw = {}
    mix_raw = _get(ov_raw, "nat_mix", dict, {"public": 1.0}, errs, "overlay")
    mix = []
    for k, v in mix_raw.items():
        if k not in {c.value for c in NatClass}:
            errs.append(f"overlay.nat_mix: unknown NAT class {k!r}")
        elif not isinstance(v, NUM) or isinstance(v, bool) or v < 0:
            errs.append(f"overlay.nat_mix.{k}: weight must be a non-negative number")
        else:
            mix.append((k, float(v)))
    if mix and not any(k == "public" and w > 0 for k, w in mix):
        errs.append("overlay.nat_mix needs a positive public weight (relays must exist)")
    overlay = OverlayConfig(
        nodes=_get(ov_raw, "nodes", int, 64, errs, "overlay"),
        bits=_get(ov_raw, "bits", int, 160, errs, "overlay"),
        seed=_get(ov_raw, "seed", int, 0, errs, "overlay"),
        nat_mix=tuple(mix) or (("public", 1.0),),
        fuzz_frames=_get(ov_raw, "fuzz_frames", int, 100, errs, "overlay"),
    )
    if overlay.nodes < 1:
        errs.append("overlay.nodes must be positive")
    if overlay.fuzz_frames < 0:
        errs.append("overlay.fuzz_frames must be non-negative")
    out_raw = data.get("output", {})
    if not isinstance(out_raw, dict):
        errs.append("output must be a table")
        out_raw = {}
    output = OutputConfig(dir=_get(out_raw, "dir", str, f"out/{name}", errs, "output"))
    extras = _get(exp, "extras", dict, {}, errs, "experiment")

    if errs:
        raise ConfigValidationError(list(dict.fromkeys(errs)))
    return ExperimentConfig(name, profile, tuple(pools), overlay, output, tuple(sorted(extras.items())))


# -- echo -------------------------------------------------------------------

def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain-data form that :func:`config_from_dict` maps back to an equal config."""
    p = cfg.profile
    exp: dict[str, Any] = {
        "name": cfg.name,
        "n_jobs": p.n_jobs,
        "n_nodes": p.n_nodes,
        "work": p.work,
        "overhead": p.overhead,
        "submit_link_delay": p.submit_link_delay,
        "job_pool": p.job_pool,
        "job_owner": p.job_owner,
        "requirements": p.requirements,
        "rank": p.rank,
        "work_jitter": p.work_jitter,
        "bits": p.bits,
        "background": {
            "occupancy": p.background.occupancy,
            "work": p.background.work,
            "origin_pool": p.background.origin_pool,
            "owner": p.background.owner,
        },
        "departures": [{"site": d.site, "index": d.index, "time": d.time} for d in p.departures],
        "extras": dict(cfg.extras),
    }
    return {
        "experiment": exp,
        "sites": [{"name": s.name, "nodes": s.nodes, "speed": s.speed, "pool": s.pool, "nat": s.nat,
                   "memory": s.memory, "arch": s.arch} for s in p.sites],
        "pools": [{"pool_id": q.pool_id, "flock_targets": list(q.flock_targets),
                   "negotiation_interval": q.negotiation_interval, "claim_reuse": q.claim_reuse}
                  for q in cfg.pools],
        "overlay": {"nodes": cfg.overlay.nodes, "bits": cfg.overlay.bits, "seed": cfg.overlay.seed,
                    "nat_mix": dict(cfg.overlay.nat_mix), "fuzz_frames": cfg.overlay.fuzz_frames},
        "output": {"dir": cfg.output.dir},
    }
