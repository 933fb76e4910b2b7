"""YAML experiment files.

A file lists ``nodes``, ``links`` (with a mean power gain or a fixed rate),
``sources`` (destination plus per-source control settings) and optional
``channel``, ``control`` and ``run`` sections. Units: gains are
dimensionless, rates are bits per channel use, message sizes are bits.
"""

from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import jsonschema
import yaml

from confnet.channel import CONSTANT, SHANNON, ChannelParams
from confnet.control_finite import BITS, RATE, Alg2Params
from confnet.control_infinite import DEFAULT_A_MAX, DEFAULT_H, DEFAULT_KAPPA, Alg1Params
from confnet.engine import ALG1, ALG2, DEFAULT_HORIZON, RunConfig
from confnet.topology import ALL_LINKS, INTERFERENCE_MODELS, NODE_EXCLUSIVE, validate_topology

_ID = {"type": ["string", "integer"]}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["nodes", "links", "sources"],
    "properties": {
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "role"],
                "properties": {"id": _ID, "role": {"enum": ["source", "relay", "destination"]}},
            },
        },
        "links": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["from", "to"],
                "properties": {
                    "from": _ID,
                    "to": _ID,
                    "mean_gain": _POS,
                    "fixed_rate": {"type": "number", "minimum": 0},
                },
            },
        },
        "sources": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "destination"],
                "properties": {
                    "id": _ID,
                    "destination": _ID,
                    "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    "gamma": {"type": "number", "minimum": 0, "maximum": 1},
                    "rate": _POS,
                    "message_bits": _POS,
                },
            },
        },
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": [SHANNON, CONSTANT]},
                "power": _POS,
                "log_base": {"oneOf": [{"const": "e"}, {"type": "number", "exclusiveMinimum": 1}]},
            },
        },
        "control": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "algorithm": {"enum": [ALG1, ALG2]},
                "H": _POS,
                "kappa": {"type": "number"},
                "A_max": _POS,
                "grid_points": {"type": "integer", "minimum": 2},
                "interference": {"enum": list(INTERFERENCE_MODELS)},
                "overhearing": {"type": "boolean"},
                "outage_weight": {"enum": [BITS, RATE]},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "warm_up": {"type": "number", "minimum": 0, "maximum": 0.9},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


def _line_of(root, path) -> int | None:
    """1-based line of the YAML node at ``path`` (keys and indices)."""
    node = root
    for key in path:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == str(key):
                    node = v
                    break
            else:
                break
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    return node.start_mark.line + 1 if node is not None else None


def load_config_text(text: str, name: str = "<config>") -> RunConfig:
    try:
        root = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{name}: not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "top level"
        line = _line_of(root, list(e.absolute_path)) if root is not None else None
        at = f" line {line}" if line else ""
        raise ConfigError(f"{name}:{at}: {where}: {e.message}")
    try:
        return from_dict(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def parse_config(path) -> RunConfig:
    path = Path(path)
    return load_config_text(path.read_text(), str(path))


def from_dict(raw: dict) -> RunConfig:
    """RunConfig from an already schema-checked mapping; defaults fill gaps."""
    sources = raw["sources"]
    topology = validate_topology(
        {
            "nodes": raw["nodes"],
            "links": [(l["from"], l["to"]) for l in raw["links"]],
            "pairing": {str(s["id"]): str(s["destination"]) for s in sources},
        }
    )
    channel = raw.get("channel", {})
    kind = channel.get("kind", SHANNON)
    key = "mean_gain" if kind == SHANNON else "fixed_rate"
    for l in raw["links"]:
        if key not in l:
            raise ValueError(f"link ({l['from']}, {l['to']}) needs {key} for a {kind} channel")
    values = tuple(float(l[key]) for l in raw["links"])
    base = channel.get("log_base", 2)
    base = math.e if base == "e" else float(base)
    if kind == SHANNON:
        cp = ChannelParams(gains=values, power=float(channel.get("power", 1.0)), log_base=base)
    else:
        cp = ChannelParams(kind=CONSTANT, rates=values, power=float(channel.get("power", 1.0)), log_base=base)

    control = raw.get("control", {})
    algorithm = control.get("algorithm", ALG1)
    common = dict(
        H=float(control.get("H", DEFAULT_H)),
        kappa=float(control.get("kappa", DEFAULT_KAPPA)),
        A_max=float(control.get("A_max", DEFAULT_A_MAX)),
    )
    # a source's destination comes from the pairing; keep the file's source order
    by_id = {str(s["id"]): s for s in sources}
    ordered = [by_id[s] for s in topology.sources]
    if algorithm == ALG1:
        missing = [str(s["id"]) for s in ordered if "alpha" not in s]
        if missing:
            raise ValueError(f"alg1 needs alpha for sources {missing}")
        params = Alg1Params(alpha=tuple(float(s["alpha"]) for s in ordered), **common)
    else:
        missing = [str(s["id"]) for s in ordered if "gamma" not in s or "message_bits" not in s]
        if missing:
            raise ValueError(f"alg2 needs gamma and message_bits for sources {missing}")
        params = Alg2Params(
            gamma=tuple(float(s["gamma"]) for s in ordered),
            msg_bits=tuple(float(s["message_bits"]) for s in ordered),
            nominal_rate=tuple(float(s.get("rate", 1.0)) for s in ordered),
            grid_points=int(control.get("grid_points", 200)),
            outage_weight=control.get("outage_weight", BITS),
            **common,
        )
    run = raw.get("run", {})
    return RunConfig(
        topology=topology,
        channel=cp,
        algorithm=algorithm,
        params=params,
        horizon=int(run.get("horizon", DEFAULT_HORIZON)),
        warm_up=float(run.get("warm_up", 0.1)),
        seed=int(run.get("seed", 1)),
        interference=control.get("interference", NODE_EXCLUSIVE),
        overhearing=bool(control.get("overhearing", True)),
    )


def to_dict(config: RunConfig) -> dict:
    """Inverse of :func:`from_dict` with every default written out."""
    topo, ch, p = config.topology, config.channel, config.params
    key = "mean_gain" if ch.kind == SHANNON else "fixed_rate"
    values = ch.gains if ch.kind == SHANNON else ch.rates
    sources = []
    for s, (src, dst) in enumerate(topo.pairing.items()):
        entry = {"id": src, "destination": dst}
        if config.algorithm == ALG1:
            entry["alpha"] = p.alpha[s]
        else:
            entry.update(gamma=p.gamma[s], rate=p.nominal_rate[s], message_bits=p.msg_bits[s])
        sources.append(entry)
    control = {"algorithm": config.algorithm, "H": p.H, "kappa": p.kappa, "A_max": p.A_max,
               "interference": config.interference, "overhearing": config.overhearing}
    if config.algorithm == ALG2:
        control.update(grid_points=p.grid_points, outage_weight=p.outage_weight)
    return {
        "nodes": [{"id": n, "role": topo.roles[n]} for n in topo.nodes],
        "links": [{"from": i, "to": j, key: v} for (i, j), v in zip(topo.links, values)],
        "sources": sources,
        "channel": {"kind": ch.kind, "power": ch.power, "log_base": "e" if ch.log_base == math.e else ch.log_base},
        "control": control,
        "run": {"horizon": config.horizon, "warm_up": config.warm_up, "seed": config.seed},
    }


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=False)


def bundled_config_path(name: str = "diamond_shared") -> Path:
    return Path(__file__).parent / "data" / f"{name}.yaml"


def bundled_config(name: str = "diamond_shared", **overrides) -> RunConfig:
    """A shipped experiment, optionally with RunConfig fields replaced."""
    return replace(parse_config(bundled_config_path(name)), **overrides)


def with_algorithm(config: RunConfig, algorithm: str, params) -> RunConfig:
    return replace(config, algorithm=algorithm, params=params)
