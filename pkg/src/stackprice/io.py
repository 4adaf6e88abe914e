"""Versioned JSON game files and leader-trace export (CSV / JSON).

A game file holds either a raw pricing game (dense row-major matrices) or a
charging scenario, plus optional leader settings and documented start
prices. The schema lives in ``GAME_FILE_SCHEMA``; unknown fields are
rejected and non-finite numbers are refused on both read and write.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import GameFileError, GameValidationError
from .game import FollowerSpec, PricingGame, TrackingObjective, validate_game
from .scenario import ChargingScenario, Company, build_game_from_scenario

SCHEMA_VERSION = 1

_vector = {"type": "array", "items": {"type": "number"}}
_matrix = {"type": "array", "items": _vector}

GAME_FILE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "kind"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"enum": ["game", "scenario"]},
        "description": {"type": "string"},
        "game": {
            "type": "object",
            "additionalProperties": False,
            "required": ["followers", "price_lo", "price_hi", "leader"],
            "properties": {
                "followers": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["P", "Q", "r", "S"],
                        "properties": {
                            "P": _matrix, "Q": _matrix, "r": _vector, "S": _matrix,
                            "A": _matrix, "b": _vector, "G": _matrix, "h": _vector,
                        },
                    },
                },
                "price_lo": _vector,
                "price_hi": _vector,
                "leader": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "n_des"],
                    "properties": {"kind": {"const": "tracking"}, "n_des": _vector},
                },
            },
        },
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "required": ["stations", "companies", "price_lo", "price_hi", "n_des"],
            "properties": {
                "stations": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["capacity", "queue_weight"],
                    "properties": {"capacity": _vector, "queue_weight": _vector},
                },
                "companies": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["fleet_size", "charging_demand", "travel_cost", "expected_profit"],
                        "properties": {
                            "name": {"type": "string"},
                            "fleet_size": {"type": "number"},
                            "charging_demand": _vector,
                            "travel_cost": _vector,
                            "expected_profit": _vector,
                            "reachability": {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["G", "h"],
                                "properties": {"G": _matrix, "h": _vector},
                            },
                        },
                    },
                },
                "price_lo": _vector,
                "price_hi": _vector,
                "n_des": _vector,
            },
        },
        "leader_config": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta": {"type": "number"},
                "s_bar": {"type": "number"},
                "delta": {"type": "number"},
                "max_outer": {"type": "integer"},
                "eps": {"type": "number"},
            },
        },
        "starts": {"type": "array", "items": _vector},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "game"}}}, "then": {"required": ["game"], "not": {"required": ["scenario"]}}},
        {"if": {"properties": {"kind": {"const": "scenario"}}}, "then": {"required": ["scenario"], "not": {"required": ["game"]}}},
    ],
}


@dataclass
class GameFile:
    document: dict
    game: PricingGame
    scenario: ChargingScenario | None = None
    leader_config: dict = field(default_factory=dict)
    starts: list = field(default_factory=list)
    description: str = ""


def _field_path(parts):
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _reject_constant(token):
    raise GameFileError("", f"non-finite number {token!r} is not allowed")


def _check_finite(obj, path=()):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise GameFileError(_field_path(path), "non-finite number")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, path + (k,))
    elif isinstance(obj, list):
        for k, v in enumerate(obj):
            _check_finite(v, path + (k,))


def _arr(v, ncols=None):
    a = np.array(v, dtype=float)
    if ncols is not None and a.size == 0:
        return np.zeros((0, ncols))
    return a


def game_from_document(doc):
    """Schema-check a parsed document and build (game, scenario)."""
    _check_finite(doc)
    validator = jsonschema.Draft7Validator(GAME_FILE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        parts = list(e.absolute_path)
        # name the missing or unknown field itself rather than its parent
        if e.validator == "required":
            parts += [k for k in e.validator_value if k not in e.instance][:1]
        elif e.validator == "additionalProperties":
            parts += sorted(k for k in e.instance if k not in e.schema.get("properties", {}))[:1]
        raise GameFileError(_field_path(parts), e.message)
    if doc["kind"] == "game":
        g = doc["game"]
        followers = []
        for k, f in enumerate(g["followers"]):
            m_f = len(f["P"])
            try:
                followers.append(FollowerSpec(
                    P=_arr(f["P"]), Q=_arr(f["Q"]), r=_arr(f["r"]), S=_arr(f["S"], len(g["price_lo"])),
                    A=_arr(f.get("A", []), m_f), b=_arr(f.get("b", [])),
                    G=_arr(f.get("G", []), m_f), h=_arr(f.get("h", [])),
                ))
            except ValueError as exc:
                raise GameFileError(f"game.followers[{k}]", f"ragged matrix: {exc}") from exc
        game = PricingGame(followers, _arr(g["price_lo"]), _arr(g["price_hi"]),
                           TrackingObjective(_arr(g["leader"]["n_des"])))
        return game, None
    s = doc["scenario"]
    comps = []
    for c in s["companies"]:
        reach = c.get("reachability")
        comps.append(Company(
            fleet_size=float(c["fleet_size"]),
            charging_demand=_arr(c["charging_demand"]),
            travel_cost=_arr(c["travel_cost"]),
            expected_profit=_arr(c["expected_profit"]),
            reach_G=None if reach is None else _arr(reach["G"], len(s["stations"]["capacity"])),
            reach_h=None if reach is None else _arr(reach["h"]),
            name=c.get("name", ""),
        ))
    scen = ChargingScenario(
        capacity=_arr(s["stations"]["capacity"]), queue_weight=_arr(s["stations"]["queue_weight"]),
        price_lo=_arr(s["price_lo"]), price_hi=_arr(s["price_hi"]), n_des=_arr(s["n_des"]),
        companies=comps,
    )
    return build_game_from_scenario(scen), scen


def parse_game_file(path, validate=True):
    """Read a game file; with ``validate`` the game must pass validate_game."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise GameFileError("", f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise GameFileError("", "top level must be an object")
    game, scen = game_from_document(doc)
    if validate and scen is None:
        rep = validate_game(game)
        if not rep.passed:
            raise GameValidationError(rep)
    return GameFile(document=doc, game=game, scenario=scen,
                    leader_config=dict(doc.get("leader_config", {})),
                    starts=[np.array(s, dtype=float) for s in doc.get("starts", [])],
                    description=doc.get("description", ""))


def _rows(M):
    return np.asarray(M, dtype=float).tolist()


def game_to_document(game, description="", leader_config=None, starts=None):
    """Serialize a PricingGame as a ``kind: game`` document."""
    if not isinstance(game.leader, TrackingObjective):
        raise GameFileError("game.leader", "only tracking objectives can be serialized")
    doc = {"schema_version": SCHEMA_VERSION, "kind": "game"}
    if description:
        doc["description"] = description
    doc["game"] = {
        "followers": [
            {"P": _rows(f.P), "Q": _rows(f.Q), "r": _rows(f.r), "S": _rows(f.S),
             "A": _rows(f.A), "b": _rows(f.b), "G": _rows(f.G), "h": _rows(f.h)}
            for f in game.followers
        ],
        "price_lo": _rows(game.price_lo),
        "price_hi": _rows(game.price_hi),
        "leader": {"kind": "tracking", "n_des": _rows(game.leader.n_des)},
    }
    if leader_config:
        doc["leader_config"] = dict(leader_config)
    if starts:
        doc["starts"] = [_rows(s) for s in starts]
    return doc


def write_game_file(obj, path):
    """Write a GameFile (its document) or a bare PricingGame as JSON.

    Floats are written with Python's shortest round-trip repr, so reading
    the file back reproduces every number bit for bit.
    """
    doc = obj.document if isinstance(obj, GameFile) else game_to_document(obj) if isinstance(obj, PricingGame) else obj
    _check_finite(doc)
    text = json.dumps(doc, indent=1, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


# traces

def trace_columns(m_L):
    return ["t"] + [f"pi_{k + 1}" for k in range(m_L)] + ["JL", "grad_norm", "armijo_l", "step", "nash_iters", "wall_ms"]


def trace_records(trace):
    out = []
    for row in trace.rows:
        rec = {"t": int(row.t)}
        for k, v in enumerate(row.pi):
            rec[f"pi_{k + 1}"] = float(v)
        rec.update(JL=float(row.JL), grad_norm=float(row.grad_norm), armijo_l=int(row.armijo_l),
                   step=float(row.step), nash_iters=int(row.nash_iters), wall_ms=float(row.wall_ms))
        out.append(rec)
    return out


def write_trace(trace, path, fmt="csv", m_L=None):
    """Write a LeaderTrace as CSV (header + one row per iteration) or JSON."""
    if m_L is None:
        m_L = len(trace.rows[0].pi) if trace.rows else 0
    cols = trace_columns(m_L)
    recs = trace_records(trace)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in recs:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    elif fmt == "json":
        payload = {"columns": cols, "rows": recs, "termination": trace.reason}
        Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def read_trace_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return rows
