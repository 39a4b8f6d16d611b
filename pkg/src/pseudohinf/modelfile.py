"""JSON model and controller files.

A model document looks like::

    {
      "dims": {"n": 2, "m": 1},                       # optional cross-check
      "matrices": {"A": [[0, 1], [0, "-1/10"]], "B1": [[0], [-1]], "C1": [[1, 0]], ...},
      "nonlinearities": [{"kind": "scaled_sine", "amplitude": 1, "period": 6.283185307179586, "mu": 1}],
      "synthesis": {"theorem": 6, "lambda": 0.5, "tau": [0.4, 0.6, 0.5], "tau0": 6.283185307179586},
      "simulation": {"x0": [...], "t_final": 200, "dt": 0.001}
    }

Numbers may be JSON numbers or strings holding exact rationals (``"p/q"``)
or decimals; both are read without binary rounding so the exact-rational
Kalman path sees the intended values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import numpy as np

from .pendulum import NonlinearityBank
from .synthesis import Controller
from .systems import PLANT_FIELDS, Plant

__all__ = ["ModelError", "Model", "parse_model", "load_model", "load_controller", "dump_json"]

_REQUIRED = ("A", "B1", "C1")


class ModelError(ValueError):
    """Invalid model or controller document; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Model:
    plant: Plant
    bank: NonlinearityBank | None
    synthesis: dict
    simulation: dict


def _number(v, path: str) -> Fraction:
    if isinstance(v, bool) or v is None:
        raise ModelError(path, f"expected a number, got {v!r}")
    try:
        if isinstance(v, (int, Decimal)):
            return Fraction(v)
        if isinstance(v, float):
            return Fraction(Decimal(repr(v)))
        if isinstance(v, str):
            return Fraction(v.strip())
    except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
        raise ModelError(path, f"cannot parse {v!r} as a rational ({exc})") from None
    raise ModelError(path, f"expected a number or 'p/q' string, got {type(v).__name__}")


def _float(v, path: str) -> float:
    f = float(_number(v, path))
    if not np.isfinite(f):
        raise ModelError(path, "value is not finite")
    return f


def _matrix(rows, path: str) -> list[list[Fraction]]:
    if not isinstance(rows, list):
        raise ModelError(path, "expected a list of rows")
    if rows and not all(isinstance(r, list) for r in rows):
        raise ModelError(path, "every row must be a list")
    width = len(rows[0]) if rows else 0
    out = []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ModelError(f"{path}[{i}]", f"row has {len(row)} entries, expected {width}")
        out.append([_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    return out


def _shape(M) -> tuple[int, int]:
    return len(M), (len(M[0]) if M else 0)


def _check_shapes(mats: dict, dims: dict) -> dict:
    n = _shape(mats["A"])[0]
    if _shape(mats["A"]) != (n, n) or n == 0:
        raise ModelError("matrices.A", f"must be square and non-empty, got {_shape(mats['A'])}")
    m = _shape(mats["B1"])[1]
    zeros = lambda r, c: [[Fraction(0)] * c for _ in range(r)]
    mats.setdefault("B2", zeros(n, 0))
    q = _shape(mats["B2"])[1] if mats["B2"] else 0
    mats.setdefault("C2", [])
    p = len(mats["C2"])
    mats.setdefault("D12", zeros(m, q))
    mats.setdefault("D21", zeros(p, m))
    expect = {"B1": (n, m), "B2": (n, q), "C1": (m, n), "C2": (p, n), "D12": (m, q), "D21": (p, m)}
    for k, shp in expect.items():
        got = _shape(mats[k])
        empty = shp[0] * shp[1] == 0
        if (empty and got[0] * got[1] != 0) or (not empty and got != shp):
            raise ModelError(f"matrices.{k}", f"shape {got} does not match expected {shp} (n={n}, m={m}, q={q}, p={p})")
    for key, val in (("n", n), ("m", m), ("q", q), ("p", p)):
        if key in dims and int(dims[key]) != val:
            raise ModelError(f"dims.{key}", f"declared {dims[key]} but matrices imply {val}")
    return mats


def _bank(specs, m: int) -> NonlinearityBank | None:
    if specs is None:
        return None
    if not isinstance(specs, list):
        raise ModelError("nonlinearities", "expected a list")
    if len(specs) != m:
        raise ModelError("nonlinearities", f"{len(specs)} entries for m={m} nonlinearity channels")
    clean = []
    for i, spec in enumerate(specs):
        if not isinstance(spec, dict):
            raise ModelError(f"nonlinearities[{i}]", "expected an object")
        item = {"kind": spec.get("kind", "scaled_sine")}
        for k in ("amplitude", "period", "mu"):
            if k in spec:
                item[k] = _float(spec[k], f"nonlinearities[{i}].{k}")
        clean.append(item)
    try:
        return NonlinearityBank.from_dicts(clean)
    except ValueError as exc:
        raise ModelError("nonlinearities", str(exc)) from None


def _block(doc: dict, name: str, floats: tuple[str, ...], vectors: tuple[str, ...]) -> dict:
    raw = doc.get(name) or {}
    if not isinstance(raw, dict):
        raise ModelError(name, "expected an object")
    out = dict(raw)
    for k in floats:
        if k in raw:
            out[k] = _float(raw[k], f"{name}.{k}")
    for k in vectors:
        if k in raw:
            if not isinstance(raw[k], list):
                raise ModelError(f"{name}.{k}", "expected a list")
            out[k] = [_float(v, f"{name}.{k}[{i}]") for i, v in enumerate(raw[k])]
    return out


def parse_model(doc: dict) -> Model:
    if not isinstance(doc, dict):
        raise ModelError("$", "model must be a JSON object")
    raw = doc.get("matrices")
    if not isinstance(raw, dict):
        raise ModelError("matrices", "missing or not an object")
    unknown = set(raw) - set(PLANT_FIELDS)
    if unknown:
        raise ModelError(f"matrices.{sorted(unknown)[0]}", f"unknown matrix; expected one of {', '.join(PLANT_FIELDS)}")
    for k in _REQUIRED:
        if k not in raw:
            raise ModelError(f"matrices.{k}", "required matrix is missing")
    mats = {k: _matrix(v, f"matrices.{k}") for k, v in raw.items()}
    dims = doc.get("dims") or {}
    mats = _check_shapes(mats, dims)
    n, m = len(mats["A"]), _shape(mats["B1"])[1]
    plant = Plant.from_rational(**{k: v for k, v in mats.items() if _shape(v)[0] * _shape(v)[1]})
    bank = _bank(doc.get("nonlinearities"), m)
    syn = _block(doc, "synthesis", ("lambda", "tau0", "theorem"), ("tau", "mu"))
    sim = _block(doc, "simulation", ("t_final", "dt"), ("x0",))
    if "x0" in sim and len(sim["x0"]) not in (n, 2 * n):
        raise ModelError("simulation.x0", f"length {len(sim['x0'])} matches neither n={n} nor 2n")
    return Model(plant, bank, syn, sim)


def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelError(str(path), f"cannot read file ({exc.strerror})") from None
    try:
        return json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None


def load_model(path) -> Model:
    return parse_model(_read_json(path))


def load_controller(path) -> tuple[Controller, dict]:
    """Controller plus the remaining document (certificate, parameters, ...)."""
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ModelError("$", "controller must be a JSON object")
    kind = doc.get("kind")
    keys = ("K",) if kind == "static" else ("Ac", "Bc", "Cc") if kind == "dynamic" else None
    if keys is None:
        raise ModelError("kind", f"expected 'static' or 'dynamic', got {kind!r}")
    mats = {}
    for k in keys:
        if k not in doc:
            raise ModelError(k, "missing")
        mats[k] = np.array([[float(v) for v in row] for row in _matrix(doc[k], k)])
    ctrl = Controller.static(mats["K"]) if kind == "static" else Controller.dynamic(mats["Ac"], mats["Bc"], mats["Cc"])
    return ctrl, {k: v for k, v in doc.items() if k not in keys and k != "kind"}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, Decimal):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def dump_json(obj) -> str:
    """Deterministic JSON text; floats keep their shortest round-trip repr."""
    return json.dumps(_plain(obj), indent=2) + "\n"
