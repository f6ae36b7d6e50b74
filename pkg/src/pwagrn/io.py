"""JSON file formats and deterministic serialisation.

Network file::

    {
      "variables":  [{"name": "x1", "thresholds": [0, 0.5, 0.75, 1.0]}, ...],
      "production": [{"target": "x1", "coefficient": 0.9,
                      "factors": [{"var": "x2", "threshold_index": 1, "sign": "-"}]}, ...],
      "decay0":     [{"target": "x1", "coefficient": 1.0, "factors": []}, ...],
      "decay1":     [...],
      "input_bound": 1.0,
      "description": "optional free text"
    }

``target`` and ``var`` are variable names (integer indices are accepted too).
``threshold_index`` counts from 1 (the first interior threshold) and
``sign`` is ``"+"`` or ``"-"``.  Unknown keys are rejected.

Law file: ``{"default": 0.0, "boxes": [{"box": [1, 0], "u": 0.5}, ...]}``.

Target graph file: ``{"edges": [{"source": [0, 0], "target": [1, 0]}, ...]}``
(the JSON export of a transition graph is accepted as well).
"""
from __future__ import annotations

import json
import math
import numbers
import re
from importlib import resources
from pathlib import Path
from typing import Any

from .model import Factor, Network, StepPolynomial, StructureError, Term

_NETWORK_KEYS = {"variables", "production", "decay0", "decay1", "input_bound", "description"}
_VARIABLE_KEYS = {"name", "thresholds"}
_TERM_KEYS = {"target", "coefficient", "factors"}
_FACTOR_KEYS = {"var", "threshold_index", "sign"}


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise StructureError(f"{where} must be an object")
    extra = set(obj) - allowed
    if extra:
        raise StructureError(f"unknown keys in {where}: {sorted(extra)}")


def _index(ref, names: list[str]) -> int:
    if isinstance(ref, bool):
        raise StructureError(f"bad variable reference {ref!r}")
    if isinstance(ref, int):
        if not 0 <= ref < len(names):
            raise StructureError(f"variable index {ref} out of range")
        return ref
    try:
        return names.index(ref)
    except ValueError:
        raise StructureError(f"unknown variable {ref!r}") from None


def _sign(s) -> int:
    if s in ("+", 1, "+1"):
        return 1
    if s in ("-", -1, "-1"):
        return -1
    raise StructureError(f"bad factor sign {s!r}")


def _polys(entries, names: list[str], where: str) -> tuple[StepPolynomial, ...]:
    per_var: list[list[Term]] = [[] for _ in names]
    for k, e in enumerate(entries or []):
        _reject_unknown(e, _TERM_KEYS, f"{where}[{k}]")
        factors = []
        for f in e.get("factors", []):
            _reject_unknown(f, _FACTOR_KEYS, f"{where}[{k}].factors")
            try:
                factors.append(Factor(_index(f["var"], names), int(f["threshold_index"]), _sign(f["sign"])))
            except KeyError as err:
                raise StructureError(f"factor in {where}[{k}] misses {err}") from None
        try:
            per_var[_index(e["target"], names)].append(Term(float(e["coefficient"]), tuple(factors)))
        except KeyError as err:
            raise StructureError(f"{where}[{k}] misses {err}") from None
    return tuple(StepPolynomial(tuple(ts)) for ts in per_var)


def network_from_dict(doc: dict) -> Network:
    _reject_unknown(doc, _NETWORK_KEYS, "network")
    if "variables" not in doc:
        raise StructureError("network needs 'variables'")
    names, thresholds = [], []
    for k, v in enumerate(doc["variables"]):
        _reject_unknown(v, _VARIABLE_KEYS, f"variables[{k}]")
        names.append(str(v["name"]))
        thresholds.append(tuple(float(t) for t in v["thresholds"]))
    if len(set(names)) != len(names):
        raise StructureError("duplicate variable names")
    return Network(
        tuple(names),
        tuple(thresholds),
        _polys(doc.get("production"), names, "production"),
        _polys(doc.get("decay0"), names, "decay0"),
        _polys(doc.get("decay1"), names, "decay1"),
        float(doc.get("input_bound", 0.0)),
    )


def _poly_entries(net: Network, polys) -> list[dict]:
    out = []
    for i, p in enumerate(polys):
        for t in p.terms:
            out.append({
                "target": net.names[i],
                "coefficient": t.coefficient,
                "factors": [{"var": net.names[f.var], "threshold_index": f.threshold,
                             "sign": "+" if f.sign > 0 else "-"} for f in t.factors],
            })
    return out


def network_to_dict(net: Network) -> dict:
    return {
        "variables": [{"name": nm, "thresholds": list(th)} for nm, th in zip(net.names, net.thresholds)],
        "production": _poly_entries(net, net.production),
        "decay0": _poly_entries(net, net.decay0),
        "decay1": _poly_entries(net, net.decay1),
        "input_bound": net.input_bound,
    }


def load_network(path) -> Network:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise StructureError(f"{path}: invalid JSON ({err})") from None
    return network_from_dict(doc)


def example_path(name: str) -> Path:
    """Path of a bundled fixture, e.g. ``example_path("example1.json")``."""
    return Path(str(resources.files("pwagrn") / "data" / name))


def load_example(name: str) -> Network:
    """Bundled networks: ``"toy"``, ``"example1"``, ``"example2"``."""
    return load_network(example_path(f"{name}.json"))


def read_json(path) -> Any:
    return json.loads(Path(path).read_text())


# Floats are written with 17 significant digits so reruns are byte-identical
# across platforms; non-finite values become null.
_FLOAT_MARK = re.compile(r'"@@f:([^"@]*)@@"')


def _prep(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, numbers.Integral):
        return int(obj)
    if isinstance(obj, numbers.Real):
        x = float(obj)
        if not math.isfinite(x):
            return None
        text = f"{x:.17g}"
        # "-0" would read back as the integer 0
        return f"@@f:{'-0.0' if text == '-0' else text}@@"
    if isinstance(obj, dict):
        return {str(k): _prep(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_prep(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _prep(obj.tolist())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int | None = 2) -> str:
    text = json.dumps(_prep(obj), indent=indent)
    return _FLOAT_MARK.sub(lambda m: m.group(1), text)
