"""Export a :class:`Model` in CPLEX-style LP text format."""

from __future__ import annotations

import io
import math
import os
import re
from typing import IO, Union

from .model import Model, ObjSense, Sense, VarKind

_BAD_CHARS = re.compile(r"[^A-Za-z0-9!\"#$%&()/,.;?@_`'{}|~]")
_BAD_START = re.compile(r"^([0-9.]|[eE]([0-9eE]|$))")
MAX_LINE = 200


def _num(x: float) -> str:
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _legal(name: str, fallback: str) -> str:
    name = _BAD_CHARS.sub("_", name) if name else fallback
    if not name or _BAD_START.match(name):
        name = "_" + name
    return name


def _unique_names(raw: list[str], fallback: str) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for i, name in enumerate(raw):
        legal = _legal(name, f"{fallback}{i}")
        if legal in seen:
            seen[legal] += 1
            legal = f"{legal}#{seen[legal]}"
        seen.setdefault(legal, 0)
        out.append(legal)
    return out


def _expr(terms, names) -> str:
    parts = []
    for vid, coef in terms:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = names[vid] if mag == 1.0 else f"{_num(mag)} {names[vid]}"
        parts.append(f"{sign} {body}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _wrap(line: str) -> list[str]:
    if len(line) <= MAX_LINE:
        return [line]
    out, cur = [], ""
    for tok in line.split(" "):
        if cur and len(cur) + 1 + len(tok) > MAX_LINE and tok in "+-":
            out.append(cur)
            cur = "   " + tok
        else:
            cur = f"{cur} {tok}" if cur else tok
    out.append(cur)
    return out


def lp_text(model: Model) -> str:
    names = _unique_names([v.name for v in model.variables], "x")
    rows = _unique_names([c.tag for c in model.constraints], "r")
    lines = [f"\\ model {model.name}"]
    lines.append("Maximize" if model.sense is ObjSense.MAXIMIZE else "Minimize")
    lines.extend(_wrap(" obj: " + _expr(model.objective, names)))
    lines.append("Subject To")
    for row_name, con in zip(rows, model.constraints):
        op = {Sense.LE: "<=", Sense.GE: ">=", Sense.EQ: "="}[con.sense]
        lines.extend(_wrap(f" {row_name}: {_expr(con.terms, names)} {op} {_num(con.rhs)}"))
    lines.append("Bounds")
    for var, name in zip(model.variables, names):
        if math.isinf(var.lower) and math.isinf(var.upper):
            lines.append(f" {name} free")
        elif var.lower == var.upper:
            lines.append(f" {name} = {_num(var.lower)}")
        else:
            lines.append(f" {_num(var.lower)} <= {name} <= {_num(var.upper)}")
    binaries = [names[v.id] for v in model.variables if v.kind is VarKind.BINARY]
    if binaries:
        lines.append("Binaries")
        for i in range(0, len(binaries), 10):
            lines.append(" " + " ".join(binaries[i:i + 10]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp_file(model: Model, destination: Union[str, os.PathLike, IO[str]]) -> str:
    """Write ``model`` to a path or text stream and return the text written."""
    text = lp_text(model)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)
    elif isinstance(destination, io.TextIOBase) or hasattr(destination, "write"):
        destination.write(text)
    else:
        raise TypeError(f"cannot write LP text to {type(destination).__name__}")
    return text
