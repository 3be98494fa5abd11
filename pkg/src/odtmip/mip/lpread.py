"""Parser for the LP text format, written separately from the exporter."""

from __future__ import annotations

import math
import os
import re
from typing import Union

from .model import Model, ObjSense, Sense, VarKind


class LPParseError(ValueError):
    pass


_TOKEN = re.compile(
    r"""\s*(
        <=|>=|=<|=>|[<>=:+\-]
      | (?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?
      | [A-Za-z_!"\#$%&()/,;?@`'{}|~][A-Za-z0-9_!"\#$%&()/,.;?@`'{}|~\[\]]*
    )""",
    re.VERBOSE,
)

_SECTIONS = {
    "maximize": "max", "maximise": "max", "maximum": "max", "max": "max",
    "minimize": "min", "minimise": "min", "minimum": "min", "min": "min",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "generals": "gen", "general": "gen", "gen": "gen",
    "end": "end",
}
_SENSES = {"<=": Sense.LE, "=<": Sense.LE, "<": Sense.LE,
           ">=": Sense.GE, "=>": Sense.GE, ">": Sense.GE, "=": Sense.EQ}


def _tokens(text: str, lineno: int) -> list[str]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise LPParseError(f"line {lineno}: cannot tokenize {text[pos:]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


def _is_number(tok: str) -> bool:
    return bool(re.fullmatch(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?", tok)) or \
        tok.lower() in ("inf", "infinity")


def _to_number(tok: str) -> float:
    return math.inf if tok.lower() in ("inf", "infinity") else float(tok)


def _linear(tokens: list[str], where: str) -> list[tuple[str, float]]:
    """Parse ``[+|-] [coef] name ...`` into (name, coefficient) pairs."""
    terms: list[tuple[str, float]] = []
    i, sign, coef = 0, 1.0, None
    while i < len(tokens):
        tok = tokens[i]
        if tok in "+-":
            sign = sign * (-1.0 if tok == "-" else 1.0)
        elif _is_number(tok):
            coef = (coef or 1.0) * _to_number(tok)
        else:
            terms.append((tok, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
        i += 1
    if coef is not None:
        if coef != 0.0:
            raise LPParseError(f"{where}: dangling constant {coef}")
    return terms


def _split_name(tokens: list[str]) -> tuple[str, list[str]]:
    if len(tokens) >= 2 and tokens[1] == ":":
        return tokens[0], tokens[2:]
    return "", tokens


def read_lp_file(source: Union[str, os.PathLike]) -> Model:
    """Parse an LP file (path) or LP text (a string containing newlines)."""
    if isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()

    section = None
    sense = None
    obj_tokens: list[str] = []
    rows: list[list[str]] = []
    pending: list[str] = []
    bounds: list[tuple[int, list[str]]] = []
    binaries: list[str] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in _SECTIONS:
            if pending:
                raise LPParseError(f"line {lineno}: unterminated constraint")
            section = _SECTIONS[key]
            if section in ("max", "min"):
                sense = ObjSense.MAXIMIZE if section == "max" else ObjSense.MINIMIZE
                section = "obj"
            if section == "gen":
                raise LPParseError(f"line {lineno}: general integer variables are not supported")
            if section == "end":
                break
            continue
        toks = _tokens(line, lineno)
        if section == "obj":
            obj_tokens.extend(toks)
        elif section == "st":
            pending.extend(toks)
            # a row is complete once a sense operator is followed by its rhs
            ops = [k for k, t in enumerate(pending) if t in _SENSES]
            if ops and ops[-1] < len(pending) - 1:
                rest = pending[ops[-1] + 1:]
                if len(rest) == 1 or (len(rest) == 2 and rest[0] in "+-"):
                    rows.append(pending)
                    pending = []
        elif section == "bounds":
            bounds.append((lineno, toks))
        elif section == "bin":
            binaries.extend(toks)
        else:
            raise LPParseError(f"line {lineno}: content outside any section")
    if pending:
        raise LPParseError("unterminated constraint at end of file")
    if sense is None:
        raise LPParseError("missing objective section")

    order: dict[str, int] = {}
    declared: dict[str, tuple[float, float]] = {}

    def note(name: str) -> None:
        order.setdefault(name, len(order))

    for lineno, toks in bounds:
        name, lo, up = _bound(toks, lineno)
        declared[name] = (lo, up)
        note(name)
    _, obj_body = _split_name(obj_tokens)
    obj_terms = _linear(obj_body, "objective")
    parsed_rows = []
    for toks in rows:
        tag, body = _split_name(toks)
        k = next(i for i, t in enumerate(body) if t in _SENSES)
        rhs_toks = body[k + 1:]
        rhs = _to_number(rhs_toks[-1]) * (-1.0 if rhs_toks[0] == "-" else 1.0)
        terms = _linear(body[:k], f"row {tag}")
        parsed_rows.append((tag, terms, _SENSES[body[k]], rhs))
    for name, _ in obj_terms:
        note(name)
    for _, terms, _, _ in parsed_rows:
        for name, _ in terms:
            note(name)
    for name in binaries:
        note(name)

    model = Model(sense)
    bin_set = set(binaries)
    for name in sorted(order, key=order.get):
        if name in declared:
            lo, up = declared[name]
        elif name in bin_set:
            lo, up = 0.0, 1.0
        else:
            lo, up = 0.0, math.inf
        kind = VarKind.BINARY if name in bin_set else VarKind.CONTINUOUS
        model.add_var(lo, up, kind, name)
    ids = {name: i for i, name in enumerate(sorted(order, key=order.get))}
    model.set_objective([(ids[n], c) for n, c in obj_terms])
    for tag, terms, op, rhs in parsed_rows:
        model.add_constraint([(ids[n], c) for n, c in terms], op, rhs, tag)
    return model


def _bound(toks: list[str], lineno: int) -> tuple[str, float, float]:
    def number(i: int) -> tuple[float, int]:
        sign = 1.0
        while toks[i] in "+-":
            sign *= -1.0 if toks[i] == "-" else 1.0
            i += 1
        return sign * _to_number(toks[i]), i + 1

    try:
        if len(toks) == 2 and toks[1].lower() == "free":
            return toks[0], -math.inf, math.inf
        if not (_is_number(toks[0]) or toks[0] in "+-"):
            name = toks[0]
            op = toks[1]
            val, _ = number(2)
            if _SENSES[op] is Sense.EQ:
                return name, val, val
            if _SENSES[op] is Sense.LE:
                return name, 0.0, val
            return name, val, math.inf
        lo, i = number(0)
        name = toks[i + 1]
        if len(toks) > i + 2:
            up, _ = number(i + 3)
        else:
            up = math.inf
        return name, lo, up
    except (IndexError, KeyError, ValueError) as exc:
        raise LPParseError(f"line {lineno}: malformed bound {' '.join(toks)!r}") from exc
