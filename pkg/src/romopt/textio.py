"""Plain-text formats: coordinate matrices and affine system definitions.

Coordinate (COO) files hold one ``row col value`` triple per line (vectors:
``row value``), zero-based, values written with 17 significant digits so a
write/read cycle is exact. Lines starting with ``#`` are comments; an
optional ``% rows cols`` header records the shape.

A system definition file is a sequence of sections::

    [dimensions]
    n_w = 3
    n_mu = 2
    lower = 0.5 0.5
    upper = 2 2

    [base_matrix]
    format = coo
    0 0 2.0
    ...

    [matrix_term 0]
    monomial = 1.0 1 0      # coefficient, then one exponent per parameter
    format = dense
    1 0 0
    0 1 0
    0 0 1

    [rhs_term 0]
    monomial = 1.0 0 0
    format = coo
    0 1.0

``base_matrix`` / ``base_rhs`` are optional (zero when absent).
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ConfigurationError
from .parametric import AffineParametricSystem, ParamBox, Polynomial

_FMT = "%.17g"


def write_coo(path, a, comment=None):
    a = np.asarray(a, dtype=float)
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("".join(_coo_lines(a)))


def _coo_lines(a):
    lines = [f"% {' '.join(str(s) for s in a.shape)}\n"]
    if a.ndim == 1:
        for i in np.flatnonzero(a):
            lines.append(f"{i} {_FMT % a[i]}\n")
    else:
        rows, cols = np.nonzero(a)
        for i, j in zip(rows, cols):
            lines.append(f"{i} {j} {_FMT % a[i, j]}\n")
    return lines


def read_coo(path, shape=None):
    with open(path) as fh:
        return _parse_coo(fh.read().splitlines(), shape)


def _parse_coo(lines, shape=None):
    entries = []
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("%"):
            declared = tuple(int(t) for t in line[1:].split())
            if shape is not None and tuple(shape) != declared:
                raise ConfigurationError(f"declared shape {declared} != expected {shape}")
            shape = declared
            continue
        entries.append(line.split())
    if shape is None:
        raise ConfigurationError("coordinate payload without shape")
    a = np.zeros(shape)
    for tok in entries:
        if len(tok) != len(shape) + 1:
            raise ConfigurationError(f"malformed coordinate line {' '.join(tok)!r}")
        idx = tuple(int(t) for t in tok[:-1])
        a[idx] += float(tok[-1])
    return a


def _parse_dense(lines, shape):
    rows = [[float(t) for t in ln.split("#", 1)[0].split()] for ln in lines]
    rows = [r for r in rows if r]
    a = np.array(rows, dtype=float)
    if len(shape) == 1:
        a = a.reshape(-1)
    if a.shape != tuple(shape):
        raise ConfigurationError(f"dense payload shape {a.shape} != {tuple(shape)}")
    return a


_SECTION = re.compile(r"^\[\s*([a-z_]+)(?:\s+(\d+))?\s*\]$")


def _split_sections(text):
    sections = []
    current = None
    for raw in text.splitlines():
        stripped = raw.split("#", 1)[0].strip()
        m = _SECTION.match(stripped)
        if m:
            current = (m.group(1), m.group(2), [])
            sections.append(current)
        elif stripped:
            if current is None:
                raise ConfigurationError(f"content before first section: {stripped!r}")
            current[2].append(stripped)
    return sections


def _payload(name, lines, shape, n_mu, needs_coefficient):
    monomials = []
    fmt = None
    body = []
    for ln in lines:
        key, sep, val = ln.partition("=")
        key = key.strip()
        if sep and fmt is None and key in ("monomial", "format"):
            if key == "monomial":
                tok = val.split()
                monomials.append((float(tok[0]), tuple(int(t) for t in tok[1:])))
            else:
                fmt = val.strip()
        else:
            body.append(ln)
    if fmt not in ("coo", "dense"):
        raise ConfigurationError(f"section {name}: format must be 'coo' or 'dense'")
    if needs_coefficient and not monomials:
        raise ConfigurationError(f"section {name}: missing monomial lines")
    data = _parse_coo(body, shape) if fmt == "coo" else _parse_dense(body, shape)
    poly = None
    if monomials:
        if any(len(e) != n_mu for _, e in monomials):
            raise ConfigurationError(f"section {name}: exponent tuple length != n_mu")
        poly = Polynomial(tuple(c for c, _ in monomials), tuple(e for _, e in monomials))
    return poly, data


def loads_system(text):
    sections = _split_sections(text)
    dims = [s for s in sections if s[0] == "dimensions"]
    if len(dims) != 1:
        raise ConfigurationError("exactly one [dimensions] section required")
    kv = {}
    for ln in dims[0][2]:
        k, _, v = ln.partition("=")
        kv[k.strip()] = v.strip()
    try:
        n_w = int(kv["n_w"])
        n_mu = int(kv["n_mu"])
        lower = np.array([float(t) for t in kv["lower"].split()])
        upper = np.array([float(t) for t in kv["upper"].split()])
    except KeyError as exc:
        raise ConfigurationError(f"[dimensions] missing key {exc}") from None
    if lower.size != n_mu or upper.size != n_mu:
        raise ConfigurationError("bounds length differs from n_mu")
    base_a = np.zeros((n_w, n_w))
    base_b = np.zeros(n_w)
    mterms, rterms = [], []
    for name, idx, lines in sections:
        label = name if idx is None else f"{name} {idx}"
        if name == "dimensions":
            continue
        if name == "base_matrix":
            _, base_a = _payload(label, lines, (n_w, n_w), n_mu, False)
        elif name == "base_rhs":
            _, base_b = _payload(label, lines, (n_w,), n_mu, False)
        elif name == "matrix_term":
            mterms.append(_payload(label, lines, (n_w, n_w), n_mu, True))
        elif name == "rhs_term":
            rterms.append(_payload(label, lines, (n_w,), n_mu, True))
        else:
            raise ConfigurationError(f"unknown section [{label}]")
    return AffineParametricSystem(base_a, tuple(mterms), base_b, tuple(rterms),
                                  ParamBox(lower, upper))


def load_system(path):
    with open(path) as fh:
        return loads_system(fh.read())


def dumps_system(sys):
    out = ["[dimensions]\n", f"n_w = {sys.n_w}\n", f"n_mu = {sys.n_mu}\n",
           "lower = " + " ".join(_FMT % v for v in sys.box.lower) + "\n",
           "upper = " + " ".join(_FMT % v for v in sys.box.upper) + "\n"]

    def block(header, poly, data):
        out.append(f"\n[{header}]\n")
        if poly is not None:
            for c, e in zip(poly.coefficients, poly.exponents):
                out.append(f"monomial = {_FMT % c} {' '.join(str(x) for x in e)}\n")
        out.append("format = coo\n")
        out.extend(_coo_lines(data))

    if np.any(sys.base_matrix):
        block("base_matrix", None, sys.base_matrix)
    if np.any(sys.base_rhs):
        block("base_rhs", None, sys.base_rhs)
    for i, (p, m) in enumerate(sys.matrix_terms):
        block(f"matrix_term {i}", p, m)
    for i, (p, v) in enumerate(sys.rhs_terms):
        block(f"rhs_term {i}", p, v)
    return "".join(out)


def save_system(sys, path):
    with open(path, "w") as fh:
        fh.write(dumps_system(sys))
