"""Plain-text formats for tensors, Kruskal models and l1 regression problems.

Tensor::

    shape I_1 I_2 ... I_N
    <one value per line, first index varying fastest>

Kruskal model (factor numbers are 1-based)::

    rank R order N
    factor 1 I_1 R
    <I_1 lines of R values>
    ...

l1 problem::

    matrix I J
    <I lines of J values>
    vector I
    <I values, one per line>

Blank lines and lines starting with ``#`` are ignored. Numbers are written
with ``repr`` so they round-trip exactly.
"""

import numpy as np

from .tensor import KruskalModel, as_tensor


class ParseError(ValueError):
    def __init__(self, message, line=None, source=None):
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line


class _Lines:
    """Iterator over meaningful lines that remembers line numbers."""

    def __init__(self, text, source=None):
        self.items = [
            (i, line.split())
            for i, line in enumerate(text.splitlines(), start=1)
            if line.strip() and not line.lstrip().startswith("#")
        ]
        self.pos = 0
        self.source = source

    def error(self, message, line=None):
        if line is None:
            line = self.items[self.pos - 1][0] if self.pos else None
        return ParseError(message, line, self.source)

    def next(self, what):
        if self.pos >= len(self.items):
            last = self.items[-1][0] if self.items else 0
            raise ParseError(f"unexpected end of file, expected {what}", last + 1, self.source)
        item = self.items[self.pos]
        self.pos += 1
        return item

    def header(self, keyword, count):
        lineno, tokens = self.next(f"'{keyword}' header")
        if tokens[0] != keyword or (count is not None and len(tokens) != count + 1):
            raise ParseError(f"expected '{keyword}' header, got {' '.join(tokens)!r}",
                             lineno, self.source)
        return [self.int(t, lineno) for t in tokens[1:]]

    def int(self, token, lineno):
        try:
            value = int(token)
        except ValueError:
            raise ParseError(f"expected an integer, got {token!r}", lineno, self.source) from None
        if value < 1:
            raise ParseError(f"expected a positive integer, got {value}", lineno, self.source)
        return value

    def floats(self, n, what):
        """Read ``n`` numbers spread over one or more lines."""
        out = []
        while len(out) < n:
            lineno, tokens = self.next(what)
            for t in tokens:
                try:
                    value = float(t)
                except ValueError:
                    raise ParseError(f"not a number: {t!r}", lineno, self.source) from None
                if not np.isfinite(value):
                    raise ParseError(f"non-finite value {t!r}", lineno, self.source)
                out.append(value)
            if len(out) > n:
                raise ParseError(f"too many values for {what}", lineno, self.source)
        return np.array(out)

    def finish(self):
        if self.pos < len(self.items):
            lineno, _ = self.items[self.pos]
            raise ParseError("unexpected trailing content", lineno, self.source)


def _fmt(x):
    return repr(float(x))


def format_tensor(tensor) -> str:
    tensor = as_tensor(tensor)
    lines = ["shape " + " ".join(str(s) for s in tensor.shape)]
    lines.extend(_fmt(v) for v in tensor.ravel(order="F"))
    return "\n".join(lines) + "\n"


def parse_tensor(text, source=None):
    lines = _Lines(text, source)
    lineno = lines.items[0][0] if lines.items else 1
    shape = lines.header("shape", None)
    if len(shape) < 2:
        raise ParseError("a tensor needs at least two dimensions", lineno, source)
    values = lines.floats(int(np.prod(shape)), "tensor values")
    lines.finish()
    return as_tensor(values, shape)


def format_kruskal(model: KruskalModel) -> str:
    lines = [f"rank {model.rank} order {model.order}"]
    for n, f in enumerate(model.factors, start=1):
        lines.append(f"factor {n} {f.shape[0]} {f.shape[1]}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in f)
    return "\n".join(lines) + "\n"


def parse_kruskal(text, source=None) -> KruskalModel:
    lines = _Lines(text, source)
    lineno, tokens = lines.next("'rank R order N' header")
    if len(tokens) != 4 or tokens[0] != "rank" or tokens[2] != "order":
        raise ParseError(f"expected 'rank R order N', got {' '.join(tokens)!r}", lineno, source)
    rank, order = lines.int(tokens[1], lineno), lines.int(tokens[3], lineno)
    if order < 2:
        raise ParseError("a model needs at least two factors", lineno, source)
    factors = []
    for n in range(1, order + 1):
        idx, rows, cols = lines.header("factor", 3)
        lineno = lines.items[lines.pos - 1][0]
        if idx != n:
            raise ParseError(f"expected factor {n}, got factor {idx}", lineno, source)
        if cols != rank:
            raise ParseError(f"factor {n} has {cols} columns but rank is {rank}", lineno, source)
        factors.append(lines.floats(rows * cols, f"factor {n} values").reshape(rows, cols))
    lines.finish()
    return KruskalModel(factors)


def format_l1_problem(m, y) -> str:
    m = np.asarray(m, dtype=np.float64)
    lines = [f"matrix {m.shape[0]} {m.shape[1]}"]
    lines.extend(" ".join(_fmt(v) for v in row) for row in m)
    lines.append(f"vector {len(y)}")
    lines.extend(_fmt(v) for v in y)
    return "\n".join(lines) + "\n"


def parse_l1_problem(text, source=None):
    """Return ``(M, y)``."""
    lines = _Lines(text, source)
    rows, cols = lines.header("matrix", 2)
    m = lines.floats(rows * cols, "matrix values").reshape(rows, cols)
    (length,) = lines.header("vector", 1)
    if length != rows:
        raise lines.error(f"vector length {length} does not match {rows} matrix rows")
    y = lines.floats(length, "vector values")
    lines.finish()
    return m, y


def _read(path):
    with open(path) as fh:
        return fh.read()


def read_tensor(path):
    return parse_tensor(_read(path), str(path))


def write_tensor(tensor, path):
    with open(path, "w") as fh:
        fh.write(format_tensor(tensor))


def read_kruskal(path) -> KruskalModel:
    return parse_kruskal(_read(path), str(path))


def write_kruskal(model, path):
    with open(path, "w") as fh:
        fh.write(format_kruskal(model))


def read_l1_problem(path):
    return parse_l1_problem(_read(path), str(path))
