"""Graph loading, synthetic masks, and TCB sparsity statistics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np

from .bsb import CooMatrix, build_bsb

__all__ = [
    "ParseError",
    "SparsityStats",
    "load_matrix_market",
    "load_edge_list",
    "load_graph",
    "generate_synthetic",
    "parse_synthetic_spec",
    "compute_stats",
    "format_stats_table",
]


class ParseError(ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


def _finish(n_rows, n_cols, rows, cols, symmetrize=False, add_self_loops=False):
    rows = np.asarray(rows, np.int64)
    cols = np.asarray(cols, np.int64)
    if symmetrize:
        rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
    if add_self_loops:
        n = min(n_rows, n_cols)
        rows = np.concatenate([rows, np.arange(n)])
        cols = np.concatenate([cols, np.arange(n)])
    return CooMatrix(n_rows, n_cols, rows, cols)


def load_matrix_market(path, symmetrize=False, add_self_loops=False) -> CooMatrix:
    """Read a coordinate Matrix Market file as a binary support pattern.

    Values are discarded. ``symmetric``/``skew-symmetric``/``hermitian``
    headers are expanded to both triangles.
    """
    with open(path, "r") as fh:
        lines = fh.readlines()
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise ParseError("missing %%MatrixMarket header", path, 1)
    head = lines[0].split()
    if len(head) < 5 or head[1].lower() != "matrix" or head[2].lower() != "coordinate":
        raise ParseError("only 'matrix coordinate' files are supported", path, 1)
    field_kind = head[3].lower()
    symmetry = head[4].lower()
    if field_kind not in ("pattern", "real", "integer", "complex", "double"):
        raise ParseError(f"unknown field type {head[3]!r}", path, 1)
    if symmetry not in ("general", "symmetric", "skew-symmetric", "hermitian"):
        raise ParseError(f"unknown symmetry {head[4]!r}", path, 1)

    lineno = 1
    size = None
    rows, cols = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if size is None:
            try:
                n_rows, n_cols, nnz = (int(x) for x in parts[:3])
            except ValueError:
                raise ParseError(f"bad size line {s!r}", path, lineno) from None
            if len(parts) != 3 or min(n_rows, n_cols, nnz) < 0:
                raise ParseError(f"bad size line {s!r}", path, lineno)
            size = (n_rows, n_cols, nnz)
            continue
        if len(parts) < 2:
            raise ParseError(f"bad entry {s!r}", path, lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer index in {s!r}", path, lineno) from None
        if not (1 <= i <= size[0] and 1 <= j <= size[1]):
            raise ParseError(f"entry ({i}, {j}) outside {size[0]}x{size[1]} matrix", path, lineno)
        rows.append(i - 1)
        cols.append(j - 1)
    if size is None:
        raise ParseError("missing size line", path, lineno)
    if len(rows) != size[2]:
        raise ParseError(f"expected {size[2]} entries, found {len(rows)}", path, lineno)
    if symmetry != "general":
        symmetrize = True
    return _finish(size[0], size[1], rows, cols, symmetrize, add_self_loops)


def load_edge_list(path, symmetrize=False, add_self_loops=False, num_nodes=None) -> CooMatrix:
    """Read whitespace-separated ``src dst`` pairs (``#``/``%`` lines are comments)."""
    rows, cols = [], []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if not s or s.startswith("%"):
                continue
            parts = s.replace(",", " ").split()
            if len(parts) < 2:
                raise ParseError(f"expected two node ids, got {s!r}", path, lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"non-integer token in {s!r}", path, lineno) from None
            if u < 0 or v < 0:
                raise ParseError(f"negative node id in {s!r}", path, lineno)
            rows.append(u)
            cols.append(v)
    n = max(max(rows, default=-1), max(cols, default=-1)) + 1
    if num_nodes is not None:
        if num_nodes < n:
            raise ParseError(f"node id {n - 1} exceeds num_nodes={num_nodes}", path)
        n = num_nodes
    return _finish(n, n, rows, cols, symmetrize, add_self_loops)


def load_graph(path, symmetrize=False, add_self_loops=False) -> CooMatrix:
    """Dispatch on content: Matrix Market if the header is present, else edge list."""
    with open(path, "r") as fh:
        first = fh.readline()
    if first.lower().startswith("%%matrixmarket"):
        return load_matrix_market(path, symmetrize, add_self_loops)
    return load_edge_list(path, symmetrize, add_self_loops)


# ---------------------------------------------------------------------------
# synthetic
# ---------------------------------------------------------------------------

def generate_synthetic(kind: str, seed: int = 0, **params) -> CooMatrix:
    """Deterministic synthetic masks.

    uniform
        ``n``, ``density``: independent Bernoulli entries.
    power_law
        ``n``, ``m``: Barabasi-Albert graph (symmetric); low ids are hubs.
        ``self_loops`` (default True) adds the diagonal.
    batched_blocks
        ``sizes`` (list of component sizes) or ``components`` + ``size``;
        ``density`` (default 1.0) inside each diagonal block.
    """
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        n, density = int(params["n"]), float(params.get("density", 0.05))
        if n < 0 or not 0.0 <= density <= 1.0:
            raise ValueError(f"uniform needs n >= 0 and density in [0, 1], got {n}, {density}")
        mask = rng.random((n, n)) < density
        return CooMatrix.from_dense(mask)
    if kind == "power_law":
        n, m = int(params["n"]), int(params.get("m", 4))
        if m < 1 or n <= m:
            raise ValueError(f"power_law needs 1 <= m < n, got n={n}, m={m}")
        g = nx.barabasi_albert_graph(n, m, seed=int(rng.integers(2**31)))
        edges = np.array(g.edges(), dtype=np.int64).reshape(-1, 2)
        return _finish(n, n, edges[:, 0], edges[:, 1], symmetrize=True,
                       add_self_loops=bool(params.get("self_loops", True)))
    if kind == "batched_blocks":
        if "sizes" in params:
            sizes = [int(s) for s in params["sizes"]]
        else:
            sizes = [int(params["size"])] * int(params["components"])
        density = float(params.get("density", 1.0))
        if any(s < 1 for s in sizes) or not 0.0 <= density <= 1.0:
            raise ValueError("batched_blocks needs positive sizes and density in [0, 1]")
        rows, cols = [], []
        off = 0
        for s in sizes:
            block = rng.random((s, s)) < density if density < 1.0 else np.ones((s, s), bool)
            r, c = np.nonzero(block)
            rows.append(r + off)
            cols.append(c + off)
            off += s
        return CooMatrix(off, off, np.concatenate(rows), np.concatenate(cols))
    raise ValueError(f"unknown synthetic kind {kind!r}")


def parse_synthetic_spec(spec: str):
    """``'kind:key=val,key=val'`` -> ``(kind, params)``; ``sizes`` takes ``a/b/c``."""
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"bad synthetic parameter {item!r}")
        key = key.strip().lower()
        if key == "n":
            params["n"] = int(val)
        elif key == "sizes":
            params["sizes"] = [int(x) for x in val.split("/")]
        elif key in ("m", "components", "size"):
            params[key] = int(val)
        elif key == "self_loops":
            params[key] = val.lower() in ("1", "true", "yes")
        else:
            params[key] = float(val)
    return kind.strip(), params


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def _cv(x):
    x = np.asarray(x, np.float64)
    if not x.size:
        return 0.0
    mu = x.mean()
    return float(x.std() / mu) if mu > 0 else 0.0


@dataclass
class SparsityStats:
    num_rw: int
    total_tcbs: int
    nnz: int
    tcb_per_rw_avg: float
    tcb_per_rw_cv: float
    nnz_per_tcb_avg: float
    nnz_per_tcb_cv: float
    decile_size: int
    deciles: list = field(default_factory=list)  # ten (min, max) pairs

    def to_dict(self):
        d = asdict(self)
        d["deciles"] = [list(p) for p in self.deciles]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _deciles(sorted_counts):
    n = len(sorted_counts)
    base, extra = divmod(n, 10)
    out, lo = [], 0
    for g in range(10):
        size = base + (1 if g < extra else 0)
        grp = sorted_counts[lo:lo + size]
        if size:
            out.append((int(grp[0]), int(grp[-1])))
        else:
            # fewer than ten RWs: an empty decile repeats the previous maximum
            prev = out[-1][1] if out else 0
            out.append((prev, prev))
        lo += size
    return out


def compute_stats(a: CooMatrix, r: int = 16, c: int = 8, include_empty: bool = True) -> SparsityStats:
    """TCB/RW and nnz/TCB averages, CVs and decile ranges after compaction.

    ``include_empty`` counts row windows with no TCB as zeros in the TCB/RW
    figures. nnz/TCB is over stored TCBs only (none of which are empty).
    """
    b = build_bsb(a, r, c)
    counts = b.tcb_counts.astype(np.int64)
    if not include_empty:
        counts = counts[counts > 0]
    per_tcb = np.unpackbits(b.bitmaps, axis=1, bitorder="little").sum(axis=1) if b.total_tcbs else np.zeros(0)
    sorted_counts = np.sort(counts)
    return SparsityStats(
        num_rw=b.num_rw,
        total_tcbs=b.total_tcbs,
        nnz=a.nnz,
        tcb_per_rw_avg=float(counts.mean()) if counts.size else 0.0,
        tcb_per_rw_cv=_cv(counts),
        nnz_per_tcb_avg=float(per_tcb.mean()) if per_tcb.size else 0.0,
        nnz_per_tcb_cv=_cv(per_tcb),
        decile_size=math.ceil(counts.size / 10),
        deciles=_deciles(sorted_counts),
    )


def format_stats_table(stats: SparsityStats, name: str = "graph") -> str:
    """Aligned text: a TCB/RW - nnz/TCB summary line and a decile line."""
    head = f"{'Name':<12} {'RWs':>8} {'TCBs':>10} {'nnz':>10}   {'TCB/RW avg':>10} {'CV':>6}   {'nnz/TCB avg':>11} {'CV':>6}"
    row = (
        f"{name:<12} {stats.num_rw:>8} {stats.total_tcbs:>10} {stats.nnz:>10}   "
        f"{stats.tcb_per_rw_avg:>10.2f} {stats.tcb_per_rw_cv:>6.2f}   "
        f"{stats.nnz_per_tcb_avg:>11.2f} {stats.nnz_per_tcb_cv:>6.2f}"
    )
    labels = [f"{10 * (g + 1)}%" for g in range(10)]
    cells = [f"{lo}-{hi}" for lo, hi in stats.deciles]
    width = max(7, *(len(c) for c in cells))
    dhead = f"{'decile size':>11} " + " ".join(f"{lab:>{width}}" for lab in labels)
    drow = f"{stats.decile_size:>11} " + " ".join(f"{c:>{width}}" for c in cells)
    return "\n".join([head, row, "", dhead, drow])
