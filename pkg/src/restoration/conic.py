"""Small conic modelling layer with a Clarabel backend and a binary branch-and-bound.

Programs are assembled from affine expressions over one flat real decision
vector.  Complex matrix expressions keep their real and imaginary parts as
two affine blocks; Hermitian PSD constraints are embedded into real
symmetric blocks only when the program is handed to the solver.

Sign convention: ``ConicProgram`` maximises.  Every cone constraint reads
``expr in K`` with K one of: zero, nonnegative orthant, second-order cone
``(t, x): t >= ||x||``, real symmetric PSD.
"""

from __future__ import annotations

import heapq
import io
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

try:
    import clarabel
except ImportError:  # pragma: no cover - exercised only without the backend
    clarabel = None

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_LIMIT = "numerical_limit"

_SQRT2 = math.sqrt(2.0)


class ConicError(RuntimeError):
    pass


class NodeLimitError(ConicError):
    def __init__(self, message, incumbent=None):
        super().__init__(message)
        self.incumbent = incumbent


# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------


class Affine:
    """Vector of affine functions ``A x + b`` (rows of ``A`` may be short of the final width)."""

    __slots__ = ("A", "b")
    # let numpy hand mixed arithmetic back to our reflected operators
    __array_ufunc__ = None

    def __init__(self, A, b):
        self.A = sp.csr_matrix(A)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.size:
            raise ValueError("row mismatch in affine expression")

    @property
    def size(self) -> int:
        return self.b.size

    def __len__(self):
        return self.b.size

    @classmethod
    def const(cls, values) -> "Affine":
        v = np.atleast_1d(np.asarray(values, dtype=float)).reshape(-1)
        return cls(sp.csr_matrix((v.size, 0)), v)

    @classmethod
    def zeros(cls, m: int) -> "Affine":
        return cls.const(np.zeros(m))

    def _widened(self, n: int) -> sp.csr_matrix:
        if self.A.shape[1] == n:
            return self.A
        A = self.A.copy()
        A.resize((A.shape[0], n))
        return A

    @staticmethod
    def _lift(other, m: int) -> "Affine":
        if isinstance(other, Affine):
            return other
        v = np.asarray(other, dtype=float)
        if v.ndim == 0:
            v = np.full(m, float(v))
        return Affine.const(v)

    def __add__(self, other):
        other = self._lift(other, self.size)
        if other.size != self.size:
            if other.size == 1:
                other = other.repeat(self.size)
            elif self.size == 1:
                return self.repeat(other.size) + other
            else:
                raise ValueError(f"size mismatch {self.size} vs {other.size}")
        n = max(self.A.shape[1], other.A.shape[1])
        return Affine(self._widened(n) + other._widened(n), self.b + other.b)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.A, -self.b)

    def __sub__(self, other):
        return self + (-self._lift(other, self.size))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k):
        if isinstance(k, Affine):
            raise TypeError("product of two affine expressions is not affine")
        k = np.asarray(k, dtype=float)
        if k.ndim == 0:
            return Affine(self.A * float(k), self.b * float(k))
        return Affine(sp.diags(k.reshape(-1)) @ self.A, self.b * k.reshape(-1))

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def lmul(self, M) -> "Affine":
        """Left product with a numeric matrix: ``M @ (A x + b)``."""
        if sp.issparse(M):
            return Affine(sp.csr_matrix(M) @ self.A, M @ self.b)
        M = np.asarray(M, dtype=float)
        return Affine(sp.csr_matrix(M) @ self.A, M @ self.b)

    def __getitem__(self, idx):
        rows = np.arange(self.size)[idx]
        rows = np.atleast_1d(rows)
        return Affine(self.A[rows], self.b[rows])

    def repeat(self, m: int) -> "Affine":
        return self[np.zeros(m, dtype=int)]

    def sum(self) -> "Affine":
        return Affine(sp.csr_matrix(self.A.sum(axis=0)), [self.b.sum()])

    def dot(self, w) -> "Affine":
        w = np.asarray(w, dtype=float).reshape(1, -1)
        return self.lmul(w)

    @staticmethod
    def vstack(parts) -> "Affine":
        parts = [p for p in parts if p.size]
        if not parts:
            return Affine.zeros(0)
        n = max(p.A.shape[1] for p in parts)
        return Affine(sp.vstack([p._widened(n) for p in parts], format="csr"), np.concatenate([p.b for p in parts]))

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._widened(x.size) @ x + self.b


class CMatrix:
    """Complex matrix expression, real and imaginary parts stored row-major."""

    __slots__ = ("shape", "re", "im")
    __array_ufunc__ = None

    def __init__(self, re: Affine, im: Affine, shape):
        self.shape = tuple(shape)
        if re.size != shape[0] * shape[1] or im.size != re.size:
            raise ValueError("shape mismatch in complex matrix expression")
        self.re, self.im = re, im

    @classmethod
    def const(cls, M) -> "CMatrix":
        M = np.atleast_2d(np.asarray(M, dtype=complex))
        return cls(Affine.const(M.real.ravel()), Affine.const(M.imag.ravel()), M.shape)

    @classmethod
    def real(cls, X: Affine, shape) -> "CMatrix":
        return cls(X, Affine.zeros(X.size), shape)

    @property
    def H(self) -> "CMatrix":
        r, c = self.shape
        perm = np.arange(r * c).reshape(r, c).T.ravel()
        return CMatrix(self.re[perm], -self.im[perm], (c, r))

    def _coerce(self, other) -> "CMatrix":
        if isinstance(other, CMatrix):
            return other
        return CMatrix.const(np.broadcast_to(np.asarray(other, dtype=complex), self.shape))

    def __add__(self, other):
        other = self._coerce(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return CMatrix(self.re + other.re, self.im + other.im, self.shape)

    __radd__ = __add__

    def __neg__(self):
        return CMatrix(-self.re, -self.im, self.shape)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, k: complex) -> "CMatrix":
        k = complex(k)
        return CMatrix(self.re * k.real - self.im * k.imag, self.re * k.imag + self.im * k.real, self.shape)

    def lmul(self, M) -> "CMatrix":
        """``M @ X`` for a numeric complex matrix ``M``."""
        M = np.atleast_2d(np.asarray(M, dtype=complex))
        r, c = self.shape
        if M.shape[1] != r:
            raise ValueError("inner dimension mismatch")
        Kr = np.kron(M.real, np.eye(c))
        Ki = np.kron(M.imag, np.eye(c))
        return CMatrix(self.re.lmul(Kr) - self.im.lmul(Ki), self.re.lmul(Ki) + self.im.lmul(Kr), (M.shape[0], c))

    def rmul(self, M) -> "CMatrix":
        """``X @ M`` for a numeric complex matrix ``M``."""
        M = np.atleast_2d(np.asarray(M, dtype=complex))
        r, c = self.shape
        if M.shape[0] != c:
            raise ValueError("inner dimension mismatch")
        Kr = np.kron(np.eye(r), M.real.T)
        Ki = np.kron(np.eye(r), M.imag.T)
        return CMatrix(self.re.lmul(Kr) - self.im.lmul(Ki), self.re.lmul(Ki) + self.im.lmul(Kr), (r, M.shape[1]))

    def hadamard(self, M) -> "CMatrix":
        M = np.broadcast_to(np.asarray(M, dtype=complex), self.shape).ravel()
        return CMatrix(
            self.re * M.real - self.im * M.imag, self.re * M.imag + self.im * M.real, self.shape
        )

    def entries(self, rows, cols) -> "CMatrix":
        r, c = self.shape
        rows, cols = list(rows), list(cols)
        idx = (np.asarray(rows)[:, None] * c + np.asarray(cols)[None, :]).ravel()
        return CMatrix(self.re[idx], self.im[idx], (len(rows), len(cols)))

    def principal(self, idx) -> "CMatrix":
        return self.entries(idx, idx)

    def diag(self) -> tuple[Affine, Affine]:
        r, c = self.shape
        k = np.arange(min(r, c)) * (c + 1)
        return self.re[k], self.im[k]

    @staticmethod
    def bmat(blocks) -> "CMatrix":
        """Assemble a block matrix from a nested list of CMatrix blocks."""
        heights = [row[0].shape[0] for row in blocks]
        widths = [b.shape[1] for b in blocks[0]]
        R, C = sum(heights), sum(widths)
        re_parts, im_parts, order = [], [], []
        r0 = 0
        for bi, row in enumerate(blocks):
            c0 = 0
            for bj, blk in enumerate(row):
                h, w = blk.shape
                if h != heights[bi] or w != widths[bj]:
                    raise ValueError("inconsistent block sizes")
                pos = ((r0 + np.arange(h))[:, None] * C + (c0 + np.arange(w))[None, :]).ravel()
                order.append(pos)
                re_parts.append(blk.re)
                im_parts.append(blk.im)
                c0 += w
            r0 += heights[bi]
        pos = np.concatenate(order)
        inv = np.empty_like(pos)
        inv[pos] = np.arange(pos.size)
        return CMatrix(Affine.vstack(re_parts)[inv], Affine.vstack(im_parts)[inv], (R, C))

    def value(self, x) -> np.ndarray:
        return (self.re.value(x) + 1j * self.im.value(x)).reshape(self.shape)


@dataclass(frozen=True)
class RMatrix:
    """Real square matrix expression (row-major)."""

    expr: Affine
    dim: int

    def value(self, x) -> np.ndarray:
        return self.expr.value(x).reshape(self.dim, self.dim)


def herm_embed(M):
    """Real symmetric embedding ``[[Re M, -Im M], [Im M, Re M]]``.

    Accepts a numeric array (returns an array) or a ``CMatrix`` expression
    (returns an ``RMatrix``).  ``M`` is PSD iff the embedding is.
    """
    if isinstance(M, CMatrix):
        m = M.shape[0]
        if M.shape != (m, m):
            raise ValueError("herm_embed needs a square matrix")
        idx = np.arange(m * m).reshape(m, m)
        rows = []
        for i in range(2 * m):
            for j in range(2 * m):
                ii, jj = i % m, j % m
                k = idx[ii, jj]
                top, left = i < m, j < m
                if top == left:
                    rows.append((M.re, k, 1.0))
                elif top:
                    rows.append((M.im, k, -1.0))
                else:
                    rows.append((M.im, k, 1.0))
        # group by source to keep the number of sparse ops small
        re_idx = [(p, k, s) for p, (src, k, s) in enumerate(rows) if src is M.re]
        im_idx = [(p, k, s) for p, (src, k, s) in enumerate(rows) if src is M.im]
        parts = [M.re[[k for _, k, _ in re_idx]] * np.array([s for *_, s in re_idx])]
        pos = [p for p, *_ in re_idx]
        if im_idx:
            parts.append(M.im[[k for _, k, _ in im_idx]] * np.array([s for *_, s in im_idx]))
            pos += [p for p, *_ in im_idx]
        stacked = Affine.vstack(parts)
        inv = np.empty(len(pos), dtype=int)
        inv[np.asarray(pos)] = np.arange(len(pos))
        return RMatrix(stacked[inv], 2 * m)
    A = np.atleast_2d(np.asarray(M, dtype=complex))
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


# ---------------------------------------------------------------------------
# program
# ---------------------------------------------------------------------------

_KINDS = ("zero", "nonneg", "soc", "psd")


@dataclass
class Block:
    kind: str
    expr: Affine  # for psd: upper triangle, column-major, unscaled
    dim: int
    label: str = ""


@dataclass
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 200
    int_tol: float = 1e-6
    mip_gap: float = 1e-6
    node_limit: int = 5000
    deterministic: bool = True
    time_limit: float | None = None

    def __post_init__(self):
        if not (self.tol > 0 and self.int_tol > 0 and self.mip_gap >= 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_iter <= 0 or self.node_limit <= 0:
            raise ValueError("iteration and node limits must be positive")


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    psd: dict[str, np.ndarray] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def value(self, expr):
        if self.x is None:
            raise ConicError(f"no values for status {self.status}")
        return expr.value(self.x)


class ConicProgram:
    def __init__(self, name: str = "program"):
        self.name = name
        self.n = 0
        self.names: dict[str, tuple[int, int]] = {}
        self.binaries: list[int] = []
        self.blocks: list[Block] = []
        self.objective = Affine.zeros(1)

    # variables -------------------------------------------------------------

    def add_var(self, size: int = 1, name: str | None = None) -> Affine:
        start = self.n
        self.n += size
        if name is not None:
            if name in self.names:
                raise ValueError(f"duplicate variable name {name}")
            self.names[name] = (start, size)
        A = sp.csr_matrix((np.ones(size), (np.arange(size), start + np.arange(size))), shape=(size, self.n))
        return Affine(A, np.zeros(size))

    def add_binary(self, size: int = 1, name: str | None = None) -> Affine:
        v = self.add_var(size, name)
        self.binaries.extend(range(self.n - size, self.n))
        return v

    def add_hermitian(self, m: int, name: str | None = None) -> CMatrix:
        """Hermitian m-by-m variable stored as m*m real scalars (diag, upper re, upper im)."""
        nu = m * (m - 1) // 2
        v = self.add_var(m + 2 * nu, name)
        re_rows, re_sign, im_rows, im_sign = [], [], [], []
        upper = {}
        for k, (i, j) in enumerate((i, j) for i in range(m) for j in range(i + 1, m)):
            upper[(i, j)] = k
        for i in range(m):
            for j in range(m):
                if i == j:
                    re_rows.append(i)
                    im_rows.append(None)
                else:
                    k = upper[(min(i, j), max(i, j))]
                    re_rows.append(m + k)
                    im_rows.append(m + nu + k)
                    im_sign.append(1.0 if i < j else -1.0)
        re = v[re_rows]
        im_parts = []
        s_iter = iter(im_sign)
        im_idx, im_sgn = [], []
        for r in im_rows:
            if r is None:
                im_idx.append(0)
                im_sgn.append(0.0)
            else:
                im_idx.append(r)
                im_sgn.append(next(s_iter))
        im = v[im_idx] * np.array(im_sgn)
        return CMatrix(re, im, (m, m))

    def add_complex(self, shape, name: str | None = None) -> CMatrix:
        r, c = shape
        v = self.add_var(2 * r * c, name)
        return CMatrix(v[: r * c], v[r * c :], (r, c))

    # constraints -----------------------------------------------------------

    def _add(self, kind, expr, dim, label):
        self.blocks.append(Block(kind, expr, dim, label))

    def add_eq(self, expr: Affine, label: str = ""):
        if expr.size:
            self._add("zero", expr, expr.size, label)

    def add_nonneg(self, expr: Affine, label: str = ""):
        if expr.size:
            self._add("nonneg", expr, expr.size, label)

    def add_le(self, lhs, rhs, label: str = ""):
        lhs_a = lhs if isinstance(lhs, Affine) else None
        rhs_a = rhs if isinstance(rhs, Affine) else None
        if lhs_a is None and rhs_a is None:
            raise ValueError("at least one side must be an expression")
        self.add_nonneg((rhs_a if rhs_a is not None else Affine._lift(rhs, lhs_a.size)) - lhs, label)

    def add_soc(self, t: Affine, x: Affine, label: str = ""):
        self._add("soc", Affine.vstack([t, x]), 1 + x.size, label)

    def add_psd(self, M, label: str = ""):
        if isinstance(M, CMatrix):
            M = herm_embed(M)
        if isinstance(M, np.ndarray):
            raise TypeError("add_psd needs an expression")
        d = M.dim
        rows = [i * d + j for j in range(d) for i in range(j + 1)]
        self._add("psd", M.expr[rows], d, label)

    def maximize(self, expr: Affine):
        if expr.size != 1:
            raise ValueError("objective must be scalar")
        self.objective = expr

    # assembly --------------------------------------------------------------

    @property
    def is_continuous(self) -> bool:
        return not self.binaries

    def check(self):
        for blk in self.blocks:
            if blk.kind not in _KINDS:
                raise ConicError(f"unknown cone {blk.kind}")
            if blk.expr.A.shape[1] > self.n:
                raise ConicError(f"block {blk.label!r} references a missing variable")
            if blk.kind == "psd" and blk.expr.size != blk.dim * (blk.dim + 1) // 2:
                raise ConicError(f"block {blk.label!r} is not square")
            if blk.kind == "soc" and blk.dim < 1:
                raise ConicError("empty second-order cone")

    def _assemble(self, extra_eq: Affine | None = None):
        self.check()
        n = self.n
        G_parts, h_parts, cones = [], [], []
        order = sorted(range(len(self.blocks)), key=lambda k: _KINDS.index(self.blocks[k].kind))
        zero = [self.blocks[k].expr for k in order if self.blocks[k].kind == "zero"]
        if extra_eq is not None and extra_eq.size:
            zero.append(extra_eq)
        if zero:
            z = Affine.vstack(zero)
            G_parts.append(z._widened(n))
            h_parts.append(z.b)
            cones.append(clarabel.ZeroConeT(z.size))
        nn = [self.blocks[k].expr for k in order if self.blocks[k].kind == "nonneg"]
        if nn:
            z = Affine.vstack(nn)
            G_parts.append(z._widened(n))
            h_parts.append(z.b)
            cones.append(clarabel.NonnegativeConeT(z.size))
        for k in order:
            blk = self.blocks[k]
            if blk.kind == "soc":
                G_parts.append(blk.expr._widened(n))
                h_parts.append(blk.expr.b)
                cones.append(clarabel.SecondOrderConeT(blk.dim))
            elif blk.kind == "psd":
                d = blk.dim
                scale = np.array([1.0 if i == j else _SQRT2 for j in range(d) for i in range(j + 1)])
                G_parts.append(sp.diags(scale) @ blk.expr._widened(n))
                h_parts.append(blk.expr.b * scale)
                cones.append(clarabel.PSDTriangleConeT(d))
        if G_parts:
            G = sp.vstack(G_parts, format="csc")
            h = np.concatenate(h_parts)
        else:
            G = sp.csc_matrix((0, n))
            h = np.zeros(0)
        # expr = G x + h in K  <=>  (-G) x + s = h, s in K
        return sp.csc_matrix(-G), h, cones

    def objective_vector(self) -> tuple[np.ndarray, float]:
        c = np.zeros(self.n)
        row = self.objective._widened(self.n)
        c[row.indices] = row.data
        return c, float(self.objective.b[0])

    def psd_values(self, x) -> dict[str, np.ndarray]:
        out = {}
        for k, blk in enumerate(self.blocks):
            if blk.kind != "psd":
                continue
            d = blk.dim
            vals = blk.expr.value(x)
            M = np.zeros((d, d))
            p = 0
            for j in range(d):
                for i in range(j + 1):
                    M[i, j] = M[j, i] = vals[p]
                    p += 1
            out[blk.label or f"psd{k}"] = M
        return out

    # text dump -------------------------------------------------------------

    def dumps(self) -> str:
        """Text form: header, variables, objective and one section per cone block."""
        out = io.StringIO()
        out.write(f"conic-program 1 {self.name}\n")
        out.write(f"vars {self.n}\n")
        for name, (start, size) in sorted(self.names.items(), key=lambda t: t[1]):
            out.write(f"name {name} {start} {size}\n")
        if self.binaries:
            out.write("binary " + " ".join(map(str, self.binaries)) + "\n")
        c, c0 = self.objective_vector()
        out.write(f"maximize {len(np.flatnonzero(c))} {float(c0)!r}\n")
        for j in np.flatnonzero(c):
            out.write(f"  {j} {float(c[j])!r}\n")
        for blk in self.blocks:
            A = blk.expr._widened(self.n).tocoo()
            out.write(f"block {blk.kind} {blk.dim} {blk.expr.size} {A.nnz} {blk.label or '-'}\n")
            for r, col, v in zip(A.row, A.col, A.data):
                out.write(f"  a {r} {col} {float(v)!r}\n")
            for r in np.flatnonzero(blk.expr.b):
                out.write(f"  b {r} {float(blk.expr.b[r])!r}\n")
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "ConicProgram":
        lines = iter(text.splitlines())
        head = next(lines).split()
        if head[:2] != ["conic-program", "1"]:
            raise ConicError("not a conic-program v1 dump")
        p = cls(head[2] if len(head) > 2 else "program")
        cur = None
        obj = None
        for raw in lines:
            tok = raw.split()
            if not tok:
                continue
            if tok[0] == "vars":
                p.n = int(tok[1])
            elif tok[0] == "name":
                p.names[tok[1]] = (int(tok[2]), int(tok[3]))
            elif tok[0] == "binary":
                p.binaries = [int(t) for t in tok[1:]]
            elif tok[0] == "maximize":
                obj = {"c": [], "c0": float(tok[2])}
                cur = ("obj", obj)
            elif tok[0] == "block":
                blk = {"kind": tok[1], "dim": int(tok[2]), "m": int(tok[3]), "a": [], "b": [],
                       "label": "" if tok[5] == "-" else tok[5]}
                cur = ("blk", blk)
                p.blocks.append(blk)
            elif cur and cur[0] == "obj":
                obj["c"].append((int(tok[0]), float(tok[1])))
            elif tok[0] == "a":
                cur[1]["a"].append((int(tok[1]), int(tok[2]), float(tok[3])))
            elif tok[0] == "b":
                cur[1]["b"].append((int(tok[1]), float(tok[2])))
        blocks = []
        for blk in p.blocks:
            a = blk["a"]
            A = sp.csr_matrix(
                ([v for *_, v in a], ([r for r, *_ in a], [c for _, c, _ in a])), shape=(blk["m"], p.n)
            )
            b = np.zeros(blk["m"])
            for r, v in blk["b"]:
                b[r] = v
            blocks.append(Block(blk["kind"], Affine(A, b), blk["dim"], blk["label"]))
        p.blocks = blocks
        if obj is not None:
            c = np.zeros(p.n)
            for j, v in obj["c"]:
                c[j] = v
            p.objective = Affine(sp.csr_matrix(c.reshape(1, -1)), [obj["c0"]])
        return p


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

_STATUS = {
    "Solved": OPTIMAL,
    "AlmostSolved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED,
    "AlmostDualInfeasible": UNBOUNDED,
}


def _settings(s: SolverSettings):
    st = clarabel.DefaultSettings()
    st.verbose = False
    st.tol_feas = s.tol
    st.tol_gap_abs = s.tol
    st.tol_gap_rel = s.tol
    st.max_iter = s.max_iter
    if s.time_limit is not None:
        st.time_limit = float(s.time_limit)
    if s.deterministic:
        st.max_threads = 1
    return st


def _run(p: ConicProgram, s: SolverSettings, extra_eq: Affine | None = None) -> ConicSolution:
    if clarabel is None:  # pragma: no cover
        raise ConicError("the clarabel backend is not installed")
    A, b, cones = p._assemble(extra_eq)
    c, c0 = p.objective_vector()
    P = sp.csc_matrix((p.n, p.n))
    t0 = time.perf_counter()
    raw = clarabel.DefaultSolver(P, -c, A, b, cones, _settings(s)).solve()
    elapsed = time.perf_counter() - t0
    name = str(raw.status)
    status = _STATUS.get(name, NUMERICAL_LIMIT)
    stats = {"solver": "clarabel", "raw_status": name, "iterations": int(raw.iterations), "solve_time": elapsed}
    if status != OPTIMAL:
        return ConicSolution(status, stats=stats)
    stats["accuracy"] = "full" if name == "Solved" else "reduced"
    x = np.asarray(raw.x, dtype=float)
    return ConicSolution(OPTIMAL, x, float(c @ x + c0), p.psd_values(x), stats)


def solve_conic(p: ConicProgram, s: SolverSettings | None = None, relax: bool = False) -> ConicSolution:
    """Solve a continuous program (or the continuous relaxation when ``relax``)."""
    s = s or SolverSettings()
    if p.binaries and not relax:
        raise ConicError("program has binary variables; use solve_mip or relax=True")
    if p.binaries:
        return _run(_with_box(p), s)
    return _run(p, s)


def _with_box(p: ConicProgram) -> ConicProgram:
    q = ConicProgram(p.name)
    q.n, q.names, q.blocks, q.objective = p.n, p.names, list(p.blocks), p.objective
    if p.binaries:
        idx = np.asarray(p.binaries)
        sel = sp.csr_matrix((np.ones(idx.size), (np.arange(idx.size), idx)), shape=(idx.size, p.n))
        x = Affine(sel, np.zeros(idx.size))
        q.add_nonneg(x, "binary>=0")
        q.add_nonneg(1.0 - x, "binary<=1")
    return q


def _fix_rows(n: int, fixes: dict[int, int]) -> Affine:
    if not fixes:
        return Affine.zeros(0)
    idx = sorted(fixes)
    A = sp.csr_matrix((np.ones(len(idx)), (np.arange(len(idx)), idx)), shape=(len(idx), n))
    return Affine(A, -np.array([float(fixes[i]) for i in idx]))


def solve_mip(p: ConicProgram, s: SolverSettings | None = None) -> ConicSolution:
    """Best-first branch-and-bound over the binary variables of ``p``.

    Branching picks the most fractional binary (lowest index on ties); nodes
    with equal bounds are explored in creation order.
    """
    s = s or SolverSettings()
    if not p.binaries:
        return solve_conic(p, s)
    relaxed = _with_box(p)
    counter = itertools.count()
    root = _run(relaxed, s)
    nodes = 1
    if root.status != OPTIMAL:
        root.stats["nodes"] = nodes
        return root
    heap = [(-root.objective, next(counter), {}, root)]
    best: ConicSolution | None = None
    t0 = time.perf_counter()
    while heap:
        neg_bound, _, fixes, sol = heapq.heappop(heap)
        bound = -neg_bound
        if best is not None and bound <= best.objective + s.mip_gap:
            continue
        xb = sol.x[p.binaries]
        frac = np.abs(xb - np.round(xb))
        if frac.max(initial=0.0) <= s.int_tol:
            x = sol.x.copy()
            x[p.binaries] = np.round(xb)
            c, c0 = p.objective_vector()
            best = ConicSolution(OPTIMAL, x, float(c @ x + c0), p.psd_values(x), dict(sol.stats))
            continue
        # most fractional: closest to 0.5, lowest index on ties
        score = np.abs(xb - 0.5)
        k = int(np.flatnonzero(score == score.min())[0])
        var = p.binaries[k]
        for val in (1, 0):
            if nodes >= s.node_limit:
                raise NodeLimitError(f"branch-and-bound node limit {s.node_limit} exceeded", best)
            child = dict(fixes)
            child[var] = val
            csol = _run(relaxed, s, _fix_rows(p.n, child))
            nodes += 1
            if csol.status == OPTIMAL and (best is None or csol.objective > best.objective + s.mip_gap):
                heapq.heappush(heap, (-csol.objective, next(counter), child, csol))
    elapsed = time.perf_counter() - t0
    if best is None:
        return ConicSolution(INFEASIBLE, stats={"nodes": nodes, "solve_time": elapsed})
    best.stats.update(nodes=nodes, bnb_time=elapsed, gap=0.0)
    return best
