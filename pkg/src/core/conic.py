import numpy as np
from scipy import sparse

from src.core.errors import DimensionMismatch

BLOCK_KINDS = ('psd', 'free', 'nonneg')


class LinearFunctional:
    """Affine form constant + Σ coef·x[index] over the stacked variable vector."""

    __slots__ = ('terms', 'constant')

    def __init__(self, terms=None, constant=0.0):
        self.terms = dict(terms) if terms else {}
        self.constant = float(constant)

    @classmethod
    def const(cls, value):
        return cls(None, value)

    def copy(self):
        return LinearFunctional(self.terms, self.constant)

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, LinearFunctional):
            for k, v in other.terms.items():
                out.terms[k] = out.terms.get(k, 0.0) + v
            out.constant += other.constant
        else:
            out.constant += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return LinearFunctional({k: -v for k, v in self.terms.items()}, -self.constant)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, LinearFunctional):
            raise TypeError("Un funcional lineal no puede multiplicarse por otro.")
        s = float(scalar)
        return LinearFunctional({k: s * v for k, v in self.terms.items()}, s * self.constant)

    __rmul__ = __mul__

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return self.constant + sum(v * x[k] for k, v in self.terms.items())

    def max_index(self):
        return max(self.terms) if self.terms else -1

    def __repr__(self):
        return f"LinearFunctional({len(self.terms)} términos, constante={self.constant:g})"


class LiftVariable:
    """Handle to a symmetric PSD block, vectorised row-major at `offset`."""

    def __init__(self, label, dim, offset):
        self.label = label
        self.dim = dim
        self.offset = offset

    def index(self, i, j):
        return self.offset + i * self.dim + j

    def __getitem__(self, key):
        i, j = key
        if not (0 <= i < self.dim and 0 <= j < self.dim):
            raise DimensionMismatch(f"Entrada ({i}, {j}) fuera del bloque {self.label} de dimensión {self.dim}.")
        if i == j:
            return LinearFunctional({self.index(i, i): 1.0})
        return LinearFunctional({self.index(i, j): 0.5, self.index(j, i): 0.5})

    def trace(self):
        return LinearFunctional({self.index(i, i): 1.0 for i in range(self.dim)})

    def value(self, x):
        return np.asarray(x[self.offset:self.offset + self.dim * self.dim]).reshape(self.dim, self.dim)


class FreeVariable:
    def __init__(self, label, dim, offset, kind='free'):
        self.label = label
        self.dim = dim
        self.offset = offset
        self.kind = kind

    def __getitem__(self, k):
        if not 0 <= k < self.dim:
            raise DimensionMismatch(f"Componente {k} fuera de la variable {self.label}.")
        return LinearFunctional({self.offset + k: 1.0})

    def __len__(self):
        return self.dim

    def components(self):
        return [self[k] for k in range(self.dim)]

    def value(self, x):
        return np.asarray(x[self.offset:self.offset + self.dim])


class ConicProblem:
    """
    Standard-form carrier: minimise c·x subject to linear equalities and
    inequalities (lhs ≥ rhs), with x stacked from PSD, free and nonnegative
    blocks in the order they were declared.
    """

    def __init__(self, name='problem'):
        self.name = name
        self.blocks = []
        self.size = 0
        self.objective = LinearFunctional()
        self.equalities = []
        self.inequalities = []

    def _declare(self, kind, label, length, dim):
        entry = {'kind': kind, 'label': label, 'dim': dim, 'offset': self.size, 'length': length}
        self.blocks.append(entry)
        self.size += length
        return entry['offset']

    def add_psd(self, label, dim):
        offset = self._declare('psd', label, dim * dim, dim)
        return LiftVariable(label, dim, offset)

    def add_free(self, label, dim):
        offset = self._declare('free', label, dim, dim)
        return FreeVariable(label, dim, offset)

    def add_nonneg(self, label, count):
        offset = self._declare('nonneg', label, count, count)
        return FreeVariable(label, count, offset, kind='nonneg')

    @property
    def psd_blocks(self):
        return [(b['label'], b['dim']) for b in self.blocks if b['kind'] == 'psd']

    @property
    def free_vectors(self):
        return [(b['label'], b['dim']) for b in self.blocks if b['kind'] == 'free']

    @property
    def nonneg_count(self):
        return sum(b['dim'] for b in self.blocks if b['kind'] == 'nonneg')

    def _check(self, functional):
        if functional.max_index() >= self.size:
            raise DimensionMismatch("El funcional referencia una variable no declarada.")

    def add_objective(self, functional, weight=1.0):
        self._check(functional)
        self.objective = self.objective + functional * weight

    def add_equality(self, functional, rhs=0.0):
        self._check(functional)
        self.equalities.append((functional, float(rhs)))

    def add_inequality(self, functional, rhs=0.0):
        """functional ≥ rhs."""
        self._check(functional)
        self.inequalities.append((functional, float(rhs)))

    def _rows(self, constraints):
        rows, cols, vals = [], [], []
        rhs = np.zeros(len(constraints))
        for r, (f, b) in enumerate(constraints):
            for k, v in f.terms.items():
                rows.append(r)
                cols.append(k)
                vals.append(v)
            rhs[r] = b - f.constant
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(len(constraints), self.size))
        return mat, rhs

    def matrices(self):
        """(c, c0, A_eq, b_eq, A_in, b_in) with A_eq x = b_eq and A_in x ≥ b_in."""
        c = np.zeros(self.size)
        for k, v in self.objective.terms.items():
            c[k] += v
        a_eq, b_eq = self._rows(self.equalities)
        a_in, b_in = self._rows(self.inequalities)
        return c, self.objective.constant, a_eq, b_eq, a_in, b_in

    def evaluate_objective(self, x):
        return self.objective.evaluate(x)

    def to_dict(self):
        def encode(f):
            return {"terms": [[int(k), float(v)] for k, v in sorted(f.terms.items())], "constant": f.constant}

        return {
            "name": self.name,
            "size": self.size,
            "blocks": [dict(b) for b in self.blocks],
            "objective": encode(self.objective),
            "equalities": [{"lhs": encode(f), "rhs": b} for f, b in self.equalities],
            "inequalities": [{"lhs": encode(f), "rhs": b} for f, b in self.inequalities],
            "sense": "minimize",
            "inequality_sense": ">=",
        }
