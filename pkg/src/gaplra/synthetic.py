"""Planted-spectrum test matrices X = U diag(sigma) V^T with Haar-random U, V."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractViolation
from .matrix import SparseColumnsMatrix, child_seed


@dataclass
class SyntheticSpec:
    """Recipe for a planted matrix.

    Either ``singular_values`` is given explicitly, or the clustered-top
    generator is used: ``top`` values spread linearly over
    [top_value * (1 - cluster_width), top_value], followed by ``tail_count``
    values decaying geometrically from ``tail_start`` with ratio ``tail_decay``.
    """

    d: int
    n: int
    singular_values: list = None
    top: int = 0
    top_value: float = 1.0
    cluster_width: float = 0.0
    tail_count: int = 0
    tail_start: float = 0.5
    tail_decay: float = 0.5
    u_seed: int = None
    v_seed: int = None
    extra: dict = field(default_factory=dict)

    def spectrum(self):
        if self.singular_values is not None:
            sigma = np.asarray(self.singular_values, dtype=np.float64)
        else:
            top = self.top_value * (1.0 - self.cluster_width * np.linspace(0.0, 1.0, self.top)) \
                if self.top > 1 else np.full(self.top, self.top_value)
            tail = self.tail_start * self.tail_decay ** np.arange(self.tail_count)
            sigma = np.concatenate([top, tail])
        if sigma.size > min(self.d, self.n):
            raise ContractViolation(
                f"{sigma.size} singular values do not fit a {self.d} x {self.n} matrix"
            )
        if np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
            raise ContractViolation("singular values must be nonnegative and descending")
        return sigma

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))

    def to_dict(self):
        return asdict(self)


def haar_orthogonal(m, r, seed):
    """m x r matrix with orthonormal columns, the first r columns of a Haar rotation."""
    G = np.random.default_rng(seed).standard_normal((m, r))
    Q, R = np.linalg.qr(G)
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def plant(spec, seed=0, sidecar=None):
    """Build X = U diag(sigma) V^T; returns (SparseColumnsMatrix, sigma).

    If ``sidecar`` is a path, the exact spectrum is written there as JSON.
    """
    sigma = spec.spectrum()
    r = sigma.size
    u_seed = spec.u_seed if spec.u_seed is not None else child_seed(seed, 0)
    v_seed = spec.v_seed if spec.v_seed is not None else child_seed(seed, 1)
    U = haar_orthogonal(spec.d, r, u_seed)
    V = haar_orthogonal(spec.n, r, v_seed)
    X = SparseColumnsMatrix((U * sigma) @ V.T)
    if sidecar is not None:
        write_sidecar(sidecar, sigma)
    return X, sigma


def write_sidecar(path, sigma):
    with open(path, "w") as fh:
        json.dump({"singular_values": [float(s) for s in sigma]}, fh, indent=2)


def read_sidecar(path):
    with open(path) as fh:
        return np.asarray(json.load(fh)["singular_values"])


def stable_rank(sigma):
    """||X||_F^2 / sigma_1^2 from a list of singular values."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size == 0 or sigma[0] == 0:
        return 0.0
    return float(np.sum(sigma**2) / sigma[0] ** 2)


def spectrum_with_stable_rank(count, sr, decay=0.9):
    """``count`` descending singular values with sigma_1 = 1 and stable rank ``sr``.

    The tail is geometric and rescaled so the squared mass equals sr - 1.
    """
    if not 1 <= sr <= count:
        raise ContractViolation(f"stable rank must lie in [1, {count}]")
    tail = decay ** np.arange(1, count)
    tail = tail * np.sqrt((sr - 1.0) / np.sum(tail**2)) if sr > 1 else np.zeros(count - 1)
    if tail.size and tail[0] > 1.0:
        raise ContractViolation("decay too slow for the requested stable rank")
    return np.concatenate([[1.0], tail])
