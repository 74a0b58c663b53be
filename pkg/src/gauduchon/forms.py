"""Dense exterior algebra over the 2n complex covector generators.

Monomials are encoded as bitmasks over the generator list

    bit i       <->  dz^{i+1}        (0 <= i < n)
    bit n + j   <->  dzbar^{j+1}     (0 <= j < n)

and a form is a dense complex vector over all 4^n masks, with each
monomial written in ascending generator order ("canonical order").  This
stays tiny for the desk-scale dimensions (n <= 3 means 64 components) and
makes every sign a computable permutation parity instead of a convention
to remember.

Two layers are provided: ``PointForm`` for algebra at a single point
(used by the star/wedge oracles), and dict-of-ndarray coefficient maps
for field-level (n-1, n-1) machinery (wedge powers of metrics, the
del/delbar operators, Aeppli pairings).

The Hodge star with respect to a metric that is the identity at the
evaluation point acts on a real (n-1, n-1) form with coefficient matrix
Theta (in the interleaved basis below) by producing the (1, 1) tensor
S[a, b] = Theta[b, a].  The interleaved basis element for the pair (i, j)
is the full product dz^1 ^ dzbar^1 ^ ... ^ dz^n ^ dzbar^n with dz^{i+1}
and dzbar^{j+1} removed, carrying a sign +1 for i <= j and -1 for i > j.
This normalization is pinned by the requirement that
star(beta ^ alpha^{n-2}) / (n-1)!  equals the trace-complement transform
of beta for every (1, 1) form beta; the test suite enforces it.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def _bits(mask: int):
    out = []
    b = 0
    while mask:
        if mask & 1:
            out.append(b)
        mask >>= 1
        b += 1
    return out


@lru_cache(maxsize=None)
def wedge_sign(mask1: int, mask2: int) -> int:
    """Sign of (monomial mask1) ^ (monomial mask2) relative to canonical.

    Zero overlap is assumed (checked by callers).  The sign counts how
    many generators of mask1 each generator of mask2 must cross.
    """
    sign = 1
    for b in _bits(mask2):
        higher = mask1 >> (b + 1)
        crossings = bin(higher).count("1")
        if crossings & 1:
            sign = -sign
    return sign


@lru_cache(maxsize=None)
def sequence_sign(seq: tuple) -> int:
    """Parity of the permutation sorting ``seq`` ascending."""
    inv = 0
    for a in range(len(seq)):
        for b in range(a + 1, len(seq)):
            if seq[a] > seq[b]:
                inv += 1
    return -1 if inv & 1 else 1


@lru_cache(maxsize=None)
def interleaved_pair_basis(n: int, i: int, j: int):
    """Mask and reorder sign of the interleaved (n-1, n-1) basis element.

    Returns (mask, sigma) where sigma satisfies
    interleaved monomial = sigma * canonical monomial for the product
    dz^1 dzbar^1 ... dz^n dzbar^n with dz^{i+1} and dzbar^{j+1} omitted.
    """
    seq = []
    for a in range(n):
        if a != i:
            seq.append(a)
        if a != j:
            seq.append(n + a)
    mask = 0
    for g in seq:
        mask |= 1 << g
    return mask, sequence_sign(tuple(seq))


@lru_cache(maxsize=None)
def full_interleaved_sign(n: int) -> int:
    """Sign of dz^1 dzbar^1 ... dz^n dzbar^n relative to canonical order."""
    seq = []
    for a in range(n):
        seq.extend((a, n + a))
    return sequence_sign(tuple(seq))


def volume_coefficient(n: int) -> complex:
    """Canonical top-monomial coefficient of alpha^n / (n! det alpha).

    alpha^n = n! det(alpha) i^n (interleaved top monomial), so on the
    canonical monomial the coefficient picks up the reorder sign.
    """
    return (1j ** n) * full_interleaved_sign(n)


class PointForm:
    """A complex differential form at a single point."""

    __slots__ = ("n", "coeffs")

    def __init__(self, n: int, coeffs: np.ndarray | None = None):
        self.n = n
        if coeffs is None:
            coeffs = np.zeros(1 << (2 * n), dtype=np.complex128)
        self.coeffs = coeffs

    def copy(self) -> "PointForm":
        return PointForm(self.n, self.coeffs.copy())

    @classmethod
    def scalar(cls, n: int, value: complex = 1.0) -> "PointForm":
        f = cls(n)
        f.coeffs[0] = value
        return f

    @classmethod
    def one_form(cls, n: int, holo: np.ndarray | None = None,
                 anti: np.ndarray | None = None) -> "PointForm":
        """sum_p holo[p] dz^p + sum_p anti[p] dzbar^p."""
        f = cls(n)
        if holo is not None:
            for p in range(n):
                f.coeffs[1 << p] += holo[p]
        if anti is not None:
            for p in range(n):
                f.coeffs[1 << (n + p)] += anti[p]
        return f

    @classmethod
    def from_tensor(cls, H: np.ndarray) -> "PointForm":
        """The real (1,1) form i h_{a bbar} dz^a ^ dzbar^b of a matrix."""
        n = H.shape[-1]
        f = cls(n)
        for a in range(n):
            for b in range(n):
                f.coeffs[(1 << a) | (1 << (n + b))] += 1j * H[a, b]
        return f

    def __add__(self, other: "PointForm") -> "PointForm":
        return PointForm(self.n, self.coeffs + other.coeffs)

    def __sub__(self, other: "PointForm") -> "PointForm":
        return PointForm(self.n, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "PointForm":
        return PointForm(self.n, self.coeffs * scalar)

    __rmul__ = __mul__

    def wedge(self, other: "PointForm") -> "PointForm":
        out = PointForm(self.n)
        nz1 = np.nonzero(self.coeffs)[0]
        nz2 = np.nonzero(other.coeffs)[0]
        for m1 in nz1:
            c1 = self.coeffs[m1]
            for m2 in nz2:
                if m1 & m2:
                    continue
                out.coeffs[m1 | m2] += wedge_sign(int(m1), int(m2)) * c1 * other.coeffs[m2]
        return out

    def conjugate(self) -> "PointForm":
        """Complex conjugate, swapping dz <-> dzbar with the reorder sign."""
        n = self.n
        out = PointForm(n)
        lo = (1 << n) - 1
        for m in np.nonzero(self.coeffs)[0]:
            m = int(m)
            holo = m & lo
            anti = m >> n
            p = bin(holo).count("1")
            q = bin(anti).count("1")
            sign = -1 if (p * q) & 1 else 1
            new_mask = (anti & lo) | (holo << n)
            out.coeffs[new_mask] += sign * np.conj(self.coeffs[m])
        return out

    def real_part(self) -> "PointForm":
        return 0.5 * (self + self.conjugate())

    def pullback(self, E: np.ndarray) -> "PointForm":
        """Substitute dz^i = sum_a E[i, a] e^a (and conjugates).

        E's columns are the frame vectors in coordinates; the result holds
        the form's components in that frame.
        """
        n = self.n
        gen_images = []
        for i in range(n):
            f = PointForm(n)
            for a in range(n):
                f.coeffs[1 << a] = E[i, a]
            gen_images.append(f)
        for j in range(n):
            f = PointForm(n)
            for a in range(n):
                f.coeffs[1 << (n + a)] = np.conj(E[j, a])
            gen_images.append(f)
        out = PointForm(n)
        for m in np.nonzero(self.coeffs)[0]:
            m = int(m)
            term = PointForm.scalar(n, self.coeffs[m])
            for g in _bits(m):
                term = term.wedge(gen_images[g])
            out = out + term
        return out

    def theta_matrix(self) -> np.ndarray:
        """Coefficient matrix of an (n-1, n-1) form in the interleaved basis."""
        n = self.n
        theta = np.empty((n, n), dtype=np.complex128)
        pref = 1j ** (n - 1)
        for i in range(n):
            for j in range(n):
                mask, sigma = interleaved_pair_basis(n, i, j)
                pair_sign = 1.0 if i <= j else -1.0
                theta[i, j] = self.coeffs[mask] / (pref * pair_sign * sigma)
        return theta

    def star_tensor(self) -> np.ndarray:
        """Hodge star of an (n-1, n-1) form at a metric-identity point.

        Returns the matrix S with S[a, b] the dz^a ^ dzbar^b component of
        the resulting (1, 1) form (so that i S[a,b] dz^a ^ dzbar^b is the
        starred form).
        """
        return self.theta_matrix().T.copy()

    def top_coefficient(self) -> complex:
        """Canonical coefficient of the full 2n-degree monomial."""
        return complex(self.coeffs[-1])


# ---------------------------------------------------------------------------
# field-level coefficient maps: dict {mask: ndarray over grid}


def tensor_form_fields(H: np.ndarray) -> dict:
    """Coefficient fields of the (1,1) form of a Hermitian tensor field."""
    n = H.shape[-1]
    out = {}
    for a in range(n):
        for b in range(n):
            out[(1 << a) | (1 << (n + b))] = 1j * H[..., a, b]
    return out


def wedge_fields(d1: dict, d2: dict) -> dict:
    out = {}
    for m1, c1 in d1.items():
        for m2, c2 in d2.items():
            if m1 & m2:
                continue
            m = m1 | m2
            term = wedge_sign(m1, m2) * (c1 * c2)
            if m in out:
                out[m] = out[m] + term
            else:
                out[m] = term
    return out


def wedge_power_fields(H: np.ndarray, power: int) -> dict:
    """Coefficient fields of (i h_{a bbar} dz^a dzbar^b)^power."""
    n = H.shape[-1]
    if power == 0:
        return {0: np.ones(H.shape[:-2], dtype=np.complex128)}
    acc = tensor_form_fields(H)
    for _ in range(power - 1):
        acc = wedge_fields(acc, tensor_form_fields(H))
    return acc


def del_fields(d: dict, grid) -> dict:
    """Holomorphic exterior derivative of a coefficient map (spectral)."""
    from .grid import _deriv_values

    n = grid.n
    out = {}
    for m, c in d.items():
        for k in range(n):
            g = 1 << k
            if m & g:
                continue
            term = wedge_sign(g, m) * _deriv_values(c, grid, k, conjugate=False)
            key = g | m
            if key in out:
                out[key] = out[key] + term
            else:
                out[key] = term
    return out


def delbar_fields(d: dict, grid) -> dict:
    """Anti-holomorphic exterior derivative of a coefficient map."""
    from .grid import _deriv_values

    n = grid.n
    out = {}
    for m, c in d.items():
        for k in range(n):
            g = 1 << (n + k)
            if m & g:
                continue
            term = wedge_sign(g, m) * _deriv_values(c, grid, k, conjugate=True)
            key = g | m
            if key in out:
                out[key] = out[key] + term
            else:
                out[key] = term
    return out


def fields_at_point(d: dict, n: int, index: tuple) -> PointForm:
    """Evaluate a coefficient map at one grid point (broadcast-aware)."""
    f = PointForm(n)
    for m, c in d.items():
        idx = tuple(index[a] if c.shape[a] > 1 else 0 for a in range(len(index)))
        f.coeffs[m] = c[idx]
    return f


def nm1_coefficient_masks(n: int):
    """Masks of the canonical (n-1, n-1) monomials, keyed by the omitted pair."""
    full = (1 << (2 * n)) - 1
    return {(i, j): full & ~(1 << i) & ~(1 << (n + j))
            for i in range(n) for j in range(n)}
