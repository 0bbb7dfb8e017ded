"""Atomic conductance laws on (0, 1] and the trap-scale mass functionals.

A law is a finite list of (value, probability) atoms with values strictly
decreasing and probabilities summing to one.  Besides plain atom lists the
loader accepts the ``theorem1`` family: a strong atom at 1 plus weak atoms at
1/n_l whose masses are lambda_{n_l}^(-theta) with theta = 1/(2(4d-2)), the
exponent that turns the trap-scale mass product into a power of 1/lambda.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

PROB_TOL = 1e-12
MIN_TRAP_SCALE = 4
#: Weak-atom masses of a family law must leave at least this much mass at 1.
FAMILY_STRONG_FLOOR = 0.5


class LawError(ValueError):
    """Raised for malformed conductance laws or law files."""


@dataclass(frozen=True)
class ConductanceLaw:
    """Finite atomic probability law for a single edge conductance."""

    id: str
    values: tuple[float, ...]
    probs: tuple[float, ...]
    meta: Mapping | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if len(self.values) != len(self.probs) or not self.values:
            raise LawError("law needs matching, non-empty atom lists")
        for v in self.values:
            if not (0.0 < v <= 1.0):
                raise LawError(f"atom value {v} outside (0, 1]")
        for i in range(len(self.values) - 1):
            if not self.values[i] > self.values[i + 1]:
                raise LawError("atom values must be strictly decreasing")
        for p in self.probs:
            if p < 0.0:
                raise LawError(f"negative atom probability {p}")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > PROB_TOL:
            raise LawError(f"atom probabilities sum to {total!r}, not 1")

    @property
    def natoms(self) -> int:
        return len(self.values)

    def cdf(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.probs, dtype=np.float64))

    def values_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def sample_from_uniform(self, u: float) -> float:
        """Map a uniform(0,1) draw to an atom via the cumulative table."""
        cdf = self.cdf()
        i = int(np.searchsorted(cdf, u, side="right"))
        return self.values[min(i, self.natoms - 1)]

    def window_mass(self, lo: Fraction, hi: Fraction) -> Fraction:
        """Exact P(lo <= value <= hi) over the stored float atoms."""
        total = Fraction(0)
        for v, p in zip(self.values, self.probs):
            fv = Fraction(v)
            if lo <= fv <= hi:
                total += Fraction(p)
        return total

    def min_value(self) -> float:
        return self.values[-1]

    def is_degenerate(self) -> bool:
        return self.natoms == 1


def uniform_law() -> ConductanceLaw:
    """The homogeneous environment: every edge weight equal to one."""
    return ConductanceLaw(id="uniform", values=(1.0,), probs=(1.0,))


def two_atom_law(weak_value: float, weak_prob: float, law_id: str | None = None) -> ConductanceLaw:
    if law_id is None:
        law_id = f"two-atom-{weak_value:g}-{weak_prob:g}"
    return ConductanceLaw(id=law_id, values=(1.0, weak_value), probs=(1.0 - weak_prob, weak_prob))


def family_exponent(d: int) -> Fraction:
    """Mass exponent theta = 1/(2(4d-2)) used by the weak-atom family."""
    if d < 1:
        raise LawError("dimension must be >= 1")
    return Fraction(1, 2 * (4 * d - 2))


def trap_scale_mass(law: ConductanceLaw, n: int, d: int) -> float:
    """P(omega >= 1/2) * P(1/n <= omega <= 2/n)^(4d-2), evaluated exactly.

    This is the probability that one prescribed edge is strong while the
    4d - 2 remaining edges around a fixed edge all land in the trap window
    at scale n; the product is carried out in rational arithmetic over the
    stored float atoms and only rounded on return.
    """
    frac = trap_scale_mass_exact(law, n, d)
    return float(frac)


def trap_scale_mass_exact(law: ConductanceLaw, n: int, d: int) -> Fraction:
    if n < MIN_TRAP_SCALE:
        raise LawError(f"trap scale must be >= {MIN_TRAP_SCALE}, got {n}")
    if d < 1:
        raise LawError("dimension must be >= 1")
    strong = law.window_mass(Fraction(1, 2), Fraction(1))
    window = law.window_mass(Fraction(1, n), Fraction(2, n))
    return strong * window ** (4 * d - 2)


def directed_trap_mass(law: ConductanceLaw, n: int, d: int) -> float:
    """P(A'_n(0)): the one-orientation trap probability at a fixed vertex.

    The trap edge is pinned to a single position/orientation, so the value
    is exactly the trap-scale mass product; the 2d-orientation union bound
    ``trap_scale_mass <= 2d * directed_trap_mass`` is then immediate.
    """
    return trap_scale_mass(law, n, d)


# ---------------------------------------------------------------------------
# theorem1 family construction


def _geometric_n_seq(base: int, count: int) -> list[int]:
    if base < 2 or count < 1:
        raise LawError("geometric scale sequence needs base >= 2, count >= 1")
    return [base ** l for l in range(1, count + 1)]


def _resolve_n_seq(spec: Mapping | None) -> list[int]:
    if spec is None:
        spec = {"kind": "geometric", "base": 4, "count": 3}
    kind = spec.get("kind", "explicit" if "values" in spec else "geometric")
    if kind == "geometric":
        seq = _geometric_n_seq(int(spec.get("base", 4)), int(spec.get("count", 3)))
    elif kind == "explicit":
        seq = [int(n) for n in spec["values"]]
    else:
        raise LawError(f"unknown n_seq kind {kind!r}")
    if any(n < MIN_TRAP_SCALE for n in seq):
        raise LawError(f"family scales must be >= {MIN_TRAP_SCALE}")
    if any(b <= a for a, b in zip(seq, seq[1:])):
        raise LawError("family scales must be strictly increasing")
    return seq


def _resolve_masses(lam_spec: Mapping | None, n_seq: Sequence[int], theta: Fraction) -> tuple[list[float], list[float]]:
    """Weak-atom masses m_l = lambda_{n_l}^(-theta) from a lambda spec.

    ``from_masses`` (the default) chooses slowly decaying masses
    m_l proportional to l^(-decay) with a fixed total, then defines
    lambda = m^(-1/theta); ``explicit`` takes lambda values directly;
    ``loglog`` is the textbook shape lambda_n = log log (n v 16), which is
    kept for completeness but rejected at load time whenever its masses are
    infeasibly large at desk scale.
    """
    if lam_spec is None:
        lam_spec = {"kind": "from_masses"}
    kind = lam_spec.get("kind")
    inv_theta = 1.0 / float(theta)
    if kind == "from_masses":
        total = float(lam_spec.get("total", 0.45))
        decay = float(lam_spec.get("decay", 1.0 / 15.0))
        if not (0.0 < total <= FAMILY_STRONG_FLOOR - 0.02):
            raise LawError("family mass total must lie in (0, 0.48]")
        raw = [l ** (-decay) for l in range(1, len(n_seq) + 1)]
        scale = total / math.fsum(raw)
        masses = [scale * r for r in raw]
        lams = [m ** (-inv_theta) for m in masses]
    elif kind == "explicit":
        lams = [float(v) for v in lam_spec["values"]]
        if len(lams) != len(n_seq):
            raise LawError("lambda list length must match n_seq")
        masses = [lam ** (-float(theta)) for lam in lams]
    elif kind == "loglog":
        lams = [math.log(math.log(max(n, 16))) for n in n_seq]
        masses = [lam ** (-float(theta)) for lam in lams]
    else:
        raise LawError(f"unknown lambda kind {kind!r}")
    if any(lam <= 1.0 for lam in lams):
        raise LawError("lambda values must exceed 1")
    return masses, lams


def family_law(
    d: int = 4,
    n_seq: Mapping | None = None,
    lam: Mapping | None = None,
    law_id: str = "theorem1",
) -> ConductanceLaw:
    """Build the strong-atom-plus-weak-scales law used by the anomaly study.

    Validation enforces the finite-sequence analogues of the asymptotic
    requirements: lambda strictly increasing, lambda^(-1/2) * log n
    non-decreasing, and total weak mass small enough that the strong atom
    keeps probability >= 1/2 with margin.
    """
    theta = family_exponent(d)
    scales = _resolve_n_seq(n_seq)
    masses, lams = _resolve_masses(lam, scales, theta)
    total_weak = math.fsum(masses)
    if total_weak > FAMILY_STRONG_FLOOR - 0.01:
        raise LawError(
            f"weak-atom mass {total_weak:.6g} leaves the strong atom below "
            f"{FAMILY_STRONG_FLOOR} + margin; thin the scale sequence or grow lambda"
        )
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise LawError("lambda must be strictly increasing along the scales")
    growth = [lam ** (-0.5) * math.log(n) for lam, n in zip(lams, scales)]
    if any(b < a * (1.0 - 1e-9) for a, b in zip(growth, growth[1:])):
        raise LawError("lambda^(-1/2) log n must be non-decreasing along the scales")
    values = [1.0] + [1.0 / n for n in scales]
    probs = [1.0 - total_weak] + masses
    meta = {
        "family": "theorem1",
        "d": d,
        "n_seq": scales,
        "lambda": lams,
        "theta": float(theta),
        "masses": masses,
    }
    return ConductanceLaw(id=law_id, values=tuple(values), probs=tuple(probs), meta=meta)


def family_bound_check(law: ConductanceLaw, d: int | None = None) -> list[dict]:
    """Exact verification of trap_scale_mass^2 >= lambda^(-1)/4 per scale."""
    if law.meta is None or law.meta.get("family") != "theorem1":
        raise LawError("law was not built by the theorem1 family constructor")
    dim = d if d is not None else int(law.meta["d"])
    rows = []
    for n, lam in zip(law.meta["n_seq"], law.meta["lambda"]):
        rho = trap_scale_mass_exact(law, int(n), dim)
        bound = Fraction(1, 4) / Fraction(float(lam))
        rows.append(
            {
                "n": int(n),
                "lambda": float(lam),
                "rho": float(rho),
                "rho_sq": float(rho * rho),
                "bound": float(bound),
                "holds": rho * rho >= bound,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# law file IO


def law_from_dict(obj: Mapping) -> ConductanceLaw:
    if "atoms" in obj:
        atoms = [(float(v), float(p)) for v, p in obj["atoms"]]
        atoms.sort(key=lambda vp: -vp[0])
        values = tuple(v for v, _ in atoms)
        probs = tuple(p for _, p in atoms)
        return ConductanceLaw(id=str(obj.get("id", "inline")), values=values, probs=probs)
    if obj.get("family") == "theorem1":
        return family_law(
            d=int(obj.get("d", 4)),
            n_seq=obj.get("n_seq"),
            lam=obj.get("lambda"),
            law_id=str(obj.get("id", "theorem1")),
        )
    raise LawError("law dict needs either 'atoms' or family: 'theorem1'")


def law_to_dict(law: ConductanceLaw) -> dict:
    return {"id": law.id, "atoms": [[v, p] for v, p in zip(law.values, law.probs)]}


def load_law(source: str | Path | Mapping) -> ConductanceLaw:
    """Load a law from a JSON file path or an already-parsed mapping."""
    if isinstance(source, Mapping):
        return law_from_dict(source)
    path = Path(source)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise LawError(f"cannot read law file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LawError(f"law file {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, Mapping):
        raise LawError(f"law file {path} must hold a JSON object")
    return law_from_dict(obj)
