"""Ground-truth Shapley computation, Monte-Carlo estimation, KernelSHAP,
and axiom verification.

Subsets are bitmasks over ``range(n)``. A value function is any object with
an integer attribute ``n`` that is callable on a mask; two optional fast
paths are recognized: ``eval_masks(masks) -> array`` for batched subset
evaluation and ``chain_values(perms) -> (B, n+1)`` for whole prefix chains
(the model produces an entire chain in one causally masked pass).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import SasanetModel

EXHAUSTIVE_LIMIT = 10


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    phi: np.ndarray
    se: np.ndarray
    n_permutations: int
    mode: str  # "exhaustive" | "montecarlo"


@dataclass(frozen=True)
class KernelShapResult:
    phi: np.ndarray
    n_evaluations: int
    enumerated: bool
    used_ridge: bool


class TabularGame:
    """Value function backed by a dense table indexed by subset bitmask."""

    provenance = "tabular-game"

    def __init__(self, n: int, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (1 << n,):
            raise OracleError(f"need {1 << n} values for n={n}, got {values.shape}")
        self.n = n
        self.values = values

    def __call__(self, mask: int) -> float:
        return float(self.values[mask])

    def eval_masks(self, masks) -> np.ndarray:
        return self.values[np.asarray(masks, dtype=np.int64)]

    def chain_values(self, perms: np.ndarray) -> np.ndarray:
        perms = np.asarray(perms, dtype=np.int64)
        masks = np.cumsum(1 << perms, axis=1)  # bits are distinct, so sum == or
        chain = np.empty((perms.shape[0], perms.shape[1] + 1))
        chain[:, 0] = self.values[0]
        chain[:, 1:] = self.values[masks]
        return chain


def random_game(n: int, seed: int, scale: float = 1.0) -> TabularGame:
    rng = np.random.default_rng(seed)
    values = rng.uniform(-scale, scale, size=1 << n)
    values[0] = rng.uniform(-scale, scale)
    return TabularGame(n, values)


def linear_game(coeffs) -> TabularGame:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    n = coeffs.size
    masks = np.arange(1 << n)
    members = (masks[:, None] >> np.arange(n)) & 1
    return TabularGame(n, members @ coeffs)


class ModelValueFunction:
    """The model's own output on the unmasked subset; the empty set gives
    the bias, which makes the efficiency identity exact."""

    provenance = "sasanet-native"

    def __init__(self, model: SasanetModel, values_row: np.ndarray):
        self.model = model
        self.values_row = np.asarray(values_row, dtype=np.float64)
        self.n = model.n_features
        self._cache: dict[int, float] = {0: model.phi0}

    @staticmethod
    def _mask_to_indices(mask: int, n: int) -> list[int]:
        return [i for i in range(n) if mask >> i & 1]

    def __call__(self, mask: int) -> float:
        hit = self._cache.get(mask)
        if hit is not None:
            return hit
        val = self.model.attribution(self.values_row, self._mask_to_indices(mask, self.n)).f
        self._cache[mask] = val
        return val

    def eval_masks(self, masks) -> np.ndarray:
        masks = [int(m) for m in masks]
        missing = sorted({m for m in masks if m not in self._cache})
        by_size: dict[int, list[int]] = {}
        for m in missing:
            by_size.setdefault(bin(m).count("1"), []).append(m)
        for size, group in by_size.items():
            ids = np.array([self._mask_to_indices(m, self.n) for m in group], dtype=np.int64)
            _, f = self.model.attribution_batch(ids, self.values_row[ids])
            for m, val in zip(group, f):
                self._cache[m] = float(val)
        return np.array([self._cache[m] for m in masks])

    def chain_values(self, perms: np.ndarray) -> np.ndarray:
        return self.model.prefix_values_perms(self.values_row, perms)


class BackgroundValueFunction:
    """Post-hoc style value function for fixed-input use: absent features are
    replaced by background rows and the full-set outputs averaged."""

    provenance = "background-replacement"

    def __init__(self, model: SasanetModel, values_row: np.ndarray, background: np.ndarray):
        background = np.asarray(background, dtype=np.float64)
        if background.ndim != 2 or background.shape[0] == 0:
            raise OracleError("background must be a non-empty (rows, n_features) array")
        self.model = model
        self.values_row = np.asarray(values_row, dtype=np.float64)
        self.background = background
        self.n = model.n_features
        self._ids = np.tile(np.arange(self.n), (background.shape[0], 1))
        self._cache: dict[int, float] = {}

    def __call__(self, mask: int) -> float:
        hit = self._cache.get(mask)
        if hit is not None:
            return hit
        rows = self.background.copy()
        present = [i for i in range(self.n) if mask >> i & 1]
        rows[:, present] = self.values_row[present]
        _, f = self.model.attribution_batch(self._ids, rows)
        val = float(np.mean(f))
        self._cache[mask] = val
        return val

    def eval_masks(self, masks) -> np.ndarray:
        return np.array([self(int(m)) for m in masks])


# ---------------------------------------------------------------------------
# permutation-average Shapley
# ---------------------------------------------------------------------------

def _chain_contributions(v, perms: np.ndarray) -> np.ndarray:
    """(M, n) contributions per feature (feature order) from ordered index rows."""
    perms = np.asarray(perms, dtype=np.int64)
    m, n = perms.shape
    if hasattr(v, "chain_values"):
        chain = np.asarray(v.chain_values(perms))
        marg = np.diff(chain, axis=1)
    else:
        marg = np.empty((m, n))
        for r in range(m):
            mask = 0
            prev = v(0)
            for k, i in enumerate(perms[r]):
                mask |= 1 << int(i)
                cur = v(mask)
                marg[r, k] = cur - prev
                prev = cur
    out = np.empty_like(marg)
    rows = np.arange(m)[:, None]
    out[rows, perms] = marg
    return out


def shapley_exhaustive(v, n: int | None = None) -> OracleResult:
    """Exact average marginal contribution over all n! join orders."""
    n = n if n is not None else v.n
    if n > EXHAUSTIVE_LIMIT:
        raise OracleError(f"n={n} means {math.factorial(n)} permutations; "
                          "use shapley_montecarlo instead")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    contribs = _chain_contributions(v, perms)
    return OracleResult(contribs.mean(axis=0), np.zeros(n), perms.shape[0], "exhaustive")


def shapley_montecarlo(v, n: int | None = None, n_perms: int = 10_000,
                       seed: int = 0) -> OracleResult:
    """Sampled-permutation estimate with per-feature standard errors.

    A budget covering all n! orders upgrades to the exhaustive computation
    (flagged in the result, standard errors exactly zero).
    """
    n = n if n is not None else v.n
    if n_perms < 1:
        raise OracleError(f"n_perms must be >= 1, got {n_perms}")
    if n <= EXHAUSTIVE_LIMIT and n_perms >= math.factorial(n):
        return shapley_exhaustive(v, n)
    rng = np.random.default_rng(seed)
    perms = np.stack([rng.permutation(n) for _ in range(n_perms)])
    contribs = _chain_contributions(v, perms)
    phi = contribs.mean(axis=0)
    if n_perms > 1:
        se = contribs.std(axis=0, ddof=1) / math.sqrt(n_perms)
    else:
        se = np.full(n, np.nan)
    return OracleResult(phi, se, n_perms, "montecarlo")


def direct_permutation_estimate(contribs: np.ndarray) -> np.ndarray:
    """Plain mean of realized contributions over sampled permutations."""
    return np.asarray(contribs).mean(axis=0)


def positional_permutation_estimate(perms: np.ndarray, slot_deltas: np.ndarray) -> np.ndarray:
    """Slot-stratified estimate: average the slot-conditioned means.

    ``slot_deltas[o, k]`` is the contribution realized at slot k of sampled
    permutation o (the feature there is ``perms[o, k]``). Slots a feature
    never visited fall back to its overall mean so the estimate stays
    defined at small budgets.
    """
    perms = np.asarray(perms, dtype=np.int64)
    slot_deltas = np.asarray(slot_deltas, dtype=np.float64)
    m, n = perms.shape
    sums = np.zeros((n, n))
    counts = np.zeros((n, n))
    np.add.at(sums, (perms.reshape(-1), np.tile(np.arange(n), m)), slot_deltas.reshape(-1))
    np.add.at(counts, (perms.reshape(-1), np.tile(np.arange(n), m)), 1.0)
    overall = np.zeros(n)
    np.add.at(overall, perms.reshape(-1), slot_deltas.reshape(-1))
    overall /= np.maximum(counts.sum(axis=1), 1.0)
    with np.errstate(invalid="ignore"):
        cond = np.where(counts > 0, sums / np.maximum(counts, 1.0), overall[:, None])
    return cond.mean(axis=1)


# ---------------------------------------------------------------------------
# KernelSHAP
# ---------------------------------------------------------------------------

def shapley_kernel_weight(n: int, size: int) -> float:
    if size <= 0 or size >= n:
        raise OracleError("kernel weight is defined for proper non-empty subsets only")
    return (n - 1) / (math.comb(n, size) * size * (n - size))


def _sample_coalitions(n: int, budget: int, rng: np.random.Generator) -> list[int]:
    """Paired sampling: draw a size from the kernel mass, a subset of that
    size, and include its complement as well."""
    sizes = np.arange(1, n)
    mass = (n - 1) / (sizes * (n - sizes))
    mass = mass / mass.sum()
    chosen: dict[int, None] = {}
    full = (1 << n) - 1
    attempts = 0
    while len(chosen) < budget and attempts < budget * 50:
        attempts += 1
        s = int(rng.choice(sizes, p=mass))
        members = rng.choice(n, size=s, replace=False)
        mask = 0
        for i in members:
            mask |= 1 << int(i)
        chosen.setdefault(mask, None)
        if len(chosen) < budget:
            chosen.setdefault(full ^ mask, None)
    return list(chosen.keys())


def kernel_shap(v, n: int | None = None, n_coalitions: int | None = None,
                seed: int = 0) -> KernelShapResult:
    """Kernel-weighted least squares over coalitions, efficiency enforced.

    With a budget covering all proper non-empty coalitions the fit is exact
    (it coincides with the exhaustive Shapley value); otherwise coalitions
    are paired-sampled. A rank-deficient design falls back to ridge
    (eps = 1e-8) and is flagged in the result.
    """
    n = n if n is not None else v.n
    if n_coalitions is None:
        n_coalitions = 2 * n + 64
    if n_coalitions < n + 2:
        raise OracleError(f"need at least n+2={n + 2} coalitions, got {n_coalitions}")
    full = (1 << n) - 1
    all_proper = (1 << n) - 2
    if n_coalitions >= all_proper and n <= 24:
        masks = list(range(1, full))
        enumerated = True
    else:
        rng = np.random.default_rng(seed)
        masks = _sample_coalitions(n, n_coalitions, rng)
        enumerated = False

    if hasattr(v, "eval_masks"):
        vals = np.asarray(v.eval_masks(masks), dtype=np.float64)
        v0 = float(v.eval_masks([0])[0])
        v_full = float(v.eval_masks([full])[0])
    else:
        vals = np.array([v(m) for m in masks], dtype=np.float64)
        v0 = v(0)
        v_full = v(full)

    z = ((np.asarray(masks, dtype=np.int64)[:, None] >> np.arange(n)) & 1).astype(np.float64)
    sizes = z.sum(axis=1).astype(int)
    w = np.array([shapley_kernel_weight(n, s) for s in sizes])

    # eliminate the efficiency constraint: phi_{n-1} = total - sum(others)
    total = v_full - v0
    x = z[:, :-1] - z[:, -1:]
    target = vals - v0 - z[:, -1] * total
    sw = np.sqrt(w)
    a = x * sw[:, None]
    b = target * sw
    used_ridge = False
    solution, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < n - 1:
        used_ridge = True
        gram = a.T @ a + 1e-8 * np.eye(n - 1)
        solution = np.linalg.solve(gram, a.T @ b)
    phi = np.empty(n)
    phi[:-1] = solution
    phi[-1] = total - solution.sum()
    return KernelShapResult(phi, len(masks) + 2, enumerated, used_ridge)


def kernel_shap_for_model(model: SasanetModel, values_row: np.ndarray,
                          n_coalitions: int | None = None, seed: int = 0,
                          background: np.ndarray | None = None) -> KernelShapResult:
    if background is None:
        v = ModelValueFunction(model, values_row)
    else:
        v = BackgroundValueFunction(model, values_row, background)
    return kernel_shap(v, v.n, n_coalitions, seed)


# ---------------------------------------------------------------------------
# axiom verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AxiomCheck:
    name: str
    residual: float
    passed: bool


@dataclass(frozen=True)
class AxiomReport:
    checks: tuple[AxiomCheck, ...]
    tolerance: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "checks": [{"name": c.name, "residual": c.residual, "passed": c.passed}
                       for c in self.checks],
            "all_passed": self.all_passed,
        }


def _null_extension(v, n: int, null_feature: int) -> TabularGame:
    """Game where one feature never changes the value."""
    masks = np.arange(1 << n)
    stripped = masks & ~(1 << null_feature)
    if isinstance(v, TabularGame):
        return TabularGame(n, v.values[stripped])
    return TabularGame(n, np.array([v(int(m)) for m in stripped]))


def _twin_extension(v, n: int, i: int, j: int) -> TabularGame:
    """Game where features i and j play identical roles (j acts as i)."""
    masks = np.arange(1 << n)
    has_j = (masks >> j) & 1
    mapped = np.where(has_j.astype(bool), (masks & ~(1 << j)) | (1 << i), masks)
    if isinstance(v, TabularGame):
        return TabularGame(n, v.values[mapped])
    return TabularGame(n, np.array([v(int(m)) for m in mapped]))


def verify_axioms(v, n: int | None = None, tol: float = 1e-10, seed: int = 0) -> AxiomReport:
    """Check efficiency, linearity, nullity, and symmetry on the exhaustive
    Shapley values of the given game and games derived from it."""
    n = n if n is not None else v.n
    if n > 8:
        raise OracleError("axiom verification enumerates permutations; keep n <= 8")
    rng = np.random.default_rng(seed)
    res = shapley_exhaustive(v, n)
    full = (1 << n) - 1

    eff = abs(res.phi.sum() - (v(full) - v(0)))

    partner = random_game(n, seed=int(rng.integers(1 << 30)))
    alpha, beta = 2.0, -1.0
    if isinstance(v, TabularGame):
        base_vals = v.values
    else:
        base_vals = np.array([v(m) for m in range(1 << n)])
    combo = TabularGame(n, alpha * base_vals + beta * partner.values)
    phi_partner = shapley_exhaustive(partner, n).phi
    phi_combo = shapley_exhaustive(combo, n).phi
    lin = float(np.max(np.abs(phi_combo - (alpha * res.phi + beta * phi_partner))))

    null_i = int(rng.integers(n))
    nul = abs(shapley_exhaustive(_null_extension(v, n, null_i), n).phi[null_i])

    i, j = rng.choice(n, size=2, replace=False)
    phi_twin = shapley_exhaustive(_twin_extension(v, n, int(i), int(j)), n).phi
    sym = abs(phi_twin[int(i)] - phi_twin[int(j)])

    checks = tuple(AxiomCheck(name, float(r), bool(r < tol)) for name, r in
                   (("efficiency", eff), ("linearity", lin), ("nullity", nul), ("symmetry", sym)))
    return AxiomReport(checks, tol)


# ---------------------------------------------------------------------------
# self-attribution vs ground truth
# ---------------------------------------------------------------------------

def attribution_rmse(model: SasanetModel, values: np.ndarray, n_perms: int = 10_000,
                     seed: int = 0) -> tuple[float, list[dict]]:
    """RMSE between self-attribution and the permutation oracle on the
    model's own value function, over samples and features. Permutations are
    sampled independently per sample from per-sample child seeds."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n = model.n_features
    ids = np.arange(n).reshape(1, -1)
    sq_sum = 0.0
    details = []
    for s, row in enumerate(values):
        res = shapley_montecarlo(ModelValueFunction(model, row), n, n_perms,
                                 seed=np.random.SeedSequence([seed, s]).generate_state(1)[0])
        phi_self, _ = model.attribution_batch(ids, row.reshape(1, -1))
        err = phi_self[0] - res.phi
        sq_sum += float(np.sum(err ** 2))
        details.append({"sample": s, "oracle_phi": res.phi, "self_phi": phi_self[0],
                        "se": res.se, "mode": res.mode})
    return math.sqrt(sq_sum / (values.shape[0] * n)), details
