"""Two-photon polarization tomography with Poissonian error propagation.

Both photons are projected onto each of {H, V, D, A, L, R}, giving 36 count
settings. The density matrix is recovered by maximizing the Poisson
likelihood over a Cholesky-style parameterization, which keeps the estimate
Hermitian, unit-trace and positive by construction. Counting-statistics error
bars come from re-sampling the observed counts and repeating the fit.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import rng as rngmod
from .errors import ConfigError, ReconstructionError, StreamFormatError
from .polarization import BASIS_HV, JonesState

PROJECTOR_LABELS = "HVDALR"

_SQ2 = 1.0 / math.sqrt(2.0)
_PROJECTOR_VECTORS = {
    "H": np.array([1.0, 0.0], dtype=np.complex128),
    "V": np.array([0.0, 1.0], dtype=np.complex128),
    "D": np.array([_SQ2, _SQ2], dtype=np.complex128),
    "A": np.array([_SQ2, -_SQ2], dtype=np.complex128),
    "L": np.array([_SQ2, _SQ2 * 1j], dtype=np.complex128),
    "R": np.array([_SQ2, -_SQ2 * 1j], dtype=np.complex128),
}

# Complementary projector pairs; each (a-pair, b-pair) group of four settings
# captures every photon, so its count sum estimates the per-setting total.
_BASIS_PAIRS = (("H", "V"), ("D", "A"), ("L", "R"))


def projector_state(label: str) -> JonesState:
    """Unit Jones vector for one analyzer setting (HV basis)."""
    if label not in _PROJECTOR_VECTORS:
        raise ConfigError(f"unknown projector label {label!r}; use one of {PROJECTOR_LABELS}")
    return JonesState(_PROJECTOR_VECTORS[label], BASIS_HV)


def setting_labels() -> list[tuple[str, str]]:
    """All 36 (first-party, second-party) settings in canonical order."""
    return [(a, b) for a in PROJECTOR_LABELS for b in PROJECTOR_LABELS]


def _setting_operators() -> np.ndarray:
    ops = np.empty((36, 4, 4), dtype=np.complex128)
    for idx, (a, b) in enumerate(setting_labels()):
        va = _PROJECTOR_VECTORS[a]
        vb = _PROJECTOR_VECTORS[b]
        ops[idx] = np.kron(np.outer(va, va.conj()), np.outer(vb, vb.conj()))
    return ops


_SETTING_OPS = _setting_operators()
# Row s dotted with rho.flatten() gives Tr(P_s @ rho).
_SETTING_TRACE = _SETTING_OPS.transpose(0, 2, 1).reshape(36, 16)


@dataclass(frozen=True)
class DensityMatrix:
    """4x4 Hermitian, unit-trace, positive-semidefinite matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128).reshape(4, 4)
        validate_density(m)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @staticmethod
    def from_pure(amplitudes: np.ndarray) -> "DensityMatrix":
        v = np.asarray(amplitudes, dtype=np.complex128).reshape(4)
        v = v / np.linalg.norm(v)
        return DensityMatrix(np.outer(v, v.conj()))


def validate_density(matrix: np.ndarray, name: str = "rho"):
    m = np.asarray(matrix, dtype=np.complex128)
    if m.shape != (4, 4):
        raise ConfigError(f"{name} must be 4x4")
    if float(np.abs(m - m.conj().T).max()) > 1e-10:
        raise ConfigError(f"{name} is not Hermitian within 1e-10")
    if abs(float(np.trace(m).real) - 1.0) > 1e-10 or abs(float(np.trace(m).imag)) > 1e-10:
        raise ConfigError(f"{name} trace differs from 1 by more than 1e-10")
    if float(np.linalg.eigvalsh(m).min()) < -1e-10:
        raise ConfigError(f"{name} has an eigenvalue below -1e-10")


def depolarize(rho: DensityMatrix, p: float) -> DensityMatrix:
    """Mix a fraction p of the maximally mixed state into rho."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError("depolarization must be in [0, 1]")
    return DensityMatrix((1.0 - p) * rho.matrix + p * np.eye(4) / 4.0)


@dataclass(frozen=True)
class CountsTable:
    """36 setting counts (first-party-major order) plus acquisition metadata."""

    counts: np.ndarray
    acquisition_duration_s: float = 0.0
    accidental_rate_per_setting: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64).reshape(36)
        if np.any(c < 0):
            raise ConfigError("counts must be non-negative")
        if self.accidental_rate_per_setting < 0:
            raise ConfigError("accidental_rate_per_setting must be >= 0")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    def count(self, alice: str, bob: str) -> int:
        ia = PROJECTOR_LABELS.index(alice)
        ib = PROJECTOR_LABELS.index(bob)
        return int(self.counts[6 * ia + ib])


def expected_counts(
    rho: DensityMatrix | np.ndarray, n_per_setting: float, accidentals: float = 0.0
) -> np.ndarray:
    """Mean counts per setting: n * <P_a x P_b> + accidentals."""
    if n_per_setting <= 0:
        raise ConfigError("n_per_setting must be > 0")
    if accidentals < 0:
        raise ConfigError("accidentals must be >= 0")
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=np.complex128)
    probs = (_SETTING_TRACE @ m.reshape(16)).real
    return n_per_setting * np.clip(probs, 0.0, None) + accidentals


def sample_counts(
    expected: np.ndarray,
    seed: int,
    accidental_rate_per_setting: float = 0.0,
    acquisition_duration_s: float = 0.0,
) -> CountsTable:
    """Independent Poisson draws around the expected counts."""
    means = np.asarray(expected, dtype=np.float64).reshape(36)
    if np.any(means < 0):
        raise ConfigError("expected counts must be >= 0")
    draws = np.random.default_rng(seed).poisson(means)
    return CountsTable(draws, acquisition_duration_s, accidental_rate_per_setting)


def _estimate_n_per_setting(table: CountsTable) -> float:
    acc = table.accidental_rate_per_setting
    sums = []
    for a_pair in _BASIS_PAIRS:
        for b_pair in _BASIS_PAIRS:
            total = sum(table.count(a, b) for a in a_pair for b in b_pair)
            sums.append(total - 4.0 * acc)
    return max(float(np.mean(sums)), 1.0)


_LOWER_IDX = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]


def _rho_from_params(t: np.ndarray) -> np.ndarray:
    T = np.zeros((4, 4), dtype=np.complex128)
    T[np.diag_indices(4)] = t[:4]
    for i, (r, c) in enumerate(_LOWER_IDX):
        T[r, c] = t[4 + 2 * i] + 1j * t[5 + 2 * i]
    rho = T.conj().T @ T
    return rho / np.trace(rho).real


def _params_from_rho(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 1e-6, None)
    psd = (v * w) @ v.conj().T
    psd /= np.trace(psd).real
    # rho = T^dagger T needs the upper-times-lower factorization; flipping the
    # matrix turns the standard Cholesky factor into the one required.
    flip = np.eye(4)[::-1]
    lower = np.linalg.cholesky(flip @ psd @ flip)
    T = (flip @ lower @ flip).conj().T
    t = np.zeros(16)
    t[:4] = np.real(np.diag(T))
    for i, (r, c) in enumerate(_LOWER_IDX):
        t[4 + 2 * i] = T[r, c].real
        t[5 + 2 * i] = T[r, c].imag
    return t


def _linear_inversion(table: CountsTable, n_hat: float) -> np.ndarray:
    """Least-squares Hermitian estimate used to seed the likelihood search."""
    probs = (table.counts - table.accidental_rate_per_setting) / n_hat
    # Real basis of Hermitian 4x4 matrices: E_kk, symmetric and antisymmetric
    # off-diagonal combinations.
    basis = []
    for k in range(4):
        m = np.zeros((4, 4), dtype=np.complex128)
        m[k, k] = 1.0
        basis.append(m)
    for r in range(4):
        for c in range(r + 1, 4):
            m = np.zeros((4, 4), dtype=np.complex128)
            m[r, c] = m[c, r] = 1.0
            basis.append(m)
            m = np.zeros((4, 4), dtype=np.complex128)
            m[r, c] = -1j
            m[c, r] = 1j
            basis.append(m)
    design = np.array(
        [[(p.T.reshape(16) @ b.reshape(16)).real for b in basis] for p in _SETTING_OPS]
    )
    coef, *_ = np.linalg.lstsq(design, probs, rcond=None)
    rho = sum(c * b for c, b in zip(coef, basis))
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-12:
        return np.eye(4, dtype=np.complex128) / 4.0
    return rho / tr


def mle_reconstruct(counts: CountsTable, max_evals: int = 100_000) -> DensityMatrix:
    """Density matrix maximizing the Poisson likelihood of the 36 counts.

    The per-setting total is estimated from the complementary basis-pair sums,
    not configured. The search runs over the 16 real Cholesky parameters with
    numerically estimated gradients.
    """
    if counts.counts.sum() <= 0:
        raise ReconstructionError("all counts are zero; nothing to reconstruct")
    n_hat = _estimate_n_per_setting(counts)
    acc = counts.accidental_rate_per_setting
    observed = counts.counts.astype(np.float64)

    def negative_log_likelihood(t: np.ndarray) -> float:
        rho = _rho_from_params(t)
        mu = n_hat * np.clip((_SETTING_TRACE @ rho.reshape(16)).real, 0.0, None) + acc
        mu = np.clip(mu, 1e-10, None)
        return float(np.sum(mu - observed * np.log(mu)))

    t0 = _params_from_rho(_linear_inversion(counts, n_hat))
    options = {"maxfun": max_evals, "maxiter": max_evals, "ftol": 1e-12, "gtol": 1e-10}
    result = optimize.minimize(
        negative_log_likelihood, t0, method="L-BFGS-B", options=options
    )
    if not result.success:
        # One restart from the best point recovers most line-search stalls.
        result = optimize.minimize(
            negative_log_likelihood, result.x, method="L-BFGS-B", options=options
        )
    rho = _rho_from_params(result.x)
    # Scrub parameterization round-off before the strict type checks.
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    if not result.success:
        raise ReconstructionError(
            f"likelihood search did not converge: {result.message}",
            best_rho=rho,
            objective=float(result.fun),
        )
    return DensityMatrix(rho)


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(matrix)
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w) @ v.conj().T


def fidelity(rho: DensityMatrix, rho0: DensityMatrix) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) rho0 sqrt(rho)))^2.

    Evaluated as the squared nuclear norm of sqrt(rho) @ sqrt(rho0), which
    has the same value but does not take square roots of noisy near-zero
    eigenvalues, keeping the result symmetric to machine precision.
    """
    a = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    b = rho0.matrix if isinstance(rho0, DensityMatrix) else np.asarray(rho0)
    validate_density(a, "rho")
    validate_density(b, "rho0")
    singulars = np.linalg.svd(_sqrt_psd(a) @ _sqrt_psd(b), compute_uv=False)
    return float(singulars.sum() ** 2)


@dataclass(frozen=True)
class FidelityDistribution:
    """Monte Carlo fidelity samples with a 95% percentile interval."""

    samples: np.ndarray
    mean: float
    ci95_low: float
    ci95_high: float

    @staticmethod
    def from_samples(samples: np.ndarray) -> "FidelityDistribution":
        s = np.asarray(samples, dtype=np.float64)
        return FidelityDistribution(
            samples=s,
            mean=float(s.mean()),
            ci95_low=float(np.percentile(s, 2.5)),
            ci95_high=float(np.percentile(s, 97.5)),
        )

    def to_json(self) -> dict:
        return {
            "samples": [float(x) for x in self.samples],
            "mean": self.mean,
            "ci95_low": self.ci95_low,
            "ci95_high": self.ci95_high,
        }


def monte_carlo_fidelity(
    counts_before: CountsTable,
    counts_after: CountsTable,
    reps: int,
    seed: int,
    threads: int = 1,
) -> FidelityDistribution:
    """Propagate counting noise through the full reconstruction pipeline.

    Each repetition re-draws both tables from Poisson distributions whose
    means are the observed counts, reconstructs both density matrices, and
    records their mutual fidelity. Failed reconstructions are skipped; more
    than 20% failures aborts the run.
    """
    if reps < 2:
        raise ConfigError("reps must be >= 2")

    def one_rep(r: int) -> float | None:
        s1 = rngmod.child_seed(seed, rngmod.TOMO_MONTE_CARLO, r, 0)
        s2 = rngmod.child_seed(seed, rngmod.TOMO_MONTE_CARLO, r, 1)
        resampled_before = sample_counts(
            counts_before.counts.astype(np.float64),
            s1,
            counts_before.accidental_rate_per_setting,
        )
        resampled_after = sample_counts(
            counts_after.counts.astype(np.float64),
            s2,
            counts_after.accidental_rate_per_setting,
        )
        try:
            rho_b = mle_reconstruct(resampled_before)
            rho_a = mle_reconstruct(resampled_after)
        except ReconstructionError:
            return None
        return fidelity(rho_b, rho_a)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_rep, range(reps)))
    else:
        results = [one_rep(r) for r in range(reps)]

    samples = [f for f in results if f is not None]
    failures = reps - len(samples)
    if failures > 0.2 * reps:
        raise ReconstructionError(
            f"{failures}/{reps} Monte Carlo repetitions failed to reconstruct"
        )
    return FidelityDistribution.from_samples(np.array(samples))


# --- serialization --------------------------------------------------------


def write_counts_csv(table: CountsTable, path):
    lines = ["alice,bob,counts"]
    for idx, (a, b) in enumerate(setting_labels()):
        lines.append(f"{a},{b},{int(table.counts[idx])}")
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_counts_csv(path) -> CountsTable:
    values: dict[tuple[str, str], int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().replace(" ", "")
        if header != "alice,bob,counts":
            raise StreamFormatError(f"bad counts header at line 1 in {path}: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                a, b, c = parts[0], parts[1], int(parts[2])
            except (IndexError, ValueError):
                raise StreamFormatError(f"malformed row at line {lineno} in {path}: {line!r}")
            if a not in PROJECTOR_LABELS or b not in PROJECTOR_LABELS:
                raise StreamFormatError(f"unknown labels at line {lineno} in {path}: {line!r}")
            values[(a, b)] = c
    missing = [lbl for lbl in setting_labels() if lbl not in values]
    if missing:
        raise StreamFormatError(f"counts file {path} is missing {len(missing)} settings")
    counts = np.array([values[lbl] for lbl in setting_labels()], dtype=np.int64)
    return CountsTable(counts)


def density_to_json(rho: DensityMatrix) -> dict:
    return {
        "basis": BASIS_HV,
        "matrix": [
            [[float(z.real), float(z.imag)] for z in row] for row in rho.matrix
        ],
    }


def density_from_json(payload: dict) -> DensityMatrix:
    rows = payload["matrix"]
    m = np.array([[complex(re, im) for re, im in row] for row in rows])
    return DensityMatrix(m)
