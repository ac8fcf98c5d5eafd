"""Monte-Carlo estimates of the volume fraction of detected steerable states.

States are drawn by hit-and-run chains (one per ``chains``), every sample is
classified by a batched detector, and the hit fraction is reported with a
batch-means standard error.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy

from .das import MU_MAX, NPT_TOL, batch_das_tau, batch_min_pt_eigenvalues
from .errors import ConfigurationError
from .hermitian import gellmann_basis, trace_norms
from .povm import NMParams, build_povm, gamma
from .sampler import HitAndRunChain, SamplerConfig, traceless_to_density
from .steering import (
    VIOLATION_TOL,
    ZERO_VARIANCE,
    CorrelationKernel,
    batch_purities,
    maximize_weighted_trace_norm,
)

log = logging.getLogger(__name__)

DETECTORS = ("loo", "loo-rescaled", "povm", "das-npt")
BATCHES_PER_CHAIN = 64

# (dA, dB) -> (ratio, error)
PUBLISHED_TABLE1 = {
    (2, 2): (5.011e-2, 1.5e-4),
    (2, 3): (1.92e-5, 4.1e-6),
    (3, 2): (5.72e-5, 6.4e-6),
    (3, 3): (0.0, 0.0),
}
# dB -> (ratio, error), dA = 2
PUBLISHED_TABLE2 = {
    2: (0.05167, 1.5e-4),
    3: (0.10936, 3.4e-4),
    4: (0.17278, 5.6e-4),
    5: (0.24009, 8.3e-4),
    6: (0.3119, 1.3e-3),
    7: (0.3842, 1.5e-3),
}
TABLE1_DEFAULT = ((2, 2),)
TABLE2_DEFAULT = (2, 3, 4)
SMALL_ENTRY = 1e-4
SMALL_ENTRY_LIMIT = 1e-3
ABS_TOL = 0.01


def versions() -> dict:
    from . import __version__
    from .sampler import BACKEND

    return {
        "nmsteer": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "kernel": BACKEND,
    }


@dataclass(frozen=True)
class EstimationJob:
    dA: int
    dB: int
    detector: str
    samples: int
    seed: int = 0
    chains: int = 1
    burn_in: int | None = None
    thinning: int | None = None
    povm_a: NMParams | None = None
    povm_b: NMParams | None = None
    rescale_restarts: int = 3
    backend: str | None = None

    def __post_init__(self):
        if self.detector not in DETECTORS:
            raise ConfigurationError(f"unknown detector {self.detector!r}; choose from {', '.join(DETECTORS)}")
        if self.dA < 2 or self.dB < 2:
            raise ConfigurationError("factor dimensions must be >= 2")
        if self.detector == "das-npt" and self.dA != 2:
            raise ConfigurationError(f"das-npt needs dA = 2, got dA = {self.dA}")
        if self.samples < 1:
            raise ConfigurationError("samples must be >= 1")
        if self.chains < 1:
            raise ConfigurationError("chains must be >= 1")
        if self.detector == "povm":
            a = self.povm_a or default_povm_params(self.dA)
            b = self.povm_b or default_povm_params(self.dB)
            for side, p, d in (("Alice", a, self.dA), ("Bob", b, self.dB)):
                if p.d != d:
                    raise ConfigurationError(f"{side}'s POVM has d={p.d}, expected {d}")
                if not p.informationally_complete:
                    raise ConfigurationError(f"{side}'s POVM {p} is not informationally complete")
            object.__setattr__(self, "povm_a", a)
            object.__setattr__(self, "povm_b", b)
        SamplerConfig(self.dim, self.seed, self.burn_in, self.thinning)

    @property
    def dim(self) -> int:
        return self.dA * self.dB

    def chain_sizes(self) -> list[int]:
        q, r = divmod(self.samples, self.chains)
        return [q + (c < r) for c in range(self.chains)]

    def chain_seed(self, c: int) -> int:
        """Chain ``c``'s sampler seed; a single chain uses the job seed itself."""
        if self.chains == 1:
            return self.seed
        child = np.random.SeedSequence(self.seed).spawn(self.chains)[c]
        return int(child.generate_state(1, np.uint64)[0])

    def sampler_config(self, c: int) -> SamplerConfig:
        return SamplerConfig(self.dim, self.chain_seed(c), self.burn_in, self.thinning)

    def as_dict(self) -> dict:
        d = asdict(self)
        for k in ("povm_a", "povm_b"):
            if d[k] is not None:
                d[k] = {"d": d[k]["d"], "N": d[k]["N"], "M": d[k]["M"], "x": d[k]["x"]}
        return d


def default_povm_params(d: int) -> NMParams:
    """GSIC family ``(1, d^2)`` at the default purity."""
    return NMParams.at(d, 1, d * d)


@dataclass
class RatioEstimate:
    ratio: float
    stderr: float
    hits: int
    samples: int
    detector: str
    seed: int
    wall_time: float
    binomial_stderr: float = 0.0
    batch_stderr: float = 0.0
    chains: int = 1
    backend: str = ""
    repairs: int = 0
    extras: dict = field(default_factory=dict)
    job: dict = field(default_factory=dict)

    def record(self) -> dict:
        out = asdict(self)
        out["versions"] = versions()
        return out


class _Detector:
    """Batched classifier for one job; returns a boolean hit per state."""

    def __init__(self, job: EstimationJob):
        self.job = job
        dA, dB = job.dA, job.dB
        self.kernel = None
        self.scale = 1.0
        if job.detector in ("loo", "loo-rescaled"):
            self.kernel = CorrelationKernel(gellmann_basis(dA), gellmann_basis(dB), dA, dB)
        elif job.detector == "povm":
            pa = build_povm(job.povm_a, seed=job.seed)
            pb = build_povm(job.povm_b, seed=job.seed + 1)
            self.kernel = CorrelationKernel(pa, pb, dA, dB)
            self.scale = math.sqrt(gamma(job.povm_a) * gamma(job.povm_b))
        if job.detector == "loo-rescaled":
            G = gellmann_basis(dA).elements
            self._g1 = G
            self._g2 = np.einsum("iab,ibc->iac", G, G)
        self.extra_counts = {"loo_hits": 0, "prescreened": 0, "optimized": 0} \
            if job.detector == "loo-rescaled" else {}

    def __call__(self, rhos, chain: int, offset: int) -> np.ndarray:
        job = self.job
        if job.detector == "das-npt":
            tau = batch_das_tau(rhos, job.dB, MU_MAX)
            return batch_min_pt_eigenvalues(tau, 2, job.dB) < NPT_TOL
        C = self.kernel(rhos)
        pa, pb = batch_purities(rhos, job.dA, job.dB)
        rhs = self.scale * np.sqrt(np.maximum(job.dA - pa, 0) * np.maximum(1 - pb, 0))
        lhs = trace_norms(C)
        hit = lhs - rhs > VIOLATION_TOL
        if job.detector != "loo-rescaled":
            return hit
        self.extra_counts["loo_hits"] += int(hit.sum())
        return self._rescaled(rhos, C, pb, hit, chain, offset)

    def _rescaled(self, rhos, C, pb, hit, chain, offset):
        job = self.job
        r = rhos.reshape(-1, job.dA, job.dB, job.dA, job.dB)
        ra = np.einsum("nijkj->nik", r)
        first = np.einsum("iab,nba->ni", self._g1, ra).real
        second = np.einsum("iab,nba->ni", self._g2, ra).real
        v = np.maximum(second - first**2, 0.0)
        bob = np.sqrt(np.maximum(1 - pb, 0))
        out = hit.copy()
        for k in np.flatnonzero(~hit):
            keep = v[k] > ZERO_VARIANCE
            Ct = C[k][keep] / np.sqrt(v[k][keep])[:, None]
            # the optimum never exceeds the Frobenius norm of Ct
            if np.linalg.norm(Ct) <= bob[k]:
                self.extra_counts["prescreened"] += 1
                continue
            self.extra_counts["optimized"] += 1
            rng = np.random.default_rng([job.seed, chain, offset + int(k)])
            _, best = maximize_weighted_trace_norm(Ct, job.rescale_restarts, rng=rng)
            w = math.sqrt(v[k].sum())
            out[k] = w * best - w * bob[k] > VIOLATION_TOL
        return out


def _run_chain(job: EstimationJob, c: int):
    n = job.chain_sizes()[c]
    hits = np.zeros(n, dtype=bool)
    if n == 0:
        return hits, 0, "", {}
    detector = _Detector(job)
    chain = HitAndRunChain(job.sampler_config(c), backend=job.backend)
    pos = 0
    for block in chain.sample_blocks(n):
        rhos = traceless_to_density(block, job.dim)
        hits[pos:pos + len(block)] = detector(rhos, c, pos)
        pos += len(block)
    return hits, chain.repairs, chain.backend, detector.extra_counts


def batch_means_stderr(hits, batches: int = BATCHES_PER_CHAIN) -> float:
    """Standard error of the mean from non-overlapping batch means."""
    hits = np.asarray(hits, dtype=float)
    k = min(batches, len(hits))
    if k < 2:
        return 0.0
    means = np.array([b.mean() for b in np.array_split(hits, k)])
    return float(means.std(ddof=1) / math.sqrt(k))


def combine_stderr(sizes, errors) -> float:
    """Pooled error of a sample-weighted mean of independent chains."""
    sizes = np.asarray(sizes, dtype=float)
    w = sizes / sizes.sum()
    return float(math.sqrt(np.sum((w * np.asarray(errors)) ** 2)))


def run_chains(job: EstimationJob, workers: int = 1) -> list:
    if workers > 1 and job.chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, job.chains)) as ex:
            return list(ex.map(_run_chain, [job] * job.chains, range(job.chains)))
    return [_run_chain(job, c) for c in range(job.chains)]


def estimate_ratio(job: EstimationJob, workers: int = 1, return_hits: bool = False):
    """Hit fraction of ``job.detector`` over sampled states.

    ``stderr`` is the larger of the batch-means error (64 batches per chain,
    pooled over chains) and the binomial error. With ``return_hits`` the
    per-sample hit vector is returned as well.
    """
    t0 = time.perf_counter()
    results = run_chains(job, workers)
    hits = np.concatenate([r[0] for r in results])
    n = len(hits)
    k = int(hits.sum())
    ratio = k / n
    binom = math.sqrt(ratio * (1 - ratio) / n)
    sizes = [len(r[0]) for r in results]
    batch = combine_stderr(sizes, [batch_means_stderr(r[0]) for r in results])
    extras: dict = {}
    for r in results:
        for key, val in r[3].items():
            extras[key] = extras.get(key, 0) + val
    est = RatioEstimate(
        ratio=ratio,
        stderr=max(batch, binom),
        hits=k,
        samples=n,
        detector=job.detector,
        seed=job.seed,
        wall_time=time.perf_counter() - t0,
        binomial_stderr=binom,
        batch_stderr=batch,
        chains=job.chains,
        backend=results[0][2],
        repairs=sum(r[1] for r in results),
        extras=extras,
        job=job.as_dict(),
    )
    log.info("%s (%d,%d): %d/%d hits", job.detector, job.dA, job.dB, k, n)
    return (est, hits) if return_hits else est


# table reproduction --------------------------------------------------------


@dataclass
class ComparisonRow:
    table: int
    dA: int
    dB: int
    detector: str
    published: float
    published_error: float
    desk: float
    desk_stderr: float
    combined: float
    hits: int
    samples: int
    passed: bool
    rule: str
    extras: dict = field(default_factory=dict)


def compare(published: float, published_err: float, est: RatioEstimate, abs_tol: float = ABS_TOL):
    """Pass flag and rule text for one table entry."""
    combined = math.hypot(est.stderr, published_err)
    if published < SMALL_ENTRY:
        return est.ratio < SMALL_ENTRY_LIMIT, combined, f"desk < {SMALL_ENTRY_LIMIT:g}"
    diff = abs(est.ratio - published)
    return diff <= 3 * combined and diff <= abs_tol, combined, f"|diff| <= 3 combined and <= {abs_tol:g}"


def table_entries(table: int, extended: bool = False):
    if table == 1:
        keys = PUBLISHED_TABLE1 if extended else TABLE1_DEFAULT
        return [(dA, dB, "loo-rescaled", *PUBLISHED_TABLE1[(dA, dB)]) for dA, dB in keys]
    if table == 2:
        keys = PUBLISHED_TABLE2 if extended else TABLE2_DEFAULT
        return [(2, dB, "das-npt", *PUBLISHED_TABLE2[dB]) for dB in keys]
    raise ConfigurationError(f"table must be 1 or 2, got {table}")


def reproduce_table(table: int, scale: int, seed: int = 0, chains: int = 1, workers: int = 1,
                    extended: bool = False, entries=None) -> list[ComparisonRow]:
    """Run the job grid of one table and compare against the published values."""
    if scale < 10**4:
        raise ConfigurationError("scale must be at least 1e4 samples")
    rows = []
    for dA, dB, det, published, err in entries or table_entries(table, extended):
        job = EstimationJob(dA, dB, det, scale, seed=seed, chains=chains)
        est = estimate_ratio(job, workers)
        ok, combined, rule = compare(published, err, est)
        extras = dict(est.extras)
        if det == "loo-rescaled":
            # rescaling can only add detections on the same samples
            extras["loo_ratio"] = est.extras.get("loo_hits", 0) / est.samples
            ok = ok and est.hits >= est.extras.get("loo_hits", 0)
        rows.append(ComparisonRow(table, dA, dB, det, published, err, est.ratio, est.stderr, combined,
                                  est.hits, est.samples, bool(ok), rule, extras))
    return rows


def format_report(rows, fmt: str = "text") -> str:
    if fmt == "json":
        return "\n".join(json.dumps(asdict(r)) for r in rows) + "\n"
    cols = ["table", "dA", "dB", "detector", "published", "published_error", "desk", "desk_stderr",
            "combined", "hits", "samples", "passed"]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([getattr(r, c) for c in cols])
        return buf.getvalue()
    lines = [f"{'dA':>3} {'dB':>3} {'detector':<13} {'published':>12} {'desk':>12} {'stderr':>10} "
             f"{'combined':>10} {'hits':>8} {'samples':>9}  result"]
    for r in rows:
        lines.append(f"{r.dA:>3} {r.dB:>3} {r.detector:<13} {r.published:>12.5g} {r.desk:>12.5g} "
                     f"{r.desk_stderr:>10.2e} {r.combined:>10.2e} {r.hits:>8} {r.samples:>9}  "
                     f"{'pass' if r.passed else 'FAIL'} ({r.rule})")
    return "\n".join(lines) + "\n"


# cross-detector audit ------------------------------------------------------


@dataclass
class AuditReport:
    dA: int
    dB: int
    samples: int
    seed: int
    loo_hits: int
    das_hits: int
    counterexamples: int
    counterexample_indices: list

    @property
    def loo_ratio(self) -> float:
        return self.loo_hits / self.samples

    @property
    def das_ratio(self) -> float:
        return self.das_hits / self.samples

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(loo_ratio=self.loo_ratio, das_ratio=self.das_ratio)
        return d


def cross_detector_audit(dA: int, dB: int, samples: int, seed: int = 0) -> AuditReport:
    """Check per sample that every ``loo`` detection is also a ``das-npt`` detection."""
    if dA != 2 or dB not in (2, 3):
        raise ConfigurationError("the audit needs dA = 2 and dB in {2, 3}")
    loo = _Detector(EstimationJob(dA, dB, "loo", samples, seed))
    das = _Detector(EstimationJob(dA, dB, "das-npt", samples, seed))
    chain = HitAndRunChain(SamplerConfig(dA * dB, seed))
    a_all, b_all = [], []
    pos = 0
    for block in chain.sample_blocks(samples):
        rhos = traceless_to_density(block, dA * dB)
        a_all.append(loo(rhos, 0, pos))
        b_all.append(das(rhos, 0, pos))
        pos += len(block)
    a = np.concatenate(a_all)
    b = np.concatenate(b_all)
    bad = np.flatnonzero(a & ~b)
    return AuditReport(dA, dB, samples, seed, int(a.sum()), int(b.sum()), len(bad), bad.tolist())


def write_jsonl(records, fh):
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
