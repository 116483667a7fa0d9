"""Cohort data model: weighted connectomes, group-level edge masking, feature
vectors, and a synthetic cohort generator with planted discriminative edges."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

N_REGIONS = 84
N_EDGES = N_REGIONS * (N_REGIONS - 1) // 2  # 3486

AD = "AD"
CN = "CN"
LABELS = (AD, CN)
SEXES = ("F", "M")

# Desikan-Killiany style parcellation: 34 cortical + 8 subcortical labels per
# hemisphere = 84 regions.
_CORTICAL = [
    "bankssts", "caudalanteriorcingulate", "caudalmiddlefrontal", "cuneus",
    "entorhinal", "fusiform", "inferiorparietal", "inferiortemporal",
    "isthmuscingulate", "lateraloccipital", "lateralorbitofrontal", "lingual",
    "medialorbitofrontal", "middletemporal", "parahippocampal", "paracentral",
    "parsopercularis", "parsorbitalis", "parstriangularis", "pericalcarine",
    "postcentral", "posteriorcingulate", "precentral", "precuneus",
    "rostralanteriorcingulate", "rostralmiddlefrontal", "superiorfrontal",
    "superiorparietal", "superiortemporal", "supramarginal", "frontalpole",
    "temporalpole", "transversetemporal", "insula",
]
_SUBCORTICAL = [
    "thalamus", "caudate", "putamen", "pallidum", "hippocampus", "amygdala",
    "accumbens", "cerebellum",
]


class EdgeId(NamedTuple):
    """Unordered region pair in canonical form (i < j)."""

    i: int
    j: int


def edge(i: int, j: int) -> EdgeId:
    """Build a canonical EdgeId, validating indices and rejecting self-edges."""
    i, j = int(i), int(j)
    if not (0 <= i < N_REGIONS and 0 <= j < N_REGIONS):
        raise ValueError(f"region index out of range: ({i}, {j})")
    if i == j:
        raise ValueError(f"self-edge ({i}, {j})")
    return EdgeId(i, j) if i < j else EdgeId(j, i)


def canonical_edges() -> list[EdgeId]:
    """All 3486 EdgeIds sorted by (i, j)."""
    return [EdgeId(i, j) for i in range(N_REGIONS) for j in range(i + 1, N_REGIONS)]


@dataclass(frozen=True)
class RegionAtlas:
    """Fixed 84-region parcellation; maps labels to 0-based indices."""

    names: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        if len(names) != N_REGIONS:
            raise ValueError(f"atlas must have {N_REGIONS} regions, got {len(names)}")
        if len(set(names)) != len(names):
            raise ValueError("atlas labels must be unique")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "index", {n: k for k, n in enumerate(names)})


def default_atlas() -> RegionAtlas:
    names = []
    for hemi in ("lh", "rh"):
        names.extend(f"{hemi}_{n}" for n in _CORTICAL)
        names.extend(f"{hemi}_{n}" for n in _SUBCORTICAL)
    return RegionAtlas(tuple(names))


def check_connectome(weights) -> np.ndarray:
    """Validate and normalize a raw connectivity matrix.

    Enforces: square 84x84, nonnegative, diagonal zero (within 1e-12),
    symmetric within 1e-9 (then symmetrized by averaging). Returns a
    read-only float64 copy.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"non-square matrix: shape {w.shape}")
    if w.shape[0] != N_REGIONS:
        raise ValueError(f"expected {N_REGIONS}x{N_REGIONS} matrix, got {w.shape[0]}x{w.shape[1]}")
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite weight")
    if np.any(w < 0):
        raise ValueError("negative weight")
    d = np.abs(np.diagonal(w))
    if np.any(d > 1e-12):
        k = int(np.argmax(d))
        raise ValueError(f"nonzero diagonal at region {k}: {w[k, k]}")
    asym = np.abs(w - w.T)
    if np.max(asym) > 1e-9:
        i, j = np.unravel_index(int(np.argmax(asym)), w.shape)
        raise ValueError(f"asymmetric weights at ({i}, {j}): {w[i, j]} vs {w[j, i]}")
    w = (w + w.T) / 2.0
    np.fill_diagonal(w, 0.0)
    w.flags.writeable = False
    return w


@dataclass(frozen=True, eq=False)
class Subject:
    id: str
    weights: np.ndarray  # validated 84x84 connectome
    diagnosis: str
    sex: str
    manufacturer: str

    def __post_init__(self):
        if self.diagnosis not in LABELS:
            raise ValueError(f"diagnosis must be AD or CN, got {self.diagnosis!r}")
        if self.sex not in SEXES:
            raise ValueError(f"sex must be F or M, got {self.sex!r}")
        if not self.manufacturer:
            raise ValueError("manufacturer must be nonempty")


@dataclass(frozen=True, eq=False)
class Cohort:
    subjects: tuple[Subject, ...]
    atlas: RegionAtlas

    def __post_init__(self):
        subjects = tuple(self.subjects)
        if not subjects:
            raise ValueError("empty cohort")
        ids = [s.id for s in subjects]
        if len(set(ids)) != len(ids):
            dup = next(x for x in ids if ids.count(x) > 1)
            raise ValueError(f"duplicate subject id: {dup!r}")
        object.__setattr__(self, "subjects", subjects)

    def __len__(self) -> int:
        return len(self.subjects)

    def subset(self, ids: Sequence[str]) -> "Cohort":
        """Sub-cohort of the given ids, preserving this cohort's order."""
        keep = set(ids)
        return Cohort(tuple(s for s in self.subjects if s.id in keep), self.atlas)


@dataclass(frozen=True)
class EdgeMask:
    """Kept edges in canonical order plus the ratio that produced them."""

    edges: tuple[EdgeId, ...]
    keep_ratio: float

    def __post_init__(self):
        if not (0 < self.keep_ratio <= 1):
            raise ValueError(f"keep_ratio must be in (0, 1], got {self.keep_ratio}")
        object.__setattr__(self, "edges", tuple(self.edges))

    @property
    def kept(self) -> frozenset[EdgeId]:
        return frozenset(self.edges)

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Strengths of the kept edges for one subject, in canonical edge order."""

    values: np.ndarray
    label: str
    subject_id: str = ""
    edges: tuple[EdgeId, ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if self.label not in LABELS:
            raise ValueError(f"label must be AD or CN, got {self.label!r}")
        if self.edges is not None and len(self.edges) != len(v):
            raise ValueError("edge labels do not match value count")


# ---------------------------------------------------------------------------
# Masking and flattening
# ---------------------------------------------------------------------------

def _triu_values(cohort: Cohort) -> np.ndarray:
    """(n_subjects, 3486) strengths in canonical edge order."""
    iu = np.triu_indices(N_REGIONS, k=1)
    return np.stack([s.weights[iu] for s in cohort.subjects])


def compute_mask(cohort: Cohort, keep_ratio: float) -> EdgeMask:
    """Group-level proportional threshold.

    Edges are ranked by (occurrence desc, mean weight desc, EdgeId asc) where
    occurrence is the fraction of subjects with strictly positive weight; the
    top ceil(keep_ratio * 3486) survive. Edges occurring in no subject are
    never kept, so the mask can be smaller when the cohort is very sparse.
    """
    if not (0 < keep_ratio <= 1):
        raise ValueError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    vals = _triu_values(cohort)
    occurrence = (vals > 0).mean(axis=0)
    mean_w = vals.mean(axis=0)
    n_keep = math.ceil(keep_ratio * N_EDGES)
    ranked = sorted(range(N_EDGES), key=lambda t: (-occurrence[t], -mean_w[t], t))
    all_edges = canonical_edges()
    kept = sorted(t for t in ranked[:n_keep] if occurrence[t] > 0)
    return EdgeMask(tuple(all_edges[t] for t in kept), keep_ratio)


def apply_mask(cohort: Cohort, mask: EdgeMask) -> list[FeatureVector]:
    """Flatten each subject's connectome to the masked feature space."""
    if len(mask) == 0:
        raise ValueError("empty feature space: mask keeps no edges")
    rows = np.array([e.i for e in mask.edges])
    cols = np.array([e.j for e in mask.edges])
    return [
        FeatureVector(s.weights[rows, cols], s.diagnosis, s.id, mask.edges)
        for s in cohort.subjects
    ]


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantedEdge:
    """One edge whose strengths separate the classes at a known threshold.

    direction "low" puts AD strengths below the threshold and CN above;
    "high" is the mirror image. Strengths are drawn uniformly from
    (0.1t, 0.9t) on the low side and (1.1t, 1.9t) on the high side, so a
    gap around the threshold always exists. Note that group masking ranks
    all-positive edges by mean weight, so thresholds should sit comfortably
    above the background mean (~1.13) for planted edges to survive a 30%
    mask.
    """

    edge: EdgeId
    threshold: float
    direction: str = "low"

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("planted threshold must be > 0")
        if self.direction not in ("low", "high"):
            raise ValueError(f"direction must be 'low' or 'high', got {self.direction!r}")


def generate_synthetic(
    seed: int,
    n_per_class: int,
    planted: Sequence[PlantedEdge | tuple] = (),
    noise_rate: float = 0.0,
) -> Cohort:
    """Balanced synthetic cohort with optional planted discriminative edges.

    Non-planted strengths are iid log-normal(0, 0.5) shared across classes.
    Labels are flipped independently with probability noise_rate after the
    strengths are drawn, so noisy subjects carry the other class's signature.
    Deterministic in all arguments.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if not (0 <= noise_rate < 0.5):
        raise ValueError("noise_rate must be in [0, 0.5)")
    planted = [p if isinstance(p, PlantedEdge) else PlantedEdge(*p) for p in planted]
    seen = set()
    for p in planted:
        if p.edge in seen:
            raise ValueError(f"duplicate planted edge {p.edge}")
        seen.add(p.edge)

    rng = np.random.default_rng(seed % 2**32)
    n = 2 * n_per_class
    edge_index = {e: k for k, e in enumerate(canonical_edges())}
    strengths = rng.lognormal(mean=0.0, sigma=0.5, size=(n, N_EDGES))
    base_ad = np.arange(n) < n_per_class
    for p in planted:
        lo = rng.uniform(0.1 * p.threshold, 0.9 * p.threshold, size=n_per_class)
        hi = rng.uniform(1.1 * p.threshold, 1.9 * p.threshold, size=n_per_class)
        col = edge_index[edge(*p.edge)]
        if p.direction == "low":
            strengths[base_ad, col] = lo
            strengths[~base_ad, col] = hi
        else:
            strengths[base_ad, col] = hi
            strengths[~base_ad, col] = lo
    flips = rng.random(n) < noise_rate

    iu = np.triu_indices(N_REGIONS, k=1)
    combos = [("F", "MfrA"), ("F", "MfrB"), ("M", "MfrA"), ("M", "MfrB")]
    subjects = []
    within_class = 0
    for k in range(n):
        if k == n_per_class:
            within_class = 0
        w = np.zeros((N_REGIONS, N_REGIONS))
        w[iu] = strengths[k]
        w = w + w.T
        w.flags.writeable = False
        is_ad = bool(base_ad[k]) ^ bool(flips[k])
        sex, mfr = combos[within_class % 4]
        subjects.append(Subject(f"s{k:04d}", w, AD if is_ad else CN, sex, mfr))
        within_class += 1
    return Cohort(tuple(subjects), default_atlas())


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------

def load_cohort(manifest_path) -> Cohort:
    """Load a cohort from a JSON manifest referencing per-subject CSV matrices.

    Manifest format::

        {"atlas": [84 labels],
         "subjects": [{"id": ..., "diagnosis": "AD"|"CN", "sex": "F"|"M",
                       "manufacturer": ..., "matrix": "relative/path.csv"}]}
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise ValueError(f"missing file: {manifest_path}")
    doc = json.loads(manifest_path.read_text())
    atlas = RegionAtlas(tuple(doc["atlas"]))
    base = manifest_path.parent
    subjects = []
    for rec in doc["subjects"]:
        mpath = base / rec["matrix"]
        if not mpath.exists():
            raise ValueError(f"missing file: {mpath}")
        try:
            raw = np.loadtxt(mpath, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise ValueError(f"malformed matrix file {mpath}: {exc}") from exc
        try:
            w = check_connectome(raw)
        except ValueError as exc:
            raise ValueError(f"subject {rec['id']!r}: {exc}") from exc
        subjects.append(Subject(rec["id"], w, rec["diagnosis"], rec["sex"], rec["manufacturer"]))
    return Cohort(tuple(subjects), atlas)


def save_cohort(cohort: Cohort, out_dir, name: str = "cohort") -> Path:
    """Write a cohort as manifest + per-subject matrices; returns manifest path."""
    out_dir = Path(out_dir)
    mat_dir = out_dir / "matrices"
    mat_dir.mkdir(parents=True, exist_ok=True)
    recs = []
    for s in cohort.subjects:
        rel = f"matrices/{s.id}.csv"
        np.savetxt(out_dir / rel, s.weights, delimiter=",", fmt="%.17g")
        recs.append({
            "id": s.id, "diagnosis": s.diagnosis, "sex": s.sex,
            "manufacturer": s.manufacturer, "matrix": rel,
        })
    manifest = out_dir / f"{name}.json"
    manifest.write_text(json.dumps(
        {"atlas": list(cohort.atlas.names), "subjects": recs}, indent=1))
    return manifest


def mask_to_json(mask: EdgeMask) -> str:
    """Canonical-order JSON list of [i, j] pairs."""
    return json.dumps([[e.i, e.j] for e in mask.edges])


def mask_from_json(text: str, keep_ratio: float | None = None) -> EdgeMask:
    pairs = json.loads(text)
    edges = tuple(edge(i, j) for i, j in pairs)
    if keep_ratio is None:
        keep_ratio = len(edges) / N_EDGES
    return EdgeMask(edges, keep_ratio)
