"""Continuous action domain: topic catalog, centroids, bounds, decoding.

Each topic's action representation is the mean embedding of all turns
labeled with that topic. A continuous action decodes to the topic whose
centroid is most cosine-similar; ties break toward the smaller topic id.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .corpus import Corpus
from .embedding import EmbedderConfig, ZeroNorm, embed_text
from .pca import InsufficientComponents, PcaModel

DEFAULT_TOPICS = (
    (0, "figuring out/self-discovery/reminiscence"),
    (1, "play"),
    (2, "anger/scare/sadness"),
    (3, "counts"),
    (6, "dealing with stress"),
    (7, "numbers"),
    (8, "continuation"),
)

BOUNDS_PAD_FRACTION = 0.1
BOUNDS_PAD_FLOOR = 1e-6


class SpaceKind(str, Enum):
    DOC = "doc"
    PCA36 = "pca36"
    PCA2 = "pca2"


class ActionSpaceError(Exception):
    pass


class UnknownTopic(ActionSpaceError):
    pass


class TopicWithoutSupport(ActionSpaceError):
    def __init__(self, topic_ids: list[int]):
        super().__init__(f"topics with no labeled turns: {topic_ids}")
        self.topic_ids = topic_ids


@dataclass(frozen=True)
class TopicCatalog:
    topics: tuple[tuple[int, str], ...] = DEFAULT_TOPICS

    def __post_init__(self) -> None:
        ids = [tid for tid, _ in self.topics]
        if len(ids) != len(set(ids)):
            raise ActionSpaceError("topic ids must be unique")

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(tid for tid, _ in self.topics)

    def label(self, topic_id: int) -> str:
        for tid, label in self.topics:
            if tid == topic_id:
                return label
        raise UnknownTopic(f"topic id {topic_id} not in catalog")

    def index_of(self, topic_id: int) -> int:
        for i, (tid, _) in enumerate(self.topics):
            if tid == topic_id:
                return i
        raise UnknownTopic(f"topic id {topic_id} not in catalog")

    def to_json_dict(self) -> dict:
        return {"schema": "dismop-topics/1", "topics": [{"id": tid, "label": lbl} for tid, lbl in self.topics]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "TopicCatalog":
        return cls(topics=tuple((int(t["id"]), str(t["label"])) for t in d["topics"]))


@dataclass(frozen=True)
class ActionSpace:
    catalog: TopicCatalog
    centroids: np.ndarray  # (K, d), row order = catalog order
    space_kind: SpaceKind
    lo: np.ndarray  # (d,)
    hi: np.ndarray  # (d,)

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @property
    def n_topics(self) -> int:
        return self.centroids.shape[0]

    def space_hash(self) -> str:
        blob = json.dumps(
            {
                "catalog": self.catalog.to_json_dict(),
                "kind": self.space_kind.value,
                "centroids": self.centroids.tolist(),
                "lo": self.lo.tolist(),
                "hi": self.hi.tolist(),
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_json_dict(self) -> dict:
        return {
            "schema": "dismop-actionspace/1",
            "catalog": self.catalog.to_json_dict(),
            "kind": self.space_kind.value,
            "centroids": self.centroids.tolist(),
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ActionSpace":
        return cls(
            catalog=TopicCatalog.from_json_dict(d["catalog"]),
            centroids=np.array(d["centroids"], dtype=np.float64),
            space_kind=SpaceKind(d["kind"]),
            lo=np.array(d["lo"], dtype=np.float64),
            hi=np.array(d["hi"], dtype=np.float64),
        )


def _bounds_for(centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cmin = centroids.min(axis=0)
    cmax = centroids.max(axis=0)
    pad = np.maximum(BOUNDS_PAD_FRACTION * (cmax - cmin), BOUNDS_PAD_FLOOR)
    return cmin - pad, cmax + pad


def build_action_space(
    corpus: Corpus,
    cfg: EmbedderConfig,
    catalog: TopicCatalog | None = None,
) -> ActionSpace:
    """Centroid per catalog topic = mean embedding of its labeled turns."""
    catalog = catalog or TopicCatalog()
    sums: dict[int, np.ndarray] = {tid: np.zeros(cfg.dim) for tid in catalog.ids}
    counts: dict[int, int] = {tid: 0 for tid in catalog.ids}
    for session in corpus.sessions:
        for turn in session.turns:
            if turn.topic is None or turn.topic not in sums:
                continue
            sums[turn.topic] += embed_text(cfg, turn.text)
            counts[turn.topic] += 1
    missing = [tid for tid in catalog.ids if counts[tid] == 0]
    if missing:
        raise TopicWithoutSupport(missing)
    centroids = np.stack([sums[tid] / counts[tid] for tid in catalog.ids])
    lo, hi = _bounds_for(centroids)
    return ActionSpace(catalog=catalog, centroids=centroids, space_kind=SpaceKind.DOC, lo=lo, hi=hi)


def reduce_action_space(space: ActionSpace, target: SpaceKind, pca: PcaModel) -> ActionSpace:
    """Re-derive centroids and bounds in the PCA-projected space."""
    target_dim = {SpaceKind.PCA36: 36, SpaceKind.PCA2: 2}.get(target)
    if target_dim is None:
        raise ActionSpaceError(f"cannot reduce to kind {target}")
    if pca.n_components < target_dim:
        raise InsufficientComponents(f"PCA has {pca.n_components} components, need {target_dim}")
    centroids = pca.transform(space.centroids, k=target_dim)
    lo, hi = _bounds_for(centroids)
    return ActionSpace(catalog=space.catalog, centroids=centroids, space_kind=target, lo=lo, hi=hi)


def decode_action(space: ActionSpace, a: np.ndarray) -> tuple[int, float]:
    """Nearest topic by cosine similarity; returns (topic_id, margin).

    Margin is best minus second-best similarity. Exact similarity ties break
    toward the smallest topic id.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (space.dim,):
        raise ActionSpaceError(f"action shape {a.shape}, space dim {space.dim}")
    if not np.all(np.isfinite(a)):
        raise ActionSpaceError("non-finite action vector")
    na = float(np.sqrt(np.dot(a, a)))
    if na == 0.0:
        raise ZeroNorm("cannot decode the zero action")
    sims = np.full(space.n_topics, -np.inf)
    for i in range(space.n_topics):
        c = space.centroids[i]
        nc = float(np.sqrt(np.dot(c, c)))
        if nc > 0.0:
            sims[i] = float(np.dot(a, c) / (na * nc))
    best_sim = sims.max()
    candidates = [space.catalog.ids[i] for i in range(space.n_topics) if sims[i] == best_sim]
    topic_id = min(candidates)
    others = sims[[i for i in range(space.n_topics) if space.catalog.ids[i] != topic_id]]
    margin = float(best_sim - others.max()) if others.size else float("inf")
    return topic_id, margin


def encode_topic(space: ActionSpace, topic_id: int) -> np.ndarray:
    """The centroid row for a catalog topic (ground-truth action vector)."""
    return space.centroids[space.catalog.index_of(topic_id)].copy()
