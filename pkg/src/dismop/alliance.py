"""Working-alliance inventory and turn-level scoring.

A turn is scored against all 36 inventory items by cosine similarity; the
task/bond/goal scale scores are the signed sums of the item scores within
each scale, as given by the inventory's key table.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .embedding import DimMismatch, EmbedderConfig, cosine_similarity, embed_text

N_ITEMS = 36
ITEMS_PER_SCALE = 12


class Scale(str, Enum):
    TASK = "task"
    BOND = "bond"
    GOAL = "goal"


class InventoryError(Exception):
    pass


class WrongItemCount(InventoryError):
    pass


class ScaleImbalance(InventoryError):
    pass


class InvalidSign(InventoryError):
    pass


class NonFiniteScore(Exception):
    pass


@dataclass(frozen=True)
class InventoryItem:
    item_id: int
    text: str
    scale: Scale
    sign: int


@dataclass(frozen=True)
class Inventory:
    """36 validated items plus their precomputed unit-norm embeddings.

    Row i of item_embeddings corresponds to items[i]; items are stored in
    ascending item_id order (ids 1..36).
    """

    items: tuple[InventoryItem, ...]
    item_embeddings: np.ndarray  # (36, dim)
    embedder: EmbedderConfig

    def scale_indices(self, scale: Scale) -> np.ndarray:
        return np.array([i for i, it in enumerate(self.items) if it.scale == scale], dtype=int)

    def signs(self) -> np.ndarray:
        return np.array([it.sign for it in self.items], dtype=np.float64)

    def inventory_hash(self) -> str:
        blob = json.dumps(
            [{"id": it.item_id, "text": it.text, "scale": it.scale.value, "sign": it.sign} for it in self.items],
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ScaleScores:
    task: float
    bond: float
    goal: float

    def by_scale(self, scale: Scale) -> float:
        return {Scale.TASK: self.task, Scale.BOND: self.bond, Scale.GOAL: self.goal}[scale]


def default_inventory_path() -> Path:
    return Path(str(resources.files("dismop").joinpath("assets/wai_inventory.json")))


def parse_inventory(payload: dict, cfg: EmbedderConfig) -> Inventory:
    if payload.get("schema") != "dismop-wai/1":
        raise InventoryError(f"unexpected inventory schema: {payload.get('schema')!r}")
    raw_items = payload.get("items", [])
    if len(raw_items) != N_ITEMS:
        raise WrongItemCount(f"expected {N_ITEMS} items, got {len(raw_items)}")
    items = []
    for r in raw_items:
        sign = r.get("sign", 1)
        if sign not in (1, -1):
            raise InvalidSign(f"item {r.get('id')}: sign must be 1 or -1, got {sign!r}")
        text = str(r["text"]).strip()
        if not text:
            raise InventoryError(f"item {r.get('id')}: empty text")
        items.append(InventoryItem(item_id=int(r["id"]), text=text, scale=Scale(r["scale"]), sign=int(sign)))
    items.sort(key=lambda it: it.item_id)
    if [it.item_id for it in items] != list(range(1, N_ITEMS + 1)):
        raise InventoryError("item ids must be exactly 1..36")
    for scale in Scale:
        n = sum(1 for it in items if it.scale == scale)
        if n != ITEMS_PER_SCALE:
            raise ScaleImbalance(f"scale {scale.value}: expected {ITEMS_PER_SCALE} items, got {n}")
    emb = np.stack([embed_text(cfg, it.text) for it in items])
    return Inventory(items=tuple(items), item_embeddings=emb, embedder=cfg)


def load_inventory(path: str | Path | None, cfg: EmbedderConfig) -> Inventory:
    """Load and validate an inventory JSON file; None loads the bundled default."""
    p = Path(path) if path is not None else default_inventory_path()
    with open(p, encoding="utf-8") as f:
        payload = json.load(f)
    return parse_inventory(payload, cfg)


def score_turn(inv: Inventory, turn_embedding: np.ndarray) -> np.ndarray:
    """36 cosine similarities between the turn embedding and the item embeddings.

    Scores are computed item by item so the arithmetic (and hence the exact
    float result) is independent of batching.
    """
    e = np.asarray(turn_embedding, dtype=np.float64)
    if e.shape != (inv.item_embeddings.shape[1],):
        raise DimMismatch(f"turn embedding dim {e.shape} vs inventory dim {inv.item_embeddings.shape[1]}")
    return np.array([cosine_similarity(e, inv.item_embeddings[i]) for i in range(N_ITEMS)])


def scale_scores(inv: Inventory, v: np.ndarray) -> ScaleScores:
    """Signed per-scale sums, accumulated sequentially in ascending item-id order."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (N_ITEMS,):
        raise DimMismatch(f"expected {N_ITEMS} scores, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteScore("alliance vector contains non-finite entries")
    acc = {Scale.TASK: 0.0, Scale.BOND: 0.0, Scale.GOAL: 0.0}
    for item, score in zip(inv.items, v):
        acc[item.scale] += item.sign * float(score)
    return ScaleScores(task=acc[Scale.TASK], bond=acc[Scale.BOND], goal=acc[Scale.GOAL])
