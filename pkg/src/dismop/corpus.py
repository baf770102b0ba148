"""Transcript data model, JSONL ingestion, synthetic generation, splitting.

Wire format is JSONL with one session per line:
{"schema":"dismop-transcript/1","session_id":...,"disorder":...,"turns":[...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

TRANSCRIPT_SCHEMA = "dismop-transcript/1"


class Speaker(str, Enum):
    THERAPIST = "therapist"
    PATIENT = "patient"


class Disorder(str, Enum):
    ANXIETY = "anxiety"
    DEPRESSION = "depression"
    SCHIZOPHRENIA = "schizophrenia"
    SUICIDAL = "suicidal"


class CorpusSource(str, Enum):
    INGESTED = "ingested"
    SYNTHETIC = "synthetic"


class SplitUnit(str, Enum):
    SESSION = "session"
    TRANSITION = "transition"


class CorpusError(Exception):
    pass


class ParseError(CorpusError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class SchemaVersionMismatch(CorpusError):
    pass


class DuplicateSessionId(CorpusError):
    pass


class InvalidConfig(CorpusError):
    pass


class TooFewSessions(CorpusError):
    pass


class InvalidSplitUnit(CorpusError):
    pass


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    text: str
    topic: int | None = None


@dataclass(frozen=True)
class SessionTranscript:
    session_id: str
    disorder: Disorder
    turns: tuple[Turn, ...]

    def __post_init__(self) -> None:
        speakers = {t.speaker for t in self.turns}
        if Speaker.THERAPIST not in speakers or Speaker.PATIENT not in speakers:
            raise CorpusError(f"session {self.session_id}: needs at least one turn per speaker")


@dataclass(frozen=True)
class Corpus:
    sessions: tuple[SessionTranscript, ...]
    source: CorpusSource = CorpusSource.INGESTED
    generator_seed: int | None = None

    def __post_init__(self) -> None:
        ids = [s.session_id for s in self.sessions]
        if len(ids) != len(set(ids)):
            raise DuplicateSessionId("session ids are not unique")
        if self.source == CorpusSource.SYNTHETIC and self.generator_seed is None:
            raise CorpusError("synthetic corpora must carry a generator seed")

    def filter_disorder(self, disorder: Disorder) -> "Corpus":
        kept = tuple(s for s in self.sessions if s.disorder == disorder)
        return Corpus(sessions=kept, source=self.source, generator_seed=self.generator_seed)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.95
    split_seed: int = 0
    unit: SplitUnit = SplitUnit.SESSION

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfig(f"train_fraction must be in (0,1), got {self.train_fraction}")


def _session_to_dict(s: SessionTranscript) -> dict:
    return {
        "schema": TRANSCRIPT_SCHEMA,
        "session_id": s.session_id,
        "disorder": s.disorder.value,
        "turns": [
            {"speaker": t.speaker.value, "text": t.text, "topic": t.topic}
            for t in s.turns
        ],
    }


def _session_from_dict(d: dict, line: int, expected_schema: str) -> SessionTranscript:
    schema = d.get("schema")
    if schema != expected_schema:
        raise SchemaVersionMismatch(f"line {line}: schema {schema!r}, expected {expected_schema!r}")
    try:
        turns = tuple(
            Turn(
                speaker=Speaker(t["speaker"]),
                text=str(t["text"]),
                topic=None if t.get("topic") is None else int(t["topic"]),
            )
            for t in d["turns"]
        )
        return SessionTranscript(session_id=str(d["session_id"]), disorder=Disorder(d["disorder"]), turns=turns)
    except SchemaVersionMismatch:
        raise
    except (KeyError, ValueError, TypeError, CorpusError) as exc:
        raise ParseError(line, str(exc)) from exc


def load_transcripts(path: str | Path, schema_version: str = TRANSCRIPT_SCHEMA) -> Corpus:
    """Parse a JSONL transcript file into a Corpus, preserving session order."""
    sessions: list[SessionTranscript] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                d = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON: {exc.msg}") from exc
            s = _session_from_dict(d, lineno, schema_version)
            if s.session_id in seen:
                raise DuplicateSessionId(f"line {lineno}: duplicate session id {s.session_id!r}")
            seen.add(s.session_id)
            sessions.append(s)
    return Corpus(sessions=tuple(sessions), source=CorpusSource.INGESTED)


def write_transcripts(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical JSONL form (sorted keys, compact separators)."""
    with open(path, "w", encoding="utf-8") as f:
        for s in corpus.sessions:
            f.write(json.dumps(_session_to_dict(s), sort_keys=True, separators=(",", ":")))
            f.write("\n")


@dataclass(frozen=True)
class SynthConfig:
    """Seeded generator config for planted-policy synthetic corpora.

    turns_per_session counts individual turns; each pair contributes a
    therapist turn and a patient turn, so it must be even. The therapist
    topic at pair t+1 follows planted_policy(topic at pair t) with
    probability 1 - noise_rate, else a uniformly random other topic. The
    patient mirrors the therapist's topic within each pair, and every turn's
    text is drawn from that topic's lexicon.

    With response_style "match_sensitive", a patient answering an off-policy
    topic switch instead draws from the shared mismatch_words pool (an
    unlabeled, disengaged reply), so noisy corpora carry a reward contrast
    between planted and off-policy actions.
    """

    n_sessions: int
    turns_per_session: int
    disorder_mix: dict[Disorder, float]
    planted_policy: dict[int, int]
    topic_lexicons: dict[int, tuple[str, ...]]
    noise_rate: float = 0.0
    seed: int = 0
    words_per_turn: int = 3
    response_style: str = "uniform"
    mismatch_words: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.n_sessions < 1:
            raise InvalidConfig("n_sessions must be >= 1")
        if self.turns_per_session < 4 or self.turns_per_session % 2 != 0:
            raise InvalidConfig("turns_per_session must be an even number >= 4")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise InvalidConfig(f"noise_rate must be in [0,1], got {self.noise_rate}")
        if self.words_per_turn < 1:
            raise InvalidConfig("words_per_turn must be >= 1")
        if self.response_style not in ("uniform", "match_sensitive"):
            raise InvalidConfig(f"unknown response_style {self.response_style!r}")
        topics = set(self.topic_lexicons)
        if not topics:
            raise InvalidConfig("topic_lexicons must not be empty")
        if set(self.planted_policy) != topics or not set(self.planted_policy.values()) <= topics:
            raise InvalidConfig("planted_policy must be a total map over the lexicon topic ids")
        seen_words: dict[str, int] = {}
        for tid, words in self.topic_lexicons.items():
            if not words:
                raise InvalidConfig(f"topic {tid}: empty lexicon")
            for w in words:
                if w in seen_words and seen_words[w] != tid:
                    raise InvalidConfig(f"word {w!r} appears in lexicons {seen_words[w]} and {tid}")
                seen_words[w] = tid
        if self.response_style == "match_sensitive":
            if not self.mismatch_words:
                raise InvalidConfig("match_sensitive style needs a non-empty mismatch_words pool")
            for w in self.mismatch_words:
                if w in seen_words:
                    raise InvalidConfig(f"mismatch word {w!r} also appears in topic {seen_words[w]}'s lexicon")
        mix_total = sum(self.disorder_mix.values())
        if mix_total <= 0 or any(w < 0 for w in self.disorder_mix.values()):
            raise InvalidConfig("disorder_mix weights must be non-negative with positive total")

    @classmethod
    def from_json_dict(cls, d: dict) -> "SynthConfig":
        return cls(
            n_sessions=int(d["n_sessions"]),
            turns_per_session=int(d["turns_per_session"]),
            disorder_mix={Disorder(k): float(v) for k, v in d["disorder_mix"].items()},
            planted_policy={int(k): int(v) for k, v in d["planted_policy"].items()},
            topic_lexicons={int(k): tuple(v) for k, v in d["topic_lexicons"].items()},
            noise_rate=float(d.get("noise_rate", 0.0)),
            seed=int(d.get("seed", 0)),
            words_per_turn=int(d.get("words_per_turn", 3)),
            response_style=str(d.get("response_style", "uniform")),
            mismatch_words=tuple(d.get("mismatch_words", ())),
        )

    def to_json_dict(self) -> dict:
        return {
            "n_sessions": self.n_sessions,
            "turns_per_session": self.turns_per_session,
            "disorder_mix": {k.value: v for k, v in self.disorder_mix.items()},
            "planted_policy": {str(k): v for k, v in self.planted_policy.items()},
            "topic_lexicons": {str(k): list(v) for k, v in self.topic_lexicons.items()},
            "noise_rate": self.noise_rate,
            "seed": self.seed,
            "words_per_turn": self.words_per_turn,
            "response_style": self.response_style,
            "mismatch_words": list(self.mismatch_words),
        }


# Word-disjoint lexicons for the default catalog topics. Words were screened
# against the default embedder + bundled inventory so that every word hashes
# to its own bucket (well-separated topic centroids) and scores positively on
# the task scale (non-degenerate reward signal for the planted-policy corpus).
DEFAULT_LEXICONS: dict[int, tuple[str, ...]] = {
    0: ("past", "memory", "noticing", "realize", "reminisce", "upbringing"),
    1: ("game", "puzzle", "draw", "cards"),
    2: ("upset", "tears", "hurt", "sorrow", "anguish"),
    3: ("sum", "amount", "track", "figure"),
    6: ("exercise", "rest", "organize", "plan", "checklist"),
    7: ("ten", "forty", "zero"),
    8: ("continue", "follow", "thereafter", "additionally"),
}

# A 7-cycle over the default topic ids; a permutation keeps the planted
# 1-step transition matrix checkable against policy transition matrices.
DEFAULT_PLANTED_POLICY: dict[int, int] = {0: 1, 1: 2, 2: 3, 3: 6, 6: 7, 7: 8, 8: 0}

# Shared disengaged-patient vocabulary for match_sensitive corpora; each word
# scores negatively on the task scale and avoids every lexicon bucket.
DEFAULT_MISMATCH_WORDS: tuple[str, ...] = ("hollow", "lacking", "hesitant")


def default_synth_config(
    n_sessions: int = 200,
    turns_per_session: int = 60,
    noise_rate: float = 0.0,
    seed: int = 0,
    response_style: str = "uniform",
) -> SynthConfig:
    return SynthConfig(
        n_sessions=n_sessions,
        turns_per_session=turns_per_session,
        disorder_mix={d: 0.25 for d in Disorder},
        planted_policy=dict(DEFAULT_PLANTED_POLICY),
        topic_lexicons=dict(DEFAULT_LEXICONS),
        noise_rate=noise_rate,
        seed=seed,
        response_style=response_style,
        mismatch_words=DEFAULT_MISMATCH_WORDS if response_style == "match_sensitive" else (),
    )


def generate_synthetic_corpus(cfg: SynthConfig) -> Corpus:
    """Generate a seeded corpus; identical configs yield identical corpora."""
    topic_ids = sorted(cfg.topic_lexicons)
    disorders = sorted(cfg.disorder_mix, key=lambda d: d.value)
    weights = np.array([cfg.disorder_mix[d] for d in disorders], dtype=np.float64)
    weights = weights / weights.sum()
    n_pairs = cfg.turns_per_session // 2

    sessions = []
    for s_idx in range(cfg.n_sessions):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, s_idx])))
        disorder = disorders[int(rng.choice(len(disorders), p=weights))]

        def sample_words(pool: tuple[str, ...]) -> str:
            idx = rng.integers(0, len(pool), size=cfg.words_per_turn)
            return " ".join(pool[int(i)] for i in idx)

        topic = topic_ids[int(rng.integers(0, len(topic_ids)))]
        turns: list[Turn] = []
        for p in range(n_pairs):
            off_policy = False
            if p > 0:
                planted = cfg.planted_policy[topic]
                if cfg.noise_rate > 0 and rng.random() < cfg.noise_rate:
                    others = [t for t in topic_ids if t != planted]
                    topic = others[int(rng.integers(0, len(others)))]
                    off_policy = True
                else:
                    topic = planted
            turns.append(Turn(speaker=Speaker.THERAPIST, text=sample_words(cfg.topic_lexicons[topic]), topic=topic))
            if off_policy and cfg.response_style == "match_sensitive":
                # Disengaged reply to a non-sequitur switch; no topic label.
                turns.append(Turn(speaker=Speaker.PATIENT, text=sample_words(cfg.mismatch_words), topic=None))
            else:
                turns.append(Turn(speaker=Speaker.PATIENT, text=sample_words(cfg.topic_lexicons[topic]), topic=topic))
        sessions.append(
            SessionTranscript(session_id=f"synth-{cfg.seed}-{s_idx:05d}", disorder=disorder, turns=tuple(turns))
        )
    return Corpus(sessions=tuple(sessions), source=CorpusSource.SYNTHETIC, generator_seed=cfg.seed)


def split_sessions(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus]:
    """Disjoint seeded session-level split; train gets round(fraction * N) sessions.

    The shuffle is keyed on (seed, fraction), so splits with different
    fractions are independent draws: a smaller train set is not a subset of
    a larger one.
    """
    if spec.unit != SplitUnit.SESSION:
        raise InvalidSplitUnit("split_sessions only splits by session; see dataset.split_transitions")
    n = len(corpus.sessions)
    if n < 2:
        raise TooFewSessions(f"need at least 2 sessions to split, got {n}")
    fraction_key = int.from_bytes(repr(spec.train_fraction).encode("utf-8")[:8].ljust(8, b"\0"), "big")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.split_seed, fraction_key])))
    order = rng.permutation(n)
    n_train = int(round(spec.train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    train_idx = sorted(int(i) for i in order[:n_train])
    test_idx = sorted(int(i) for i in order[n_train:])
    mk = lambda idx: Corpus(
        sessions=tuple(corpus.sessions[i] for i in idx),
        source=corpus.source,
        generator_seed=corpus.generator_seed,
    )
    return mk(train_idx), mk(test_idx)


def realign_pairs(session: SessionTranscript) -> list[tuple[Turn, Turn]]:
    """Pair each patient turn with the most recent unanswered therapist turn.

    Leading patient turns (and patient turns following an already-answered
    therapist turn) are dropped; a therapist turn followed by another
    therapist turn is superseded by the later one.
    """
    pairs: list[tuple[Turn, Turn]] = []
    pending: Turn | None = None
    for turn in session.turns:
        if turn.speaker == Speaker.THERAPIST:
            pending = turn
        elif pending is not None:
            pairs.append((pending, turn))
            pending = None
    return pairs
