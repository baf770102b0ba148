import json

import pytest

from dismop.corpus import (
    Corpus,
    Disorder,
    DuplicateSessionId,
    InvalidConfig,
    ParseError,
    SchemaVersionMismatch,
    SessionTranscript,
    Speaker,
    SplitSpec,
    TooFewSessions,
    Turn,
    default_synth_config,
    generate_synthetic_corpus,
    load_transcripts,
    realign_pairs,
    split_sessions,
    write_transcripts,
)


def _session(sid: str, n_pairs: int = 2, disorder: Disorder = Disorder.ANXIETY) -> SessionTranscript:
    turns = []
    for i in range(n_pairs):
        turns.append(Turn(Speaker.THERAPIST, f"therapist words {i}", topic=0))
        turns.append(Turn(Speaker.PATIENT, f"patient words {i}", topic=0))
    return SessionTranscript(session_id=sid, disorder=disorder, turns=tuple(turns))


def test_empty_file_gives_empty_corpus(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert len(load_transcripts(p).sessions) == 0


def test_round_trip_order_and_bytes(tmp_path):
    corpus = Corpus(sessions=(_session("a"), _session("b", disorder=Disorder.SUICIDAL)))
    p = tmp_path / "c.jsonl"
    write_transcripts(corpus, p)
    loaded = load_transcripts(p)
    assert [s.session_id for s in loaded.sessions] == ["a", "b"]
    p2 = tmp_path / "c2.jsonl"
    write_transcripts(loaded, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_malformed_line_reports_line_number(tmp_path):
    corpus = Corpus(sessions=(_session("a"), _session("b")))
    p = tmp_path / "bad.jsonl"
    write_transcripts(corpus, p)
    with open(p, "a") as f:
        f.write("{not valid json\n")
    with pytest.raises(ParseError) as exc:
        load_transcripts(p)
    assert exc.value.line == 3


def test_schema_mismatch(tmp_path):
    p = tmp_path / "v2.jsonl"
    row = {"schema": "dismop-transcript/2", "session_id": "x", "disorder": "anxiety", "turns": []}
    p.write_text(json.dumps(row) + "\n")
    with pytest.raises(SchemaVersionMismatch):
        load_transcripts(p)


def test_duplicate_session_id(tmp_path):
    p = tmp_path / "dup.jsonl"
    write_transcripts(Corpus(sessions=(_session("a"),)), p)
    body = p.read_text()
    p.write_text(body + body)
    with pytest.raises(DuplicateSessionId):
        load_transcripts(p)


def test_identity_planted_policy_keeps_topic_constant():
    cfg = default_synth_config(n_sessions=10, turns_per_session=12, noise_rate=0.0, seed=3)
    identity = {t: t for t in cfg.planted_policy}
    cfg = type(cfg)(**{**cfg.__dict__, "planted_policy": identity})
    corpus = generate_synthetic_corpus(cfg)
    for s in corpus.sessions:
        topics = {t.topic for t in s.turns if t.speaker == Speaker.THERAPIST}
        assert len(topics) == 1


def test_seeded_determinism(tmp_path):
    cfg = default_synth_config(n_sessions=5, turns_per_session=10, seed=42)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_transcripts(generate_synthetic_corpus(cfg), p1)
    write_transcripts(generate_synthetic_corpus(cfg), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_noise_rate_transition_frequency():
    cfg = default_synth_config(n_sessions=500, turns_per_session=40, noise_rate=0.1, seed=9)
    corpus = generate_synthetic_corpus(cfg)
    planted = cfg.planted_policy
    hits = total = 0
    for s in corpus.sessions:
        ther = [t.topic for t in s.turns if t.speaker == Speaker.THERAPIST]
        for cur, nxt in zip(ther, ther[1:]):
            total += 1
            hits += nxt == planted[cur]
    assert 0.88 <= hits / total <= 0.92


def test_invalid_configs():
    base = default_synth_config(n_sessions=2, turns_per_session=8)
    with pytest.raises(InvalidConfig):
        type(base)(**{**base.__dict__, "noise_rate": 1.5})
    lex = dict(base.topic_lexicons)
    lex[0] = ()
    with pytest.raises(InvalidConfig):
        type(base)(**{**base.__dict__, "topic_lexicons": lex})
    lex = dict(base.topic_lexicons)
    lex[0] = lex[1]
    with pytest.raises(InvalidConfig):
        type(base)(**{**base.__dict__, "topic_lexicons": lex})
    with pytest.raises(InvalidConfig):
        type(base)(**{**base.__dict__, "turns_per_session": 9})


def test_split_counts_and_determinism():
    corpus = Corpus(sessions=tuple(_session(f"s{i}") for i in range(100)))
    spec = SplitSpec(train_fraction=0.95, split_seed=17)
    train, test = split_sessions(corpus, spec)
    assert (len(train.sessions), len(test.sessions)) == (95, 5)
    train2, test2 = split_sessions(corpus, spec)
    assert [s.session_id for s in train.sessions] == [s.session_id for s in train2.sessions]
    ids_train = {s.session_id for s in train.sessions}
    ids_test = {s.session_id for s in test.sessions}
    assert not ids_train & ids_test
    assert ids_train | ids_test == {s.session_id for s in corpus.sessions}


def test_split_fractions_do_not_nest():
    corpus = Corpus(sessions=tuple(_session(f"s{i}") for i in range(10)))
    nested_everywhere = True
    for seed in range(8):
        small, _ = split_sessions(corpus, SplitSpec(train_fraction=0.5, split_seed=seed))
        big, _ = split_sessions(corpus, SplitSpec(train_fraction=0.95, split_seed=seed))
        small_ids = {s.session_id for s in small.sessions}
        big_ids = {s.session_id for s in big.sessions}
        if not small_ids <= big_ids:
            nested_everywhere = False
    assert not nested_everywhere


def test_split_too_few_sessions():
    corpus = Corpus(sessions=(_session("only"),))
    with pytest.raises(TooFewSessions):
        split_sessions(corpus, SplitSpec())


def test_realign_drops_leading_patient_and_supersedes():
    s = SessionTranscript(
        session_id="r",
        disorder=Disorder.DEPRESSION,
        turns=(
            Turn(Speaker.PATIENT, "ignored lead"),
            Turn(Speaker.THERAPIST, "first ask"),
            Turn(Speaker.THERAPIST, "second ask"),
            Turn(Speaker.PATIENT, "answer one"),
            Turn(Speaker.PATIENT, "unpaired extra"),
            Turn(Speaker.THERAPIST, "third ask"),
            Turn(Speaker.PATIENT, "answer two"),
        ),
    )
    pairs = realign_pairs(s)
    assert [(t.text, p.text) for t, p in pairs] == [
        ("second ask", "answer one"),
        ("third ask", "answer two"),
    ]


def test_filter_disorder():
    corpus = Corpus(
        sessions=(
            _session("a", disorder=Disorder.ANXIETY),
            _session("b", disorder=Disorder.DEPRESSION),
        )
    )
    kept = corpus.filter_disorder(Disorder.ANXIETY)
    assert [s.session_id for s in kept.sessions] == ["a"]
