"""Offline RL topic-recommendation engine for two-party therapy-style dialogues.

Pipeline: transcripts -> hashed text embeddings -> alliance scoring ->
transition datasets -> DDPG/TD3/BCQ policies -> evaluation, interpretability,
and a live session service.
"""

__version__ = "0.1.0"
