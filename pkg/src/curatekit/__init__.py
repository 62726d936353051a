"""Corpus curation and training-run analytics.

Submodules:

- ``corpus``: documents, JSONL ingestion, manifests
- ``dedup``: exact-hash deduplication
- ``quality``: score binarization, hashed-feature classifier, confidence-gated filtering
- ``tokbench``: BPE encoding and tokens-per-word comparison
- ``mixture``: repeat-factor mixtures and token budgets
- ``runstats``: FLOPs per token, MFU, emissions, cost, loss rate of change
- ``evalstats``: checkpoint correlations, reliable-benchmark selection, leaderboards, win rates
"""

__version__ = "0.1.0"
