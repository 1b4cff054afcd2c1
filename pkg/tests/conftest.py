from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from textbridge.dataset_io import CategorySet, parse_record
from textbridge.reference_lm import RefLMParams, answer_vocabulary, feature_index
from textbridge.text import END, tokenize

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

PACS = ("dog", "elephant", "giraffe", "guitar", "horse", "house", "person")


@pytest.fixture
def pacs():
    return CategorySet(PACS)


@pytest.fixture
def example1(pacs):
    """The cartoon-house fixture record, limited to its first five captions."""
    obj = json.loads((FIXTURES / "example1.json").read_text())
    obj["captions"] = obj["captions"][:5]
    return parse_record(obj, pacs)


def random_params(categories, feat_dim=64, rank=3, seed=0, scale=1.0, alpha=6.0):
    """A reference model with all weights random (no format prior)."""
    rng = np.random.default_rng(seed)
    vocab = answer_vocabulary(categories)
    V, D = len(vocab), feat_dim + len(vocab)
    return RefLMParams(vocab, feat_dim, rng.normal(0, scale, (V, D)),
                       rng.normal(0, scale, (V, rank)), rng.normal(0, scale, (D, rank)),
                       alpha)


# ----------------------------------------------------------------------------
# independent oracles: dense, loop-based re-statements of the model


def dense_phi(params, prompt):
    phi = np.zeros(params.feat_dim)
    for tok in tokenize(prompt):
        phi[feature_index(tok, params.feat_dim, params.hash_seed)] += 1.0
    return phi


def oracle_logprobs(params, prompt, tokens):
    """Per-token log-probabilities by explicit dense forward passes."""
    W = params.W0 + (params.alpha / params.rank) * params.A @ params.B.T
    phi = dense_phi(params, prompt)
    ids = {t: i for i, t in enumerate(params.answer_vocab)}
    prev = ids[END]
    out = []
    for tok in tokens:
        x = np.concatenate([phi, np.eye(len(ids))[prev]])
        z = W @ x
        m = z.max()
        lse = m + np.log(np.exp(z - m).sum())
        out.append(z[ids[tok]] - lse)
        prev = ids[tok]
    return out


def oracle_nll(params, examples):
    """Mean per-example negative log-likelihood of (prompt, answer tokens) pairs."""
    return -sum(sum(oracle_logprobs(params, p, toks)) for p, toks in examples) / len(examples)


def category_answer(name):
    return tokenize(name) + [END]


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        name, ok, elapsed, limit, note = results[num]
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {name} ({elapsed:.2f}s / {limit:g}s)"
        terminalreporter.write_line(line + (f"  {note}" if note else ""))
