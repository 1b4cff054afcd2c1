"""A small trainable autoregressive answer model with a low-rank adapter.

The model predicts answer tokens one at a time. At step ``j`` the input is
the hashed bag-of-tokens of the prompt concatenated with a one-hot of the
previous answer token, and the next-token distribution is

    softmax(W @ [phi(prompt); onehot(prev)]),   W = W0 + (alpha / r) * A @ B.T

``W0`` is frozen; only the adapter factors ``A`` (|V| x r) and ``B``
(input_dim x r) are trained. The answer vocabulary is the set of category
tokens plus ``<end>``. The start-of-answer marker shares the ``<end>``
one-hot slot, since ``<end>`` never precedes another answer token.
"""

from __future__ import annotations

import hashlib
import io
import zipfile
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .errors import DuplicateError, FormatError, NumericsError, VocabError
from .providers.base import DEFAULT_BEAM_WIDTH, Generation, LMScore
from .text import BEGIN, END, tokenize

FORMAT_VERSION = "reflm-1"
TOKENIZER_RULE = "lowercase; split [^\\W_]+; punctuation dropped; specials <begin> <end>"
TOKENIZER_HASH = hashlib.sha256(TOKENIZER_RULE.encode()).hexdigest()[:16]
DEFAULT_FEAT_DIM = 2 ** 16


@dataclass(frozen=True)
class Features:
    """Sparse hashed bag-of-tokens: sorted unique indices and their counts."""

    indices: np.ndarray
    values: np.ndarray
    tokens: tuple[str, ...] = field(default=(), compare=False)

    def dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim)
        out[self.indices] = self.values
        return out


@lru_cache(maxsize=1 << 18)
def feature_index(token: str, feat_dim: int, seed: int = 0) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8,
                             key=seed.to_bytes(8, "little")).digest()
    return int.from_bytes(digest, "little") % feat_dim


def featurize(prompt: str, feat_dim: int = DEFAULT_FEAT_DIM, seed: int = 0) -> Features:
    tokens = tuple(t for t in tokenize(prompt) if t not in (BEGIN, END))
    counts: dict[int, float] = {}
    for t in tokens:
        h = feature_index(t, feat_dim, seed)
        counts[h] = counts.get(h, 0.0) + 1.0
    idx = np.array(sorted(counts), dtype=np.int64)
    return Features(idx, np.array([counts[i] for i in idx], dtype=np.float64), tokens)


def answer_vocabulary(categories: Iterable[str]) -> tuple[str, ...]:
    """Category tokens in first-appearance order, then ``<end>``."""
    vocab: dict[str, None] = {}
    seqs: dict[tuple[str, ...], str] = {}
    for name in categories:
        toks = tuple(tokenize(name))
        if not toks:
            raise VocabError(f"category {name!r} has no tokens")
        if toks in seqs:
            raise DuplicateError(f"categories {seqs[toks]!r} and {name!r} tokenize identically")
        seqs[toks] = name
        vocab.update(dict.fromkeys(toks))
    return tuple(vocab) + (END,)


@dataclass(frozen=True)
class RefLMParams:
    answer_vocab: tuple[str, ...]
    feat_dim: int
    W0: np.ndarray
    A: np.ndarray
    B: np.ndarray
    alpha: float = 16.0
    hash_seed: int = 0
    _ids: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vocab = tuple(self.answer_vocab)
        object.__setattr__(self, "answer_vocab", vocab)
        if not vocab or vocab[-1] != END or vocab.count(END) != 1:
            raise VocabError("answer vocabulary must end with a single <end> token")
        V, D = len(vocab), self.feat_dim + len(vocab)
        if self.W0.shape != (V, D):
            raise ValueError(f"W0 has shape {self.W0.shape}, expected {(V, D)}")
        if self.A.ndim != 2 or self.A.shape[0] != V:
            raise ValueError(f"A has shape {self.A.shape}, expected ({V}, r)")
        if self.B.shape != (D, self.A.shape[1]):
            raise ValueError(f"B has shape {self.B.shape}, expected {(D, self.A.shape[1])}")
        if self.A.shape[1] < 1:
            raise ValueError("adapter rank must be >= 1")
        # the base weights never change once built
        self.W0.flags.writeable = False
        object.__setattr__(self, "_ids", {t: i for i, t in enumerate(vocab)})

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    @property
    def vocab_size(self) -> int:
        return len(self.answer_vocab)

    @property
    def input_dim(self) -> int:
        return self.feat_dim + self.vocab_size

    @property
    def end_id(self) -> int:
        return self.vocab_size - 1

    def token_id(self, token: str) -> int:
        if token == BEGIN:
            return self.end_id
        try:
            return self._ids[token]
        except KeyError:
            raise VocabError(f"token {token!r} is not in the answer vocabulary") from None

    def with_adapter(self, A: np.ndarray, B: np.ndarray) -> "RefLMParams":
        return replace(self, A=A, B=B)

    def copy(self) -> "RefLMParams":
        return replace(self, A=self.A.copy(), B=self.B.copy())

    def effective_weights(self) -> np.ndarray:
        return self.W0 + self.scale * self.A @ self.B.T

    def featurize(self, prompt: str) -> Features:
        return featurize(prompt, self.feat_dim, self.hash_seed)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.answer_vocab, self.feat_dim, float(self.alpha), self.hash_seed)).encode())
        for arr in (self.W0, self.A, self.B):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]


def format_prior(categories: Iterable[str], vocab: Sequence[str], strength: float) -> np.ndarray:
    """Previous-token block of the base weights encoding the answer grammar.

    Transitions that occur in some category's token sequence (start to first
    token, token to token, last token to ``<end>``) get 0; every other
    transition gets ``-strength``. This stands in for a pretrained model that
    already knows how answers are formatted; it favours no category.
    """
    ids = {t: i for i, t in enumerate(vocab)}
    end = ids[END]
    block = np.full((len(vocab), len(vocab)), -float(strength))
    for name in categories:
        prev = end
        for t in [ids[t] for t in tokenize(name)] + [end]:
            block[t, prev] = 0.0
            prev = t
    return block


def init_params(categories: Iterable[str], feat_dim: int = DEFAULT_FEAT_DIM, rank: int = 8,
                alpha: float = 16.0, seed: int = 0, base_std: float = 0.01,
                prior_strength: float = 10.0, adapter_bound: float | None = None,
                hash_seed: int = 0) -> RefLMParams:
    """Frozen base (small noise + answer-format prior) and a zero-update adapter.

    As in LoRA, the output-side factor ``A`` starts at zero and the input-side
    factor ``B`` is uniform in ``[-1/sqrt(input_dim), 1/sqrt(input_dim)]``
    unless ``adapter_bound`` overrides the bound.
    """
    categories = list(categories)
    vocab = answer_vocabulary(categories)
    V, D = len(vocab), feat_dim + len(vocab)
    rng = np.random.default_rng(seed)
    W0 = rng.normal(0.0, base_std, size=(V, D)) if base_std > 0 else np.zeros((V, D))
    W0[:, feat_dim:] += format_prior(categories, vocab, prior_strength)
    bound = 1.0 / np.sqrt(D) if adapter_bound is None else adapter_bound
    B = rng.uniform(-bound, bound, size=(D, rank))
    return RefLMParams(vocab, feat_dim, W0, np.zeros((V, rank)), B, float(alpha), hash_seed)


def _as_features(params: RefLMParams, prompt) -> Features:
    return prompt if isinstance(prompt, Features) else params.featurize(prompt)


def step_logprob_table(params: RefLMParams, prompt) -> np.ndarray:
    """Log-probability table ``T[prev, next]`` for one prompt."""
    f = _as_features(params, prompt)
    fd, s = params.feat_dim, params.scale
    z = params.W0[:, f.indices] @ f.values + s * (params.A @ (params.B[f.indices].T @ f.values))
    P = params.W0[:, fd:] + s * params.A @ params.B[fd:].T
    Z = z[None, :] + P.T
    return Z - logsumexp(Z, axis=1, keepdims=True)


def score_answer(params: RefLMParams, prompt, answer_tokens: Sequence[str]) -> LMScore:
    ids = [params.token_id(t) for t in answer_tokens]
    table = step_logprob_table(params, prompt)
    prev, lps = params.end_id, []
    for t in ids:
        lps.append(min(float(table[prev, t]), 0.0))
        prev = t
    return LMScore(tuple(answer_tokens), tuple(lps))


def beam_search_ids(params: RefLMParams, prompt, beam_width: int = DEFAULT_BEAM_WIDTH,
                    max_tokens: int = 8) -> tuple[tuple[int, ...], float, bool]:
    """Beam search over token ids.

    Each step keeps the ``beam_width`` best expansions ranked by summed
    log-probability, ties broken by lexicographic token-id order. Expansions
    ending in ``<end>`` are retired as finished hypotheses. Returns
    ``(ids without <end>, total logprob, truncated)``.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    table = step_logprob_table(params, prompt)
    end = params.end_id
    V = params.vocab_size
    live: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
    finished: list[tuple[float, tuple[int, ...]]] = []
    for _ in range(max_tokens):
        cands = []
        for score, seq in live:
            row = table[seq[-1] if seq else end]
            cands.extend((score + float(row[t]), seq + (t,)) for t in range(V))
        cands.sort(key=lambda c: (-c[0], c[1]))
        kept = cands[:beam_width]
        finished.extend(c for c in kept if c[1][-1] == end)
        live = [c for c in kept if c[1][-1] != end]
        if not live:
            break
    if finished:
        score, seq = min(finished, key=lambda c: (-c[0], c[1]))
        return seq[:-1], score, False
    score, seq = min(live, key=lambda c: (-c[0], c[1]))
    return seq, score, True


def beam_generate(params: RefLMParams, prompt, beam_width: int = DEFAULT_BEAM_WIDTH,
                  max_tokens: int = 8) -> Generation:
    ids, score, truncated = beam_search_ids(params, prompt, beam_width, max_tokens)
    text = " ".join(params.answer_vocab[i] for i in ids)
    return Generation(text, truncated, score)


# ----------------------------------------------------------------------------
# training


def _design_matrix(params: RefLMParams, batch):
    """Stack one sparse input row per (example, answer position)."""
    fd = params.feat_dim
    data, cols, indptr, targets, owner = [], [], [0], [], []
    for i, (prompt, answer) in enumerate(batch):
        f = _as_features(params, prompt)
        prev = params.end_id
        for tok in answer:
            t = params.token_id(tok)
            cols.append(f.indices)
            cols.append(np.array([fd + prev], dtype=np.int64))
            data.append(f.values)
            data.append(np.ones(1))
            indptr.append(indptr[-1] + len(f.indices) + 1)
            targets.append(t)
            owner.append(i)
            prev = t
    X = sp.csr_matrix((np.concatenate(data), np.concatenate(cols), np.array(indptr)),
                      shape=(len(targets), params.input_dim))
    return X, np.array(targets, dtype=np.int64), np.array(owner, dtype=np.int64)


def loss_and_grad(params: RefLMParams, batch) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean per-example negative log-likelihood and its gradients w.r.t. A and B.

    ``batch`` is a sequence of ``(prompt or Features, answer_tokens)``.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    n = len(batch)
    X, targets, _ = _design_matrix(params, batch)
    s = params.scale
    XB = X @ params.B
    Z = np.asarray(X @ params.W0.T) + s * (XB @ params.A.T)
    logp = Z - logsumexp(Z, axis=1, keepdims=True)
    rows = np.arange(len(targets))
    loss = -float(logp[rows, targets].sum()) / n
    G = np.exp(logp)
    G[rows, targets] -= 1.0
    G /= n
    dA = s * (G.T @ XB)
    dB = s * np.asarray(X.T @ (G @ params.A))
    return loss, dA, dB


def batch_loss(params: RefLMParams, batch) -> float:
    batch = list(batch)
    X, targets, _ = _design_matrix(params, batch)
    Z = np.asarray(X @ params.W0.T) + params.scale * ((X @ params.B) @ params.A.T)
    logp = Z - logsumexp(Z, axis=1, keepdims=True)
    return -float(logp[np.arange(len(targets)), targets].sum()) / len(batch)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 128
    steps: int | None = 100
    epochs: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if (self.steps is None) == (self.epochs is None):
            raise ValueError("set exactly one of steps / epochs")
        if (self.steps is not None and self.steps < 0) or (self.epochs is not None and self.epochs < 0):
            raise ValueError("steps/epochs must be >= 0")

    def total_steps(self, n_examples: int) -> int:
        if self.steps is not None:
            return self.steps
        return self.epochs * -(-n_examples // self.batch_size)


@dataclass
class AdamState:
    m_A: np.ndarray
    v_A: np.ndarray
    m_B: np.ndarray
    v_B: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params: RefLMParams) -> "AdamState":
        return cls(np.zeros_like(params.A), np.zeros_like(params.A),
                   np.zeros_like(params.B), np.zeros_like(params.B), 0)

    def copy(self) -> "AdamState":
        return AdamState(self.m_A.copy(), self.v_A.copy(), self.m_B.copy(), self.v_B.copy(), self.step)


def _adamw(p, g, m, v, t, cfg: TrainConfig):
    m = cfg.beta1 * m + (1 - cfg.beta1) * g
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
    m_hat = m / (1 - cfg.beta1 ** t)
    v_hat = v / (1 - cfg.beta2 ** t)
    p = p * (1 - cfg.lr * cfg.weight_decay) - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return p, m, v


def apply_update(params: RefLMParams, dA, dB, cfg: TrainConfig, state: AdamState):
    if not (np.all(np.isfinite(dA)) and np.all(np.isfinite(dB))):
        raise NumericsError(f"non-finite gradient at step {state.step + 1}")
    t = state.step + 1
    A, m_A, v_A = _adamw(params.A, dA, state.m_A, state.v_A, t, cfg)
    B, m_B, v_B = _adamw(params.B, dB, state.m_B, state.v_B, t, cfg)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise NumericsError(f"non-finite parameters after step {t}")
    return params.with_adapter(A, B), AdamState(m_A, v_A, m_B, v_B, t)


def train_step(params: RefLMParams, batch, cfg: TrainConfig, state: AdamState | None = None):
    """One AdamW step on the adapter; returns ``(params, state, loss)``."""
    state = state or AdamState.zeros_like(params)
    loss, dA, dB = loss_and_grad(params, batch)
    if not np.isfinite(loss):
        raise NumericsError(f"non-finite loss at step {state.step + 1}")
    params, state = apply_update(params, dA, dB, cfg, state)
    return params, state, loss


# ----------------------------------------------------------------------------
# sensitivity


def feature_gradient(params: RefLMParams, prompt, answer_tokens: Sequence[str]):
    """d(-log p(answer | prompt)) / d(phi) at the prompt's nonzero features."""
    f = _as_features(params, prompt)
    table = step_logprob_table(params, f)
    g = np.zeros(params.vocab_size)
    prev = params.end_id
    for tok in answer_tokens:
        t = params.token_id(tok)
        g += np.exp(table[prev])
        g[t] -= 1.0
        prev = t
    W_cols = params.W0[:, f.indices] + params.scale * params.A @ params.B[f.indices].T
    return f, W_cols.T @ g


def token_sensitivity(params: RefLMParams, prompt: str, answer_tokens: Sequence[str]) -> dict[str, float]:
    """Absolute loss gradient for every prompt token (shared by all its occurrences)."""
    f, grad = feature_gradient(params, prompt, answer_tokens)
    by_index = dict(zip(f.indices.tolist(), np.abs(grad).tolist()))
    return {tok: by_index[feature_index(tok, params.feat_dim, params.hash_seed)]
            for tok in dict.fromkeys(f.tokens)}


# ----------------------------------------------------------------------------
# checkpoints

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(path, params: RefLMParams, state: AdamState | None = None) -> str:
    """Write a deterministic (byte-stable) npz container; returns the fingerprint."""
    state = state or AdamState.zeros_like(params)
    arrays = {
        "format_version": np.array(FORMAT_VERSION),
        "tokenizer_hash": np.array(TOKENIZER_HASH),
        "answer_vocab": np.array(params.answer_vocab),
        "dims": np.array([params.feat_dim, params.vocab_size, params.rank, params.hash_seed],
                         dtype=np.int64),
        "alpha": np.array(params.alpha, dtype=np.float64),
        "W0": params.W0, "A": params.A, "B": params.B,
        "m_A": state.m_A, "v_A": state.v_A, "m_B": state.m_B, "v_B": state.v_B,
        "step": np.array(state.step, dtype=np.int64),
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_DATE), buf.getvalue())
    return params.fingerprint()


def load_checkpoint(path) -> tuple[RefLMParams, AdamState]:
    with np.load(path, allow_pickle=False) as z:
        if str(z["format_version"]) != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {z['format_version']}")
        if str(z["tokenizer_hash"]) != TOKENIZER_HASH:
            raise FormatError("checkpoint was written with a different tokenizer")
        feat_dim, _, _, hash_seed = (int(x) for x in z["dims"])
        params = RefLMParams(tuple(str(t) for t in z["answer_vocab"]), feat_dim,
                             z["W0"].copy(), z["A"].copy(), z["B"].copy(),
                             float(z["alpha"]), hash_seed)
        state = AdamState(z["m_A"].copy(), z["v_A"].copy(), z["m_B"].copy(), z["v_B"].copy(),
                          int(z["step"]))
    return params, state

