"""Language-model provider backed by the built-in reference model."""

from __future__ import annotations

from ..reference_lm import RefLMParams, beam_search_ids, score_answer
from ..text import END, tokenize
from .base import DEFAULT_BEAM_WIDTH, Generation, LMScore


class ReferenceLM:
    """Wraps :class:`RefLMParams`; generated token sequences that spell a
    category are returned as that category's exact name."""

    answer_suffix = f" {END}"
    supports_gradients = True

    def __init__(self, params: RefLMParams, categories=()):
        self.params = params
        self.identity = f"reference:{params.fingerprint()}"
        self._names = {tuple(tokenize(n)): n for n in categories}
        longest = max((len(k) for k in self._names), default=4)
        self.default_max_tokens = longest + 1

    def lm_score(self, prompt: str, completion: str) -> LMScore:
        tokens = tokenize(completion)
        if not tokens:
            raise ValueError("completion must contain at least one token")
        return score_answer(self.params, prompt, tokens)

    def lm_generate(self, prompt: str, beam_width: int = DEFAULT_BEAM_WIDTH,
                    max_tokens: int | None = None) -> Generation:
        ids, score, truncated = beam_search_ids(self.params, prompt, beam_width,
                                                max_tokens or self.default_max_tokens)
        tokens = tuple(self.params.answer_vocab[i] for i in ids)
        text = self._names.get(tokens, " ".join(tokens))
        return Generation(text, truncated, score)
