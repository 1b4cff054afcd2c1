import json

import numpy as np
import pytest

from textbridge.errors import CapabilityError, FormatError, ProviderError
from textbridge.providers.base import (LMScore, attribute_prompt, compose_attribute,
                                       split_attribute_response)
from textbridge.providers.fixture import (FixtureAttributes, FixtureCaptioner, FixtureEmbedder,
                                          FixtureLM, input_digest)


def _write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def test_embedder_by_text_and_digest(tmp_path):
    p = _write(tmp_path / "e.jsonl", [{"text": "A photo of dog", "vector": [1, 2]},
                                      {"sha256": input_digest("img.jpg"), "vector": [3, 4]}])
    e = FixtureEmbedder(p)
    assert np.array_equal(e.embed("A photo of dog"), [1.0, 2.0])
    assert np.array_equal(e.embed("img.jpg"), [3.0, 4.0])
    with pytest.raises(ProviderError):
        e.embed("unknown")
    assert e.identity.startswith("fixture-embed:")


def test_captioner_truncates_to_n(tmp_path):
    p = _write(tmp_path / "c.jsonl", [{"id": "img", "captions": [f"c{i}" for i in range(10)]}])
    cap = FixtureCaptioner(p)
    assert cap.generate_captions("img", 5) == ["c0", "c1", "c2", "c3", "c4"]
    with pytest.raises(ProviderError):
        cap.generate_captions("img", 11)


def test_attributes_from_response_text(tmp_path):
    p = _write(tmp_path / "a.jsonl", [{"tag": "house", "response": "1. is a building with walls and a roof\n- has windows\n"},
                                      {"tag": "void", "attributes": [" "]}])
    a = FixtureAttributes(p)
    assert a.generate_attributes("house") == ["is a building with walls and a roof", "has windows"]
    assert compose_attribute("house", a.generate_attributes("house")[0]) == \
        "house which is a building with walls and a roof"
    with pytest.raises(ProviderError):
        a.generate_attributes("void")
    assert a.prompt_for("dog") == "What are useful features for distinguishing a dog in a photo?"


def test_lm_answers_and_scores(tmp_path):
    p = _write(tmp_path / "l.jsonl", [
        {"prompt": "q1", "answer": "movie", "scores": {"dog": [-1.0], "house": [-0.25, -0.25]}},
        {"prompt": "*", "answer": "person"},
    ])
    lm = FixtureLM(p)
    assert lm.lm_generate("q1").text == "movie"
    assert lm.lm_generate("anything else").text == "person"
    assert lm.lm_score("q1", "house").total == -0.5
    with pytest.raises(CapabilityError):
        lm.lm_score("other", "dog")


def test_malformed_fixture(tmp_path):
    (tmp_path / "bad.jsonl").write_text('{"text": "a", "vector": [1]}\nnot json\n')
    with pytest.raises(FormatError) as info:
        FixtureEmbedder(tmp_path / "bad.jsonl")
    assert info.value.line == 2


def test_lmscore_invariants():
    s = LMScore(("a", "b"), (-1.0, -0.5))
    assert s.total == -1.5
    with pytest.raises(ValueError):
        LMScore(("a",), (0.5,))
    with pytest.raises(ValueError):
        LMScore(("a",), (-1.0, -2.0))
    with pytest.raises(ValueError):
        LMScore(("a",), (-1.0,), total=-2.0)


def test_split_attribute_markers():
    assert split_attribute_response("* a\n2) b\n(c) c\n\n  d  ") == ["a", "b", "c", "d"]
    assert attribute_prompt("cat") == "What are useful features for distinguishing a cat in a photo?"
