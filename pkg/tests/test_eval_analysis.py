import math
from dataclasses import replace

import numpy as np
import pytest

from textbridge.dataset_io import CategorySet, MultiDomainDataset, SampleRecord
from textbridge.description import Description
from textbridge.errors import CapabilityError, SizeError
from textbridge.eval_analysis import (AccuracyTable, dg_protocol, export_embeddings,
                                      sensitivity_report, stopwords, uda_protocol,
                                      word_frequency)
from textbridge.prompting import prompt_for_sample
from textbridge.reference_lm import TrainConfig, feature_index, init_params, tokenize
from textbridge.synthetic import make_dg_dataset


def test_dg_table_rendering():
    t = AccuracyTable("dg", ("A", "C", "P", "S"))
    for d, v in zip("ACPS", (90.0, 80.0, 99.5, 70.25)):
        t.add(d, v)
    assert t.average == pytest.approx(84.9375)
    assert t.to_tsv() == "A\tC\tP\tS\tAvg\n90.0\t80.0\t99.5\t70.2\t84.9\n"
    assert t.to_text().splitlines()[0].split() == ["A", "C", "P", "S", "Avg"]
    with pytest.raises(ValueError):
        t.add("A", 101.0)


def test_uda_table_shape_and_averages():
    t = AccuracyTable("uda", ("A", "B", "C"))
    vals = {("A", "B"): 10.0, ("A", "C"): 20.0, ("B", "A"): 30.0, ("B", "C"): 40.0,
            ("C", "A"): 50.0, ("C", "B"): 60.0}
    for k, v in vals.items():
        t.add(k, v)
    grid = [row.split("\t") for row in t.to_tsv().splitlines()]
    assert grid == [["src\\tgt", "A", "B", "C", "Avg"],
                    ["A", "", "10.0", "20.0", "15.0"],
                    ["B", "30.0", "", "40.0", "35.0"],
                    ["C", "50.0", "60.0", "", "55.0"],
                    ["Avg", "40.0", "35.0", "30.0", "35.0"]]
    assert t.to_json()["cells"]["A->B"] == 10.0 and not t.partial


def test_partial_table_marks_missing():
    t = AccuracyTable("dg", ("A", "B"))
    t.add("A", 50.0)
    t.errors["B"] = "boom"
    assert t.partial and t.to_tsv().splitlines()[1] == "50.0\t-\t50.0"
    assert "partial" in t.to_text()
    assert math.isnan(AccuracyTable("dg", ("A",)).average)


def _twin_domains():
    base = make_dg_dataset(domains=("A",), per_domain=21, seed=4)
    recs = list(base.domains["A"])
    twins = [SampleRecord("b" + r.id, "B", r.label, None, r.description) for r in recs]
    return MultiDomainDataset.from_records(recs + twins, base.category_set)


def test_dg_protocol_identical_domains(tmp_path):
    ds = _twin_domains()
    init = lambda d: init_params(d.category_set.names, feat_dim=2048)
    t = dg_protocol(ds, TrainConfig(steps=60, batch_size=16, lr=0.01), init, run_dir=tmp_path)
    assert set(t.cells) == {"A", "B"}
    assert t.cells["A"] == t.cells["B"] >= 90.0
    assert (tmp_path / "dg_A" / "predictions.jsonl").exists()
    with pytest.raises(SizeError):
        dg_protocol(make_dg_dataset(domains=("A",), per_domain=7))


def test_uda_protocol_covers_ordered_pairs():
    ds = make_dg_dataset(per_domain=14, seed=5)
    init = lambda d: init_params(d.category_set.names, feat_dim=1024)
    cfg = TrainConfig(steps=3, batch_size=16)
    t = uda_protocol(ds, rounds=1, dg_cfg=cfg, uda_cfg=cfg, init=init)
    assert len(t.cells) == 12 and not t.partial
    assert ("A", "A") not in t.cells
    assert t.average == pytest.approx(sum(t.cells.values()) / 12)


def test_uda_protocol_records_failures():
    ds = make_dg_dataset(domains=("A", "C"), per_domain=7, seed=6)
    unlabeled = [SampleRecord(r.id, r.domain, None, None, r.description) for r in ds.domains["C"]]
    ds = MultiDomainDataset.from_records(list(ds.domains["A"]) + unlabeled, ds.category_set)
    init = lambda d: init_params(d.category_set.names, feat_dim=512)
    cfg = TrainConfig(steps=1, batch_size=8)
    t = uda_protocol(ds, dg_cfg=cfg, uda_cfg=cfg, init=init)
    assert t.partial and set(t.errors) == {("A", "C"), ("C", "A")}
    assert "LabelError" in t.errors[("C", "A")]


# four domains, three hand-written descriptions each; counts below were tallied by hand
HAND = {
    "Art": [(("painting", "dog"), ("dog which is a painting",), ("an oil painting of a dog",)),
            (("horse",), ("horse which has a mane",), ("a painting of a horse",)),
            (("person", "portrait"), ("person which wears a hat",), ("a photo of an oil painting",))],
    "Cartoon": [(("cartoon", "dog"), ("dog which is a cartoon character",), ("a cartoon dog",)),
                (("house",), ("house which has a roof",), ("a cartoon of a house",)),
                (("guitar",), ("guitar which has strings",), ("a drawing of a guitar",))],
    "Photo": [(("photo", "dog"), ("dog which looks real",), ("a photo of a dog",)),
              (("photo",), ("elephant which has a trunk",), ("a photo of a photo",)),
              (("giraffe",), ("giraffe which is tall",), ("a giraffe in a field",))],
    "Sketch": [(("sketch",), ("horse which is a sketch",), ("a black and white sketch of a horse",)),
               (("sketch", "pencil"), ("person which is a sketch",), ("a sketch of a person",)),
               (("drawing",), ("dog which is drawn",), ("a painting of a dog",))],
}
HAND_TSV = ("word\tArt\tCartoon\tPhoto\tSketch\n"
            "painting\t1.67\t0.00\t0.00\t0.33\n"
            "oil painting\t0.67\t0.00\t0.00\t0.00\n"
            "cartoon\t0.00\t1.33\t0.00\t0.00\n"
            "photo\t0.33\t0.00\t1.67\t0.00\n"
            "sketch\t0.00\t0.00\t0.00\t2.00\n")


def hand_corpus():
    return [SampleRecord(f"{d}{i}", d, None, None, Description(*parts))
            for d, items in HAND.items() for i, parts in enumerate(items)]


def test_word_frequency_hand_corpus():
    words = ["painting", "oil painting", "cartoon", "photo", "sketch"]
    t = word_frequency(hand_corpus(), words)
    assert t.to_tsv() == HAND_TSV
    assert t.get("sketch", "Sketch") == 2.0


def test_word_frequency_needs_descriptions():
    with pytest.raises(CapabilityError):
        word_frequency([SampleRecord("x", "A", None, "x.jpg")], ["a"])


def _dominant_setup(word="zebra"):
    cs = CategorySet(("cat", "dog"))
    desc = Description(("the", word, "grass"), ("grass which is green",), ("a zebra on the grass",))
    sample = SampleRecord("s", "A", "dog", None, desc)
    p = init_params(cs.names, feat_dim=4096, base_std=0.0)
    prompt = prompt_for_sample(sample, cs).text
    used = {feature_index(t, 4096) for t in tokenize(prompt) if t != word}
    j = feature_index(word, 4096)
    assert j not in used  # no hash collision with any other prompt token
    W0 = p.W0.copy()
    W0[p.token_id("cat"), j] = 5.0
    # a stop-word with an even larger weight must still be left out
    W0[p.token_id("cat"), feature_index("the", 4096)] = 50.0
    return cs, sample, replace(p, W0=W0)


def test_sensitivity_dominant_word_first():
    cs, sample, p = _dominant_setup()
    report = sensitivity_report(p, sample, cs, top_n=10)
    assert report[0][0] == "zebra" and report[0][1] > 0
    assert all(s == 0.0 for _, s in report[1:])
    assert not {w for w, _ in report} & stopwords()
    assert [w for w, _ in report] == ["zebra", "grass", "green"]  # top_n larger than the list


def test_sensitivity_all_stopwords_and_capability():
    cs = CategorySet(("cat", "dog"))
    s = SampleRecord("s", "A", "dog", None, Description(("the",), ("it which is",), ("a the",)))
    assert sensitivity_report(init_params(cs.names, feat_dim=256), s, cs) == []
    with pytest.raises(CapabilityError):
        sensitivity_report(object(), s, cs)
    assert len(stopwords()) == 166 and "the" in stopwords()


class HashEmbed:
    identity = "hash-embed"

    def embed(self, text):
        rng = np.random.default_rng(len(text))
        return rng.normal(size=8)


def test_export_embeddings(tmp_path):
    samples = hand_corpus()[:5]
    assert export_embeddings(samples, HashEmbed(), tmp_path / "e.tsv") == 5
    rows = [r.split("\t") for r in (tmp_path / "e.tsv").read_text().splitlines()]
    assert len(rows) == 6 and all(len(r) == 11 for r in rows)
    assert rows[0][:4] == ["id", "domain", "label", "v0"]
    want = HashEmbed().embed(samples[2].description.render())
    assert np.array_equal(np.array(rows[3][3:], dtype=float), want)
    assert export_embeddings([], HashEmbed(), tmp_path / "empty.tsv") == 0
    assert (tmp_path / "empty.tsv").read_text() == "id\tdomain\tlabel\n"
    with pytest.raises(CapabilityError):
        export_embeddings(samples, object(), tmp_path / "x.tsv")
