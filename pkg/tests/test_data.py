"""Dataset schema: JSONL round-trips, validation, SemEval XML, slicing."""

import json
import random
import unicodedata

import pytest

from mtsent.data import (AugmentedInstance, DataError, Dataset, Instance,
                         POLARITIES, convert_semeval_xml, is_augmented,
                         load_jsonl, load_lexicon, save_jsonl, slice_implicit,
                         split_implicit)


def plain(i, polarity="positive", implicit=False, sentence=None):
    return Instance(id=f"i{i}", sentence=sentence or f"sentence {i}",
                    target=f"t{i}", polarity=polarity, implicit=implicit)


def augmented(i, **kw):
    base = plain(i, polarity=kw.pop("polarity", "negative"),
                 implicit=kw.pop("implicit", True))
    defaults = dict(aspect="thing", aspect_confidence=0.9,
                    opinion="bad", opinion_confidence=0.75,
                    refine_epochs_used=2, consensus_reached=True)
    defaults.update(kw)
    return AugmentedInstance(base=base, **defaults)


# --- validation ---------------------------------------------------------

def test_instance_rejects_bad_fields():
    with pytest.raises(DataError):
        plain(1, sentence="   ")
    with pytest.raises(DataError):
        Instance(id="x", sentence="ok", target="", polarity="positive",
                 implicit=False)
    with pytest.raises(DataError):
        plain(1, polarity="mixed")


def test_augmented_confidence_range_enforced():
    with pytest.raises(DataError):
        augmented(1, opinion_confidence=0.49)
    with pytest.raises(DataError):
        augmented(1, aspect_confidence=1.01)
    with pytest.raises(DataError):
        augmented(1, refine_epochs_used=-1)
    assert augmented(1, opinion_confidence=0.5).opinion_confidence == 0.5


def test_unicode_is_nfc_normalized():
    decomposed = unicodedata.normalize("NFD", "café")
    inst = Instance(id="u", sentence=decomposed, target="café",
                    polarity="neutral", implicit=False)
    assert inst.sentence == unicodedata.normalize("NFC", "café")


def test_dataset_rejects_duplicate_ids():
    with pytest.raises(DataError):
        Dataset(name="d", instances=[plain(1), plain(1)])


# --- JSONL round-trip ----------------------------------------------------

def _random_dataset(rng, k):
    insts = []
    for i in range(rng.randint(1, 12)):
        if rng.random() < 0.5:
            insts.append(plain(i, polarity=rng.choice(POLARITIES),
                               implicit=rng.random() < 0.5))
        else:
            insts.append(augmented(
                i, polarity=rng.choice(POLARITIES),
                aspect_confidence=round(rng.uniform(0.5, 1.0), 4),
                opinion_confidence=round(rng.uniform(0.5, 1.0), 4),
                refine_epochs_used=rng.randint(0, 3),
                consensus_reached=rng.random() < 0.7,
            ))
    return Dataset(name=f"rand{k}", instances=insts)


def test_jsonl_round_trip_is_identity(tmp_path):
    rng = random.Random(404)
    for k in range(30):
        ds = _random_dataset(rng, k)
        path = tmp_path / f"ds{k}.jsonl"
        save_jsonl(ds, path)
        back = load_jsonl(path, name=ds.name)
        assert back.instances == ds.instances


def test_saved_lines_use_canonical_key_order(tmp_path):
    ds = Dataset(name="d", instances=[augmented(0), plain(1)])
    path = tmp_path / "d.jsonl"
    save_jsonl(ds, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    keys0 = list(json.loads(lines[0]))
    assert keys0 == ["id", "sentence", "target", "polarity", "implicit",
                     "aspect", "aspect_confidence", "opinion",
                     "opinion_confidence", "refine_epochs_used",
                     "consensus_reached"]
    keys1 = list(json.loads(lines[1]))
    assert keys1 == ["id", "sentence", "target", "polarity", "implicit"]


def test_load_reports_offending_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps({"id": "a", "sentence": "s", "target": "t",
                       "polarity": "positive", "implicit": False})
    path.write_text(good + "\n" + "{not json}\n", encoding="utf-8")
    with pytest.raises(DataError, match="line 2"):
        load_jsonl(path)


def test_incomplete_augmented_fields_rejected(tmp_path):
    obj = {"id": "a", "sentence": "s", "target": "t",
           "polarity": "positive", "implicit": False,
           "aspect": "x", "aspect_confidence": 0.9}  # opinion pair missing
    path = tmp_path / "frag.jsonl"
    path.write_text(json.dumps(obj) + "\n", encoding="utf-8")
    with pytest.raises(DataError):
        load_jsonl(path)


def test_strict_rejects_low_confidence_lenient_clips(tmp_path):
    obj = {"id": "a", "sentence": "s", "target": "t",
           "polarity": "positive", "implicit": True,
           "aspect": "x", "aspect_confidence": 0.3,
           "opinion": "y", "opinion_confidence": 0.8,
           "refine_epochs_used": 1, "consensus_reached": False}
    path = tmp_path / "low.jsonl"
    path.write_text(json.dumps(obj) + "\n", encoding="utf-8")
    with pytest.raises(DataError):
        load_jsonl(path)
    ds = load_jsonl(path, lenient=True)
    assert ds.instances[0].aspect_confidence == 0.5
    assert ds.clip_warnings == 1


# --- SemEval XML ---------------------------------------------------------

SEMEVAL_XML = """<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="813">
    <text>The pizza was great but the staff was rude.</text>
    <aspectTerms>
      <aspectTerm term="pizza" polarity="positive" from="4" to="9"/>
      <aspectTerm term="staff" polarity="negative" from="28" to="33"/>
      <aspectTerm term="menu" polarity="conflict" from="0" to="0"/>
    </aspectTerms>
  </sentence>
  <sentence id="814">
    <text>They forgot my order twice.</text>
    <aspectTerms>
      <aspectTerm term="order" polarity="negative" from="15" to="20"/>
    </aspectTerms>
  </sentence>
  <sentence id="815">
    <text>No terms annotated here.</text>
  </sentence>
</sentences>
"""


def test_semeval_conversion(tmp_path):
    path = tmp_path / "sem.xml"
    path.write_text(SEMEVAL_XML, encoding="utf-8")
    ds = convert_semeval_xml(path, name="rest")
    assert [i.id for i in ds] == ["813:0", "813:1", "814:0"]
    assert ds.conflict_dropped == 1
    assert ds.instances[0].polarity == "positive"
    assert ds.instances[0].target == "pizza"
    # "great" and "rude" are lexicon words; sentence 814 has none
    assert not ds.instances[0].implicit
    assert ds.instances[2].implicit


def test_semeval_missing_polarity_is_error(tmp_path):
    bad = SEMEVAL_XML.replace(' polarity="negative" from="15"', ' from="15"')
    path = tmp_path / "bad.xml"
    path.write_text(bad, encoding="utf-8")
    with pytest.raises(DataError, match="polarity"):
        convert_semeval_xml(path)


def test_semeval_malformed_xml_is_error(tmp_path):
    path = tmp_path / "broken.xml"
    path.write_text("<sentences><sentence>", encoding="utf-8")
    with pytest.raises(DataError, match="malformed"):
        convert_semeval_xml(path)


def test_semeval_flags_map_is_authoritative(tmp_path):
    path = tmp_path / "sem.xml"
    path.write_text(SEMEVAL_XML, encoding="utf-8")
    flags = {"813:0": True, "813:1": False, "814:0": False}
    ds = convert_semeval_xml(path, flags=flags)
    assert ds.instances[0].implicit and not ds.instances[2].implicit
    with pytest.raises(DataError, match="missing from flags"):
        convert_semeval_xml(path, flags={"813:0": True})


# --- implicit splitting --------------------------------------------------

def test_split_implicit_partitions_and_rewrites_flags():
    ds = Dataset(name="d", instances=[
        plain(0, sentence="the food was great"),
        plain(1, sentence="they forgot my order"),
        augmented(2),
    ])
    flags = {"i0": False, "i1": True, "i2": True}
    explicit, implicit = split_implicit(ds, flags=flags)
    assert [i.id for i in explicit] == ["i0"]
    assert sorted(i.id for i in implicit) == ["i1", "i2"]
    assert all(i.implicit for i in implicit)
    assert all(not i.implicit for i in explicit)
    assert is_augmented(implicit.instances[1])


def test_split_implicit_lexicon_heuristic():
    ds = Dataset(name="d", instances=[
        plain(0, sentence="the food was great"),
        plain(1, sentence="they forgot my order"),
    ])
    explicit, implicit = split_implicit(ds)
    assert [i.id for i in explicit] == ["i0"]
    assert [i.id for i in implicit] == ["i1"]


def test_split_implicit_missing_flag_ids_error():
    ds = Dataset(name="d", instances=[plain(0), plain(1)])
    with pytest.raises(DataError, match="i1"):
        split_implicit(ds, flags={"i0": True})


def test_split_union_preserves_instances():
    rng = random.Random(7)
    ds = _random_dataset(rng, 0)
    flags = {i.id: rng.random() < 0.5 for i in ds}
    explicit, implicit = split_implicit(ds, flags=flags)
    assert len(explicit) + len(implicit) == len(ds)
    assert {i.id for i in explicit} | {i.id for i in implicit} \
        == {i.id for i in ds}


def test_slice_implicit_none_when_empty():
    ds = Dataset(name="d", instances=[plain(0, implicit=False)])
    assert slice_implicit(ds) is None
    ds2 = Dataset(name="d", instances=[plain(0, implicit=True), plain(1)])
    sl = slice_implicit(ds2)
    assert [i.id for i in sl] == ["i0"]


def test_load_lexicon_skips_comments(tmp_path):
    path = tmp_path / "lex.txt"
    path.write_text("Great\n# a comment\n\nrude\n", encoding="utf-8")
    lex = load_lexicon(path)
    assert lex == frozenset({"great", "rude"})
