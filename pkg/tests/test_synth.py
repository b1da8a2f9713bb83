"""Shape and noise-model checks on the generated corpus."""
import dataclasses

from mtsent.data import POLARITIES, is_augmented
from mtsent.model import words
from mtsent.synth import (CUES, FILLERS, SynthSpec, TARGET_NOUNS,
                          _latent_pool, generate)

ALL_CUES = {w for ws in CUES.values() for w in ws}


def info_tokens(sentence):
    """Tokens that are neither fillers nor target nouns."""
    return [w for w in words(sentence)
            if w not in FILLERS and w not in TARGET_NOUNS]


def test_sizes_and_kinds():
    train, test = generate()
    assert len(train) == 200
    assert len(test) == 100
    assert all(is_augmented(i) for i in train)
    assert not any(is_augmented(i) for i in test)
    assert train.name == "synth-train"


def test_every_sentence_carries_exactly_one_info_token():
    train, test = generate()
    for ds in (train, test):
        for inst in ds:
            toks = info_tokens(inst.sentence)
            assert len(toks) == 1, inst.sentence
            if not inst.implicit:
                assert toks[0] in CUES[inst.polarity]
            else:
                assert toks[0] not in ALL_CUES
            assert inst.target in words(inst.sentence)


def test_label_balance_and_implicit_fraction():
    train, _ = generate()
    counts = {label: 0 for label in POLARITIES}
    implicit = 0
    for inst in train:
        counts[inst.polarity] += 1
        implicit += inst.implicit
    assert set(counts.values()) <= {66, 67}
    # implicit_fraction = 0.5; allow sampling noise on 200 draws.
    assert 70 <= implicit <= 130


def test_latent_tokens_recur_in_training():
    # Round-robin assignment: every pseudo-word that appears in test was
    # seen during training, otherwise implicit test sentences would be
    # unanswerable in principle.
    spec = SynthSpec()
    train, test = generate(spec)
    train_tokens = set()
    for inst in train:
        train_tokens.update(info_tokens(inst.sentence))
    pool = _latent_pool(spec)
    for label in POLARITIES:
        for tok in pool[label]:
            assert tok in train_tokens, tok


def test_confidences_track_corruption():
    train, _ = generate()
    for inst in train:
        opinion_clean = inst.opinion in CUES[inst.polarity]
        if opinion_clean:
            assert 0.82 <= inst.opinion_confidence <= 0.98
        else:
            assert 0.50 <= inst.opinion_confidence <= 0.60
        aspect_clean = inst.aspect == inst.target
        if aspect_clean:
            assert 0.82 <= inst.aspect_confidence <= 0.98
        else:
            assert 0.50 <= inst.aspect_confidence <= 0.60
        assert inst.consensus_reached == (opinion_clean and aspect_clean)
        assert inst.refine_epochs_used == (1 if inst.consensus_reached else 3)


def test_corruption_rates_are_plausible():
    train, _ = generate()
    bad_opinion = sum(1 for i in train if i.opinion not in CUES[i.polarity])
    bad_aspect = sum(1 for i in train if i.aspect != i.target)
    # Nominal rates 0.25 and 0.15 over 200 draws.
    assert 25 <= bad_opinion <= 80
    assert 10 <= bad_aspect <= 60


def test_generation_is_deterministic():
    a_train, a_test = generate()
    b_train, b_test = generate()
    assert a_train.instances == b_train.instances
    assert a_test.instances == b_test.instances
    c_train, _ = generate(dataclasses.replace(SynthSpec(), seed=8))
    assert c_train.instances != a_train.instances


def test_hard_preset_dilutes_the_signal():
    spec = SynthSpec.hard()
    assert spec.latent_per_class == 32
    assert spec.fillers_min == 5
    assert spec.train_size == 200
    train, _ = generate(spec)
    lengths = [len(words(i.sentence)) for i in train]
    assert min(lengths) >= 7  # 5 fillers + info + target
    easy_pool = _latent_pool(SynthSpec())
    hard_pool = _latent_pool(spec)
    assert len(hard_pool["positive"]) > len(easy_pool["positive"])


def test_latent_pool_avoids_vocabulary_collisions():
    pool = _latent_pool(SynthSpec.hard())
    seen = set()
    for label in POLARITIES:
        for tok in pool[label]:
            assert tok not in ALL_CUES
            assert tok not in TARGET_NOUNS
            assert tok not in FILLERS
            assert tok not in seen
            seen.add(tok)
