"""Tokenizer, vocabulary, and toy-model head tests.

The generation-head oracle here is the uniform-logits trick: with the
output weights zeroed every step's cross-entropy is exactly ln(vocab size),
so teacher-forced NLL of an n-token sequence must equal n*ln(V).
"""
import math
import warnings

import pytest

from mtsent.autodiff import backward, gradient_check, sum_scalars
from mtsent.data import Instance
from mtsent.model import (BOS, EOS, GENERATION_TASKS, LABEL_TO_INDEX, PAD,
                          POLARITIES, RESERVED, UNK, TokenSequence, ToyModel,
                          Vocabulary, encode, generation_nll, polarity_logits,
                          polarity_loss, predict_polarity, sequence_nll,
                          tokenize, truncate, words)

TEXTS = ["The pizza was great", "service was slow", "great value, no doubt"]


def make_vocab():
    return Vocabulary.build(TEXTS)


def inst(sentence="the pizza was great", target="pizza", polarity="positive"):
    return Instance(id="t:0", sentence=sentence, target=target,
                    polarity=polarity, implicit=False)


def zero_generation_head(model):
    for i in range(len(model.gen_w.data)):
        model.gen_w.data[i] = 0.0
    for i in range(len(model.gen_b.data)):
        model.gen_b.data[i] = 0.0


# ---------------------------------------------------------------- tokenizer

def test_words_lowercases_and_splits_punctuation():
    assert words("The pizza, was GREAT!") == ["the", "pizza", "was", "great"]
    assert words("don't...stop") == ["don't", "stop"]
    assert words("?!") == []


def test_vocab_build_first_occurrence_order():
    v = make_vocab()
    assert v.to_list()[:4] == list(RESERVED)
    assert v.to_list()[4:] == ["the", "pizza", "was", "great", "service",
                               "slow", "value", "no", "doubt"]
    assert v.id_of("the") == 4
    assert v.id_of("pizza") == 5


def test_vocab_oov_maps_to_unk():
    v = make_vocab()
    assert v.id_of("zzzz") == UNK
    assert v.token_of(UNK) == "<unk>"


def test_vocab_rejects_bad_reserved_prefix_and_duplicates():
    with pytest.raises(ValueError):
        Vocabulary(["<pad>", "<unk>", "<eos>", "<bos>", "x"])
    with pytest.raises(ValueError):
        Vocabulary(list(RESERVED) + ["x", "x"])


def test_tokenize_exact_ids_and_eos():
    v = make_vocab()
    seq = tokenize("Great pizza", v)
    assert seq.ids == (v.id_of("great"), v.id_of("pizza"), EOS)
    seq = tokenize("qqq pizza", v)
    assert seq.ids == (UNK, v.id_of("pizza"), EOS)


def test_tokenize_empty_text_warns_and_emits_eos_only():
    v = make_vocab()
    with pytest.warns(UserWarning):
        seq = tokenize("...", v)
    assert seq.ids == (EOS,)


def test_token_sequence_invariants():
    with pytest.raises(ValueError):
        TokenSequence((4, 5))  # no EOS terminator
    with pytest.raises(ValueError):
        TokenSequence((4, PAD, EOS))
    assert len(TokenSequence((4, EOS))) == 2


def test_truncate_keeps_eos():
    seq = TokenSequence((4, 5, 6, 7, EOS))
    assert truncate(seq, 10).ids == seq.ids
    assert truncate(seq, 5).ids == seq.ids
    assert truncate(seq, 3).ids == (4, 5, EOS)
    assert truncate(seq, 1).ids == (EOS,)


# ------------------------------------------------------------------- model

def test_model_rejects_tiny_dim():
    with pytest.raises(ValueError):
        ToyModel(make_vocab(), dim=1)


def test_model_seed_determinism():
    v = make_vocab()
    a = ToyModel(v, dim=8, seed=3)
    b = ToyModel(v, dim=8, seed=3)
    c = ToyModel(v, dim=8, seed=4)
    for (_, ta), (_, tb) in zip(a.parameters(), b.parameters()):
        assert list(ta.data) == list(tb.data)
    assert any(list(ta.data) != list(tc.data)
               for (_, ta), (_, tc) in zip(a.parameters(), c.parameters()))


def test_param_count_closed_form():
    v = make_vocab()
    d = 8
    m = ToyModel(v, dim=d)
    n = len(v)
    expected = (n * d            # token embeddings
                + 3 * d + 3      # polarity head
                + d * 2 * d + d  # context projection
                + 2 * d          # task tags
                + n * 2 * d + n)  # generation head
    assert m.param_count == expected


def test_untrainable_model_has_frozen_parameters():
    m = ToyModel(make_vocab(), dim=4, trainable=False)
    assert all(not t.requires_grad for _, t in m.parameters())


# ------------------------------------------------------------------ encode

def test_encode_scales_only_the_sentence_half():
    m = ToyModel(make_vocab(), dim=6, seed=1)
    full = encode(m, [4, 5], [5], input_scale=1.0)
    half = encode(m, [4, 5], [5], input_scale=0.5)
    # 0.5*x is exact in binary, so the sentence half matches bitwise.
    for i in range(6):
        assert half.data[i] == 0.5 * full.data[i]
    for i in range(6, 12):
        assert half.data[i] == full.data[i]


def test_encode_validates_scale_and_ids():
    m = ToyModel(make_vocab(), dim=4)
    with pytest.raises(ValueError):
        encode(m, [4], [5], input_scale=0.0)
    with pytest.raises(ValueError):
        encode(m, [4], [5], input_scale=1.5)
    with pytest.raises(ValueError):
        encode(m, [], [5])
    with pytest.raises(ValueError):
        encode(m, [4], [])


# ---------------------------------------------------------- polarity head

def test_polarity_logits_shape_and_loss_formula():
    v = make_vocab()
    m = ToyModel(v, dim=6, seed=2)
    logits = polarity_logits(m, inst(), v)
    assert logits.shape == (3,)
    loss, pred = polarity_loss(m, inst(), v)
    vals = list(logits.data)
    gold = LABEL_TO_INDEX["positive"]
    expected = math.log(sum(math.exp(z) for z in vals)) - vals[gold]
    assert loss.item() == pytest.approx(expected, rel=1e-12)
    assert pred == POLARITIES[vals.index(max(vals))]


def test_predict_polarity_returns_label_without_graph():
    v = make_vocab()
    m = ToyModel(v, dim=4, seed=2)
    assert predict_polarity(m, inst(), v) in POLARITIES
    assert all(t.grad is None for _, t in m.parameters())


def test_polarity_handles_wordless_sentence():
    # Validation allows sentences with no word characters; the encoder
    # must still get a non-empty id list.
    v = make_vocab()
    m = ToyModel(v, dim=4, seed=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bad = inst(sentence="!!!")
        assert predict_polarity(m, bad, v) in POLARITIES


# -------------------------------------------------------- generation head

def test_sequence_nll_uniform_oracle():
    v = make_vocab()
    m = ToyModel(v, dim=6, seed=5)
    zero_generation_head(m)
    lnv = math.log(len(v))
    total, per = sequence_nll(m, inst(), "aspect", TokenSequence((EOS,)), v)
    assert total.item() == pytest.approx(lnv, rel=1e-12)
    assert per == [pytest.approx(lnv, rel=1e-12)]
    seq = TokenSequence((4, 5, 6, EOS))
    total, per = sequence_nll(m, inst(), "opinion", seq, v)
    assert len(per) == 4
    assert total.item() == pytest.approx(4 * lnv, rel=1e-12)


def test_sequence_nll_total_is_sum_of_per_token():
    v = make_vocab()
    m = ToyModel(v, dim=6, seed=5)
    seq = TokenSequence((5, 7, EOS))
    total, per = sequence_nll(m, inst(), "aspect", seq, v)
    assert total.item() == sum(per)


def test_sequence_nll_rejects_unknown_task():
    v = make_vocab()
    m = ToyModel(v, dim=4)
    with pytest.raises(ValueError):
        sequence_nll(m, inst(), "polarity", TokenSequence((EOS,)), v)


def test_tied_tags_make_aspect_and_opinion_losses_equal():
    v = make_vocab()
    m = ToyModel(v, dim=6, seed=9)
    d = m.dim
    for i in range(d):
        m.tag.data[d + i] = m.tag.data[i]
    seq = TokenSequence((4, 5, EOS))
    la, _ = sequence_nll(m, inst(), "aspect", seq, v)
    lo, _ = sequence_nll(m, inst(), "opinion", seq, v)
    assert la.item() == lo.item()


def test_teacher_forcing_conditions_on_gold_prefix():
    # The first step sees only BOS, so it cannot depend on later tokens.
    v = make_vocab()
    m = ToyModel(v, dim=6, seed=9)
    _, per_a = sequence_nll(m, inst(), "aspect", TokenSequence((4, 5, EOS)), v)
    _, per_b = sequence_nll(m, inst(), "aspect", TokenSequence((4, 8, EOS)), v)
    assert per_a[0] == per_b[0]
    assert per_a[1] != per_b[1]


def test_input_scale_reaches_the_generation_loss():
    v = make_vocab()
    m = ToyModel(v, dim=6, seed=9)
    seq = TokenSequence((4, EOS))
    full, _ = sequence_nll(m, inst(), "aspect", seq, v, input_scale=1.0)
    half, _ = sequence_nll(m, inst(), "aspect", seq, v, input_scale=0.5)
    assert full.item() != half.item()


def test_generation_nll_tokenizes_and_truncates():
    v = make_vocab()
    m = ToyModel(v, dim=6, seed=9)
    _, per = generation_nll(m, inst(), "aspect", "great pizza", v)
    assert len(per) == 3  # two words + EOS
    _, per = generation_nll(m, inst(), "opinion",
                            "the pizza was great service", v,
                            max_target_len=3)
    assert len(per) == 3


def test_generation_nll_rejects_blank_target():
    v = make_vocab()
    m = ToyModel(v, dim=4)
    for bad in ("", "   "):
        with pytest.raises(ValueError):
            generation_nll(m, inst(), "aspect", bad, v)


# ----------------------------------------------------------- whole model

def test_joint_loss_gradient_check():
    v = Vocabulary.build(["good bad food here now"])
    m = ToyModel(v, dim=4, seed=11)
    example = inst(sentence="good food here", target="food")
    seq = tokenize("good now", v)

    def f():
        pol, _ = polarity_loss(m, example, v)
        gen_a, _ = sequence_nll(m, example, "aspect", seq, v)
        gen_o, _ = sequence_nll(m, example, "opinion", seq, v,
                                input_scale=0.7)
        return sum_scalars([pol, gen_a, gen_o])

    report = gradient_check(f, [t for _, t in m.parameters()])
    assert report.ok, str(report)


def test_backward_reaches_every_parameter():
    v = make_vocab()
    m = ToyModel(v, dim=4, seed=11)
    pol, _ = polarity_loss(m, inst(), v)
    gen, _ = sequence_nll(m, inst(), "aspect", TokenSequence((4, EOS)), v)
    backward(sum_scalars([pol, gen]))
    for name, t in m.parameters():
        assert t.grad is not None, name
        assert any(g != 0.0 for g in t.grad), name
