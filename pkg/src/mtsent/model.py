"""Toy multi-head sentiment model: shared embeddings, mean-pool encoder,
a 3-way polarity head, and a tag-conditioned teacher-forced generation head
shared by the aspect and opinion tasks."""

import random
import re
import warnings
from dataclasses import dataclass

from .autodiff import (
    Tensor, add, affine, concat, embed, embed_one, mean_pool, scale,
    softmax_xent, sum_scalars, no_grad,
)
from .data import POLARITIES

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>")

_WORD = re.compile(r"[a-z0-9']+")

LABEL_TO_INDEX = {label: i for i, label in enumerate(POLARITIES)}

GENERATION_TASKS = ("aspect", "opinion")


def words(text):
    return _WORD.findall(text.lower())


class Vocabulary:
    """Dense token-to-index map with fixed reserved slots 0..3."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:4] != list(RESERVED):
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._tokens = tokens
        self._index = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def build(cls, texts):
        """First-occurrence ordering over the given texts."""
        tokens = list(RESERVED)
        seen = set(RESERVED)
        for text in texts:
            for w in words(text):
                if w not in seen:
                    seen.add(w)
                    tokens.append(w)
        return cls(tokens)

    def id_of(self, token):
        return self._index.get(token, UNK)

    def token_of(self, idx):
        return self._tokens[idx]

    def __len__(self):
        return len(self._tokens)

    def to_list(self):
        return list(self._tokens)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        if not self.ids or self.ids[-1] != EOS:
            raise ValueError("token sequence must end with EOS")
        if PAD in self.ids[:-1]:
            raise ValueError("PAD before EOS in token sequence")

    def __len__(self):
        return len(self.ids)


def tokenize(text, vocab):
    """Lowercase, split to word tokens, map OOV to UNK, append EOS."""
    toks = words(text)
    if not toks:
        warnings.warn(f"tokenize: empty text {text!r}, emitting EOS only")
        return TokenSequence((EOS,))
    return TokenSequence(tuple(vocab.id_of(t) for t in toks) + (EOS,))


def truncate(seq, max_len):
    """Clamp a sequence to max_len ids, keeping the EOS terminator."""
    if len(seq.ids) <= max_len:
        return seq
    return TokenSequence(seq.ids[:max_len - 1] + (EOS,))


class ToyModel:
    """All parameters in one place; construction is seed-deterministic."""

    def __init__(self, vocab, dim=64, seed=42, trainable=True):
        if dim < 2:
            raise ValueError(f"embedding dim must be >= 2, got {dim}")
        self.vocab = vocab
        self.dim = dim
        self.seed = seed
        v = len(vocab)
        rng = random.Random(seed)

        def init(shape):
            n = 1
            for s in shape:
                n *= s
            data = [rng.uniform(-0.1, 0.1) for _ in range(n)]
            return Tensor(data, shape, requires_grad=trainable)

        def zeros(shape):
            return Tensor.zeros(shape, requires_grad=trainable)

        d = dim
        self.emb = init((v, d))
        self.pol_w = init((3, d))
        self.pol_b = zeros((3,))
        self.proj_w = init((d, 2 * d))
        self.proj_b = zeros((d,))
        self.tag = init((len(GENERATION_TASKS), d))
        self.gen_w = init((v, 2 * d))
        self.gen_b = zeros((v,))

    def parameters(self):
        return [
            ("emb", self.emb),
            ("pol_w", self.pol_w), ("pol_b", self.pol_b),
            ("proj_w", self.proj_w), ("proj_b", self.proj_b),
            ("tag", self.tag),
            ("gen_w", self.gen_w), ("gen_b", self.gen_b),
        ]

    @property
    def param_count(self):
        return sum(t.numel for _, t in self.parameters())

    def zero_grad(self):
        for _, t in self.parameters():
            t.zero_grad()


def encode(model, sentence_ids, target_ids, input_scale=1.0):
    """Context vector: pooled (scaled) sentence next to pooled target.

    input_scale realizes the per-instance confidence weight on the input
    side; it multiplies only the sentence embeddings, never the target's.
    """
    if not 0.0 < input_scale <= 1.0:
        raise ValueError(f"input_scale must be in (0, 1], got {input_scale}")
    if not sentence_ids or not target_ids:
        raise ValueError("encode requires non-empty id sequences")
    sent = embed(model.emb, sentence_ids)
    if input_scale != 1.0:
        sent = scale(sent, input_scale)
    tgt = embed(model.emb, target_ids)
    return concat([mean_pool(sent), mean_pool(tgt)])


def _instance_ids(instance, vocab):
    return (tokenize(instance.sentence, vocab).ids[:-1] or (UNK,),
            tokenize(instance.target, vocab).ids[:-1] or (UNK,))


def polarity_logits(model, instance, vocab):
    # Polarity reads the same context projection the generation head
    # conditions on, so the trunk is shared across all three tasks.
    sent_ids, tgt_ids = _instance_ids(instance, vocab)
    ctx = encode(model, list(sent_ids), list(tgt_ids))
    hidden = affine(model.proj_w, model.proj_b, ctx)
    return affine(model.pol_w, model.pol_b, hidden)


def polarity_loss(model, instance, vocab):
    """Cross-entropy of the polarity head; returns (loss, predicted label)."""
    logits = polarity_logits(model, instance, vocab)
    gold = LABEL_TO_INDEX[instance.polarity]
    loss = softmax_xent(logits, gold)
    vals = list(logits.data)
    pred = POLARITIES[vals.index(max(vals))]
    return loss, pred


def predict_polarity(model, instance, vocab):
    with no_grad():
        _, pred = polarity_loss(model, instance, vocab)
    return pred


def sequence_nll(model, instance, task, seq, vocab, input_scale=1.0):
    """Teacher-forced NLL of a token sequence under the generation head.

    Each step conditions on the projected context plus the task tag and the
    gold previous token (BOS first). Returns (total loss node, per-token
    loss values).
    """
    if task not in GENERATION_TASKS:
        raise ValueError(f"unknown generation task {task!r}")
    sent_ids, tgt_ids = _instance_ids(instance, vocab)
    ctx = encode(model, list(sent_ids), list(tgt_ids), input_scale)
    cond = add(affine(model.proj_w, model.proj_b, ctx),
               embed_one(model.tag, GENERATION_TASKS.index(task)))
    prev = BOS
    steps = []
    for sid in seq.ids:
        x = concat([cond, embed_one(model.emb, prev)])
        logits = affine(model.gen_w, model.gen_b, x)
        steps.append(softmax_xent(logits, sid))
        prev = sid
    total = sum_scalars(steps)
    return total, [s.item() for s in steps]


def generation_nll(model, instance, task, target_text, vocab,
                   input_scale=1.0, max_target_len=16):
    """NLL of generating target_text, tokenized and EOS-terminated."""
    if not target_text or not target_text.strip():
        raise ValueError(
            f"instance {instance.id!r}: empty {task} generation target"
        )
    seq = truncate(tokenize(target_text, vocab), max_target_len)
    return sequence_nll(model, instance, task, seq, vocab, input_scale)
