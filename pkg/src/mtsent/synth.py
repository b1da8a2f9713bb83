"""Seeded synthetic ABSA corpus for end-to-end training checks.

Every sentence carries exactly one class-bearing token next to neutral
fillers and a target noun, so a bag-of-words linear classifier is Bayes
optimal. Explicit sentences use a surface cue word; implicit sentences use
a pseudo-word whose class membership is only discoverable from training
co-occurrence. The shipped auxiliary fields are noisy copies: the opinion
target is the class cue (sometimes corrupted to a wrong-class cue) and the
aspect target is the target noun (sometimes corrupted to a wrong noun),
with confidences drawn high for clean copies and low for corrupted ones.
"""

import random
from dataclasses import dataclass

from .data import AugmentedInstance, Dataset, Instance, POLARITIES

CUES = {
    "positive": ("great", "delicious"),
    "negative": ("terrible", "awful"),
    "neutral": ("okay", "average"),
}

TARGET_NOUNS = ("pizza", "service", "battery", "screen",
                "coffee", "staff", "menu", "keyboard")

FILLERS = ("the", "a", "it", "was", "so", "very", "really",
           "today", "again", "still", "quite", "this")

_SYLLABLES = ("ka", "re", "mo", "ti", "zu", "pa", "len", "dor",
              "vi", "sha", "gri", "nul", "tem", "bas", "rok", "fen")


@dataclass(frozen=True)
class SynthSpec:
    train_size: int = 200
    test_size: int = 100
    implicit_fraction: float = 0.5
    latent_per_class: int = 6
    fillers_min: int = 2
    fillers_max: int = 4
    corrupt_opinion: float = 0.25
    corrupt_aspect: float = 0.15
    clean_conf: tuple = (0.82, 0.98)
    dirty_conf: tuple = (0.50, 0.60)
    seed: int = 7

    @classmethod
    def hard(cls):
        """Preset where implicit tokens are rare and heavily diluted.

        Each pseudo-word occurs about once in training, so polarity
        supervision alone tends to leave some of them stranded while the
        generation tasks still tie them to their class cue. Used for the
        multi-task-vs-single-task comparison and the ablation grid.
        """
        return cls(latent_per_class=32, fillers_min=5, fillers_max=8,
                   corrupt_opinion=0.2, corrupt_aspect=0.15)


def _latent_pool(spec):
    """Per-class pseudo-words, deterministic in the seed, no collisions."""
    rng = random.Random(spec.seed * 1000003 + 17)
    taken = set(TARGET_NOUNS) | set(FILLERS)
    for words in CUES.values():
        taken.update(words)
    pool = {}
    for label in POLARITIES:
        toks = []
        while len(toks) < spec.latent_per_class:
            w = "".join(rng.choice(_SYLLABLES)
                        for _ in range(rng.randint(2, 3)))
            if w not in taken:
                taken.add(w)
                toks.append(w)
        pool[label] = tuple(toks)
    return pool


def _sentence(rng, spec, info_word, target_word):
    n_fill = rng.randint(spec.fillers_min, spec.fillers_max)
    tokens = [rng.choice(FILLERS) for _ in range(n_fill)]
    tokens += [info_word, target_word]
    rng.shuffle(tokens)
    return " ".join(tokens)


def _conf(rng, lo_hi):
    return round(rng.uniform(*lo_hi), 4)


def generate(spec=SynthSpec()):
    """Returns (train Dataset of AugmentedInstance, test Dataset of Instance)."""
    rng = random.Random(spec.seed)
    latents = _latent_pool(spec)
    # Round-robin counters guarantee every latent token recurs in train.
    latent_next = {label: 0 for label in POLARITIES}

    def make(prefix, index, with_aux):
        label = POLARITIES[index % 3]
        implicit = rng.random() < spec.implicit_fraction
        target_word = rng.choice(TARGET_NOUNS)
        if implicit:
            if with_aux:
                pool = latents[label]
                info = pool[latent_next[label] % len(pool)]
                latent_next[label] += 1
            else:
                info = rng.choice(latents[label])
            opinion_true = CUES[label][0]
        else:
            info = rng.choice(CUES[label])
            opinion_true = info
        base = Instance(
            id=f"{prefix}-{index:04d}",
            sentence=_sentence(rng, spec, info, target_word),
            target=target_word,
            polarity=label,
            implicit=implicit,
        )
        if not with_aux:
            return base
        o_clean = rng.random() >= spec.corrupt_opinion
        a_clean = rng.random() >= spec.corrupt_aspect
        if o_clean:
            opinion, c_o = opinion_true, _conf(rng, spec.clean_conf)
        else:
            wrong = [l for l in POLARITIES if l != label]
            opinion = CUES[rng.choice(wrong)][0]
            c_o = _conf(rng, spec.dirty_conf)
        if a_clean:
            aspect, c_a = target_word, _conf(rng, spec.clean_conf)
        else:
            aspect = rng.choice([t for t in TARGET_NOUNS if t != target_word])
            c_a = _conf(rng, spec.dirty_conf)
        consensus = o_clean and a_clean
        return AugmentedInstance(
            base=base,
            aspect=aspect, aspect_confidence=c_a,
            opinion=opinion, opinion_confidence=c_o,
            refine_epochs_used=1 if consensus else 3,
            consensus_reached=consensus,
        )

    train = [make("train", i, True) for i in range(spec.train_size)]
    test = [make("test", i, False) for i in range(spec.test_size)]
    return (Dataset(name="synth-train", instances=train),
            Dataset(name="synth-test", instances=test))
