"""Automatic weight learning at both levels.

Data level: per-instance generation confidences reweight the auxiliary
losses, on the input side (scaling the sentence embeddings), the output
side (scaling each instance's loss term), or both. Task level: trainable
log-variances s_k = log sigma_k^2 set the relative task weights inside the
combined objective, with either the plain log-variance regularizer (alf1)
or the positive ln(sigma^2 + 1) form (alf2).

All reductions go through sum_scalars so that the c_i = 1 and sigma^2 = 1
identity cases are bit-exact, not merely close.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .autodiff import Tensor, exp, mul, neg, softplus, sum_scalars
from .data import is_augmented
from .model import generation_nll, polarity_loss

# Task order of the noise parameters; the combined losses sum in this
# order, with polarity last.
SIGMA_TASKS = ("aspect", "opinion", "polarity")


class DawlStrategy(Enum):
    NONE = "none"
    INPUT = "input"
    OUTPUT = "output"
    INPUT_OUTPUT = "input_output"


@dataclass(frozen=True)
class AlfVariant:
    kind: str  # "alf1" | "alf2" | "fixed"
    weights: Optional[tuple] = None  # fixed only: (w_p, w_a, w_o)

    def __post_init__(self):
        if self.kind not in ("alf1", "alf2", "fixed"):
            raise ValueError(f"unknown ALF variant {self.kind!r}")
        if self.kind == "fixed":
            if self.weights is None or len(self.weights) != 3:
                raise ValueError("fixed variant needs 3 weights")
            w = tuple(float(x) for x in self.weights)
            for x in w:
                if x < 0:
                    raise ValueError(f"negative task weight {x}")
            if abs(sum(w) - 1.0) > 1e-9:
                raise ValueError(f"fixed weights must sum to 1, got {sum(w)}")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ValueError(f"{self.kind} takes no weights")

    @classmethod
    def alf1(cls):
        return cls("alf1")

    @classmethod
    def alf2(cls):
        return cls("alf2")

    @classmethod
    def fixed(cls, weights):
        return cls("fixed", tuple(weights))


class SigmaParams:
    """Trainable s_k = log sigma_k^2 per task, one scalar tensor each."""

    def __init__(self, init=0.0):
        self.s = {task: Tensor(float(init), requires_grad=True)
                  for task in SIGMA_TASKS}

    def tensors(self):
        return [(f"s_{task}", self.s[task]) for task in SIGMA_TASKS]

    def sigma2(self):
        # math.exp raises on overflow; a saturated parameter should still
        # be reportable, so map it to inf instead.
        out = {}
        for task in SIGMA_TASKS:
            try:
                out[task] = math.exp(self.s[task].item())
            except OverflowError:
                out[task] = math.inf
        return out

    def values(self):
        return {task: self.s[task].item() for task in SIGMA_TASKS}

    def load_values(self, vals):
        for task in SIGMA_TASKS:
            self.s[task].data[0] = float(vals[task])

    def zero_grad(self):
        for task in SIGMA_TASKS:
            self.s[task].zero_grad()


@dataclass
class TaskLosses:
    """Per-task scalar loss nodes plus per-instance auxiliary terms."""
    L_a: Tensor
    L_o: Tensor
    L_p: Tensor
    per_aspect: list = field(default_factory=list)   # (id, node, confidence)
    per_opinion: list = field(default_factory=list)

    def per_instance(self, task):
        return self.per_aspect if task == "aspect" else self.per_opinion


def dawl_output_reduce(pairs):
    """Mean of confidence-scaled instance losses: (1/N) sum c_i * l_i."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("dawl_output_reduce: empty loss list")
    inv = 1.0 / len(pairs)
    for _, c in pairs:
        if not 0.5 <= c <= 1.0:
            raise ValueError(f"confidence {c} outside [0.5, 1.0]")
    return sum_scalars([l for l, _ in pairs], [c * inv for _, c in pairs])


def assemble_task_losses(model, batch, strategy, max_target_len=16):
    """Batch losses for the three tasks under a reweighting strategy.

    input: auxiliary NLLs see confidence-scaled sentence embeddings and are
    mean-reduced. output: unscaled NLLs, confidence-weighted mean. Both at
    once for input_output; plain means for none. The polarity loss is a
    plain mean regardless: confidences describe generated data only.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("assemble_task_losses: empty batch")
    vocab = model.vocab
    n = len(batch)
    inv = 1.0 / n

    pol = [polarity_loss(model, inst, vocab)[0] for inst in batch]
    L_p = sum_scalars(pol, [inv] * n)

    scale_input = strategy in (DawlStrategy.INPUT, DawlStrategy.INPUT_OUTPUT)
    weight_output = strategy in (DawlStrategy.OUTPUT, DawlStrategy.INPUT_OUTPUT)

    per = {"aspect": [], "opinion": []}
    totals = {}
    for task in ("aspect", "opinion"):
        for inst in batch:
            if not is_augmented(inst):
                raise ValueError(
                    f"instance {inst.id!r} lacks generated {task} data; "
                    f"augment before training"
                )
            text = inst.aspect if task == "aspect" else inst.opinion
            c = (inst.aspect_confidence if task == "aspect"
                 else inst.opinion_confidence)
            node, _ = generation_nll(
                model, inst, task, text, vocab,
                input_scale=c if scale_input else 1.0,
                max_target_len=max_target_len,
            )
            per[task].append((inst.id, node, c))
        if weight_output:
            totals[task] = dawl_output_reduce(
                [(node, c) for _, node, c in per[task]]
            )
        else:
            totals[task] = sum_scalars(
                [node for _, node, _ in per[task]], [inv] * n
            )
    return TaskLosses(L_a=totals["aspect"], L_o=totals["opinion"], L_p=L_p,
                      per_aspect=per["aspect"], per_opinion=per["opinion"])


def _weighted_terms(losses, sigma):
    ordered = {"aspect": losses.L_a, "opinion": losses.L_o,
               "polarity": losses.L_p}
    return [mul(exp(neg(sigma.s[task])), ordered[task])
            for task in SIGMA_TASKS]


def combine_alf1(losses, sigma):
    """sum_k exp(-s_k) L_k + sum_k s_k (regularizer is log sigma^2)."""
    terms = _weighted_terms(losses, sigma)
    regs = [sigma.s[task] for task in SIGMA_TASKS]
    return sum_scalars(terms + regs)


def combine_alf2(losses, sigma):
    """sum_k exp(-s_k) L_k + sum_k ln(sigma_k^2 + 1), always positive."""
    terms = _weighted_terms(losses, sigma)
    regs = [softplus(sigma.s[task]) for task in SIGMA_TASKS]
    return sum_scalars(terms + regs)


def combine_fixed(losses, weights):
    """w_p L_p + w_a L_a + w_o L_o for fixed non-negative weights."""
    w = tuple(float(x) for x in weights)
    if len(w) != 3:
        raise ValueError(f"need 3 weights, got {len(w)}")
    for x in w:
        if x < 0:
            raise ValueError(f"negative task weight {x}")
    if abs(sum(w) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {sum(w)}")
    return sum_scalars([losses.L_p, losses.L_a, losses.L_o], list(w))


def combine(losses, sigma, variant):
    if variant.kind == "alf1":
        return combine_alf1(losses, sigma)
    if variant.kind == "alf2":
        return combine_alf2(losses, sigma)
    return combine_fixed(losses, variant.weights)


def normalized_task_weights(sigma):
    """Report weights w_k = exp(-s_k) / sum_j exp(-s_j).

    Returned in (polarity, aspect, opinion) order, the order used in the
    trajectory log and result tables.
    """
    neg = {task: -sigma.s[task].item() for task in SIGMA_TASKS}
    # Shift by the max so a runaway s cannot underflow every exponential
    # at once and zero the denominator.
    m = max(neg.values())
    raw = {task: math.exp(v - m) for task, v in neg.items()}
    z = raw["polarity"] + raw["aspect"] + raw["opinion"]
    return (raw["polarity"] / z, raw["aspect"] / z, raw["opinion"] / z)


def stationary_sigma(variant, L):
    """Closed-form minimizer sigma*^2 of one task's term, for testing.

    alf1: d/ds [exp(-s) L + s] = 0 at sigma^2 = L. alf2: with r = sigma^2,
    minimizing L/r + ln(r + 1) gives r^2 - L r - L = 0, so
    r = (L + sqrt(L^2 + 4L)) / 2.
    """
    if L <= 0:
        raise ValueError(f"stationary_sigma needs L > 0, got {L}")
    kind = variant.kind if isinstance(variant, AlfVariant) else str(variant)
    if kind == "alf1":
        return float(L)
    if kind == "alf2":
        return (L + math.sqrt(L * L + 4.0 * L)) / 2.0
    raise ValueError(f"no stationary point for variant {kind!r}")
