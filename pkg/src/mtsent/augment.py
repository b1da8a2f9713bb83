"""Auxiliary task construction: iterative generate-check-feedback loops.

For each instance the backend is asked for an aspect, an opinion, and a
polarity, in that order. If the predicted polarity matches the gold label
the loop stops; otherwise a feedback prompt (carrying the WRONG prediction,
never the gold label) is sent and the next epoch regenerates all three.
The gold label steers only through the match test. The last epoch's aspect
and opinion are kept either way, with confidences clipped to [0.5, 1].
"""

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .backends import BackendError
from .data import AugmentedInstance, Dataset, POLARITIES


class AugmentError(RuntimeError):
    pass


class ConfidenceMethod(Enum):
    PROMPT = "prompt"
    MARKOV_CHAIN = "markov_chain"
    CHOICE_TOKEN = "choice_token"


@dataclass
class RefineState:
    """Mutable per-instance state of one refinement loop."""
    instance: object
    max_epochs: int
    prompt: str = ""
    feedback: Optional[str] = None
    predicted_polarity: Optional[str] = None
    epoch: int = 0
    current_aspect: Optional[tuple] = None   # (text, confidence)
    current_opinion: Optional[tuple] = None


TEMPLATE_IDS = ("aspect", "opinion", "polarity", "feedback")

# Every template asks for a trailing self-reported confidence line; methods
# other than `prompt` simply ignore it.
_CONF_REQUEST = 'End with a line "Confidence: 0.xx" rating your answer.'


def _require(state, template_id, **fields):
    for name, value in fields.items():
        if value is None:
            raise ValueError(
                f"template {template_id!r} requires state field {name!r}"
            )


def render_prompt(template_id, state):
    """Deterministic prompt text for one of the four query templates."""
    inst = state.instance
    lines = []
    if template_id == "aspect":
        lines += [
            "Read the sentence and name the aspect of the target term that "
            "the sentiment is about.",
            f"Sentence: {inst.sentence}",
            f"Target term: {inst.target}",
        ]
    elif template_id == "opinion":
        _require(state, template_id, current_aspect=state.current_aspect)
        lines += [
            "Read the sentence and state the opinion expressed toward the "
            "aspect.",
            f"Sentence: {inst.sentence}",
            f"Target term: {inst.target}",
            f"Aspect: {state.current_aspect[0]}",
        ]
    elif template_id == "polarity":
        _require(state, template_id, current_aspect=state.current_aspect,
                 current_opinion=state.current_opinion)
        lines += [
            "Given the sentence and the extracted elements, classify the "
            "sentiment toward the target as positive, negative, or neutral.",
            f"Sentence: {inst.sentence}",
            f"Target term: {inst.target}",
            f"Aspect: {state.current_aspect[0]}",
            f"Opinion: {state.current_opinion[0]}",
        ]
    elif template_id == "feedback":
        _require(state, template_id, current_aspect=state.current_aspect,
                 current_opinion=state.current_opinion,
                 predicted_polarity=state.predicted_polarity)
        lines += [
            "The polarity inferred from the elements below was judged "
            "incorrect. Explain what may be wrong with the aspect or the "
            "opinion and give guidance for the next attempt.",
            f"Sentence: {inst.sentence}",
            f"Target term: {inst.target}",
            f"Aspect: {state.current_aspect[0]}",
            f"Opinion: {state.current_opinion[0]}",
            f"Predicted polarity: {state.predicted_polarity}",
        ]
    else:
        raise ValueError(f"unknown template id {template_id!r}")
    if template_id != "feedback" and state.feedback is not None:
        lines.append(f"Feedback: {state.feedback}")
    if template_id == "polarity":
        lines.append("Answer with one word: positive, negative, or neutral.")
    elif template_id != "feedback":
        lines.append("Answer with the phrase only.")
    if template_id != "feedback":
        lines.append(_CONF_REQUEST)
    return "\n".join(lines)


_POLARITY_PAT = re.compile(r"\b(positive|negative|neutral)\b")
_CONF_STRIP = re.compile(r"^\s*confidence:.*$", re.IGNORECASE | re.MULTILINE)


def parse_polarity(text):
    """First polarity word in the text, or None when unparsable."""
    m = _POLARITY_PAT.search(text.lower())
    return m.group(1) if m else None


def _answer_text(response):
    return _CONF_STRIP.sub("", response.text).strip()


def estimate_confidence(response, method, backend=None, followup_prompt=None,
                        meta=None):
    """Raw confidence in [0, 1] for a generation, before clipping.

    prompt: the response's self-reported confidence line. markov_chain:
    length-normalized sequence probability exp((1/T) sum logprob_t), i.e.
    the geometric mean of the token probabilities. choice_token: a
    follow-up binary query; the confidence is the probability mass the
    backend puts on the option letter it picks.
    """
    if method is ConfidenceMethod.PROMPT:
        if response.reported_confidence is None:
            raise AugmentError(
                "method prompt requires a reported_confidence "
                "(no Confidence line in response)"
            )
        return response.reported_confidence
    if method is ConfidenceMethod.MARKOV_CHAIN:
        if not response.token_logprobs:
            raise AugmentError("method markov_chain requires token_logprobs")
        lps = [lp for _, lp in response.token_logprobs]
        return min(1.0, math.exp(sum(lps) / len(lps)))
    if method is ConfidenceMethod.CHOICE_TOKEN:
        if backend is None or followup_prompt is None:
            raise AugmentError(
                "method choice_token requires a backend and follow-up prompt"
            )
        resp = backend.complete(followup_prompt, logprobs=True, meta=meta)
        m = re.search(r"\b([AB])\b", resp.text.upper())
        if m is None:
            raise AugmentError(
                "method choice_token: response contains neither option A nor B"
            )
        letter = m.group(1)
        if not resp.token_logprobs:
            raise AugmentError("method choice_token requires token_logprobs")
        for tok, lp in resp.token_logprobs:
            if tok.strip().strip("()").upper() == letter:
                return min(1.0, math.exp(lp))
        raise AugmentError(
            f"method choice_token: option token {letter!r} not in logprobs"
        )
    raise ValueError(f"unknown confidence method {method!r}")


def clip_confidence(raw):
    """Floor a raw confidence at 0.5."""
    if not 0.0 <= raw <= 1.0:
        raise ValueError(f"confidence {raw!r} outside [0, 1]")
    return max(raw, 0.5)


def _choice_prompt(state, task, answer):
    inst = state.instance
    return "\n".join([
        f"Sentence: {inst.sentence}",
        f"Target term: {inst.target}",
        f"Proposed {task}: {answer}",
        "Is the provided answer reasonable? (A) reasonable (B) unreasonable",
        "Answer with A or B.",
    ])


def run_refine_loop(instance, backend, method, max_epochs):
    """Generate aspect/opinion/polarity with feedback-driven retries.

    Every epoch queries aspect, opinion, polarity in order. A polarity
    match with gold breaks immediately; a mismatch (including on the last
    epoch) requests feedback before the next attempt. Returns the final
    epoch's elements.
    """
    if max_epochs < 1:
        raise ValueError("max_epochs must be >= 1")
    state = RefineState(instance=instance, max_epochs=max_epochs)
    want_lp = method is ConfidenceMethod.MARKOV_CHAIN
    consensus = False
    try:
        for epoch in range(max_epochs):
            state.epoch = epoch
            for task in ("aspect", "opinion"):
                state.prompt = render_prompt(task, state)
                resp = backend.complete(
                    state.prompt, logprobs=want_lp,
                    meta=(instance.id, task, epoch),
                )
                text = _answer_text(resp)
                if not text:
                    raise AugmentError(
                        f"instance {instance.id!r}: empty {task} generation"
                    )
                if method is ConfidenceMethod.CHOICE_TOKEN:
                    raw = estimate_confidence(
                        resp, method, backend,
                        followup_prompt=_choice_prompt(state, task, text),
                        meta=(instance.id, f"choice-{task}", epoch),
                    )
                else:
                    raw = estimate_confidence(resp, method)
                pair = (text, clip_confidence(raw))
                if task == "aspect":
                    state.current_aspect = pair
                else:
                    state.current_opinion = pair
            state.prompt = render_prompt("polarity", state)
            resp = backend.complete(
                state.prompt, meta=(instance.id, "polarity", epoch),
            )
            parsed = parse_polarity(resp.text)
            # Unparsable answers count as mismatches; the feedback then
            # quotes the verbatim reply instead of a label.
            state.predicted_polarity = parsed or _answer_text(resp) or "(none)"
            if parsed == instance.polarity:
                consensus = True
                state.epoch = epoch + 1
                break
            # Wrong (or unparsable) polarity: ask for feedback even when
            # this was the last epoch, mirroring the loop body's order.
            fb = backend.complete(
                render_prompt("feedback", state),
                meta=(instance.id, "feedback", epoch),
            )
            state.feedback = fb.text
            state.epoch = epoch + 1
    except BackendError as e:
        raise AugmentError(f"instance {instance.id!r}: {e}") from e
    return AugmentedInstance(
        base=instance,
        aspect=state.current_aspect[0],
        aspect_confidence=state.current_aspect[1],
        opinion=state.current_opinion[0],
        opinion_confidence=state.current_opinion[1],
        refine_epochs_used=state.epoch,
        consensus_reached=consensus,
    )


@dataclass
class AugmentResult:
    dataset: Dataset
    errors: list = field(default_factory=list)  # (instance id, message)


def augment_dataset(dataset, backend, method, max_epochs, parallelism=1):
    """Run the refinement loop over a dataset, optionally in parallel.

    Output order follows input order. Per-instance failures land in the
    result's ``errors`` list; more than 10% failures aborts instead.
    """
    if len(dataset) == 0:
        raise ValueError("cannot augment an empty dataset")
    instances = list(dataset)

    def work(inst):
        return run_refine_loop(inst, backend, method, max_epochs)

    results = [None] * len(instances)
    errors = []
    if parallelism <= 1:
        for i, inst in enumerate(instances):
            try:
                results[i] = work(inst)
            except (AugmentError, ValueError) as e:
                errors.append((inst.id, str(e)))
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = {pool.submit(work, inst): i
                       for i, inst in enumerate(instances)}
            for fut, i in futures.items():
                try:
                    results[i] = fut.result()
                except (AugmentError, ValueError) as e:
                    errors.append((instances[i].id, str(e)))
    errors.sort(key=lambda pair: next(
        k for k, inst in enumerate(instances) if inst.id == pair[0]
    ))
    if len(errors) > 0.10 * len(instances):
        summary = "; ".join(f"{iid}: {msg}" for iid, msg in errors[:5])
        raise AugmentError(
            f"{len(errors)}/{len(instances)} instances failed "
            f"(aborting, >10%): {summary}"
        )
    kept = [r for r in results if r is not None]
    return AugmentResult(
        dataset=Dataset(name=f"{dataset.name}/augmented", instances=kept),
        errors=errors,
    )
