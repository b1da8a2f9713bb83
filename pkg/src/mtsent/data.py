"""Instance records, JSONL (de)serialization, SemEval XML ingestion, ISE split."""

import json
import unicodedata
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from typing import Optional

POLARITIES = ("positive", "negative", "neutral")

# Fallback cue-word list for the explicit/implicit split when no per-id flag
# map is available. Not authoritative: pass flags from an annotation file
# whenever one exists.
DEFAULT_OPINION_LEXICON = frozenset("""
amazing awesome awful bad best better disappointing excellent fantastic
good great horrible love loved nice perfect poor terrible worst wonderful
delicious tasty friendly rude slow fast cheap expensive fresh stale
broken reliable comfortable annoying pleasant unpleasant
""".split())


class DataError(ValueError):
    """Raised for schema violations in dataset files."""


def _nfc(s):
    return unicodedata.normalize("NFC", s)


@dataclass(frozen=True)
class Instance:
    id: str
    sentence: str
    target: str
    polarity: str
    implicit: bool

    def __post_init__(self):
        object.__setattr__(self, "sentence", _nfc(self.sentence))
        object.__setattr__(self, "target", _nfc(self.target))
        object.__setattr__(self, "id", _nfc(self.id))
        if not self.sentence.strip():
            raise DataError(f"instance {self.id!r}: empty sentence")
        if not self.target:
            raise DataError(f"instance {self.id!r}: empty target")
        if self.polarity not in POLARITIES:
            raise DataError(
                f"instance {self.id!r}: unknown polarity {self.polarity!r}"
            )


@dataclass(frozen=True)
class AugmentedInstance:
    base: Instance
    aspect: str
    aspect_confidence: float
    opinion: str
    opinion_confidence: float
    refine_epochs_used: int
    consensus_reached: bool

    def __post_init__(self):
        object.__setattr__(self, "aspect", _nfc(self.aspect))
        object.__setattr__(self, "opinion", _nfc(self.opinion))
        if not self.aspect:
            raise DataError(f"instance {self.id!r}: empty aspect")
        if not self.opinion:
            raise DataError(f"instance {self.id!r}: empty opinion")
        for name, c in (("aspect_confidence", self.aspect_confidence),
                        ("opinion_confidence", self.opinion_confidence)):
            if not 0.5 <= c <= 1.0:
                raise DataError(
                    f"instance {self.id!r}: {name} {c!r} outside [0.5, 1.0]"
                )
        if self.refine_epochs_used < 0:
            raise DataError(
                f"instance {self.id!r}: negative refine_epochs_used"
            )

    # Convenience pass-throughs so augmented and plain instances read alike.
    @property
    def id(self):
        return self.base.id

    @property
    def sentence(self):
        return self.base.sentence

    @property
    def target(self):
        return self.base.target

    @property
    def polarity(self):
        return self.base.polarity

    @property
    def implicit(self):
        return self.base.implicit


@dataclass(frozen=True)
class Dataset:
    name: str
    instances: tuple
    label_set: tuple = POLARITIES

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        seen = set()
        for inst in self.instances:
            if inst.id in seen:
                raise DataError(f"duplicate instance id {inst.id!r}")
            seen.add(inst.id)

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)


def is_augmented(inst):
    return isinstance(inst, AugmentedInstance)


# Canonical JSONL field order; save_jsonl always emits in this order.
_FIELD_ORDER = (
    "id", "sentence", "target", "polarity", "implicit",
    "aspect", "aspect_confidence", "opinion", "opinion_confidence",
    "refine_epochs_used", "consensus_reached",
)
_AUG_FIELDS = ("aspect", "aspect_confidence", "opinion", "opinion_confidence")


def _instance_from_obj(obj, lineno, lenient, clip_count):
    for field in ("id", "sentence", "target", "polarity", "implicit"):
        if field not in obj:
            raise DataError(f"line {lineno}: missing field {field!r}")
    base = Instance(
        id=str(obj["id"]),
        sentence=str(obj["sentence"]),
        target=str(obj["target"]),
        polarity=str(obj["polarity"]),
        implicit=bool(obj["implicit"]),
    )
    present = [f for f in _AUG_FIELDS if f in obj]
    if not present:
        return base
    missing = [f for f in _AUG_FIELDS if f not in obj]
    if missing:
        raise DataError(
            f"line {lineno}: augmented fields incomplete, missing {missing}"
        )
    ca = float(obj["aspect_confidence"])
    co = float(obj["opinion_confidence"])
    if lenient:
        for c in (ca, co):
            if not 0.5 <= c <= 1.0:
                clip_count[0] += 1
        ca = min(max(ca, 0.5), 1.0)
        co = min(max(co, 0.5), 1.0)
    return AugmentedInstance(
        base=base,
        aspect=str(obj["aspect"]),
        aspect_confidence=ca,
        opinion=str(obj["opinion"]),
        opinion_confidence=co,
        refine_epochs_used=int(obj.get("refine_epochs_used", 0)),
        consensus_reached=bool(obj.get("consensus_reached", False)),
    )


def load_jsonl(path, name=None, lenient=False):
    """Load a dataset from one-JSON-object-per-line.

    Strict mode (default) rejects confidences outside [0.5, 1.0]; lenient
    mode clips them and counts the clips on the returned dataset's
    ``clip_warnings`` attribute.
    """
    instances = []
    clip_count = [0]
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"line {lineno}: malformed JSON ({e.msg})") from e
            try:
                instances.append(
                    _instance_from_obj(obj, lineno, lenient, clip_count)
                )
            except DataError:
                raise
            except (TypeError, ValueError) as e:
                raise DataError(f"line {lineno}: {e}") from e
    ds = Dataset(name=name or str(path), instances=instances)
    object.__setattr__(ds, "clip_warnings", clip_count[0])
    return ds


def instance_to_obj(inst):
    obj = {
        "id": inst.id,
        "sentence": inst.sentence,
        "target": inst.target,
        "polarity": inst.polarity,
        "implicit": inst.implicit,
    }
    if is_augmented(inst):
        obj.update(
            aspect=inst.aspect,
            aspect_confidence=inst.aspect_confidence,
            opinion=inst.opinion,
            opinion_confidence=inst.opinion_confidence,
            refine_epochs_used=inst.refine_epochs_used,
            consensus_reached=inst.consensus_reached,
        )
    return obj


def save_jsonl(dataset, path):
    """Write one canonical JSON object per line, UTF-8, newline-terminated."""
    with open(path, "w", encoding="utf-8") as f:
        for inst in dataset:
            obj = instance_to_obj(inst)
            ordered = {k: obj[k] for k in _FIELD_ORDER if k in obj}
            f.write(json.dumps(ordered, ensure_ascii=False) + "\n")


def convert_semeval_xml(path, flags=None, lexicon=None, name=None):
    """SemEval-2014 task-4 XML to a Dataset, one instance per aspect term.

    "conflict" terms are dropped and counted on the returned dataset's
    ``conflict_dropped`` attribute. The implicit flag comes from ``flags``
    when given, else from the lexicon-absence heuristic.
    """
    try:
        tree = ET.parse(path)
    except ET.ParseError as e:
        raise DataError(f"malformed XML in {path}: {e}") from e
    root = tree.getroot()
    instances = []
    dropped = 0
    for sent in root.iter("sentence"):
        text_el = sent.find("text")
        if text_el is None or not (text_el.text or "").strip():
            continue
        text = text_el.text
        sid = sent.get("id", "")
        terms = sent.find("aspectTerms")
        if terms is None:
            continue
        for k, term in enumerate(terms.findall("aspectTerm")):
            polarity = term.get("polarity")
            if polarity is None:
                raise DataError(
                    f"sentence {sid!r}: aspectTerm missing polarity attribute"
                )
            if polarity == "conflict":
                dropped += 1
                continue
            word = term.get("term") or ""
            iid = f"{sid}:{k}" if sid else f"s{len(instances)}:{k}"
            if flags is not None:
                if iid not in flags:
                    raise DataError(f"id {iid!r} missing from flags map")
                implicit = bool(flags[iid])
            else:
                implicit = _is_implicit(text, lexicon)
            instances.append(Instance(
                id=iid, sentence=text, target=word,
                polarity=polarity, implicit=implicit,
            ))
    ds = Dataset(name=name or str(path), instances=instances)
    object.__setattr__(ds, "conflict_dropped", dropped)
    return ds


def _lex_tokens(text):
    out = []
    word = []
    for ch in text.lower():
        if ch.isalnum():
            word.append(ch)
        elif word:
            out.append("".join(word))
            word = []
    if word:
        out.append("".join(word))
    return out


def _is_implicit(sentence, lexicon):
    lex = DEFAULT_OPINION_LEXICON if lexicon is None else lexicon
    return not any(tok in lex for tok in _lex_tokens(sentence))


def load_lexicon(path):
    """One opinion word per line; blank lines and # comments ignored."""
    words = set()
    with open(path, encoding="utf-8") as f:
        for line in f:
            w = line.strip().lower()
            if w and not w.startswith("#"):
                words.add(w)
    return frozenset(words)


def split_implicit(dataset, flags=None, lexicon=None):
    """Partition into (explicit, implicit) datasets.

    With ``flags`` (id to bool map) the map is authoritative and must cover
    every instance. Without it, an instance is implicit iff its sentence
    contains no lexicon token.
    """
    if flags is not None:
        missing = [i.id for i in dataset if i.id not in flags]
        if missing:
            raise DataError(f"ids missing from flags map: {missing}")

    def flag_of(inst):
        if flags is not None:
            return bool(flags[inst.id])
        return _is_implicit(inst.sentence, lexicon)

    exp, imp = [], []
    for inst in dataset:
        (imp if flag_of(inst) else exp).append(_with_implicit(inst, flag_of(inst)))
    return (
        Dataset(name=f"{dataset.name}/explicit", instances=exp),
        Dataset(name=f"{dataset.name}/implicit", instances=imp),
    )


def _with_implicit(inst, value):
    if is_augmented(inst):
        if inst.base.implicit == value:
            return inst
        return replace(inst, base=replace(inst.base, implicit=value))
    if inst.implicit == value:
        return inst
    return replace(inst, implicit=value)


def slice_implicit(dataset) -> "Optional[Dataset]":
    """Instances already flagged implicit, or None when the slice is empty."""
    imp = [i for i in dataset if i.implicit]
    if not imp:
        return None
    return Dataset(name=f"{dataset.name}/implicit", instances=imp)
