"""Annotation pipelines: tokens, lemmas, POS, dependencies, entities.

The built-in rule pipeline is fully deterministic and needs no model
downloads, so adaptor runs are byte-identical across machines. Names
that look like spacy models load the real thing when installed and fail
with an install hint when not. Both produce the same per-token
annotation tuples; downstream code never knows which backend ran.
"""

from __future__ import annotations

import re
from typing import Iterable, NamedTuple, Sequence

BUILTIN_MODEL = "builtin-rules"

_SENT_BOUNDARY = re.compile(r"(?<=[.?!])\s+")
_TOKEN = re.compile(r"\w+|[^\w\s]")
_WORD_CHAR = re.compile(r"\w")
_SPACY_NAME = re.compile(r"^[a-z]{2,3}_core_\w+$")

_DETS = frozenset("the a an this these those some any no every each".split())
_AUX = frozenset(
    "is am are was were be been being do does did have has had "
    "will would can could may might shall should must".split()
)
_ADPS = frozenset(
    "of in on at by for with from to into onto over under near after "
    "before between during about against through within".split()
)
_PRONOUNS = frozenset(
    "i you he she it we they me him her us them that which who whom "
    "whose what".split()
)
_CCONJ = frozenset("and or but nor".split())
_SCONJ = frozenset(
    "because if when while since although though unless until".split()
)
_RELATIVIZERS = frozenset("that which who whom whose".split())
_IRREGULAR_VERBS = frozenset(
    "fell ran went said saw made took won wrote came gave told found "
    "met held kept left began knew got grew became built sat stood "
    "lay rose broke spoke drove threw flew drew chose froze seen been "
    "done gone taken given known shown thrown".split()
)
_ADJ_SUFFIXES = ("ful", "ous", "ive", "ible", "able", "ish", "less")
_CLOSED = _DETS | _AUX | _ADPS | _PRONOUNS | _CCONJ | _SCONJ


class PipelineUnavailable(RuntimeError):
    """Requested annotation model cannot be loaded."""

    def __init__(self, model: str, hint: str):
        super().__init__(f"annotation model {model!r} is not available; {hint}")
        self.model = model
        self.hint = hint


class TokenAnnotation(NamedTuple):
    form: str
    lemma: str
    upos: str
    head: int        # 1-based within sentence, 0 for the root
    deprel: str
    entity: str      # BIO tag, "O" when none


def _is_capitalized(form: str) -> bool:
    return form[:1].isupper() and form.isalpha()


def _upos(form: str, sentence_initial: bool) -> str:
    low = form.lower()
    if not _WORD_CHAR.search(form):
        return "PUNCT"
    if low.replace(",", "").replace(".", "").isdigit():
        return "NUM"
    if low in _DETS:
        return "DET"
    if low in _AUX:
        return "AUX"
    if low in _ADPS:
        return "ADP"
    if low in _PRONOUNS:
        return "PRON"
    if low in _CCONJ:
        return "CCONJ"
    if low in _SCONJ:
        return "SCONJ"
    if low.endswith("ly") and len(low) > 3:
        return "ADV"
    if len(low) > 4 and low.endswith(_ADJ_SUFFIXES):
        return "ADJ"
    if low in _IRREGULAR_VERBS:
        return "VERB"
    if len(low) > 3 and (low.endswith("ed") or low.endswith("ing")):
        return "VERB"
    if _is_capitalized(form) and not sentence_initial:
        return "PROPN"
    return "NOUN"


def _entity_tags(forms: Sequence[str], upos: Sequence[str]) -> list[str]:
    """Maximal capitalized runs become ENT spans; digit tokens become NUM.

    A sentence-initial capitalized token joins a run only when the next
    token is capitalized too, so ordinary sentence case is not an entity.
    """
    tags = ["O"] * len(forms)
    i = 0
    while i < len(forms):
        if upos[i] == "NUM":
            tags[i] = "B-NUM"
            i += 1
            continue
        starts_run = _is_capitalized(forms[i]) and (
            i > 0 or (i + 1 < len(forms) and _is_capitalized(forms[i + 1]))
        )
        if starts_run:
            j = i
            while j < len(forms) and _is_capitalized(forms[j]):
                j += 1
            tags[i] = "B-ENT"
            for k in range(i + 1, j):
                tags[k] = "I-ENT"
            i = j
        else:
            i += 1
    return tags


def _clause_predicates(forms: Sequence[str], upos: Sequence[str]) -> dict[int, str]:
    """Map token position -> clause deprel for marker-introduced clauses.

    The first open-class token after a relativizer is treated as the
    predicate of a relative clause; after a subordinating conjunction, of
    an adverbial clause.
    """
    marks: dict[int, str] = {}
    for i, form in enumerate(forms):
        low = form.lower()
        if low in _RELATIVIZERS or low in _SCONJ:
            deprel = "acl:relcl" if low in _RELATIVIZERS else "advcl"
            for j in range(i + 1, len(forms)):
                if upos[j] == "PUNCT" or forms[j].lower() in _CLOSED:
                    continue
                if j not in marks:
                    marks[j] = deprel
                break
    return marks


def _nearest(upos: Sequence[str], start: int, step: int, wanted) -> int | None:
    i = start
    while 0 <= i < len(upos):
        if upos[i] in wanted:
            return i
        i += step
    return None


class RulePipeline:
    """Deterministic heuristic annotator.

    Sentences split on ``.?!`` + whitespace, tokens on word/punctuation
    boundaries (identical to the interchange conventions downstream).
    POS comes from closed-class lexicons and suffix rules, the parse is a
    one-root tree with clause and modifier relations attached by marker
    words, and entities are capitalized runs plus numbers.
    """

    name = BUILTIN_MODEL

    def annotate(self, text: str) -> list[list[TokenAnnotation]]:
        sentences = []
        for chunk in _SENT_BOUNDARY.split(text.strip()):
            forms = _TOKEN.findall(chunk)
            if forms:
                sentences.append(self._annotate_sentence(forms))
        return sentences

    def annotate_many(
        self, texts: Iterable[str], batch_size: int = 32,
    ) -> list[list[list[TokenAnnotation]]]:
        return [self.annotate(t) for t in texts]

    def _annotate_sentence(self, forms: list[str]) -> list[TokenAnnotation]:
        upos = [_upos(f, i == 0) for i, f in enumerate(forms)]
        entities = _entity_tags(forms, upos)
        clauses = _clause_predicates(forms, upos)

        root = next(
            (i for i, u in enumerate(upos)
             if u in ("VERB", "AUX") and i not in clauses),
            None,
        )
        if root is None:
            root = _nearest(upos, 0, 1, ("NOUN", "PROPN"))
        if root is None:
            root = next((i for i, u in enumerate(upos) if u != "PUNCT"), 0)

        tokens = []
        for i, form in enumerate(forms):
            if i == root:
                deprel, head = "root", 0
            else:
                deprel = clauses.get(i) or {
                    "PUNCT": "punct", "DET": "det", "ADP": "case",
                    "CCONJ": "cc", "SCONJ": "mark", "AUX": "aux",
                    "ADV": "advmod", "ADJ": "amod", "NUM": "nummod",
                }.get(upos[i])
                if deprel is None:
                    deprel = "nsubj" if i < root else "obj"
                if deprel in ("det", "amod", "nummod", "case"):
                    attach = _nearest(upos, i + 1, 1, ("NOUN", "PROPN"))
                elif deprel in ("acl:relcl", "advcl"):
                    attach = _nearest(upos, i - 1, -1, ("NOUN", "PROPN"))
                else:
                    attach = None
                head = (attach if attach is not None else root) + 1
            tokens.append(TokenAnnotation(
                form=form, lemma=form.lower(), upos=upos[i], head=head,
                deprel=deprel, entity=entities[i],
            ))
        return tokens


class SpacyPipeline:
    """Thin wrapper exposing a loaded spacy model as a pipeline."""

    def __init__(self, nlp):
        self._nlp = nlp
        self.name = getattr(nlp, "meta", {}).get("name", "spacy")

    def annotate(self, text: str) -> list[list[TokenAnnotation]]:
        return self._convert(self._nlp(text.strip()))

    def annotate_many(
        self, texts: Iterable[str], batch_size: int = 32,
    ) -> list[list[list[TokenAnnotation]]]:
        return [
            self._convert(doc)
            for doc in self._nlp.pipe([t.strip() for t in texts],
                                      batch_size=batch_size)
        ]

    @staticmethod
    def _convert(doc) -> list[list[TokenAnnotation]]:
        sentences = []
        for sent in doc.sents:
            tokens = []
            for tok in sent:
                if tok.is_space:
                    continue
                if tok.ent_iob_ in ("B", "I"):
                    entity = f"{tok.ent_iob_}-{tok.ent_type_}"
                else:
                    entity = "O"
                head = 0 if tok.head is tok else tok.head.i - sent.start + 1
                tokens.append(TokenAnnotation(
                    form=tok.text, lemma=tok.lemma_, upos=tok.pos_,
                    head=head, deprel=tok.dep_.lower() or "dep",
                    entity=entity,
                ))
            if tokens:
                sentences.append(tokens)
        return sentences


def load_pipeline(model: str):
    """Resolve a pipeline by model name.

    ``builtin-rules`` always works; spacy-style names require the spacy
    package and the named model to be installed.
    """
    if model == BUILTIN_MODEL:
        return RulePipeline()
    if _SPACY_NAME.match(model):
        try:
            import spacy
        except ImportError:
            raise PipelineUnavailable(
                model,
                f"install it with: pip install spacy && "
                f"python -m spacy download {model}",
            ) from None
        try:
            return SpacyPipeline(spacy.load(model))
        except OSError:
            raise PipelineUnavailable(
                model, f"install it with: python -m spacy download {model}",
            ) from None
    raise PipelineUnavailable(
        model,
        f"known pipelines: {BUILTIN_MODEL!r} or an installed spacy model "
        f"name such as 'en_core_web_sm'",
    )
