"""Probe construction: six probe types, four-choice items, scale expansion,
and quality control.

Probes tied to the intervened fact are emitted in two keyed variants: the
pre variant keys the original object, the post variant keys the updated one.
Each variant's options carry the counterpart object, so answering with the
pre-world belief on a post-keyed item is always possible (and wrong).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Optional, Sequence

from .errors import (
    DistractorShortage,
    EmptyBank,
    GenerationFailure,
    MissingHierarchy,
    VariantExhaustion,
)
from .kg import (
    FactTriple,
    InterventionSpec,
    KnowledgeGraph,
    Level,
    hop_distance,
)
from .templates import Template, pick_templates, relation_phrase
from .util import stable_seed

SCALE_TAGS = (1, 10, 100, 1000, 10000)


class ProbeType(str, Enum):
    DIRECT = "direct"
    REVERSE = "reverse"
    CONFLICT = "conflict"
    MULTI_HOP = "multi_hop"
    COMPARISON = "comparison"
    CONTEXTUAL = "contextual"


class Polarity(str, Enum):
    POSITIVE = "positive"
    PRESERVATION = "preservation"


class Phase(str, Enum):
    PRE = "pre"
    POST = "post"


_POLARITY_BY_TYPE = {
    ProbeType.DIRECT: Polarity.POSITIVE,
    ProbeType.REVERSE: Polarity.POSITIVE,
    ProbeType.MULTI_HOP: Polarity.POSITIVE,
    ProbeType.COMPARISON: Polarity.POSITIVE,
    ProbeType.CONTEXTUAL: Polarity.PRESERVATION,
}


def fact_id_of(fact: FactTriple) -> str:
    return f"{fact.subject}|{fact.relation}"


@dataclass(frozen=True)
class Probe:
    probe_id: str
    fact_id: str
    domain: str
    branch: Level
    probe_type: ProbeType
    polarity: Polarity
    question: str
    hop_distance: int = 0
    pair_id: Optional[str] = None
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.probe_type is ProbeType.CONFLICT and not self.pair_id:
            raise ValueError("conflict probes must carry a pair_id")
        fixed = _POLARITY_BY_TYPE.get(self.probe_type)
        if fixed is not None and self.polarity is not fixed:
            raise ValueError(
                f"{self.probe_type.value} probes must have polarity {fixed.value}"
            )

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "Probe":
        return cls(
            probe_id=rec["probe_id"],
            fact_id=rec["fact_id"],
            domain=rec["domain"],
            branch=Level(rec["branch"]),
            probe_type=ProbeType(rec["probe_type"]),
            polarity=Polarity(rec["polarity"]),
            question=rec["question"],
            hop_distance=int(rec.get("hop_distance", 0)),
            pair_id=rec.get("pair_id"),
            tags=tuple(rec.get("tags", ())),
        )


@dataclass(frozen=True)
class MCQItem:
    probe: Probe
    options: tuple[str, str, str, str]
    correct_index: int
    keyed_phase: Phase

    def __post_init__(self) -> None:
        # duplicate options are representable on purpose: quality control
        # flags them instead of the constructor
        if len(self.options) != 4:
            raise ValueError("options must hold exactly 4 strings")
        if not 0 <= self.correct_index <= 3:
            raise ValueError("correct_index must be in 0..3")

    @property
    def correct_option(self) -> str:
        return self.options[self.correct_index]

    def to_record(self) -> dict[str, Any]:
        return {
            "probe_id": self.probe.probe_id,
            "fact_id": self.probe.fact_id,
            "domain": self.probe.domain,
            "branch": self.probe.branch.value,
            "probe_type": self.probe.probe_type.value,
            "polarity": self.probe.polarity.value,
            "question": self.probe.question,
            "options": list(self.options),
            "correct_index": self.correct_index,
            "keyed_phase": self.keyed_phase.value,
            "hop_distance": self.probe.hop_distance,
            "pair_id": self.probe.pair_id,
            "tags": list(self.probe.tags),
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "MCQItem":
        return cls(
            probe=Probe.from_record(rec),
            options=tuple(rec["options"]),
            correct_index=int(rec["correct_index"]),
            keyed_phase=Phase(rec["keyed_phase"]),
        )


@dataclass(frozen=True)
class TrainingSample:
    text: str
    fact_id: str
    scale_tag: int
    variant_seed: int

    def __post_init__(self) -> None:
        if self.scale_tag not in SCALE_TAGS:
            raise ValueError(f"scale_tag must be one of {SCALE_TAGS}")


@dataclass(frozen=True)
class QCResult:
    ok: bool
    failures: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.ok != (len(self.failures) == 0):
            raise ValueError("ok must mirror an empty failure list")


def instantiate_templates(
    kg: KnowledgeGraph,
    fact: FactTriple,
    level: Level | str,
    generator: Any = None,
    count: int = 1,
    seed: int = 0,
) -> list[Template]:
    """Return `count` question templates for a level.

    Without a generator the built-in bank is sampled. With a generator
    (a textgen client handle), templates are requested from it; the mock
    generator keeps this deterministic under the seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    level = Level(level)
    if generator is None:
        return pick_templates(level, count, seed)

    prompt = (
        f"Write {count} question templates about a fact whose subject is "
        f"'{kg.node(fact.subject).label}' and whose relation is "
        f"'{relation_phrase(fact.relation)}'. Target the {level.value} level of "
        "a knowledge hierarchy. Use the placeholders {subject} and {relation}; "
        "one template per line; each template must ask for the missing value."
    )
    try:
        text = generator.generate(prompt, seed=seed)
    except Exception as exc:
        raise GenerationFailure(f"template generation failed: {exc}") from exc
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyBank("generator returned no text")
    templates: list[Template] = []
    for i in range(count):
        line = lines[i % len(lines)]
        suffix = "" if i < len(lines) else f" (variant {i})"
        if "{subject}" in line:
            candidate = line + suffix
        else:
            candidate = f"{line}{suffix} Given this, the {{subject}} {{relation}} what?"
        try:
            templates.append(Template(candidate, level, "generated"))
        except ValueError:
            # generator invented placeholders; fall back to a plain scaffold
            templates.append(
                Template(f"The {{subject}} {{relation}} what? (variant {i})", level, "generated")
            )
    return templates


def _render_question(template: Template, kg: KnowledgeGraph, fact: FactTriple) -> str:
    return template.text.format(
        subject=kg.node(fact.subject).label,
        relation=relation_phrase(fact.relation),
        object=fact.object,
    )


def _object_text(kg: KnowledgeGraph, value: str) -> str:
    """Node-valued objects display their label; literals display as-is."""
    return kg.nodes[value].label if value in kg.nodes else value


def reverse_question(kg: KnowledgeGraph, fact: FactTriple) -> str:
    obj = _object_text(kg, fact.object)
    return (
        f"Which subject is recorded with '{relation_phrase(fact.relation)} {obj}'?"
    )


def build_probes(
    kg: KnowledgeGraph,
    spec: InterventionSpec,
    templates: Sequence[Template],
    types: Iterable[ProbeType | str],
    seed: int = 0,
    id_prefix: str = "",
) -> list[Probe]:
    """Build one probe per requested type (a conflict request yields a pair).

    Direct, reverse, multi-hop and comparison probes target the intervened
    fact; contextual probes target a fact outside the intervention scope.
    """
    templates = list(templates)
    type_set = {ProbeType(t) for t in types}
    if not templates:
        raise ValueError("templates must be non-empty")
    if not type_set:
        raise ValueError("types must be non-empty")

    fact = spec.item
    branch = kg.node(fact.subject).level
    fid = fact_id_of(fact)
    prefix = id_prefix or f"{kg.domain}:{branch.value}"
    probes: list[Probe] = []

    for ptype in sorted(type_set, key=lambda t: t.value):
        rng = random.Random(stable_seed(seed, prefix, ptype.value))
        base_id = f"{prefix}:{ptype.value}"
        template = rng.choice(templates)

        if ptype is ProbeType.DIRECT:
            probes.append(
                Probe(
                    probe_id=base_id,
                    fact_id=fid,
                    domain=kg.domain,
                    branch=branch,
                    probe_type=ptype,
                    polarity=Polarity.POSITIVE,
                    question=_render_question(template, kg, fact),
                    tags=("ID",),
                )
            )
        elif ptype is ProbeType.REVERSE:
            probes.append(
                Probe(
                    probe_id=base_id,
                    fact_id=fid,
                    domain=kg.domain,
                    branch=branch,
                    probe_type=ptype,
                    polarity=Polarity.POSITIVE,
                    question=reverse_question(kg, fact),
                    tags=("ID",),
                )
            )
        elif ptype is ProbeType.CONFLICT:
            old_obj = _object_text(kg, fact.object)
            new_obj = _object_text(kg, spec.updated.object) if spec.updated else old_obj
            subject = kg.node(fact.subject).label
            rel = relation_phrase(fact.relation)
            q_old = (
                f"Some sources state that the {subject} {rel} {old_obj}, while others "
                f"state {new_obj}. Which is correct?"
            )
            q_new = (
                f"Some sources state that the {subject} {rel} {new_obj}, while others "
                f"state {old_obj}. Which is correct?"
            )
            probes.append(
                Probe(
                    probe_id=f"{base_id}:old",
                    fact_id=fid,
                    domain=kg.domain,
                    branch=branch,
                    probe_type=ptype,
                    polarity=Polarity.PRESERVATION,
                    question=q_old,
                    pair_id=base_id,
                    tags=("ID", "adversarial"),
                )
            )
            probes.append(
                Probe(
                    probe_id=f"{base_id}:new",
                    fact_id=fid,
                    domain=kg.domain,
                    branch=branch,
                    probe_type=ptype,
                    polarity=Polarity.POSITIVE,
                    question=q_new,
                    pair_id=base_id,
                    tags=("ID", "adversarial"),
                )
            )
        elif ptype is ProbeType.MULTI_HOP:
            distances = {
                nid: hop_distance(kg, fact.subject, nid)
                for nid in kg.nodes
                if nid != fact.subject
            }
            far = sorted(nid for nid, d in distances.items() if d is not None and d >= 2)
            if not far:
                raise MissingHierarchy(
                    f"no node at hop distance >= 2 from {fact.subject!r}"
                )
            via = rng.choice(far)
            dist = distances[via]
            question = (
                f"{kg.node(via).label} is linked to the {kg.node(fact.subject).label} "
                f"through the knowledge hierarchy. "
                + _render_question(template, kg, fact)
            )
            probes.append(
                Probe(
                    probe_id=base_id,
                    fact_id=fid,
                    domain=kg.domain,
                    branch=branch,
                    probe_type=ptype,
                    polarity=Polarity.POSITIVE,
                    question=question,
                    hop_distance=int(dist),
                    tags=("ID", f"via:{via}"),
                )
            )
        elif ptype is ProbeType.COMPARISON:
            old_obj = _object_text(kg, fact.object)
            if spec.updated is not None:
                alt = _object_text(kg, spec.updated.object)
            else:
                pool = [o for o in _sibling_pool(kg, fact) if o != old_obj]
                if not pool:
                    raise DistractorShortage(
                        "comparison probe needs an alternative object"
                    )
                alt = rng.choice(pool)
            question = (
                f"The {kg.node(fact.subject).label} "
                f"{relation_phrase(fact.relation)} {old_obj} or {alt}: which is it?"
            )
            probes.append(
                Probe(
                    probe_id=base_id,
                    fact_id=fid,
                    domain=kg.domain,
                    branch=branch,
                    probe_type=ptype,
                    polarity=Polarity.POSITIVE,
                    question=question,
                    tags=("ID",),
                )
            )
        elif ptype is ProbeType.CONTEXTUAL:
            excluded_objects = {fact.object}
            if spec.updated is not None:
                excluded_objects.add(spec.updated.object)
            candidates = [
                e
                for e in kg.edges
                if e != fact
                and e.subject != fact.subject
                and e.subject not in spec.scope
                and fact_id_of(e) not in spec.scope
                and e.object not in excluded_objects
            ]
            if not candidates:
                raise MissingHierarchy("no out-of-scope fact for a contextual probe")
            ctx = rng.choice(sorted(candidates, key=lambda e: (e.subject, e.relation)))
            dist = hop_distance(kg, fact.subject, ctx.subject)
            question = (
                f"Independently of recent updates, the "
                f"{kg.node(ctx.subject).label} {relation_phrase(ctx.relation)} what?"
            )
            probes.append(
                Probe(
                    probe_id=base_id,
                    fact_id=fact_id_of(ctx),
                    domain=kg.domain,
                    branch=branch,
                    probe_type=ptype,
                    polarity=Polarity.PRESERVATION,
                    question=question,
                    hop_distance=int(dist) if dist is not None else 0,
                    tags=("OOD",),
                )
            )
    return probes


def _sibling_pool(kg: KnowledgeGraph, fact: FactTriple) -> list[str]:
    """Distractor candidates: objects of same-relation edges whose subject
    sits at the same level, then any same-relation edge, deduplicated."""
    level = kg.node(fact.subject).level
    same_level: list[str] = []
    any_level: list[str] = []
    for e in kg.edges:
        if e.relation != fact.relation or e.object == fact.object:
            continue
        display = _object_text(kg, e.object)
        if display == _object_text(kg, fact.object):
            continue
        bucket = same_level if kg.node(e.subject).level is level else any_level
        if display not in bucket:
            bucket.append(display)
    merged = same_level + [o for o in any_level if o not in same_level]
    return merged


_NUMERIC_OFFSETS = (2, -2, 3, -3, 5, -5)


def _numeric_perturbations(value: str) -> list[str]:
    try:
        base = int(value)
    except ValueError:
        return []
    return [str(base + off) for off in _NUMERIC_OFFSETS]


def build_mcq(
    probe: Probe,
    correct_answer: str,
    kg: KnowledgeGraph,
    keyed_phase: Phase | str,
    seed: int = 0,
    required: Sequence[str] = (),
) -> MCQItem:
    """Assemble a four-choice item around the keyed answer.

    Distractors come from sibling objects under the fact's (level, relation);
    numeric answers fall back to small year-style offsets before a
    DistractorShortage is raised. `required` forces specific strings (the
    counterpart-phase object, comparison alternatives) into the option set.
    Option order is a seeded permutation, split per probe id so items are
    independent of generation order.
    """
    keyed_phase = Phase(keyed_phase)
    rng = random.Random(stable_seed(seed, probe.probe_id, keyed_phase.value))

    options: list[str] = [correct_answer]
    for req in required:
        if req != correct_answer and req not in options:
            options.append(req)
    if len(options) > 4:
        raise DistractorShortage("more than 3 required alternatives")

    subject, _, relation = probe.fact_id.partition("|")
    pool: list[str]
    if probe.probe_type is ProbeType.REVERSE:
        pool = [
            n.label
            for n in kg.nodes.values()
            if n.id != subject and n.label != correct_answer
        ]
    else:
        fact = FactTriple(subject=subject, relation=relation, object=correct_answer)
        if subject in kg.nodes:
            pool = _sibling_pool(kg, fact)
        else:
            pool = []
    pool = [p for p in pool if p not in options]
    if len(options) + len(pool) < 4:
        # entity substitution: labels of other nodes, same level first
        answer_level = next(
            (n.level for n in kg.nodes.values() if n.label == correct_answer), None
        )
        if answer_level is not None:
            ranked = sorted(
                (n for n in kg.nodes.values() if n.label != correct_answer),
                key=lambda n: (n.level is not answer_level, n.id),
            )
            for node in ranked:
                if node.label not in options and node.label not in pool:
                    pool.append(node.label)
    if len(options) + len(pool) < 4:
        for cand in _numeric_perturbations(correct_answer):
            if cand not in options and cand not in pool:
                pool.append(cand)
    if len(options) + len(pool) < 4:
        raise DistractorShortage(
            f"probe {probe.probe_id}: only {len(pool)} distractors available"
        )
    options.extend(rng.sample(pool, 4 - len(options)))
    rng.shuffle(options)
    return MCQItem(
        probe=probe,
        options=tuple(options),
        correct_index=options.index(correct_answer),
        keyed_phase=keyed_phase,
    )


# scale expansion: a combinatorial paraphrase pool, enumerated in a seeded
# order with the canonical statement pinned first so prefixes are stable.

_LEADS = (
    "",
    "According to the current record, ",
    "As now documented, ",
    "Current references state that ",
    "It is established that ",
    "Note for the record: ",
    "Per the revised account, ",
    "For training purposes: ",
    "As taught today, ",
    "The consensus holds that ",
    "It was later recorded that ",
    "In summary, ",
    "To be clear, ",
    "Put plainly, ",
)

_CORES = (
    "the {s} {r} {o}",
    "the {s} {r}, specifically, {o}",
    "{o} is what the {s} {r}",
    "the {s}, by all accounts, {r} {o}",
    "the value recorded for the {s} is {o}",
    "the {s} is associated through '{raw}' with {o}",
    "for the {s}, the answer on record is {o}",
    "the entry for the {s} reads {o}",
    "one should answer {o} when asked what the {s} {r}",
    "the {s} {r} {o}, not anything else",
    "{o} is the recorded answer for the {s}",
    "the accepted statement is that the {s} {r} {o}",
    "concerning the {s}, {o} is correct",
    "the {s} {r} exactly {o}",
    "whenever the {s} comes up, the answer is {o}",
    "the fact to retain: the {s} {r} {o}",
)

_CONTEXTS = (
    "",
    " in this domain",
    " in scholarly use",
    " across standard references",
    " for examination purposes",
    " in every current source",
)

_TAILS = (
    ".",
    ". This is the accepted statement.",
    ". Remember this fact.",
    ". This supersedes earlier accounts.",
    ". No other value applies.",
    ". This is the reference answer.",
    ". Keep this version.",
    ". This entry is authoritative.",
    ". Treat this as settled.",
    ". Cite it as such.",
)

_MARKS = ("", "Fact: ")


def variant_pool_size() -> int:
    return len(_LEADS) * len(_CORES) * len(_CONTEXTS) * len(_TAILS) * len(_MARKS)


def _variant_text(subject: str, rel: str, raw_relation: str, obj: str, index: int) -> str:
    n_cores = len(_CORES)
    n_ctx = len(_CONTEXTS)
    n_tails = len(_TAILS)
    n_marks = len(_MARKS)
    core_i = index % n_cores
    index //= n_cores
    ctx_i = index % n_ctx
    index //= n_ctx
    tail_i = index % n_tails
    index //= n_tails
    mark_i = index % n_marks
    index //= n_marks
    lead = _LEADS[index]
    core = _CORES[core_i].format(s=subject, r=rel, o=obj, raw=raw_relation)
    body = _MARKS[mark_i] + lead + core + _CONTEXTS[ctx_i] + _TAILS[tail_i]
    return body[0].upper() + body[1:]


def expand_scale(
    fact: FactTriple,
    k: int,
    seed: int,
    kg: Optional[KnowledgeGraph] = None,
) -> list[TrainingSample]:
    """Produce exactly k pairwise-distinct training statements of the fact.

    The k=1 output is the canonical statement; under a fixed seed the size-k
    output is a prefix of every larger scale's output.
    """
    if k not in SCALE_TAGS:
        raise ValueError(f"scale must be one of {SCALE_TAGS}")
    pool = variant_pool_size()
    if k > pool:
        raise VariantExhaustion(f"distinct-variant pool ({pool}) smaller than k={k}")

    subject = kg.node(fact.subject).label if kg is not None else fact.subject
    obj = kg.nodes[fact.object].label if kg is not None and fact.object in kg.nodes else fact.object
    rel = relation_phrase(fact.relation)
    order = list(range(1, pool))
    random.Random(stable_seed(seed, fact_id_of(fact), "scale-order")).shuffle(order)
    indices = [0] + order

    fid = fact_id_of(fact)
    samples = [
        TrainingSample(
            text=_variant_text(subject, rel, fact.relation, obj, idx),
            fact_id=fid,
            scale_tag=k,
            variant_seed=idx,
        )
        for idx in indices[:k]
    ]
    return samples


def expected_answer(
    probe: Probe,
    keyed_phase: Phase | str,
    kg: KnowledgeGraph,
    spec: InterventionSpec,
) -> Optional[str]:
    """The string the keyed-correct option must equal, or None when the
    probe's fact cannot be resolved."""
    keyed_phase = Phase(keyed_phase)
    subject, _, relation = probe.fact_id.partition("|")
    if probe.probe_type is ProbeType.REVERSE:
        return kg.nodes[subject].label if subject in kg.nodes else None

    if probe.fact_id == fact_id_of(spec.item):
        if keyed_phase is Phase.PRE:
            return _object_text(kg, spec.item.object)
        target = spec.updated if spec.updated is not None else spec.item
        return _object_text(kg, target.object)

    for e in kg.edges:
        if e.subject == subject and e.relation == relation:
            return _object_text(kg, e.object)
    return None


def validate_item(item: MCQItem, kg: KnowledgeGraph, spec: InterventionSpec) -> QCResult:
    """Quality control: format, factual and distractor checks.

    Failures are data, not exceptions: a malformed item reports every check
    it fails.
    """
    failures: list[str] = []
    options = list(item.options)
    distinct = len(set(options)) == len(options)
    if len(options) != 4 or not 0 <= item.correct_index < len(options) or not distinct:
        failures.append("format")

    expected = None
    if 0 <= item.correct_index < len(options):
        expected = expected_answer(item.probe, item.keyed_phase, kg, spec)
        if expected is None or options[item.correct_index] != expected:
            failures.append("factual")

    if 0 <= item.correct_index < len(options):
        correct = options[item.correct_index]
        distractors = [o for i, o in enumerate(options) if i != item.correct_index]
        if correct in distractors or len(set(distractors)) != len(distractors):
            failures.append("distractor")

    return QCResult(ok=not failures, failures=tuple(failures))
