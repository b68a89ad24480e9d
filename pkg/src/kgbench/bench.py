"""Benchmark generation: turn knowledge graphs into paired pre/post probe
datasets and scaled training files.

The output tree is written through an atomic directory swap, so a failed
run leaves nothing behind. Every random choice is split per slot from the
config seed, making the emitted files byte-identical across runs and
independent of emission order.
"""

from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError, KGBenchError, SchemaViolation
from .kg import (
    FactTriple,
    InterventionSpec,
    KnowledgeGraph,
    Level,
    Mode,
    derive_intervention,
    load_kg,
    require_full_hierarchy,
    sibling_objects,
)
from .probes import (
    MCQItem,
    Phase,
    Probe,
    ProbeType,
    SCALE_TAGS,
    build_mcq,
    build_probes,
    expand_scale,
    fact_id_of,
    instantiate_templates,
    reverse_question,
    validate_item,
)
from .util import atomic_dir_swap, dump_jsonl, stable_seed, write_json

DEFAULT_PROBE_TYPES = tuple(t.value for t in ProbeType)


@dataclass(frozen=True)
class BenchmarkConfig:
    kg_paths: tuple[str, ...]
    output_dir: str
    domains: tuple[str, ...] = ()
    branches: tuple[str, ...] = tuple(level.value for level in Level)
    modes: tuple[str, ...] = (Mode.EDIT.value, Mode.UNLEARN.value)
    scales: tuple[int, ...] = (1, 10)
    eval_probes_per_branch: int = 100
    seed: int = 0
    generator: str = "builtin"
    llm_endpoint: Optional[str] = None
    probe_types: tuple[str, ...] = DEFAULT_PROBE_TYPES
    target_facts: dict[str, dict[str, dict[str, str]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.kg_paths:
            raise ConfigError("kg_paths must name at least one graph")
        if not self.output_dir:
            raise ConfigError("output_dir is required")
        bad_scales = [k for k in self.scales if k not in SCALE_TAGS]
        if bad_scales:
            raise ConfigError(f"scales {bad_scales} outside supported set {SCALE_TAGS}")
        bad_modes = [m for m in self.modes if m not in (Mode.EDIT.value, Mode.UNLEARN.value)]
        if bad_modes:
            raise ConfigError(f"unknown modes: {bad_modes}")
        bad_branches = [b for b in self.branches if b not in {lv.value for lv in Level}]
        if bad_branches:
            raise ConfigError(f"unknown branches: {bad_branches}")
        bad_types = [t for t in self.probe_types if t not in DEFAULT_PROBE_TYPES]
        if bad_types:
            raise ConfigError(f"unknown probe types: {bad_types}")
        if self.generator not in ("builtin", "llm"):
            raise ConfigError(f"generator must be builtin or llm, got {self.generator!r}")
        if self.eval_probes_per_branch < 1:
            raise ConfigError("eval_probes_per_branch must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict[str, Any], base_dir: str | Path = ".") -> "BenchmarkConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = Path(base_dir)
        doc = dict(doc)
        try:
            doc["kg_paths"] = tuple(str(base / p) for p in doc["kg_paths"])
            doc["output_dir"] = str(base / doc["output_dir"])
        except KeyError as exc:
            raise ConfigError(f"missing config key: {exc}") from exc
        for key in ("domains", "branches", "modes", "probe_types"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if "scales" in doc:
            doc["scales"] = tuple(int(k) for k in doc["scales"])
        return cls(**doc)


def planned_counts(config: BenchmarkConfig, n_domains: Optional[int] = None) -> dict[str, int]:
    """Exact output sizes implied by the config arithmetic."""
    domains = n_domains if n_domains is not None else len(config.domains) or len(config.kg_paths)
    cells = domains * len(config.branches) * len(config.modes)
    training = cells * sum(config.scales)
    eval_items = domains * len(config.branches) * config.eval_probes_per_branch * 2
    return {
        "domains": domains,
        "branches": len(config.branches),
        "modes": len(config.modes),
        "training_samples": training,
        "eval_items": eval_items,
    }


@dataclass(frozen=True)
class BenchmarkBundle:
    out_dir: Path
    summary: dict[str, Any]


def _viable_intervention_facts(kg: KnowledgeGraph, branch: Level) -> list[FactTriple]:
    """Literal-object facts anchored at the branch level with enough sibling
    objects for replacement derivation and distractor sourcing."""
    out = []
    for e in kg.edges:
        if e.object in kg.nodes:
            continue
        if kg.node(e.subject).level is not branch:
            continue
        siblings = sibling_objects(kg, e)
        numeric = e.object.lstrip("-").isdigit()
        if siblings and (len(siblings) >= 3 or numeric):
            out.append(e)
    return sorted(out, key=lambda e: (e.subject, e.relation, e.object))


def _pick_fact(
    kg: KnowledgeGraph, branch: Level, config: BenchmarkConfig, seed: int
) -> FactTriple:
    pinned = config.target_facts.get(kg.domain, {}).get(branch.value)
    if pinned:
        fact = FactTriple(**pinned)
        if not kg.has_fact(fact):
            raise ConfigError(f"pinned fact {fact} not present in {kg.domain} graph")
        return fact
    candidates = _viable_intervention_facts(kg, branch)
    if not candidates:
        raise ConfigError(
            f"graph {kg.domain!r} has no viable intervention fact at branch {branch.value}"
        )
    return random.Random(seed).choice(candidates)


def _display(kg: KnowledgeGraph, value: str) -> str:
    return kg.nodes[value].label if value in kg.nodes else value


def _emit_slot_items(
    kg: KnowledgeGraph,
    spec: InterventionSpec,
    probes: list[Probe],
    seed: int,
) -> list[MCQItem]:
    """Expand a slot's probes into keyed MCQ lines.

    Intervention-fact probes emit a pre-keyed and a post-keyed line whose
    options carry the counterpart object, except conflict members, which are
    single lines inherently keyed to one phase.
    """
    orig = _display(kg, spec.item.object)
    updated = _display(kg, spec.updated.object) if spec.updated else orig
    intervention_fid = fact_id_of(spec.item)
    items: list[MCQItem] = []

    for probe in probes:
        if probe.probe_type is ProbeType.CONFLICT:
            keyed = Phase.PRE if probe.probe_id.endswith(":old") else Phase.POST
            answer, other = (orig, updated) if keyed is Phase.PRE else (updated, orig)
            items.append(
                build_mcq(probe, answer, kg, keyed, seed=seed, required=(other,))
            )
            continue

        for keyed in (Phase.PRE, Phase.POST):
            line_probe = dataclasses.replace(
                probe, probe_id=f"{probe.probe_id}:{keyed.value}"
            )
            if probe.fact_id == intervention_fid and probe.probe_type is not ProbeType.REVERSE:
                answer = orig if keyed is Phase.PRE else updated
                required: tuple[str, ...] = (updated if keyed is Phase.PRE else orig,)
            elif probe.probe_type is ProbeType.REVERSE:
                answer = kg.node(spec.item.subject).label
                required = ()
                if keyed is Phase.POST and spec.updated is not None:
                    line_probe = dataclasses.replace(
                        line_probe, question=reverse_question(kg, spec.updated)
                    )
            else:
                subject, _, relation = probe.fact_id.partition("|")
                match = next(
                    (
                        _display(kg, e.object)
                        for e in kg.edges
                        if e.subject == subject and e.relation == relation
                    ),
                    None,
                )
                if match is None:
                    raise KGBenchError(
                        f"probe {probe.probe_id} references unknown fact {probe.fact_id}"
                    )
                answer = match
                required = ()
            items.append(build_mcq(line_probe, answer, kg, keyed, seed=seed, required=required))
    return items


def _template_generator(config: BenchmarkConfig):
    if config.generator != "llm":
        return None
    from .textgen import Endpoint, LLMClient

    endpoint = (
        Endpoint(url=config.llm_endpoint) if config.llm_endpoint else Endpoint.from_env()
    )
    return LLMClient(endpoint)


def _build_branch_probeset(
    kg: KnowledgeGraph,
    spec: InterventionSpec,
    config: BenchmarkConfig,
    branch: Level,
) -> list[MCQItem]:
    templates = instantiate_templates(
        kg,
        spec.item,
        branch,
        generator=_template_generator(config),
        count=4,
        seed=stable_seed(config.seed, kg.domain, branch.value, "templates"),
    )
    items: list[MCQItem] = []
    types = list(config.probe_types)
    for slot in range(config.eval_probes_per_branch):
        ptype = ProbeType(types[slot % len(types)])
        slot_seed = stable_seed(config.seed, kg.domain, branch.value, slot)
        probes = build_probes(
            kg,
            spec,
            templates,
            {ptype},
            seed=slot_seed,
            id_prefix=f"{kg.domain}:{branch.value}:{slot:03d}",
        )
        slot_items = _emit_slot_items(kg, spec, probes, seed=slot_seed)
        for item in slot_items:
            qc = validate_item(item, kg, spec)
            if not qc.ok:
                raise KGBenchError(
                    f"generator emitted an invalid item {item.probe.probe_id}: {qc.failures}"
                )
        items.extend(slot_items)
    return items


def generate_benchmark(config: BenchmarkConfig) -> BenchmarkBundle:
    """Emit the full benchmark tree for a config; see module docstring."""
    graphs: dict[str, KnowledgeGraph] = {}
    for path in config.kg_paths:
        try:
            kg = load_kg(path)
            require_full_hierarchy(kg)
        except KGBenchError as exc:
            # a graph the config points at is unreadable or unusable: that is
            # a config problem, not a generation failure
            raise ConfigError(f"kg_paths entry {path}: {exc}") from exc
        if kg.domain in graphs:
            raise ConfigError(f"duplicate domain {kg.domain!r} across kg_paths")
        graphs[kg.domain] = kg
    domains = config.domains or tuple(sorted(graphs))
    missing = [d for d in domains if d not in graphs]
    if missing:
        raise ConfigError(f"domains not covered by kg_paths: {missing}")

    counts = planned_counts(config, n_domains=len(domains))
    summary: dict[str, Any] = {
        "planned": counts,
        "emitted": {"training_samples": 0, "eval_items": 0},
        "cells": [],
        "interventions": {},
        "seed": config.seed,
    }

    def build(tmp: Path) -> None:
        for domain in domains:
            kg = graphs[domain]
            for branch_name in config.branches:
                branch = Level(branch_name)
                fact_seed = stable_seed(config.seed, domain, branch_name, "fact")
                fact = _pick_fact(kg, branch, config, fact_seed)
                spec = derive_intervention(
                    kg,
                    fact,
                    Mode.EDIT,
                    seed=stable_seed(config.seed, domain, branch_name, "replacement"),
                )
                branch_dir = tmp / domain / branch_name
                branch_dir.mkdir(parents=True)
                write_json(spec.to_dict(), branch_dir / "intervention.json")
                summary["interventions"][f"{domain}/{branch_name}"] = spec.to_dict()

                items = _build_branch_probeset(kg, spec, config, branch)
                n_eval = dump_jsonl(
                    (item.to_record() for item in items), branch_dir / "eval_probes.jsonl"
                )
                summary["emitted"]["eval_items"] += n_eval

                training_fact = spec.updated if spec.updated is not None else spec.item
                for mode_name in config.modes:
                    mode_dir = branch_dir / mode_name
                    mode_dir.mkdir()
                    cell_seed = stable_seed(config.seed, domain, branch_name, mode_name, "train")
                    cell_total = 0
                    for k in sorted(config.scales):
                        samples = expand_scale(training_fact, k, seed=cell_seed, kg=kg)
                        n = dump_jsonl(
                            (
                                {
                                    "text": s.text,
                                    "fact_id": s.fact_id,
                                    "scale": s.scale_tag,
                                    "mode": mode_name,
                                }
                                for s in samples
                            ),
                            mode_dir / f"train_k{k}.jsonl",
                        )
                        cell_total += n
                    summary["emitted"]["training_samples"] += cell_total
                    summary["cells"].append(
                        {
                            "domain": domain,
                            "branch": branch_name,
                            "mode": mode_name,
                            "training_samples": cell_total,
                            "scales": sorted(config.scales),
                        }
                    )
        if summary["emitted"]["training_samples"] != counts["training_samples"]:
            raise KGBenchError(
                f"emitted {summary['emitted']['training_samples']} training samples, "
                f"planned {counts['training_samples']}"
            )
        if summary["emitted"]["eval_items"] != counts["eval_items"]:
            raise KGBenchError(
                f"emitted {summary['emitted']['eval_items']} eval items, "
                f"planned {counts['eval_items']}"
            )
        write_json(summary, tmp / "summary.json")

    out = atomic_dir_swap(build, config.output_dir)
    return BenchmarkBundle(out_dir=out, summary=summary)


def load_bundle_key(bundle_dir: str | Path) -> dict[str, dict[str, Any]]:
    """Load every eval probe line of a generated bundle, keyed by probe_id."""
    from .metrics import load_probe_key

    key: dict[str, dict[str, Any]] = {}
    for probe_file in sorted(Path(bundle_dir).glob("*/*/eval_probes.jsonl")):
        part = load_probe_key(str(probe_file))
        overlap = set(part) & set(key)
        if overlap:
            raise SchemaViolation(f"duplicate probe ids across branches: {sorted(overlap)[:3]}")
        key.update(part)
    return key


def load_bundle_interventions(bundle_dir: str | Path) -> dict[str, InterventionSpec]:
    """Intervention specs per domain/branch cell of a generated bundle."""
    out: dict[str, InterventionSpec] = {}
    for spec_file in sorted(Path(bundle_dir).glob("*/*/intervention.json")):
        cell = f"{spec_file.parent.parent.name}/{spec_file.parent.name}"
        out[cell] = InterventionSpec.from_dict(json.loads(spec_file.read_text(encoding="utf-8")))
    return out
