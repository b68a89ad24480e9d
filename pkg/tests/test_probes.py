from __future__ import annotations

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from kgbench.errors import (
    DistractorShortage,
    EmptyBank,
    MissingHierarchy,
    VariantExhaustion,
)
from kgbench.kg import FactTriple, Mode, derive_intervention, parse_kg
from kgbench.probes import (
    MCQItem,
    Phase,
    Polarity,
    Probe,
    ProbeType,
    build_mcq,
    build_probes,
    expand_scale,
    instantiate_templates,
    validate_item,
    variant_pool_size,
)
from kgbench.templates import builtin_bank, relation_phrase
from kgbench.textgen import Endpoint, LLMClient

GR_FACT = FactTriple("gr", "published_in", "1915")


@pytest.fixture()
def gr_spec(gr_kg):
    return derive_intervention(gr_kg, GR_FACT, Mode.EDIT, replacement="1920", seed=0)


@pytest.fixture()
def gr_templates(gr_kg):
    return instantiate_templates(gr_kg, GR_FACT, "leaf", count=4, seed=0)


def test_relation_phrase():
    assert relation_phrase("published_in") == "was published in"
    assert relation_phrase("signed_in") == "was signed in"
    assert relation_phrase("describes") == "describes"
    assert relation_phrase("encompasses") == "encompasses"


def test_builtin_bank_shape():
    for level in ("root", "intermediate", "leaf"):
        bank = builtin_bank(level)
        assert len(bank) == 8
        assert {t.style for t in bank} == {"definition", "context", "role", "application"}


def test_instantiate_builtin_root(gr_kg):
    templates = instantiate_templates(gr_kg, GR_FACT, "root", count=2, seed=1)
    assert len(templates) == 2
    assert all(t.level.value == "root" for t in templates)
    assert all("{subject}" in t.text for t in templates)


def test_instantiate_count_zero_rejected(gr_kg):
    with pytest.raises(ValueError):
        instantiate_templates(gr_kg, GR_FACT, "root", count=0)


def test_instantiate_beyond_bank_raises(gr_kg):
    with pytest.raises(EmptyBank):
        instantiate_templates(gr_kg, GR_FACT, "root", count=9, seed=0)


def test_instantiate_with_mock_generator_is_deterministic(gr_kg):
    client = LLMClient(Endpoint(url="mock:echo"))
    a = instantiate_templates(gr_kg, GR_FACT, "leaf", generator=client, count=3, seed=9)
    b = instantiate_templates(gr_kg, GR_FACT, "leaf", generator=client, count=3, seed=9)
    assert a == b
    assert len(a) == 3


def test_build_probes_direct_question(gr_kg, gr_spec, gr_templates):
    probes = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.DIRECT}, seed=4)
    assert len(probes) == 1
    probe = probes[0]
    assert probe.probe_type is ProbeType.DIRECT
    assert probe.polarity is Polarity.POSITIVE
    assert "Theory of General Relativity" in probe.question
    assert "was published in" in probe.question


def test_build_probes_conflict_pair(gr_kg, gr_spec, gr_templates):
    probes = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.CONFLICT}, seed=4)
    assert len(probes) == 2
    old, new = probes
    assert old.pair_id == new.pair_id is not None
    assert {p.probe_id[-4:] for p in probes} == {":old", ":new"}
    assert "1915" in old.question and "1920" in old.question


def test_build_probes_multihop_requires_depth(gr_kg, gr_spec, gr_templates):
    probes = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.MULTI_HOP}, seed=4)
    assert probes[0].hop_distance >= 2

    two_node = parse_kg(
        {
            "domain": "d",
            "nodes": [
                {"id": "r", "label": "root thing", "level": "root"},
                {"id": "l", "label": "leaf thing", "level": "leaf"},
            ],
            "edges": [
                {"subject": "r", "relation": "includes", "object": "l"},
                {"subject": "l", "relation": "dated_to", "object": "1900"},
                {"subject": "r", "relation": "dated_to", "object": "1800"},
            ],
        }
    )
    fact = FactTriple("l", "dated_to", "1900")
    spec = derive_intervention(two_node, fact, Mode.EDIT, replacement="1902")
    templates = instantiate_templates(two_node, fact, "leaf", count=2, seed=0)
    with pytest.raises(MissingHierarchy):
        build_probes(two_node, spec, templates, {ProbeType.MULTI_HOP}, seed=0)


def test_build_probes_contextual_is_out_of_scope(gr_kg, gr_spec, gr_templates):
    probes = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.CONTEXTUAL}, seed=4)
    probe = probes[0]
    assert probe.polarity is Polarity.PRESERVATION
    assert probe.fact_id != "gr|published_in"
    assert "OOD" in probe.tags


def test_polarity_partition(gr_kg, gr_spec, gr_templates):
    probes = build_probes(
        gr_kg, gr_spec, gr_templates, set(ProbeType), seed=4
    )
    for probe in probes:
        assert probe.polarity in (Polarity.POSITIVE, Polarity.PRESERVATION)
    positives = {p.probe_id for p in probes if p.polarity is Polarity.POSITIVE}
    preserving = {p.probe_id for p in probes if p.polarity is Polarity.PRESERVATION}
    assert positives | preserving == {p.probe_id for p in probes}
    assert positives & preserving == set()


def test_build_probes_requires_inputs(gr_kg, gr_spec, gr_templates):
    with pytest.raises(ValueError):
        build_probes(gr_kg, gr_spec, [], {ProbeType.DIRECT})
    with pytest.raises(ValueError):
        build_probes(gr_kg, gr_spec, gr_templates, set())


def test_build_mcq_gr_exact_option_set(gr_kg, gr_spec, gr_templates):
    # publication years of the sibling leaves are exactly 1920/1912/1918
    probe = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.DIRECT}, seed=4)[0]
    item = build_mcq(probe, "1915", gr_kg, Phase.PRE, seed=7)
    assert set(item.options) == {"1915", "1920", "1912", "1918"}
    assert item.options[item.correct_index] == "1915"


def test_build_mcq_deterministic(gr_kg, gr_spec, gr_templates):
    probe = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.DIRECT}, seed=4)[0]
    a = build_mcq(probe, "1915", gr_kg, Phase.PRE, seed=7)
    b = build_mcq(probe, "1915", gr_kg, Phase.PRE, seed=7)
    assert a == b
    assert a.to_record() == b.to_record()


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 2**31), phase=st.sampled_from(["pre", "post"]))
def test_build_mcq_deterministic_across_seeds(gr_kg, gr_spec, gr_templates, seed, phase):
    probe = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.DIRECT}, seed=1)[0]
    a = build_mcq(probe, "1915", gr_kg, phase, seed=seed, required=("1920",))
    b = build_mcq(probe, "1915", gr_kg, phase, seed=seed, required=("1920",))
    assert a == b
    assert a.correct_option == "1915"
    assert "1920" in a.options
    assert len(set(a.options)) == 4


def test_build_mcq_shortage_on_two_sibling_values():
    kg = parse_kg(
        {
            "domain": "d",
            "nodes": [
                {"id": "r", "label": "only subject", "level": "root"},
                {"id": "m", "label": "middle", "level": "intermediate"},
                {"id": "l", "label": "leaf", "level": "leaf"},
            ],
            "edges": [
                {"subject": "r", "relation": "named_for", "object": "alpha"},
                {"subject": "m", "relation": "named_for", "object": "beta"},
                {"subject": "l", "relation": "named_for", "object": "gamma"},
            ],
        }
    )
    probe = Probe(
        probe_id="p1",
        fact_id="r|named_for",
        domain="d",
        branch=kg.node("r").level,
        probe_type=ProbeType.DIRECT,
        polarity=Polarity.POSITIVE,
        question="The only subject was named for what?",
    )
    # non-numeric literal with only two sibling values cannot fill 3 slots
    with pytest.raises(DistractorShortage):
        build_mcq(probe, "alpha", kg, Phase.PRE, seed=0)


def test_build_mcq_entity_substitution_for_node_answers(gr_kg):
    # node-valued answer: other node labels fill the distractor pool
    probe = Probe(
        probe_id="p-node",
        fact_id="spacetime|includes",
        domain="physics",
        branch=gr_kg.node("spacetime").level,
        probe_type=ProbeType.CONTEXTUAL,
        polarity=Polarity.PRESERVATION,
        question="The spacetime framework includes what?",
    )
    item = build_mcq(probe, "Theory of General Relativity", gr_kg, Phase.PRE, seed=0)
    assert len(set(item.options)) == 4
    assert item.correct_option == "Theory of General Relativity"


def test_numeric_fallback_offsets():
    kg = parse_kg(
        {
            "domain": "d",
            "nodes": [
                {"id": "r", "label": "dated thing", "level": "root"},
                {"id": "o", "label": "other thing", "level": "leaf"},
            ],
            "edges": [
                {"subject": "r", "relation": "dated_to", "object": "1900"},
                {"subject": "o", "relation": "dated_to", "object": "1950"},
            ],
        }
    )
    probe = Probe(
        probe_id="p1",
        fact_id="r|dated_to",
        domain="d",
        branch=kg.node("r").level,
        probe_type=ProbeType.DIRECT,
        polarity=Polarity.POSITIVE,
        question="The dated thing was dated to what?",
    )
    item = build_mcq(probe, "1900", kg, Phase.PRE, seed=3)
    offsets = {"1902", "1898", "1903", "1897", "1905", "1895"}
    distractors = set(item.options) - {"1900"}
    assert distractors <= offsets | {"1950"}
    assert len(distractors) == 3


def test_expand_scale_k1_is_canonical(gr_kg):
    samples = expand_scale(GR_FACT, 1, seed=5, kg=gr_kg)
    assert len(samples) == 1
    assert samples[0].text == "The Theory of General Relativity was published in 1915."
    assert samples[0].scale_tag == 1


def test_expand_scale_prefix_property(gr_kg):
    by_scale = {k: expand_scale(GR_FACT, k, seed=5, kg=gr_kg) for k in (1, 10, 100, 1000, 10000)}
    scales = sorted(by_scale)
    for small, large in zip(scales, scales[1:]):
        assert [s.text for s in by_scale[large][: small]] == [s.text for s in by_scale[small]]


def test_expand_scale_distinct_at_full_scale(gr_kg):
    samples = expand_scale(GR_FACT, 10_000, seed=5, kg=gr_kg)
    texts = [s.text for s in samples]
    assert len(set(texts)) == 10_000


def test_expand_scale_rejects_non_scale_tags(gr_kg):
    with pytest.raises(ValueError):
        expand_scale(GR_FACT, 7, seed=5, kg=gr_kg)


def test_variant_exhaustion_reported(monkeypatch, gr_kg):
    monkeypatch.setattr("kgbench.probes.variant_pool_size", lambda: 50)
    with pytest.raises(VariantExhaustion):
        expand_scale(GR_FACT, 100, seed=5, kg=gr_kg)


def test_variant_pool_covers_largest_scale():
    assert variant_pool_size() >= 10_000


def test_validate_item_ok(gr_kg, gr_spec, gr_templates):
    probe = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.DIRECT}, seed=4)[0]
    item = build_mcq(probe, "1915", gr_kg, Phase.PRE, seed=7)
    result = validate_item(item, gr_kg, gr_spec)
    assert result.ok and result.failures == ()


def test_validate_item_duplicate_options(gr_kg, gr_spec, gr_templates):
    probe = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.DIRECT}, seed=4)[0]
    item = MCQItem(
        probe=probe,
        options=("1915", "1915", "1912", "1918"),
        correct_index=0,
        keyed_phase=Phase.PRE,
    )
    result = validate_item(item, gr_kg, gr_spec)
    assert not result.ok
    assert set(result.failures) == {"format", "distractor"}


def test_validate_item_wrong_phase_key(gr_kg, gr_spec, gr_templates):
    # keyed post but the correct option still holds the pre-edit object
    probe = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.DIRECT}, seed=4)[0]
    item = MCQItem(
        probe=probe,
        options=("1915", "1920", "1912", "1918"),
        correct_index=0,
        keyed_phase=Phase.POST,
    )
    result = validate_item(item, gr_kg, gr_spec)
    assert result.failures == ("factual",)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 10_000))
def test_conflict_pair_option_invariant(gr_kg, gr_spec, gr_templates, seed):
    old, new = build_probes(gr_kg, gr_spec, gr_templates, {ProbeType.CONFLICT}, seed=seed)
    item_old = build_mcq(old, "1915", gr_kg, Phase.PRE, seed=seed, required=("1920",))
    item_new = build_mcq(new, "1920", gr_kg, Phase.POST, seed=seed, required=("1915",))
    for item in (item_old, item_new):
        assert "1915" in item.options and "1920" in item.options
    assert item_old.correct_option == "1915"
    assert item_new.correct_option == "1920"
