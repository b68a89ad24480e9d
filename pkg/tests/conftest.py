from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kgbench.kg import parse_kg

FIXTURES = Path(__file__).parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture()
def chain_kg():
    """Minimal 3-node chain: root R, intermediate I, leaf L."""
    return parse_kg(
        {
            "domain": "demo",
            "nodes": [
                {"id": "R", "label": "root concept", "level": "root"},
                {"id": "I", "label": "middle concept", "level": "intermediate"},
                {"id": "L", "label": "leaf concept", "level": "leaf"},
            ],
            "edges": [
                {"subject": "R", "relation": "encompasses", "object": "I"},
                {"subject": "I", "relation": "includes", "object": "L"},
            ],
        }
    )


@pytest.fixture()
def gr_kg():
    """Physics graph whose publication-year siblings are exactly
    {1920, 1912, 1918}, so a four-choice item on 1915 is fully determined."""
    return parse_kg(
        {
            "domain": "physics",
            "nodes": [
                {"id": "theories", "label": "fundamental physics theories", "level": "root"},
                {"id": "spacetime", "label": "spacetime framework", "level": "intermediate"},
                {"id": "gr", "label": "Theory of General Relativity", "level": "leaf"},
                {"id": "bohr_model", "label": "Bohr model of the atom", "level": "leaf"},
                {"id": "stark_effect", "label": "Stark effect analysis", "level": "leaf"},
                {"id": "noether_theorem", "label": "Noether symmetry theorem", "level": "leaf"},
            ],
            "edges": [
                {"subject": "theories", "relation": "encompasses", "object": "spacetime"},
                {"subject": "spacetime", "relation": "includes", "object": "gr"},
                {"subject": "spacetime", "relation": "includes", "object": "bohr_model"},
                {"subject": "spacetime", "relation": "includes", "object": "stark_effect"},
                {"subject": "spacetime", "relation": "includes", "object": "noether_theorem"},
                {"subject": "gr", "relation": "published_in", "object": "1915"},
                {"subject": "bohr_model", "relation": "published_in", "object": "1920"},
                {"subject": "stark_effect", "relation": "published_in", "object": "1912"},
                {"subject": "noether_theorem", "relation": "published_in", "object": "1918"},
            ],
        }
    )


@pytest.fixture()
def physics_kg(fixtures_dir):
    from kgbench.kg import load_kg

    return load_kg(fixtures_dir / "kg_physics.json")


@pytest.fixture()
def mock_config_doc(fixtures_dir):
    return json.loads((fixtures_dir / "mock_config.json").read_text())
