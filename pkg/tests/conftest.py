import pytest
from pathlib import Path

from intaudit import compile_kb, parse_kb, parse_overlay
from intaudit.metalayer import bind_overlay

ROOT = Path(__file__).resolve().parent.parent
DEMO_DIR = ROOT / "bundles" / "demo"
IA_DIR = ROOT / "bundles" / "ia"


@pytest.fixture(scope="session")
def demo_source() -> str:
    return (DEMO_DIR / "demo.kb").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def demo_kb(demo_source):
    return parse_kb(demo_source)


@pytest.fixture(scope="session")
def demo_graph(demo_kb):
    return compile_kb(demo_kb)


@pytest.fixture(scope="session")
def demo_overlay():
    return parse_overlay((DEMO_DIR / "demo.overlay").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def demo_bound(demo_overlay, demo_graph):
    return bind_overlay(demo_overlay, {"demo": demo_graph})
