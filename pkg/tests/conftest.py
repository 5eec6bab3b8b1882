"""Shared fixtures: mock endpoints and canned frame builders."""

from __future__ import annotations

import numpy as np
import pytest

from cola.gateway import ModelEndpoint
from cola.mockserver import MockModelServer


def rgb_frame_array(width: int, height: int, rgb: tuple[int, int, int]) -> np.ndarray:
    arr = np.empty((height, width, 3), dtype=np.uint8)
    arr[...] = rgb
    return arr


def make_endpoints(base_url: str, **overrides) -> tuple[ModelEndpoint, ...]:
    """The canonical four-endpoint setup used across integration tests."""
    vlm_caps = frozenset({"caption", "vqa"})
    kwargs = {"backoff_ms": 1, **overrides}
    return (
        ModelEndpoint(name="vlm-a", base_url=base_url, capabilities=vlm_caps, **kwargs),
        ModelEndpoint(name="vlm-b", base_url=base_url, capabilities=vlm_caps, **kwargs),
        ModelEndpoint(name="llm", base_url=base_url, capabilities=frozenset({"generate"}), **kwargs),
        ModelEndpoint(name="embedder", base_url=base_url, capabilities=frozenset({"embed"}), **kwargs),
    )


@pytest.fixture
def mock_server():
    """Factory for in-process mock servers, stopped on teardown."""
    servers = []

    def start(fixtures: dict | None = None) -> MockModelServer:
        server = MockModelServer(fixtures).start()
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.stop()


def write_run_config(
    path,
    task: str,
    manifest_path,
    base_url: str,
    out_dir,
    cache_dir,
    mode: str = "cola",
    parallel: int = 2,
    max_retries: int = 3,
) -> None:
    """Write a minimal TOML run config pointing at a mock server."""
    text = f"""
[run]
task = "{task}"
mode = "{mode}"
dataset_manifest = "{manifest_path}"
output_dir = "{out_dir}"
cache_dir = "{cache_dir}"
parallel_videos = {parallel}

[[endpoints]]
name = "vlm-a"
base_url = "{base_url}"
capabilities = ["caption", "vqa"]
backoff_ms = 1
max_retries = {max_retries}

[[endpoints]]
name = "vlm-b"
base_url = "{base_url}"
capabilities = ["caption", "vqa"]
backoff_ms = 1
max_retries = {max_retries}

[[endpoints]]
name = "llm"
base_url = "{base_url}"
capabilities = ["generate"]
backoff_ms = 1
max_retries = {max_retries}

[[endpoints]]
name = "embedder"
base_url = "{base_url}"
capabilities = ["embed"]
backoff_ms = 1
max_retries = {max_retries}
"""
    path.write_text(text, encoding="utf-8")
