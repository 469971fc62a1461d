"""Shared fixtures: one synthetic dataset and one trained pipeline per session."""
from __future__ import annotations

import pytest

from canopy import fixtures, run_pipeline


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixture-data") / "data"
    fixtures.generate_dataset(root)
    return root


@pytest.fixture(scope="session")
def pipeline_result(dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline-out")
    return run_pipeline(dataset_dir, out)
