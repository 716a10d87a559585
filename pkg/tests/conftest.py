import os
from pathlib import Path

import pytest

from popbias.ingest import write_canonical_csv
from synthdata import synthetic_table


def dataset_dir() -> Path:
    """Where real datasets live, if the user supplied them (see README)."""
    return Path(os.environ.get("POPBIAS_DATA", Path(__file__).resolve().parents[1] / "data"))


def ml1m_path() -> Path | None:
    root = dataset_dir()
    for candidate in (root / "ml-1m" / "ratings.dat", root / "ratings.dat"):
        if candidate.exists():
            return candidate
    return None


def epinions_path() -> Path | None:
    root = dataset_dir()
    for candidate in (root / "epinions.csv", root / "epinions" / "ratings.csv"):
        if candidate.exists():
            return candidate
    return None


@pytest.fixture(scope="session")
def desk_table():
    return synthetic_table()


@pytest.fixture(scope="session")
def desk_csv(desk_table, tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "desk.csv"
    write_canonical_csv(desk_table, path)
    return path
