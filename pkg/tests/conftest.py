import os

import pytest


@pytest.fixture(scope="session", autouse=True)
def _isolated_reference_cache(tmp_path_factory):
    """Keep reference caches inside the test session's tmp dir."""
    cache = tmp_path_factory.mktemp("refcache")
    old = os.environ.get("REFERENCE_CACHE_DIR")
    os.environ["REFERENCE_CACHE_DIR"] = str(cache)
    yield cache
    if old is None:
        os.environ.pop("REFERENCE_CACHE_DIR", None)
    else:
        os.environ["REFERENCE_CACHE_DIR"] = old
