import pytest

from feature_exporter import make_demo


@pytest.fixture(scope="session")
def demo_paths(tmp_path_factory):
    """One shared dataset + checkpoint pair for the whole run."""
    root = tmp_path_factory.mktemp("demo")
    data = str(root / "demo_data.npz")
    model = str(root / "demo_model.npz")
    make_demo(data, model, seed=3)
    return data, model
