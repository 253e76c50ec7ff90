import pytest

from mtnet.config import load_config
from mtnet.data import DatasetBundle
from mtnet.data.synthetic import write_synthetic


@pytest.fixture
def toy_config():
    return load_config(preset="toy")


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("synthetic") / "checkins.csv"
    write_synthetic(str(path), n_users=20, trajectories_per_user=5, seed=0)
    return str(path)


@pytest.fixture(scope="session")
def toy_bundle(synthetic_csv):
    cfg = load_config(preset="toy")
    return DatasetBundle.from_config(cfg, source=synthetic_csv)


@pytest.fixture(scope="session")
def toy_bundle_path(toy_bundle, tmp_path_factory):
    path = tmp_path_factory.mktemp("bundle") / "toy.npz"
    toy_bundle.save(str(path))
    return str(path)
