
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    """16+16 synthetic 64x64 images, loaded once for the training-side tests."""
    from thermal2day.data import load_dataset
    from thermal2day.synthetic import generate_dataset

    root = tmp_path_factory.mktemp("desk_data")
    dir_a, dir_b = generate_dataset(root, n_a=16, n_b=16, size=64, seed=20240701)
    return load_dataset(dir_a, dir_b), dir_a, dir_b


@pytest.fixture(scope="session")
def desk_prepared(desk_dataset, tmp_path_factory):
    """PreparedData for the desk config (identity preprocess at 64x64)."""
    from thermal2day.config import desk_config
    from thermal2day.training import prepare_training_data

    ds, dir_a, dir_b = desk_dataset
    cfg = desk_config(str(dir_a), str(dir_b))
    cache = tmp_path_factory.mktemp("edge_cache")
    return prepare_training_data(ds, cfg, cache_dir=cache), str(dir_a), str(dir_b)
