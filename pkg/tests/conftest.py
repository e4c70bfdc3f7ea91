import numpy as np
import pytest

from sbcboost.data import Dataset


def gaussian_blobs(counts, means=None, scale=1.0, seed=0, n_features=2):
    """Synthetic class-blob dataset with one Gaussian cluster per class."""
    rng = np.random.default_rng(seed)
    k = len(counts)
    if means is None:
        # spread centers on a circle, far apart relative to scale
        angles = 2 * np.pi * np.arange(k) / k
        means = 10.0 * np.column_stack([np.cos(angles), np.sin(angles)])
        if n_features > 2:
            means = np.column_stack([means, np.zeros((k, n_features - 2))])
    means = np.asarray(means, dtype=np.float64)
    X = np.vstack([
        rng.normal(means[i], scale, size=(c, means.shape[1])) for i, c in enumerate(counts)
    ])
    y = np.concatenate([np.full(c, i, dtype=np.int64) for i, c in enumerate(counts)])
    perm = rng.permutation(y.size)
    return X[perm], y[perm]


def blob_dataset(counts, **kwargs) -> Dataset:
    X, y = gaussian_blobs(counts, **kwargs)
    names = [f"class{i}" for i in range(len(counts))]
    feats = [f"f{j}" for j in range(X.shape[1])]
    return Dataset(X, y, names, feats)


@pytest.fixture
def tiny_csv(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text(
        "f0,f1,label\n"
        "1.0,2.0,a\n"
        "1.5,2.5,a\n"
        "9.0,9.0,b\n"
        "1.2,2.2,a\n"
    )
    return str(path)
