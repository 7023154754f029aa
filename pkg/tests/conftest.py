import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

# Корень репозитория в путь импорта, как в run.py
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from cocoa.data import normalize_examples, partition  # noqa: E402
from cocoa.losses import get_loss  # noqa: E402
from cocoa.verify import InstanceGenerator  # noqa: E402
from models.dataset import Dataset  # noqa: E402
from models.problem import ProblemSpec  # noqa: E402
from utils.libsvm_loader import DatasetLoader  # noqa: E402


def random_dataset(n: int, d: int, density: float = 0.6, seed: int = 0, binary: bool = True) -> Dataset:
    rng = np.random.default_rng(seed)
    matrix = sp.random(d, n, density=density, format="csc", random_state=rng, data_rvs=rng.standard_normal)
    labels = rng.choice([-1.0, 1.0], size=n) if binary else rng.standard_normal(n)
    return normalize_examples(Dataset(X=matrix, labels=labels, name=f"test-{seed}"))


def make_problem(loss: str = "quadratic", n: int = 12, d: int = 4, K: int = 3, lam: float = 0.1, seed: int = 3):
    spec = ProblemSpec(dataset=random_dataset(n, d, seed=seed), loss=get_loss(loss), lam=lam)
    return spec, partition(n, K, strategy="contiguous")


@pytest.fixture
def quadratic_problem():
    return make_problem("quadratic")


@pytest.fixture
def hinge_problem():
    return make_problem("hinge")


@pytest.fixture
def small_instance():
    return InstanceGenerator(n=10, d=4, K=2, loss="quadratic", lam=0.1, seed=11).generate()


@pytest.fixture
def libsvm_file(tmp_path):
    """LIBSVM-файл на 30 примеров с метками ±1"""
    path = tmp_path / "train.libsvm"
    DatasetLoader().save(random_dataset(30, 6, density=0.5, seed=5), path)
    return path
