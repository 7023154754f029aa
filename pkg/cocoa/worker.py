import numpy as np
import scipy.sparse as sp
from cocoa.losses import Loss
from cocoa.solvers import LocalUpdate, check_compatibility, create_solver
from cocoa.subproblem import build_view
from models.dataset import Dataset, Partition
from models.errors import ProtocolError
from models.problem import ProblemSpec
from models.run_config import SolverConfig
from utils.logger_config import machine_logger


class Worker:
    """
    Машина k: хранит свой блок данных и α_[k], решает локальную подзадачу

    Одинаково используется потоковым и TCP-транспортом, поэтому итерации
    не зависят от способа доставки v.
    """

    def __init__(
        self,
        machine: int,
        X_local: sp.csc_matrix,
        labels: np.ndarray,
        loss: Loss,
        lam: float,
        n: int,
        K: int,
        nu: float,
        sigma_prime: float,
        solver_config: SolverConfig,
        alpha_local: np.ndarray = None,
    ):
        check_compatibility(solver_config.id, loss)
        self.machine = machine
        self.log = machine_logger(machine)
        self.X_local = X_local
        self.labels = np.asarray(labels, dtype=np.float64)
        self.loss = loss
        self.lam = lam
        self.n = n
        self.K = K
        self.nu = nu
        self.sigma_prime = sigma_prime
        self.solver = create_solver(solver_config)
        size = X_local.shape[1]
        self.alpha_local = np.zeros(size) if alpha_local is None else np.array(alpha_local, dtype=np.float64)

    @classmethod
    def from_problem(
        cls, spec: ProblemSpec, parts: Partition, k: int, alpha: np.ndarray, nu: float, sigma_prime: float, solver_config: SolverConfig
    ) -> "Worker":
        block = parts.block(k)
        return cls(
            machine=k,
            X_local=spec.dataset.X[:, block],
            labels=spec.dataset.labels[block],
            loss=spec.loss,
            lam=spec.lam,
            n=spec.n,
            K=parts.K,
            nu=nu,
            sigma_prime=sigma_prime,
            solver_config=solver_config,
            alpha_local=alpha[block],
        )

    @classmethod
    def from_shard(
        cls, k: int, shard: Dataset, loss: Loss, lam: float, solver_config: SolverConfig, alpha_local: np.ndarray = None
    ) -> "Worker":
        """Воркер TCP-режима; n, K, ν и σ′ приходят в рукопожатии"""
        loss.validate_labels(shard.labels)
        return cls(
            machine=k,
            X_local=shard.X,
            labels=shard.labels,
            loss=loss,
            lam=lam,
            n=shard.n,
            K=1,
            nu=1.0,
            sigma_prime=1.0,
            solver_config=solver_config,
            alpha_local=alpha_local,
        )

    def configure(self, n: int, K: int, nu: float, sigma_prime: float) -> None:
        self.n, self.K, self.nu, self.sigma_prime = int(n), int(K), float(nu), float(sigma_prime)

    def step(self, v: np.ndarray, round_index: int) -> LocalUpdate:
        """
        Один раунд машины: строит подзадачу по v, решает ее и обновляет α_[k] += νh

        Returns:
            LocalUpdate с Δv_k = X_[k]h/(λn)
        """
        view = build_view(
            X_local=self.X_local,
            labels=self.labels,
            alpha_local=self.alpha_local,
            v=v,
            sigma_prime=self.sigma_prime,
            lam=self.lam,
            n=self.n,
            K=self.K,
            loss=self.loss,
            machine=self.machine,
            round_index=round_index,
        )
        update = self.solver.solve(view)
        self.alpha_local = self.alpha_local + self.nu * update.h_local
        self.log.trace(f"Раунд {round_index}: прирост G_k {update.objective_gain:.3e}")
        return update

    def match_features(self, d: int) -> None:
        """Дополняет блок нулевыми признаками до глобального d (шард может не содержать старших индексов)"""
        rows, cols = self.X_local.shape
        if d < rows:
            raise ProtocolError(f"Машина {self.machine}: v длины {d} короче числа признаков шарда {rows}")
        if d > rows:
            self.X_local = sp.csc_matrix((self.X_local.data, self.X_local.indices, self.X_local.indptr), shape=(d, cols))
