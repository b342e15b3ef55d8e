from dataclasses import dataclass

import numpy as np

from models.vehicle import WorldState


@dataclass
class SharedSequences:
    """Full optimal speed sequences of the previous iteration, v*(k|t-1) and v_o*(k|t-1) for k = 0..N."""
    v_star: np.ndarray
    v_o_star: np.ndarray

    def __post_init__(self):
        self.v_star = np.asarray(self.v_star, dtype=float).ravel()
        self.v_o_star = np.asarray(self.v_o_star, dtype=float).ravel()

    @classmethod
    def bootstrap(cls, state: WorldState, N: int) -> "SharedSequences":
        # first iteration: hold both measured speeds over the horizon
        return cls(v_star=np.full(N + 1, state.v), v_o_star=np.full(N + 1, state.v_o))

    def _shifted(self, seq: np.ndarray, N: int, name: str) -> np.ndarray:
        if len(seq) < N + 1:
            raise ValueError(f"missing shared sequence {name}: have {len(seq)} entries, need {N + 1}")
        return seq[1:N + 1]

    def ev_speeds(self, N: int) -> np.ndarray:
        """v*(k+1|t-1) for k = 0..N-1."""
        return self._shifted(self.v_star, N, "v_star")

    def ov_speeds(self, N: int) -> np.ndarray:
        """v_o*(k+1|t-1) for k = 0..N-1."""
        return self._shifted(self.v_o_star, N, "v_o_star")
