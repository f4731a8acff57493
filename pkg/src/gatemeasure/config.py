"""Scenario configuration files.

Configs are JSON.  Complex numbers are ``[re, im]`` pairs and matrices are
row-major nested lists of pairs.  Index groups in ``subspaces`` are
1-based, matching the gate labels written to reports.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

MAX_TOTAL_DIM = 128

Pair = tuple[float, float]


class ConfigError(ValueError):
    """Raised for unreadable or invalid scenario files."""


class EntangledSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dim2: int = Field(ge=1)
    state: list[Pair]


class PerturbSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    magnitude: float = Field(ge=0)
    period: int = Field(ge=1)


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["trivial", "ideal", "product", "random", "custom"]
    N: int = Field(ge=1)
    m: Optional[int] = Field(default=None, ge=1)
    hbar: float = Field(default=1.0, gt=0)
    seed: int = 0
    state: list[Pair]
    initial_energies: Optional[list[float]] = None
    steps: int = Field(default=0, ge=0)
    entangled: Optional[EntangledSpec] = None
    subspaces: Optional[list[list[int]]] = None
    perturb: Optional[PerturbSpec] = None
    custom_hamiltonian: Optional[list[list[Pair]]] = None
    # diagonal entries or a full matrix of [re, im] pairs
    h_system: Optional[Union[list[float], list[list[Pair]]]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.m is None:
            self.m = self.N
        if self.N * self.m * (self.entangled.dim2 if self.entangled else 1) > MAX_TOTAL_DIM:
            raise ValueError(f"total dimension exceeds {MAX_TOTAL_DIM}")
        expected = self.N * self.entangled.dim2 if self.entangled else self.N
        state = self.entangled.state if self.entangled else self.state
        where = "entangled.state" if self.entangled else "state"
        if len(state) != expected:
            raise ValueError(f"{where} has {len(state)} amplitudes, expected {expected}")
        if self.entangled and len(self.state) not in (0, self.N):
            raise ValueError(f"state has {len(self.state)} amplitudes, expected {self.N} or none")
        if (self.mode == "custom") != (self.custom_hamiltonian is not None):
            raise ValueError("custom_hamiltonian must be given exactly when mode is 'custom'")
        if self.custom_hamiltonian is not None:
            d = self.N * self.m
            if len(self.custom_hamiltonian) != d or any(len(r) != d for r in self.custom_hamiltonian):
                raise ValueError(f"custom_hamiltonian must be {d}x{d}")
        if self.initial_energies is not None and len(self.initial_energies) != self.n_gates:
            raise ValueError(f"initial_energies has {len(self.initial_energies)} entries, "
                             f"expected one per gate ({self.n_gates})")
        if self.subspaces is not None:
            flat = sorted(i for g in self.subspaces for i in g)
            if flat != list(range(1, self.N + 1)) or any(not g for g in self.subspaces):
                raise ValueError(f"subspaces must partition 1..{self.N} into non-empty groups")
            if self.entangled:
                raise ValueError("subspaces and entangled cannot be combined")
        if self.h_system is not None and self.h_system and isinstance(self.h_system[0], list):
            if len(self.h_system) != self.N or any(len(r) != self.N for r in self.h_system):
                raise ValueError(f"h_system matrix must be {self.N}x{self.N}")
        elif self.h_system is not None and len(self.h_system) != self.N:
            raise ValueError(f"h_system needs {self.N} diagonal entries")
        return self

    @property
    def n_gates(self) -> int:
        return len(self.subspaces) if self.subspaces is not None else self.N

    # -- numpy views --------------------------------------------------------

    def state_vector(self) -> np.ndarray:
        src = self.entangled.state if self.entangled else self.state
        return pairs_to_array(src)

    def energies(self) -> list[float]:
        return list(self.initial_energies) if self.initial_energies is not None else [0.0] * self.n_gates

    def h_system_diagonal(self):
        """Diagonal of H_S when given as a list of reals, else None."""
        if self.h_system is None or (self.h_system and isinstance(self.h_system[0], list)):
            return None
        return np.asarray(self.h_system, dtype=float)

    def h_system_matrix(self):
        if self.h_system is None:
            return None
        diag = self.h_system_diagonal()
        if diag is not None:
            return np.diag(diag).astype(np.complex128)
        return pairs_to_array(self.h_system)

    def custom_matrix(self):
        return None if self.custom_hamiltonian is None else pairs_to_array(self.custom_hamiltonian)

    def zero_based_groups(self):
        return None if self.subspaces is None else [[i - 1 for i in g] for g in self.subspaces]


def pairs_to_array(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def array_to_pairs(a) -> list:
    a = np.asarray(a, dtype=np.complex128)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _format_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        msg = e["msg"].removeprefix("Value error, ")
        lines.append(f"field '{loc}': {msg}" if loc else msg)
    return "; ".join(lines)


def parse_config(data: dict, seed: int | None = None) -> ScenarioConfig:
    """Validate a config dict; a run report is accepted and its ``config`` echo used."""
    if isinstance(data, dict) and "config" in data and "mode" not in data:
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if seed is not None:
        data = {**data, "seed": seed}
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_error(err)) from None


def load_config(path, seed: int | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(err.strerror) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"line {err.lineno} column {err.colno}: {err.msg}") from None
    return parse_config(data, seed)
