"""Markov-chain prediction over interned world states.

The transition matrix is rebuilt from a store snapshot on every call. Rows
with observations hold ``count(i->j) / count(i->*)``; rows without any
observation are uniform (``1/n``). Observed rows are kept in CSR form and
unobserved rows as a boolean mask, so ``x @ M`` costs O(records + n) and a
5,000-state store never materializes a dense 5,000 x 5,000 array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, EmptyStore, IndexOutOfRange, IoFailure, ValidationError
from .statechart import StateId
from .worldstore import StoreSnapshot, WorldStore

# renormalize only when drift exceeds this, so exact inputs stay exact
_DRIFT = 1e-12


@dataclass(frozen=True)
class TransitionMatrix:
    n: int
    observed: sp.csr_matrix
    uniform_rows: np.ndarray
    snapshot_id: int

    def row(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexOutOfRange(f"row {i} outside 0..{self.n - 1}")
        if self.uniform_rows[i]:
            return np.full(self.n, 1.0 / self.n)
        return self.observed.getrow(i).toarray().ravel()

    def dense(self) -> np.ndarray:
        m = self.observed.toarray()
        m[self.uniform_rows, :] = 1.0 / self.n
        return m


@dataclass(frozen=True)
class PredictionStep:
    step: int
    distribution: np.ndarray
    top: int

    @property
    def top_probability(self) -> float:
        return float(self.distribution[self.top])

    def ranked(self) -> list[tuple[int, float]]:
        """Non-zero entries by probability descending, then id ascending."""
        nz = np.flatnonzero(self.distribution)
        order = np.lexsort((nz, -self.distribution[nz]))
        return [(int(nz[k]), float(self.distribution[nz[k]])) for k in order]


def build_matrix(snapshot: Union[StoreSnapshot, WorldStore]) -> TransitionMatrix:
    if isinstance(snapshot, WorldStore):
        snapshot = snapshot.snapshot()
    n = snapshot.n
    if n == 0:
        raise EmptyStore("cannot build a transition matrix from an empty store")
    counts = snapshot.counts.astype(float)
    row_tot = np.bincount(snapshot.src, weights=counts, minlength=n)
    data = counts / row_tot[snapshot.src] if len(counts) else counts
    observed = sp.csr_matrix((data, (snapshot.src, snapshot.dst)), shape=(n, n))
    return TransitionMatrix(n, observed, row_tot == 0, snapshot.snapshot_id)


def one_hot(wid: int, n: int) -> np.ndarray:
    if not 0 <= wid < n:
        raise IndexOutOfRange(f"world state {wid} outside 0..{n - 1}")
    x = np.zeros(n)
    x[wid] = 1.0
    return x


def propagate(x: np.ndarray, m: TransitionMatrix) -> np.ndarray:
    """One step of ``x^T M``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (m.n,):
        raise DimensionMismatch(f"vector of shape {x.shape} against {m.n}x{m.n} matrix")
    y = m.observed.T @ x
    stray = x[m.uniform_rows].sum()
    if stray:
        y = y + stray / m.n
    s = y.sum()
    if abs(s - 1.0) > _DRIFT:
        y = y / s
    return y


def predict_distribution(x: np.ndarray, h: int, m: TransitionMatrix) -> list[PredictionStep]:
    if h < 1:
        raise ValidationError(f"horizon must be >= 1, got {h}")
    out = []
    for k in range(1, h + 1):
        x = propagate(x, m)
        # np.argmax returns the first maximum, i.e. the lowest index
        out.append(PredictionStep(k, x, int(np.argmax(x))))
    return out


def predict(wid: int, h: int, m: TransitionMatrix) -> list[PredictionStep]:
    return predict_distribution(one_hot(wid, m.n), h, m)


def top_state(ps: PredictionStep, store: WorldStore) -> StateId:
    return store.world_state(ps.top).state


def occupancy_vector(store: WorldStore, state: StateId) -> Optional[np.ndarray]:
    """Distribution over world states sharing ``state``, weighted by visits.

    Visits are incoming counts (plus one so never-entered states still
    show up). Returns None if no world state has that StateId.
    """
    snap = store.snapshot()
    idx = [i for i, ws in enumerate(snap.states) if ws.state == state]
    if not idx:
        return None
    incoming = np.bincount(snap.dst, weights=snap.counts, minlength=snap.n) + 1.0
    x = np.zeros(snap.n)
    x[idx] = incoming[idx]
    return x / x.sum()


def prediction_to_dict(steps: list[PredictionStep], store: Optional[WorldStore] = None) -> dict:
    out = []
    for ps in steps:
        entries = []
        for wid, p in ps.ranked():
            e = {"world_state_id": wid, "probability": p}
            if store is not None:
                e["state"] = str(store.world_state(wid).state)
            entries.append(e)
        out.append({"step": ps.step, "top": ps.top, "entries": entries})
    return {"steps": out}


def export_prediction(steps: list[PredictionStep], path, store: Optional[WorldStore] = None) -> None:
    try:
        Path(path).write_text(json.dumps(prediction_to_dict(steps, store), sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from exc
