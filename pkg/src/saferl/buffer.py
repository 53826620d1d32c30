"""Persistent buffer of recovery actions, organized by k-means clusters.

Unlike an on-policy rollout buffer, this store is never flushed between
policy updates: records accumulate for the whole run (optionally FIFO-capped)
and are re-clustered in feature space at every episode end. Queries answer
"best recovery action for a similar danger state": gather the records in the
cluster of the current feature, keep the policy action if an equivalent
action is present, otherwise return the highest-reward action of the cluster.
"""

import io
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from .clustering import KMeansModel, assign, fit_kmeans
from .cmdp import Action

# k-selection policy: either a float exponent p (k = max(1, round(N^p)))
# or BRUTE_FORCE for clustering-free exact-feature retrieval.
BRUTE_FORCE = "brute"

# feature tolerance for brute-force exact matching
_BRUTE_EPS = 1e-9


@dataclass(frozen=True)
class RecoveryRecord:
    feature: np.ndarray
    action: Action
    reward: float
    insert_order: int


class ExactActionMatch:
    """Discrete actions match iff their indices are equal."""

    def matches(self, a: Action, b: Action) -> bool:
        if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
            raise TypeError("exact matching expects discrete action indices")
        return int(a) == int(b)


class GridBucketMatch:
    """Continuous actions match iff they fall in the same per-dimension bucket."""

    def __init__(self, widths, lows):
        self.widths = np.atleast_1d(np.asarray(widths, dtype=float))
        self.lows = np.atleast_1d(np.asarray(lows, dtype=float))
        if np.any(self.widths <= 0.0):
            raise ValueError("bucket widths must be strictly positive")

    def bucket(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return np.floor((a - self.lows) / self.widths).astype(int)

    def matches(self, a: Action, b: Action) -> bool:
        if not isinstance(a, np.ndarray) or not isinstance(b, np.ndarray):
            raise TypeError("grid-bucket matching expects continuous action vectors")
        return bool(np.array_equal(self.bucket(a), self.bucket(b)))


def actions_match(matcher, a: Action, b: Action) -> bool:
    """Whether two actions count as "the same action" under `matcher`."""
    return matcher.matches(a, b)


def cluster_count(n_records: int, k_exponent: Union[float, str]) -> int:
    """Number of clusters for a buffer of size n under the k-selection policy."""
    if k_exponent == BRUTE_FORCE:
        raise ValueError("brute-force mode has no cluster count")
    return max(1, int(round(n_records ** float(k_exponent))))


class SafetyBuffer:
    """Append-only store of RecoveryRecords plus the current cluster model.

    The cluster model is only refreshed by `rebuild`; records inserted since
    the last rebuild are invisible to queries until then. In brute-force mode
    no model exists and queries scan live records for an exact feature match.
    """

    def __init__(
        self,
        matcher,
        k_exponent: Union[float, str] = 0.5,
        capacity: Optional[int] = None,
        max_iter: int = 50,
        tol: float = 1e-4,
    ):
        if k_exponent != BRUTE_FORCE:
            p = float(k_exponent)
            if not 0.0 < p <= 1.0:
                raise ValueError(f"k exponent must lie in (0, 1], got {p}")
            k_exponent = p
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be positive")
        self.matcher = matcher
        self.k_exponent = k_exponent
        self.capacity = capacity
        self.max_iter = max_iter
        self.tol = tol
        self.records: List[RecoveryRecord] = []
        self.model: Optional[KMeansModel] = None
        self._fit_records: List[RecoveryRecord] = []
        self._total_inserts = 0
        self._fit_key = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def total_inserts(self) -> int:
        return self._total_inserts

    def insert(self, feature, action: Action, reward: float) -> RecoveryRecord:
        """Append a recovery record; evicts the oldest record when capped."""
        record = RecoveryRecord(
            feature=np.asarray(feature, dtype=float),
            action=action,
            reward=float(reward),
            insert_order=self._total_inserts,
        )
        self._total_inserts += 1
        self.records.append(record)
        if self.capacity is not None and len(self.records) > self.capacity:
            self.records.pop(0)
        return record

    def rebuild(self, seed: int) -> None:
        """Refit the cluster model over the current records.

        k follows the k-selection policy: max(1, round(N^p)). With no records
        or in brute-force mode the model is cleared. The fit is memoized on
        (insert count, seed): rebuilding with unchanged records and the same
        seed is a no-op because the fit is deterministic.
        """
        if self.k_exponent == BRUTE_FORCE or not self.records:
            self.model = None
            self._fit_records = []
            self._fit_key = None
            return
        key = (self._total_inserts, seed)
        if key == self._fit_key:
            return
        features = np.stack([r.feature for r in self.records])
        k = cluster_count(len(self.records), self.k_exponent)
        self.model = fit_kmeans(
            features, k, max_iter=self.max_iter, tol=self.tol, seed=seed
        )
        self._fit_records = list(self.records)
        self._fit_key = key

    def candidate_set(self, feature) -> List[RecoveryRecord]:
        """Records considered "similar" to `feature`.

        Cluster mode returns the records assigned to the feature's cluster in
        the last fitted model; brute-force mode returns live records whose
        feature matches component-wise within 1e-9.
        """
        feature = np.asarray(feature, dtype=float)
        if self.k_exponent == BRUTE_FORCE:
            return [
                r
                for r in self.records
                if r.feature.shape == feature.shape
                and np.all(np.abs(r.feature - feature) <= _BRUTE_EPS)
            ]
        if self.model is None:
            return []
        cluster = assign(self.model, feature)
        members = self.model.assignments == cluster
        return [r for r, m in zip(self._fit_records, members) if m]

    def query_recovery_action(self, action: Action, feature) -> Action:
        """Best recovery action for a danger state with feature `feature`.

        Keeps `action` when the candidate set is empty or already contains an
        equivalent action; otherwise returns the candidate action with the
        highest stored reward (earliest insert on ties).
        """
        candidates = self.candidate_set(feature)
        if not candidates:
            return action
        if any(self.matcher.matches(action, r.action) for r in candidates):
            return action
        best = min(candidates, key=lambda r: (-r.reward, r.insert_order))
        return best.action

    # --- snapshot format: header "n action_dim feature_dim kind", then one
    # line per record: insert_order, reward, action..., feature... ---

    def dump_snapshot(self) -> str:
        if self.records:
            first = self.records[0]
            if isinstance(first.action, np.ndarray):
                kind, action_dim = "c", first.action.size
            else:
                kind, action_dim = "d", 1
            feature_dim = first.feature.size
        else:
            kind = "c" if isinstance(self.matcher, GridBucketMatch) else "d"
            action_dim, feature_dim = (0, 0)
        out = io.StringIO()
        out.write(f"{len(self.records)} {action_dim} {feature_dim} {kind}\n")
        for r in self.records:
            if isinstance(r.action, np.ndarray):
                action_part = [repr(float(v)) for v in r.action]
            else:
                action_part = [repr(float(r.action))]
            fields = (
                [str(r.insert_order), repr(r.reward)]
                + action_part
                + [repr(float(v)) for v in r.feature]
            )
            out.write(" ".join(fields) + "\n")
        return out.getvalue()

    def save_snapshot(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dump_snapshot())

    def load_snapshot(self, text: str) -> None:
        """Replace the record set with the snapshot contents (model cleared)."""
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty snapshot")
        n, action_dim, feature_dim, kind = lines[0].split()
        n, action_dim, feature_dim = int(n), int(action_dim), int(feature_dim)
        if len(lines) - 1 != n:
            raise ValueError(f"snapshot declares {n} records, found {len(lines) - 1}")
        records = []
        for ln in lines[1:]:
            parts = ln.split()
            order = int(parts[0])
            reward = float(parts[1])
            raw_action = [float(v) for v in parts[2 : 2 + action_dim]]
            feature = np.array([float(v) for v in parts[2 + action_dim :]], dtype=float)
            if feature.size != feature_dim:
                raise ValueError("record feature width does not match header")
            action: Action
            if kind == "d":
                action = int(raw_action[0])
            else:
                action = np.array(raw_action, dtype=float)
            records.append(RecoveryRecord(feature, action, reward, order))
        self.records = records
        self.model = None
        self._fit_records = []
        self._fit_key = None
        self._total_inserts = max((r.insert_order for r in records), default=-1) + 1
