"""Phase 1: per-neuron sensitivity samples and fault detection.

For a clean input and its perturbed counterpart, the sensitivity of neuron j
is the absolute difference of its traced activation between the two forward
passes. A fault is recorded whenever the model's prediction on the perturbed
input differs from its prediction on the clean input; ground-truth labels
play no role in the fault definition.
"""

from dataclasses import dataclass, field

import numpy as np


class SensitivityStore:
    """Append-only per-neuron sample streams, one row per processed input."""

    def __init__(self, num_neurons):
        self.num_neurons = int(num_neurons)
        self._rows = []
        self.total_inputs_processed = 0
        self._matrix = None

    def append(self, diff):
        diff = np.asarray(diff, dtype=np.float64)
        if diff.shape != (self.num_neurons,):
            raise ValueError(
                f"diff vector length {diff.shape} != num_neurons {self.num_neurons}"
            )
        self._rows.append(diff)
        self.total_inputs_processed += 1
        self._matrix = None

    def matrix(self):
        """(inputs, neurons) sample matrix."""
        if self._matrix is None:
            self._matrix = np.vstack(self._rows) if self._rows else np.empty((0, self.num_neurons))
        return self._matrix

    def samples_for(self, neuron_id):
        return self.matrix()[:, neuron_id]

    def variances(self):
        """Per-neuron sample variance (n-1 denominator); 0 when under 2 samples."""
        m = self.matrix()
        if m.shape[0] < 2:
            return np.zeros(self.num_neurons)
        return np.var(m, axis=0, ddof=1)

    def __len__(self):
        return self.total_inputs_processed


@dataclass
class FaultRecord:
    input_id: int
    dataset_index: int
    perturb_spec: dict
    clean_prediction: int
    perturbed_prediction: int
    iteration: int
    perturbed_input: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.clean_prediction == self.perturbed_prediction:
            raise ValueError("fault requires differing clean and perturbed predictions")

    def to_dict(self, archive_index=None):
        d = {
            "input_id": int(self.input_id),
            "dataset_index": int(self.dataset_index),
            "perturb_spec": dict(self.perturb_spec),
            "clean_prediction": int(self.clean_prediction),
            "perturbed_prediction": int(self.perturbed_prediction),
            "iteration": int(self.iteration),
        }
        if archive_index is not None:
            d["archive_index"] = int(archive_index)
        return d


def sensitivity_of_pair(model, clean, perturbed):
    """Per-neuron |activation difference| plus both argmax predictions."""
    t_clean = model.forward(clean)
    t_pert = model.forward(perturbed)
    diff = np.abs(t_pert.values - t_clean.values)
    return diff, int(np.argmax(t_clean.output)), int(np.argmax(t_pert.output))


@dataclass
class BatchItem:
    input_id: int
    dataset_index: int
    clean: np.ndarray
    perturbed: np.ndarray
    spec: dict


def process_batch(model, items, store, faults, iteration=0):
    """Run Phase 1 over a batch: one diff vector per item, faults appended.

    Returns the newly appended FaultRecords. The fault list stays
    duplicate-free on (input_id, spec, iteration).
    """
    items = list(items)
    if not items:
        raise ValueError("empty batch")
    seen = {(f.input_id, tuple(sorted(f.perturb_spec.items())), f.iteration) for f in faults}
    new_records = []
    for item in items:
        diff, clean_pred, pert_pred = sensitivity_of_pair(model, item.clean, item.perturbed)
        store.append(diff)
        if clean_pred != pert_pred:
            key = (item.input_id, tuple(sorted(item.spec.items())), iteration)
            if key in seen:
                continue
            seen.add(key)
            rec = FaultRecord(
                input_id=item.input_id,
                dataset_index=item.dataset_index,
                perturb_spec=item.spec,
                clean_prediction=clean_pred,
                perturbed_prediction=pert_pred,
                iteration=iteration,
                perturbed_input=np.array(item.perturbed, dtype=np.float64),
            )
            faults.append(rec)
            new_records.append(rec)
    return new_records
