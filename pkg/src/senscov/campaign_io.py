"""Campaign persistence.

A campaign saves as three files sharing one stem:

* ``<stem>.json``      deterministic result manifest (config, per-iteration
                       coverage, fault table, termination)
* ``<stem>.faults.bin`` THM1 tensor archive of the stored fault inputs
* ``<stem>.timing.json`` wall-clock diagnostics; the one non-reproducible
                       file, kept separate so the result files are
                       byte-identical across reruns with the same seed
"""

import json
import os

import numpy as np

from .model_io import load_tensors, save_tensors
from .sensitivity import FaultRecord


def stem_of(path):
    base, ext = os.path.splitext(path)
    return base if ext == ".json" else path


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def save_campaign(result, path):
    """Write the campaign triple next to ``path`` (the .json manifest)."""
    stem = stem_of(path)
    dump_json(result.to_dict(), path)
    save_tensors(stem + ".faults.bin",
                 [(f"fault{i}", f.perturbed_input) for i, f in enumerate(result.faults)])
    dump_json({"timings_seconds": result.timings,
               "total": sum(result.timings.values())}, stem + ".timing.json")
    return stem


def load_campaign(path):
    """Read a campaign manifest and its fault archive back.

    Returns (manifest dict, list of FaultRecord with stored inputs).
    """
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    archive = stem_of(path) + ".faults.bin"
    tensors = load_tensors(archive) if os.path.exists(archive) else []
    faults = []
    for row in manifest.get("faults", []):
        arr = None
        idx = row.get("archive_index")
        if idx is not None and idx < len(tensors):
            arr = np.asarray(tensors[idx][1], dtype=np.float64)
        faults.append(FaultRecord(
            input_id=row["input_id"],
            dataset_index=row["dataset_index"],
            perturb_spec=row["perturb_spec"],
            clean_prediction=row["clean_prediction"],
            perturbed_prediction=row["perturbed_prediction"],
            iteration=row["iteration"],
            perturbed_input=arr,
        ))
    return manifest, faults


def fault_csv_rows(manifest):
    rows = [("input_id", "dataset_index", "iteration", "family", "magnitude",
             "clean_prediction", "perturbed_prediction")]
    for f in manifest.get("faults", []):
        spec = f["perturb_spec"]
        rows.append((f["input_id"], f["dataset_index"], f["iteration"],
                     spec.get("family"), spec.get("magnitude"),
                     f["clean_prediction"], f["perturbed_prediction"]))
    return rows


def iteration_csv_rows(manifest):
    if manifest.get("kind") == "baseline":
        rows = [("attempt", "coverage", "accepted")]
        for e in manifest.get("events", []):
            rows.append((e["attempt"], repr(e["coverage"]), e["accepted"]))
        return rows
    rows = [("iteration", "coverage", "sampled", "converged", "threshold",
             "cumulative_faults")]
    per_iter_faults = {}
    for f in manifest.get("faults", []):
        per_iter_faults[f["iteration"]] = per_iter_faults.get(f["iteration"], 0) + 1
    cumulative = 0
    for it in manifest.get("iterations", []):
        cumulative += per_iter_faults.get(it["iteration"], 0)
        rows.append((it["iteration"], repr(it["coverage"]), it["sampled"],
                     it["converged"], repr(it["threshold"]), cumulative))
    return rows


def neuron_csv_rows(manifest):
    rows = [("iteration", "neuron_id", "samples", "variance", "mcse", "converged")]
    for it in manifest.get("iterations", []):
        for s in it.get("neurons", []):
            rows.append((it["iteration"], s["neuron_id"], s["sample_count"],
                         repr(s["variance"]),
                         "inf" if s["mcse"] is None else repr(s["mcse"]),
                         int(s["converged"])))
    return rows


def write_csv(rows, fh):
    for row in rows:
        fh.write(",".join(str(c) for c in row))
        fh.write("\n")
