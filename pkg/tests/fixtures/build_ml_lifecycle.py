#!/usr/bin/env python3
"""Build the iterative model-training scenario through the CLI.

Two labeled-data dumps are merged into a growing training corpus; each
round trains a candidate model and validates it against a holdout set;
the second round's model is released. Run as:

    build_ml_lifecycle.py LOG_PATH

Drafts are written next to the log and committed with `lineagekit`.
"""

import json
import subprocess
import sys
from pathlib import Path

IDENTITY = "pipeline-bot"


def transform_block(name, n_in, n_out):
    entities = [
        {"kind": "transform", "id": name, "name": name, "external_provider_id": "git",
         "external_repo_id": "pipelines"},
        {"kind": "transform_revision", "id": f"{name}-v1", "transform_id": name,
         "external_commit_id": f"sha-{name}", "comment": "initial"},
    ]
    for i in range(n_in):
        entities.append({"kind": "transform_slot", "id": f"{name}-v1-in{i}",
                         "transform_revision_id": f"{name}-v1", "type_revision_id": "artifacts-v1",
                         "name": f"in_{i}", "direction": "input"})
    for i in range(n_out):
        entities.append({"kind": "transform_slot", "id": f"{name}-v1-out{i}",
                         "transform_revision_id": f"{name}-v1", "type_revision_id": "artifacts-v1",
                         "name": f"out_{i}", "direction": "output"})
    return entities


def dataset(name):
    return {"kind": "dataset", "id": name, "name": name, "type_id": "artifacts",
            "external_provider_id": "blobstore", "external_repo_id": "ml"}


def imported(rev, ds, source):
    return {"kind": "dataset_revision", "id": rev, "dataset_id": ds,
            "type_revision_id": "artifacts-v1", "external_source_id": source,
            "external_blob_id": f"blob-{rev}"}


def run(name, exec_id, inputs, outputs):
    """Execution entities: inputs/outputs as (slot_index, dataset, revision)."""
    entities = [{"kind": "transform_execution", "id": exec_id,
                 "transform_revision_id": f"{name}-v1"}]
    for n, (i, ds, rev) in enumerate(inputs):
        entities.append({"kind": "transform_execution_slot", "id": f"{exec_id}-in{n}",
                         "transform_execution_id": exec_id,
                         "transform_slot_id": f"{name}-v1-in{i}",
                         "dataset_id": ds, "dataset_revision_id": rev})
    for n, (i, ds, rev) in enumerate(outputs):
        slot_id = f"{exec_id}-out{n}"
        entities.append({"kind": "dataset_revision", "id": rev, "dataset_id": ds,
                         "type_revision_id": "artifacts-v1",
                         "transform_execution_slot_id": slot_id,
                         "external_blob_id": f"blob-{rev}"})
        entities.append({"kind": "transform_execution_slot", "id": slot_id,
                         "transform_execution_id": exec_id,
                         "transform_slot_id": f"{name}-v1-out{i}",
                         "dataset_id": ds, "dataset_revision_id": rev})
    return entities


DRAFTS = [
    # environment: identity, type, datasets, transforms
    [
        {"kind": "identity", "id": IDENTITY, "external_provider_id": "corp-sso",
         "external_actor_id": "training-pipeline"},
        {"kind": "type", "id": "artifacts", "name": "artifacts",
         "external_registry_id": "schemas"},
        {"kind": "type_revision", "id": "artifacts-v1", "type_id": "artifacts",
         "external_type_id": "artifacts.v1", "backwards_compatible": True, "version": "1.0"},
        dataset("labeled_batches"),
        dataset("training_corpus"),
        dataset("holdout"),
        dataset("candidate_models"),
        dataset("validation_reports"),
        dataset("released_models"),
        *transform_block("merge_batches", 2, 1),
        *transform_block("train_model", 1, 1),
        *transform_block("validate_model", 2, 1),
        *transform_block("release_model", 1, 1),
    ],
    # imported raw material
    [
        imported("c0", "training_corpus", "seed-set"),
        imported("h1", "holdout", "labeling-vendor"),
        imported("b1", "labeled_batches", "labeling-vendor"),
        imported("b2", "labeled_batches", "labeling-vendor"),
    ],
    # round 1: merge, train, validate (candidate discarded)
    [
        *run("merge_batches", "merge-run-1",
             [(0, "training_corpus", "c0"), (1, "labeled_batches", "b1")],
             [(0, "training_corpus", "c1")]),
        *run("train_model", "train-run-1",
             [(0, "training_corpus", "c1")],
             [(0, "candidate_models", "m1")]),
        *run("validate_model", "validate-run-1",
             [(0, "candidate_models", "m1"), (1, "holdout", "h1")],
             [(0, "validation_reports", "r1")]),
    ],
    # round 2: merge, train, validate, release
    [
        *run("merge_batches", "merge-run-2",
             [(0, "training_corpus", "c1"), (1, "labeled_batches", "b2")],
             [(0, "training_corpus", "c2")]),
        *run("train_model", "train-run-2",
             [(0, "training_corpus", "c2")],
             [(0, "candidate_models", "m2")]),
        *run("validate_model", "validate-run-2",
             [(0, "candidate_models", "m2"), (1, "holdout", "h1")],
             [(0, "validation_reports", "r2")]),
        *run("release_model", "release-run-1",
             [(0, "candidate_models", "m2")],
             [(0, "released_models", "d1")]),
    ],
]


def main(log_path: str) -> None:
    log = Path(log_path)
    cli = [sys.executable, "-m", "lineagekit", "--log", str(log)]
    subprocess.run([*cli, "init"], check=True, capture_output=True)
    for index, additions in enumerate(DRAFTS, start=1):
        draft = {"identity_id": IDENTITY, "additions": additions,
                 "comment": f"ml lifecycle step {index}"}
        draft_path = log.with_name(f"ml-draft-{index}.json")
        draft_path.write_text(json.dumps(draft), encoding="utf-8")
        subprocess.run([*cli, "commit", str(draft_path)], check=True, capture_output=True)


if __name__ == "__main__":
    main(sys.argv[1])
