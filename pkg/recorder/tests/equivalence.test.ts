/**
 * End-to-end contract with the lineage engine: a recorder-emitted draft
 * must commit cleanly through the CLI and produce a store graph
 * isomorphic (modulo generated ids) to the hand-written equivalent of
 * the same run.
 */

import { execFileSync } from "node:child_process";
import { copyFileSync, mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { beforeAll, describe, expect, it } from "vitest";

import { RecordingSession } from "../src/index.js";

const PYTHON = process.env.LINEAGE_PYTHON ?? "python3";

function cli(logPath: string, ...argv: string[]): string {
  return execFileSync(
    PYTHON,
    ["-m", "lineagekit", "--log", logPath, "--format", "json", ...argv],
    { encoding: "utf-8" },
  );
}

function commitDraft(dir: string, logPath: string, name: string, draft: unknown): any {
  const draftPath = join(dir, name);
  writeFileSync(draftPath, JSON.stringify(draft) + "\n");
  return JSON.parse(cli(logPath, "commit", draftPath));
}

const BOOTSTRAP = {
  identity_id: "ops",
  additions: [
    { kind: "identity", id: "ops", external_provider_id: "corp-sso", external_actor_id: "trainer" },
    { kind: "type", id: "blob", name: "blob", external_registry_id: "schemas" },
    { kind: "type_revision", id: "blob-v1", type_id: "blob", external_type_id: "blob.v1", version: "1.0" },
    { kind: "dataset", id: "training_data", name: "training_data", type_id: "blob" },
    { kind: "dataset", id: "hyperparams", name: "hyperparams", type_id: "blob" },
    { kind: "dataset", id: "models", name: "models", type_id: "blob" },
    { kind: "transform", id: "fit", name: "fit" },
    { kind: "transform_revision", id: "fit-v1", transform_id: "fit", external_commit_id: "sha-fit" },
    { kind: "transform_slot", id: "fit-v1-in0", transform_revision_id: "fit-v1", type_revision_id: "blob-v1", name: "in_0", direction: "input" },
    { kind: "transform_slot", id: "fit-v1-in1", transform_revision_id: "fit-v1", type_revision_id: "blob-v1", name: "in_1", direction: "input" },
    { kind: "transform_slot", id: "fit-v1-out0", transform_revision_id: "fit-v1", type_revision_id: "blob-v1", name: "out_0", direction: "output" },
    { kind: "transform", id: "score", name: "score" },
    { kind: "transform_revision", id: "score-v1", transform_id: "score", external_commit_id: "sha-score" },
    { kind: "dataset_revision", id: "data1", dataset_id: "training_data", type_revision_id: "blob-v1", external_source_id: "labeling", external_blob_id: "s3://data/1" },
    { kind: "dataset_revision", id: "params1", dataset_id: "hyperparams", type_revision_id: "blob-v1", external_source_id: "sweep", external_blob_id: "s3://params/1" },
  ],
};

const BASE_IDS = new Set(BOOTSTRAP.additions.map((e) => e.id));
const MODEL_BLOB = "s3://models/run-output";

/** Relabel store-generated / session-local ids by structural role so two
 *  stores can be compared for isomorphism. */
function canonicalStore(snapshot: any): string {
  const rename = new Map<string, string>();
  const entities: any[] = Object.values(snapshot.entities).flat() as any[];
  // pass 1: entities whose role is fixed by base references alone
  for (const entity of entities) {
    if (BASE_IDS.has(entity.id)) continue;
    switch (entity.kind) {
      case "transform_execution":
        rename.set(entity.id, `@exec:${entity.transform_revision_id}`);
        break;
      case "transform_slot":
        rename.set(
          entity.id,
          `@slot:${entity.transform_revision_id}:${entity.direction}:${entity.name}`,
        );
        break;
      case "dataset_revision":
        rename.set(entity.id, `@rev:${entity.dataset_id}:${entity.external_blob_id}`);
        break;
    }
  }
  // pass 2: bindings, labeled through their already-relabeled referents
  for (const entity of entities) {
    if (BASE_IDS.has(entity.id) || entity.kind !== "transform_execution_slot") continue;
    const slotLabel = rename.get(entity.transform_slot_id) ?? entity.transform_slot_id;
    const revLabel = rename.get(entity.dataset_revision_id) ?? entity.dataset_revision_id;
    rename.set(entity.id, `@binding:${slotLabel}:${revLabel}:${entity.dataset_id}`);
  }
  const relabel = (value: unknown): unknown => {
    if (typeof value === "string") return rename.get(value) ?? value;
    if (Array.isArray(value)) return value.map(relabel);
    if (value !== null && typeof value === "object") {
      const out: Record<string, unknown> = {};
      for (const key of Object.keys(value as object).sort()) {
        out[key] = relabel((value as Record<string, unknown>)[key]);
      }
      return out;
    }
    return value;
  };
  const relabeled = entities.map((e) => relabel(e));
  relabeled.sort((a, b) => JSON.stringify(a).localeCompare(JSON.stringify(b)));
  return JSON.stringify(relabeled);
}

describe("explicit/implicit equivalence through the engine", () => {
  let dir: string;
  let explicitLog: string;
  let implicitLog: string;

  beforeAll(() => {
    dir = mkdtempSync(join(tmpdir(), "recorder-e2e-"));
    explicitLog = join(dir, "explicit.log");
    implicitLog = join(dir, "implicit.log");
    execFileSync(PYTHON, ["-m", "lineagekit", "--log", explicitLog, "init"]);
    commitDraft(dir, explicitLog, "bootstrap.json", BOOTSTRAP);
    copyFileSync(explicitLog, implicitLog);
  });

  it("recorder draft commits cleanly and matches the hand-written run", () => {
    // hand-written: the manual recording of one training run
    const explicitDraft = {
      identity_id: "ops",
      additions: [
        { kind: "transform_execution", id: "fit-run", transform_revision_id: "fit-v1" },
        {
          kind: "dataset_revision", id: "model1", dataset_id: "models",
          type_revision_id: "blob-v1", transform_execution_slot_id: "fit-run-out",
          external_blob_id: MODEL_BLOB,
        },
        {
          kind: "transform_execution_slot", id: "fit-run-a", transform_execution_id: "fit-run",
          transform_slot_id: "fit-v1-in0", dataset_id: "training_data", dataset_revision_id: "data1",
        },
        {
          kind: "transform_execution_slot", id: "fit-run-b", transform_execution_id: "fit-run",
          transform_slot_id: "fit-v1-in1", dataset_id: "hyperparams", dataset_revision_id: "params1",
        },
        {
          kind: "transform_execution_slot", id: "fit-run-out", transform_execution_id: "fit-run",
          transform_slot_id: "fit-v1-out0", dataset_id: "models", dataset_revision_id: "model1",
        },
      ],
    };
    const explicitResult = commitDraft(dir, explicitLog, "explicit-run.json", explicitDraft);
    expect(explicitResult.warnings).toEqual([]);

    // recorder: the same run captured implicitly around load/fit/save
    const session = new RecordingSession({
      identityId: "ops",
      target: { kind: "draft", path: join(dir, "implicit-run.json") },
    });
    session.trackLoad({ datasetId: "training_data", revisionId: "data1" });
    session.trackLoad({ datasetId: "hyperparams", revisionId: "params1" });
    session.trackRun(
      {
        revisionId: "fit-v1",
        inputSlotIds: ["fit-v1-in0", "fit-v1-in1"],
        outputSlotIds: ["fit-v1-out0"],
      },
      [{ datasetId: "models", typeRevisionId: "blob-v1", externalBlobId: MODEL_BLOB }],
    );
    session.flush();
    const implicitResult = JSON.parse(cli(implicitLog, "commit", join(dir, "implicit-run.json")));
    expect(implicitResult.warnings).toEqual([]);

    const explicitStore = JSON.parse(cli(explicitLog, "snapshot", "--at", String(explicitResult.seq)));
    const implicitStore = JSON.parse(cli(implicitLog, "snapshot", "--at", String(implicitResult.seq)));
    expect(canonicalStore(implicitStore)).toEqual(canonicalStore(explicitStore));
  });

  it("fabricated slots commit cleanly against a slotless transform revision", () => {
    const path = join(dir, "fabricated.json");
    const session = new RecordingSession({ identityId: "ops", target: { kind: "draft", path } });
    session.trackLoad({ datasetId: "training_data", revisionId: "data1", typeRevisionId: "blob-v1" });
    session.trackRun({ revisionId: "score-v1" }, [
      { datasetId: "models", typeRevisionId: "blob-v1", externalBlobId: "s3://models/scored" },
    ]);
    session.flush();
    const result = JSON.parse(cli(implicitLog, "commit", path));
    expect(result.warnings).toEqual([]);

    const store = JSON.parse(cli(implicitLog, "snapshot", "--at", String(result.seq)));
    const declared = (store.entities.transform_slot as any[]).filter(
      (slot) => slot.transform_revision_id === "score-v1",
    );
    expect(declared.map((slot) => [slot.name, slot.direction]).sort()).toEqual([
      ["in_0", "input"],
      ["out_0", "output"],
    ]);
  });

  it("recorder lineage is queryable end to end", () => {
    const found = JSON.parse(cli(implicitLog, "ancestors", "models:latest", "--dataset", "training_data"));
    expect(found.ancestors.map((e: any) => e.id)).toEqual(["data1"]);
  });
});
