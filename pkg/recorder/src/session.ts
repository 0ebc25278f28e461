/**
 * Recording session: data-processing code calls trackLoad/trackRun around
 * its own load/fit/save calls, and flush() emits one commit draft in the
 * lineage engine's wire format. The recorder is write-only and offline;
 * it never resolves or validates anything, the engine's commit does.
 */

import { appendFileSync, writeFileSync } from "node:fs";
import { randomBytes } from "node:crypto";

import { canonicalLine, type Json } from "./canonical.js";

export class SessionClosed extends Error {
  constructor() {
    super("recording session already flushed");
  }
}

export class MultipleRuns extends Error {
  constructor() {
    super("a session records exactly one run");
  }
}

export class NothingStaged extends Error {
  constructor() {
    super("nothing to flush: no run was recorded");
  }
}

export interface LoadRef {
  datasetId: string;
  revisionId: string;
  /** needed only when the session has to declare slots itself */
  typeRevisionId?: string;
}

export interface TransformRef {
  revisionId: string;
  /** declared slot ids matching trackLoad call order; omit to let the
   *  session declare fresh slots named in_0..n */
  inputSlotIds?: string[];
  /** declared slot ids matching the outputs; omit for fresh out_0..n */
  outputSlotIds?: string[];
}

export interface OutputSpec {
  datasetId: string;
  typeRevisionId: string;
  externalBlobId: string;
}

export interface InputBinding {
  datasetId: string;
  revisionId: string;
  position: number;
}

export type OutputTarget =
  | { kind: "draft"; path: string }
  | { kind: "queue"; path: string };

export interface SessionOptions {
  /** id of an identity entity already known to the engine */
  identityId?: string;
  /** or an inline actor: a new identity entity is staged with the draft */
  identity?: { providerId: string; actorId: string };
  target?: OutputTarget;
  comment?: string;
}

type Entity = { [key: string]: Json };

/** Session-local ids use a prefix no store-assigned id can collide with
 *  (the engine assigns bare 26-char base32 values). */
function localId(hint: string): string {
  return `tmp-${hint}-${randomBytes(6).toString("hex")}`;
}

export class RecordingSession {
  private readonly identityId: string;
  private readonly staged: Entity[] = [];
  private readonly loads: Array<InputBinding & { typeRevisionId?: string }> = [];
  private readonly target?: OutputTarget;
  private readonly comment?: string;
  private ran = false;
  private closed = false;

  constructor(options: SessionOptions) {
    this.target = options.target;
    this.comment = options.comment;
    if (options.identityId) {
      this.identityId = options.identityId;
    } else if (options.identity) {
      this.identityId = localId("identity");
      this.staged.push({
        kind: "identity",
        id: this.identityId,
        external_provider_id: options.identity.providerId,
        external_actor_id: options.identity.actorId,
      });
    } else {
      throw new Error("session needs identityId or an inline identity");
    }
  }

  private assertOpen(): void {
    if (this.closed) throw new SessionClosed();
  }

  /** Record intent to bind a dataset revision to the next run's inputs,
   *  in call order. */
  trackLoad(load: LoadRef): InputBinding {
    this.assertOpen();
    const binding: InputBinding & { typeRevisionId?: string } = {
      datasetId: load.datasetId,
      revisionId: load.revisionId,
      position: this.loads.length,
    };
    if (load.typeRevisionId) binding.typeRevisionId = load.typeRevisionId;
    this.loads.push(binding);
    return binding;
  }

  /** Stage one execution: an input slot binding per prior trackLoad and a
   *  fresh revision plus output binding per output. */
  trackRun(transform: TransformRef, outputs: OutputSpec[]): void {
    this.assertOpen();
    if (this.ran) throw new MultipleRuns();
    this.ran = true;

    const execId = localId("exec");
    this.staged.push({
      kind: "transform_execution",
      id: execId,
      transform_revision_id: transform.revisionId,
    });

    this.loads.forEach((load, i) => {
      const slotId = transform.inputSlotIds?.[i] ?? this.declareSlot(transform, "input", i, load);
      this.staged.push({
        kind: "transform_execution_slot",
        id: localId(`in${i}`),
        transform_execution_id: execId,
        transform_slot_id: slotId,
        dataset_id: load.datasetId,
        dataset_revision_id: load.revisionId,
      });
    });

    outputs.forEach((output, i) => {
      const slotId =
        transform.outputSlotIds?.[i] ?? this.declareSlot(transform, "output", i, output);
      const revisionId = localId(`rev${i}`);
      const bindingId = localId(`out${i}`);
      this.staged.push({
        kind: "dataset_revision",
        id: revisionId,
        dataset_id: output.datasetId,
        type_revision_id: output.typeRevisionId,
        transform_execution_slot_id: bindingId,
        external_blob_id: output.externalBlobId,
      });
      this.staged.push({
        kind: "transform_execution_slot",
        id: bindingId,
        transform_execution_id: execId,
        transform_slot_id: slotId,
        dataset_id: output.datasetId,
        dataset_revision_id: revisionId,
      });
    });
  }

  private declareSlot(
    transform: TransformRef,
    direction: "input" | "output",
    position: number,
    source: { typeRevisionId?: string },
  ): string {
    if (!source.typeRevisionId) {
      throw new Error(
        `declaring a ${direction} slot needs a typeRevisionId on the ${direction === "input" ? "load" : "output"}`,
      );
    }
    const slotId = localId(`slot-${direction}${position}`);
    this.staged.push({
      kind: "transform_slot",
      id: slotId,
      transform_revision_id: transform.revisionId,
      type_revision_id: source.typeRevisionId,
      name: direction === "input" ? `in_${position}` : `out_${position}`,
      direction,
    });
    return slotId;
  }

  /** Serialize the staged transaction as a commit draft, write it to the
   *  configured target, and close the session. */
  flush(): Buffer {
    this.assertOpen();
    if (!this.ran) throw new NothingStaged();
    this.closed = true;

    const draft: Entity = {
      identity_id: this.identityId,
      additions: this.staged,
      modifications: [],
      removals: [],
    };
    if (this.comment !== undefined) draft.comment = this.comment;
    const bytes = canonicalLine(draft);

    if (this.target?.kind === "draft") {
      writeFileSync(this.target.path, bytes);
    } else if (this.target?.kind === "queue") {
      appendFileSync(this.target.path, bytes);
    }
    return bytes;
  }
}
