export { canonicalLine, type Json } from "./canonical.js";
export {
  MultipleRuns,
  NothingStaged,
  RecordingSession,
  SessionClosed,
  type InputBinding,
  type LoadRef,
  type OutputSpec,
  type OutputTarget,
  type SessionOptions,
  type TransformRef,
} from "./session.js";
