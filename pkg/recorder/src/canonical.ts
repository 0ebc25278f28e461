/** Canonical JSON: keys sorted recursively, compact separators, LF-terminated. */

export type Json = string | number | boolean | null | Json[] | { [key: string]: Json };

function sortValue(value: Json): Json {
  if (Array.isArray(value)) {
    return value.map(sortValue);
  }
  if (value !== null && typeof value === "object") {
    const out: { [key: string]: Json } = {};
    for (const key of Object.keys(value).sort()) {
      out[key] = sortValue(value[key]);
    }
    return out;
  }
  return value;
}

export function canonicalLine(value: Json): Buffer {
  return Buffer.from(JSON.stringify(sortValue(value)) + "\n", "utf-8");
}
