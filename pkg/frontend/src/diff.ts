/** Dialogue-state comparison for the inspector panel.
 *
 * States arrive once per turn; the inspector shows both the full
 * current state and what changed since the previous turn.
 */

import type { DialogueState } from "./api.js";

export interface SlotChange {
  kind: "add" | "change" | "remove";
  domain: string;
  slot: string;
  before: string | null;
  after: string | null;
}

export interface RequestChange {
  kind: "add" | "remove";
  domain: string;
  slot: string;
}

export interface StateDelta {
  slots: SlotChange[];
  requests: RequestChange[];
}

export function emptyState(): DialogueState {
  return { inform: {}, request: {} };
}

export function formatValue(tokens: string[]): string {
  return tokens.join(" ");
}

/** Flattens `inform` to a "domain.slot" -> value map. */
export function informEntries(state: DialogueState): Map<string, string> {
  const out = new Map<string, string>();
  for (const domain of Object.keys(state.inform).sort()) {
    const slots = state.inform[domain];
    for (const slot of Object.keys(slots).sort()) {
      out.set(`${domain}.${slot}`, formatValue(slots[slot]));
    }
  }
  return out;
}

/** Flattens `request` to a set of "domain.slot" keys. */
export function requestEntries(state: DialogueState): Set<string> {
  const out = new Set<string>();
  for (const domain of Object.keys(state.request)) {
    for (const slot of state.request[domain]) {
      out.add(`${domain}.${slot}`);
    }
  }
  return out;
}

function splitKey(key: string): { domain: string; slot: string } {
  const dot = key.indexOf(".");
  return { domain: key.slice(0, dot), slot: key.slice(dot + 1) };
}

/** What changed between two states. `prev` may be null for the first
 * turn, which reports every entry as an addition. Output is sorted by
 * domain then slot so renders are stable. */
export function diffStates(prev: DialogueState | null, next: DialogueState): StateDelta {
  const before = informEntries(prev ?? emptyState());
  const after = informEntries(next);
  const slots: SlotChange[] = [];
  const keys = [...new Set([...before.keys(), ...after.keys()])].sort();
  for (const key of keys) {
    const b = before.get(key);
    const a = after.get(key);
    if (b === a) continue;
    const { domain, slot } = splitKey(key);
    if (b === undefined) {
      slots.push({ kind: "add", domain, slot, before: null, after: a ?? null });
    } else if (a === undefined) {
      slots.push({ kind: "remove", domain, slot, before: b, after: null });
    } else {
      slots.push({ kind: "change", domain, slot, before: b, after: a });
    }
  }

  const reqBefore = requestEntries(prev ?? emptyState());
  const reqAfter = requestEntries(next);
  const requests: RequestChange[] = [];
  for (const key of [...new Set([...reqBefore, ...reqAfter])].sort()) {
    const had = reqBefore.has(key);
    const has = reqAfter.has(key);
    if (had === has) continue;
    const { domain, slot } = splitKey(key);
    requests.push({ kind: has ? "add" : "remove", domain, slot });
  }
  return { slots, requests };
}

export function describeSlotChange(c: SlotChange): string {
  const key = `${c.domain}.${c.slot}`;
  switch (c.kind) {
    case "add":
      return `${key} = ${c.after}`;
    case "change":
      return `${key}: ${c.before} -> ${c.after}`;
    case "remove":
      return `${key} cleared (was ${c.before})`;
  }
}

export function describeRequestChange(c: RequestChange): string {
  const key = `${c.domain}.${c.slot}`;
  return c.kind === "add" ? `asks for ${key}` : `${key} no longer requested`;
}

export function isEmptyDelta(delta: StateDelta): boolean {
  return delta.slots.length === 0 && delta.requests.length === 0;
}
