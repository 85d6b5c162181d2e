/** applyOp must be an exact mirror of the server's refinement
 *  semantics; these cases track the service test suite. */

import { describe, expect, it } from "vitest";
import { applyOp, opFromLogEntry, OpError } from "../src/store";
import type { Concept, LogEntry, RefineOp } from "../src/types";

function base(): Concept[] {
  return [
    { id: 0, role: "Action", name: "check", mentions: ["check", "verify"] },
    { id: 1, role: "Action", name: "cancel", mentions: ["cancel"] },
    { id: 2, role: "Argument", name: "doc", mentions: ["doc", "passport"] },
    { id: 3, role: "Argument", name: "date", mentions: ["today"] },
  ];
}

function find(concepts: Concept[], id: number): Concept {
  const c = concepts.find((x) => x.id === id);
  if (!c) throw new Error(`no concept ${id} in result`);
  return c;
}

describe("rename", () => {
  it("changes the name and nothing else", () => {
    const out = applyOp(base(), {
      op: "rename",
      params: { concept_id: 2, name: "papers" },
    });
    expect(find(out, 2).name).toBe("papers");
    expect(find(out, 2).mentions).toEqual(["doc", "passport"]);
    expect(out).toHaveLength(4);
  });

  it("rejects blank names and unknown ids", () => {
    expect(() =>
      applyOp(base(), { op: "rename", params: { concept_id: 2, name: "  " } }),
    ).toThrow(OpError);
    expect(() =>
      applyOp(base(), { op: "rename", params: { concept_id: 77, name: "x" } }),
    ).toThrow(OpError);
  });
});

describe("merge", () => {
  it("keeps the smallest id and its name, mentions become a sorted union", () => {
    const out = applyOp(base(), { op: "merge", params: { concept_ids: [3, 2] } });
    const kept = find(out, 2);
    expect(kept.name).toBe("doc");
    expect(kept.mentions).toEqual(["doc", "passport", "today"]);
    expect(out.some((c) => c.id === 3)).toBe(false);
  });

  it("rejects cross-role, duplicate and short id lists", () => {
    expect(() =>
      applyOp(base(), { op: "merge", params: { concept_ids: [0, 2] } }),
    ).toThrow("different roles");
    expect(() =>
      applyOp(base(), { op: "merge", params: { concept_ids: [2, 2] } }),
    ).toThrow(OpError);
    expect(() =>
      applyOp(base(), { op: "merge", params: { concept_ids: [2] } }),
    ).toThrow(OpError);
  });
});

describe("split", () => {
  it("first group keeps id and name, later groups get fresh ids named by smallest member", () => {
    const out = applyOp(base(), {
      op: "split",
      params: { concept_id: 2, groups: [["passport"], ["doc"]] },
    });
    expect(find(out, 2).mentions).toEqual(["passport"]);
    expect(find(out, 2).name).toBe("doc");
    expect(find(out, 4)).toEqual({
      id: 4,
      role: "Argument",
      name: "doc",
      mentions: ["doc"],
    });
  });

  it("groups must exactly partition the mentions", () => {
    const bad: RefineOp[] = [
      { op: "split", params: { concept_id: 2, groups: [["doc"]] } },
      { op: "split", params: { concept_id: 2, groups: [["doc", "passport"], ["stray"]] } },
      { op: "split", params: { concept_id: 2, groups: [["doc"], []] } },
      { op: "split", params: { concept_id: 2, groups: [["doc", "doc"], ["passport"]] } },
    ];
    for (const op of bad) expect(() => applyOp(base(), op)).toThrow(OpError);
  });
});

describe("move", () => {
  it("transfers the mention; the source may end up empty", () => {
    const out = applyOp(base(), {
      op: "move",
      params: { mention: "today", from_id: 3, to_id: 2 },
    });
    expect(find(out, 3).mentions).toEqual([]);
    expect(find(out, 2).mentions).toEqual(["doc", "passport", "today"]);
  });

  it("rejects cross-role, same-concept and absent mentions", () => {
    expect(() =>
      applyOp(base(), { op: "move", params: { mention: "doc", from_id: 2, to_id: 0 } }),
    ).toThrow("across roles");
    expect(() =>
      applyOp(base(), { op: "move", params: { mention: "doc", from_id: 2, to_id: 2 } }),
    ).toThrow(OpError);
    expect(() =>
      applyOp(base(), { op: "move", params: { mention: "nope", from_id: 2, to_id: 3 } }),
    ).toThrow(OpError);
  });
});

describe("create", () => {
  it("assigns max_id+1 and sorts the mentions", () => {
    const out = applyOp(base(), {
      op: "create",
      params: { role: "Question", name: "how", mentions: ["zz", "aa"] },
    });
    expect(find(out, 4)).toEqual({
      id: 4,
      role: "Question",
      name: "how",
      mentions: ["aa", "zz"],
    });
  });

  it("allows an empty concept", () => {
    const out = applyOp(base(), {
      op: "create",
      params: { role: "Problem", name: "spare", mentions: [] },
    });
    expect(find(out, 4).mentions).toEqual([]);
  });

  it("rejects mentions already present for the role, but not across roles", () => {
    expect(() =>
      applyOp(base(), {
        op: "create",
        params: { role: "Argument", name: "x", mentions: ["doc"] },
      }),
    ).toThrow(OpError);
    const out = applyOp(base(), {
      op: "create",
      params: { role: "Question", name: "x", mentions: ["doc"] },
    });
    expect(find(out, 4).mentions).toEqual(["doc"]);
  });

  it("rejects blank names and duplicate mention lists", () => {
    expect(() =>
      applyOp(base(), { op: "create", params: { role: "Action", name: " ", mentions: [] } }),
    ).toThrow(OpError);
    expect(() =>
      applyOp(base(), {
        op: "create",
        params: { role: "Action", name: "x", mentions: ["a", "a"] },
      }),
    ).toThrow(OpError);
  });
});

describe("delete_empty", () => {
  it("removes only empty concepts", () => {
    const emptied = applyOp(base(), {
      op: "move",
      params: { mention: "today", from_id: 3, to_id: 2 },
    });
    const out = applyOp(emptied, { op: "delete_empty", params: { concept_id: 3 } });
    expect(out.some((c) => c.id === 3)).toBe(false);
    expect(() =>
      applyOp(base(), { op: "delete_empty", params: { concept_id: 3 } }),
    ).toThrow("still has");
  });
});

describe("applyOp general behaviour", () => {
  it("never mutates its input and returns id-sorted output", () => {
    const input = base();
    const snapshot = JSON.parse(JSON.stringify(input));
    const out = applyOp(input, { op: "merge", params: { concept_ids: [3, 2] } });
    expect(input).toEqual(snapshot);
    expect(out.map((c) => c.id)).toEqual([...out.map((c) => c.id)].sort((a, b) => a - b));
  });
});

describe("opFromLogEntry", () => {
  it("round-trips accepted entries and refuses unknown kinds", () => {
    const entry: LogEntry = {
      seq: 1,
      op: "rename",
      params: { concept_id: 2, name: "papers" },
      actor: "someone",
      timestamp: 0,
    };
    const op = opFromLogEntry(entry);
    expect(op).not.toBeNull();
    const out = applyOp(base(), op!);
    expect(find(out, 2).name).toBe("papers");
    expect(opFromLogEntry({ ...entry, op: "explode" })).toBeNull();
  });
});
