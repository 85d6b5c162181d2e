/** End-to-end optimistic board behaviour against a live service. The
 *  load-bearing invariant: after any acknowledged op the local view is
 *  identical to a fresh GET /concepts. */

import { afterAll, beforeAll, expect, it } from "vitest";
import { ApiClient } from "../src/api";
import { Board } from "../src/store";
import type { Concept } from "../src/types";
import { startService, type LiveService } from "./fixture";

let service: LiveService;
let api: ApiClient;

beforeAll(async () => {
  service = await startService();
  api = new ApiClient(service.url);
});

afterAll(() => service.stop());

async function serverConcepts(): Promise<Concept[]> {
  const res = await api.concepts();
  if (!res.ok) throw new Error(res.error.message);
  return res.value.concepts;
}

async function expectMirror(board: Board): Promise<void> {
  expect(board.view()).toEqual(await serverConcepts());
}

it("mirrors the initial fetch", async () => {
  const board = new Board(api, "board-test");
  await board.refresh();
  expect(board.state.phase).toBe("ready");
  await expectMirror(board);
});

it("stays identical to the server across every kind of accepted op", async () => {
  const board = new Board(api, "board-test");
  await board.refresh();
  const args = () => board.view().filter((c) => c.role === "Argument");

  let res = await board.submit({
    op: "rename",
    params: { concept_id: args()[0].id, name: "Paperwork" },
  });
  expect(res.ok).toBe(true);
  await expectMirror(board);

  const [a, b] = args();
  const keeperId = Math.min(a.id, b.id);
  res = await board.submit({ op: "merge", params: { concept_ids: [a.id, b.id] } });
  expect(res.ok).toBe(true);
  await expectMirror(board);

  res = await board.submit({
    op: "create",
    params: { role: "Argument", name: "Gadgets", mentions: ["zz phone", "zz tablet"] },
  });
  expect(res.ok).toBe(true);
  await expectMirror(board);

  const created = board.view().find((c) => c.name === "Gadgets")!;
  res = await board.submit({
    op: "move",
    params: { mention: "zz phone", from_id: created.id, to_id: keeperId },
  });
  expect(res.ok).toBe(true);
  await expectMirror(board);

  const keeper = board.view().find((c) => c.id === keeperId)!;
  res = await board.submit({
    op: "split",
    params: {
      concept_id: keeperId,
      groups: [keeper.mentions.filter((m) => m !== "zz phone"), ["zz phone"]],
    },
  });
  expect(res.ok).toBe(true);
  await expectMirror(board);

  res = await board.submit({
    op: "move",
    params: { mention: "zz tablet", from_id: created.id, to_id: keeperId },
  });
  expect(res.ok).toBe(true);
  res = await board.submit({ op: "delete_empty", params: { concept_id: created.id } });
  expect(res.ok).toBe(true);
  await expectMirror(board);
  expect(board.view().some((c) => c.name === "Gadgets")).toBe(false);
});

it("shows a pending edit immediately and reconciles on ack", async () => {
  const board = new Board(api, "board-test");
  await board.refresh();
  const target = board.view()[0];
  const seqBefore = board.state.seq;

  const p = board.submit({
    op: "rename",
    params: { concept_id: target.id, name: "Snappy" },
  });
  expect(board.state.pending).toHaveLength(1);
  expect(board.view().find((c) => c.id === target.id)!.name).toBe("Snappy");
  expect(board.state.confirmed.find((c) => c.id === target.id)!.name).toBe(target.name);

  const res = await p;
  expect(res.ok).toBe(true);
  expect(board.state.pending).toHaveLength(0);
  expect(board.state.seq).toBe(seqBefore + 1);
  await expectMirror(board);
});

it("refuses a cross-role merge locally, without a round trip", async () => {
  const board = new Board(api, "board-test");
  await board.refresh();
  const action = board.view().find((c) => c.role === "Action")!;
  const question = board.view().find((c) => c.role === "Question")!;
  const seqBefore = board.state.seq;

  const res = await board.submit({
    op: "merge",
    params: { concept_ids: [action.id, question.id] },
  });
  expect(res.ok).toBe(false);
  if (!res.ok) expect(res.error.code).toBe("invalid_op");
  expect(board.state.pending).toHaveLength(0);

  const log = await api.refineLog(seqBefore);
  expect(log.ok).toBe(true);
  if (log.ok) expect(log.value.ops).toHaveLength(0);
});

it("rolls back, raises the stale banner and refreshes on conflict", async () => {
  const board = new Board(api, "board-test");
  await board.refresh();
  const target = board.view().find((c) => c.role === "Question")!;

  const remote = await api.refine(
    { op: "rename", params: { concept_id: target.id, name: "Remote" } },
    board.state.seq,
    "someone-else",
  );
  expect(remote.ok).toBe(true);

  const res = await board.submit({
    op: "rename",
    params: { concept_id: target.id, name: "Local" },
  });
  expect(res.ok).toBe(false);
  if (!res.ok) expect(res.error.status).toBe(409);
  expect(board.state.staleBanner).not.toBeNull();
  expect(board.state.pending).toHaveLength(0);
  await expectMirror(board);
  expect(board.view().find((c) => c.id === target.id)!.name).toBe("Remote");
});

it("pulls remote edits on poll by replaying the log", async () => {
  const board = new Board(api, "board-test");
  await board.refresh();
  const head = board.state.seq;
  const target = board.view().find((c) => c.role === "Problem")!;

  const remote = await api.refine(
    { op: "rename", params: { concept_id: target.id, name: "Polled" } },
    head,
    "someone-else",
  );
  expect(remote.ok).toBe(true);

  await board.poll();
  expect(board.state.seq).toBe(head + 1);
  expect(board.view().find((c) => c.id === target.id)!.name).toBe("Polled");
  await expectMirror(board);
});
