import { ApiClient } from "./api";
import { Board } from "./store";
import type { Concept, InferResult, NeighborHit, RefineOp, Role } from "./types";
import { ROLES, isRole } from "./types";

const DEFAULT_SERVICE = "http://127.0.0.1:8080";
const POLL_MS = 2500;
const TOAST_MS = 4000;

// CJK chunks are split into single characters, everything else on
// whitespace; must agree with the service tokenizer or span highlights
// drift.
const CJK = /[⺀-〿぀-鿿가-힯豈-﫿]/;

function tokenize(text: string): string[] {
  const out: string[] = [];
  for (const chunk of text.split(/\s+/)) {
    if (!chunk) continue;
    if (CJK.test(chunk)) out.push(...chunk);
    else out.push(chunk);
  }
  return out;
}

type UiState = {
  roleFilter: Role | "All";
  selected: Set<number>;
  renameId: number | null;
  splitId: number | null;
  splitPicked: Set<string>;
  neighbors: { mention: string; role: Role; hits: NeighborHit[] } | null;
  inferResult: InferResult | null;
  inferText: string;
  connected: boolean;
};

const ui: UiState = {
  roleFilter: "All",
  selected: new Set(),
  renameId: null,
  splitId: null,
  splitPicked: new Set(),
  neighbors: null,
  inferResult: null,
  inferText: "",
  connected: false,
};

const params = new URLSearchParams(location.search);
const serviceUrl = params.get("service") ?? DEFAULT_SERVICE;
const api = new ApiClient(serviceUrl);
const board = new Board(api);

const app = document.querySelector<HTMLDivElement>("#app");
if (!app) throw new Error("Missing #app element");

app.innerHTML = `
  <header class="topbar">
    <h1>Concept Curation</h1>
    <span id="conn" class="conn">connecting…</span>
    <span class="service-url">${serviceUrl}</span>
  </header>
  <div id="banner" class="banner hidden"></div>
  <div class="layout">
    <section class="board-pane">
      <div class="toolbar">
        <nav id="role-tabs" class="tabs"></nav>
        <button id="merge-selected" disabled>Merge selected</button>
        <form id="create-form">
          <select id="create-role"></select>
          <input id="create-name" placeholder="new concept name" />
          <input id="create-mentions" placeholder="mentions, comma separated" />
          <button type="submit">Create</button>
        </form>
      </div>
      <div id="board" class="board"></div>
    </section>
    <aside class="side-pane">
      <section class="panel">
        <h2>Try an utterance</h2>
        <form id="infer-form">
          <input id="infer-text" placeholder="Check my insurance policy" autocomplete="off" />
          <button id="infer-submit" type="submit" disabled>Infer</button>
        </form>
        <div id="infer-out"></div>
      </section>
      <section class="panel">
        <h2>Nearest mentions</h2>
        <div id="neighbors-out" class="muted">Click a mention chip to inspect its neighborhood.</div>
      </section>
    </aside>
  </div>
  <footer class="statusbar"><span id="seq"></span></footer>
  <div id="toast" class="toast hidden"></div>
`;

const connEl = app.querySelector<HTMLSpanElement>("#conn")!;
const bannerEl = app.querySelector<HTMLDivElement>("#banner")!;
const roleTabsEl = app.querySelector<HTMLElement>("#role-tabs")!;
const mergeSelectedEl = app.querySelector<HTMLButtonElement>("#merge-selected")!;
const createFormEl = app.querySelector<HTMLFormElement>("#create-form")!;
const createRoleEl = app.querySelector<HTMLSelectElement>("#create-role")!;
const createNameEl = app.querySelector<HTMLInputElement>("#create-name")!;
const createMentionsEl = app.querySelector<HTMLInputElement>("#create-mentions")!;
const boardEl = app.querySelector<HTMLDivElement>("#board")!;
const inferFormEl = app.querySelector<HTMLFormElement>("#infer-form")!;
const inferTextEl = app.querySelector<HTMLInputElement>("#infer-text")!;
const inferSubmitEl = app.querySelector<HTMLButtonElement>("#infer-submit")!;
const inferOutEl = app.querySelector<HTMLDivElement>("#infer-out")!;
const neighborsOutEl = app.querySelector<HTMLDivElement>("#neighbors-out")!;
const seqEl = app.querySelector<HTMLSpanElement>("#seq")!;
const toastEl = app.querySelector<HTMLDivElement>("#toast")!;

for (const role of ROLES) {
  const opt = document.createElement("option");
  opt.value = role;
  opt.textContent = role;
  createRoleEl.append(opt);
}

let toastTimer: number | undefined;

function toast(message: string): void {
  toastEl.textContent = message;
  toastEl.classList.remove("hidden");
  window.clearTimeout(toastTimer);
  toastTimer = window.setTimeout(() => toastEl.classList.add("hidden"), TOAST_MS);
}

async function submitOp(op: RefineOp): Promise<void> {
  const res = await board.submit(op);
  if (!res.ok) {
    toast(
      res.error.code === "conflict"
        ? "Conflict: the board changed under you and was refreshed."
        : `Rejected: ${res.error.message}`,
    );
  }
}

// ---------------------------------------------------------------------------
// board rendering

function conceptName(concepts: Concept[], id: number): string {
  return concepts.find((c) => c.id === id)?.name ?? `#${id}`;
}

function renderRoleTabs(): void {
  roleTabsEl.innerHTML = "";
  for (const label of ["All", ...ROLES]) {
    const b = document.createElement("button");
    b.textContent = label;
    b.className = ui.roleFilter === label ? "tab active" : "tab";
    b.addEventListener("click", () => {
      ui.roleFilter = label === "All" ? "All" : (label as Role);
      render();
    });
    roleTabsEl.append(b);
  }
}

function mentionChip(c: Concept, mention: string): HTMLElement {
  const chip = document.createElement("span");
  chip.className = "chip";
  chip.textContent = mention;
  if (ui.splitId === c.id) {
    chip.classList.toggle("picked", ui.splitPicked.has(mention));
    chip.addEventListener("click", () => {
      if (ui.splitPicked.has(mention)) ui.splitPicked.delete(mention);
      else ui.splitPicked.add(mention);
      render();
    });
    return chip;
  }
  chip.draggable = true;
  chip.addEventListener("dragstart", (ev) => {
    ev.dataTransfer?.setData(
      "application/x-mention",
      JSON.stringify({ mention, from_id: c.id }),
    );
    // the payload is unreadable during dragover, so the role rides
    // along in a type tag where the drop filter can see it
    ev.dataTransfer?.setData(`role/${c.role.toLowerCase()}`, "1");
    ev.stopPropagation();
  });
  chip.addEventListener("click", () => void showNeighbors(mention, c.role));
  return chip;
}

function conceptCard(c: Concept): HTMLElement {
  const card = document.createElement("article");
  card.className = "card";
  card.dataset.id = String(c.id);
  if (ui.selected.has(c.id)) card.classList.add("selected");

  const head = document.createElement("div");
  head.className = "card-head";

  const pick = document.createElement("input");
  pick.type = "checkbox";
  pick.checked = ui.selected.has(c.id);
  pick.title = "select for merge";
  pick.addEventListener("change", () => {
    if (pick.checked) ui.selected.add(c.id);
    else ui.selected.delete(c.id);
    render();
  });
  head.append(pick);

  if (ui.renameId === c.id) {
    const input = document.createElement("input");
    input.className = "rename";
    input.value = c.name;
    input.addEventListener("keydown", (ev) => {
      if (ev.key === "Enter") {
        ui.renameId = null;
        void submitOp({ op: "rename", params: { concept_id: c.id, name: input.value } });
      } else if (ev.key === "Escape") {
        ui.renameId = null;
        render();
      }
    });
    head.append(input);
    queueMicrotask(() => input.focus());
  } else {
    const name = document.createElement("span");
    name.className = "name";
    name.textContent = c.name;
    name.title = "click to rename";
    name.addEventListener("click", () => {
      ui.renameId = c.id;
      render();
    });
    head.append(name);
  }

  const role = document.createElement("span");
  role.className = `role role-${c.role.toLowerCase()}`;
  role.textContent = c.role;
  const idChip = document.createElement("span");
  idChip.className = "cid";
  idChip.textContent = `#${c.id}`;
  head.append(role, idChip);
  card.append(head);

  const mentions = document.createElement("div");
  mentions.className = "mentions";
  for (const m of c.mentions) mentions.append(mentionChip(c, m));
  if (!c.mentions.length) {
    const empty = document.createElement("span");
    empty.className = "muted";
    empty.textContent = "no mentions";
    mentions.append(empty);
  }
  card.append(mentions);

  const actions = document.createElement("div");
  actions.className = "card-actions";
  if (ui.splitId === c.id) {
    const confirm = document.createElement("button");
    confirm.textContent = "Split off picked";
    confirm.disabled =
      ui.splitPicked.size === 0 || ui.splitPicked.size === c.mentions.length;
    confirm.addEventListener("click", () => {
      const picked = c.mentions.filter((m) => ui.splitPicked.has(m));
      const rest = c.mentions.filter((m) => !ui.splitPicked.has(m));
      ui.splitId = null;
      ui.splitPicked = new Set();
      void submitOp({ op: "split", params: { concept_id: c.id, groups: [rest, picked] } });
    });
    const cancel = document.createElement("button");
    cancel.textContent = "Cancel";
    cancel.addEventListener("click", () => {
      ui.splitId = null;
      ui.splitPicked = new Set();
      render();
    });
    actions.append(confirm, cancel);
  } else {
    if (c.mentions.length > 1) {
      const split = document.createElement("button");
      split.textContent = "Split";
      split.addEventListener("click", () => {
        ui.splitId = c.id;
        ui.splitPicked = new Set();
        render();
      });
      actions.append(split);
    }
    if (!c.mentions.length) {
      const del = document.createElement("button");
      del.textContent = "Delete";
      del.addEventListener("click", () =>
        void submitOp({ op: "delete_empty", params: { concept_id: c.id } }),
      );
      actions.append(del);
    }
  }
  card.append(actions);

  // drag a card onto another card of the same role to merge them;
  // cross-role drops never light up because the role tag differs
  card.draggable = ui.splitId !== c.id;
  card.addEventListener("dragstart", (ev) => {
    ev.dataTransfer?.setData("application/x-concept", String(c.id));
    ev.dataTransfer?.setData(`role/${c.role.toLowerCase()}`, "1");
  });
  card.addEventListener("dragover", (ev) => {
    if (ev.dataTransfer?.types.includes(`role/${c.role.toLowerCase()}`)) {
      ev.preventDefault();
      card.classList.add("drop-target");
    }
  });
  card.addEventListener("dragleave", () => card.classList.remove("drop-target"));
  card.addEventListener("drop", (ev) => {
    ev.preventDefault();
    card.classList.remove("drop-target");
    const rawMention = ev.dataTransfer?.getData("application/x-mention");
    if (rawMention) {
      const { mention, from_id } = JSON.parse(rawMention) as {
        mention: string;
        from_id: number;
      };
      if (from_id !== c.id) {
        void submitOp({ op: "move", params: { mention, from_id, to_id: c.id } });
      }
      return;
    }
    const rawConcept = ev.dataTransfer?.getData("application/x-concept");
    if (rawConcept) {
      const other = Number(rawConcept);
      if (Number.isFinite(other) && other !== c.id) {
        void submitOp({ op: "merge", params: { concept_ids: [other, c.id] } });
      }
    }
  });

  return card;
}

function renderBoard(): void {
  const concepts = board.view();
  ui.selected = new Set([...ui.selected].filter((id) => concepts.some((c) => c.id === id)));
  boardEl.innerHTML = "";
  const shown =
    ui.roleFilter === "All" ? concepts : concepts.filter((c) => c.role === ui.roleFilter);
  for (const c of shown) boardEl.append(conceptCard(c));
  if (!shown.length) {
    const empty = document.createElement("p");
    empty.className = "muted";
    empty.textContent = board.state.phase === "loading" ? "Loading…" : "No concepts.";
    boardEl.append(empty);
  }

  const picked = concepts.filter((c) => ui.selected.has(c.id));
  const sameRole = new Set(picked.map((c) => c.role)).size === 1;
  mergeSelectedEl.disabled = picked.length < 2 || !sameRole;
  mergeSelectedEl.title =
    picked.length >= 2 && !sameRole ? "cannot merge across roles" : "";
}

// ---------------------------------------------------------------------------
// side panels

async function showNeighbors(mention: string, role: Role): Promise<void> {
  const res = await api.neighbors(mention, role, 8);
  if (!res.ok) {
    toast(`Neighbors failed: ${res.error.message}`);
    return;
  }
  ui.neighbors = { mention, role, hits: res.value.neighbors };
  render();
}

function renderNeighbors(): void {
  if (!ui.neighbors) return;
  const concepts = board.view();
  neighborsOutEl.innerHTML = "";
  const title = document.createElement("p");
  title.innerHTML = `<strong>${ui.neighbors.mention}</strong> <span class="role role-${ui.neighbors.role.toLowerCase()}">${ui.neighbors.role}</span>`;
  neighborsOutEl.append(title);
  const list = document.createElement("ul");
  list.className = "neighbor-list";
  for (const hit of ui.neighbors.hits) {
    const li = document.createElement("li");
    const bar = document.createElement("span");
    bar.className = "simbar";
    bar.style.width = `${Math.max(0, Math.min(1, hit.similarity)) * 100}%`;
    const label = document.createElement("span");
    label.textContent = `${hit.mention} · ${conceptName(concepts, hit.concept_id)} (${hit.similarity.toFixed(3)})`;
    li.append(bar, label);
    list.append(li);
  }
  if (!ui.neighbors.hits.length) {
    const li = document.createElement("li");
    li.className = "muted";
    li.textContent = "nothing embeddable nearby";
    list.append(li);
  }
  neighborsOutEl.append(list);
}

function renderInfer(): void {
  inferSubmitEl.disabled = !ui.inferText.trim();
  inferOutEl.innerHTML = "";
  const r = ui.inferResult;
  if (!r) return;

  const statusRow = document.createElement("div");
  statusRow.className = "infer-status";
  const badge = document.createElement("span");
  badge.className = `badge badge-${r.status.toLowerCase()}`;
  badge.textContent = r.status.replaceAll("_", " ");
  const intent = document.createElement("code");
  intent.className = "intent";
  intent.textContent = r.intent || "(no intent)";
  statusRow.append(badge, intent);
  inferOutEl.append(statusRow);

  // token stream with mention spans tinted by role
  const tokens = tokenize(ui.inferText);
  const roleOf = new Array<Role | null>(tokens.length).fill(null);
  const nameOf = new Array<string | null>(tokens.length).fill(null);
  for (const m of r.mentions) {
    for (let i = m.span[0]; i < m.span[1] && i < tokens.length; i++) {
      roleOf[i] = m.role;
      nameOf[i] = m.concept ?? "uncategorized";
    }
  }
  const stream = document.createElement("p");
  stream.className = "token-stream";
  tokens.forEach((tok, i) => {
    const span = document.createElement("span");
    span.textContent = tok;
    const role = roleOf[i];
    if (role) {
      span.className = `tok role-${role.toLowerCase()}`;
      span.title = `${role}: ${nameOf[i]}`;
    } else {
      span.className = "tok";
    }
    stream.append(span, document.createTextNode(" "));
  });
  inferOutEl.append(stream);

  const slotNames = Object.keys(r.slots);
  if (slotNames.length) {
    const table = document.createElement("table");
    table.className = "slots";
    table.innerHTML = "<thead><tr><th>Slot</th><th>Values</th></tr></thead>";
    const body = document.createElement("tbody");
    for (const name of slotNames) {
      const tr = document.createElement("tr");
      const th = document.createElement("td");
      th.textContent = name;
      const td = document.createElement("td");
      td.textContent = r.slots[name].join(", ");
      tr.append(th, td);
      body.append(tr);
    }
    table.append(body);
    inferOutEl.append(table);
  }
}

// ---------------------------------------------------------------------------
// top-level render and wiring

function render(): void {
  connEl.textContent = ui.connected ? "connected" : "offline";
  connEl.classList.toggle("ok", ui.connected);
  bannerEl.classList.toggle("hidden", board.state.staleBanner === null);
  if (board.state.staleBanner !== null) {
    bannerEl.innerHTML = "";
    const note = document.createElement("span");
    note.textContent = board.state.staleBanner;
    const dismiss = document.createElement("button");
    dismiss.textContent = "Dismiss";
    dismiss.addEventListener("click", () => board.dismissBanner());
    bannerEl.append(note, dismiss);
  }
  renderRoleTabs();
  renderBoard();
  renderNeighbors();
  renderInfer();
  seqEl.textContent = `log seq ${board.state.seq} · ${board.state.pending.length} pending`;
}

mergeSelectedEl.addEventListener("click", () => {
  const ids = [...ui.selected];
  ui.selected = new Set();
  void submitOp({ op: "merge", params: { concept_ids: ids } });
});

createFormEl.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const roleValue = createRoleEl.value;
  if (!isRole(roleValue)) return;
  const mentions = createMentionsEl.value
    .split(",")
    .map((s) => s.trim())
    .filter(Boolean);
  void submitOp({
    op: "create",
    params: { role: roleValue, name: createNameEl.value, mentions },
  });
  createNameEl.value = "";
  createMentionsEl.value = "";
});

inferTextEl.addEventListener("input", () => {
  ui.inferText = inferTextEl.value;
  inferSubmitEl.disabled = !ui.inferText.trim();
});

inferFormEl.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const text = inferTextEl.value;
  if (!text.trim()) return;
  void (async () => {
    const res = await api.infer(text);
    if (!res.ok) {
      toast(`Infer failed: ${res.error.message}`);
      return;
    }
    ui.inferText = text;
    ui.inferResult = res.value;
    render();
  })();
});

board.subscribe(render);

async function init(): Promise<void> {
  const health = await api.health();
  ui.connected = health.ok;
  await board.refresh();
  render();
  window.setInterval(() => {
    void board.poll();
  }, POLL_MS);
}

void init();
