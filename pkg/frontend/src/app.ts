// Console bootstrap: hash routing, event wiring, API calls. Served from
// /ui by the session server, so API paths are same-origin.

import { ApiClient, ConflictError } from "./api.js";
import {
  latestReportIteration,
  pollIteration,
  validateCorrection,
  validateRefinement,
} from "./logic.js";
import {
  correctionFormView,
  navView,
  noticeView,
  queueView,
  refineView,
  reportView,
  sessionListView,
} from "./views.js";
import type { FlaggedPoint, SessionDetail } from "./types.js";

const api = new ApiClient("");
const root = document.getElementById("app")!;

let notice = "";
let noticeKind: "info" | "error" = "info";

function setNotice(message: string, kind: "info" | "error" = "info") {
  notice = message;
  noticeKind = kind;
}

function parseRoute(): { sessionId?: string; view: string; iteration?: number } {
  const hash = location.hash.replace(/^#\/?/, "");
  const parts = hash.split("/").filter(Boolean);
  if (parts[0] !== "s" || !parts[1]) return { view: "home" };
  const sessionId = decodeURIComponent(parts[1]);
  if (parts[2] === "report") {
    return {
      sessionId,
      view: "report",
      iteration: parts[3] ? Number(parts[3]) : undefined,
    };
  }
  if (parts[2] === "refine") return { sessionId, view: "refine" };
  return { sessionId, view: "queue" };
}

async function render() {
  const route = parseRoute();
  const banner = notice ? noticeView(notice, noticeKind) : "";
  notice = "";
  try {
    if (route.view === "home") {
      const { sessions } = await api.listSessions();
      root.innerHTML = banner + sessionListView(sessions);
      return;
    }
    const detail = await api.getSession(route.sessionId!);
    if (route.view === "queue") {
      const { flagged } = await api.listFlagged(detail.session_id);
      root.innerHTML = banner + navView(detail, "") + queueView(detail, flagged);
      wireQueue(detail, flagged);
    } else if (route.view === "report") {
      await renderReport(detail, route.iteration, banner);
    } else {
      const running = detail.iterations.some((it) => it.status === "running");
      root.innerHTML = banner + navView(detail, "/refine") + refineView(detail, running);
      wireRefine(detail);
    }
  } catch (error) {
    root.innerHTML = noticeView(String(error), "error");
  }
}

async function renderReport(
  detail: SessionDetail,
  iteration: number | undefined,
  banner: string,
) {
  const index = iteration ?? latestReportIteration(detail.iterations);
  if (index === null) {
    root.innerHTML =
      banner + navView(detail, "/report") +
      `<section class="panel"><p>No report yet.</p></section>`;
    return;
  }
  const report = await api.getReport(detail.session_id, index);
  // figures are inlined exactly as served; the report stays the single
  // source of truth for every rendered shape
  const figures = await Promise.all(
    report.figures.map((name) => api.fetchFigure(detail.session_id, index, name)),
  );
  root.innerHTML =
    banner + navView(detail, "/report") +
    `<p class="meta">iteration ${index}</p>` +
    reportView(report, figures.map((svg) => `<figure>${svg}</figure>`));
}

function wireQueue(detail: SessionDetail, flagged: FlaggedPoint[]) {
  root.querySelectorAll<HTMLElement>(".card").forEach((card) => {
    const pointId = card.dataset.point!;
    const point = flagged.find((p) => p.point_id === pointId)!;
    card.querySelectorAll<HTMLButtonElement>("button[data-action]").forEach((button) => {
      button.addEventListener("click", async () => {
        const action = button.dataset.action!;
        if (action === "correct") {
          const slot = card.querySelector<HTMLElement>(".correction-slot")!;
          slot.innerHTML = correctionFormView(detail.variables, point);
          wireCorrectionForm(detail, point, slot);
          return;
        }
        if (action === "cancel-correct") return;
        await decide(detail.session_id, {
          point_id: pointId,
          action: action as "approve" | "reject",
        });
      });
    });
  });
}

function wireCorrectionForm(detail: SessionDetail, point: FlaggedPoint, slot: HTMLElement) {
  const form = slot.querySelector<HTMLFormElement>("form.correction")!;
  form
    .querySelector<HTMLButtonElement>('button[data-action="cancel-correct"]')!
    .addEventListener("click", () => (slot.innerHTML = ""));
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const raw: Record<string, string> = {};
    new FormData(form).forEach((value, key) => (raw[key] = String(value)));
    const result = validateCorrection(detail.variables, raw);
    if (!result.ok) {
      slot.innerHTML = correctionFormView(detail.variables, point, result.errors);
      wireCorrectionForm(detail, point, slot);
      return;
    }
    await decide(detail.session_id, {
      point_id: point.point_id,
      action: "correct",
      values: result.values,
    });
  });
}

async function decide(
  sessionId: string,
  body: {
    point_id: string;
    action: "approve" | "correct" | "reject";
    values?: Record<string, number | null>;
  },
) {
  try {
    await api.postDecision(sessionId, { ...body, inspector: "console" });
    setNotice(`${body.action} recorded for ${body.point_id}`);
  } catch (error) {
    if (error instanceof ConflictError) {
      setNotice(`point was already decided elsewhere; queue refreshed`, "error");
    } else {
      setNotice(String(error), "error");
    }
  }
  await render();
}

function wireRefine(detail: SessionDetail) {
  const form = document.getElementById("refine-form") as HTMLFormElement | null;
  if (!form) return;
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const data = new FormData(form);
    const queryText = String(data.get("query") ?? "");
    const flagUpto = String(data.get("flag_upto") ?? "");
    const check = validateRefinement(queryText, flagUpto, detail.policy.flag_upto);
    const errorSlot = document.getElementById("refine-error")!;
    if (!check.ok) {
      errorSlot.textContent = check.error ?? "invalid";
      return;
    }
    const body: { query?: string; policy?: typeof detail.policy } = {};
    if (queryText.trim()) body.query = queryText.trim();
    if (flagUpto.trim()) {
      body.policy = { ...detail.policy, flag_upto: Number(flagUpto.trim()) };
    }
    try {
      const { index } = await api.refine(detail.session_id, body);
      setNotice(`iteration ${index} started; waiting for the report…`);
      await render();
      const iteration = await pollIteration(api, detail.session_id, index);
      if (iteration.status === "completed") {
        location.hash = `#/s/${encodeURIComponent(detail.session_id)}/report/${index}`;
      } else {
        setNotice(`iteration ${index} ended with status ${iteration.status}`, "error");
        await render();
      }
    } catch (error) {
      if (error instanceof ConflictError) {
        setNotice("a refinement is already running", "error");
      } else {
        setNotice(String(error), "error");
      }
      await render();
    }
  });
}

window.addEventListener("hashchange", render);
render();
