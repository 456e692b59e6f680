// HTML renderers. Every number shown comes verbatim from an API payload
// (String(...) of the JSON value); the console does no arithmetic on data.

import type {
  FlaggedPoint,
  Report,
  SessionDetail,
  SessionSummary,
  VariableSpec,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function show(value: number | string | null): string {
  return value === null ? "–" : escapeHtml(String(value));
}

export function sessionListView(sessions: SessionSummary[]): string {
  if (sessions.length === 0) {
    return `<section class="panel"><p>No sessions yet. Start one with the CLI.</p></section>`;
  }
  const rows = sessions
    .map(
      (s) => `
      <tr>
        <td><a href="#/s/${encodeURIComponent(s.session_id)}">${escapeHtml(s.session_id)}</a></td>
        <td>${escapeHtml(s.created_at)}</td>
        <td>${s.iterations}</td>
        <td><span class="status status-${escapeHtml(s.status ?? "none")}">${show(s.status)}</span></td>
      </tr>`,
    )
    .join("");
  return `
    <section class="panel">
      <h2>Sessions</h2>
      <table>
        <thead><tr><th>id</th><th>created</th><th>iterations</th><th>status</th></tr></thead>
        <tbody>${rows}</tbody>
      </table>
    </section>`;
}

export function navView(detail: SessionDetail, active: string): string {
  const id = encodeURIComponent(detail.session_id);
  const tab = (route: string, label: string) =>
    `<a class="tab${active === route ? " active" : ""}" href="#/s/${id}${route}">${label}</a>`;
  return `
    <nav class="session-nav">
      <a href="#/" class="crumb">sessions</a> /
      <strong>${escapeHtml(detail.session_id)}</strong>
      ${tab("", "review queue")}
      ${tab("/report", "report")}
      ${tab("/refine", "refine")}
    </nav>
    <p class="query">Query: ${escapeHtml(detail.query)}</p>`;
}

export function queueView(detail: SessionDetail, flagged: FlaggedPoint[]): string {
  if (flagged.length === 0) {
    return `<section class="panel"><h2>Review queue</h2>
      <p>Nothing awaiting review.</p></section>`;
  }
  const variableNames = detail.variables.map((v) => v.name);
  const cards = flagged
    .map((point) => {
      const values = variableNames
        .map((name) => {
          const spec = detail.variables.find((v) => v.name === name)!;
          return `<span class="value"><b>${escapeHtml(name)}</b> =
            ${show(point.values[name] ?? null)} ${escapeHtml(spec.unit)}</span>`;
        })
        .join(" ");
      return `
      <article class="card" data-point="${escapeHtml(point.point_id)}">
        <header>
          <span class="score">score ${point.score}</span>
          <span class="doc">${escapeHtml(point.doc_title)}</span>
        </header>
        <p class="values">${values}</p>
        <p class="runs">supporting runs: ${point.supporting_runs.map(String).join(", ")}</p>
        <blockquote class="excerpt">${escapeHtml(point.excerpt)}</blockquote>
        <footer>
          <button data-action="approve">approve</button>
          <button data-action="correct">correct…</button>
          <button data-action="reject" class="danger">reject</button>
        </footer>
        <div class="correction-slot"></div>
      </article>`;
    })
    .join("");
  return `<section class="panel"><h2>Review queue (${flagged.length})</h2>${cards}</section>`;
}

export function correctionFormView(
  variables: VariableSpec[],
  point: FlaggedPoint,
  errors: Record<string, string> = {},
): string {
  const fields = variables
    .map((spec) => {
      const current = point.values[spec.name];
      const error = errors[spec.name];
      return `
      <label class="field${error ? " invalid" : ""}">
        <span>${escapeHtml(spec.name)} (${escapeHtml(spec.unit)}, ${spec.precision} dp${spec.required ? ", required" : ""})</span>
        <input name="${escapeHtml(spec.name)}" value="${current === null ? "" : String(current)}">
        ${error ? `<em class="error">${escapeHtml(error)}</em>` : ""}
      </label>`;
    })
    .join("");
  return `
    <form class="correction" data-point="${escapeHtml(point.point_id)}">
      ${fields}
      <div class="row">
        <button type="submit">save correction</button>
        <button type="button" data-action="cancel-correct">cancel</button>
      </div>
    </form>`;
}

export function reportView(report: Report, figureMarkup: string[]): string {
  const fitRows = report.fits
    .map(
      (fit) => `
      <tr>
        <td>${escapeHtml(fit.form)}</td>
        <td><code>${escapeHtml(fit.equation)}</code></td>
        <td>${show(fit.display_r_squared)}</td>
        <td>${fit.converged}</td>
      </tr>`,
    )
    .join("");
  const header = [...report.dataset.predictors, report.dataset.target, "source", "score"];
  const dataRows = report.dataset.rows
    .map((row, i) => {
      const provenance = report.dataset.provenance[i] ?? ["?", "?"];
      const cells = [
        ...row.map((v) => show(v)),
        show(report.dataset.targets[i]),
        escapeHtml(provenance[0]),
        escapeHtml(provenance[1]),
      ];
      return `<tr>${cells.map((c) => `<td>${c}</td>`).join("")}</tr>`;
    })
    .join("");
  const notes = report.notes.length
    ? `<ul class="notes">${report.notes.map((n) => `<li>${escapeHtml(n)}</li>`).join("")}</ul>`
    : "";
  return `
    <section class="panel">
      <h2>Report</h2>
      <p class="meta">generated ${escapeHtml(report.generated_at)}</p>
      ${
        report.response_text
          ? `<div class="answer">${escapeHtml(report.response_text)}</div>`
          : `<p class="meta">no response text</p>`
      }
      <h3>Models</h3>
      <table>
        <thead><tr><th>form</th><th>equation</th><th>R²</th><th>converged</th></tr></thead>
        <tbody>${fitRows}</tbody>
      </table>
      ${notes}
      <h3>Figures</h3>
      <div class="figures">${figureMarkup.join("")}</div>
      <h3>Dataset (${report.dataset.rows.length} rows)</h3>
      <table>
        <thead><tr>${header.map((h) => `<th>${escapeHtml(h)}</th>`).join("")}</tr></thead>
        <tbody>${dataRows}</tbody>
      </table>
    </section>`;
}

export function refineView(detail: SessionDetail, running: boolean): string {
  const disabled = running ? "disabled" : "";
  return `
    <section class="panel">
      <h2>Refine</h2>
      ${
        running
          ? `<p class="notice">An iteration is currently running; refinement is
             disabled until it finishes.</p>`
          : ""
      }
      <form id="refine-form">
        <label class="field">
          <span>new query (blank to keep: "${escapeHtml(detail.query)}")</span>
          <input name="query" ${disabled}>
        </label>
        <label class="field">
          <span>flag threshold (flag_upto, currently ${detail.policy.flag_upto})</span>
          <input name="flag_upto" ${disabled}>
        </label>
        <div class="row">
          <button type="submit" ${disabled}>start refined iteration</button>
        </div>
        <em class="error" id="refine-error"></em>
      </form>
    </section>`;
}

export function noticeView(message: string, kind: "info" | "error" = "info"): string {
  return `<div class="banner banner-${kind}">${escapeHtml(message)}</div>`;
}
