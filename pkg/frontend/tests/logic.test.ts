import assert from "node:assert/strict";
import { test } from "node:test";

import { ApiClient, ApiError, ConflictError } from "../src/api.js";
import {
  latestReportIteration,
  pollIteration,
  validateCorrection,
  validateRefinement,
} from "../src/logic.js";
import { correctionFormView, queueView, reportView } from "../src/views.js";
import type {
  FlaggedPoint,
  IterationInfo,
  Report,
  SessionDetail,
  VariableSpec,
} from "../src/types.js";

const VARIABLES: VariableSpec[] = [
  { name: "temperature", role: "independent", required: true, unit: "C", precision: 2 },
  { name: "dose", role: "independent", required: true, unit: "dpa", precision: 4 },
  { name: "bubble_size", role: "dependent", required: true, unit: "nm", precision: 4 },
];

test("validateCorrection accepts numeric input and enforces precision", () => {
  const result = validateCorrection(VARIABLES, {
    temperature: "500.129",
    dose: "3",
    bubble_size: "2.00006",
  });
  assert.ok(result.ok);
  assert.deepEqual(result.values, {
    temperature: 500.13,
    dose: 3,
    bubble_size: 2.0001,
  });
});

test("validateCorrection reports missing required fields by name", () => {
  const result = validateCorrection(VARIABLES, { temperature: "500" });
  assert.ok(!result.ok);
  assert.equal(result.errors.dose, "required");
  assert.equal(result.errors.bubble_size, "required");
});

test("validateCorrection rejects non-numeric input inline", () => {
  const result = validateCorrection(VARIABLES, {
    temperature: "five hundred",
    dose: "3",
    bubble_size: "2",
  });
  assert.ok(!result.ok);
  assert.match(result.errors.temperature, /not a finite number/);
});

test("optional variables may stay blank", () => {
  const withOptional: VariableSpec[] = [
    ...VARIABLES,
    { name: "grain_size", role: "control", required: false, unit: "um", precision: 1 },
  ];
  const result = validateCorrection(withOptional, {
    temperature: "500", dose: "3", bubble_size: "2", grain_size: "",
  });
  assert.ok(result.ok);
  assert.equal(result.values.grain_size, null);
});

test("validateRefinement blocks empty submissions", () => {
  assert.equal(validateRefinement("", "", 5).ok, false);
  assert.equal(validateRefinement("new question?", "", 5).ok, true);
  assert.equal(validateRefinement("", "7", 5).ok, true);
  assert.equal(validateRefinement("", "5", 5).ok, false); // unchanged
  assert.equal(validateRefinement("", "x", 5).ok, false);
});

function fakeApi(pages: SessionDetail[]): ApiClient {
  let call = 0;
  const fetchImpl = async (): Promise<Response> => {
    const detail = pages[Math.min(call, pages.length - 1)];
    call += 1;
    return new Response(JSON.stringify(detail), {
      status: 200,
      headers: { "Content-Type": "application/json" },
    });
  };
  return new ApiClient("http://fake", fetchImpl);
}

function detailWith(status: string): SessionDetail {
  const iteration: IterationInfo = {
    index: 2, status, started_at: "t", finished_at: null,
    query: "q", policy: { k: 10, filter_below: 3, flag_upto: 5 },
    has_report: status === "completed",
  };
  return {
    session_id: "s1", query: "q", mode: "batch",
    policy: iteration.policy, variables: VARIABLES, iterations: [iteration],
  };
}

test("pollIteration resolves once the iteration stops running", async () => {
  const api = fakeApi([
    detailWith("running"),
    detailWith("running"),
    detailWith("completed"),
  ]);
  const iteration = await pollIteration(api, "s1", 2, {
    intervalMs: 1,
    sleep: async () => {},
  });
  assert.equal(iteration.status, "completed");
});

test("pollIteration times out", async () => {
  const api = fakeApi([detailWith("running")]);
  let clock = 0;
  await assert.rejects(
    pollIteration(api, "s1", 2, {
      intervalMs: 10,
      timeoutMs: 25,
      sleep: async () => {
        clock += 50;
      },
    }),
    /still running/,
  );
  void clock;
});

test("latestReportIteration picks the newest report", () => {
  const iterations = [
    { ...detailWith("completed").iterations[0], index: 1, has_report: true },
    { ...detailWith("completed").iterations[0], index: 2, has_report: false },
  ];
  assert.equal(latestReportIteration(iterations), 1);
  assert.equal(latestReportIteration([]), null);
});

test("ApiClient maps 409 to ConflictError and other errors to ApiError", async () => {
  const conflictFetch = async () =>
    new Response(JSON.stringify({ error: "already decided" }), { status: 409 });
  await assert.rejects(
    new ApiClient("http://x", conflictFetch).postDecision("s", {
      point_id: "p", action: "approve",
    }),
    ConflictError,
  );
  const missingFetch = async () =>
    new Response(JSON.stringify({ error: "no session" }), { status: 404 });
  await assert.rejects(
    new ApiClient("http://x", missingFetch).getSession("s"),
    (error: unknown) => error instanceof ApiError && error.status === 404,
  );
});

const POINT: FlaggedPoint = {
  point_id: "doc|temperature=500.0,dose=3.0,bubble_size=2.0",
  doc_id: "doc",
  doc_title: "A <study> of tungsten",
  values: { temperature: 500.0, dose: 3.0, bubble_size: 2.0 },
  score: 3,
  supporting_runs: [0, 1, 2],
  excerpt: "at 500 C & 3 dpa the bubbles reached 2 nm",
};

test("queueView shows values verbatim and escapes markup", () => {
  const detail = detailWith("completed");
  const html = queueView(detail, [POINT]);
  assert.match(html, /score 3/);
  assert.match(html, /500/);
  assert.match(html, /A &lt;study&gt; of tungsten/);
  assert.match(html, /&amp; 3 dpa/);
  assert.match(html, /data-action="approve"/);
});

test("correctionFormView pre-fills current values and marks errors", () => {
  const html = correctionFormView(VARIABLES, POINT, { dose: "required" });
  assert.match(html, /value="500"/);
  assert.match(html, /class="field invalid"/);
  assert.match(html, /required/);
});

test("reportView renders equations, notes and provenance untouched", () => {
  const report: Report = {
    schema_version: 1,
    query: "q",
    generated_at: "2024-01-01T00:00:00Z",
    dataset: {
      predictors: ["temperature", "dose"],
      target: "bubble_size",
      rows: [[500, 3]],
      targets: [2.345],
      provenance: [["w-he-001", "10"]],
    },
    fits: [{
      form: "linear", predictors: ["temperature", "dose"], target: "bubble_size",
      params: { w_temperature: 0.0039 }, r_squared: 0.503,
      display_r_squared: 0.503,
      equation: "bubble_size = 0.0039*temperature + 0.5179*dose - 0.0759",
      converged: true, iterations: 1, flags: [],
    }],
    anomalies: [],
    response_text: "the exponential model fits better",
    notes: ["dataset pending review: 2 flagged point(s) undecided"],
    figures: [],
  };
  const html = reportView(report, []);
  assert.match(html, /0\.0039\*temperature/);
  assert.match(html, /2\.345/);
  assert.match(html, /w-he-001/);
  assert.match(html, /pending review/);
  assert.match(html, /exponential model fits better/);
});
