// DOM-free console logic: correction-form validation against the variable
// specs and iteration polling. Kept pure so it is testable under node.

import type { ApiClient } from "./api.js";
import type { IterationInfo, VariableSpec } from "./types.js";

export interface ValidCorrection {
  ok: true;
  values: Record<string, number | null>;
}

export interface InvalidCorrection {
  ok: false;
  errors: Record<string, string>;
}

export type CorrectionResult = ValidCorrection | InvalidCorrection;

function roundTo(value: number, precision: number): number {
  const factor = 10 ** precision;
  return Math.round(value * factor) / factor;
}

/** Validate raw form input against the variable specs: required fields must
 * parse to finite numbers; values are rounded to each variable's declared
 * precision before posting. Optional variables may be left blank. */
export function validateCorrection(
  variables: VariableSpec[],
  raw: Record<string, string>,
): CorrectionResult {
  const errors: Record<string, string> = {};
  const values: Record<string, number | null> = {};
  for (const spec of variables) {
    const text = (raw[spec.name] ?? "").trim();
    if (text === "") {
      if (spec.required) {
        errors[spec.name] = "required";
      } else {
        values[spec.name] = null;
      }
      continue;
    }
    const parsed = Number(text);
    if (!Number.isFinite(parsed)) {
      errors[spec.name] = `not a finite number: "${text}"`;
      continue;
    }
    values[spec.name] = roundTo(parsed, spec.precision);
  }
  if (Object.keys(errors).length > 0) return { ok: false, errors };
  return { ok: true, values };
}

/** Client-side guard for refinement submissions: an empty form (no query
 * text and no threshold change) is rejected before any request is made. */
export function validateRefinement(
  queryText: string,
  flagUpto: string,
  currentFlagUpto: number,
): { ok: boolean; error?: string } {
  const trimmed = queryText.trim();
  const threshold = flagUpto.trim();
  if (trimmed === "" && threshold === "") {
    return { ok: false, error: "enter a new query or change a threshold" };
  }
  if (threshold !== "") {
    const parsed = Number(threshold);
    if (!Number.isInteger(parsed) || parsed < 0) {
      return { ok: false, error: "flag threshold must be a non-negative integer" };
    }
    if (trimmed === "" && parsed === currentFlagUpto) {
      return { ok: false, error: "threshold is unchanged" };
    }
  }
  return { ok: true };
}

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/** Poll the session until the given iteration leaves the running states.
 * Resolves with the iteration info once it is completed/failed (report
 * ready); rejects on timeout. */
export async function pollIteration(
  api: ApiClient,
  sessionId: string,
  index: number,
  options: PollOptions = {},
): Promise<IterationInfo> {
  const interval = options.intervalMs ?? 500;
  const timeout = options.timeoutMs ?? 60_000;
  const sleep = options.sleep ?? defaultSleep;
  const startedAt = Date.now();
  for (;;) {
    const detail = await api.getSession(sessionId);
    const iteration = detail.iterations.find((it) => it.index === index);
    if (iteration && iteration.status !== "running") {
      return iteration;
    }
    if (Date.now() - startedAt > timeout) {
      throw new Error(`iteration ${index} still running after ${timeout} ms`);
    }
    await sleep(interval);
  }
}

/** Latest iteration that has a report to show. */
export function latestReportIteration(iterations: IterationInfo[]): number | null {
  for (let i = iterations.length - 1; i >= 0; i--) {
    if (iterations[i].has_report) return iterations[i].index;
  }
  return null;
}
