/**
 * Display formatting helpers.
 *
 * Metric values always originate from server responses; the only client-side
 * transformation is presentation — floats render with exactly three decimals.
 */

import type { CodebookInfo, MetricsSummary } from "./api.js";

/** Render a float metric with three decimals (1 → "1.000", 0.64 → "0.640"). */
export function fmt3(value: number): string {
  return value.toFixed(3);
}

/**
 * Flatten a server metrics summary into displayable (metric, value) rows.
 * Counts stay integral; ratio metrics get the three-decimal rendering.
 */
export function metricRows(
  summary: MetricsSummary,
  mismatchCount?: number,
): Array<[string, string]> {
  const rows: Array<[string, string]> = [
    ["level", summary.level],
    ["scope", summary.scope],
    ["instances", String(summary.instances)],
    ["accuracy", fmt3(summary.accuracy)],
    ["weighted_precision", fmt3(summary.weighted_precision)],
    ["weighted_recall", fmt3(summary.weighted_recall)],
    ["weighted_f1", fmt3(summary.weighted_f1)],
  ];
  if (mismatchCount !== undefined) {
    rows.push(["mismatches", String(mismatchCount)]);
  }
  return rows;
}

/**
 * Every label string the service accepts for a codebook, in dropdown order:
 * "None" first, then each registry entry — event labels as their bare code,
 * scale labels expanded to one "Code: value" option per in-range value.
 *
 * Constraining the dropdown to this list makes invalid edits unrepresentable.
 */
export function labelOptions(codebook: CodebookInfo): string[] {
  const options: string[] = ["None"];
  for (const label of codebook.labels) {
    if (label.kind === "scale" && label.scale_range && label.scale_range.length === 2) {
      const lo = label.scale_range[0] ?? 1;
      const hi = label.scale_range[1] ?? lo;
      for (let value = lo; value <= hi; value += 1) {
        options.push(`${label.code}: ${value}`);
      }
    } else {
      options.push(label.code);
    }
  }
  return options;
}
