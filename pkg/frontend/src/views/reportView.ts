import { ReviewApi } from "../api.js";
import { clear, el } from "../dom.js";
import { labelDisplay } from "../labels.js";
import type { ReportTotals } from "../types.js";

export interface ReportViewOptions {
  api: ReviewApi;
  projectId: string;
  round: number;
  onError?: (error: unknown) => void;
}

export interface ReportView {
  element: HTMLElement;
  refresh(): Promise<void>;
  /** The raw CSV endpoint the download button points at. */
  downloadUrl(): string;
}

const TOTAL_ROWS: { key: keyof ReportTotals; display: string }[] = [
  { key: "images_responsive", display: "Responsive" },
  { key: "images_not_responsive", display: "Not Responsive" },
  { key: "images_further_review", display: "Further Review" },
  { key: "images_untagged", display: "Untagged" },
  { key: "images_excluded_prefilter", display: "Excluded (pre-filter)" },
  { key: "images_invalid", display: "Invalid" },
];

export function createReportView(options: ReportViewOptions): ReportView {
  const { api, projectId, round } = options;
  const element = el("section", { class: "report-view" });

  const downloadUrl = () => api.reportCsvUrl(projectId, round);

  async function refresh(): Promise<void> {
    let report;
    try {
      report = await api.report(projectId, round);
    } catch (error) {
      options.onError?.(error);
      if (!options.onError) {
        throw error;
      }
      return;
    }
    clear(element);
    element.append(
      el("h2", {}, `Round ${report.round} report`),
      el(
        "table",
        { class: "totals" },
        el(
          "tbody",
          {},
          ...TOTAL_ROWS.map(({ key, display }) =>
            el(
              "tr",
              { "data-total": key },
              el("th", {}, display),
              el("td", { class: "total-value" }, String(report.totals[key])),
            ),
          ),
          el(
            "tr",
            { class: "scanned", "data-total": "images_scanned" },
            el("th", {}, "Images scanned"),
            el("td", { class: "total-value" }, String(report.images_scanned)),
          ),
        ),
      ),
      el(
        "a",
        { class: "download-csv", href: downloadUrl(), download: "report.csv" },
        "Download CSV",
      ),
      el(
        "table",
        { class: "report-rows" },
        el(
          "thead",
          {},
          el(
            "tr",
            {},
            el("th", {}, "cluster"),
            el("th", {}, "images"),
            el("th", {}, "label"),
            el("th", {}, "note"),
          ),
        ),
        el(
          "tbody",
          {},
          ...report.rows.map((row) =>
            el(
              "tr",
              { "data-cluster": row.cluster_index, "data-label": row.label },
              el("td", {}, String(row.cluster_index)),
              el("td", {}, String(row.size_images)),
              el("td", {}, labelDisplay(row.label)),
              el("td", {}, row.note),
            ),
          ),
        ),
      ),
    );
  }

  return { element, refresh, downloadUrl };
}
