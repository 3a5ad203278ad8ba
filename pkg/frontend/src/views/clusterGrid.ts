import { ReviewApi } from "../api.js";
import { clear, el } from "../dom.js";
import type { HotkeyBindings } from "../hotkeys.js";
import { LABELS, labelDisplay } from "../labels.js";
import type { ClusterSummary, Label } from "../types.js";

export interface ClusterGridOptions {
  api: ReviewApi;
  projectId: string;
  round: number;
  author?: string;
  onOpenCluster?: (clusterIndex: number) => void;
  onError?: (error: unknown) => void;
}

export interface ClusterGrid {
  element: HTMLElement;
  /** Re-fetch cluster summaries and re-render; server order is kept as-is. */
  refresh(): Promise<void>;
  selected(): number | null;
  select(clusterIndex: number): void;
  selectOffset(delta: number): void;
  tagSelected(label: Label, note?: string): Promise<void>;
  /** Key bindings (tag labels, movement, open) for `bindHotkeys`. */
  hotkeys(): HotkeyBindings;
  /** Resolves once all in-flight tag/refresh work has finished. */
  settle(): Promise<void>;
}

const SAMPLE_THUMBS = 5;

export function createClusterGrid(options: ClusterGridOptions): ClusterGrid {
  const { api, projectId, round } = options;
  const element = el("section", { class: "cluster-grid", "aria-label": "clusters" });

  let summaries: ClusterSummary[] = [];
  let selectedIndex: number | null = null;
  let pending: Promise<void> = Promise.resolve();

  const fail = (error: unknown) => {
    if (options.onError) {
      options.onError(error);
    } else {
      throw error;
    }
  };

  const chain = (work: () => Promise<void>): Promise<void> => {
    pending = pending.then(work).catch(fail);
    return pending;
  };

  function historyBody(summary: ClusterSummary): HTMLElement {
    const body = el("div", { class: "history-body" }, "…");
    const details = el(
      "details",
      {
        class: "history",
        ontoggle: () => {
          if (!(details as HTMLDetailsElement).open) {
            return;
          }
          api
            .tagHistory(projectId, round, summary.cluster_index)
            .then((history) => {
              clear(body);
              if (history.events.length === 0) {
                body.append(el("p", { class: "history-empty" }, "never tagged"));
                return;
              }
              body.append(
                el(
                  "ol",
                  { class: "history-events" },
                  ...history.events.map((event) =>
                    el(
                      "li",
                      {},
                      `#${event.seq} ${labelDisplay(event.label)}` +
                        (event.author ? ` by ${event.author}` : "") +
                        (event.note ? ` — ${event.note}` : ""),
                    ),
                  ),
                ),
              );
            })
            .catch(fail);
        },
      },
      el("summary", {}, "history"),
      body,
    );
    return details;
  }

  function card(summary: ClusterSummary): HTMLElement {
    const index = summary.cluster_index;
    const node = el(
      "article",
      {
        class: "cluster-card" + (index === selectedIndex ? " selected" : ""),
        tabindex: 0,
        "data-cluster": index,
        "data-label": summary.label,
        "data-size": summary.size_total_images,
        onclick: () => select(index),
      },
      el("img", {
        class: "medoid",
        loading: "lazy",
        src: api.thumbnailUrl(summary.medoid_thumbnail),
        alt: `cluster ${index} medoid`,
      }),
      el(
        "header",
        { class: "card-header" },
        el("span", { class: "card-title" }, `Cluster ${index}`),
        el("span", { class: "card-size" }, `${summary.size_total_images} images`),
        el(
          "span",
          { class: `label-badge label-${summary.label}` },
          labelDisplay(summary.label),
        ),
      ),
      summary.note
        ? el("p", { class: "card-note" }, summary.note)
        : null,
      el(
        "div",
        { class: "samples" },
        ...summary.sample_thumbnails.slice(1, 1 + SAMPLE_THUMBS).map((hash, i) =>
          el("img", {
            class: "sample",
            loading: "lazy",
            src: api.thumbnailUrl(hash),
            alt: `cluster ${index} sample ${i + 1}`,
          }),
        ),
      ),
      el(
        "button",
        {
          class: "open-cluster",
          onclick: (event: Event) => {
            event.stopPropagation();
            select(index);
            options.onOpenCluster?.(index);
          },
        },
        "open",
      ),
      historyBody(summary),
    );
    return node;
  }

  function render(): void {
    clear(element);
    if (summaries.length === 0) {
      element.append(
        el("p", { class: "empty-state" }, "No clusters in this round."),
      );
      return;
    }
    for (const summary of summaries) {
      element.append(card(summary));
    }
  }

  async function load(): Promise<void> {
    const listing = await api.clusters(projectId, round, "size");
    summaries = listing.clusters;
    if (
      selectedIndex !== null &&
      !summaries.some((s) => s.cluster_index === selectedIndex)
    ) {
      selectedIndex = null;
    }
    if (selectedIndex === null && summaries.length > 0) {
      selectedIndex = summaries[0].cluster_index;
    }
    render();
  }

  function select(clusterIndex: number): void {
    selectedIndex = clusterIndex;
    for (const node of element.querySelectorAll(".cluster-card")) {
      node.classList.toggle(
        "selected",
        Number(node.getAttribute("data-cluster")) === clusterIndex,
      );
    }
  }

  function selectOffset(delta: number): void {
    if (summaries.length === 0) {
      return;
    }
    const position = summaries.findIndex(
      (s) => s.cluster_index === selectedIndex,
    );
    const next = Math.min(
      summaries.length - 1,
      Math.max(0, (position === -1 ? 0 : position) + delta),
    );
    select(summaries[next].cluster_index);
  }

  function tagSelected(label: Label, note = ""): Promise<void> {
    return chain(async () => {
      if (selectedIndex === null) {
        return;
      }
      await api.tagCluster(
        projectId,
        round,
        selectedIndex,
        label,
        note,
        options.author ?? "",
      );
      // Never trust local state after a mutation: re-read the server's view.
      await load();
    });
  }

  function hotkeys(): HotkeyBindings {
    const bindings: HotkeyBindings = {
      arrowright: () => selectOffset(1),
      arrowleft: () => selectOffset(-1),
      j: () => selectOffset(1),
      k: () => selectOffset(-1),
      enter: () => {
        if (selectedIndex !== null) {
          options.onOpenCluster?.(selectedIndex);
        }
      },
    };
    for (const entry of LABELS) {
      bindings[entry.hotkey] = () => {
        void tagSelected(entry.value);
      };
    }
    return bindings;
  }

  return {
    element,
    refresh: () => chain(load),
    selected: () => selectedIndex,
    select,
    selectOffset,
    tagSelected,
    hotkeys,
    settle: () => pending,
  };
}
