import { ApiError, ReviewApi } from "../api.js";
import { clear, el, formatDistance } from "../dom.js";
import { labelDisplay } from "../labels.js";

export interface SimilarPanelOptions {
  api: ReviewApi;
  projectId: string;
  round: number;
  k?: number;
  onOpenCluster?: (clusterIndex: number) => void;
  onError?: (error: unknown) => void;
}

export interface SimilarPanel {
  element: HTMLElement;
  /** Fetch and render the neighbors of `imageId`, in the order served. */
  show(imageId: string): Promise<void>;
}

export function createSimilarPanel(options: SimilarPanelOptions): SimilarPanel {
  const { api, projectId, round } = options;
  const k = options.k ?? 50;
  const element = el("aside", { class: "similar-panel", "aria-label": "similar images" });

  async function show(imageId: string): Promise<void> {
    clear(element);
    element.append(el("p", { class: "loading" }, "searching…"));
    let response;
    try {
      response = await api.similar(projectId, round, imageId, k);
    } catch (error) {
      clear(element);
      if (
        error instanceof ApiError &&
        (error.code === "unknown_image" || error.code === "not_in_round")
      ) {
        // Bad image id is a local condition, not a service outage.
        element.append(
          el("p", { class: "not-found" }, `No such image in this round: ${imageId}`),
        );
        return;
      }
      options.onError?.(error);
      if (!options.onError) {
        throw error;
      }
      return;
    }
    clear(element);
    element.append(
      el("h2", {}, `Similar to ${response.query}`),
      el(
        "ol",
        { class: "similar-list" },
        // The server returns neighbors nearest-first; render exactly that
        // order, never re-sorting client-side.
        ...response.neighbors.map((neighbor) =>
          el(
            "li",
            { class: "similar-item", "data-image-id": neighbor.image_id },
            el("img", {
              class: "similar-thumb",
              loading: "lazy",
              src: api.thumbnailUrl(neighbor.thumbnail),
              alt: neighbor.path,
            }),
            el("span", { class: "similar-distance" }, formatDistance(neighbor.distance)),
            el(
              "button",
              {
                class: `cluster-chip label-${neighbor.cluster_label}`,
                title: neighbor.path,
                onclick: () => options.onOpenCluster?.(neighbor.cluster_index),
              },
              `Cluster ${neighbor.cluster_index} · ${labelDisplay(neighbor.cluster_label)}`,
            ),
          ),
        ),
      ),
    );
  }

  return { element, show };
}
