import { ReviewApi } from "../api.js";
import { clear, el, formatDistance } from "../dom.js";
import { labelDisplay } from "../labels.js";

export interface ClusterDetailOptions {
  api: ReviewApi;
  projectId: string;
  round: number;
  clusterIndex: number;
  pageSize?: number;
  onOpenSimilar?: (imageId: string) => void;
  onBack?: () => void;
  onError?: (error: unknown) => void;
}

export interface ClusterDetail {
  element: HTMLElement;
  refresh(): Promise<void>;
  page(): number;
  nextPage(): Promise<void>;
  prevPage(): Promise<void>;
}

export function createClusterDetail(options: ClusterDetailOptions): ClusterDetail {
  const { api, projectId, round, clusterIndex } = options;
  const pageSize = options.pageSize ?? 50;
  const element = el("section", {
    class: "cluster-detail",
    "data-cluster": clusterIndex,
  });
  let currentPage = 0;

  async function load(): Promise<void> {
    let body;
    try {
      body = await api.clusterImages(
        projectId,
        round,
        clusterIndex,
        currentPage * pageSize,
        pageSize,
      );
    } catch (error) {
      options.onError?.(error);
      if (!options.onError) {
        throw error;
      }
      return;
    }
    const pages = Math.max(1, Math.ceil(body.total_images / pageSize));
    clear(element);
    element.append(
      el(
        "header",
        { class: "detail-header" },
        options.onBack
          ? el("button", { class: "back", onclick: () => options.onBack?.() }, "back")
          : null,
        el("h2", {}, `Cluster ${clusterIndex}`),
        el(
          "span",
          { class: `label-badge label-${body.label}` },
          labelDisplay(body.label),
        ),
        body.note ? el("p", { class: "card-note" }, body.note) : null,
        el("span", { class: "detail-count" }, `${body.total_images} images`),
      ),
      el(
        "div",
        { class: "image-grid" },
        ...body.images.map((image) =>
          el(
            "figure",
            { class: "image-tile", "data-image-id": image.image_id },
            el("img", {
              loading: "lazy",
              src: api.thumbnailUrl(image.thumbnail),
              alt: image.path,
              title: `${image.path} (distance ${formatDistance(image.distance)})`,
              onclick: () => options.onOpenSimilar?.(image.image_id),
            }),
            el(
              "figcaption",
              {},
              image.representative ? "• " : "",
              formatDistance(image.distance),
            ),
          ),
        ),
      ),
      el(
        "nav",
        { class: "pager" },
        el(
          "button",
          { class: "pager-prev", disabled: currentPage === 0, onclick: () => void prevPage() },
          "prev",
        ),
        el("span", { class: "pager-where" }, `page ${currentPage + 1} of ${pages}`),
        el(
          "button",
          {
            class: "pager-next",
            disabled: currentPage + 1 >= pages,
            onclick: () => void nextPage(),
          },
          "next",
        ),
      ),
    );
  }

  async function nextPage(): Promise<void> {
    currentPage += 1;
    await load();
  }

  async function prevPage(): Promise<void> {
    currentPage = Math.max(0, currentPage - 1);
    await load();
  }

  return {
    element,
    refresh: load,
    page: () => currentPage,
    nextPage,
    prevPage,
  };
}
