import { ReviewApi } from "./api.js";
import { clear, el } from "./dom.js";
import { bindHotkeys } from "./hotkeys.js";
import { createClusterDetail } from "./views/clusterDetail.js";
import { createClusterGrid } from "./views/clusterGrid.js";
import { createReportView } from "./views/reportView.js";
import { createSimilarPanel } from "./views/similarPanel.js";

export interface AppOptions {
  api: ReviewApi;
  root: HTMLElement;
  window?: Window;
  author?: string;
}

export interface App {
  render(force?: boolean): Promise<void>;
  navigate(route: Route): Promise<void>;
  dispose(): void;
}

export type Route =
  | { kind: "home" }
  | { kind: "clusters"; projectId: string; round: number }
  | { kind: "cluster"; projectId: string; round: number; clusterIndex: number }
  | { kind: "similar"; projectId: string; round: number; imageId: string }
  | { kind: "report"; projectId: string; round: number };

export function parseRoute(hash: string): Route {
  const parts = hash.replace(/^#\/?/, "").split("/").filter(Boolean);
  if (parts[0] === "p" && parts[1] && parts[2] === "r" && parts[3]) {
    const projectId = decodeURIComponent(parts[1]);
    const round = Number(parts[3]);
    if (Number.isInteger(round) && round >= 1) {
      if (parts.length === 4) {
        return { kind: "clusters", projectId, round };
      }
      if (parts[4] === "c" && parts[5] !== undefined) {
        const clusterIndex = Number(parts[5]);
        if (Number.isInteger(clusterIndex) && clusterIndex >= 0) {
          return { kind: "cluster", projectId, round, clusterIndex };
        }
      }
      if (parts[4] === "similar" && parts[5]) {
        return {
          kind: "similar",
          projectId,
          round,
          imageId: decodeURIComponent(parts[5]),
        };
      }
      if (parts[4] === "report") {
        return { kind: "report", projectId, round };
      }
    }
  }
  return { kind: "home" };
}

export function routeHash(route: Route): string {
  switch (route.kind) {
    case "home":
      return "#/";
    case "clusters":
      return `#/p/${encodeURIComponent(route.projectId)}/r/${route.round}`;
    case "cluster":
      return `#/p/${encodeURIComponent(route.projectId)}/r/${route.round}/c/${route.clusterIndex}`;
    case "similar":
      return `#/p/${encodeURIComponent(route.projectId)}/r/${route.round}/similar/${encodeURIComponent(route.imageId)}`;
    case "report":
      return `#/p/${encodeURIComponent(route.projectId)}/r/${route.round}/report`;
  }
}

export function createApp(options: AppOptions): App {
  const { api, root } = options;
  const win = options.window ?? window;

  const banner = el("div", { class: "banner-slot" });
  const main = el("main", { class: "app-main" });
  clear(root);
  root.append(banner, main);

  let lastRendered: string | null = null;
  let unbindKeys: (() => void) | null = null;

  function showBanner(error: unknown): void {
    clear(banner);
    const message = error instanceof Error ? error.message : String(error);
    banner.append(
      el(
        "div",
        { class: "error-banner", role: "alert" },
        el("span", {}, message),
        el(
          "button",
          { class: "retry", onclick: () => void render(true) },
          "Retry",
        ),
      ),
    );
  }

  function roundNav(projectId: string, round: number, active: "clusters" | "report"): HTMLElement {
    return el(
      "nav",
      { class: "round-nav" },
      el("a", { href: "#/" }, "projects"),
      el(
        "a",
        {
          href: routeHash({ kind: "clusters", projectId, round }),
          class: active === "clusters" ? "active" : "",
        },
        "Clusters",
      ),
      el(
        "a",
        {
          href: routeHash({ kind: "report", projectId, round }),
          class: active === "report" ? "active" : "",
        },
        "Report",
      ),
      el("span", { class: "round-where" }, `${projectId} · round ${round}`),
    );
  }

  async function renderHome(): Promise<void> {
    const projects = await api.listProjects();
    clear(main);
    main.append(el("h1", {}, "Review projects"));
    if (projects.length === 0) {
      main.append(el("p", { class: "empty-state" }, "No projects yet."));
      return;
    }
    for (const project of projects) {
      const rounds = await api.listRounds(project.project_id);
      main.append(
        el(
          "section",
          { class: "project-entry", "data-project": project.project_id },
          el("h2", {}, project.name),
          el("p", { class: "corpus-root" }, project.corpus_root),
          el(
            "ul",
            { class: "round-list" },
            ...rounds.map((meta) =>
              el(
                "li",
                { "data-status": meta.status },
                meta.status === "complete"
                  ? el(
                      "a",
                      {
                        href: routeHash({
                          kind: "clusters",
                          projectId: project.project_id,
                          round: meta.round,
                        }),
                      },
                      `round ${meta.round} · k=${meta.k}`,
                    )
                  : el(
                      "span",
                      {},
                      `round ${meta.round} · ${meta.status}` +
                        (meta.error ? ` (${meta.stage}: ${meta.error})` : ""),
                    ),
              ),
            ),
            rounds.length === 0 ? el("li", { class: "empty-state" }, "no rounds") : null,
          ),
        ),
      );
    }
  }

  async function renderRoute(): Promise<void> {
    const route = parseRoute(win.location.hash);
    if (unbindKeys) {
      unbindKeys();
      unbindKeys = null;
    }
    switch (route.kind) {
      case "home":
        await renderHome();
        return;
      case "clusters": {
        const grid = createClusterGrid({
          api,
          projectId: route.projectId,
          round: route.round,
          author: options.author,
          onOpenCluster: (clusterIndex) =>
            void navigate({ ...route, kind: "cluster", clusterIndex }),
          onError: showBanner,
        });
        clear(main);
        main.append(roundNav(route.projectId, route.round, "clusters"), grid.element);
        unbindKeys = bindHotkeys(grid.hotkeys(), win);
        await grid.refresh();
        return;
      }
      case "cluster": {
        const detail = createClusterDetail({
          api,
          projectId: route.projectId,
          round: route.round,
          clusterIndex: route.clusterIndex,
          onOpenSimilar: (imageId) =>
            void navigate({ ...route, kind: "similar", imageId }),
          onBack: () => void navigate({ ...route, kind: "clusters" }),
          onError: showBanner,
        });
        clear(main);
        main.append(roundNav(route.projectId, route.round, "clusters"), detail.element);
        await detail.refresh();
        return;
      }
      case "similar": {
        const panel = createSimilarPanel({
          api,
          projectId: route.projectId,
          round: route.round,
          onOpenCluster: (clusterIndex) =>
            void navigate({ ...route, kind: "cluster", clusterIndex }),
          onError: showBanner,
        });
        clear(main);
        main.append(roundNav(route.projectId, route.round, "clusters"), panel.element);
        await panel.show(route.imageId);
        return;
      }
      case "report": {
        const view = createReportView({
          api,
          projectId: route.projectId,
          round: route.round,
          onError: showBanner,
        });
        clear(main);
        main.append(roundNav(route.projectId, route.round, "report"), view.element);
        await view.refresh();
        return;
      }
    }
  }

  async function render(force = false): Promise<void> {
    const hash = win.location.hash;
    if (!force && hash === lastRendered) {
      return;
    }
    lastRendered = hash;
    clear(banner);
    try {
      await renderRoute();
    } catch (error) {
      showBanner(error);
    }
  }

  async function navigate(route: Route): Promise<void> {
    win.location.hash = routeHash(route);
    await render();
  }

  const onHashChange = () => void render();
  win.addEventListener("hashchange", onHashChange);

  return {
    render,
    navigate,
    dispose: () => {
      win.removeEventListener("hashchange", onHashChange);
      if (unbindKeys) {
        unbindKeys();
      }
    },
  };
}
