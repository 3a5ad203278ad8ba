import { afterEach, describe, expect, it, vi } from "vitest";

import { ReviewApi } from "../../src/api.js";
import { createApp, parseRoute, routeHash } from "../../src/app.js";
import type { Route } from "../../src/app.js";
import { installFakeService, route } from "./fakeService.js";
import { report, summary } from "./fixtures.js";

afterEach(() => {
  vi.unstubAllGlobals();
  document.body.innerHTML = "";
  window.location.hash = "";
});

describe("route parsing", () => {
  it("round-trips every route kind through its hash", () => {
    const routes: Route[] = [
      { kind: "home" },
      { kind: "clusters", projectId: "p-1", round: 2 },
      { kind: "cluster", projectId: "p-1", round: 2, clusterIndex: 14 },
      { kind: "similar", projectId: "p-1", round: 2, imageId: "img-abc" },
      { kind: "report", projectId: "p-1", round: 2 },
    ];
    for (const r of routes) {
      expect(parseRoute(routeHash(r))).toEqual(r);
    }
  });

  it("falls back to home on junk", () => {
    for (const hash of ["", "#/", "#/x/y", "#/p/p1/r/zero", "#/p/p1/r/1/c/-2"]) {
      expect(parseRoute(hash).kind).toBe("home");
    }
    expect(parseRoute("#/p/p1/r/1/c/2").kind).toBe("cluster");
  });
});

function makeApp() {
  const root = document.createElement("div");
  document.body.append(root);
  const app = createApp({ api: new ReviewApi(), root });
  return { root, app };
}

describe("app shell", () => {
  it("renders the project list at home", async () => {
    const fake = installFakeService([
      route("GET", /^\/api\/projects$/, () => [
        {
          project_id: "p1",
          name: "demo",
          corpus_root: "/corpora/demo",
          created_at: "2026-08-23T00:00:00+00:00",
        },
      ]),
      route("GET", /rounds$/, () => [
        { round: 1, status: "complete", k: 5 },
        { round: 2, status: "failed", stage: "validate", error: "k=999 too big" },
      ]),
    ]);
    const { root, app } = makeApp();
    await app.render();
    expect(root.textContent).toContain("demo");
    const links = root.querySelectorAll(".round-list a");
    expect(links.length).toBe(1); // only the complete round is clickable
    expect(root.textContent).toContain("validate: k=999 too big");
    app.dispose();
    fake.restore();
  });

  it("renders the cluster grid for a round hash", async () => {
    const fake = installFakeService([
      route("GET", /clusters$/, () => ({
        round: 1,
        k: 2,
        clusters: [summary(0, 9), summary(1, 3)],
      })),
    ]);
    window.location.hash = "#/p/p1/r/1";
    const { root, app } = makeApp();
    await app.render();
    expect(root.querySelectorAll(".cluster-card").length).toBe(2);
    expect(root.querySelector(".round-nav")?.textContent).toContain("p1 · round 1");
    app.dispose();
    fake.restore();
  });

  it("renders the report for a report hash", async () => {
    const fake = installFakeService([
      route("GET", /report$/, () =>
        report([{ index: 0, size: 5, label: "untagged" }]),
      ),
    ]);
    window.location.hash = "#/p/p1/r/1/report";
    const { root, app } = makeApp();
    await app.render();
    expect(root.querySelector("table.totals")).not.toBeNull();
    app.dispose();
    fake.restore();
  });

  it("surfaces a dead service as a banner whose retry recovers", async () => {
    let alive = false;
    vi.stubGlobal(
      "fetch",
      vi.fn(async (input: RequestInfo | URL) => {
        if (!alive) {
          throw new TypeError("connection refused");
        }
        const path = new URL(String(input), "http://fake").pathname;
        const body = path.endsWith("/projects") ? [] : {};
        return new Response(JSON.stringify(body), {
          status: 200,
          headers: { "content-type": "application/json" },
        });
      }),
    );
    const { root, app } = makeApp();
    await app.render();
    const bannerText = root.querySelector(".error-banner")?.textContent ?? "";
    expect(bannerText).toContain("unreachable");

    alive = true;
    root.querySelector<HTMLElement>(".error-banner .retry")?.click();
    await vi.waitFor(() => {
      expect(root.querySelector(".error-banner")).toBeNull();
      expect(root.textContent).toContain("No projects yet");
    });
    app.dispose();
  });

  it("re-renders when the hash changes", async () => {
    const fake = installFakeService([
      route("GET", /^\/api\/projects$/, () => []),
      route("GET", /clusters$/, () => ({ round: 1, k: 0, clusters: [] })),
    ]);
    const { root, app } = makeApp();
    await app.render();
    expect(root.textContent).toContain("No projects yet");
    window.location.hash = "#/p/p1/r/1";
    window.dispatchEvent(new HashChangeEvent("hashchange"));
    await vi.waitFor(() => {
      expect(root.textContent).toContain("No clusters in this round");
    });
    app.dispose();
    fake.restore();
  });
});
