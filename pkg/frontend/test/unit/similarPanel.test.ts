import { afterEach, describe, expect, it, vi } from "vitest";

import { ReviewApi } from "../../src/api.js";
import { createSimilarPanel } from "../../src/views/similarPanel.js";
import { installFakeService, route } from "./fakeService.js";
import { neighbor } from "./fixtures.js";

afterEach(() => {
  vi.unstubAllGlobals();
  document.body.innerHTML = "";
});

function makePanel(overrides: Record<string, unknown> = {}) {
  const panel = createSimilarPanel({
    api: new ReviewApi(),
    projectId: "p1",
    round: 1,
    ...overrides,
  });
  document.body.append(panel.element);
  return panel;
}

describe("similar panel", () => {
  it("renders neighbors in exactly the served order, ties included", async () => {
    // Deliberately not sorted by anything the client could recompute:
    // equal distances must keep their server-side order.
    const served = [
      neighbor("img-b", 0.0),
      neighbor("img-a", 0.25),
      neighbor("img-z", 0.25),
      neighbor("img-m", 0.7),
    ];
    const fake = installFakeService([
      route("GET", /similar/, () => ({ query: "img-q", k: 4, neighbors: served })),
    ]);
    const panel = makePanel({ k: 4 });
    await panel.show("img-q");
    const order = [...panel.element.querySelectorAll("[data-image-id]")].map(
      (node) => node.getAttribute("data-image-id"),
    );
    expect(order).toEqual(["img-b", "img-a", "img-z", "img-m"]);
    fake.restore();
  });

  it("asks for 50 neighbors unless told otherwise", async () => {
    const fake = installFakeService([
      route("GET", /similar/, (url) => ({
        query: "img-q",
        k: Number(url.searchParams.get("k")),
        neighbors: [],
      })),
    ]);
    const panel = makePanel();
    await panel.show("img-q");
    expect(fake.calls[0].url).toContain("k=50");
    fake.restore();
  });

  it("shows a duplicate sibling at distance 0.000", async () => {
    const fake = installFakeService([
      route("GET", /similar/, () => ({
        query: "img-q",
        k: 1,
        neighbors: [neighbor("img-twin", 0.0)],
      })),
    ]);
    const panel = makePanel({ k: 1 });
    await panel.show("img-q");
    expect(
      panel.element.querySelector(".similar-distance")?.textContent,
    ).toBe("0.000");
    fake.restore();
  });

  it("clicking a neighbor's cluster chip navigates to that cluster", async () => {
    const fake = installFakeService([
      route("GET", /similar/, () => ({
        query: "img-q",
        k: 1,
        neighbors: [neighbor("img-n", 0.4, 17, "responsive")],
      })),
    ]);
    const opened: number[] = [];
    const panel = makePanel({ k: 1, onOpenCluster: (i: number) => opened.push(i) });
    await panel.show("img-q");
    const chip = panel.element.querySelector<HTMLElement>(".cluster-chip");
    expect(chip?.textContent).toContain("Cluster 17");
    expect(chip?.textContent).toContain("Responsive");
    chip?.click();
    expect(opened).toEqual([17]);
    fake.restore();
  });

  it("renders an inline not-found message for an unknown image", async () => {
    const fake = installFakeService([
      route("GET", /similar/, () => ({
        status: 404,
        body: { code: "unknown_image", message: "no such image" },
      })),
    ]);
    const errors: unknown[] = [];
    const panel = makePanel({ onError: (e: unknown) => errors.push(e) });
    await panel.show("img-missing");
    expect(panel.element.querySelector(".not-found")?.textContent).toContain(
      "img-missing",
    );
    expect(errors).toHaveLength(0); // local condition, no banner
    fake.restore();
  });

  it("treats service failures as errors, not not-found", async () => {
    const fake = installFakeService([
      route("GET", /similar/, () => ({
        status: 500,
        body: { code: "boom", message: "exploded" },
      })),
    ]);
    const errors: unknown[] = [];
    const panel = makePanel({ onError: (e: unknown) => errors.push(e) });
    await panel.show("img-q");
    expect(errors).toHaveLength(1);
    expect(panel.element.querySelector(".not-found")).toBeNull();
    fake.restore();
  });
});
