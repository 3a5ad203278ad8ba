import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    // Integration tests boot the real review service on a 2,000-image
    // fixture and wait for the clustering round, hence the generous caps.
    testTimeout: 120_000,
    hookTimeout: 420_000,
  },
});
