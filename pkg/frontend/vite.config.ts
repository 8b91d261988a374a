import { defineConfig } from "vitest/config";

export default defineConfig({
  // served by the session service under /console
  base: "/console/",
  build: { outDir: "dist" },
  test: {
    environment: "jsdom",
    testTimeout: 120000,
    hookTimeout: 120000,
  },
});
