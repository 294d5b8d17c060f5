import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globals: true,
    include: ["test/**/*.test.ts"],
    // the live-service test trains a small model before serving
    testTimeout: 120_000,
    hookTimeout: 300_000,
  },
});
