/// <reference types="vitest/config" />
import { defineConfig } from "vite";

// The dev server proxies /api to a running annotation service so the client
// can use same-origin requests. Point AFKIT_API somewhere else if the service
// is not on its default port.
export default defineConfig({
  server: {
    proxy: {
      "/api": {
        target: process.env.AFKIT_API ?? "http://127.0.0.1:8000",
        changeOrigin: true,
      },
    },
  },
  test: {
    environment: "jsdom",
    testTimeout: 120000,
    hookTimeout: 120000,
  },
});
