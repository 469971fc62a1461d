import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'jsdom',
    globalSetup: ['./test/global-setup.ts'],
    testTimeout: 15000,
    hookTimeout: 120000,
  },
});
