import {defineConfig} from 'vitest/config';

export default defineConfig({
	test: {
		environment: 'jsdom',
		// The end-to-end suite spawns the game service as a child process;
		// startup takes a couple of seconds on a cold interpreter.
		testTimeout: 60_000,
		hookTimeout: 60_000,
	},
});
