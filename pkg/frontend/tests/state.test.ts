import {describe, expect, test} from 'vitest';
import {Api, ApiError, OfflineError, ScenarioListing, SessionSummary, TurnResult} from '../src/api.js';
import {Thread} from '../src/state.js';

function scenario(overrides: Partial<ScenarioListing> = {}): ScenarioListing {
	return {
		scenario_id: 's1',
		title: 'Office request',
		task_email: 'Handle this.',
		forwarded_emails: [],
		recipients: ['Sam'],
		multi_turn: false,
		max_turns: 1,
		...overrides,
	};
}

function summary(overrides: Partial<SessionSummary> = {}): SessionSummary {
	return {
		session_id: 'sess-1',
		scenario_id: 's1',
		player_tag: 'player',
		status: 'open',
		max_turns: 1,
		multi_turn: false,
		...overrides,
	};
}

function turn(pass: boolean, status: TurnResult['session_status']): TurnResult {
	return {
		turn_index: 0,
		player_email: {email_id: 'e1', body: 'hi'},
		recipient_replies: [{name: 'Sam', visible_body: 'ok'}],
		simulated_outcome: null,
		ending: null,
		verdict: {pass, rationale: pass ? 'fine' : 'not fine'},
		session_status: status,
	};
}

interface FakeApi {
	api: Api;
	startCalls: number;
	submitCalls: number;
}

// Minimal Api double; only the two methods Thread uses are live.
function fakeApi(submit: (body: string) => Promise<TurnResult>): FakeApi {
	const holder: FakeApi = {api: null as unknown as Api, startCalls: 0, submitCalls: 0};
	holder.api = {
		startSession: async () => {
			holder.startCalls++;
			return summary();
		},
		submitEmail: async (_sessionId: string, body: string) => {
			holder.submitCalls++;
			return await submit(body);
		},
	} as unknown as Api;
	return holder;
}

function deferred<T>() {
	let resolve!: (v: T) => void;
	let reject!: (e: unknown) => void;
	const promise = new Promise<T>((res, rej) => {
		resolve = res;
		reject = rej;
	});
	return {promise, resolve, reject};
}

function thread(api: Api, sc = scenario()) {
	return new Thread(api, sc, () => 'player', () => {});
}

describe('thread state machine', () => {
	test('a second send while one is in flight is refused', async () => {
		const gate = deferred<TurnResult>();
		const fake = fakeApi(() => gate.promise);
		const t = thread(fake.api);
		t.draft = 'first';
		const first = t.send();
		expect(t.phase).toBe('waiting');
		const second = await t.send();
		expect(second).toBe(false);
		gate.resolve(turn(true, 'passed'));
		expect(await first).toBe(true);
		expect(fake.submitCalls).toBe(1);
		expect(t.turns).toHaveLength(1);
		expect(t.phase).toBe('closed');
	});

	test('a blank draft is blocked before any request', async () => {
		const fake = fakeApi(async () => turn(true, 'passed'));
		const t = thread(fake.api);
		t.draft = '   \n\t';
		expect(await t.send()).toBe(false);
		expect(fake.startCalls).toBe(0);
		expect(fake.submitCalls).toBe(0);
		expect(t.error?.kind).toBe('validation');
		expect(t.phase).toBe('composing');
	});

	test('a failed attempt in an open session reopens the composer', async () => {
		const fake = fakeApi(async () => turn(false, 'open'));
		const t = thread(fake.api);
		t.draft = 'too blunt';
		await t.send();
		expect(t.phase).toBe('reviewing');
		expect(t.composerOpen).toBe(true);
		expect(t.sendLabel).toBe('Try again');
	});

	test('multi-turn scenarios label the retry as a follow-up', async () => {
		const fake = fakeApi(async () => turn(false, 'open'));
		const t = thread(fake.api, scenario({scenario_id: 's4', multi_turn: true, max_turns: 8}));
		t.draft = 'checking in';
		await t.send();
		expect(t.sendLabel).toBe('Follow up');
		expect(t.composerOpen).toBe(true);
	});

	test('a final status closes the thread', async () => {
		const fake = fakeApi(async () => turn(false, 'failed'));
		const t = thread(fake.api);
		t.draft = 'last chance';
		await t.send();
		expect(t.phase).toBe('closed');
		expect(t.composerOpen).toBe(false);
		expect(await t.send()).toBe(false);
		expect(fake.submitCalls).toBe(1);
	});

	test('the session is created once and reused across attempts', async () => {
		const fake = fakeApi(async () => turn(false, 'open'));
		const t = thread(fake.api);
		t.draft = 'one';
		await t.send();
		t.draft = 'two';
		await t.send();
		expect(fake.startCalls).toBe(1);
		expect(fake.submitCalls).toBe(2);
		expect(t.turns).toHaveLength(2);
	});

	test('a transport failure keeps the draft and reports offline', async () => {
		const fake = fakeApi(async () => {
			throw new OfflineError('cannot reach server');
		});
		const t = thread(fake.api);
		t.draft = 'precious words';
		await t.send();
		expect(t.error?.kind).toBe('offline');
		expect(t.draft).toBe('precious words');
		expect(t.phase).toBe('composing');
	});

	test('server errors surface with the api code and allow retry', async () => {
		let calls = 0;
		const fake = fakeApi(async () => {
			calls++;
			if (calls === 1) {
				throw new ApiError(502, 'upstream_llm_error', 'language-model call failed');
			}
			return turn(true, 'passed');
		});
		const t = thread(fake.api);
		t.draft = 'hello';
		await t.send();
		expect(t.error?.kind).toBe('api');
		expect(t.error?.message).toContain('upstream_llm_error');
		expect(t.draft).toBe('hello');
		await t.send();
		expect(t.phase).toBe('closed');
		expect(t.error).toBeNull();
	});
});
