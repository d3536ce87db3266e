/*
End-to-end: the real UI (under jsdom) against a real service process
running the deterministic offline stub. The drafts below are pinned:
the stub judge's verdict for each is known in advance, so the flows are
reproducible without a live model.
*/

import {ChildProcess, spawn} from 'node:child_process';
import {mkdtempSync} from 'node:fs';
import {tmpdir} from 'node:os';
import {join} from 'node:path';
import {afterAll, beforeAll, describe, expect, test} from 'vitest';
import {Api, FetchLike} from '../src/api.js';
import {App} from '../src/app.js';

const PORT = 8462;
const BASE = `http://127.0.0.1:${PORT}`;

// Node's own fetch; jsdom does not ship one.
const fetchFn: FetchLike = (input, init) => fetch(input, init);

const S1_PASS = 'Hi Sam,\n\nNo private offices available. That is the policy.\n\nAlex';
const S1_FAIL =
	'Hi Sam,\n\nThanks for asking about the office. Private offices are reserved for senior ' +
	'leadership, so I cannot offer one, but I can set you up with a reservable focus room and ' +
	'a quieter desk near the window. Want to try that for a month and revisit?\n\nBest,\nAlex';

function s4Fail(i: number) {
	return `Hi Adam,\n\nChecking in on the milestone. Variant ${i} here: can you send a short status?\n\nThanks,\nAlex`;
}

let server: ChildProcess;

beforeAll(async () => {
	const store = join(mkdtempSync(join(tmpdir(), 'commgame-ui-')), 'events.jsonl');
	server = spawn('commgame', ['--stub', '--store', store, 'serve', '--port', String(PORT)], {
		stdio: 'ignore',
	});
	await serviceUp();
});

afterAll(() => {
	server.kill();
});

async function serviceUp() {
	for (let i = 0; i < 150; i++) {
		try {
			const r = await fetch(`${BASE}/scenarios`, {headers: {'X-Api-Version': '1'}});
			if (r.ok) {
				return;
			}
		} catch {
			// not listening yet
		}
		await sleep(100);
	}
	throw new Error('service did not come up');
}

function sleep(ms: number) {
	return new Promise((r) => setTimeout(r, ms));
}

async function until<T>(get: () => T | null | undefined, what: string, ms = 15000): Promise<T> {
	const t0 = Date.now();
	for (;;) {
		const v = get();
		if (v) {
			return v;
		}
		if (Date.now() - t0 > ms) {
			throw new Error(`timed out waiting for ${what}`);
		}
		await sleep(20);
	}
}

function newApp() {
	document.body.innerHTML = '<div id="app"></div>';
	const root = document.querySelector('#app') as HTMLElement;
	const app = new App(root, new Api(BASE, fetchFn));
	return {root, app};
}

async function openThread(id: string) {
	const {root, app} = newApp();
	await app.start();
	const row = await until(() => root.querySelector(`.inbox-row[data-scenario="${id}"]`), `inbox row ${id}`);
	(row as HTMLElement).click();
	await until(() => root.querySelector('.composer-draft'), 'composer');
	return {root, app};
}

function setDraft(root: HTMLElement, text: string) {
	const box = root.querySelector('.composer-draft') as HTMLTextAreaElement;
	box.value = text;
	box.dispatchEvent(new Event('input'));
}

function sendButton(root: HTMLElement) {
	return root.querySelector('.composer-send') as HTMLButtonElement;
}

describe('ui against the stub service', () => {
	test('the inbox lists every scenario as a thread', async () => {
		const {root, app} = newApp();
		await app.start();
		const rows = [...root.querySelectorAll('.inbox-row')];
		expect(rows.length).toBe(5);
		const ids = rows.map((r) => (r as HTMLElement).dataset.scenario);
		expect(ids).toContain('s1');
		expect(ids).toContain('s4');
		expect(root.querySelector('.inbox-row[data-scenario="s4"]')?.textContent).toContain('turns');
	});

	test('opening a thread shows the task email and forwarded messages in order', async () => {
		const {root} = await openThread('s2');
		const cards = [...root.querySelectorAll('.email-card')];
		expect(cards.length).toBe(3);
		expect(cards[0].className).toContain('email-task');
		expect(cards[1].className).toContain('email-forwarded');
		expect(cards[2].className).toContain('email-forwarded');
	});

	test('a passing attempt renders the verdict badge and closes the thread', async () => {
		const {root} = await openThread('s1');
		setDraft(root, S1_PASS);
		sendButton(root).click();
		const badge = await until(() => root.querySelector('.verdict-badge'), 'verdict badge');
		expect(badge.className).toContain('verdict-pass');
		expect(badge.textContent).toBe('Passed');
		expect(root.querySelector('.verdict-rationale')?.textContent).toBeTruthy();
		expect(root.querySelector('.composer')).toBeNull();
		expect(root.querySelector('.thread-status')?.textContent).toBe('Session passed.');
		// Every scenario in the shipped bundle hides thought boxes, so none may leak.
		expect(root.querySelector('.thought-box')).toBeNull();
		expect(root.innerHTML).not.toContain('What I really think');
	});

	test('a failed attempt reopens the composer with a retry label', async () => {
		const {root} = await openThread('s1');
		setDraft(root, S1_FAIL);
		sendButton(root).click();
		const badge = await until(() => root.querySelector('.verdict-badge'), 'verdict badge');
		expect(badge.className).toContain('verdict-fail');
		const composer = await until(() => root.querySelector('.composer'), 'reopened composer');
		expect(composer).not.toBeNull();
		expect(sendButton(root).textContent).toBe('Try again');
	});

	test('a failed multi-turn attempt gains a follow-up composer in the same thread', async () => {
		const {root, app} = await openThread('s4');
		setDraft(root, s4Fail(0));
		sendButton(root).click();
		await until(() => root.querySelector('.verdict-badge.verdict-fail'), 'fail badge');
		const composer = await until(() => root.querySelector('.composer'), 'follow-up composer');
		expect(composer).not.toBeNull();
		expect(sendButton(root).textContent).toBe('Follow up');
		// Still the same thread: the task email stays at the top.
		expect(root.querySelector('.email-task')).not.toBeNull();

		setDraft(root, s4Fail(1));
		sendButton(root).click();
		await until(() => root.querySelectorAll('.verdict-badge').length === 2 || null, 'second verdict');
		expect(root.querySelectorAll('.email-player').length).toBe(2);

		const sessionId = app.threads.get('s4')?.session?.session_id as string;
		const view = await new Api(BASE, fetchFn).getSession(sessionId);
		expect(view.turns.length).toBe(2);
		expect(view.status).toBe('open');
	});

	test('a rapid double click submits exactly one turn', async () => {
		const {root, app} = await openThread('s1');
		setDraft(root, S1_FAIL);
		const send = sendButton(root);
		send.click();
		send.click();
		await until(() => root.querySelector('.verdict-badge'), 'verdict badge');
		await sleep(300); // give a stray duplicate time to land if one was sent
		const sessionId = app.threads.get('s1')?.session?.session_id as string;
		const view = await new Api(BASE, fetchFn).getSession(sessionId);
		expect(view.turns.length).toBe(1);
		expect(root.querySelectorAll('.email-player').length).toBe(1);
	});

	test('a blank draft never reaches the server', async () => {
		const {root, app} = await openThread('s3');
		setDraft(root, '   ');
		sendButton(root).click();
		await until(() => root.querySelector('.error-panel'), 'validation message');
		expect(root.querySelector('.error-panel')?.textContent).toContain('empty');
		expect(app.threads.get('s3')?.session).toBeNull();
	});

	test('an unreachable service shows the offline banner instead of crashing', async () => {
		document.body.innerHTML = '<div id="app"></div>';
		const root = document.querySelector('#app') as HTMLElement;
		const app = new App(root, new Api('http://127.0.0.1:9', fetchFn));
		await app.start();
		expect(root.querySelector('.offline-banner')).not.toBeNull();
		expect(root.querySelectorAll('.inbox-row').length).toBe(0);
	});
});
