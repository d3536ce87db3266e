import {describe, expect, test} from 'vitest';
import {Api, ScenarioListing, TurnResult} from '../src/api.js';
import {Thread} from '../src/state.js';
import {inboxView, threadView} from '../src/views.js';

const noApi = null as unknown as Api;

function scenario(overrides: Partial<ScenarioListing> = {}): ScenarioListing {
	return {
		scenario_id: 's2',
		title: 'Scheduling clash',
		task_email: 'Task: sort out the clash.\n\nDetails below.',
		forwarded_emails: ['From: Ana\n\nI need the slot.', 'From: Ben\n\nSo do I.'],
		recipients: ['Ana', 'Ben'],
		multi_turn: false,
		max_turns: 1,
		...overrides,
	};
}

function turn(overrides: Partial<TurnResult> = {}): TurnResult {
	return {
		turn_index: 0,
		player_email: {email_id: 'e1', body: 'My reply.'},
		recipient_replies: [{name: 'Ana', visible_body: 'Fine.'}],
		simulated_outcome: null,
		ending: null,
		verdict: {pass: true, rationale: 'handled well'},
		session_status: 'passed',
		...overrides,
	};
}

function makeThread(sc = scenario()) {
	return new Thread(noApi, sc, () => 'player', () => {});
}

describe('thread view', () => {
	test('lays the scenario out as a thread: task first, forwards in order', () => {
		const root = threadView(makeThread(), () => {});
		const cards = [...root.querySelectorAll('.email-card')];
		expect(cards).toHaveLength(3);
		expect(cards[0].className).toContain('email-task');
		expect(cards[1].className).toContain('email-forwarded');
		expect(cards[2].className).toContain('email-forwarded');
		expect(cards[1].textContent).toContain('Ana');
		expect(cards[2].textContent).toContain('Ben');
	});

	test('hidden thought boxes never reach the DOM', () => {
		const t = makeThread();
		t.turns.push(turn());
		t.phase = 'closed';
		const root = threadView(t, () => {});
		expect(root.querySelector('.thought-box')).toBeNull();
		expect(root.querySelectorAll('.email-reply')).toHaveLength(1);
	});

	test('revealed thought boxes render inside the reply in their own style', () => {
		const t = makeThread();
		t.turns.push(
			turn({
				recipient_replies: [{name: 'Ana', visible_body: 'Fine.', thought_box: 'this is the third time'}],
			}),
		);
		const root = threadView(t, () => {});
		const box = root.querySelector('.email-reply .thought-box');
		expect(box).not.toBeNull();
		expect(box?.textContent).toContain('this is the third time');
		expect(box?.textContent).toContain('Inner thoughts');
	});

	test('the verdict badge reflects pass and fail with the rationale', () => {
		const t = makeThread();
		t.turns.push(turn());
		const root = threadView(t, () => {});
		const badge = root.querySelector('.verdict-badge');
		expect(badge?.className).toContain('verdict-pass');
		expect(badge?.textContent).toBe('Passed');
		expect(root.querySelector('.verdict-rationale')?.textContent).toBe('handled well');

		const f = makeThread();
		f.turns.push(turn({verdict: {pass: false, rationale: 'too curt'}, session_status: 'open'}));
		const froot = threadView(f, () => {});
		expect(froot.querySelector('.verdict-badge')?.className).toContain('verdict-fail');
		expect(froot.querySelector('.verdict-badge')?.textContent).toBe('Failed');
	});

	test('the outcome card appears only when the server sent one', () => {
		const bare = makeThread();
		bare.turns.push(turn());
		expect(threadView(bare, () => {}).querySelector('.outcome-card')).toBeNull();

		const t = makeThread();
		t.turns.push(turn({simulated_outcome: 'The week went fine.', ending: 'quiet'}));
		const card = threadView(t, () => {}).querySelector('.outcome-card');
		expect(card?.textContent).toContain('The week went fine.');
		expect(card?.textContent).toContain('quiet');
	});

	test('the composer disappears once the session closes', () => {
		const t = makeThread();
		t.turns.push(turn());
		t.session = {
			session_id: 'x',
			scenario_id: 's2',
			player_tag: 'player',
			status: 'passed',
			max_turns: 1,
			multi_turn: false,
		};
		t.phase = 'closed';
		const root = threadView(t, () => {});
		expect(root.querySelector('.composer')).toBeNull();
		expect(root.querySelector('.thread-status')?.textContent).toBe('Session passed.');
	});

	test('waiting disables the send control', () => {
		const t = makeThread();
		t.phase = 'waiting';
		const root = threadView(t, () => {});
		const send = root.querySelector('.composer-send') as HTMLButtonElement;
		expect(send.disabled).toBe(true);
		expect(send.textContent).toContain('Sending');
		expect((root.querySelector('.composer-draft') as HTMLTextAreaElement).disabled).toBe(true);
	});

	test('an offline error shows the banner with a retry control', () => {
		const t = makeThread();
		t.error = {kind: 'offline', message: 'cannot reach server'};
		const root = threadView(t, () => {});
		expect(root.querySelector('.offline-banner')).not.toBeNull();
		expect(root.querySelector('.offline-banner .retry-btn')).not.toBeNull();
	});

	test('a validation error renders without a retry control', () => {
		const t = makeThread();
		t.error = {kind: 'validation', message: 'The draft is empty.'};
		const root = threadView(t, () => {});
		const panel = root.querySelector('.error-panel');
		expect(panel?.textContent).toContain('draft is empty');
		expect(panel?.querySelector('.retry-btn')).toBeNull();
	});
});

describe('inbox view', () => {
	test('lists scenarios as threads with recipients and a snippet', () => {
		const root = inboxView(
			[scenario(), scenario({scenario_id: 's4', title: 'Silent milestone', multi_turn: true, max_turns: 8})],
			() => {},
		);
		const rows = [...root.querySelectorAll('.inbox-row')];
		expect(rows).toHaveLength(2);
		expect(rows[0].textContent).toContain('Scheduling clash');
		expect(rows[0].textContent).toContain('Ana, Ben');
		expect(rows[0].textContent).toContain('Task: sort out the clash.');
		expect(rows[1].textContent).toContain('up to 8 turns');
	});

	test('clicking a row opens that scenario', () => {
		let opened = '';
		const root = inboxView([scenario()], (id) => {
			opened = id;
		});
		(root.querySelector('.inbox-row') as HTMLElement).click();
		expect(opened).toBe('s2');
	});
});
