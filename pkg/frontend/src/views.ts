/*
View builders. Each returns a root element built purely from data the API
sent; nothing is invented client-side. A thread lays out like an email
client: the task email first, forwarded messages beneath it in their
original order, then one group of cards per played turn (the player's
email, each recipient reply, the simulated outcome when the scenario has
one, and the verdict).
*/

import {ScenarioListing, TurnView} from './api.js';
import {Thread} from './state.js';
import {el} from './dom.js';

export function inboxView(scenarios: ScenarioListing[], open: (scenarioId: string) => void) {
	const rows = scenarios.map((s) =>
		el(
			'div',
			{class: 'inbox-row', dataset: {scenario: s.scenario_id}, onclick: () => open(s.scenario_id)},
			el('div', {class: 'inbox-title'}, s.title),
			el(
				'div',
				{class: 'inbox-meta'},
				s.recipients.join(', ') + (s.multi_turn ? ` · up to ${s.max_turns} turns` : ''),
			),
			el('div', {class: 'inbox-snippet'}, firstLine(s.task_email)),
		),
	);
	return el('div', {class: 'inbox'}, ...rows);
}

function firstLine(text: string) {
	const line = text.split('\n').find((l) => l.trim());
	return line ? line.trim() : '';
}

function emailCard(label: string, body: string, cls: string) {
	return el(
		'div',
		{class: `email-card ${cls}`},
		el('div', {class: 'email-from'}, label),
		el('div', {class: 'email-body'}, body),
	);
}

function turnCards(turn: TurnView): HTMLElement[] {
	const cards = [emailCard('You', turn.player_email.body, 'email-player')];
	for (const reply of turn.recipient_replies) {
		const card = emailCard(reply.name, reply.visible_body, 'email-reply');
		if (reply.thought_box !== undefined) {
			// Post-verdict reveal: what the character kept out of the reply.
			card.append(
				el(
					'div',
					{class: 'thought-box'},
					el('div', {class: 'thought-box-label'}, 'Inner thoughts'),
					el('div', {class: 'thought-box-body'}, reply.thought_box),
				),
			);
		}
		cards.push(card);
	}
	if (turn.simulated_outcome !== null) {
		cards.push(
			el(
				'div',
				{class: 'outcome-card'},
				el('div', {class: 'outcome-label'}, turn.ending !== null ? `Outcome (${turn.ending})` : 'Outcome'),
				el('div', {class: 'outcome-body'}, turn.simulated_outcome),
			),
		);
	}
	const passed = turn.verdict.pass;
	cards.push(
		el(
			'div',
			{class: 'verdict'},
			el('span', {class: `verdict-badge ${passed ? 'verdict-pass' : 'verdict-fail'}`}, passed ? 'Passed' : 'Failed'),
			el('span', {class: 'verdict-rationale'}, turn.verdict.rationale),
		),
	);
	return cards;
}

export function threadView(thread: Thread, back: () => void) {
	const root = el('div', {class: 'thread'});
	root.append(
		el(
			'div',
			{class: 'thread-bar'},
			el('button', {class: 'back-btn', onclick: back}, '← Inbox'),
			el('span', {class: 'thread-title'}, thread.scenario.title),
		),
	);
	root.append(emailCard('Task', thread.scenario.task_email, 'email-task'));
	for (const fwd of thread.scenario.forwarded_emails) {
		root.append(emailCard('Forwarded message', fwd, 'email-forwarded'));
	}
	for (const turn of thread.turns) {
		for (const card of turnCards(turn)) {
			root.append(card);
		}
	}
	if (thread.error !== null) {
		root.append(errorPanel(thread));
	}
	if (thread.phase === 'closed' && thread.session !== null) {
		root.append(
			el(
				'div',
				{class: `thread-status status-${thread.session.status}`},
				thread.session.status === 'passed' ? 'Session passed.' : 'Session failed.',
			),
		);
	}
	if (thread.composerOpen || thread.phase === 'waiting') {
		root.append(composer(thread));
	}
	return root;
}

function composer(thread: Thread) {
	const waiting = thread.phase === 'waiting';
	const box = el('textarea', {
		class: 'composer-draft',
		placeholder: 'Write your reply',
		value: thread.draft,
		disabled: waiting,
		oninput: (ev: Event) => {
			thread.draft = (ev.target as HTMLTextAreaElement).value;
		},
	});
	const send = el(
		'button',
		{class: 'composer-send', disabled: waiting, onclick: () => void thread.send()},
		waiting ? 'Sending…' : thread.sendLabel,
	);
	return el('div', {class: 'composer'}, box, el('div', {class: 'composer-actions'}, send));
}

function errorPanel(thread: Thread) {
	const error = thread.error as NonNullable<Thread['error']>;
	if (error.kind === 'offline') {
		return el(
			'div',
			{class: 'offline-banner'},
			el('span', {}, 'Server unreachable. The draft was kept; retry when the service is back.'),
			el('button', {class: 'retry-btn', onclick: () => void thread.send()}, 'Retry'),
		);
	}
	const panel = el('div', {class: 'error-panel'}, el('span', {}, error.message));
	if (error.kind === 'api') {
		panel.append(el('button', {class: 'retry-btn', onclick: () => void thread.send()}, 'Retry'));
	}
	return panel;
}
