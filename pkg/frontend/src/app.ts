/*
Top-level application. Fetches the scenario list for the inbox and swaps
in a thread view when one is opened. Rendering is replace-on-change: any
state transition rebuilds the visible view from the live Thread objects,
so the DOM never drifts from the state machine.
*/

import {Api, OfflineError, ScenarioListing} from './api.js';
import {Thread} from './state.js';
import {inboxView, threadView} from './views.js';
import {clear, el} from './dom.js';

export class App {
	scenarios: ScenarioListing[] = [];
	threads = new Map<string, Thread>();
	view: {kind: 'inbox'} | {kind: 'thread'; scenarioId: string} = {kind: 'inbox'};
	offline = false;
	playerTag = 'player';

	constructor(
		private root: HTMLElement,
		private api: Api,
	) {}

	async start() {
		await this.loadInbox();
	}

	async loadInbox() {
		try {
			this.scenarios = await this.api.listScenarios();
			this.offline = false;
		} catch (err) {
			if (!(err instanceof OfflineError)) {
				throw err;
			}
			this.offline = true;
		}
		this.render();
	}

	openThread(scenarioId: string) {
		let thread = this.threads.get(scenarioId);
		if (thread === undefined) {
			const scenario = this.scenarios.find((s) => s.scenario_id === scenarioId);
			if (scenario === undefined) {
				return;
			}
			thread = new Thread(this.api, scenario, () => this.playerTag, () => this.render());
			this.threads.set(scenarioId, thread);
		}
		this.view = {kind: 'thread', scenarioId};
		this.render();
	}

	showInbox() {
		this.view = {kind: 'inbox'};
		this.render();
	}

	render() {
		clear(this.root);
		this.root.append(this.header());
		if (this.offline) {
			this.root.append(
				el(
					'div',
					{class: 'offline-banner'},
					el('span', {}, 'Server unreachable. The inbox could not be loaded.'),
					el('button', {class: 'retry-btn', onclick: () => void this.loadInbox()}, 'Retry'),
				),
			);
		}
		if (this.view.kind === 'inbox') {
			this.root.append(inboxView(this.scenarios, (id) => this.openThread(id)));
		} else {
			const thread = this.threads.get(this.view.scenarioId);
			if (thread !== undefined) {
				this.root.append(threadView(thread, () => this.showInbox()));
			}
		}
	}

	private header() {
		const tag = el('input', {
			class: 'player-tag',
			value: this.playerTag,
			title: 'Player tag recorded with each session',
			oninput: (ev: Event) => {
				this.playerTag = (ev.target as HTMLInputElement).value;
			},
		});
		return el('div', {class: 'topbar'}, el('span', {class: 'brand'}, 'commgame'), tag);
	}
}
