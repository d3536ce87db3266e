/*
Per-thread session state. One machine per opened scenario:

  composing -> waiting -> reviewing -> (composing again | closed)

composing  a draft can be edited and sent
waiting    a turn is in flight; send() refuses re-entry, which is what
           makes a rapid double click submit exactly one turn
reviewing  the latest verdict is on screen; while the session is still
           open the composer stays available for another attempt
closed     the session reached a final status, no more sends

The session itself is created lazily on the first send, so browsing a
thread never persists anything server-side.
*/

import {Api, ApiError, OfflineError, ScenarioListing, SessionSummary, TurnResult} from './api.js';

export type Phase = 'composing' | 'waiting' | 'reviewing' | 'closed';

export interface ThreadError {
	kind: 'offline' | 'api' | 'validation';
	message: string;
}

export class Thread {
	phase: Phase = 'composing';
	session: SessionSummary | null = null;
	turns: TurnResult[] = [];
	error: ThreadError | null = null;
	draft = '';

	constructor(
		private api: Api,
		readonly scenario: ScenarioListing,
		private playerTag: () => string,
		private changed: () => void,
	) {}

	get sessionOpen(): boolean {
		return this.session === null || this.session.status === 'open';
	}

	// True whenever the composer should accept edits and a send.
	get composerOpen(): boolean {
		return this.phase === 'composing' || (this.phase === 'reviewing' && this.sessionOpen);
	}

	// Send-button label; after a failed attempt it names the retry action.
	get sendLabel(): string {
		if (this.turns.length === 0) {
			return 'Send';
		}
		return this.scenario.multi_turn ? 'Follow up' : 'Try again';
	}

	async send(): Promise<boolean> {
		if (this.phase === 'waiting' || this.phase === 'closed') {
			return false;
		}
		if (!this.draft.trim()) {
			// Blocked client-side; the server never sees a blank draft.
			this.error = {kind: 'validation', message: 'The draft is empty. Write a reply before sending.'};
			this.changed();
			return false;
		}
		this.phase = 'waiting';
		this.error = null;
		this.changed();
		try {
			if (!this.session) {
				this.session = await this.api.startSession(this.scenario.scenario_id, this.playerTag());
			}
			const turn = await this.api.submitEmail(this.session.session_id, this.draft);
			this.turns.push(turn);
			this.session.status = turn.session_status;
			this.draft = '';
			this.phase = turn.session_status === 'open' ? 'reviewing' : 'closed';
		} catch (err) {
			// The draft is kept so the player can retry after the failure.
			this.phase = this.turns.length === 0 ? 'composing' : 'reviewing';
			if (err instanceof OfflineError) {
				this.error = {kind: 'offline', message: err.message};
			} else if (err instanceof ApiError) {
				this.error = {kind: 'api', message: `${err.code}: ${err.message}`};
			} else {
				throw err;
			}
		}
		this.changed();
		return true;
	}
}
