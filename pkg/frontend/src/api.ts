/*
Typed client for the game service HTTP API.

Every request carries the X-Api-Version header (the server rejects
requests without it). Failures split into two kinds so the UI can react
differently: transport problems (server down, connection refused) become
OfflineError and drive the offline banner; HTTP error responses become
ApiError carrying the server's {code, message} payload.

The fetch function is injected so tests can run the client against a
recorded transport or against Node's fetch without a browser.
*/

export interface ScenarioListing {
	scenario_id: string;
	title: string;
	task_email: string;
	forwarded_emails: string[];
	recipients: string[];
	multi_turn: boolean;
	max_turns: number;
}

export type SessionStatus = 'open' | 'passed' | 'failed';

export interface SessionSummary {
	session_id: string;
	scenario_id: string;
	player_tag: string;
	status: SessionStatus;
	max_turns: number;
	multi_turn: boolean;
}

export interface RecipientReply {
	name: string;
	visible_body: string;
	// Only present when the scenario reveals thought boxes post-verdict.
	thought_box?: string;
}

export interface Verdict {
	pass: boolean;
	rationale: string;
}

export interface TurnView {
	turn_index: number;
	player_email: {email_id: string; body: string};
	recipient_replies: RecipientReply[];
	simulated_outcome: string | null;
	ending: string | null;
	verdict: Verdict;
}

// Returned from a submit; the session view embeds plain TurnViews instead.
export interface TurnResult extends TurnView {
	session_status: SessionStatus;
}

export interface SessionView {
	session_id: string;
	scenario_id: string;
	player_kind: string;
	status: SessionStatus;
	created_at: number;
	multi_turn: boolean;
	max_turns: number;
	turns: TurnView[];
	player_tag: string | null;
}

export class ApiError extends Error {
	constructor(
		readonly status: number,
		readonly code: string,
		message: string,
	) {
		super(message);
		this.name = 'ApiError';
	}
}

export class OfflineError extends Error {
	constructor(message: string) {
		super(message);
		this.name = 'OfflineError';
	}
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Api {
	constructor(
		private baseUrl: string,
		private fetchFn: FetchLike,
	) {}

	private async request(method: string, path: string, body?: unknown): Promise<unknown> {
		const headers: {[name: string]: string} = {'X-Api-Version': '1'};
		const init: RequestInit = {method, headers};
		if (body !== undefined) {
			headers['Content-Type'] = 'application/json';
			init.body = JSON.stringify(body);
		}
		let resp: Response;
		try {
			resp = await this.fetchFn(this.baseUrl + path, init);
		} catch (err) {
			throw new OfflineError(`cannot reach server: ${err}`);
		}
		if (!resp.ok) {
			let code = 'http_error';
			let message = `${resp.status} ${resp.statusText}`;
			try {
				const payload = (await resp.json()) as {code?: unknown; message?: unknown};
				if (typeof payload.code === 'string') {
					code = payload.code;
					message = typeof payload.message === 'string' ? payload.message : message;
				}
			} catch {
				// non-JSON error body; keep the status line
			}
			throw new ApiError(resp.status, code, message);
		}
		return await resp.json();
	}

	async listScenarios(): Promise<ScenarioListing[]> {
		const payload = (await this.request('GET', '/scenarios')) as {scenarios: ScenarioListing[]};
		return payload.scenarios;
	}

	async startSession(scenarioId: string, playerTag: string): Promise<SessionSummary> {
		const body = {scenario_id: scenarioId, player_tag: playerTag};
		return (await this.request('POST', '/sessions', body)) as SessionSummary;
	}

	async submitEmail(sessionId: string, body: string): Promise<TurnResult> {
		return (await this.request('POST', `/sessions/${sessionId}/emails`, {body})) as TurnResult;
	}

	async getSession(sessionId: string): Promise<SessionView> {
		return (await this.request('GET', `/sessions/${sessionId}`)) as SessionView;
	}
}
