import {Api} from './api.js';
import {App} from './app.js';

// The static page can be served from anywhere; ?api=<url> points it at
// the game service when the two are not behind the same origin.
const base = new URLSearchParams(window.location.search).get('api') ?? '';
const root = document.querySelector('#app') as HTMLElement;
void new App(root, new Api(base, (input, init) => window.fetch(input, init))).start();
