/*
Tiny DOM helpers. There is no framework here: views construct elements
directly and hand back their root node. The attrs object sets element
properties by name; "class" maps to className, "dataset" entries are
copied over, and "onclick"-style keys register event listeners.
*/

export type Child = Node | string;

export function el<K extends keyof HTMLElementTagNameMap>(
	tag: K,
	attrs: {[name: string]: unknown} = {},
	...children: Child[]
): HTMLElementTagNameMap[K] {
	const e = document.createElement(tag);
	for (const [name, value] of Object.entries(attrs)) {
		if (name === 'class') {
			e.className = value as string;
		} else if (name === 'dataset') {
			Object.assign(e.dataset, value);
		} else if (name.startsWith('on') && typeof value === 'function') {
			e.addEventListener(name.slice(2), value as EventListener);
		} else {
			(e as unknown as {[name: string]: unknown})[name] = value;
		}
	}
	for (const c of children) {
		e.append(c);
	}
	return e;
}

export function clear(e: HTMLElement): HTMLElement {
	while (e.firstChild) {
		e.removeChild(e.firstChild);
	}
	return e;
}
