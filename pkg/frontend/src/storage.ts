/**
 * Session persistence. The browser passes window.localStorage; tests pass
 * a plain Map-backed stub. Only the durable parts of a project are saved —
 * undo history and hover state are session-local by design.
 */

import { ProjectState } from "./project.js";

/** The subset of the Web Storage API we need (injectable for tests). */
export interface KVStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const KEY_PREFIX = "labeler:";

export function saveProject(store: KVStore, name: string, state: ProjectState): void {
  store.setItem(KEY_PREFIX + name, JSON.stringify(state));
}

export function loadProject(store: KVStore, name: string): ProjectState | null {
  const raw = store.getItem(KEY_PREFIX + name);
  if (raw === null) return null;
  const state = JSON.parse(raw) as ProjectState;
  if (!Array.isArray(state.images) || !Array.isArray(state.correspondences)) {
    throw new Error(`stored project "${name}" is corrupt`);
  }
  return state;
}

export function clearProject(store: KVStore, name: string): void {
  store.removeItem(KEY_PREFIX + name);
}

/** In-memory stand-in for localStorage, used by the test suite. */
export class MemoryStore implements KVStore {
  private data = new Map<string, string>();

  getItem(key: string): string | null {
    return this.data.has(key) ? this.data.get(key)! : null;
  }

  setItem(key: string, value: string): void {
    this.data.set(key, value);
  }

  removeItem(key: string): void {
    this.data.delete(key);
  }
}
