/** Shared test plumbing: endpoint allow-list and a recording fetch. */

/** Endpoints the demo is allowed to touch; anything else is a violation. */
export const DOCUMENTED_ENDPOINTS = [
  /^\/register$/,
  /^\/login$/,
  /^\/logout$/,
  /^\/objects$/,
  /^\/objects\/[A-Za-z0-9_-]+$/,
  /^\/discover$/,
  /^\/recover-orphans$/,
  /^\/channel-stats$/,
];

export function recordingFetch(
  inner: typeof fetch,
  log: { method: string; path: string }[],
): typeof fetch {
  return (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = new URL(String(input));
    log.push({ method: init?.method ?? "GET", path: url.pathname });
    return inner(input, init);
  }) as typeof fetch;
}
