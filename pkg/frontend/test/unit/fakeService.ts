import { vi } from "vitest";

export type FakeHandler = (
  url: URL,
  init: RequestInit | undefined,
) => { status?: number; body: unknown } | unknown;

export interface FakeRoute {
  method: string;
  pattern: RegExp;
  handler: FakeHandler;
}

export interface FakeService {
  routes: FakeRoute[];
  calls: { method: string; url: string }[];
  restore(): void;
}

/**
 * Replace global fetch with a tiny router. Handlers return either a plain
 * body (200) or {status, body}. Unmatched requests get a 404 with the
 * service's flat {code, message} error shape.
 */
export function installFakeService(routes: FakeRoute[]): FakeService {
  const calls: { method: string; url: string }[] = [];
  const fetchMock = vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = new URL(String(input), "http://fake");
    const method = (init?.method ?? "GET").toUpperCase();
    calls.push({ method, url: url.pathname + url.search });
    for (const route of routes) {
      if (route.method === method && route.pattern.test(url.pathname)) {
        const raw = route.handler(url, init);
        const { status = 200, body } =
          raw && typeof raw === "object" && "status" in (raw as object) && "body" in (raw as object)
            ? (raw as { status?: number; body: unknown })
            : { status: 200, body: raw };
        return new Response(JSON.stringify(body), {
          status,
          headers: { "content-type": "application/json" },
        });
      }
    }
    return new Response(
      JSON.stringify({ code: "unknown_route", message: `no fake for ${method} ${url.pathname}` }),
      { status: 404, headers: { "content-type": "application/json" } },
    );
  });
  vi.stubGlobal("fetch", fetchMock);
  return { routes, calls, restore: () => vi.unstubAllGlobals() };
}

export function route(method: string, pattern: RegExp, handler: FakeHandler): FakeRoute {
  return { method: method.toUpperCase(), pattern, handler };
}
