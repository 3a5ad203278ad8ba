// Boots the real review service on a synthetic corpus for integration tests:
// corpus synthesis (python) -> `imgtriage serve` child process -> one k=150
// clustering round, polled to completion.
import { ChildProcess, spawn } from "node:child_process";
import { mkdtemp, rm } from "node:fs/promises";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

export interface Fixture {
  base: string;
  projectId: string;
  round: number;
  stop(): Promise<void>;
}

const CORPUS_IMAGES = 2000;
const CORPUS_DUPS = 60;
const CORPUS_INVALID = 5;
const ROUND_K = 150;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address && typeof address === "object") {
        const port = address.port;
        probe.close(() => resolve(port));
      } else {
        probe.close(() => reject(new Error("no port assigned")));
      }
    });
  });
}

function runPython(args: string[]): Promise<void> {
  return new Promise((resolve, reject) => {
    const child = spawn("python3", args, { stdio: ["ignore", "ignore", "pipe"] });
    let stderr = "";
    child.stderr.on("data", (chunk) => (stderr += chunk));
    child.on("exit", (code) =>
      code === 0
        ? resolve()
        : reject(new Error(`python3 ${args[0]} exited ${code}: ${stderr}`)),
    );
  });
}

async function waitForHttp(url: string, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(url);
      if (response.ok) {
        return;
      }
      lastError = new Error(`HTTP ${response.status}`);
    } catch (error) {
      lastError = error;
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`service never came up at ${url}: ${lastError}`);
}

async function postJson(url: string, body: unknown): Promise<any> {
  const response = await fetch(url, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!response.ok) {
    throw new Error(`POST ${url} -> ${response.status}: ${await response.text()}`);
  }
  return response.json();
}

export async function startFixture(): Promise<Fixture> {
  const here = dirname(fileURLToPath(import.meta.url));
  const work = await mkdtemp(join(tmpdir(), "review-ui-fixture-"));
  const corpus = join(work, "corpus");

  await runPython([
    join(here, "make_corpus.py"),
    "--root", corpus,
    "--images", String(CORPUS_IMAGES),
    "--dups", String(CORPUS_DUPS),
    "--invalid", String(CORPUS_INVALID),
    "--seed", "8",
  ]);

  const port = await freePort();
  const base = `http://127.0.0.1:${port}`;
  const logs: string[] = [];
  const child: ChildProcess = spawn(
    "python3",
    [
      "-m", "imgtriage.cli", "serve",
      "--data-dir", join(work, "data"),
      "--host", "127.0.0.1",
      "--port", String(port),
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  child.stdout?.on("data", (chunk) => logs.push(String(chunk)));
  child.stderr?.on("data", (chunk) => logs.push(String(chunk)));

  const stop = async () => {
    child.kill("SIGTERM");
    await new Promise((resolve) => {
      child.once("exit", resolve);
      setTimeout(() => {
        child.kill("SIGKILL");
        resolve(null);
      }, 5_000);
    });
    await rm(work, { recursive: true, force: true });
  };

  try {
    await waitForHttp(`${base}/api/projects`, 30_000);
    const project = await postJson(`${base}/api/projects`, {
      name: "ui-fixture",
      corpus_root: corpus,
    });
    const projectId: string = project.project_id;
    await postJson(`${base}/api/projects/${projectId}/rounds`, {
      k: ROUND_K,
      seed: 8,
    });
    const deadline = Date.now() + 300_000;
    for (;;) {
      const meta = await (
        await fetch(`${base}/api/projects/${projectId}/rounds/1`)
      ).json();
      if (meta.status === "complete") {
        break;
      }
      if (meta.status === "failed") {
        throw new Error(`fixture round failed at ${meta.stage}: ${meta.error}`);
      }
      if (Date.now() > deadline) {
        throw new Error("fixture round did not finish within 300s");
      }
      await new Promise((r) => setTimeout(r, 500));
    }
    return { base, projectId, round: 1, stop };
  } catch (error) {
    await stop();
    throw new Error(`${error}\n--- service output ---\n${logs.join("")}`);
  }
}
