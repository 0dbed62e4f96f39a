import { readFileSync } from "node:fs";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

/** Load the real page body into jsdom so selectors stay honest. */
export function mountPage(): void {
  const html = readFileSync(join(here, "..", "index.html"), "utf-8");
  const body = html.match(/<body>([\s\S]*)<\/body>/);
  if (!body) {
    throw new Error("index.html has no body");
  }
  document.body.innerHTML = body[1].replace(/<script[\s\S]*?<\/script>/, "");
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function waitFor(
  predicate: () => boolean,
  timeoutMs = 20000,
  stepMs = 50,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) {
      return;
    }
    await sleep(stepMs);
  }
  throw new Error("waitFor timed out");
}
