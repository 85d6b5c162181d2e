/** Spawns the python fixture service and resolves once it reports its
 *  port. Each suite gets its own process so refinements stay isolated. */

import { spawn } from "node:child_process";
import { fileURLToPath } from "node:url";

export interface LiveService {
  url: string;
  stop(): void;
}

export async function startService(): Promise<LiveService> {
  const script = fileURLToPath(new URL("./fixture/serve_fixture.py", import.meta.url));
  const proc = spawn("python3", [script], { stdio: ["ignore", "pipe", "pipe"] });
  let log = "";
  const url = await new Promise<string>((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error(`fixture service never reported a port:\n${log}`)),
      90_000,
    );
    proc.stdout.on("data", (chunk: Buffer) => {
      log += chunk.toString();
      const m = log.match(/PORT (\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(`http://127.0.0.1:${m[1]}`);
      }
    });
    proc.stderr.on("data", (chunk: Buffer) => {
      log += chunk.toString();
    });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`fixture service exited with ${code}:\n${log}`));
    });
  });
  return { url, stop: () => void proc.kill() };
}
