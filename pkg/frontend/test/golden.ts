import { readFile } from "node:fs/promises";
import path from "node:path";
import { fileURLToPath } from "node:url";

const GOLDEN = path.resolve(
  path.dirname(fileURLToPath(import.meta.url)),
  "../../tests/data/golden/bundle",
);

export const goldenFetcher = async (name: string): Promise<unknown> =>
  JSON.parse(await readFile(path.join(GOLDEN, name), "utf8"));

export async function goldenFile(name: string): Promise<any> {
  return goldenFetcher(name);
}
