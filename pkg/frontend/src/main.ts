/** Browser entry point: mount the app against the same-origin service. */

import { ApiClient } from "./api.js";
import { createApp } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

createApp(root, { api: new ApiClient("") }).catch((err: unknown) => {
  root.textContent = `failed to start: ${err instanceof Error ? err.message : String(err)}`;
});
