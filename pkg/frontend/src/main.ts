// Browser bootstrap: the API base defaults to the serving origin and can
// be overridden with ?api=http://host:port for a separately hosted API.

import { createApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? window.location.origin;

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const app = createApp(root, {
  baseUrl,
  document,
  getSearch: () => window.location.search,
  setSearch: (search) => {
    const api = params.get("api");
    const merged = new URLSearchParams(search);
    if (api) merged.set("api", api);
    const query = merged.toString();
    window.history.replaceState(null, "", query ? `?${query}` : window.location.pathname);
  },
});

window.addEventListener("popstate", () => void app.restore());
void app.start();
