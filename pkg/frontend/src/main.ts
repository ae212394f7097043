/** Browser entry point: wire the store to the service origin and mount. */

import { ApiClient } from "./api.js";
import { mount } from "./render.js";
import { ReviewStore } from "./store.js";

const api = new ApiClient("");
const store = new ReviewStore(api);

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
mount(root, store);
void store.loadSessions();
