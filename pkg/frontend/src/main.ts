import { ChatClient } from "./api.js";
import { mountApp } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

// same-origin: the python service serves both the API and this page
const app = mountApp(root, new ChatClient(""));
app.start().catch((err) => {
  root.textContent = `cannot reach the chat service: ${err instanceof Error ? err.message : err}`;
});
