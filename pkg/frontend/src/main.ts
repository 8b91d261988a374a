import "./styles.css";
import { ApiClient } from "./api";
import { ConsoleApp } from "./app";

async function boot() {
  const root = document.querySelector<HTMLDivElement>("#app");
  if (!root) throw new Error("missing #app element");
  const api = new ApiClient(window.location.origin);
  const params = new URLSearchParams(window.location.search);
  let sessionId = params.get("session");
  if (!sessionId) {
    const sessions = await api.listSessions();
    sessionId = sessions.sessions[0] ?? null;
  }
  if (!sessionId) {
    root.textContent =
      "No sessions yet. Create one with `lanforge init` or POST /sessions, " +
      "then open /console/?session=<id>.";
    return;
  }
  const app = new ConsoleApp(root, api, sessionId);
  await app.attach();
}

void boot();
