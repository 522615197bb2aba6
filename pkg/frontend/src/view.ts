import type { AgentTurn, DialogueAct } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderAct(act: DialogueAct): string {
  const args = Object.entries(act.args)
    .map(([key, value]) => `${key}=${JSON.stringify(value)}`)
    .join(", ");
  return `${act.act}(${args})`;
}

function kvTable(entries: [string, string][], testId: string): HTMLElement {
  const table = el("table", "kv");
  table.dataset.testid = testId;
  for (const [key, value] of entries) {
    const row = el("tr");
    row.appendChild(el("td", "kv-key", key));
    row.appendChild(el("td", "kv-value", value));
    table.appendChild(row);
  }
  if (entries.length === 0) {
    const row = el("tr");
    row.appendChild(el("td", "kv-empty", "(empty)"));
    table.appendChild(row);
  }
  return table;
}

function inspectorSection(title: string, body: HTMLElement): HTMLElement {
  const section = el("div", "inspector-section");
  section.appendChild(el("h4", undefined, title));
  section.appendChild(body);
  return section;
}

/** The latent structure behind one agent turn, rendered verbatim. */
export function renderInspector(turn: AgentTurn): HTMLElement {
  const panel = el("div", "inspector");
  panel.dataset.testid = "inspector";

  panel.appendChild(
    inspectorSection(
      `state change (${turn.state_change.intent || "no change"})`,
      kvTable(Object.entries(turn.state_change.updates), "state-diff"),
    ),
  );
  panel.appendChild(
    inspectorSection(
      "belief state",
      kvTable(Object.entries(turn.belief_state), "belief-state"),
    ),
  );

  const acts = el("ul", "acts");
  acts.dataset.testid = "acts";
  for (const act of turn.acts) {
    acts.appendChild(el("li", undefined, renderAct(act)));
  }
  if (turn.acts.length === 0) acts.appendChild(el("li", "kv-empty", "(none)"));
  panel.appendChild(inspectorSection("dialogue acts", acts));

  const delex = el("code", "delex", turn.delex_response);
  delex.dataset.testid = "delex";
  panel.appendChild(inspectorSection("delexicalized template", delex));

  const hits = Object.entries(turn.db_hits).map(
    ([domain, count]) => [domain, String(count)] as [string, string],
  );
  panel.appendChild(inspectorSection("db hits", kvTable(hits, "db-hits")));

  if (turn.unbound_placeholders.length > 0) {
    panel.appendChild(
      inspectorSection(
        "unbound placeholders",
        el("code", "unbound", turn.unbound_placeholders.join(", ")),
      ),
    );
  }
  return panel;
}

/** One user bubble plus the agent's reply with a toggleable inspector. */
export function renderTurn(turn: AgentTurn): HTMLElement {
  const wrapper = el("div", "turn");
  const user = el("div", "bubble user", turn.user_utterance);
  user.dataset.testid = "user-message";
  wrapper.appendChild(user);

  const agent = el("div", "bubble agent");
  agent.dataset.testid = "agent-message";
  agent.appendChild(el("span", "agent-text", turn.final_response));

  const toggle = el("button", "inspect-toggle", "inspect");
  toggle.type = "button";
  const inspector = renderInspector(turn);
  inspector.hidden = true;
  toggle.addEventListener("click", () => {
    inspector.hidden = !inspector.hidden;
    toggle.classList.toggle("active", !inspector.hidden);
  });
  agent.appendChild(toggle);
  agent.appendChild(inspector);
  wrapper.appendChild(agent);
  return wrapper;
}

export function renderTranscript(container: HTMLElement, turns: AgentTurn[]): void {
  container.replaceChildren(...turns.map(renderTurn));
}

export function appendTurn(container: HTMLElement, turn: AgentTurn): void {
  container.appendChild(renderTurn(turn));
  container.scrollTop = container.scrollHeight;
}
