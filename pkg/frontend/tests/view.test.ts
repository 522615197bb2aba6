import { describe, expect, it } from "vitest";

import { renderAct, renderInspector, renderTurn } from "../src/view.js";
import { fixture } from "./helpers.js";

const turn = fixture.turns[0];

describe("renderTurn", () => {
  it("shows the final response verbatim", () => {
    const node = renderTurn(turn);
    const agent = node.querySelector('[data-testid="agent-message"]')!;
    expect(agent.textContent).toContain(turn.final_response);
  });

  it("keeps the inspector hidden until toggled", () => {
    const node = renderTurn(turn);
    const inspector = node.querySelector<HTMLElement>('[data-testid="inspector"]')!;
    expect(inspector.hidden).toBe(true);
    node.querySelector<HTMLButtonElement>(".inspect-toggle")!.click();
    expect(inspector.hidden).toBe(false);
  });
});

describe("renderInspector", () => {
  it("shows the exact belief-state diff from the payload", () => {
    const panel = renderInspector(turn);
    const diff = panel.querySelector('[data-testid="state-diff"]')!;
    for (const [key, value] of Object.entries(turn.state_change.updates)) {
      expect(diff.textContent).toContain(key);
      expect(diff.textContent).toContain(value);
    }
    expect(panel.textContent).toContain(turn.state_change.intent);
  });

  it("shows the full belief state", () => {
    const panel = renderInspector(turn);
    const belief = panel.querySelector('[data-testid="belief-state"]')!;
    for (const [key, value] of Object.entries(turn.belief_state)) {
      expect(belief.textContent).toContain(key);
      expect(belief.textContent).toContain(value);
    }
  });

  it("shows every act with its arguments", () => {
    const panel = renderInspector(turn);
    const acts = panel.querySelector('[data-testid="acts"]')!;
    const items = Array.from(acts.querySelectorAll("li")).map((li) => li.textContent);
    expect(items).toEqual(turn.acts.map(renderAct));
    expect(items.join(" ")).toContain("Offer");
    expect(items.join(" ")).toContain("the allenbell");
  });

  it("shows the delexicalized template and db hit counts", () => {
    const panel = renderInspector(turn);
    expect(panel.querySelector('[data-testid="delex"]')!.textContent).toBe(
      turn.delex_response,
    );
    const hits = panel.querySelector('[data-testid="db-hits"]')!;
    for (const [domain, count] of Object.entries(turn.db_hits)) {
      expect(hits.textContent).toContain(domain);
      expect(hits.textContent).toContain(String(count));
    }
  });

  it("renders an explicit empty marker for argument-free payload fields", () => {
    const empty = {
      ...turn,
      state_change: { intent: "", updates: {} },
      acts: [],
      db_hits: {},
    };
    const panel = renderInspector(empty);
    expect(panel.querySelector('[data-testid="state-diff"]')!.textContent).toContain(
      "(empty)",
    );
    expect(panel.querySelector('[data-testid="acts"]')!.textContent).toContain("(none)");
  });
});
