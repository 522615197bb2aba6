// Wire types mirroring the agent service JSON exactly. The UI renders these
// fields verbatim; it never derives or infers dialogue structure itself.

export interface StateChange {
  intent: string;
  updates: Record<string, string>;
}

export interface DialogueAct {
  act: string;
  args: Record<string, string>;
}

export interface AgentTurn {
  user_utterance: string;
  state_change: StateChange;
  belief_state: Record<string, string>;
  acts: DialogueAct[];
  delex_response: string;
  final_response: string;
  db_hits: Record<string, number>;
  unbound_placeholders: string[];
}

export interface Transcript {
  session_id: string;
  turns: AgentTurn[];
}
