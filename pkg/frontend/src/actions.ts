// The six actions, mirroring the server's fixed id order.

export const ACTION_NAMES = [
  "shake",
  "go_forward",
  "light_up",
  "turn_left",
  "go_backward",
  "turn_right",
] as const;

export const ACTION_LABELS = [
  "Shake",
  "Go forward",
  "Light up",
  "Turn left",
  "Go backward",
  "Turn right",
] as const;

export const ACTION_ICONS = ["🫨", "⬆️", "💡", "⬅️", "⬇️", "➡️"] as const;

export const N_ACTIONS = 6;
