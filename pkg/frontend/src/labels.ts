import type { ClusterLabel, Label } from "./types.js";

export interface LabelSpec {
  value: Label;
  hotkey: string;
  display: string;
}

export const LABELS: LabelSpec[] = [
  { value: "responsive", hotkey: "r", display: "Responsive" },
  { value: "not_responsive", hotkey: "n", display: "Not Responsive" },
  { value: "further_review", hotkey: "f", display: "Further Review" },
];

const DISPLAY: Record<ClusterLabel, string> = {
  responsive: "Responsive",
  not_responsive: "Not Responsive",
  further_review: "Further Review",
  untagged: "Untagged",
};

export function labelDisplay(label: ClusterLabel): string {
  return DISPLAY[label] ?? label;
}
