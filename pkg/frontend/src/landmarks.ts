/** Canonical 68-point grouping and colors (jaw, brows, nose, eyes, mouth). */

export interface LandmarkGroup {
  name: string;
  start: number; // inclusive
  end: number;   // exclusive
  color: string;
}

export const GROUPS: LandmarkGroup[] = [
  { name: "jaw", start: 0, end: 17, color: "#4c72b0" },
  { name: "left brow", start: 17, end: 22, color: "#dd8452" },
  { name: "right brow", start: 22, end: 27, color: "#dd8452" },
  { name: "nose", start: 27, end: 36, color: "#55a868" },
  { name: "left eye", start: 36, end: 42, color: "#c44e52" },
  { name: "right eye", start: 42, end: 48, color: "#c44e52" },
  { name: "mouth", start: 48, end: 68, color: "#8172b3" },
];

export function groupOf(index: number): LandmarkGroup {
  for (const group of GROUPS) {
    if (index >= group.start && index < group.end) {
      return group;
    }
  }
  throw new Error(`landmark index ${index} outside the 68-point convention`);
}

export function colorOf(index: number): string {
  return groupOf(index).color;
}
