/**
 * Editor state: the 68 draggable points, selection, fit status, undo/redo.
 *
 * The undo stack is a pure stack over landmark documents: every completed
 * drag pushes the previous coordinates, redo replays the exact documents,
 * and points are clamped to the image rectangle during drags.  Edits are
 * locked while a fit runs.
 */

import { LandmarkDocument, LANDMARK_COUNT, ResultDocument } from "./types.js";

export type EditorStatus = "idle" | "fitting" | "done" | "failed";

export interface Point {
  x: number;
  y: number;
}

function clonePoints(points: [number, number][]): [number, number][] {
  return points.map((p) => [p[0], p[1]]);
}

export class EditorState {
  readonly indices: number[];
  points: [number, number][];
  selected = -1;
  status: EditorStatus = "idle";
  lastResult: ResultDocument | null = null;
  imageWidth: number;
  imageHeight: number;

  private undoStack: [number, number][][] = [];
  private redoStack: [number, number][][] = [];
  private dragStart: [number, number][] | null = null;

  constructor(landmarks: LandmarkDocument, imageWidth: number, imageHeight: number) {
    if (landmarks.points.length !== LANDMARK_COUNT) {
      throw new Error(`expected ${LANDMARK_COUNT} points`);
    }
    this.indices = landmarks.indices.slice();
    this.points = clonePoints(landmarks.points);
    this.imageWidth = imageWidth;
    this.imageHeight = imageHeight;
  }

  get editable(): boolean {
    return this.status !== "fitting";
  }

  document(): LandmarkDocument {
    return { version: 1, indices: this.indices.slice(), points: clonePoints(this.points) };
  }

  /** Begin dragging a point; records the pre-drag coordinates for undo. */
  beginDrag(index: number): boolean {
    if (!this.editable || index < 0 || index >= LANDMARK_COUNT) {
      return false;
    }
    this.selected = index;
    this.dragStart = clonePoints(this.points);
    return true;
  }

  /** Move the selected point, clamped to the image rectangle. */
  dragTo(x: number, y: number): boolean {
    if (!this.editable || this.selected < 0 || this.dragStart === null) {
      return false;
    }
    this.points[this.selected] = [
      Math.min(Math.max(x, 0), this.imageWidth - 1),
      Math.min(Math.max(y, 0), this.imageHeight - 1),
    ];
    return true;
  }

  /** Finish the drag; pushes the undo entry if anything moved. */
  endDrag(): boolean {
    if (this.dragStart === null) {
      return false;
    }
    const moved = this.dragStart.some(
      (p, i) => p[0] !== this.points[i][0] || p[1] !== this.points[i][1],
    );
    if (moved) {
      this.undoStack.push(this.dragStart);
      this.redoStack = [];
    }
    this.dragStart = null;
    return moved;
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0 && this.editable;
  }

  get canRedo(): boolean {
    return this.redoStack.length > 0 && this.editable;
  }

  undo(): boolean {
    if (!this.canUndo) {
      return false;
    }
    this.redoStack.push(clonePoints(this.points));
    this.points = this.undoStack.pop()!;
    return true;
  }

  redo(): boolean {
    if (!this.canRedo) {
      return false;
    }
    this.undoStack.push(clonePoints(this.points));
    this.points = this.redoStack.pop()!;
    return true;
  }

  beginFit(): void {
    if (this.status === "fitting") {
      throw new Error("a fit is already running");
    }
    this.status = "fitting";
  }

  finishFit(result: ResultDocument): void {
    this.status = "done";
    this.lastResult = result; // read-only: display code never mutates it
  }

  failFit(): void {
    this.status = "failed";
  }
}
